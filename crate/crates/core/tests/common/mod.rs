//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use epirecon::models::{model, ModelDef, ModelId, ParamVector};
use epirecon::ode::{integrate, GridSpec, State, Trajectory};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 0.03125;
pub const T_MAX: f64 = 5.0;

pub const CASE1_THETA: [f64; 4] = [0.3, 0.25, 0.1, 0.05];
pub const CASE2_THETA: [f64; 4] = [0.3, 0.25, 0.1, 0.0];
pub const CASE_X0: [f64; 2] = [0.9, 0.1];

pub fn simulate(id: ModelId, theta: &[f64], x0: &[f64], h: f64, t_max: f64) -> Trajectory<f64> {
    let m = model::<f64>(id);
    integrate(
        m.as_ref(),
        &ParamVector(theta.to_vec()),
        &State(x0.to_vec()),
        &GridSpec::new(h, t_max),
    )
    .expect("simulation succeeds")
}

pub fn case1() -> Trajectory<f64> {
    simulate(ModelId::Sirs, &CASE1_THETA, &CASE_X0, H, T_MAX)
}

pub fn case2() -> Trajectory<f64> {
    simulate(ModelId::SirsExt, &CASE2_THETA, &CASE_X0, H, T_MAX)
}

/// Adaptive Dormand-Prince 5(4) solution of an autonomous system at each of `times`.
pub fn dopri<F: Fn(&[f64]) -> Vec<f64>>(f: F, x0: &[f64], times: &[f64], tol: f64) -> Vec<Vec<f64>> {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut t = times[0];
    let mut h: f64 = 1e-3;
    let mut out = vec![x.clone()];
    for &target in &times[1..] {
        while t < target {
            let step = h.min(target - t);
            let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
            for s in 0..7 {
                let xs: Vec<f64> = (0..n)
                    .map(|i| x[i] + step * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>())
                    .collect();
                k.push(f(&xs));
            }
            let x5: Vec<f64> = (0..n)
                .map(|i| x[i] + step * (0..7).map(|j| B5[j] * k[j][i]).sum::<f64>())
                .collect();
            let err = (0..n)
                .map(|i| {
                    let x4 = x[i] + step * (0..7).map(|j| B4[j] * k[j][i]).sum::<f64>();
                    ((x5[i] - x4) / (tol * (1.0 + x5[i].abs()))).powi(2)
                })
                .sum::<f64>()
                .sqrt()
                / (n as f64).sqrt();
            if err <= 1.0 {
                t += step;
                x = x5;
                if (target - t).abs() < 1e-14 {
                    t = target;
                }
            }
            let factor = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.2) };
            h = step * factor.clamp(0.2, 5.0);
        }
        out.push(x.clone());
    }
    out
}

/// Reference solution of a catalog model by Dormand-Prince.
pub fn reference(id: ModelId, theta: &[f64], x0: &[f64], times: &[f64]) -> Vec<Vec<f64>> {
    let m = model::<f64>(id);
    dopri(|x| m.vector_field(x, theta), x0, times, 1e-13)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Point of the simplex `{x >= 0, sum x <= total}` bounded away from its faces.
fn interior_point(rng: &mut ChaCha8Rng, dim: usize, total: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..dim).map(|_| uniform(rng, 0.05, 0.9) * total).collect();
        if x.iter().sum::<f64>() <= 0.95 * total {
            return x;
        }
    }
}

/// Random parameters and initial state for `id`, away from equilibria and
/// box edges.
pub fn draw(id: ModelId, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    match id {
        ModelId::Sirs | ModelId::SirsExt => {
            let mu = if id == ModelId::Sirs {
                uniform(rng, 0.01, 0.5)
            } else {
                uniform(rng, 0.0, 0.5)
            };
            let theta = vec![
                uniform(rng, 0.1, 1.0),
                uniform(rng, 0.2, 3.0),
                uniform(rng, 0.05, 1.0),
                mu,
            ];
            (theta, interior_point(rng, 2, 1.0))
        }
        ModelId::Sir => {
            let theta = vec![uniform(rng, 0.1, 1.0), uniform(rng, 0.2, 3.0), uniform(rng, 0.05, 1.0)];
            (theta, interior_point(rng, 2, 1.0))
        }
        ModelId::SirDemog => {
            let theta = vec![
                uniform(rng, 0.1, 1.0),
                uniform(rng, 0.2, 3.0),
                uniform(rng, 0.05, 1.0),
                uniform(rng, 0.01, 0.3),
            ];
            (theta, interior_point(rng, 2, 1.0))
        }
        ModelId::Sirv => {
            let theta = vec![uniform(rng, 0.2, 3.0), uniform(rng, 0.05, 1.0), uniform(rng, 0.05, 0.5)];
            (theta, interior_point(rng, 3, 1.0))
        }
        ModelId::SirIncidence => {
            let theta = vec![uniform(rng, 0.2, 3.0), uniform(rng, 0.05, 1.0)];
            (theta, interior_point(rng, 2, 1.0))
        }
        ModelId::SivDemog => {
            let theta = vec![
                uniform(rng, 0.01, 0.05),
                uniform(rng, 0.2, 1.5),
                uniform(rng, 0.02, 0.1),
                uniform(rng, 0.02, 0.2),
            ];
            let total = theta[0] / theta[2];
            (theta, interior_point(rng, 3, total))
        }
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

pub fn model_of(id: ModelId) -> Box<dyn ModelDef<f64>> {
    model::<f64>(id)
}
