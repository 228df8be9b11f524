//! Telling SIR (`mu = 0`) and SIRS (`mu > 0`) data apart from the output
//! `y = kI`, and the Gronwall-type bound on how far the two flows drift.

use serde::Serialize;

use crate::chain::DerivativeChain;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::models::{self, ModelId, ParamVector, OUTPUT_EPS};
use crate::ode::{integrate, GridSpec, State, Trajectory};
use crate::reconstruct::solve_multitime_window;
use crate::scalar::Scalar;

/// Minimum number of window samples for the dependence test.
pub const MIN_DEPENDENCE_SAMPLES: usize = 10;
/// Default threshold on the normalized smallest singular value.
pub const DEFAULT_DEP_TOL: f64 = 1e-8;
/// Relative residual below which the constrained SIR fit counts as a match.
pub const SIR_FIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "SIR")]
    Sir,
    #[serde(rename = "SIRS")]
    Sirs,
    #[serde(rename = "Neither")]
    Neither,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Sir => "SIR",
            Verdict::Sirs => "SIRS",
            Verdict::Neither => "Neither",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Thresholds<T> {
    pub tol_sir: T,
    pub dep_tol: T,
}

impl<T: Scalar> Default for Thresholds<T> {
    fn default() -> Self {
        Thresholds {
            tol_sir: T::lit(models::DEFAULT_TOL_SIR),
            dep_tol: T::lit(DEFAULT_DEP_TOL),
        }
    }
}

/// Outcome of the coefficient test.
#[derive(Debug, Clone, PartialEq)]
pub struct Approach1<T> {
    pub verdict: Verdict,
    /// For `Neither`, the regime the data sit closest to.
    pub nearest: Verdict,
    pub sigma: Vec<T>,
    /// Relative residual of the SIRS system at the selected times.
    pub sirs_residual: T,
    /// Relative least-squares residual over the window with `sigma1 = sigma3 = 0`.
    pub sir_fit_residual: T,
    pub times: Vec<T>,
}

/// Outcome of the linear-dependence test.
#[derive(Debug, Clone, PartialEq)]
pub struct Approach2<T> {
    pub verdict: Verdict,
    /// Smallest over largest singular value of the column-normalized matrix.
    pub dependence_residual: T,
    pub samples: usize,
}

/// Coefficient test: fit the extended SIRS regression and inspect
/// `sigma1`, `sigma3`.
pub fn discriminate_approach1<T: Scalar>(
    chain: &DerivativeChain<T>,
    window: (T, T),
    th: &Thresholds<T>,
) -> Result<Approach1<T>> {
    let ext = models::model::<T>(ModelId::SirsExt);
    let blocks = solve_multitime_window(ext.as_ref(), chain, window)?;
    let b = &blocks[0];
    let s = &b.sigma;
    let sir_fit_residual = sir_fit(chain, window)?;
    let small1 = s[0].abs() <= th.tol_sir;
    let small3 = s[2].abs() <= th.tol_sir;
    let verdict = match (small1, small3) {
        (true, true) => Verdict::Sir,
        (_, false) => Verdict::Sirs,
        (false, true) => Verdict::Neither,
    };
    let nearest = match verdict {
        Verdict::Neither if sir_fit_residual <= T::lit(SIR_FIT_TOL) => Verdict::Sir,
        Verdict::Neither => Verdict::Sirs,
        v => v,
    };
    Ok(Approach1 {
        verdict,
        nearest,
        sigma: s.clone(),
        sirs_residual: b.residual,
        sir_fit_residual,
        times: b.times.clone(),
    })
}

/// Relative residual of the least-squares fit `g0 = sigma2 (-y^2) + sigma4 (-y y')`.
fn sir_fit<T: Scalar>(chain: &DerivativeChain<T>, window: (T, T)) -> Result<T> {
    let sir = models::model::<T>(ModelId::Sir);
    let idx = chain.window_indices(window.0, window.1);
    let mut cols = [Vec::new(), Vec::new()];
    let mut rhs = Vec::new();
    for &i in &idx {
        let jets: Vec<_> = chain.jets_at(i).into_iter().map(|j| j.truncate(3)).collect();
        let (Ok(g), Ok(g0)) = (sir.regressors(0, &jets, &[]), sir.rhs(0, &jets, &[])) else {
            continue;
        };
        cols[0].push(g[0].value());
        cols[1].push(g[1].value());
        rhs.push(g0.value());
    }
    let norm = |v: &[T]| v.iter().map(|&a| a * a).sum::<T>().sqrt();
    let rn = norm(&rhs);
    if rn == T::zero() {
        return Ok(T::zero());
    }
    let scales = [norm(&cols[0]), norm(&cols[1])];
    if scales.iter().any(|&s| s == T::zero()) {
        return Ok(T::one());
    }
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&u, &v)| u * v).sum::<T>();
    let a: Vec<Vec<T>> = cols
        .iter()
        .zip(scales)
        .map(|(c, s)| c.iter().map(|&v| v / s).collect())
        .collect();
    let (a11, a12, a22) = (dot(&a[0], &a[0]), dot(&a[0], &a[1]), dot(&a[1], &a[1]));
    let (b1, b2) = (dot(&a[0], &rhs), dot(&a[1], &rhs));
    let det = a11 * a22 - a12 * a12;
    if !(det.abs() > T::epsilon()) {
        return Ok(T::one());
    }
    let x1 = (b1 * a22 - b2 * a12) / det;
    let x2 = (a11 * b2 - a12 * b1) / det;
    let res: Vec<T> = (0..rhs.len())
        .map(|i| rhs[i] - x1 * a[0][i] - x2 * a[1][i])
        .collect();
    Ok(norm(&res) / rn)
}

/// Dependence test: `{d/dt (y'/y), y, y'}` are linearly dependent along SIR
/// outputs and independent along SIRS outputs.
pub fn discriminate_approach2<T: Scalar>(
    chain: &DerivativeChain<T>,
    window: (T, T),
    th: &Thresholds<T>,
) -> Result<Approach2<T>> {
    if chain.order < 2 {
        return Err(Error::OrderUnsupported {
            requested: 2,
            max: chain.order,
        });
    }
    let idx = chain.window_indices(window.0, window.1);
    if idx.len() < MIN_DEPENDENCE_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_DEPENDENCE_SAMPLES,
            got: idx.len(),
        });
    }
    let mut cols = [Vec::new(), Vec::new(), Vec::new()];
    for &i in &idx {
        let d = &chain.values[0][i];
        let (y, yd, ydd) = (d[0], d[1], d[2]);
        if !(y.abs() > T::lit(OUTPUT_EPS)) {
            return Err(Error::OutputNearZero {
                t: chain.times[i].to_f64_lossy(),
            });
        }
        cols[0].push((ydd * y - yd * yd) / (y * y));
        cols[1].push(y);
        cols[2].push(yd);
    }
    for (name, c) in ["d/dt(y'/y)", "y", "y'"].iter().zip(cols.iter_mut()) {
        let n = c.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !(n > T::zero()) {
            return Err(Error::DegenerateWindow(format!(
                "{name} vanishes on the window"
            )));
        }
        c.iter_mut().for_each(|v| *v /= n);
    }
    let rows: Vec<Vec<T>> = (0..idx.len())
        .map(|i| vec![cols[0][i], cols[1][i], cols[2][i]])
        .collect();
    let sv = DenseMatrix::from_rows(&rows).singular_values();
    let dependence_residual = sv[2] / sv[0];
    let verdict = if dependence_residual <= th.dep_tol {
        Verdict::Sir
    } else {
        Verdict::Sirs
    };
    Ok(Approach2 {
        verdict,
        dependence_residual,
        samples: idx.len(),
    })
}

/// Upper bound on `||J(x)||_2` for the reduced SIR field over the simplex.
/// `J` is affine in `x`, so its norm is convex and peaks at a vertex; the
/// grid includes the vertices.
pub fn sir_lipschitz<T: Scalar>(beta: T, gamma: T, grid_points: usize) -> T {
    let n = grid_points.max(1);
    let mut best = T::zero();
    for i in 0..=n {
        for j in 0..=(n - i) {
            let s = T::from_usize_lossy(i) / T::from_usize_lossy(n);
            let inf = T::from_usize_lossy(j) / T::from_usize_lossy(n);
            let jac = DenseMatrix::from_rows(&[
                vec![-beta * inf, -beta * s],
                vec![beta * inf, beta * s - gamma],
            ]);
            best = best.max(jac.singular_values()[0]);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosenessReport<T> {
    pub lipschitz: T,
    pub times: Vec<T>,
    pub sir: Vec<State<T>>,
    pub sirs: Vec<State<T>>,
    pub gap: Vec<T>,
    pub bound: Vec<T>,
    pub max_gap: T,
}

/// Integrates SIR and SIRS with shared `(beta, gamma)` from `x0` and checks
/// `||x_SIR(t) - x_SIRS(t)||_2 <= (mu / L)(exp(L t) - 1)` on the grid.
pub fn closeness_bound_check<T: Scalar>(
    beta: T,
    gamma: T,
    mu: T,
    x0: &State<T>,
    grid: &GridSpec<T>,
) -> Result<ClosenessReport<T>> {
    if mu < T::zero() {
        return Err(Error::ThetaOutOfBox {
            name: "mu".into(),
            value: mu.to_f64_lossy(),
        });
    }
    let sir_model = models::model::<T>(ModelId::Sir);
    let sirs_model = models::model::<T>(ModelId::SirsExt);
    let sir: Trajectory<T> = integrate(
        sir_model.as_ref(),
        &ParamVector(vec![T::one(), beta, gamma]),
        x0,
        grid,
    )?;
    let sirs = integrate(
        sirs_model.as_ref(),
        &ParamVector(vec![T::one(), beta, gamma, mu]),
        x0,
        grid,
    )?;
    let lipschitz = sir_lipschitz(beta, gamma, 200);
    let mut gap = Vec::with_capacity(sir.len());
    let mut bound = Vec::with_capacity(sir.len());
    let mut max_gap = T::zero();
    for ((t, a), b) in sir.times.iter().zip(&sir.states).zip(&sirs.states) {
        let d = a
            .iter()
            .zip(b.iter())
            .map(|(&u, &v)| (u - v) * (u - v))
            .sum::<T>()
            .sqrt();
        let dt = *t - grid.t0;
        let bd = mu / lipschitz * ((lipschitz * dt).exp() - T::one());
        if d > bd {
            return Err(Error::BoundViolated {
                t: t.to_f64_lossy(),
                gap: d.to_f64_lossy(),
                bound: bd.to_f64_lossy(),
            });
        }
        max_gap = max_gap.max(d);
        gap.push(d);
        bound.push(bd);
    }
    Ok(ClosenessReport {
        lipschitz,
        times: sir.times,
        sir: sir.states,
        sirs: sirs.states,
        gap,
        bound,
        max_gap,
    })
}
