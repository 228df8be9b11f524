//! Bounded least-squares calibration of the extended SIRS model against
//! sampled output `y = kI`, by multi-start projected Levenberg-Marquardt.
//!
//! The unknown vector is `(k, beta, gamma, mu, S0)`; the initial infected
//! fraction is tied to the first observation through `I0 = y(0) / k`.

use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Lu};
use crate::models::{ModelId, Sirs};
use crate::ode::{integrate_field, GridSpec, ModelFlow};

pub const DIM: usize = 5;
pub const PARAM_NAMES: [&str; DIM] = ["k", "beta", "gamma", "mu", "S0"];
pub const DEFAULT_AMPLIFICATION: f64 = 1e14;
pub const DEFAULT_STEP: f64 = 0.03125;
pub const DEFAULT_STARTS: usize = 20;
pub const DEFAULT_MAX_ITER: usize = 500_000;
pub const STEP_TOL: f64 = 1e-15;
pub const OBJECTIVE_TOL: f64 = 1e-17;

const FD_STEP: f64 = 1e-8;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MIN: f64 = 1e-20;
const LAMBDA_MAX: f64 = 1e20;
const TIME_TOL: f64 = 1e-9;
const FEASIBILITY_TOL: f64 = 1e-12;

/// Componentwise box `lo <= x <= hi` on `(k, beta, gamma, mu, S0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo: [f64; DIM],
    pub hi: [f64; DIM],
}

impl Bounds {
    /// Default box, with the lower bound on `k` set by the smallest observation.
    pub fn for_observations(observations: &[(f64, f64)]) -> Self {
        let min_y = observations
            .iter()
            .map(|&(_, y)| y)
            .fold(f64::INFINITY, f64::min);
        let k_lo = if min_y.is_finite() && min_y > 0.0 {
            min_y.min(1.0)
        } else {
            f64::EPSILON
        };
        Bounds {
            lo: [k_lo, 1e-2, 1e-2, 0.0, 0.0],
            hi: [1.0, 3.0, 1.0, 1.0, 1.0 - 1e-10],
        }
    }

    pub fn contains(&self, x: &[f64; DIM]) -> bool {
        (0..DIM).all(|j| x[j] >= self.lo[j] && x[j] <= self.hi[j])
    }

    pub fn project(&self, x: &mut [f64; DIM]) {
        for j in 0..DIM {
            x[j] = x[j].clamp(self.lo[j], self.hi[j]);
        }
    }

    /// `lo + rho (hi - lo)` for `rho` in the unit cube.
    pub fn start_from_rho(&self, rho: &[f64; DIM]) -> [f64; DIM] {
        std::array::from_fn(|j| self.lo[j] + rho[j] * (self.hi[j] - self.lo[j]))
    }

    fn validate(&self) -> Result<()> {
        for j in 0..DIM {
            if !(self.lo[j].is_finite() && self.hi[j].is_finite() && self.lo[j] <= self.hi[j]) {
                return Err(Error::Parse(format!(
                    "bounds for {} are not an interval: [{}, {}]",
                    PARAM_NAMES[j], self.lo[j], self.hi[j]
                )));
            }
        }
        if self.lo[0] <= 0.0 {
            return Err(Error::Parse("lower bound on k must be positive".into()));
        }
        Ok(())
    }
}

/// Uniform draw from the box.
pub fn random_start<R: RngExt + ?Sized>(bounds: &Bounds, rng: &mut R) -> [f64; DIM] {
    let rho: [f64; DIM] = std::array::from_fn(|_| rng.random::<f64>());
    bounds.start_from_rho(&rho)
}

/// Generator for start `index`: the master seed with a per-start stream, so
/// every start draws the same point however the starts are scheduled.
pub fn start_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProblem {
    pub observations: Vec<(f64, f64)>,
    pub model_id: ModelId,
    pub amplification: f64,
    pub bounds: Bounds,
    pub h: f64,
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Known `(k, beta, gamma, mu, S0)`, used only to report absolute errors.
    pub truth: Option<[f64; DIM]>,
}

impl CalibrationProblem {
    pub fn new(observations: Vec<(f64, f64)>) -> Self {
        let bounds = Bounds::for_observations(&observations);
        CalibrationProblem {
            observations,
            model_id: ModelId::SirsExt,
            amplification: DEFAULT_AMPLIFICATION,
            bounds,
            h: DEFAULT_STEP,
            starts: DEFAULT_STARTS,
            seed: 42,
            max_iter: DEFAULT_MAX_ITER,
            truth: None,
        }
    }
}

/// Why a start stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    StepTolerance,
    ObjectiveTolerance,
    Stationary,
    Stalled,
    IterationCap,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::StepTolerance => "step_tolerance",
            StopReason::ObjectiveTolerance => "objective_tolerance",
            StopReason::Stationary => "stationary",
            StopReason::Stalled => "stalled",
            StopReason::IterationCap => "iteration_cap",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub index: usize,
    pub start_point: [f64; DIM],
    pub theta_hat: [f64; DIM],
    pub objective: f64,
    /// `(gamma, beta/k, beta S0)`.
    pub combos: [f64; 3],
    pub iterations: usize,
    pub elapsed_seconds: f64,
    pub converged: bool,
    pub stop: StopReason,
    /// Objective after the start and after every accepted step.
    pub history: Vec<f64>,
    pub abs_error: Option<[f64; DIM]>,
}

#[derive(Debug, Clone)]
pub struct CalibrationRun {
    /// Successful starts, best objective first.
    pub results: Vec<CalibrationResult>,
    pub failed_starts: Vec<(usize, Error)>,
}

pub fn combos(theta: &[f64; DIM]) -> [f64; 3] {
    [theta[2], theta[1] / theta[0], theta[1] * theta[4]]
}

/// Observation times mapped to grid indices, with the integration grid.
#[derive(Debug, Clone)]
struct Sampling {
    indices: Vec<usize>,
    values: Vec<f64>,
    y0: f64,
    grid: Option<GridSpec<f64>>,
}

fn sampling(problem: &CalibrationProblem) -> Result<Sampling> {
    if problem.model_id != ModelId::SirsExt && problem.model_id != ModelId::Sirs {
        return Err(Error::Unsupported(format!(
            "calibration is implemented for the SIRS family, not {}",
            problem.model_id
        )));
    }
    let h = problem.h;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidGrid(format!("step size h={h} must be positive")));
    }
    let mut indices = Vec::with_capacity(problem.observations.len());
    let mut values = Vec::with_capacity(problem.observations.len());
    let mut y0 = None;
    for &(t, y) in &problem.observations {
        if !(t.is_finite() && y.is_finite()) || t < 0.0 {
            return Err(Error::Parse(format!("bad observation ({t}, {y})")));
        }
        let ratio = t / h;
        let n = ratio.round();
        if (ratio - n).abs() > TIME_TOL * ratio.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "observation time {t} is not on the integration grid (h={h})"
            )));
        }
        if n == 0.0 {
            y0 = Some(y);
        }
        indices.push(n as usize);
        values.push(y);
    }
    let y0 = y0.ok_or_else(|| Error::Parse("observations must include t=0".into()))?;
    let last = indices.iter().copied().max().unwrap_or(0);
    let grid = (last > 0).then(|| GridSpec::new(h, last as f64 * h));
    Ok(Sampling {
        indices,
        values,
        y0,
        grid,
    })
}

fn residuals(
    sampling: &Sampling,
    sqrt_amp: f64,
    model: &Sirs,
    x: &[f64; DIM],
) -> Result<Vec<f64>> {
    let (k, s0) = (x[0], x[4]);
    let i0 = sampling.y0 / k;
    if i0 > 1.0 - s0 + FEASIBILITY_TOL {
        return Err(Error::InfeasibleInitialInfected {
            infected: i0,
            room: 1.0 - s0,
        });
    }
    let theta = [k, x[1], x[2], x[3]];
    let start = [s0, i0];
    let infected: Vec<f64> = match &sampling.grid {
        Some(grid) => {
            let flow = ModelFlow {
                model,
                theta: &theta,
            };
            let (_, states) = integrate_field(&flow, &start, grid)?;
            states.iter().map(|s| s[1]).collect()
        }
        None => vec![i0],
    };
    Ok(sampling
        .indices
        .iter()
        .zip(&sampling.values)
        .map(|(&n, &y)| sqrt_amp * (k * infected[n] - y))
        .collect())
}

fn sum_squares(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Amplified sum of squared output misfits at `theta5 = (k, beta, gamma, mu, S0)`.
pub fn objective(problem: &CalibrationProblem, theta5: &[f64; DIM]) -> Result<f64> {
    let s = sampling(problem)?;
    let r = residuals(&s, problem.amplification.sqrt(), &Sirs::extended(), theta5)?;
    Ok(sum_squares(&r))
}

struct Solver<'a> {
    sampling: &'a Sampling,
    sqrt_amp: f64,
    bounds: &'a Bounds,
    model: Sirs,
    max_iter: usize,
}

struct Outcome {
    x: [f64; DIM],
    f: f64,
    iterations: usize,
    stop: StopReason,
    history: Vec<f64>,
}

impl Solver<'_> {
    fn eval(&self, x: &[f64; DIM]) -> Result<Vec<f64>> {
        residuals(self.sampling, self.sqrt_amp, &self.model, x)
    }

    /// Forward-difference Jacobian, stepping backwards where the forward
    /// point leaves the box or the feasible set.
    fn jacobian(&self, x: &[f64; DIM], r: &[f64]) -> Vec<[f64; DIM]> {
        let mut jac = vec![[0.0; DIM]; r.len()];
        for j in 0..DIM {
            let step = FD_STEP * x[j].abs().max(1.0);
            let mut column = None;
            for dir in [1.0, -1.0] {
                let mut xp = *x;
                xp[j] += dir * step;
                if xp[j] < self.bounds.lo[j] || xp[j] > self.bounds.hi[j] {
                    continue;
                }
                if let Ok(rp) = self.eval(&xp) {
                    let dx = xp[j] - x[j];
                    column = Some((rp, dx));
                    break;
                }
            }
            if let Some((rp, dx)) = column {
                for (row, (&a, &b)) in jac.iter_mut().zip(rp.iter().zip(r)) {
                    row[j] = (a - b) / dx;
                }
            }
        }
        jac
    }

    fn run(&self, start: [f64; DIM]) -> Result<Outcome> {
        let mut x = start;
        self.bounds.project(&mut x);
        let mut r = self.eval(&x)?;
        let mut f = sum_squares(&r);
        let mut history = vec![f];
        let mut lambda = LAMBDA_INIT;
        let mut iterations = 0;
        let mut jac = self.jacobian(&x, &r);

        loop {
            if iterations >= self.max_iter {
                return Ok(self.outcome(x, f, iterations, StopReason::IterationCap, history));
            }
            let (jtj, g) = normal_equations(&jac, &r);
            let free: Vec<usize> = (0..DIM)
                .filter(|&j| {
                    let at_lo = x[j] <= self.bounds.lo[j] && g[j] > 0.0;
                    let at_hi = x[j] >= self.bounds.hi[j] && g[j] < 0.0;
                    !(at_lo || at_hi)
                })
                .collect();
            if free.iter().all(|&j| g[j] == 0.0) {
                return Ok(self.outcome(x, f, iterations, StopReason::Stationary, history));
            }
            iterations += 1;
            let Some(delta) = damped_step(&jtj, &g, &free, lambda) else {
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    return Ok(self.outcome(x, f, iterations, StopReason::Stalled, history));
                }
                continue;
            };
            let mut trial = x;
            for j in 0..DIM {
                trial[j] += delta[j];
            }
            self.bounds.project(&mut trial);
            let step_norm = norm(&std::array::from_fn::<f64, DIM, _>(|j| trial[j] - x[j]));
            if step_norm <= STEP_TOL * (1.0 + norm(&x)) {
                return Ok(self.outcome(x, f, iterations, StopReason::StepTolerance, history));
            }
            let accepted = match self.eval(&trial) {
                Ok(rt) => {
                    let ft = sum_squares(&rt);
                    (ft < f).then_some((rt, ft))
                }
                Err(_) => None,
            };
            match accepted {
                Some((rt, ft)) => {
                    let change = f - ft;
                    x = trial;
                    r = rt;
                    f = ft;
                    history.push(f);
                    lambda = (lambda / 10.0).max(LAMBDA_MIN);
                    if change <= OBJECTIVE_TOL * (1.0 + f) {
                        return Ok(self.outcome(
                            x,
                            f,
                            iterations,
                            StopReason::ObjectiveTolerance,
                            history,
                        ));
                    }
                    jac = self.jacobian(&x, &r);
                }
                None => {
                    lambda *= 10.0;
                    if lambda > LAMBDA_MAX {
                        return Ok(self.outcome(x, f, iterations, StopReason::Stalled, history));
                    }
                }
            }
        }
    }

    fn outcome(
        &self,
        x: [f64; DIM],
        f: f64,
        iterations: usize,
        stop: StopReason,
        history: Vec<f64>,
    ) -> Outcome {
        Outcome {
            x,
            f,
            iterations,
            stop,
            history,
        }
    }
}

fn norm(x: &[f64; DIM]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normal_equations(jac: &[[f64; DIM]], r: &[f64]) -> ([[f64; DIM]; DIM], [f64; DIM]) {
    let mut jtj = [[0.0; DIM]; DIM];
    let mut g = [0.0; DIM];
    for (row, &ri) in jac.iter().zip(r) {
        for a in 0..DIM {
            g[a] += row[a] * ri;
            for b in 0..DIM {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    (jtj, g)
}

/// Solves `(J'J + lambda D) delta = -g` on the free coordinates, with
/// Marquardt scaling `D = diag(J'J)` floored to stay positive.
fn damped_step(
    jtj: &[[f64; DIM]; DIM],
    g: &[f64; DIM],
    free: &[usize],
    lambda: f64,
) -> Option<[f64; DIM]> {
    let n = free.len();
    let max_diag = free.iter().map(|&j| jtj[j][j]).fold(0.0, f64::max);
    let floor = if max_diag > 0.0 { 1e-12 * max_diag } else { 1.0 };
    let mut m = DenseMatrix::zeros(n, n);
    let mut b = vec![0.0; n];
    for (a, &ja) in free.iter().enumerate() {
        b[a] = -g[ja];
        for (c, &jc) in free.iter().enumerate() {
            m.set(a, c, jtj[ja][jc]);
        }
        m.set(a, a, jtj[ja][ja] + lambda * jtj[ja][ja].max(floor));
    }
    let sol = Lu::factor(&m)?.solve(&b);
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut delta = [0.0; DIM];
    for (a, &ja) in free.iter().enumerate() {
        delta[ja] = sol[a];
    }
    Some(delta)
}

fn run_start(
    problem: &CalibrationProblem,
    sampling: &Sampling,
    index: usize,
) -> Result<CalibrationResult> {
    let clock = Instant::now();
    let start = random_start(&problem.bounds, &mut start_rng(problem.seed, index));
    let solver = Solver {
        sampling,
        sqrt_amp: problem.amplification.sqrt(),
        bounds: &problem.bounds,
        model: Sirs::extended(),
        max_iter: problem.max_iter,
    };
    let out = solver.run(start)?;
    let abs_error = problem
        .truth
        .map(|truth| std::array::from_fn(|j| (out.x[j] - truth[j]).abs()));
    Ok(CalibrationResult {
        index,
        start_point: start,
        theta_hat: out.x,
        objective: out.f,
        combos: combos(&out.x),
        iterations: out.iterations,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        converged: out.stop != StopReason::IterationCap,
        stop: out.stop,
        history: out.history,
        abs_error,
    })
}

/// Runs every start in parallel. Starts whose random point is infeasible or
/// whose integration fails are reported in `failed_starts`.
pub fn calibrate(problem: &CalibrationProblem) -> Result<CalibrationRun> {
    if problem.observations.is_empty() || problem.starts == 0 {
        return Err(Error::AllStartsFailed {
            starts: problem.starts,
        });
    }
    problem.bounds.validate()?;
    if !(problem.amplification > 0.0 && problem.amplification.is_finite()) {
        return Err(Error::Parse(format!(
            "amplification {} must be positive",
            problem.amplification
        )));
    }
    let sampling = sampling(problem)?;
    let outcomes: Vec<(usize, Result<CalibrationResult>)> = (0..problem.starts)
        .into_par_iter()
        .map(|i| (i, run_start(problem, &sampling, i)))
        .collect();
    let mut results = Vec::new();
    let mut failed_starts = Vec::new();
    for (i, outcome) in outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => failed_starts.push((i, e)),
        }
    }
    if results.is_empty() {
        return Err(Error::AllStartsFailed {
            starts: problem.starts,
        });
    }
    results.sort_by(|a, b| {
        a.objective
            .total_cmp(&b.objective)
            .then(a.index.cmp(&b.index))
    });
    Ok(CalibrationRun {
        results,
        failed_starts,
    })
}
