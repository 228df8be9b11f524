//! Output signals and their time derivatives along a trajectory.
//!
//! Two exact constructions are provided. The regression route seeds each
//! output channel with closed-form low-order derivatives and generates the
//! rest by differentiating the structural regression, which is affine in
//! its top derivative. The Lie route expands the state in a Taylor series
//! through the vector field and pushes it through the output map. A
//! finite-difference construction serves as an independent check.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::models::{regression_residual, ModelDef};
use crate::ode::Trajectory;
use crate::scalar::Scalar;

/// Highest derivative order any chain carries.
pub const MAX_ORDER: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeChain<T> {
    pub times: Vec<T>,
    pub order: usize,
    /// `values[channel][time][k]` is the `k`-th derivative of output `channel`.
    pub values: Vec<Vec<Vec<T>>>,
    /// Points whose derivatives come from one-sided stencils.
    pub boundary: Vec<bool>,
}

impl<T: Scalar> DerivativeChain<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.values.len()
    }

    /// Grid spacing, assuming a uniform grid with at least two points.
    pub fn step(&self) -> T {
        self.times[1] - self.times[0]
    }

    /// Derivative lists per channel at time index `i`.
    pub fn point(&self, i: usize) -> Vec<Vec<T>> {
        self.values.iter().map(|ch| ch[i].clone()).collect()
    }

    pub fn jets_at(&self, i: usize) -> Vec<Jet<T>> {
        self.values
            .iter()
            .map(|ch| Jet::from_derivatives(&ch[i]))
            .collect()
    }

    /// The `k`-th derivative of `channel` as a time series.
    pub fn series(&self, channel: usize, k: usize) -> Vec<T> {
        self.values[channel].iter().map(|d| d[k]).collect()
    }

    /// Index of the grid time equal to `t` up to a small fraction of the step.
    pub fn index_of(&self, t: T) -> Option<usize> {
        let tol = if self.len() > 1 {
            self.step().abs() * T::lit(1e-6)
        } else {
            T::lit(1e-12)
        };
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// Indices of grid times in `[a, b)`.
    pub fn window_indices(&self, a: T, b: T) -> Vec<usize> {
        let slack = if self.len() > 1 {
            self.step().abs() * T::lit(1e-9)
        } else {
            T::zero()
        };
        self.times
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= a - slack && t < b - slack)
            .map(|(i, _)| i)
            .collect()
    }

    /// Keeps derivatives up to `order`.
    pub fn truncated(&self, order: usize) -> Self {
        let order = order.min(self.order);
        DerivativeChain {
            times: self.times.clone(),
            order,
            values: self
                .values
                .iter()
                .map(|ch| ch.iter().map(|d| d[..=order].to_vec()).collect())
                .collect(),
            boundary: self.boundary.clone(),
        }
    }

    /// Same data with the time axis shifted to start at `t0`.
    pub fn with_time_origin(mut self, t0: T) -> Self {
        if let Some(&first) = self.times.first() {
            for t in &mut self.times {
                *t = *t - first + t0;
            }
        }
        self
    }
}

fn check_order(max_order: usize) -> Result<()> {
    if max_order > MAX_ORDER {
        Err(Error::OrderUnsupported {
            requested: max_order,
            max: MAX_ORDER,
        })
    } else {
        Ok(())
    }
}

/// Taylor expansion of the solution through `x` with `len` coefficients.
pub fn taylor_state<T: Scalar>(
    model: &dyn ModelDef<T>,
    x: &[T],
    theta: &[T],
    len: usize,
) -> Vec<Jet<T>> {
    let mut coeffs: Vec<Vec<T>> = x.iter().map(|&v| vec![v]).collect();
    for n in 0..len.saturating_sub(1) {
        let jets: Vec<Jet<T>> = coeffs.iter().map(|c| Jet::from_coeffs(c.clone())).collect();
        let f = model.vector_field_jet(&jets, theta);
        let div = T::from_usize_lossy(n + 1);
        for (c, fi) in coeffs.iter_mut().zip(&f) {
            c.push(fi.coeffs()[n] / div);
        }
    }
    coeffs.into_iter().map(Jet::from_coeffs).collect()
}

/// Output derivatives `0..=max_order` at state `x` by the Lie route.
pub fn lie_point<T: Scalar>(
    model: &dyn ModelDef<T>,
    x: &[T],
    theta: &[T],
    max_order: usize,
) -> Vec<Vec<T>> {
    let state = taylor_state(model, x, theta, max_order + 1);
    model
        .output_jet(&state, theta)
        .iter()
        .map(Jet::derivatives)
        .collect()
}

/// Output derivatives at state `x` from the closed-form seed extended by the
/// structural regression; falls back to the Lie route for models without a
/// seed.
pub fn analytic_point<T: Scalar>(
    model: &dyn ModelDef<T>,
    x: &[T],
    theta: &[T],
    max_order: usize,
) -> Result<Vec<Vec<T>>> {
    let Some(mut derivs) = model.chain_seed(x, theta) else {
        return Ok(lie_point(model, x, theta, max_order));
    };
    let sigma = model.r(theta);
    let blocks = model.blocks();
    for b in model.solve_order() {
        let c = blocks[b].channel;
        derivs[c].truncate(max_order + 1);
        while derivs[c].len() <= max_order {
            let m = derivs[c].len() - blocks[b].top_order;
            let probe = |trial: T, derivs: &mut Vec<Vec<T>>| -> Result<T> {
                derivs[c].push(trial);
                let outs: Vec<Jet<T>> = derivs.iter().map(|d| Jet::from_derivatives(d)).collect();
                derivs[c].pop();
                let res = regression_residual(model, b, &outs, &sigma)?;
                Ok(res.coeffs()[m])
            };
            let r0 = probe(T::zero(), &mut derivs)?;
            let r1 = probe(T::one(), &mut derivs)?;
            let slope = r1 - r0;
            if slope == T::zero() || !slope.is_finite() {
                return Err(Error::Unsupported(format!(
                    "regression of block {b} does not determine derivative order {}",
                    derivs[c].len()
                )));
            }
            derivs[c].push(-r0 / slope);
        }
    }
    Ok(derivs)
}

fn assemble<T: Scalar>(
    times: &[T],
    order: usize,
    channels: usize,
    points: Vec<Vec<Vec<T>>>,
) -> DerivativeChain<T> {
    let mut values = vec![Vec::with_capacity(times.len()); channels];
    for p in points {
        for (c, d) in p.into_iter().enumerate() {
            values[c].push(d);
        }
    }
    DerivativeChain {
        times: times.to_vec(),
        order,
        values,
        boundary: vec![false; times.len()],
    }
}

fn chain_with<T: Scalar, F>(
    model: &dyn ModelDef<T>,
    traj: &Trajectory<T>,
    max_order: usize,
    point: F,
) -> Result<DerivativeChain<T>>
where
    F: Fn(&[T]) -> Result<Vec<Vec<T>>> + Sync,
{
    check_order(max_order)?;
    if traj.theta.len() != model.param_names().len() {
        return Err(Error::DimensionMismatch {
            expected: model.param_names().len(),
            found: traj.theta.len(),
        });
    }
    let points = traj
        .states
        .par_iter()
        .zip(traj.times.par_iter())
        .map(|(x, &t)| {
            let p = point(x).map_err(|e| match e {
                Error::OutputNearZero { .. } => Error::OutputNearZero { t: t.to_f64_lossy() },
                other => other,
            })?;
            if p.iter().all(|d| crate::scalar::all_finite(d)) {
                Ok(p)
            } else {
                Err(Error::IntegrationFailure(format!(
                    "non-finite output derivative at t={t}"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(&traj.times, max_order, model.output_dim(), points))
}

/// Exact chain along `traj` using the closed-form seed and the structural
/// regression (the Lie route for models without a seed).
pub fn analytic_chain<T: Scalar>(
    model: &dyn ModelDef<T>,
    traj: &Trajectory<T>,
    max_order: usize,
) -> Result<DerivativeChain<T>> {
    let theta = &traj.theta;
    chain_with(model, traj, max_order, |x| analytic_point(model, x, theta, max_order))
}

/// Exact chain along `traj` from the Taylor expansion of the state.
pub fn lie_chain<T: Scalar>(
    model: &dyn ModelDef<T>,
    traj: &Trajectory<T>,
    max_order: usize,
) -> Result<DerivativeChain<T>> {
    let theta = &traj.theta;
    chain_with(model, traj, max_order, |x| Ok(lie_point(model, x, theta, max_order)))
}

/// Finite-difference weights for derivatives `0..=m` at `z` on `nodes`
/// (Fornberg's recurrence). `w[k][j]` multiplies the sample at `nodes[j]`.
pub fn fornberg_weights<T: Scalar>(z: T, nodes: &[T], m: usize) -> Vec<Vec<T>> {
    let n = nodes.len();
    let mut w = vec![vec![T::zero(); n]; m + 1];
    w[0][0] = T::one();
    let mut c1 = T::one();
    let mut c4 = nodes[0] - z;
    for i in 1..n {
        let mi = i.min(m);
        let mut c2 = T::one();
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mi).rev() {
                    let kk = T::from_usize_lossy(k);
                    w[k][i] = c1 * (kk * w[k - 1][i - 1] - c5 * w[k][i - 1]) / c2;
                }
                w[0][i] = -c1 * c5 * w[0][i - 1] / c2;
            }
            for k in (1..=mi).rev() {
                let kk = T::from_usize_lossy(k);
                w[k][j] = (c4 * w[k][j] - kk * w[k - 1][j]) / c3;
            }
            w[0][j] = c4 * w[0][j] / c3;
        }
        c1 = c2;
    }
    w
}

/// Second-order finite-difference derivatives of uniformly spaced samples
/// (times `0, h, 2h, ...`). Interior points use central stencils; points too
/// close to either end use one-sided stencils and are flagged.
pub fn finite_difference_chain<T: Scalar>(
    values: &[T],
    h: T,
    max_order: usize,
) -> Result<DerivativeChain<T>> {
    check_order(max_order)?;
    let n = values.len();
    let needed = 2 * max_order + 1;
    if n < needed.max(2) {
        return Err(Error::TooFewSamples { needed: needed.max(2), got: n });
    }
    if !(h > T::zero()) {
        return Err(Error::InvalidGrid(format!("step h={h} must be positive")));
    }
    let mut rows = vec![vec![T::zero(); max_order + 1]; n];
    let mut boundary = vec![false; n];
    for (i, row) in rows.iter_mut().enumerate() {
        row[0] = values[i];
        for k in 1..=max_order {
            let half = (k + 1) / 2;
            let (start, len) = if i >= half && i + half < n {
                (i - half, 2 * half + 1)
            } else {
                boundary[i] = true;
                let len = k + 2;
                (if i < half { 0 } else { n - len }, len)
            };
            let nodes: Vec<T> = (0..len)
                .map(|j| T::from_usize_lossy(start + j) - T::from_usize_lossy(i))
                .collect();
            let w = fornberg_weights(T::zero(), &nodes, k);
            let scale = h.powi(k as i32);
            let acc: T = (0..len).map(|j| w[k][j] * values[start + j]).sum();
            row[k] = acc / scale;
        }
    }
    Ok(DerivativeChain {
        times: (0..n).map(|i| T::from_usize_lossy(i) * h).collect(),
        order: max_order,
        values: vec![rows],
        boundary,
    })
}
