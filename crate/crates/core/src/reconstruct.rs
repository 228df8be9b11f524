//! Joint recovery of parameters and initial state from exact output chains.
//!
//! Each regression block `g0 = sum_l sigma_l g_l` is turned into a square
//! linear system, either by evaluating it at `q` distinct times (multi-time
//! method) or by stacking its first `q - 1` time derivatives at one time
//! (Wronskian method). Solving gives `sigma`; inverting `r` gives the
//! parameters; inverting the output map at one time and integrating back
//! gives the initial state.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::DerivativeChain;
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::linalg::{DenseMatrix, Lu};
use crate::models::{
    check_theta, sir_combos_at, ModelDef, ModelId, ParamVector, PartialCombos, Recovered,
};
use crate::ode::{integrate_backward, GridSpec, State};
use crate::scalar::Scalar;

/// Above this condition number a result is returned but marked untrusted.
pub const UNTRUSTED_COND: f64 = 1e12;
/// At or above this condition number a system is treated as singular.
pub const SINGULAR_COND: f64 = 1e14;
/// Determinants at or below this magnitude are treated as zero.
pub const MIN_DET: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "multitime")]
    MultiTime,
    #[serde(rename = "wronskian")]
    Wronskian,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::MultiTime => "multitime",
            Method::Wronskian => "wronskian",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multitime" => Ok(Method::MultiTime),
            "wronskian" => Ok(Method::Wronskian),
            _ => Err(Error::Parse(format!(
                "unknown method '{s}' (expected multitime or wronskian)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReconOptions<T> {
    /// Threshold on `|sigma1|, |sigma3|` separating the SIR regime.
    pub tol_sir: T,
}

impl<T: Scalar> Default for ReconOptions<T> {
    fn default() -> Self {
        ReconOptions {
            tol_sir: T::lit(crate::models::DEFAULT_TOL_SIR),
        }
    }
}

/// Solution of one regression block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSolve<T> {
    pub block: usize,
    pub sigma: Vec<T>,
    pub times: Vec<T>,
    pub det: T,
    pub cond: T,
    /// `max |M sigma - b| / max |b|`.
    pub residual: T,
}

/// Parameters as far as the data determine them.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaHat<T> {
    Full(ParamVector<T>),
    Partial(PartialCombos<T>),
}

/// Coordinates in which the recovered initial state is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Coordinates {
    /// The model's own compartments.
    #[serde(rename = "state")]
    State,
    /// `(beta S, k I)` for data in the SIR regime.
    #[serde(rename = "beta_S,k_I")]
    SirObservable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult<T> {
    pub model_id: ModelId,
    pub method: Method,
    /// Time at which the state was read off the outputs.
    pub t_tilde: T,
    pub blocks: Vec<BlockSolve<T>>,
    pub theta_hat: ThetaHat<T>,
    pub theta_in_box: bool,
    pub x0_hat: State<T>,
    pub x0_coordinates: Coordinates,
    pub trusted: bool,
    pub elapsed_seconds: f64,
}

impl<T: Scalar> ReconstructionResult<T> {
    /// `sigma` per block, in block order.
    pub fn sigma(&self) -> Vec<Vec<T>> {
        self.blocks.iter().map(|b| b.sigma.clone()).collect()
    }

    pub fn times_used(&self) -> Vec<T> {
        self.blocks.iter().flat_map(|b| b.times.iter().copied()).collect()
    }

    pub fn max_cond(&self) -> T {
        self.blocks.iter().fold(T::one(), |m, b| m.max(b.cond))
    }

    pub fn regime(&self) -> &'static str {
        match self.theta_hat {
            ThetaHat::Full(_) => "full",
            ThetaHat::Partial(_) => "SIR",
        }
    }
}

fn near_zero_at<T: Scalar>(e: Error, t: T) -> Error {
    match e {
        Error::OutputNearZero { .. } => Error::OutputNearZero { t: t.to_f64_lossy() },
        other => other,
    }
}

fn point_jets<T: Scalar>(chain: &DerivativeChain<T>, i: usize, len: usize) -> Vec<Jet<T>> {
    chain
        .jets_at(i)
        .into_iter()
        .map(|j| j.truncate(len))
        .collect()
}

fn require_order<T: Scalar>(chain: &DerivativeChain<T>, needed: usize) -> Result<()> {
    if chain.order < needed {
        Err(Error::OrderUnsupported {
            requested: needed,
            max: chain.order,
        })
    } else {
        Ok(())
    }
}

fn values<T: Scalar>(jets: &[Jet<T>]) -> Vec<T> {
    jets.iter().map(Jet::value).collect()
}

/// Conditioning of a square system: `(det, cond)`.
fn diagnose<T: Scalar>(m: &DenseMatrix<T>) -> (T, T) {
    let det = crate::linalg::det(m);
    (det, m.cond2())
}

fn is_singular<T: Scalar>(det: T, cond: T) -> bool {
    !(det.abs() > T::lit(MIN_DET)) || !(cond < T::lit(SINGULAR_COND))
}

/// Solves a square block system, reporting determinant, condition number
/// and relative residual.
pub fn solve_square<T: Scalar>(m: &DenseMatrix<T>, b: &[T]) -> Option<(Vec<T>, T, T, T)> {
    let (det, cond) = diagnose(m);
    let lu = Lu::factor(m)?;
    let x = lu.solve(b);
    let mx = m.mul_vec(&x);
    let num = mx
        .iter()
        .zip(b)
        .fold(T::zero(), |acc, (&u, &v)| acc.max((u - v).abs()));
    let den = crate::scalar::max_abs(b);
    let residual = if den > T::zero() { num / den } else { num };
    Some((x, det, cond, residual))
}

/// Row indices (into `rows`) of a `q`-subset with large `|det|`: greedy
/// volume growth on column-equilibrated rows, then pairwise swaps.
pub fn select_rows<T: Scalar>(rows: &[Vec<T>], q: usize) -> Vec<usize> {
    let n = rows.len();
    if n <= q {
        return (0..n).collect();
    }
    let mut scale = vec![T::zero(); q];
    for r in rows {
        for (s, &v) in scale.iter_mut().zip(r) {
            *s = s.max(v.abs());
        }
    }
    let scaled: Vec<Vec<T>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(&scale)
                .map(|(&v, &s)| if s > T::zero() { v / s } else { v })
                .collect()
        })
        .collect();

    let mut residual = scaled.clone();
    let mut chosen: Vec<usize> = Vec::with_capacity(q);
    let mut used = vec![false; n];
    for _ in 0..q {
        let mut best: Option<(usize, T)> = None;
        for (i, r) in residual.iter().enumerate() {
            if used[i] {
                continue;
            }
            let norm2: T = r.iter().map(|&v| v * v).sum();
            if best.is_none_or(|(_, b)| norm2 > b) {
                best = Some((i, norm2));
            }
        }
        let (pick, norm2) = best.expect("more rows than picks");
        used[pick] = true;
        chosen.push(pick);
        if norm2 > T::zero() {
            let norm = norm2.sqrt();
            let u: Vec<T> = residual[pick].iter().map(|&v| v / norm).collect();
            for r in residual.iter_mut() {
                let dot: T = r.iter().zip(&u).map(|(&a, &b)| a * b).sum();
                for (v, &w) in r.iter_mut().zip(&u) {
                    *v -= dot * w;
                }
            }
        }
    }

    let volume = |sel: &[usize]| -> T {
        let m: Vec<Vec<T>> = sel.iter().map(|&i| scaled[i].clone()).collect();
        crate::linalg::det(&DenseMatrix::from_rows(&m)).abs()
    };
    let mut best = volume(&chosen);
    let gain = T::one() + T::lit(1e-10);
    for _pass in 0..8 {
        let mut improved = false;
        for pos in 0..q {
            for cand in 0..n {
                if used[cand] {
                    continue;
                }
                let old = chosen[pos];
                chosen[pos] = cand;
                let v = volume(&chosen);
                if v > best * gain {
                    best = v;
                    used[old] = false;
                    used[cand] = true;
                    improved = true;
                } else {
                    chosen[pos] = old;
                }
            }
        }
        if !improved {
            break;
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Regressor rows of `block` at the given chain indices; rows where the
/// output is too small to evaluate them are dropped.
fn regressor_rows<T: Scalar>(
    model: &dyn ModelDef<T>,
    chain: &DerivativeChain<T>,
    block: usize,
    indices: &[usize],
    sigma: &[Vec<T>],
) -> Result<(Vec<usize>, Vec<Vec<T>>, Option<T>)> {
    let len = model.blocks()[block].top_order + 1;
    let mut kept = Vec::with_capacity(indices.len());
    let mut rows = Vec::with_capacity(indices.len());
    let mut first_skip = None;
    for &i in indices {
        match model.regressors(block, &point_jets(chain, i, len), sigma) {
            Ok(g) => {
                let row = values(&g);
                if crate::scalar::all_finite(&row) {
                    kept.push(i);
                    rows.push(row);
                }
            }
            Err(Error::OutputNearZero { .. }) => {
                first_skip.get_or_insert(chain.times[i]);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((kept, rows, first_skip))
}

fn select_block<T: Scalar>(
    model: &dyn ModelDef<T>,
    chain: &DerivativeChain<T>,
    block: usize,
    window: &[usize],
    sigma: &[Vec<T>],
) -> Result<Vec<usize>> {
    let q = model.blocks()[block].q;
    if window.len() < q {
        return Err(Error::TooFewSamples {
            needed: q,
            got: window.len(),
        });
    }
    let (kept, rows, skipped) = regressor_rows(model, chain, block, window, sigma)?;
    if rows.len() < q {
        return Err(match skipped {
            Some(t) if rows.is_empty() => Error::OutputNearZero { t: t.to_f64_lossy() },
            _ => Error::SingularEverywhere { block },
        });
    }
    let pick = select_rows(&rows, q);
    let m = DenseMatrix::from_rows(&pick.iter().map(|&r| rows[r].clone()).collect::<Vec<_>>());
    let (det, cond) = diagnose(&m);
    if is_singular(det, cond) {
        return Err(Error::SingularEverywhere { block });
    }
    Ok(pick.into_iter().map(|r| kept[r]).collect())
}

fn solve_block_at<T: Scalar>(
    model: &dyn ModelDef<T>,
    chain: &DerivativeChain<T>,
    block: usize,
    indices: &[usize],
    sigma: &[Vec<T>],
) -> Result<BlockSolve<T>> {
    let len = model.blocks()[block].top_order + 1;
    let mut rows = Vec::with_capacity(indices.len());
    for &i in indices {
        let g = model
            .regressors(block, &point_jets(chain, i, len), sigma)
            .map_err(|e| near_zero_at(e, chain.times[i]))?;
        rows.push(values(&g));
    }
    let m = DenseMatrix::from_rows(&rows);
    let (det, cond) = diagnose(&m);
    if is_singular(det, cond) {
        return Err(Error::NumericallySingular {
            block,
            cond: cond.to_f64_lossy(),
        });
    }
    let mut b = Vec::with_capacity(indices.len());
    for &i in indices {
        let g0 = model
            .rhs(block, &point_jets(chain, i, len), sigma)
            .map_err(|e| near_zero_at(e, chain.times[i]))?;
        b.push(g0.value());
    }
    let (x, det, cond, residual) = solve_square(&m, &b).ok_or(Error::NumericallySingular {
        block,
        cond: f64::INFINITY,
    })?;
    Ok(BlockSolve {
        block,
        sigma: x,
        times: indices.iter().map(|&i| chain.times[i]).collect(),
        det,
        cond,
        residual,
    })
}

fn window_of<T: Scalar>(chain: &DerivativeChain<T>, window: (T, T)) -> Result<Vec<usize>> {
    if !(window.1 > window.0) {
        return Err(Error::InvalidGrid(format!(
            "window [{}, {}) is empty",
            window.0, window.1
        )));
    }
    Ok(chain.window_indices(window.0, window.1))
}

fn empty_sigma<T: Scalar>(model: &dyn ModelDef<T>) -> Vec<Vec<T>> {
    vec![Vec::new(); model.blocks().len()]
}

/// Per block, `q` grid times in `window = [a, b)` with a well-conditioned
/// regressor matrix. Blocks that read the `sigma` of earlier blocks are
/// selected after solving those.
pub fn select_times_multitime<T: Scalar>(
    model: &dyn ModelDef<T>,
    chain: &DerivativeChain<T>,
    window: (T, T),
) -> Result<Vec<Vec<T>>> {
    let solved = solve_multitime_window(model, chain, window)?;
    Ok(solved.into_iter().map(|b| b.times).collect())
}

/// Selects times in `window = [a, b)` and solves every block there.
pub fn solve_multitime_window<T: Scalar>(
    model: &dyn ModelDef<T>,
    chain: &DerivativeChain<T>,
    window: (T, T),
) -> Result<Vec<BlockSolve<T>>> {
    let top = model.blocks().iter().map(|b| b.top_order).max().unwrap_or(0);
    require_order(chain, top)?;
    let idx = window_of(chain, window)?;
    let mut sigma = empty_sigma(model);
    let mut solved: Vec<Option<BlockSolve<T>>> = vec![None; model.blocks().len()];
    for b in model.solve_order() {
        let pick = select_block(model, chain, b, &idx, &sigma)?;
        let s = solve_block_at(model, chain, b, &pick, &sigma)?;
        sigma[b] = s.sigma.clone();
        solved[b] = Some(s);
    }
    Ok(solved.into_iter().map(|s| s.expect("every block solved")).collect())
}

/// Solves every block at the supplied grid times.
pub fn solve_multitime<T: Scalar>(
    model: &dyn ModelDef<T>,
    chain: &DerivativeChain<T>,
    times: &[Vec<T>],
) -> Result<Vec<BlockSolve<T>>> {
    let blocks = model.blocks();
    if times.len() != blocks.len() {
        return Err(Error::DimensionMismatch {
            expected: blocks.len(),
            found: times.len(),
        });
    }
    let top = blocks.iter().map(|b| b.top_order).max().unwrap_or(0);
    require_order(chain, top)?;
    let mut sigma = empty_sigma(model);
    let mut solved: Vec<Option<BlockSolve<T>>> = vec![None; blocks.len()];
    for b in model.solve_order() {
        if times[b].len() != blocks[b].q {
            return Err(Error::DimensionMismatch {
                expected: blocks[b].q,
                found: times[b].len(),
            });
        }
        let idx = times[b]
            .iter()
            .map(|&t| {
                chain
                    .index_of(t)
                    .ok_or_else(|| Error::InvalidGrid(format!("time {t} is not on the chain grid")))
            })
            .collect::<Result<Vec<_>>>()?;
        let s = solve_block_at(model, chain, b, &idx, &sigma)?;
        sigma[b] = s.sigma.clone();
        solved[b] = Some(s);
    }
    Ok(solved.into_iter().map(|s| s.expect("every block solved")).collect())
}

/// Chain order the Wronskian method needs for `model`.
pub fn wronskian_order<T: Scalar>(model: &dyn ModelDef<T>) -> usize {
    model
        .blocks()
        .iter()
        .map(|b| b.top_order + b.q - 1)
        .max()
        .unwrap_or(0)
}

/// Solves every block from derivatives of the regression at grid index `i`.
pub fn solve_wronskian<T: Scalar>(
    model: &dyn ModelDef<T>,
    chain: &DerivativeChain<T>,
    i: usize,
) -> Result<Vec<BlockSolve<T>>> {
    let needed = wronskian_order(model);
    if needed > crate::chain::MAX_ORDER {
        return Err(Error::OrderUnsupported {
            requested: needed,
            max: crate::chain::MAX_ORDER,
        });
    }
    require_order(chain, needed)?;
    let t = chain.times[i];
    let jets = chain.jets_at(i);
    let blocks = model.blocks();
    let mut sigma = empty_sigma(model);
    let mut solved: Vec<Option<BlockSolve<T>>> = vec![None; blocks.len()];
    for b in model.solve_order() {
        let q = blocks[b].q;
        let g = model
            .regressors(b, &jets, &sigma)
            .map_err(|e| near_zero_at(e, t))?;
        let mut m = DenseMatrix::zeros(q, q);
        for (l, gl) in g.iter().enumerate() {
            for k in 0..q {
                m.set(k, l, gl.derivative(k));
            }
        }
        let (det, cond) = diagnose(&m);
        if is_singular(det, cond) {
            return Err(Error::WronskianVanishes {
                t: t.to_f64_lossy(),
                block: b,
                det: det.to_f64_lossy(),
                cond: cond.to_f64_lossy(),
            });
        }
        let g0 = model.rhs(b, &jets, &sigma).map_err(|e| near_zero_at(e, t))?;
        let rhs: Vec<T> = (0..q).map(|k| g0.derivative(k)).collect();
        let (x, det, cond, residual) = solve_square(&m, &rhs).ok_or(Error::WronskianVanishes {
            t: t.to_f64_lossy(),
            block: b,
            det: 0.0,
            cond: f64::INFINITY,
        })?;
        sigma[b] = x.clone();
        solved[b] = Some(BlockSolve {
            block: b,
            sigma: x,
            times: vec![t],
            det,
            cond,
            residual,
        });
    }
    Ok(solved.into_iter().map(|s| s.expect("every block solved")).collect())
}

/// Inverts `r`; in the SIR regime only the rates are available here.
pub fn recover_theta<T: Scalar>(
    model: &dyn ModelDef<T>,
    sigma: &[Vec<T>],
    opts: &ReconOptions<T>,
) -> Result<Recovered<T>> {
    if sigma.iter().any(|s| !crate::scalar::all_finite(s)) {
        return Err(Error::SigmaDegenerate("non-finite sigma".into()));
    }
    model.recover(sigma, opts.tol_sir)
}

/// Initial state at `chain.times[0]` from the outputs at grid index `i`.
pub fn recover_x0<T: Scalar>(
    model: &dyn ModelDef<T>,
    chain: &DerivativeChain<T>,
    recovered: &Recovered<T>,
    i: usize,
) -> Result<(State<T>, Coordinates, Option<PartialCombos<T>>)> {
    let t = chain.times[i];
    let t0 = chain.times[0];
    let h = if chain.len() > 1 { chain.step() } else { T::one() };
    let outs = chain.point(i);
    match recovered {
        Recovered::Full(theta) => {
            let x_t = model
                .state_from_outputs(&outs, theta)
                .map_err(|e| near_zero_at(e, t))?;
            if !crate::scalar::all_finite(&x_t) {
                return Err(Error::IntegrationFailure(format!(
                    "state inversion at t={t} is not finite"
                )));
            }
            let x0 = if i == 0 {
                x_t
            } else {
                let grid = GridSpec::with_start(t0, h, t);
                integrate_backward(model, theta, &x_t, t, &grid)?
            };
            Ok((x0, Coordinates::State, None))
        }
        Recovered::SirRates { gamma, beta_over_k } => {
            let sigma = [*gamma * *beta_over_k, *beta_over_k];
            let combos = sir_combos_at(&sigma, outs[0][0], outs[0][1], t - t0, h)?;
            Ok((
                State(vec![combos.beta_s0, combos.k_i0]),
                Coordinates::SirObservable,
                Some(combos),
            ))
        }
    }
}

fn finish<T: Scalar>(
    model: &dyn ModelDef<T>,
    chain: &DerivativeChain<T>,
    method: Method,
    blocks: Vec<BlockSolve<T>>,
    i: usize,
    opts: &ReconOptions<T>,
    started: Instant,
) -> Result<ReconstructionResult<T>> {
    let sigma: Vec<Vec<T>> = blocks.iter().map(|b| b.sigma.clone()).collect();
    let recovered = recover_theta(model, &sigma, opts)?;
    let theta_in_box = match &recovered {
        Recovered::Full(theta) => check_theta(model, theta).is_ok(),
        Recovered::SirRates { gamma, beta_over_k } => {
            *gamma > T::zero() && *beta_over_k > T::zero()
        }
    };
    let (x0_hat, x0_coordinates, combos) = recover_x0(model, chain, &recovered, i)?;
    let theta_hat = match (recovered, combos) {
        (Recovered::Full(theta), _) => ThetaHat::Full(theta),
        (Recovered::SirRates { .. }, Some(c)) => ThetaHat::Partial(c),
        (Recovered::SirRates { .. }, None) => unreachable!("SIR regime always yields combos"),
    };
    let trusted = blocks.iter().all(|b| {
        b.cond <= T::lit(UNTRUSTED_COND) && b.residual <= T::lit(1e-8) && b.det.is_finite()
    });
    Ok(ReconstructionResult {
        model_id: model.id(),
        method,
        t_tilde: chain.times[i],
        blocks,
        theta_hat,
        theta_in_box,
        x0_hat,
        x0_coordinates,
        trusted,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Multi-time reconstruction on `window = [a, b)`; the state is read off at
/// the first grid time of the window.
pub fn reconstruct_multitime<T: Scalar>(
    model: &dyn ModelDef<T>,
    chain: &DerivativeChain<T>,
    window: (T, T),
    opts: &ReconOptions<T>,
) -> Result<ReconstructionResult<T>> {
    let started = Instant::now();
    let blocks = solve_multitime_window(model, chain, window)?;
    let first = chain.window_indices(window.0, window.1)[0];
    finish(model, chain, Method::MultiTime, blocks, first, opts, started)
}

/// Wronskian reconstruction at the grid time `t_tilde`.
pub fn reconstruct_wronskian<T: Scalar>(
    model: &dyn ModelDef<T>,
    chain: &DerivativeChain<T>,
    t_tilde: T,
    opts: &ReconOptions<T>,
) -> Result<ReconstructionResult<T>> {
    let i = chain
        .index_of(t_tilde)
        .ok_or_else(|| Error::InvalidGrid(format!("t={t_tilde} is not on the chain grid")))?;
    reconstruct_wronskian_at(model, chain, i, opts)
}

fn reconstruct_wronskian_at<T: Scalar>(
    model: &dyn ModelDef<T>,
    chain: &DerivativeChain<T>,
    i: usize,
    opts: &ReconOptions<T>,
) -> Result<ReconstructionResult<T>> {
    let started = Instant::now();
    let blocks = solve_wronskian(model, chain, i)?;
    finish(model, chain, Method::Wronskian, blocks, i, opts, started)
}

/// Wronskian reconstruction at every grid time, in grid order.
pub fn wronskian_batch<T: Scalar>(
    model: &dyn ModelDef<T>,
    chain: &DerivativeChain<T>,
    opts: &ReconOptions<T>,
) -> Vec<Result<ReconstructionResult<T>>> {
    (0..chain.len())
        .into_par_iter()
        .map(|i| reconstruct_wronskian_at(model, chain, i, opts))
        .collect()
}
