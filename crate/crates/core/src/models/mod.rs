//! Catalog of compartmental models with partial outputs.
//!
//! Each model packages its vector field, output map, admissible parameter
//! box, invariant-set test, structural regression `g0 = sum_l sigma_l g_l`
//! with its parameter map `sigma = r(theta)`, the inverse of `r`, and the
//! map from output derivatives back to the state.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::linalg::{DenseMatrix, Lu};
use crate::ode::{self, GridSpec, ModelFlow, State};
use crate::scalar::Scalar;

mod sir;
mod sir_demog;
mod sir_incidence;
mod sirs;
mod sirv;
mod siv;

pub use sir::{sir_combos, sir_combos_at, Sir, SirCombosFlow};
pub use sir_demog::SirDemog;
pub use sir_incidence::SirIncidence;
pub use sirs::{sirs_r, sirs_r_inverse, Sirs};
pub use sirv::Sirv;
pub use siv::SivDemog;

/// Outputs (or output derivatives used as denominators) at or below this
/// magnitude abort the computation.
pub const OUTPUT_EPS: f64 = 1e-14;
/// Margin applied to strict parameter bounds.
pub const THETA_MARGIN: f64 = 1e-14;
/// Default tolerance on `|sigma_1|, |sigma_3|` for the SIR regime.
pub const DEFAULT_TOL_SIR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    #[serde(rename = "sirs")]
    Sirs,
    #[serde(rename = "sir")]
    Sir,
    #[serde(rename = "sirs-ext")]
    SirsExt,
    #[serde(rename = "sir-demog")]
    SirDemog,
    #[serde(rename = "sirv")]
    Sirv,
    #[serde(rename = "sir-incidence")]
    SirIncidence,
    #[serde(rename = "siv-demog")]
    SivDemog,
}

impl ModelId {
    pub const ALL: [ModelId; 7] = [
        ModelId::Sirs,
        ModelId::Sir,
        ModelId::SirsExt,
        ModelId::SirDemog,
        ModelId::Sirv,
        ModelId::SirIncidence,
        ModelId::SivDemog,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Sirs => "sirs",
            ModelId::Sir => "sir",
            ModelId::SirsExt => "sirs-ext",
            ModelId::SirDemog => "sir-demog",
            ModelId::Sirv => "sirv",
            ModelId::SirIncidence => "sir-incidence",
            ModelId::SivDemog => "siv-demog",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown model '{s}' (expected one of: {})",
                    ModelId::ALL.map(ModelId::as_str).join(", ")
                ))
            })
    }
}

/// Admissible interval for one parameter; open ends exclude the endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBound {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl ParamBound {
    pub const fn positive(name: &'static str) -> Self {
        ParamBound {
            name,
            lo: 0.0,
            hi: f64::INFINITY,
            lo_open: true,
            hi_open: true,
        }
    }

    pub const fn nonnegative(name: &'static str) -> Self {
        ParamBound {
            name,
            lo: 0.0,
            hi: f64::INFINITY,
            lo_open: false,
            hi_open: true,
        }
    }

    /// The observed fraction `k` in `(0, 1]`.
    pub const fn fraction(name: &'static str) -> Self {
        ParamBound {
            name,
            lo: 0.0,
            hi: 1.0,
            lo_open: true,
            hi_open: false,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        let lo_ok = if self.lo_open {
            v > self.lo + THETA_MARGIN
        } else {
            v >= self.lo - THETA_MARGIN
        };
        let hi_ok = if self.hi_open {
            v < self.hi - THETA_MARGIN
        } else {
            v <= self.hi + THETA_MARGIN
        };
        lo_ok && hi_ok
    }
}

/// Parameter values in the order given by [`ModelDef::param_names`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T>(pub Vec<T>);

impl<T: Scalar> ParamVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        ParamVector(values)
    }

    pub fn from_f64(values: &[f64]) -> Self {
        ParamVector(values.iter().map(|&v| T::lit(v)).collect())
    }
}

impl<T> From<Vec<T>> for ParamVector<T> {
    fn from(v: Vec<T>) -> Self {
        ParamVector(v)
    }
}

impl<T> Deref for ParamVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Shape of one regression block: which output channel it reads, the
/// highest output derivative `d'` it involves, and its regressor count `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub channel: usize,
    pub top_order: usize,
    pub q: usize,
}

/// The combinations recoverable from SIR data with output `kI`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialCombos<T> {
    pub gamma: T,
    pub beta_over_k: T,
    pub beta_s0: T,
    pub k_i0: T,
}

/// Outcome of inverting `r`.
#[derive(Debug, Clone, PartialEq)]
pub enum Recovered<T> {
    Full(ParamVector<T>),
    /// SIR regime: only `gamma` and `beta/k` follow from sigma.
    SirRates { gamma: T, beta_over_k: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibria<T> {
    pub dfe: Option<State<T>>,
    pub ee: Option<State<T>>,
    pub r0: Option<T>,
}

/// A model/output configuration from the catalog.
pub trait ModelDef<T: Scalar>: Send + Sync {
    fn id(&self) -> ModelId;
    fn state_names(&self) -> &'static [&'static str];
    fn param_names(&self) -> &'static [&'static str];
    fn output_names(&self) -> &'static [&'static str];
    fn theta_box(&self) -> &'static [ParamBound];

    fn state_dim(&self) -> usize {
        self.state_names().len()
    }

    fn output_dim(&self) -> usize {
        self.output_names().len()
    }

    /// True for catalog entries that reuse another configuration's dynamics.
    fn is_alias(&self) -> bool {
        false
    }

    fn vector_field(&self, x: &[T], theta: &[T]) -> Vec<T>;
    fn vector_field_jet(&self, x: &[Jet<T>], theta: &[T]) -> Vec<Jet<T>>;
    fn output(&self, x: &[T], theta: &[T]) -> Vec<T>;
    fn output_jet(&self, x: &[Jet<T>], theta: &[T]) -> Vec<Jet<T>>;

    /// `Err(detail)` when `x` is outside the invariant set by more than `tol`.
    fn omega_check(&self, x: &[T], theta: &[T], tol: T) -> std::result::Result<(), String>;

    fn blocks(&self) -> &'static [BlockSpec];

    /// Order in which blocks are solved; later blocks may read the sigma of
    /// earlier ones.
    fn solve_order(&self) -> Vec<usize> {
        (0..self.blocks().len()).collect()
    }

    /// `sigma = r(theta)`, one vector per block.
    fn r(&self, theta: &[T]) -> Vec<Vec<T>>;

    /// Regressor functionals `g_1..g_q` of `block`, evaluated on output
    /// jets. `sigma` holds already-solved blocks (others may be empty).
    fn regressors(&self, block: usize, outs: &[Jet<T>], sigma: &[Vec<T>]) -> Result<Vec<Jet<T>>>;

    /// Left-hand functional `g_0` of `block`.
    fn rhs(&self, block: usize, outs: &[Jet<T>], sigma: &[Vec<T>]) -> Result<Jet<T>>;

    /// Inverts `r`. `tol_sir` only matters for models with an SIR regime.
    fn recover(&self, sigma: &[Vec<T>], tol_sir: T) -> Result<Recovered<T>>;

    /// State from output derivatives at one time (`outs[c][k]` = k-th
    /// derivative of output `c`) and known parameters.
    fn state_from_outputs(&self, outs: &[Vec<T>], theta: &[T]) -> Result<State<T>>;

    /// Closed-form low-order output derivatives per channel, from which the
    /// structural regression generates the rest. `None` for models whose
    /// regression cannot be solved for its top derivative.
    fn chain_seed(&self, x: &[T], theta: &[T]) -> Option<Vec<Vec<T>>>;

    fn equilibria(&self, theta: &[T]) -> Equilibria<T>;
}

/// Every catalog configuration, including the extended-SIRS alias.
pub fn catalog<T: Scalar>() -> Vec<Box<dyn ModelDef<T>>> {
    ModelId::ALL.iter().map(|&id| model(id)).collect()
}

pub fn model<T: Scalar>(id: ModelId) -> Box<dyn ModelDef<T>> {
    match id {
        ModelId::Sirs => Box::new(Sirs::standard()),
        ModelId::SirsExt => Box::new(Sirs::extended()),
        ModelId::Sir => Box::new(Sir),
        ModelId::SirDemog => Box::new(SirDemog),
        ModelId::Sirv => Box::new(Sirv),
        ModelId::SirIncidence => Box::new(SirIncidence),
        ModelId::SivDemog => Box::new(SivDemog),
    }
}

/// Checks dimension and the admissible box of `theta`.
pub fn check_theta<T: Scalar>(model: &dyn ModelDef<T>, theta: &[T]) -> Result<()> {
    let bounds = model.theta_box();
    if theta.len() != bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: bounds.len(),
            found: theta.len(),
        });
    }
    for (b, &v) in bounds.iter().zip(theta) {
        let v = v.to_f64_lossy();
        if !b.contains(v) {
            return Err(Error::ThetaOutOfBox {
                name: b.name.to_string(),
                value: v,
            });
        }
    }
    Ok(())
}

/// True when every component lies in the admissible box.
pub fn theta_in_box<T: Scalar>(model: &dyn ModelDef<T>, theta: &[T]) -> bool {
    check_theta(model, theta).is_ok()
}

/// Builds output jets from per-channel derivative lists.
pub fn output_jets<T: Scalar>(outs: &[Vec<T>]) -> Vec<Jet<T>> {
    outs.iter().map(|d| Jet::from_derivatives(d)).collect()
}

/// Residual functional `g0 - sum_l sigma_l g_l` of one block as a jet.
pub fn regression_residual<T: Scalar>(
    model: &dyn ModelDef<T>,
    block: usize,
    outs: &[Jet<T>],
    sigma: &[Vec<T>],
) -> Result<Jet<T>> {
    let g = model.regressors(block, outs, sigma)?;
    let mut res = model.rhs(block, outs, sigma)?;
    for (gl, &s) in g.iter().zip(&sigma[block]) {
        res = res - gl.scale(s);
    }
    Ok(res)
}

/// Zero of the vector field near `guess` by Newton's method with a
/// finite-difference Jacobian.
pub fn find_equilibrium<T: Scalar>(
    model: &dyn ModelDef<T>,
    theta: &[T],
    guess: &[T],
) -> Option<State<T>> {
    let n = model.state_dim();
    let mut x = guess.to_vec();
    let tol = T::lit(1e-13);
    for _ in 0..100 {
        let f = model.vector_field(&x, theta);
        if crate::scalar::max_abs(&f) <= tol {
            return Some(State(x));
        }
        let mut jac = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let step = T::lit(1e-7) * x[j].abs().max(T::one());
            let mut xp = x.clone();
            xp[j] += step;
            let fp = model.vector_field(&xp, theta);
            for i in 0..n {
                jac.set(i, j, (fp[i] - f[i]) / step);
            }
        }
        let lu = Lu::factor(&jac)?;
        let dx = lu.solve(&f);
        for i in 0..n {
            x[i] -= dx[i];
        }
        if !crate::scalar::all_finite(&x) {
            return None;
        }
    }
    let f = model.vector_field(&x, theta);
    (crate::scalar::max_abs(&f) <= T::lit(1e-10)).then_some(State(x))
}

/// Long-horizon attractor of the flow from `start`, polished by Newton.
pub(crate) fn locate_attractor<T: Scalar>(
    model: &dyn ModelDef<T>,
    theta: &[T],
    start: &[T],
    horizon: f64,
) -> Option<State<T>> {
    let flow = ModelFlow { model, theta };
    let grid = GridSpec::new(T::lit(0.25), T::lit(horizon));
    let (_, states) = ode::integrate_field(&flow, start, &grid).ok()?;
    find_equilibrium(model, theta, states.last()?)
}

fn near_zero<T: Scalar>(v: T) -> bool {
    !(v.abs() > T::lit(OUTPUT_EPS))
}

pub(crate) fn require_nonzero<T: Scalar>(v: T) -> Result<()> {
    if near_zero(v) {
        Err(Error::OutputNearZero { t: f64::NAN })
    } else {
        Ok(())
    }
}

pub(crate) fn require_sigma_nonzero<T: Scalar>(v: T, what: &str) -> Result<()> {
    if near_zero(v) {
        Err(Error::SigmaDegenerate(format!("{what} is numerically zero")))
    } else {
        Ok(())
    }
}

/// Membership in `{x >= 0, sum(x) <= total}` up to `tol`.
pub(crate) fn simplex_check<T: Scalar>(
    x: &[T],
    total: T,
    tol: T,
) -> std::result::Result<(), String> {
    for (i, &v) in x.iter().enumerate() {
        if v < -tol {
            return Err(format!("component {i} = {v} is negative"));
        }
    }
    let sum: T = x.iter().copied().sum();
    if sum > total + tol {
        return Err(format!("compartments sum to {sum} > {total}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_roundtrip_through_strings() {
        for id in ModelId::ALL {
            assert_eq!(id.as_str().parse::<ModelId>().unwrap(), id);
        }
        assert!("seir".parse::<ModelId>().is_err());
    }

    #[test]
    fn catalog_has_six_configurations_plus_alias() {
        let cat = catalog::<f64>();
        assert_eq!(cat.len(), 7);
        assert_eq!(cat.iter().filter(|m| !m.is_alias()).count(), 6);
        for m in &cat {
            let x = vec![0.1; m.state_dim()];
            let theta: Vec<f64> = vec![0.2; m.param_names().len()];
            assert_eq!(m.vector_field(&x, &theta).len(), m.state_dim());
            assert_eq!(m.output(&x, &theta).len(), m.output_dim());
            assert_eq!(m.r(&theta).len(), m.blocks().len());
        }
    }

    #[test]
    fn half_open_bounds() {
        let k = ParamBound::fraction("k");
        assert!(k.contains(1.0));
        assert!(!k.contains(0.0));
        assert!(!k.contains(1.1));
        let mu = ParamBound::nonnegative("mu");
        assert!(mu.contains(0.0));
        assert!(!mu.contains(-1e-3));
        assert!(!ParamBound::positive("beta").contains(0.0));
    }
}
