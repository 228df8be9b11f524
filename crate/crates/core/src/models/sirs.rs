//! SIRS with output `y = kI`, reduced to `(S, I)` through `R = 1 - S - I`.
//!
//! Structural regression (one block, `d' = 2`, `q = 4`):
//!
//! ```text
//! y'' - y'^2/y = sigma1 (-y) + sigma2 (-y^2) + sigma3 (-y') + sigma4 (-y y')
//! sigma = (mu (gamma - beta), (beta/k)(gamma + mu), mu, beta/k)
//! ```
//!
//! The extended variant admits `mu = 0`; there `r` is no longer injective
//! and sigma with `sigma1 = sigma3 = 0` is read as SIR data.

use crate::error::{Error, Result};
use crate::jet::{Jet, Signal};
use crate::models::{
    require_nonzero, require_sigma_nonzero, simplex_check, BlockSpec, Equilibria, ModelDef,
    ModelId, ParamBound, ParamVector, Recovered,
};
use crate::ode::State;
use crate::scalar::Scalar;

static STANDARD_BOX: [ParamBound; 4] = [
    ParamBound::fraction("k"),
    ParamBound::positive("beta"),
    ParamBound::positive("gamma"),
    ParamBound::positive("mu"),
];

static EXTENDED_BOX: [ParamBound; 4] = [
    ParamBound::fraction("k"),
    ParamBound::positive("beta"),
    ParamBound::positive("gamma"),
    ParamBound::nonnegative("mu"),
];

static BLOCKS: [BlockSpec; 1] = [BlockSpec {
    channel: 0,
    top_order: 2,
    q: 4,
}];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sirs {
    extended: bool,
}

impl Sirs {
    pub fn standard() -> Self {
        Sirs { extended: false }
    }

    pub fn extended() -> Self {
        Sirs { extended: true }
    }
}

fn field<T: Scalar, V: Signal<T>>(x: &[V], theta: &[T]) -> Vec<V> {
    let (beta, gamma, mu) = (theta[1], theta[2], theta[3]);
    let (s, i) = (&x[0], &x[1]);
    let si = (s.clone() * i.clone()).scale(beta);
    let recovered = (-(s.clone() + i.clone())).offset(T::one());
    vec![recovered.scale(mu) - si.clone(), si - i.scale(gamma)]
}

pub fn sirs_r<T: Scalar>(theta: &[T]) -> [T; 4] {
    let (k, beta, gamma, mu) = (theta[0], theta[1], theta[2], theta[3]);
    [
        mu * (gamma - beta),
        beta / k * (gamma + mu),
        mu,
        beta / k,
    ]
}

/// Inverse of [`sirs_r`]; fails when `sigma3` or `sigma4` vanish.
pub fn sirs_r_inverse<T: Scalar>(sigma: &[T]) -> Result<[T; 4]> {
    if sigma.len() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: sigma.len(),
        });
    }
    require_sigma_nonzero(sigma[2], "sigma3")?;
    require_sigma_nonzero(sigma[3], "sigma4")?;
    let gamma = sigma[1] / sigma[3] - sigma[2];
    let beta = gamma - sigma[0] / sigma[2];
    let k = beta / sigma[3];
    Ok([k, beta, gamma, sigma[2]])
}

/// The four regressors shared by the `kI`-observed SIRS family.
pub(crate) fn kis_regressors<T: Scalar>(y: &Jet<T>, first_sign: T) -> Vec<Jet<T>> {
    let yd = y.diff();
    vec![
        y.scale(first_sign),
        -y.square(),
        -yd.clone(),
        -(y.clone() * yd),
    ]
}

/// `y'' - y'^2 / y`.
pub(crate) fn kis_rhs<T: Scalar>(y: &Jet<T>) -> Result<Jet<T>> {
    require_nonzero(y.value())?;
    let yd = y.diff();
    let ydd = yd.diff();
    Ok(ydd - yd.square().div(y))
}

impl<T: Scalar> ModelDef<T> for Sirs {
    fn id(&self) -> ModelId {
        if self.extended {
            ModelId::SirsExt
        } else {
            ModelId::Sirs
        }
    }

    fn state_names(&self) -> &'static [&'static str] {
        &["S", "I"]
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["k", "beta", "gamma", "mu"]
    }

    fn output_names(&self) -> &'static [&'static str] {
        &["y"]
    }

    fn theta_box(&self) -> &'static [ParamBound] {
        if self.extended {
            &EXTENDED_BOX
        } else {
            &STANDARD_BOX
        }
    }

    fn is_alias(&self) -> bool {
        self.extended
    }

    fn vector_field(&self, x: &[T], theta: &[T]) -> Vec<T> {
        field(x, theta)
    }

    fn vector_field_jet(&self, x: &[Jet<T>], theta: &[T]) -> Vec<Jet<T>> {
        field(x, theta)
    }

    fn output(&self, x: &[T], theta: &[T]) -> Vec<T> {
        vec![theta[0] * x[1]]
    }

    fn output_jet(&self, x: &[Jet<T>], theta: &[T]) -> Vec<Jet<T>> {
        vec![x[1].scale(theta[0])]
    }

    fn omega_check(&self, x: &[T], _theta: &[T], tol: T) -> std::result::Result<(), String> {
        simplex_check(x, T::one(), tol)
    }

    fn blocks(&self) -> &'static [BlockSpec] {
        &BLOCKS
    }

    fn r(&self, theta: &[T]) -> Vec<Vec<T>> {
        vec![sirs_r(theta).to_vec()]
    }

    fn regressors(&self, _block: usize, outs: &[Jet<T>], _sigma: &[Vec<T>]) -> Result<Vec<Jet<T>>> {
        Ok(kis_regressors(&outs[0], -T::one()))
    }

    fn rhs(&self, _block: usize, outs: &[Jet<T>], _sigma: &[Vec<T>]) -> Result<Jet<T>> {
        kis_rhs(&outs[0])
    }

    fn recover(&self, sigma: &[Vec<T>], tol_sir: T) -> Result<Recovered<T>> {
        let s = &sigma[0];
        if self.extended {
            let sir_like = s[0].abs() <= tol_sir && s[2].abs() <= tol_sir;
            if sir_like {
                require_sigma_nonzero(s[3], "sigma4")?;
                return Ok(Recovered::SirRates {
                    gamma: s[1] / s[3],
                    beta_over_k: s[3],
                });
            }
            if s[2].abs() <= tol_sir {
                return Err(Error::SigmaDegenerate(format!(
                    "sigma1={} is nonzero while sigma3={} vanishes: data match neither SIR nor SIRS",
                    s[0], s[2]
                )));
            }
        }
        Ok(Recovered::Full(ParamVector(sirs_r_inverse(s)?.to_vec())))
    }

    fn state_from_outputs(&self, outs: &[Vec<T>], theta: &[T]) -> Result<State<T>> {
        let (y, yd) = (outs[0][0], outs[0][1]);
        require_nonzero(y)?;
        let (k, beta, gamma) = (theta[0], theta[1], theta[2]);
        Ok(State(vec![(yd / y + gamma) / beta, y / k]))
    }

    fn chain_seed(&self, x: &[T], theta: &[T]) -> Option<Vec<Vec<T>>> {
        let y = theta[0] * x[1];
        Some(vec![vec![y, (theta[1] * x[0] - theta[2]) * y]])
    }

    fn equilibria(&self, theta: &[T]) -> Equilibria<T> {
        let (beta, gamma, mu) = (theta[1], theta[2], theta[3]);
        let r0 = beta / gamma;
        let ee = (r0 > T::one()).then(|| {
            let s = T::one() / r0;
            State(vec![s, mu * (T::one() - s) / (gamma + mu)])
        });
        Equilibria {
            dfe: Some(State(vec![T::one(), T::zero()])),
            ee,
            r0: Some(r0),
        }
    }
}
