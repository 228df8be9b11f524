//! SIR with vital dynamics (birth and death rate `delta`), output `y = kI`.
//!
//! ```text
//! y'' - y'^2/y = sigma1 y + sigma2 (-y^2) + sigma3 (-y') + sigma4 (-y y')
//! sigma = (delta (beta - gamma - delta), (beta/k)(gamma + delta), delta, beta/k)
//! ```

use crate::error::{Error, Result};
use crate::jet::{Jet, Signal};
use crate::models::sirs::{kis_regressors, kis_rhs};
use crate::models::{
    require_nonzero, require_sigma_nonzero, simplex_check, BlockSpec, Equilibria, ModelDef,
    ModelId, ParamBound, ParamVector, Recovered,
};
use crate::ode::State;
use crate::scalar::Scalar;

static BOX: [ParamBound; 4] = [
    ParamBound::fraction("k"),
    ParamBound::positive("beta"),
    ParamBound::positive("gamma"),
    ParamBound::positive("delta"),
];

static BLOCKS: [BlockSpec; 1] = [BlockSpec {
    channel: 0,
    top_order: 2,
    q: 4,
}];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SirDemog;

fn field<T: Scalar, V: Signal<T>>(x: &[V], theta: &[T]) -> Vec<V> {
    let (beta, gamma, delta) = (theta[1], theta[2], theta[3]);
    let si = (x[0].clone() * x[1].clone()).scale(beta);
    vec![
        x[0].scale(-delta).offset(delta) - si.clone(),
        si - x[1].scale(gamma + delta),
    ]
}

impl<T: Scalar> ModelDef<T> for SirDemog {
    fn id(&self) -> ModelId {
        ModelId::SirDemog
    }

    fn state_names(&self) -> &'static [&'static str] {
        &["S", "I"]
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["k", "beta", "gamma", "delta"]
    }

    fn output_names(&self) -> &'static [&'static str] {
        &["y"]
    }

    fn theta_box(&self) -> &'static [ParamBound] {
        &BOX
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
        let (k, beta, gamma, delta) = (theta[0], theta[1], theta[2], theta[3]);
        vec![vec![
            delta * (beta - gamma - delta),
            beta / k * (gamma + delta),
            delta,
            beta / k,
        ]]
    }

    fn regressors(&self, _block: usize, outs: &[Jet<T>], _sigma: &[Vec<T>]) -> Result<Vec<Jet<T>>> {
        Ok(kis_regressors(&outs[0], T::one()))
    }

    fn rhs(&self, _block: usize, outs: &[Jet<T>], _sigma: &[Vec<T>]) -> Result<Jet<T>> {
        kis_rhs(&outs[0])
    }

    fn recover(&self, sigma: &[Vec<T>], _tol_sir: T) -> Result<Recovered<T>> {
        let s = &sigma[0];
        if s.len() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                found: s.len(),
            });
        }
        require_sigma_nonzero(s[2], "sigma3")?;
        require_sigma_nonzero(s[3], "sigma4")?;
        let delta = s[2];
        let gamma = s[1] / s[3] - delta;
        let beta = s[0] / s[2] + s[1] / s[3];
        Ok(Recovered::Full(ParamVector(vec![beta / s[3], beta, gamma, delta])))
    }

    fn state_from_outputs(&self, outs: &[Vec<T>], theta: &[T]) -> Result<State<T>> {
        let (y, yd) = (outs[0][0], outs[0][1]);
        require_nonzero(y)?;
        let (k, beta, gamma, delta) = (theta[0], theta[1], theta[2], theta[3]);
        Ok(State(vec![(yd / y + gamma + delta) / beta, y / k]))
    }

    fn chain_seed(&self, x: &[T], theta: &[T]) -> Option<Vec<Vec<T>>> {
        let y = theta[0] * x[1];
        Some(vec![vec![y, (theta[1] * x[0] - theta[2] - theta[3]) * y]])
    }

    fn equilibria(&self, theta: &[T]) -> Equilibria<T> {
        let (beta, gamma, delta) = (theta[1], theta[2], theta[3]);
        let r0 = beta / (gamma + delta);
        let ee = (r0 > T::one()).then(|| {
            let s = (gamma + delta) / beta;
            State(vec![s, delta * (T::one() - s) / (gamma + delta)])
        });
        Equilibria {
            dfe: Some(State(vec![T::one(), T::zero()])),
            ee,
            r0: Some(r0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const THETA: [f64; 4] = [0.3, 0.25, 0.1, 0.02];

    #[test]
    fn inverse_of_r() {
        let m = SirDemog;
        let sigma = <SirDemog as ModelDef<f64>>::r(&m, &THETA);
        match <SirDemog as ModelDef<f64>>::recover(&m, &sigma, 0.0).unwrap() {
            Recovered::Full(theta) => {
                for (a, b) in theta.iter().zip(THETA) {
                    assert!((a - b).abs() <= 1e-14 * b);
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn endemic_equilibrium_is_stationary() {
        let eq = <SirDemog as ModelDef<f64>>::equilibria(&SirDemog, &THETA);
        let ee = eq.ee.unwrap();
        let f = <SirDemog as ModelDef<f64>>::vector_field(&SirDemog, &ee, &THETA);
        assert!(f.iter().all(|v| v.abs() < 1e-15));
        assert!(eq.dfe.is_some());
    }

    #[test]
    fn state_inversion_roundtrip() {
        let x = [0.7, 0.2];
        let seed = <SirDemog as ModelDef<f64>>::chain_seed(&SirDemog, &x, &THETA).unwrap();
        let back = <SirDemog as ModelDef<f64>>::state_from_outputs(&SirDemog, &seed, &THETA).unwrap();
        assert!((back[0] - 0.7).abs() < 1e-15 && (back[1] - 0.2).abs() < 1e-15);
    }
}
