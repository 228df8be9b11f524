//! SIR with vaccination at rate `nu`, observing the vaccination rate of the
//! not-yet-vaccinated, `y = nu (1 - V)`.
//!
//! ```text
//! y''' - y''^2/y' = sigma1 (-y') + sigma2 (-y'^2) + sigma3 (-y'') + sigma4 (-y' y'')
//! sigma = (nu gamma, beta/nu, gamma, beta/nu^2)
//! ```

use crate::error::{Error, Result};
use crate::jet::{Jet, Signal};
use crate::models::{
    require_nonzero, require_sigma_nonzero, simplex_check, BlockSpec, Equilibria, ModelDef,
    ModelId, ParamBound, ParamVector, Recovered,
};
use crate::ode::State;
use crate::scalar::Scalar;

static BOX: [ParamBound; 3] = [
    ParamBound::positive("beta"),
    ParamBound::positive("gamma"),
    ParamBound::positive("nu"),
];

static BLOCKS: [BlockSpec; 1] = [BlockSpec {
    channel: 0,
    top_order: 3,
    q: 4,
}];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Sirv;

fn field<T: Scalar, V: Signal<T>>(x: &[V], theta: &[T]) -> Vec<V> {
    let (beta, gamma, nu) = (theta[0], theta[1], theta[2]);
    let si = (x[0].clone() * x[1].clone()).scale(beta);
    vec![
        -si.clone() - x[0].scale(nu),
        si - x[1].scale(gamma),
        x[0].scale(nu),
    ]
}

impl<T: Scalar> ModelDef<T> for Sirv {
    fn id(&self) -> ModelId {
        ModelId::Sirv
    }

    fn state_names(&self) -> &'static [&'static str] {
        &["S", "I", "V"]
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["beta", "gamma", "nu"]
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
        vec![theta[2] * (T::one() - x[2])]
    }

    fn output_jet(&self, x: &[Jet<T>], theta: &[T]) -> Vec<Jet<T>> {
        vec![(-x[2].clone()).offset(T::one()).scale(theta[2])]
    }

    fn omega_check(&self, x: &[T], _theta: &[T], tol: T) -> std::result::Result<(), String> {
        simplex_check(x, T::one(), tol)
    }

    fn blocks(&self) -> &'static [BlockSpec] {
        &BLOCKS
    }

    fn r(&self, theta: &[T]) -> Vec<Vec<T>> {
        let (beta, gamma, nu) = (theta[0], theta[1], theta[2]);
        vec![vec![nu * gamma, beta / nu, gamma, beta / (nu * nu)]]
    }

    fn regressors(&self, _block: usize, outs: &[Jet<T>], _sigma: &[Vec<T>]) -> Result<Vec<Jet<T>>> {
        let yd = outs[0].diff();
        let ydd = yd.diff();
        Ok(vec![
            -yd.clone(),
            -yd.square(),
            -ydd.clone(),
            -(yd * ydd),
        ])
    }

    fn rhs(&self, _block: usize, outs: &[Jet<T>], _sigma: &[Vec<T>]) -> Result<Jet<T>> {
        let yd = outs[0].diff();
        require_nonzero(yd.value())?;
        let ydd = yd.diff();
        Ok(ydd.diff() - ydd.square().div(&yd))
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
        let gamma = s[2];
        let nu = s[0] / gamma;
        Ok(Recovered::Full(ParamVector(vec![s[1] * nu, gamma, nu])))
    }

    fn state_from_outputs(&self, outs: &[Vec<T>], theta: &[T]) -> Result<State<T>> {
        let (y, yd, ydd) = (outs[0][0], outs[0][1], outs[0][2]);
        require_nonzero(yd)?;
        let (beta, nu) = (theta[0], theta[2]);
        Ok(State(vec![
            -yd / (nu * nu),
            -(ydd / yd + nu) / beta,
            T::one() - y / nu,
        ]))
    }

    fn chain_seed(&self, x: &[T], theta: &[T]) -> Option<Vec<Vec<T>>> {
        let (beta, nu) = (theta[0], theta[2]);
        let y = nu * (T::one() - x[2]);
        let yd = -nu * nu * x[0];
        let ydd = -yd * (beta * x[1] + nu);
        Some(vec![vec![y, yd, ydd]])
    }

    fn equilibria(&self, _theta: &[T]) -> Equilibria<T> {
        Equilibria {
            dfe: Some(State(vec![T::zero(), T::zero(), T::one()])),
            ee: None,
            r0: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const THETA: [f64; 3] = [0.3, 0.1, 0.05];

    #[test]
    fn recover_inverts_r() {
        let sigma = <Sirv as ModelDef<f64>>::r(&Sirv, &THETA);
        let Recovered::Full(theta) = <Sirv as ModelDef<f64>>::recover(&Sirv, &sigma, 0.0).unwrap()
        else {
            panic!("expected full recovery")
        };
        for (a, b) in theta.iter().zip(THETA) {
            assert!((a - b).abs() <= 1e-14 * b);
        }
    }

    #[test]
    fn seed_inverts_to_state() {
        let x = [0.8, 0.1, 0.05];
        let seed = <Sirv as ModelDef<f64>>::chain_seed(&Sirv, &x, &THETA).unwrap();
        let back = <Sirv as ModelDef<f64>>::state_from_outputs(&Sirv, &seed, &THETA).unwrap();
        for (a, b) in back.iter().zip(x) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn seed_matches_vector_field() {
        let x = [0.8, 0.1, 0.05];
        let seed = <Sirv as ModelDef<f64>>::chain_seed(&Sirv, &x, &THETA).unwrap();
        let f = <Sirv as ModelDef<f64>>::vector_field(&Sirv, &x, &THETA);
        assert!((seed[0][1] + THETA[2] * f[2]).abs() < 1e-16);
    }
}
