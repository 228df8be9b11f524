//! SIR observed through its incidence `y = beta S I`.
//!
//! With `u = y'/y` and `v = u'`, the output satisfies
//!
//! ```text
//! -v^2 = gamma u v + 2 beta gamma y' + beta gamma^2 y + 4 beta y v + 4 beta^2 y^2 + gamma^2 v
//! ```
//!
//! which is not solvable for `y''` in closed form, so chains for this
//! model come from the Taylor expansion of the state.

use crate::error::{Error, Result};
use crate::jet::{Jet, Signal};
use crate::models::{
    require_nonzero, require_sigma_nonzero, simplex_check, BlockSpec, Equilibria, ModelDef,
    ModelId, ParamBound, ParamVector, Recovered,
};
use crate::ode::State;
use crate::scalar::Scalar;

static BOX: [ParamBound; 2] = [ParamBound::positive("beta"), ParamBound::positive("gamma")];

static BLOCKS: [BlockSpec; 1] = [BlockSpec {
    channel: 0,
    top_order: 2,
    q: 6,
}];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SirIncidence;

fn field<T: Scalar, V: Signal<T>>(x: &[V], theta: &[T]) -> Vec<V> {
    let si = (x[0].clone() * x[1].clone()).scale(theta[0]);
    vec![-si.clone(), si - x[1].scale(theta[1])]
}

/// `(u, v)` jets, `u = y'/y`, `v = u'`.
fn log_rates<T: Scalar>(y: &Jet<T>) -> Result<(Jet<T>, Jet<T>)> {
    require_nonzero(y.value())?;
    let u = y.diff().div(y);
    let v = u.diff();
    Ok((u, v))
}

impl<T: Scalar> ModelDef<T> for SirIncidence {
    fn id(&self) -> ModelId {
        ModelId::SirIncidence
    }

    fn state_names(&self) -> &'static [&'static str] {
        &["S", "I"]
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["beta", "gamma"]
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
        vec![theta[0] * x[0] * x[1]]
    }

    fn output_jet(&self, x: &[Jet<T>], theta: &[T]) -> Vec<Jet<T>> {
        vec![(x[0].clone() * x[1].clone()).scale(theta[0])]
    }

    fn omega_check(&self, x: &[T], _theta: &[T], tol: T) -> std::result::Result<(), String> {
        simplex_check(x, T::one(), tol)
    }

    fn blocks(&self) -> &'static [BlockSpec] {
        &BLOCKS
    }

    fn r(&self, theta: &[T]) -> Vec<Vec<T>> {
        let (beta, gamma) = (theta[0], theta[1]);
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        vec![vec![
            gamma,
            two * beta * gamma,
            beta * gamma * gamma,
            four * beta,
            four * beta * beta,
            gamma * gamma,
        ]]
    }

    fn regressors(&self, _block: usize, outs: &[Jet<T>], _sigma: &[Vec<T>]) -> Result<Vec<Jet<T>>> {
        let y = &outs[0];
        let (u, v) = log_rates(y)?;
        Ok(vec![
            u * v.clone(),
            y.diff(),
            y.clone(),
            y.clone() * v.clone(),
            y.square(),
            v,
        ])
    }

    fn rhs(&self, _block: usize, outs: &[Jet<T>], _sigma: &[Vec<T>]) -> Result<Jet<T>> {
        let (_, v) = log_rates(&outs[0])?;
        Ok(-v.square())
    }

    fn recover(&self, sigma: &[Vec<T>], _tol_sir: T) -> Result<Recovered<T>> {
        let s = &sigma[0];
        if s.len() != 6 {
            return Err(Error::DimensionMismatch {
                expected: 6,
                found: s.len(),
            });
        }
        require_sigma_nonzero(s[0], "sigma1")?;
        require_sigma_nonzero(s[3], "sigma4")?;
        Ok(Recovered::Full(ParamVector(vec![s[3] / T::lit(4.0), s[0]])))
    }

    fn state_from_outputs(&self, outs: &[Vec<T>], theta: &[T]) -> Result<State<T>> {
        let d = &outs[0];
        let (y, yd, ydd) = (d[0], d[1], d[2]);
        require_nonzero(y)?;
        let (beta, gamma) = (theta[0], theta[1]);
        let u = yd / y;
        let v = ydd / y - u * u;
        let i = (v + T::lit(2.0) * beta * y) / (beta * gamma);
        Ok(State(vec![(u + gamma) / beta + i, i]))
    }

    fn chain_seed(&self, _x: &[T], _theta: &[T]) -> Option<Vec<Vec<T>>> {
        None
    }

    fn equilibria(&self, theta: &[T]) -> Equilibria<T> {
        Equilibria {
            dfe: Some(State(vec![T::one(), T::zero()])),
            ee: None,
            r0: Some(theta[0] / theta[1]),
        }
    }
}
