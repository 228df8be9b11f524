//! SIV with recruitment `A`, natural death `delta` and vaccination `nu`,
//! observed through two outputs: `y1 = nu (S + I)` and `y2 = delta (S + I + V)`.
//!
//! Block 1 (`y2`): `y2' = A delta - delta y2`, `sigma = (A delta, delta)`.
//! Block 0 (`y1`), with `delta` substituted from block 1:
//!
//! ```text
//! (y1' + delta y1)^2 = s1 + s2 y1 + s3 y1' + s4 (-y1 (y1' + delta y1)) + s5 (-y1'')
//! s1 = A nu^2 (delta nu - A beta) / beta
//! s2 = nu (A nu + 2 A delta - (delta nu^2 + delta^2 nu) / beta)
//! s3 = nu (2 A - (nu^2 + 2 delta nu) / beta)
//! s4 = nu,  s5 = nu^2 / beta
//! ```

use crate::error::{Error, Result};
use crate::jet::{Jet, Signal};
use crate::models::{
    locate_attractor, require_sigma_nonzero, BlockSpec, Equilibria, ModelDef, ModelId,
    ParamBound, ParamVector, Recovered,
};
use crate::ode::State;
use crate::scalar::Scalar;

static BOX: [ParamBound; 4] = [
    ParamBound::positive("A"),
    ParamBound::positive("beta"),
    ParamBound::positive("delta"),
    ParamBound::positive("nu"),
];

static BLOCKS: [BlockSpec; 2] = [
    BlockSpec {
        channel: 0,
        top_order: 2,
        q: 5,
    },
    BlockSpec {
        channel: 1,
        top_order: 1,
        q: 2,
    },
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SivDemog;

fn field<T: Scalar, V: Signal<T>>(x: &[V], theta: &[T]) -> Vec<V> {
    let (a, beta, delta, nu) = (theta[0], theta[1], theta[2], theta[3]);
    let si = (x[0].clone() * x[1].clone()).scale(beta);
    vec![
        x[0].scale(-(nu + delta)).offset(a) - si.clone(),
        si - x[1].scale(delta),
        x[0].scale(nu) - x[2].scale(delta),
    ]
}

fn substituted_delta<T: Scalar>(sigma: &[Vec<T>]) -> Result<T> {
    sigma
        .get(1)
        .and_then(|s| s.get(1))
        .copied()
        .ok_or_else(|| Error::Unsupported("the y1 block needs the solved y2 block".into()))
}

impl<T: Scalar> ModelDef<T> for SivDemog {
    fn id(&self) -> ModelId {
        ModelId::SivDemog
    }

    fn state_names(&self) -> &'static [&'static str] {
        &["S", "I", "V"]
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["A", "beta", "delta", "nu"]
    }

    fn output_names(&self) -> &'static [&'static str] {
        &["y1", "y2"]
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
        vec![theta[3] * (x[0] + x[1]), theta[2] * (x[0] + x[1] + x[2])]
    }

    fn output_jet(&self, x: &[Jet<T>], theta: &[T]) -> Vec<Jet<T>> {
        let si = x[0].clone() + x[1].clone();
        vec![si.scale(theta[3]), (si + x[2].clone()).scale(theta[2])]
    }

    fn omega_check(&self, x: &[T], theta: &[T], tol: T) -> std::result::Result<(), String> {
        crate::models::simplex_check(x, theta[0] / theta[2], tol)
    }

    fn blocks(&self) -> &'static [BlockSpec] {
        &BLOCKS
    }

    fn solve_order(&self) -> Vec<usize> {
        vec![1, 0]
    }

    fn r(&self, theta: &[T]) -> Vec<Vec<T>> {
        let (a, beta, delta, nu) = (theta[0], theta[1], theta[2], theta[3]);
        let two = T::lit(2.0);
        let nu2 = nu * nu;
        vec![
            vec![
                a * nu2 * (delta * nu - a * beta) / beta,
                nu * (a * nu + two * a * delta - (delta * nu2 + delta * delta * nu) / beta),
                nu * (two * a - (nu2 + two * delta * nu) / beta),
                nu,
                nu2 / beta,
            ],
            vec![a * delta, delta],
        ]
    }

    fn regressors(&self, block: usize, outs: &[Jet<T>], sigma: &[Vec<T>]) -> Result<Vec<Jet<T>>> {
        if block == 1 {
            let y2 = &outs[1];
            return Ok(vec![Jet::constant(T::one(), y2.len()), -y2.clone()]);
        }
        let delta = substituted_delta(sigma)?;
        let y1 = &outs[0];
        let y1d = y1.diff();
        let w = y1d.clone() + y1.scale(delta);
        Ok(vec![
            Jet::constant(T::one(), y1.len()),
            y1.clone(),
            y1d.clone(),
            -(y1.clone() * w),
            -y1d.diff(),
        ])
    }

    fn rhs(&self, block: usize, outs: &[Jet<T>], sigma: &[Vec<T>]) -> Result<Jet<T>> {
        if block == 1 {
            return Ok(outs[1].diff());
        }
        let delta = substituted_delta(sigma)?;
        let y1 = &outs[0];
        Ok((y1.diff() + y1.scale(delta)).square())
    }

    fn recover(&self, sigma: &[Vec<T>], _tol_sir: T) -> Result<Recovered<T>> {
        if sigma.len() != 2 || sigma[0].len() != 5 || sigma[1].len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 7,
                found: sigma.iter().map(Vec::len).sum(),
            });
        }
        let delta = sigma[1][1];
        require_sigma_nonzero(delta, "delta")?;
        require_sigma_nonzero(sigma[0][4], "sigma5 of the y1 block")?;
        let a = sigma[1][0] / delta;
        let nu = sigma[0][3];
        let beta = nu * nu / sigma[0][4];
        Ok(Recovered::Full(ParamVector(vec![a, beta, delta, nu])))
    }

    fn state_from_outputs(&self, outs: &[Vec<T>], theta: &[T]) -> Result<State<T>> {
        let (y1, y1d, y2) = (outs[0][0], outs[0][1], outs[1][0]);
        let (a, delta, nu) = (theta[0], theta[2], theta[3]);
        let s = a / nu - (delta * y1 + y1d) / (nu * nu);
        Ok(State(vec![s, y1 / nu - s, y2 / delta - y1 / nu]))
    }

    fn chain_seed(&self, x: &[T], theta: &[T]) -> Option<Vec<Vec<T>>> {
        let (a, delta, nu) = (theta[0], theta[2], theta[3]);
        let y = self.output(x, theta);
        let y1d = nu * a - nu * nu * x[0] - delta * y[0];
        Some(vec![vec![y[0], y1d], vec![y[1]]])
    }

    fn equilibria(&self, theta: &[T]) -> Equilibria<T> {
        let (a, beta, delta, nu) = (theta[0], theta[1], theta[2], theta[3]);
        let s = a / (nu + delta);
        let dfe = State(vec![s, T::zero(), nu * s / delta]);
        let r0 = beta * s / delta;
        let ee = if r0 > T::one() {
            let start = [
                T::lit(0.9) * dfe[0],
                T::lit(0.05) * dfe[0],
                T::lit(0.9) * dfe[2],
            ];
            locate_attractor(self, theta, &start, 4000.0)
                .filter(|x| x[1] > T::lit(1e-10))
        } else {
            None
        };
        Equilibria {
            dfe: Some(dfe),
            ee,
            r0: Some(r0),
        }
    }
}
