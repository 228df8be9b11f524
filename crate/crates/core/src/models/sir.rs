//! SIR with output `y = kI`. Only `gamma`, `beta/k`, `beta S0` and `k I0`
//! can be recovered from the output.

use crate::error::{Error, Result};
use crate::jet::{Jet, Signal};
use crate::models::sirs::{kis_regressors, kis_rhs};
use crate::models::{
    require_nonzero, require_sigma_nonzero, simplex_check, BlockSpec, Equilibria, ModelDef,
    ModelId, ParamBound, PartialCombos, Recovered,
};
use crate::ode::{integrate_field_backward, GridSpec, State, VectorField};
use crate::scalar::Scalar;

static BOX: [ParamBound; 3] = [
    ParamBound::fraction("k"),
    ParamBound::positive("beta"),
    ParamBound::positive("gamma"),
];

static BLOCKS: [BlockSpec; 1] = [BlockSpec {
    channel: 0,
    top_order: 2,
    q: 2,
}];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Sir;

fn field<T: Scalar, V: Signal<T>>(x: &[V], theta: &[T]) -> Vec<V> {
    let si = (x[0].clone() * x[1].clone()).scale(theta[1]);
    vec![-si.clone(), si - x[1].scale(theta[2])]
}

/// SIR in the observable coordinates `X = beta S`, `Y = k I`:
/// `X' = -(beta/k) X Y`, `Y' = Y (X - gamma)`.
#[derive(Debug, Clone, Copy)]
pub struct SirCombosFlow<T> {
    pub gamma: T,
    pub beta_over_k: T,
}

impl<T: Scalar> VectorField<T> for SirCombosFlow<T> {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[T]) -> Vec<T> {
        vec![
            -self.beta_over_k * x[0] * x[1],
            x[1] * (x[0] - self.gamma),
        ]
    }

    fn check_invariant(&self, x: &[T], tol: T) -> std::result::Result<(), String> {
        match x.iter().position(|&v| v < -tol) {
            Some(i) => Err(format!("transformed coordinate {i} = {} is negative", x[i])),
            None => Ok(()),
        }
    }
}

fn sir_rates<T: Scalar>(sigma: &[T]) -> Result<(T, T)> {
    if sigma.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: sigma.len(),
        });
    }
    require_sigma_nonzero(sigma[1], "sigma2")?;
    let gamma = sigma[0] / sigma[1];
    if !(gamma > T::lit(crate::models::THETA_MARGIN)) {
        return Err(Error::ThetaOutOfBox {
            name: "gamma".into(),
            value: gamma.to_f64_lossy(),
        });
    }
    Ok((gamma, sigma[1]))
}

/// Recoverable combinations from `sigma = (beta gamma / k, beta / k)` and
/// the output and its derivative at time zero.
pub fn sir_combos<T: Scalar>(sigma: &[T], y0: T, ydot0: T) -> Result<PartialCombos<T>> {
    let (gamma, beta_over_k) = sir_rates(sigma)?;
    require_nonzero(y0).map_err(|_| Error::OutputNearZero { t: 0.0 })?;
    Ok(PartialCombos {
        gamma,
        beta_over_k,
        beta_s0: ydot0 / y0 + gamma,
        k_i0: y0,
    })
}

/// Combinations at time zero from output data at time `a >= 0`, moving
/// `(beta S, k I)` back with step `h`.
pub fn sir_combos_at<T: Scalar>(
    sigma: &[T],
    y_a: T,
    ydot_a: T,
    a: T,
    h: T,
) -> Result<PartialCombos<T>> {
    let at_a = sir_combos(sigma, y_a, ydot_a)
        .map_err(|e| match e {
            Error::OutputNearZero { .. } => Error::OutputNearZero { t: a.to_f64_lossy() },
            other => other,
        })?;
    if a <= T::zero() {
        return Ok(at_a);
    }
    let flow = SirCombosFlow {
        gamma: at_a.gamma,
        beta_over_k: at_a.beta_over_k,
    };
    let grid = GridSpec::new(h, a);
    let back = integrate_field_backward(&flow, &[at_a.beta_s0, at_a.k_i0], a, &grid)?;
    Ok(PartialCombos {
        beta_s0: back[0],
        k_i0: back[1],
        ..at_a
    })
}

impl<T: Scalar> ModelDef<T> for Sir {
    fn id(&self) -> ModelId {
        ModelId::Sir
    }

    fn state_names(&self) -> &'static [&'static str] {
        &["S", "I"]
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["k", "beta", "gamma"]
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
        let (k, beta, gamma) = (theta[0], theta[1], theta[2]);
        vec![vec![beta * gamma / k, beta / k]]
    }

    fn regressors(&self, _block: usize, outs: &[Jet<T>], _sigma: &[Vec<T>]) -> Result<Vec<Jet<T>>> {
        let g = kis_regressors(&outs[0], -T::one());
        Ok(vec![g[1].clone(), g[3].clone()])
    }

    fn rhs(&self, _block: usize, outs: &[Jet<T>], _sigma: &[Vec<T>]) -> Result<Jet<T>> {
        kis_rhs(&outs[0])
    }

    fn recover(&self, sigma: &[Vec<T>], _tol_sir: T) -> Result<Recovered<T>> {
        let (gamma, beta_over_k) = sir_rates(&sigma[0])?;
        Ok(Recovered::SirRates { gamma, beta_over_k })
    }

    fn state_from_outputs(&self, outs: &[Vec<T>], theta: &[T]) -> Result<State<T>> {
        let (y, yd) = (outs[0][0], outs[0][1]);
        require_nonzero(y)?;
        Ok(State(vec![(yd / y + theta[2]) / theta[1], y / theta[0]]))
    }

    fn chain_seed(&self, x: &[T], theta: &[T]) -> Option<Vec<Vec<T>>> {
        let y = theta[0] * x[1];
        Some(vec![vec![y, (theta[1] * x[0] - theta[2]) * y]])
    }

    fn equilibria(&self, theta: &[T]) -> Equilibria<T> {
        Equilibria {
            dfe: Some(State(vec![T::one(), T::zero()])),
            ee: None,
            r0: Some(theta[1] / theta[2]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case2_combos() {
        let sigma = [0.25 / 3.0, 2.5 / 3.0];
        let c = sir_combos::<f64>(&sigma, 0.03, 0.00375).unwrap();
        assert!((c.gamma - 0.1).abs() < 1e-15);
        assert!((c.beta_over_k - 2.5 / 3.0).abs() < 1e-15);
        assert!((c.beta_s0 - 0.225).abs() < 1e-15);
        assert!((c.k_i0 - 0.03).abs() < 1e-15);
    }

    #[test]
    fn zero_first_sigma_is_out_of_box() {
        assert!(matches!(
            sir_combos(&[0.0, 0.8], 0.03, 0.0),
            Err(Error::ThetaOutOfBox { .. })
        ));
        assert!(matches!(
            sir_combos(&[0.1, 0.0], 0.03, 0.0),
            Err(Error::SigmaDegenerate(_))
        ));
        assert!(matches!(
            sir_combos(&[0.1, 0.8], 0.0, 0.0),
            Err(Error::OutputNearZero { .. })
        ));
    }

    #[test]
    fn r_is_invariant_under_joint_scaling() {
        let a = <Sir as ModelDef<f64>>::r(&Sir, &[0.3, 0.25, 0.1]);
        let b = <Sir as ModelDef<f64>>::r(&Sir, &[0.6, 0.5, 0.1]);
        for (u, v) in a[0].iter().zip(&b[0]) {
            assert!((u - v).abs() < 1e-16);
        }
    }

    #[test]
    fn transformed_flow_matches_model() {
        let theta = [0.3, 0.25, 0.1];
        let x = [0.9, 0.1];
        let f = <Sir as ModelDef<f64>>::vector_field(&Sir, &x, &theta);
        let flow = SirCombosFlow {
            gamma: 0.1,
            beta_over_k: 0.25 / 0.3,
        };
        let g = flow.eval(&[0.25 * 0.9, 0.3 * 0.1]);
        assert!((g[0] - 0.25 * f[0]).abs() < 1e-16);
        assert!((g[1] - 0.3 * f[1]).abs() < 1e-16);
    }
}
