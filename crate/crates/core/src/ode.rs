//! Fixed-step classical Runge-Kutta integration of autonomous systems,
//! forward and backward in time, with invariant-set monitoring.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::models::{check_theta, ModelDef, ModelId, ParamVector};
use crate::scalar::Scalar;

/// Negative entries at or above `-CLAMP_TOL` are treated as roundoff and set to zero.
pub const CLAMP_TOL: f64 = 1e-12;
/// Largest tolerated excursion outside the invariant set.
pub const INVARIANT_TOL: f64 = 1e-6;
pub const MAX_STEPS: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct State<T>(pub Vec<T>);

impl<T: Scalar> State<T> {
    pub fn new(values: Vec<T>) -> Self {
        State(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for State<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T: Scalar> From<Vec<T>> for State<T> {
    fn from(v: Vec<T>) -> Self {
        State(v)
    }
}

/// Uniform time grid `t0, t0 + h, ..., t_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub t0: T,
    pub h: T,
    pub t_max: T,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(h: T, t_max: T) -> Self {
        GridSpec {
            t0: T::zero(),
            h,
            t_max,
        }
    }

    pub fn with_start(t0: T, h: T, t_max: T) -> Self {
        GridSpec { t0, h, t_max }
    }

    /// Number of steps, validating the grid invariants.
    pub fn steps(&self) -> Result<usize> {
        if !(self.h > T::zero()) || !self.h.is_finite() {
            return Err(Error::InvalidGrid(format!("step size h={} must be positive", self.h)));
        }
        if !(self.t_max > self.t0) {
            return Err(Error::InvalidGrid(format!(
                "t_max={} must exceed t0={}",
                self.t_max, self.t0
            )));
        }
        let ratio = ((self.t_max - self.t0) / self.h).to_f64_lossy();
        if ratio > MAX_STEPS as f64 {
            return Err(Error::StepCountOverflow {
                steps: ratio,
                limit: MAX_STEPS,
            });
        }
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "(t_max - t0)/h = {ratio} is not an integer"
            )));
        }
        Ok(n as usize)
    }

    pub fn times(&self) -> Result<Vec<T>> {
        let n = self.steps()?;
        Ok((0..=n)
            .map(|i| self.t0 + T::from_usize_lossy(i) * self.h)
            .collect())
    }
}

/// Autonomous vector field with an invariant-set predicate.
pub trait VectorField<T: Scalar> {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[T]) -> Vec<T>;
    /// `Err(detail)` when `x` lies outside the invariant set by more than `tol`.
    fn check_invariant(&self, _x: &[T], _tol: T) -> std::result::Result<(), String> {
        Ok(())
    }
}

/// A catalog model with its parameter vector fixed.
pub struct ModelFlow<'a, T> {
    pub model: &'a dyn ModelDef<T>,
    pub theta: &'a [T],
}

impl<T: Scalar> VectorField<T> for ModelFlow<'_, T> {
    fn dim(&self) -> usize {
        self.model.state_dim()
    }
    fn eval(&self, x: &[T]) -> Vec<T> {
        self.model.vector_field(x, self.theta)
    }
    fn check_invariant(&self, x: &[T], tol: T) -> std::result::Result<(), String> {
        self.model.omega_check(x, self.theta, tol)
    }
}

struct Reversed<'a, T>(&'a dyn VectorField<T>);

impl<T: Scalar> VectorField<T> for Reversed<'_, T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[T]) -> Vec<T> {
        self.0.eval(x).into_iter().map(|v| -v).collect()
    }
    fn check_invariant(&self, x: &[T], tol: T) -> std::result::Result<(), String> {
        self.0.check_invariant(x, tol)
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<T: Scalar>(field: &dyn VectorField<T>, x: &[T], h: T) -> Vec<T> {
    let half = h / T::lit(2.0);
    let axpy = |a: &[T], s: T, b: &[T]| -> Vec<T> {
        a.iter().zip(b).map(|(&u, &v)| u + s * v).collect()
    };
    let k1 = field.eval(x);
    let k2 = field.eval(&axpy(x, half, &k1));
    let k3 = field.eval(&axpy(x, half, &k2));
    let k4 = field.eval(&axpy(x, h, &k3));
    let sixth = h / T::lit(6.0);
    (0..x.len())
        .map(|i| x[i] + sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]))
        .collect()
}

fn sanitize<T: Scalar>(
    field: &dyn VectorField<T>,
    x: &mut [T],
    t: T,
) -> Result<()> {
    let clamp = T::lit(CLAMP_TOL);
    for v in x.iter_mut() {
        if !v.is_finite() {
            return Err(Error::IntegrationFailure(format!(
                "non-finite state at t={t}"
            )));
        }
        if *v < T::zero() && *v >= -clamp {
            *v = T::zero();
        }
    }
    field
        .check_invariant(x, T::lit(INVARIANT_TOL))
        .map_err(|detail| Error::InvariantViolation {
            t: t.to_f64_lossy(),
            detail,
        })
}

/// Integrates `field` from `x0` across `grid`, returning one state per grid point.
pub fn integrate_field<T: Scalar>(
    field: &dyn VectorField<T>,
    x0: &[T],
    grid: &GridSpec<T>,
) -> Result<(Vec<T>, Vec<State<T>>)> {
    if x0.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            found: x0.len(),
        });
    }
    let times = grid.times()?;
    let mut x = x0.to_vec();
    sanitize(field, &mut x, grid.t0)?;
    let mut states = Vec::with_capacity(times.len());
    states.push(State(x.clone()));
    for &t in &times[1..] {
        x = rk4_step(field, &x, grid.h);
        sanitize(field, &mut x, t)?;
        states.push(State(x.clone()));
    }
    Ok((times, states))
}

/// Integrates the time-reversed field from `x_at_t` (the state at `t_from`)
/// back to `grid.t0`, with step `grid.h`.
pub fn integrate_field_backward<T: Scalar>(
    field: &dyn VectorField<T>,
    x_at_t: &[T],
    t_from: T,
    grid: &GridSpec<T>,
) -> Result<State<T>> {
    if !(t_from > grid.t0) {
        return Err(Error::InvalidGrid(format!(
            "backward start t={t_from} must exceed t0={}",
            grid.t0
        )));
    }
    let reverse = Reversed(field);
    let back_grid = GridSpec::with_start(grid.t0, grid.h, t_from);
    let (times, states) = integrate_field(&reverse, x_at_t, &back_grid)?;
    debug_assert_eq!(times.len(), states.len());
    Ok(states.into_iter().last().expect("grid has at least two points"))
}

/// Model trajectory on an explicit grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub model_id: ModelId,
    pub theta: ParamVector<T>,
    pub times: Vec<T>,
    pub states: Vec<State<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn step(&self) -> T {
        self.times[1] - self.times[0]
    }

    pub fn last_state(&self) -> &State<T> {
        self.states.last().expect("non-empty trajectory")
    }
}

/// Forward RK4 solution of `model` with parameters `theta` from `x0` on `grid`.
pub fn integrate<T: Scalar>(
    model: &dyn ModelDef<T>,
    theta: &ParamVector<T>,
    x0: &State<T>,
    grid: &GridSpec<T>,
) -> Result<Trajectory<T>> {
    check_theta(model, theta)?;
    let flow = ModelFlow { model, theta };
    let (times, states) = integrate_field(&flow, x0, grid)?;
    Ok(Trajectory {
        model_id: model.id(),
        theta: theta.clone(),
        times,
        states,
    })
}

/// State at `grid.t0` reached by integrating the model backwards from
/// `x_at_t` at time `t_from`.
pub fn integrate_backward<T: Scalar>(
    model: &dyn ModelDef<T>,
    theta: &ParamVector<T>,
    x_at_t: &State<T>,
    t_from: T,
    grid: &GridSpec<T>,
) -> Result<State<T>> {
    if x_at_t.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.state_dim(),
            found: x_at_t.len(),
        });
    }
    if !crate::scalar::all_finite(x_at_t) {
        return Err(Error::IntegrationFailure("non-finite start state".into()));
    }
    check_theta(model, theta)?;
    let flow = ModelFlow { model, theta };
    integrate_field_backward(&flow, x_at_t, t_from, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl VectorField<f64> for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, x: &[f64]) -> Vec<f64> {
            vec![-x[0]]
        }
    }

    #[test]
    fn grid_validation() {
        assert_eq!(GridSpec::new(0.03125, 5.0).steps().unwrap(), 160);
        assert!(matches!(
            GridSpec::new(0.3, 1.0).steps(),
            Err(Error::InvalidGrid(_))
        ));
        assert!(matches!(
            GridSpec::new(-0.1, 1.0).steps(),
            Err(Error::InvalidGrid(_))
        ));
        assert!(matches!(
            GridSpec::new(1e-9, 1.0).steps(),
            Err(Error::StepCountOverflow { .. })
        ));
        let times = GridSpec::with_start(1.0, 0.5, 3.0).times().unwrap();
        assert_eq!(times, vec![1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn rk4_single_step_matches_series() {
        // One RK4 step of x' = -x reproduces the degree-4 Taylor polynomial.
        let h: f64 = 0.1;
        let x1 = rk4_step(&Decay, &[1.0], h)[0];
        let taylor = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((x1 - taylor).abs() < 1e-15);
    }

    #[test]
    fn backward_undoes_forward() {
        let grid = GridSpec::new(0.03125, 2.0);
        let (_, states) = integrate_field(&Decay, &[1.0], &grid).unwrap();
        let end = states.last().unwrap();
        let back = integrate_field_backward(&Decay, end, 2.0, &grid).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn dimension_checked() {
        let grid = GridSpec::new(0.5, 1.0);
        assert!(matches!(
            integrate_field(&Decay, &[1.0, 2.0], &grid),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }
}
