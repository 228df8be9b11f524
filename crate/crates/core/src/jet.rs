//! Truncated Taylor expansions of a scalar signal about a fixed time.
//!
//! A [`Jet`] stores normalized Taylor coefficients `c_k = y^(k)(t)/k!`.
//! Arithmetic truncates to the shorter operand, so every coefficient a
//! result exposes is exact given the coefficients of its inputs (Leibniz
//! rule for products, the usual recurrence for quotients). This is how the
//! crate obtains time derivatives of regressor functionals and Taylor
//! expansions of trajectories without symbolic differentiation.

use std::ops::{Add, Mul, Neg, Sub};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet<T> {
    coeffs: Vec<T>,
}

fn factorial<T: Scalar>(k: usize) -> T {
    (1..=k).fold(T::one(), |acc, i| acc * T::from_usize_lossy(i))
}

impl<T: Scalar> Jet<T> {
    pub fn from_coeffs(coeffs: Vec<T>) -> Self {
        Jet { coeffs }
    }

    /// Builds a jet from plain derivatives `[y, y', y'', ...]`.
    pub fn from_derivatives(derivs: &[T]) -> Self {
        let coeffs = derivs
            .iter()
            .enumerate()
            .map(|(k, &d)| d / factorial::<T>(k))
            .collect();
        Jet { coeffs }
    }

    pub fn constant(c: T, len: usize) -> Self {
        let mut coeffs = vec![T::zero(); len];
        if len > 0 {
            coeffs[0] = c;
        }
        Jet { coeffs }
    }

    /// Number of known coefficients (the highest known derivative is `len - 1`).
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn value(&self) -> T {
        self.coeffs[0]
    }

    /// The `k`-th time derivative.
    pub fn derivative(&self, k: usize) -> T {
        self.coeffs[k] * factorial::<T>(k)
    }

    pub fn derivatives(&self) -> Vec<T> {
        (0..self.len()).map(|k| self.derivative(k)).collect()
    }

    /// Jet of the time derivative; one coefficient shorter.
    pub fn diff(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c * T::from_usize_lossy(k))
            .collect();
        Jet { coeffs }
    }

    pub fn truncate(mut self, len: usize) -> Self {
        self.coeffs.truncate(len);
        self
    }

    pub fn scale(&self, c: T) -> Self {
        Jet {
            coeffs: self.coeffs.iter().map(|&a| a * c).collect(),
        }
    }

    pub fn offset(&self, c: T) -> Self {
        let mut out = self.clone();
        if let Some(first) = out.coeffs.first_mut() {
            *first += c;
        }
        out
    }

    pub fn square(&self) -> Self {
        self.clone() * self.clone()
    }

    /// Quotient `self / rhs`. The caller guarantees `rhs.value() != 0`.
    pub fn div(&self, rhs: &Self) -> Self {
        let n = self.len().min(rhs.len());
        let b0 = rhs.coeffs[0];
        let mut out: Vec<T> = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = self.coeffs[k];
            for j in 1..=k {
                acc -= rhs.coeffs[j] * out[k - j];
            }
            out.push(acc / b0);
        }
        Jet { coeffs: out }
    }
}

impl<T: Scalar> Add for Jet<T> {
    type Output = Jet<T>;
    fn add(self, rhs: Self) -> Self {
        let n = self.len().min(rhs.len());
        Jet {
            coeffs: (0..n).map(|k| self.coeffs[k] + rhs.coeffs[k]).collect(),
        }
    }
}

impl<T: Scalar> Sub for Jet<T> {
    type Output = Jet<T>;
    fn sub(self, rhs: Self) -> Self {
        let n = self.len().min(rhs.len());
        Jet {
            coeffs: (0..n).map(|k| self.coeffs[k] - rhs.coeffs[k]).collect(),
        }
    }
}

impl<T: Scalar> Mul for Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: Self) -> Self {
        let n = self.len().min(rhs.len());
        let coeffs = (0..n)
            .map(|k| (0..=k).map(|j| self.coeffs[j] * rhs.coeffs[k - j]).sum())
            .collect();
        Jet { coeffs }
    }
}

impl<T: Scalar> Neg for Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Self {
        Jet {
            coeffs: self.coeffs.into_iter().map(|c| -c).collect(),
        }
    }
}

/// Ring-like values a vector field can be evaluated on: plain scalars, or
/// jets when expanding a trajectory in time.
pub trait Signal<T: Scalar>:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn scale(&self, c: T) -> Self;
    fn offset(&self, c: T) -> Self;
}

impl<T: Scalar> Signal<T> for T {
    #[inline]
    fn scale(&self, c: T) -> Self {
        *self * c
    }
    #[inline]
    fn offset(&self, c: T) -> Self {
        *self + c
    }
}

impl<T: Scalar> Signal<T> for Jet<T> {
    fn scale(&self, c: T) -> Self {
        Jet::scale(self, c)
    }
    fn offset(&self, c: T) -> Self {
        Jet::offset(self, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_jet(t: f64, n: usize) -> Jet<f64> {
        Jet::from_derivatives(&vec![t.exp(); n])
    }

    #[test]
    fn product_follows_leibniz() {
        // y = t^2 at t=1: (1, 2, 2); y*y = t^4: (1, 4, 12, 24)
        let y = Jet::from_derivatives(&[1.0, 2.0, 2.0, 0.0]);
        let p = y.clone() * y;
        let d = p.derivatives();
        assert_eq!(d, vec![1.0, 4.0, 12.0, 24.0]);
    }

    #[test]
    fn quotient_inverts_product() {
        let a = exp_jet(0.3, 6);
        let b = Jet::from_derivatives(&[2.0, -1.0, 0.5, 0.25, 3.0, 1.0]);
        let q = (a.clone() * b.clone()).div(&b);
        for k in 0..6 {
            assert!((q.derivative(k) - a.derivative(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn diff_shifts_derivatives() {
        let y = Jet::from_derivatives(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(y.diff().derivatives(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn truncation_to_shorter_operand() {
        let a = Jet::from_derivatives(&[1.0, 1.0, 1.0]);
        let b = Jet::from_derivatives(&[1.0, 1.0]);
        assert_eq!((a.clone() + b.clone()).len(), 2);
        assert_eq!((a * b).len(), 2);
    }
}
