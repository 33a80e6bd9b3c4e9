//! Dense real polynomials in a single variable with cached derivatives.

use serde::{Deserialize, Serialize};

/// Number of derivatives (beyond the value) kept by [`Polynomial`].
pub const MAX_DERIV: usize = 4;

/// `sum_i coeffs[i] x^i`, with coefficient tables for the first four
/// derivatives precomputed so evaluation is a handful of Horner passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
    derived: [Vec<f64>; MAX_DERIV],
}

impl From<Vec<f64>> for Polynomial {
    fn from(coeffs: Vec<f64>) -> Self {
        Polynomial::new(coeffs)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut derived: [Vec<f64>; MAX_DERIV] = Default::default();
        let mut prev = coeffs.clone();
        for slot in derived.iter_mut() {
            let next: Vec<f64> = prev.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect();
            *slot = next.clone();
            prev = next;
        }
        Polynomial { coeffs, derived }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    #[inline]
    fn horner(c: &[f64], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        Self::horner(&self.coeffs, x)
    }

    /// Value followed by derivatives 1 through 4.
    #[inline]
    pub fn eval_derivs(&self, x: f64) -> [f64; MAX_DERIV + 1] {
        let mut out = [0.0; MAX_DERIV + 1];
        out[0] = self.eval(x);
        for (k, c) in self.derived.iter().enumerate() {
            out[k + 1] = Self::horner(c, x);
        }
        out
    }

    /// Compensated Horner evaluation of derivative `k` (0 = value).
    ///
    /// Error-free transformations keep the rounding error of the sum near
    /// the level of a twice-as-precise evaluation, which matters when
    /// large alternating coefficients nearly cancel.
    pub fn eval_derivative_compensated(&self, k: usize, x: f64) -> f64 {
        let c = if k == 0 { &self.coeffs } else { &self.derived[k - 1] };
        let mut s = 0.0f64;
        let mut err = 0.0f64;
        for &ci in c.iter().rev() {
            let (p, pe) = two_prod(s, x);
            let (sum, se) = two_sum(p, ci);
            s = sum;
            err = err * x + (pe + se);
        }
        s + err
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}
