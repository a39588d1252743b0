//! Complex-coefficient polynomials in the Laplace variable.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use super::roots;
use crate::error::Result;

/// Sums whose magnitude falls below this fraction of the summands are
/// treated as exact cancellations.
const CANCEL_EPS: f64 = 64.0 * f64::EPSILON;

/// Polynomial with complex coefficients stored in ascending degree.
///
/// The representation is always normalized: the leading coefficient is
/// nonzero, and the zero polynomial is the empty coefficient list.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CPolynomial {
    coeffs: Vec<Complex64>,
}

impl CPolynomial {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs
            .last()
            .is_some_and(|c| *c == Complex64::new(0.0, 0.0))
        {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(Complex64::new(1.0, 0.0))
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(vec![c])
    }

    /// The polynomial `s`.
    pub fn s() -> Self {
        Self::from_real(&[0.0, 1.0])
    }

    /// `lead · ∏ (s − rᵢ)`.
    pub fn from_roots(roots: &[Complex64], lead: Complex64) -> Self {
        let mut coeffs = vec![lead];
        for r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
            for (i, c) in coeffs.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * r;
            }
            coeffs = next;
        }
        Self::new(coeffs)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> Complex64 {
        self.coeffs.last().copied().unwrap_or_default()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * s + c)
    }

    /// Value and derivative at `s` in a single Horner pass.
    pub fn eval_with_derivative(&self, s: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        let mut p = zero;
        let mut dp = zero;
        for c in self.coeffs.iter().rev() {
            dp = dp * s + p;
            p = p * s + c;
        }
        (p, dp)
    }

    /// `Σ |aᵢ| |s|ⁱ`, the natural scale for judging the size of `p(s)`.
    pub fn abs_eval(&self, s: Complex64) -> f64 {
        let r = s.norm();
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * r + c.norm())
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * i as f64)
                .collect(),
        )
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn conj(&self) -> Self {
        Self::new(self.coeffs.iter().map(|c| c.conj()).collect())
    }

    /// Multiplicity of the root at `s = 0`.
    pub fn trailing_zeros(&self) -> usize {
        self.coeffs
            .iter()
            .take_while(|c| **c == Complex64::new(0.0, 0.0))
            .count()
    }

    /// Divide by `sᵏ`; the caller guarantees the low `k` coefficients are zero.
    pub(crate) fn shift_down(&self, k: usize) -> Self {
        debug_assert!(k <= self.trailing_zeros() || self.is_zero());
        Self::new(self.coeffs.iter().skip(k).copied().collect())
    }

    /// Polynomial long division. Panics on a zero divisor.
    pub fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        let dn = divisor.degree().expect("polynomial division by zero");
        let lead = divisor.leading();
        let mut rem = self.coeffs.clone();
        if rem.len() <= dn {
            return (Self::zero(), self.clone());
        }
        let mut quot = vec![Complex64::new(0.0, 0.0); rem.len() - dn];
        for k in (0..quot.len()).rev() {
            let q = rem[k + dn] / lead;
            quot[k] = q;
            for (i, d) in divisor.coeffs.iter().enumerate() {
                rem[k + i] -= q * d;
            }
            rem[k + dn] = Complex64::new(0.0, 0.0);
        }
        rem.truncate(dn);
        (Self::new(quot), Self::new(rem))
    }

    /// True when every imaginary part is below `tol · (1 + |c|)`.
    pub fn is_real(&self, tol: f64) -> bool {
        self.coeffs
            .iter()
            .all(|c| c.im.abs() < tol * (1.0 + c.norm()))
    }

    pub fn real_part(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .map(|c| Complex64::new(c.re, 0.0))
                .collect(),
        )
    }

    /// Coefficient-wise comparison relative to the larger of the two scales.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let scale = self.max_abs().max(other.max_abs()).max(f64::MIN_POSITIVE);
        let n = self.coeffs.len().max(other.coeffs.len());
        (0..n).all(|i| {
            let a = self.coeffs.get(i).copied().unwrap_or_default();
            let b = other.coeffs.get(i).copied().unwrap_or_default();
            (a - b).norm() <= tol * scale
        })
    }

    /// Drop leading coefficients smaller than `rel_tol` times the largest one.
    pub fn chop_leading(&self, rel_tol: f64) -> Self {
        let floor = rel_tol * self.max_abs();
        let mut coeffs = self.coeffs.clone();
        while coeffs.last().is_some_and(|c| c.norm() <= floor) {
            coeffs.pop();
        }
        Self::new(coeffs)
    }

    /// All roots with multiplicity; see [`roots::poly_roots`].
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        roots::poly_roots(self)
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let zero = Complex64::new(0.0, 0.0);
        let coeffs = (0..n)
            .map(|i| {
                let a = self.coeffs.get(i).copied().unwrap_or(zero);
                let b = other.coeffs.get(i).copied().unwrap_or(zero) * sign;
                let sum = a + b;
                if sum.norm() <= CANCEL_EPS * (a.norm() + b.norm()) {
                    zero
                } else {
                    sum
                }
            })
            .collect();
        Self::new(coeffs)
    }
}

impl Add for &CPolynomial {
    type Output = CPolynomial;
    fn add(self, rhs: Self) -> CPolynomial {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &CPolynomial {
    type Output = CPolynomial;
    fn sub(self, rhs: Self) -> CPolynomial {
        self.combine(rhs, -1.0)
    }
}

impl Mul for &CPolynomial {
    type Output = CPolynomial;
    fn mul(self, rhs: Self) -> CPolynomial {
        if self.is_zero() || rhs.is_zero() {
            return CPolynomial::zero();
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        CPolynomial::new(out)
    }
}

impl Neg for &CPolynomial {
    type Output = CPolynomial;
    fn neg(self) -> CPolynomial {
        CPolynomial::new(self.coeffs.iter().map(|c| -c).collect())
    }
}

macro_rules! forward_owned {
    ($tr:ident, $method:ident) => {
        impl $tr for CPolynomial {
            type Output = CPolynomial;
            fn $method(self, rhs: Self) -> CPolynomial {
                (&self).$method(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl fmt::Display for CPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, c)| c.norm() != 0.0)
            .map(|(i, c)| {
                let c = if c.im == 0.0 {
                    format!("{}", c.re)
                } else {
                    format!("({})", c)
                };
                match i {
                    0 => c,
                    1 => format!("{c}·s"),
                    _ => format!("{c}·s^{i}"),
                }
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn normalization_strips_trailing_zeros() {
        let p = CPolynomial::from_real(&[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), Some(1));
        assert!(CPolynomial::from_real(&[0.0, 0.0]).is_zero());
        assert_eq!(CPolynomial::zero().degree(), None);
    }

    #[test]
    fn from_roots_expands_product() {
        let p = CPolynomial::from_roots(&[c(-1.0, 0.0), c(-1.0, 0.0)], c(1.0, 0.0));
        assert_eq!(p, CPolynomial::from_real(&[1.0, 2.0, 1.0]));
    }

    #[test]
    fn conjugate_sum_cancels_exactly() {
        let a = CPolynomial::new(vec![c(0.0, 1.0), c(1.0, 0.0)]);
        let b = CPolynomial::new(vec![c(0.0, -1.0), c(1.0, 0.0)]);
        let sum = &a + &b;
        assert_eq!(sum, CPolynomial::from_real(&[0.0, 2.0]));
        assert!(sum.is_real(1e-12));
        assert!((&a - &a).is_zero());
    }

    #[test]
    fn div_rem_reconstructs() {
        let a = CPolynomial::from_real(&[3.0, -2.0, 0.5, 1.0]);
        let d = CPolynomial::new(vec![c(1.0, 1.0), c(2.0, 0.0)]);
        let (q, r) = a.div_rem(&d);
        let back = &(&q * &d) + &r;
        assert!(back.approx_eq(&a, 1e-14));
        assert!(r.degree().unwrap_or(0) < 1);
    }

    #[test]
    fn horner_with_derivative() {
        let p = CPolynomial::from_real(&[1.0, 0.0, 3.0]);
        let (v, dv) = p.eval_with_derivative(c(2.0, 1.0));
        assert!((v - p.eval(c(2.0, 1.0))).norm() < 1e-14);
        assert!((dv - p.derivative().eval(c(2.0, 1.0))).norm() < 1e-14);
    }
}
