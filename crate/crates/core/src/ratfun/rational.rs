//! Rational functions of `s` with complex coefficients.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use super::poly::CPolynomial;
use super::roots::sort_roots;
use crate::error::{Error, Result};

/// Default relative guard used by [`RationalFunction::eval`].
pub const DEFAULT_POLE_GUARD: f64 = 1e-9;

/// Ratio of two polynomials, kept in canonical form.
///
/// Canonical form: monic denominator, no common power of `s` between
/// numerator and denominator, and `0/1` for the zero function. Any other
/// common factor survives until [`RationalFunction::cancel_common`] is called
/// explicitly, which reports what it removed.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalFunction {
    num: CPolynomial,
    den: CPolynomial,
}

/// Outcome of [`RationalFunction::realify_check`].
#[derive(Clone, Debug)]
pub struct Realified {
    pub is_real: bool,
    pub realized: RationalFunction,
}

impl RationalFunction {
    pub fn new(num: CPolynomial, den: CPolynomial) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Self::canonical(num, den))
    }

    fn canonical(num: CPolynomial, den: CPolynomial) -> Self {
        if num.is_zero() {
            return Self::zero();
        }
        let k = num.trailing_zeros().min(den.trailing_zeros());
        let (num, den) = (num.shift_down(k), den.shift_down(k));
        let lead = den.leading().inv();
        let mut den = den.scale(lead);
        // Pin the leading coefficient exactly so equal functions compare equal.
        let n = den.degree().unwrap_or(0);
        let mut dc = den.coeffs().to_vec();
        dc[n] = Complex64::new(1.0, 0.0);
        den = CPolynomial::new(dc);
        Self {
            num: num.scale(lead),
            den,
        }
    }

    pub fn from_real(num: &[f64], den: &[f64]) -> Result<Self> {
        Self::new(CPolynomial::from_real(num), CPolynomial::from_real(den))
    }

    pub fn from_poly(p: CPolynomial) -> Self {
        Self::canonical(p, CPolynomial::one())
    }

    pub fn zero() -> Self {
        Self {
            num: CPolynomial::zero(),
            den: CPolynomial::one(),
        }
    }

    pub fn one() -> Self {
        Self::constant(Complex64::new(1.0, 0.0))
    }

    pub fn constant(c: Complex64) -> Self {
        Self::from_poly(CPolynomial::constant(c))
    }

    pub fn real(c: f64) -> Self {
        Self::constant(Complex64::new(c, 0.0))
    }

    /// The identity map `s`.
    pub fn s() -> Self {
        Self::from_poly(CPolynomial::s())
    }

    pub fn num(&self) -> &CPolynomial {
        &self.num
    }

    pub fn den(&self) -> &CPolynomial {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    /// Relative degree `deg(den) − deg(num)`; `None` for the zero function.
    pub fn relative_degree(&self) -> Option<i64> {
        let n = self.num.degree()? as i64;
        Some(self.den.degree().unwrap_or(0) as i64 - n)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        self.den.roots()
    }

    pub fn zeros(&self) -> Result<Vec<Complex64>> {
        if self.num.is_zero() {
            return Ok(Vec::new());
        }
        self.num.roots()
    }

    /// Evaluates `num(s)/den(s)` with the default pole guard.
    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        self.eval_guarded(s, DEFAULT_POLE_GUARD)
    }

    /// Evaluates `num(s)/den(s)`, refusing points within `guard · max(1, |s|)`
    /// of a pole.
    pub fn eval_guarded(&self, s: Complex64, guard: f64) -> Result<Complex64> {
        let d = self.den.eval(s);
        let scale = self.den.abs_eval(s);
        if d.norm() <= guard * scale.max(f64::MIN_POSITIVE) {
            // Cheap test tripped; confirm against the actual pole locations.
            let radius = guard * s.norm().max(1.0);
            if let Some(pole) = self.poles()?.into_iter().find(|p| (p - s).norm() <= radius) {
                return Err(Error::NearPole { s, pole });
            }
            if d.norm() == 0.0 {
                return Err(Error::NearPole { s, pole: s });
            }
        }
        Ok(self.num.eval(s) / d)
    }

    /// Limit as `|s| → ∞`; `None` when the function is improper.
    pub fn limit_at_infinity(&self) -> Option<Complex64> {
        let zero = Complex64::new(0.0, 0.0);
        match self.relative_degree() {
            None => Some(zero),
            Some(r) if r > 0 => Some(zero),
            Some(0) => Some(self.num.leading() / self.den.leading()),
            Some(_) => None,
        }
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self::canonical(self.num.scale(k), self.den.clone())
    }

    pub fn scale_real(&self, k: f64) -> Self {
        self.scale(Complex64::new(k, 0.0))
    }

    pub fn conj(&self) -> Self {
        Self::canonical(self.num.conj(), self.den.conj())
    }

    pub fn inv(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Self::canonical(self.den.clone(), self.num.clone()))
    }

    pub fn div(&self, rhs: &Self) -> Result<Self> {
        Ok(self * &rhs.inv()?)
    }

    /// Exact polynomial addition/subtraction. Shares a denominator when one
    /// divides the other, otherwise cross-multiplies.
    fn combine(&self, rhs: &Self, sign: f64) -> Self {
        let k = Complex64::new(sign, 0.0);
        if rhs.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return rhs.scale(k);
        }
        if self.den == rhs.den {
            return Self::canonical(&self.num + &rhs.num.scale(k), self.den.clone());
        }
        if let Some(q) = exact_quotient(&self.den, &rhs.den) {
            // rhs.den | self.den
            return Self::canonical(&self.num + &(&rhs.num * &q).scale(k), self.den.clone());
        }
        if let Some(q) = exact_quotient(&rhs.den, &self.den) {
            return Self::canonical(&(&self.num * &q) + &rhs.num.scale(k), rhs.den.clone());
        }
        let num = &(&self.num * &rhs.den) + &(&rhs.num * &self.den).scale(k);
        Self::canonical(num, &self.den * &rhs.den)
    }

    /// Imaginary-part test on every coefficient of the canonical form.
    pub fn realify_check(&self, tol: f64) -> Realified {
        let is_real = self.num.is_real(tol) && self.den.is_real(tol);
        let realized = if is_real {
            Self::canonical(self.num.real_part(), self.den.real_part())
        } else {
            self.clone()
        };
        Realified { is_real, realized }
    }

    /// Drops imaginary noise when the function is real within `tol`.
    pub fn realified(self, tol: f64) -> Self {
        self.realify_check(tol).realized
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.num.is_real(tol) && self.den.is_real(tol)
    }

    /// Equality of the represented functions: `a.num·b.den ≈ b.num·a.den`
    /// coefficient-wise, relative to the larger coefficient scale.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let lhs = &self.num * &other.den;
        let rhs = &other.num * &self.den;
        lhs.approx_eq(&rhs, tol)
    }

    /// True when the numerator is negligible against the denominator scale.
    pub fn is_negligible(&self, tol: f64) -> bool {
        self.num.max_abs() <= tol * self.den.max_abs()
    }

    /// Removes numerator/denominator root pairs closer than
    /// `tol · max(1, |r|)` and returns the reduced function together with the
    /// cancelled roots. Each cancellation is logged.
    pub fn cancel_common(&self, tol: f64) -> Result<(Self, Vec<Complex64>)> {
        if self.is_zero() || self.den.degree() == Some(0) || self.num.degree() == Some(0) {
            return Ok((self.clone(), Vec::new()));
        }
        let mut nz = self.num.roots()?;
        let mut dz = self.den.roots()?;
        let mut cancelled = Vec::new();
        let mut i = 0;
        while i < nz.len() {
            let r = nz[i];
            let best = dz
                .iter()
                .enumerate()
                .map(|(k, p)| (k, (p - r).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((k, d)) if d <= tol * r.norm().max(1.0) => {
                    let p = dz.remove(k);
                    let mid = (p + r) * 0.5;
                    log::info!("cancelled common factor (s − {mid}) (num root {r}, den root {p})");
                    cancelled.push(mid);
                    nz.remove(i);
                }
                _ => i += 1,
            }
        }
        if cancelled.is_empty() {
            return Ok((self.clone(), cancelled));
        }
        sort_roots(&mut cancelled);
        let was_real = self.is_real(1e-12);
        let num = CPolynomial::from_roots(&nz, self.num.leading());
        let den = CPolynomial::from_roots(&dz, self.den.leading());
        let mut reduced = Self::canonical(num, den);
        if was_real {
            reduced = reduced.realified(1e-9);
        }
        Ok((reduced, cancelled))
    }
}

/// `a / b` when `b` divides `a` to working precision.
fn exact_quotient(a: &CPolynomial, b: &CPolynomial) -> Option<CPolynomial> {
    let (da, db) = (a.degree()?, b.degree()?);
    if db == 0 || da <= db {
        return None;
    }
    let (q, r) = a.div_rem(b);
    (r.max_abs() <= 1e-10 * a.max_abs()).then_some(q)
}

impl Add for &RationalFunction {
    type Output = RationalFunction;
    fn add(self, rhs: Self) -> RationalFunction {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &RationalFunction {
    type Output = RationalFunction;
    fn sub(self, rhs: Self) -> RationalFunction {
        self.combine(rhs, -1.0)
    }
}

impl Mul for &RationalFunction {
    type Output = RationalFunction;
    fn mul(self, rhs: Self) -> RationalFunction {
        if self.is_zero() || rhs.is_zero() {
            return RationalFunction::zero();
        }
        RationalFunction::canonical(&self.num * &rhs.num, &self.den * &rhs.den)
    }
}

impl Neg for &RationalFunction {
    type Output = RationalFunction;
    fn neg(self) -> RationalFunction {
        self.scale_real(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $method:ident) => {
        impl $tr for RationalFunction {
            type Output = RationalFunction;
            fn $method(self, rhs: Self) -> RationalFunction {
                (&self).$method(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for RationalFunction {
    type Output = RationalFunction;
    fn neg(self) -> RationalFunction {
        -&self
    }
}

impl fmt::Display for RationalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) / ({})", self.num, self.den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn inv_s() -> RationalFunction {
        RationalFunction::from_real(&[1.0], &[0.0, 1.0]).unwrap()
    }

    #[test]
    fn same_denominator_add() {
        let sum = &inv_s() + &inv_s();
        assert_eq!(
            sum,
            RationalFunction::from_real(&[2.0], &[0.0, 1.0]).unwrap()
        );
    }

    #[test]
    fn product_cancels_after_explicit_request() {
        let a = RationalFunction::from_real(&[0.0, 1.0], &[1.0, 1.0]).unwrap();
        let b = RationalFunction::from_real(&[1.0, 1.0], &[0.0, 1.0]).unwrap();
        let prod = &a * &b;
        // The power of s goes away on its own; (s+1) needs root matching.
        assert_eq!(prod.den().degree(), Some(1));
        let (reduced, cancelled) = prod.cancel_common(1e-9).unwrap();
        assert_eq!(cancelled.len(), 1);
        assert!((cancelled[0] - c(-1.0, 0.0)).norm() < 1e-12);
        assert!(reduced.approx_eq(&RationalFunction::one(), 1e-12));
        assert_eq!(reduced.num().degree(), Some(0));
    }

    #[test]
    fn current_controller_assembly() {
        let h_i = &RationalFunction::real(0.6) + &inv_s().scale_real(15.0);
        let expected = RationalFunction::from_real(&[15.0, 0.6], &[0.0, 1.0]).unwrap();
        assert_eq!(h_i, expected);
    }

    #[test]
    fn division_by_zero_function() {
        assert_eq!(
            inv_s().div(&RationalFunction::zero()),
            Err(Error::DivisionByZero)
        );
        assert_eq!(
            RationalFunction::from_real(&[1.0], &[0.0]),
            Err(Error::DivisionByZero)
        );
    }

    #[test]
    fn dc_gain_of_lowpass() {
        let t_ff = 1.0 / (2.0 * std::f64::consts::PI * 100.0);
        let g = RationalFunction::from_real(&[1.0], &[1.0, t_ff]).unwrap();
        assert!((g.eval(c(0.0, 0.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn proper_part_limit() {
        let h_i = RationalFunction::from_real(&[15.0, 0.6], &[0.0, 1.0]).unwrap();
        assert_eq!(h_i.limit_at_infinity(), Some(c(0.6, 0.0)));
        assert_eq!(RationalFunction::s().limit_at_infinity(), None);
        assert_eq!(inv_s().limit_at_infinity(), Some(c(0.0, 0.0)));
    }

    #[test]
    fn rotating_inductor_admittance_matches_hand_division() {
        let w0 = 2.0 * std::f64::consts::PI * 50.0;
        let l = 0.2 / w0;
        // 1/(L(s + jω₀)) assembled from polynomials.
        let f = RationalFunction::new(
            CPolynomial::one(),
            CPolynomial::new(vec![c(0.0, l * w0), c(l, 0.0)]),
        )
        .unwrap();
        let s = c(0.0, 2.0 * std::f64::consts::PI * 58.0);
        // Hand oracle: 1/(L·j(ω + ω₀)) = −j / (L(ω + ω₀)).
        let expected = c(0.0, -1.0 / (l * (s.im + w0)));
        let got = f.eval(s).unwrap();
        assert!((got - expected).norm() <= 1e-12 * expected.norm());
    }

    #[test]
    fn near_pole_is_reported() {
        let f = RationalFunction::from_real(&[1.0], &[2.0, 1.0]).unwrap();
        match f.eval(c(-2.0, 1e-12)) {
            Err(Error::NearPole { pole, .. }) => assert!((pole - c(-2.0, 0.0)).norm() < 1e-9),
            other => panic!("expected near-pole error, got {other:?}"),
        }
        assert!(f.eval(c(-2.0, 1e-3)).is_ok());
    }

    #[test]
    fn realify() {
        let a = RationalFunction::from_poly(CPolynomial::new(vec![c(0.0, 1.0), c(1.0, 0.0)]));
        let b = RationalFunction::from_poly(CPolynomial::new(vec![c(0.0, -1.0), c(1.0, 0.0)]));
        let r = (&a + &b).realify_check(1e-9);
        assert!(r.is_real);
        assert_eq!(
            r.realized,
            RationalFunction::from_real(&[0.0, 2.0], &[1.0]).unwrap()
        );
        assert!(!a.realify_check(1e-9).is_real);
    }

    #[test]
    fn approx_eq_ignores_uncancelled_factors() {
        let a = RationalFunction::from_real(&[1.0], &[1.0, 1.0]).unwrap();
        let b = RationalFunction::from_real(&[2.0, 1.0], &[2.0, 3.0, 1.0]).unwrap();
        assert!(a.approx_eq(&b, 1e-12));
        assert!(!a.approx_eq(&RationalFunction::one(), 1e-6));
    }
}
