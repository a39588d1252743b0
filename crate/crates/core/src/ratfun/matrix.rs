//! 2×2 matrices of rational functions and the sequence similarity transform.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use super::rational::RationalFunction;
use crate::error::{Error, Result};

/// Default relative coefficient tolerance for structure verification.
pub const DEFAULT_COEFF_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StructureTag {
    /// Off-diagonal entries are the zero function.
    Diagonal,
    /// `[[a, −b], [b, a]]`.
    RotationLike,
    General,
}

/// Admittance matrix mapping `[ΔU, U·Δδ]` to `[ΔI, I·Δφ]`.
///
/// The structure tag is derived from the entries, never supplied by callers.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceMatrix2 {
    entries: [[RationalFunction; 2]; 2],
    tag: StructureTag,
    tol: f64,
}

impl AdmittanceMatrix2 {
    pub fn new(entries: [[RationalFunction; 2]; 2]) -> Self {
        Self::with_tolerance(entries, DEFAULT_COEFF_TOL)
    }

    pub fn with_tolerance(entries: [[RationalFunction; 2]; 2], tol: f64) -> Self {
        let mut m = Self {
            entries,
            tag: StructureTag::General,
            tol,
        };
        m.tag = if m.is_diagonal() {
            StructureTag::Diagonal
        } else if m.is_rotation_like() {
            StructureTag::RotationLike
        } else {
            StructureTag::General
        };
        m
    }

    pub fn diagonal(a: RationalFunction, d: RationalFunction) -> Self {
        Self::new([[a, RationalFunction::zero()], [RationalFunction::zero(), d]])
    }

    /// `[[a, −b], [b, a]]`.
    pub fn rotation_like(a: RationalFunction, b: RationalFunction) -> Self {
        let minus_b = -&b;
        Self::new([[a.clone(), minus_b], [b, a]])
    }

    pub fn zero() -> Self {
        Self::diagonal(RationalFunction::zero(), RationalFunction::zero())
    }

    pub fn identity() -> Self {
        Self::diagonal(RationalFunction::one(), RationalFunction::one())
    }

    pub fn tag(&self) -> StructureTag {
        self.tag
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn entry(&self, row: usize, col: usize) -> &RationalFunction {
        &self.entries[row][col]
    }

    pub fn entries(&self) -> &[[RationalFunction; 2]; 2] {
        &self.entries
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries[0][1].is_negligible(self.tol) && self.entries[1][0].is_negligible(self.tol)
    }

    pub fn is_rotation_like(&self) -> bool {
        let [[a, mb], [b, d]] = &self.entries;
        a.approx_eq(d, self.tol) && (mb + b).is_negligible(self.tol)
    }

    /// `[[A, −C], [C, D]]` shape shared by converter and grid models.
    pub fn has_common_shape(&self) -> bool {
        let [[_, mc], [c, _]] = &self.entries;
        (mc + c).is_negligible(self.tol)
    }

    pub fn eval(&self, s: Complex64) -> Result<[[Complex64; 2]; 2]> {
        let e = &self.entries;
        Ok([
            [e[0][0].eval(s)?, e[0][1].eval(s)?],
            [e[1][0].eval(s)?, e[1][1].eval(s)?],
        ])
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let (a, b) = (&self.entries, &rhs.entries);
        Self::with_tolerance(
            [
                [&a[0][0] + &b[0][0], &a[0][1] + &b[0][1]],
                [&a[1][0] + &b[1][0], &a[1][1] + &b[1][1]],
            ],
            self.tol,
        )
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let (a, b) = (&self.entries, &rhs.entries);
        let cell = |i: usize, j: usize| &(&a[i][0] * &b[0][j]) + &(&a[i][1] * &b[1][j]);
        Self::with_tolerance(
            [[cell(0, 0), cell(0, 1)], [cell(1, 0), cell(1, 1)]],
            self.tol,
        )
    }

    pub fn det(&self) -> RationalFunction {
        let e = &self.entries;
        &(&e[0][0] * &e[1][1]) - &(&e[0][1] * &e[1][0])
    }

    /// Constant complex matrix lifted to rational entries.
    pub fn constant(m: [[Complex64; 2]; 2]) -> Self {
        let k = RationalFunction::constant;
        Self::new([[k(m[0][0]), k(m[0][1])], [k(m[1][0]), k(m[1][1])]])
    }

    /// Entry-wise equality of represented functions.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (0..2).all(|i| (0..2).all(|j| self.entries[i][j].approx_eq(&other.entries[i][j], tol)))
    }
}

/// The sequence transform `T = (1/√2)·[[1, j], [1, −j]]` and its inverse.
pub fn sequence_transform() -> ([[Complex64; 2]; 2], [[Complex64; 2]; 2]) {
    let k = FRAC_1_SQRT_2;
    let one = Complex64::new(k, 0.0);
    let j = Complex64::new(0.0, k);
    ([[one, j], [one, -j]], [[one, one], [-j, j]])
}

/// `T·M·T⁻¹ = diag(a + jb, a − jb)` for `M = [[a, −b], [b, a]]`.
pub fn similarity_diagonalize(
    m: &AdmittanceMatrix2,
) -> Result<(RationalFunction, RationalFunction)> {
    if !m.is_rotation_like() {
        return Err(Error::Structure(
            "sequence diagonalization needs a [[a, -b], [b, a]] matrix".into(),
        ));
    }
    let a = m.entry(0, 0);
    let jb = m.entry(1, 0).scale(Complex64::new(0.0, 1.0));
    Ok((a + &jb, a - &jb))
}

/// Inverse of [`similarity_diagonalize`]: `T⁻¹·diag(y₊, y₋)·T`.
pub fn undiagonalize(y_plus: &RationalFunction, y_minus: &RationalFunction) -> AdmittanceMatrix2 {
    let a = (y_plus + y_minus).scale_real(0.5);
    let b = (y_plus - y_minus).scale(Complex64::new(0.0, -0.5));
    AdmittanceMatrix2::rotation_like(a, b)
}
