//! Grid-side admittance in polar coordinates.
//!
//! Per-unit convention: an inductance `L` (pu) has impedance `s·L/ω_b` and a
//! capacitance `C` (pu) has admittance `s·C/ω_b`, where the base frequency
//! `ω_b` is the synchronous frequency `ω₀`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::plant::OperatingPoint;
use crate::ratfun::{similarity_diagonalize, AdmittanceMatrix2, CPolynomial, RationalFunction};

#[derive(Clone, Debug, PartialEq)]
pub struct GridParams {
    /// Line inductance, pu.
    pub l_line: f64,
    /// Shunt capacitance at the PCC, pu. Zero means an L-only grid.
    pub c_f: f64,
    /// Power-factor angle seen by the line at the PCC, rad.
    pub phi_line: f64,
    /// Power-factor angle seen by the capacitor at the PCC, rad.
    pub phi_c: f64,
    /// Synchronous (and base) angular frequency, rad/s.
    pub omega_0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementKind {
    Inductor,
    Capacitor,
}

impl GridParams {
    /// Unity power-factor grid with both angles at zero.
    pub fn new(l_line: f64, c_f: f64, omega_0: f64) -> Self {
        Self {
            l_line,
            c_f,
            phi_line: 0.0,
            phi_c: 0.0,
            omega_0,
        }
    }

    /// Both rotation angles taken from the converter's power-factor angle at
    /// `op`, which keeps line and capacitor currents in the converter's polar
    /// coordinates so that their admittances add.
    pub fn at_operating_point(l_line: f64, c_f: f64, op: &OperatingPoint) -> Self {
        let phi = op.power_factor_angle();
        Self {
            l_line,
            c_f,
            phi_line: phi,
            phi_c: phi,
            omega_0: op.omega_0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_line > 0.0) {
            return Err(Error::invalid("L_line", "must be > 0"));
        }
        if !(self.c_f >= 0.0) {
            return Err(Error::invalid("C_f", "must be ≥ 0"));
        }
        for (name, phi) in [("phi_line", self.phi_line), ("phi_c", self.phi_c)] {
            if !(phi > -PI && phi <= PI) {
                return Err(Error::invalid(name, "must lie in (−π, π]"));
            }
        }
        if !(self.omega_0 > 0.0) {
            return Err(Error::invalid("omega_0", "must be > 0"));
        }
        Ok(())
    }
}

/// Polar-coordinate admittance of a single grounded element.
///
/// Inductor: `1/(L(s² + ω²))·[[s, ω], [−ω, s]]·R(φ)`; capacitor:
/// `C·[[s, −ω], [ω, s]]·R(φ)`, with `R(φ) = [[cos φ, −sin φ], [sin φ, cos φ]]`.
pub fn element_admittance_polar(
    kind: ElementKind,
    value: f64,
    phi: f64,
    omega: f64,
) -> Result<AdmittanceMatrix2> {
    let w = omega;
    let (a, b) = match kind {
        ElementKind::Inductor => {
            if !(value > 0.0) {
                return Err(Error::invalid("inductance", "must be > 0"));
            }
            let l = value / w;
            let den = [l * w * w, 0.0, l];
            (
                RationalFunction::from_real(&[0.0, 1.0], &den)?,
                RationalFunction::from_real(&[-w], &den)?,
            )
        }
        ElementKind::Capacitor => {
            if !(value >= 0.0) {
                return Err(Error::invalid("capacitance", "must be ≥ 0"));
            }
            if value == 0.0 {
                return Ok(AdmittanceMatrix2::zero());
            }
            let c = value / w;
            (
                RationalFunction::from_real(&[0.0, c], &[1.0])?,
                RationalFunction::from_real(&[c * w], &[1.0])?,
            )
        }
    };
    // [[a, −b], [b, a]]·R(φ) is the complex product (a + jb)·e^{jφ}.
    let (sin, cos) = phi.sin_cos();
    let a_rot = &a.scale_real(cos) - &b.scale_real(sin);
    let b_rot = &a.scale_real(sin) + &b.scale_real(cos);
    Ok(AdmittanceMatrix2::rotation_like(a_rot, b_rot))
}

/// `Y = Y_line + Y_c`.
pub fn aggregate_grid_admittance(gp: &GridParams) -> Result<AdmittanceMatrix2> {
    gp.validate()?;
    let line = element_admittance_polar(ElementKind::Inductor, gp.l_line, gp.phi_line, gp.omega_0)?;
    if gp.c_f == 0.0 {
        return Ok(line);
    }
    let cap = element_admittance_polar(ElementKind::Capacitor, gp.c_f, gp.phi_c, gp.omega_0)?;
    Ok(line.add(&cap))
}

/// Relative root distance below which sequence admittance factors cancel.
const SEQUENCE_CANCEL_TOL: f64 = 1e-7;

/// `(Y₊, Y₋)` with the `(s ∓ jω₀)` factors shared by the polar entries removed.
pub fn sequence_admittances(y: &AdmittanceMatrix2) -> Result<(RationalFunction, RationalFunction)> {
    let (y_plus, y_minus) = similarity_diagonalize(y)?;
    Ok((
        y_plus.cancel_common(SEQUENCE_CANCEL_TOL)?.0,
        y_minus.cancel_common(SEQUENCE_CANCEL_TOL)?.0,
    ))
}

/// `(Z₊, Z₋) = (Y₊⁻¹, Y₋⁻¹)` from the sequence diagonalization of `y`.
pub fn sequence_impedances(y: &AdmittanceMatrix2) -> Result<(RationalFunction, RationalFunction)> {
    let (y_plus, y_minus) = sequence_admittances(y)?;
    Ok((y_plus.inv()?, y_minus.inv()?))
}

/// `(Z₊ + Z₋)/2`, real whenever the grid parameters are real.
pub fn grid_generalized_impedance(y: &AdmittanceMatrix2) -> Result<RationalFunction> {
    let (zp, zm) = sequence_impedances(y)?;
    Ok((&zp + &zm).scale_real(0.5).realified(y.tolerance()))
}

/// `L(s + jω)` for a pure line, as a polynomial.
pub fn line_sequence_impedance(l_line: f64, omega: f64, positive: bool) -> RationalFunction {
    let l = l_line / omega;
    let sign = if positive { 1.0 } else { -1.0 };
    RationalFunction::from_poly(CPolynomial::new(vec![
        Complex64::new(0.0, sign * l * omega),
        Complex64::new(l, 0.0),
    ]))
}
