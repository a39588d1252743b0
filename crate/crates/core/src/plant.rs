//! Linearized converter admittance in polar coordinates and the steady-state
//! operating point it is linearized around.
//!
//! Sign convention: every matrix maps `[ΔU, U₀·Δδ]` at the PCC to the polar
//! deviation `[ΔI, I₀·Δφ]` of the current drawn *from* the PCC by the
//! converter (load direction). The converter injects `−I`, so the derivation
//! in source direction differs by an overall sign. With this convention the
//! closed loop is `det(Y_conv + Y_grid) = 0` and a bare PLL term appears as
//! `−H_i·H_pll·I₀ / ((sL_f + H_i)(1 + H_pll·U₀))`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::network::GridParams;
use crate::ratfun::{AdmittanceMatrix2, CPolynomial, RationalFunction};

/// Largest `|sin θ_i0|` accepted without a warning.
pub const DEFAULT_PF_WARN: f64 = 0.2;

const OP_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OuterLoop {
    None,
    /// Active/reactive power loop with first-order power measurement.
    Pq {
        k_pp: f64,
        k_ip: f64,
        t_p: f64,
    },
    /// DC-voltage loop; `c_dc` in pu·s, `u_dcref` in pu.
    Dc {
        k_pdc: f64,
        k_idc: f64,
        c_dc: f64,
        u_dcref: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConverterParams {
    /// Filter inductance, pu.
    pub l_f: f64,
    pub k_pi: f64,
    pub k_ii: f64,
    pub k_ppll: f64,
    pub k_ipll: f64,
    /// Voltage feed-forward filter time constant, s. Zero means `G_FF ≡ 1`.
    pub t_ff: f64,
    pub outer: OuterLoop,
    pub i_dref: f64,
    /// Used by the current-controlled and DC-loop converters.
    pub i_qref: f64,
    /// Active power reference (PQ) or constant dc-side power `P_m` (DC).
    pub p_ref: f64,
    pub q_ref: f64,
}

impl ConverterParams {
    /// 500 kVA / 690 V converter with `I_dref = 1`, `I_qref = 0` and the
    /// feed-forward filter neglected.
    pub fn case_study() -> Self {
        Self {
            l_f: 0.2,
            k_pi: 0.6,
            k_ii: 15.0,
            k_ppll: 2.5,
            k_ipll: 3020.0,
            t_ff: 0.0,
            outer: OuterLoop::None,
            i_dref: 1.0,
            i_qref: 0.0,
            p_ref: 1.0,
            q_ref: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, "must be finite and ≥ 0"))
            }
        };
        if !(self.l_f.is_finite() && self.l_f > 0.0) {
            return Err(Error::invalid("L_f", "must be > 0"));
        }
        finite_nonneg("K_pi", self.k_pi)?;
        finite_nonneg("K_ii", self.k_ii)?;
        finite_nonneg("K_ppll", self.k_ppll)?;
        finite_nonneg("K_ipll", self.k_ipll)?;
        finite_nonneg("T_FF", self.t_ff)?;
        if self.k_pi == 0.0 && self.k_ii == 0.0 {
            return Err(Error::invalid(
                "K_pi",
                "current controller needs K_pi or K_ii > 0",
            ));
        }
        for (name, v) in [
            ("I_dref", self.i_dref),
            ("I_qref", self.i_qref),
            ("P_ref", self.p_ref),
            ("Q_ref", self.q_ref),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        match self.outer {
            OuterLoop::None => {}
            OuterLoop::Pq { k_pp, k_ip, t_p } => {
                finite_nonneg("K_pp", k_pp)?;
                finite_nonneg("K_ip", k_ip)?;
                finite_nonneg("T_p", t_p)?;
            }
            OuterLoop::Dc {
                k_pdc,
                k_idc,
                c_dc,
                u_dcref,
            } => {
                finite_nonneg("K_pdc", k_pdc)?;
                finite_nonneg("K_idc", k_idc)?;
                if !(c_dc.is_finite() && c_dc > 0.0) {
                    return Err(Error::invalid("C_dc", "must be > 0"));
                }
                if !(u_dcref.is_finite() && u_dcref > 0.0) {
                    return Err(Error::invalid("U_dcref", "must be > 0"));
                }
            }
        }
        Ok(())
    }
}

/// Controller transfer functions; outer-loop entries are present only for
/// the matching [`OuterLoop`].
#[derive(Clone, Debug)]
pub struct ControllerTfs {
    pub h_i: RationalFunction,
    pub h_pll: RationalFunction,
    pub g_ff: RationalFunction,
    pub h_p: Option<RationalFunction>,
    pub g_p: Option<RationalFunction>,
    pub h_dc: Option<RationalFunction>,
}

fn pi_tf(kp: f64, ki: f64) -> RationalFunction {
    RationalFunction::from_real(&[ki, kp], &[0.0, 1.0]).expect("nonzero denominator")
}

fn lowpass(t: f64) -> RationalFunction {
    if t == 0.0 {
        RationalFunction::one()
    } else {
        RationalFunction::from_real(&[1.0], &[1.0, t]).expect("nonzero denominator")
    }
}

pub fn build_controller_tfs(p: &ConverterParams) -> ControllerTfs {
    let (h_p, g_p, h_dc) = match p.outer {
        OuterLoop::None => (None, None, None),
        OuterLoop::Pq { k_pp, k_ip, t_p } => (Some(pi_tf(k_pp, k_ip)), Some(lowpass(t_p)), None),
        OuterLoop::Dc { k_pdc, k_idc, .. } => (None, None, Some(pi_tf(k_pdc, k_idc))),
    };
    ControllerTfs {
        h_i: pi_tf(p.k_pi, p.k_ii),
        h_pll: RationalFunction::from_real(&[p.k_ipll, p.k_ppll], &[0.0, 0.0, 1.0])
            .expect("nonzero denominator"),
        g_ff: lowpass(p.t_ff),
        h_p,
        g_p,
        h_dc,
    }
}

/// Steady state at the PCC. Voltage angles are measured in the grid (xy)
/// frame; the PLL frame is aligned with the PCC voltage, so `θ_v = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatingPoint {
    pub u0: f64,
    pub i0: f64,
    /// Current angle in the PLL dq frame.
    pub theta_i0: f64,
    /// PCC voltage angle relative to the grid source.
    pub delta0: f64,
    pub u_dc0: f64,
    pub omega_0: f64,
}

impl OperatingPoint {
    pub fn i_d0(&self) -> f64 {
        self.i0 * self.theta_i0.cos()
    }

    pub fn i_q0(&self) -> f64 {
        self.i0 * self.theta_i0.sin()
    }

    /// Rotation between the converter current and the PCC voltage, as used
    /// by the grid element matrices.
    pub fn power_factor_angle(&self) -> f64 {
        let phi = -self.theta_i0;
        if phi <= -std::f64::consts::PI {
            phi + 2.0 * std::f64::consts::PI
        } else {
            phi
        }
    }

    /// Complex KVL/KCL residual of the single-line circuit.
    pub fn residual(&self, l_line: f64, c_f: f64, e_grid: f64) -> f64 {
        let rot = Complex64::from_polar(1.0, self.delta0);
        let u = self.u0 * rot;
        let i = Complex64::new(self.i_d0(), self.i_q0()) * rot;
        let j = Complex64::new(0.0, 1.0);
        let i_line = i - j * c_f * u;
        (u - e_grid - j * l_line * i_line).norm()
    }
}

/// Steady state of an ideal source `E∠0` behind `L_line`, shunt `C_f` at the
/// PCC and the converter injecting `I_d + jI_q` in the PLL frame.
///
/// PQ converters draw `I_d = P/U`, `I_q = −Q/U`; DC converters draw
/// `I_d = P_m/U` with `I_q` commanded. `L_line = 0` is allowed here.
pub fn solve_operating_point(
    cp: &ConverterParams,
    gp: &GridParams,
    e_grid: f64,
) -> Result<OperatingPoint> {
    cp.validate()?;
    let (x, b) = (gp.l_line, gp.c_f);
    if !(x >= 0.0 && b >= 0.0 && e_grid > 0.0 && gp.omega_0 > 0.0) {
        return Err(Error::invalid(
            "grid",
            "needs L_line ≥ 0, C_f ≥ 0, E > 0, ω₀ > 0",
        ));
    }
    let a = 1.0 - x * b;
    if a <= 0.0 {
        return Err(Error::OperatingPoint {
            reason: format!("shunt resonance: L_line·C_f = {} ≥ 1", x * b),
            residual: f64::NAN,
        });
    }
    let infeasible = |reason: String, residual: f64| Error::OperatingPoint { reason, residual };

    let (u, i_d, i_q) = match cp.outer {
        OuterLoop::None => {
            let disc = e_grid * e_grid - (x * cp.i_dref).powi(2);
            if disc < 0.0 {
                return Err(infeasible(
                    format!("L_line·I_d = {} exceeds E = {e_grid}", x * cp.i_dref),
                    x * cp.i_dref.abs() - e_grid,
                ));
            }
            ((disc.sqrt() - x * cp.i_qref) / a, cp.i_dref, cp.i_qref)
        }
        OuterLoop::Pq { .. } => {
            // With w = U²: a²w² − (2aXQ + E²)w + X²(P² + Q²) = 0.
            let (p, q) = (cp.p_ref, cp.q_ref);
            let qa = a * a;
            let qb = -(2.0 * a * x * q + e_grid * e_grid);
            let qc = x * x * (p * p + q * q);
            let disc = qb * qb - 4.0 * qa * qc;
            if disc < 0.0 {
                return Err(infeasible(
                    format!("no voltage supports P = {p}, Q = {q}"),
                    disc,
                ));
            }
            let w = (-qb + disc.sqrt()) / (2.0 * qa);
            let u = w.sqrt();
            (u, p / u, -q / u)
        }
        OuterLoop::Dc { .. } => {
            // U²(aU + XI_q)² + X²P² − E²U² = 0; take the largest real root.
            let (p, iq) = (cp.p_ref, cp.i_qref);
            let quartic = CPolynomial::from_real(&[
                x * x * p * p,
                0.0,
                (x * iq).powi(2) - e_grid * e_grid,
                2.0 * a * x * iq,
                a * a,
            ]);
            let u = quartic
                .roots()?
                .into_iter()
                .filter(|r| r.re > 0.0 && r.im.abs() <= 1e-9 * (1.0 + r.re))
                .map(|r| polish_dc_voltage(r.re, a, x, iq, p, e_grid))
                .fold(f64::NAN, f64::max);
            if !(u > 0.0) {
                return Err(infeasible(
                    format!("no voltage supports P_m = {p}"),
                    f64::NAN,
                ));
            }
            (u, p / u, iq)
        }
    };
    if !(u > 0.0) {
        return Err(infeasible(
            format!("PCC voltage {u} is not positive"),
            f64::NAN,
        ));
    }

    let delta0 = -Complex64::new(u * a + x * i_q, -x * i_d).arg();
    let u_dc0 = match cp.outer {
        OuterLoop::Dc { u_dcref, .. } => u_dcref,
        _ => 1.0,
    };
    let op = OperatingPoint {
        u0: u,
        i0: i_d.hypot(i_q),
        theta_i0: i_q.atan2(i_d),
        delta0,
        u_dc0,
        omega_0: gp.omega_0,
    };
    let residual = op.residual(x, b, e_grid);
    if !(residual < OP_RESIDUAL_TOL) {
        return Err(infeasible("phasor solution did not close".into(), residual));
    }
    if op.theta_i0.sin().abs() >= DEFAULT_PF_WARN {
        log::warn!(
            "power factor far from unity: |sin θ_i0| = {:.3}; the diagonal models assume it is small",
            op.theta_i0.sin().abs()
        );
    }
    Ok(op)
}

fn polish_dc_voltage(mut u: f64, a: f64, x: f64, iq: f64, p: f64, e: f64) -> f64 {
    let f = |u: f64| (u * (a * u + x * iq)).powi(2) + (x * p).powi(2) - (e * u).powi(2);
    let df = |u: f64| 2.0 * u * (a * u + x * iq) * (2.0 * a * u + x * iq) - 2.0 * e * e * u;
    for _ in 0..8 {
        let d = df(u);
        if d == 0.0 {
            break;
        }
        let step = f(u) / d;
        u -= step;
        if step.abs() <= 1e-16 * u.abs() {
            break;
        }
    }
    u
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    /// Current loop, PLL and feed-forward filter with the full 2×2 coupling.
    MediumHighFull,
    /// As above with the off-diagonal coupling dropped.
    MediumHighDiag,
    /// PLL band with `G_FF ≡ 1`.
    Medium,
    OuterPq,
    OuterDc,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 5] = [
        ModelVariant::MediumHighFull,
        ModelVariant::MediumHighDiag,
        ModelVariant::Medium,
        ModelVariant::OuterPq,
        ModelVariant::OuterDc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::MediumHighFull => "medium_high_full",
            ModelVariant::MediumHighDiag => "medium_high_diag",
            ModelVariant::Medium => "medium",
            ModelVariant::OuterPq => "outer_pq",
            ModelVariant::OuterDc => "outer_dc",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }
}

fn s_inductance(l_f: f64, omega_b: f64) -> RationalFunction {
    RationalFunction::from_real(&[0.0, l_f / omega_b], &[1.0]).expect("nonzero denominator")
}

fn tidy(f: RationalFunction) -> RationalFunction {
    f.realified(1e-9)
}

/// Current-loop variants. `Medium` forces `G_FF ≡ 1`.
pub fn vsc_admittance_current_loop(
    p: &ConverterParams,
    op: &OperatingPoint,
    variant: ModelVariant,
) -> Result<AdmittanceMatrix2> {
    let tfs = build_controller_tfs(p);
    let g_ff = match variant {
        ModelVariant::Medium => RationalFunction::one(),
        ModelVariant::MediumHighFull | ModelVariant::MediumHighDiag => tfs.g_ff.clone(),
        other => {
            return Err(Error::ModeMismatch(format!(
                "{} is not a current-loop variant",
                other.name()
            )))
        }
    };
    let sl = s_inductance(p.l_f, op.omega_0);
    let loop_den = &sl + &tfs.h_i;
    let pll_den = &RationalFunction::one() + &tfs.h_pll.scale_real(op.u0);
    let ff = &RationalFunction::one() - &g_ff;
    let (sin, cos) = op.theta_i0.sin_cos();

    let y1 = ff.scale_real(cos).div(&loop_den)?;
    let pll_term = (&tfs.h_i * &tfs.h_pll).scale_real(op.i0);
    let y4 = (&ff.scale_real(cos) - &pll_term).div(&(&loop_den * &pll_den))?;
    let (y2, y3) = match variant {
        ModelVariant::MediumHighFull => (
            ff.scale_real(sin).div(&(&loop_den * &pll_den))?,
            (-&ff.scale_real(sin)).div(&loop_den)?,
        ),
        _ => (RationalFunction::zero(), RationalFunction::zero()),
    };
    Ok(AdmittanceMatrix2::new([
        [tidy(y1), tidy(y2)],
        [tidy(y3), tidy(y4)],
    ]))
}

/// Power-loop converter, diagonal, with `G_FF ≡ 1`.
pub fn vsc_admittance_pq(p: &ConverterParams, op: &OperatingPoint) -> Result<AdmittanceMatrix2> {
    let tfs = build_controller_tfs(p);
    let (h_p, g_p) = match (&tfs.h_p, &tfs.g_p) {
        (Some(h), Some(g)) => (h, g),
        _ => return Err(Error::ModeMismatch("PQ model needs a PQ outer loop".into())),
    };
    let sl = s_inductance(p.l_f, op.omega_0);
    let outer = &(h_p * &tfs.h_i) * g_p;
    let den = &(&outer.scale_real(op.u0) + &tfs.h_i) + &sl;
    let pll_den = &RationalFunction::one() + &tfs.h_pll.scale_real(op.u0);

    let y1 = outer.scale_real(op.i0).div(&den)?;
    let num4 = &(&sl * &tfs.h_pll).scale_real(op.i0) - &outer.scale_real(op.i0);
    let y4 = &num4.div(&(&den * &pll_den))? - &tfs.h_pll.scale_real(op.i0).div(&pll_den)?;
    Ok(AdmittanceMatrix2::diagonal(tidy(y1), tidy(y4)))
}

/// DC-voltage-loop converter with constant dc-side power, diagonal, with
/// `G_FF ≡ 1`.
pub fn vsc_admittance_dc(p: &ConverterParams, op: &OperatingPoint) -> Result<AdmittanceMatrix2> {
    let tfs = build_controller_tfs(p);
    let (h_dc, c_dc) = match (&tfs.h_dc, p.outer) {
        (Some(h), OuterLoop::Dc { c_dc, .. }) => (h, c_dc),
        _ => return Err(Error::ModeMismatch("DC model needs a DC outer loop".into())),
    };
    let sl = s_inductance(p.l_f, op.omega_0);
    let loop_den = &tfs.h_i + &sl;
    let s = RationalFunction::s();
    let dc_den =
        &(&s * &loop_den).scale_real(op.u_dc0 * c_dc) + &(h_dc * &tfs.h_i).scale_real(op.u0);
    let y1 = (h_dc * &tfs.h_i).scale_real(op.i0).div(&dc_den)?;
    let pll_den = &RationalFunction::one() + &tfs.h_pll.scale_real(op.u0);
    let y4 = (&tfs.h_i * &tfs.h_pll)
        .scale_real(-op.i0)
        .div(&(&loop_den * &pll_den))?;
    Ok(AdmittanceMatrix2::diagonal(tidy(y1), tidy(y4)))
}

/// Dispatches on `variant`.
pub fn converter_admittance(
    p: &ConverterParams,
    op: &OperatingPoint,
    variant: ModelVariant,
) -> Result<AdmittanceMatrix2> {
    match variant {
        ModelVariant::OuterPq => vsc_admittance_pq(p, op),
        ModelVariant::OuterDc => vsc_admittance_dc(p, op),
        _ => vsc_admittance_current_loop(p, op, variant),
    }
}
