//! A converter, its grid and the model choices, with named-parameter access
//! for sweeps.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::network::{aggregate_grid_admittance, GridParams};
use crate::plant::{
    converter_admittance, solve_operating_point, ConverterParams, ModelVariant, OperatingPoint,
    OuterLoop,
};
use crate::ratfun::AdmittanceMatrix2;

/// How the grid element rotation angles are chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridAngles {
    /// Both angles follow the converter's power-factor angle.
    FromOperatingPoint,
    Fixed {
        phi_line: f64,
        phi_c: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyCase {
    pub converter: ConverterParams,
    pub l_line: f64,
    pub c_f: f64,
    pub angles: GridAngles,
    pub e_grid: f64,
    pub f_0: f64,
    pub variant: ModelVariant,
}

/// Everything the frequency-domain analyses need at one parameter value.
#[derive(Clone, Debug)]
pub struct LinearizedCase {
    pub op: OperatingPoint,
    pub grid: GridParams,
    pub y_conv: AdmittanceMatrix2,
    pub y_grid: AdmittanceMatrix2,
}

/// Names accepted by [`StudyCase::set_param`] and [`StudyCase::get_param`].
pub const PARAM_NAMES: [&str; 21] = [
    "L_line", "C_f", "E_grid", "f_0", "L_f", "K_pi", "K_ii", "K_ppll", "K_ipll", "T_FF", "I_dref",
    "I_qref", "P_ref", "Q_ref", "K_pp", "K_ip", "T_p", "K_pdc", "K_idc", "C_dc", "U_dcref",
];

impl StudyCase {
    /// Medium-variant case study on a pure inductive grid.
    pub fn case_study(l_line: f64) -> Self {
        Self {
            converter: ConverterParams::case_study(),
            l_line,
            c_f: 0.0,
            angles: GridAngles::FromOperatingPoint,
            e_grid: 1.0,
            f_0: 50.0,
            variant: ModelVariant::Medium,
        }
    }

    pub fn omega_0(&self) -> f64 {
        2.0 * PI * self.f_0
    }

    pub fn validate(&self) -> Result<()> {
        self.converter.validate()?;
        if !(self.f_0.is_finite() && self.f_0 > 0.0) {
            return Err(Error::invalid("f_0", "must be > 0"));
        }
        if !(self.e_grid.is_finite() && self.e_grid > 0.0) {
            return Err(Error::invalid("E_grid", "must be > 0"));
        }
        let needs = match self.variant {
            ModelVariant::OuterPq => matches!(self.converter.outer, OuterLoop::Pq { .. }),
            ModelVariant::OuterDc => matches!(self.converter.outer, OuterLoop::Dc { .. }),
            _ => matches!(self.converter.outer, OuterLoop::None),
        };
        if !needs {
            return Err(Error::ModeMismatch(format!(
                "variant {} does not match the converter's outer loop",
                self.variant.name()
            )));
        }
        Ok(())
    }

    pub fn operating_point(&self) -> Result<OperatingPoint> {
        self.validate()?;
        let gp = GridParams::new(self.l_line, self.c_f, self.omega_0());
        solve_operating_point(&self.converter, &gp, self.e_grid)
    }

    pub fn grid_params(&self, op: &OperatingPoint) -> GridParams {
        match self.angles {
            GridAngles::FromOperatingPoint => {
                GridParams::at_operating_point(self.l_line, self.c_f, op)
            }
            GridAngles::Fixed { phi_line, phi_c } => GridParams {
                l_line: self.l_line,
                c_f: self.c_f,
                phi_line,
                phi_c,
                omega_0: self.omega_0(),
            },
        }
    }

    /// Solves the operating point and builds both admittance matrices.
    pub fn linearize(&self) -> Result<LinearizedCase> {
        let op = self.operating_point()?;
        let grid = self.grid_params(&op);
        let y_conv = converter_admittance(&self.converter, &op, self.variant)?;
        let y_grid = aggregate_grid_admittance(&grid)?;
        Ok(LinearizedCase {
            op,
            grid,
            y_conv,
            y_grid,
        })
    }

    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        *self.param_mut(name)? = value;
        Ok(())
    }

    pub fn get_param(&self, name: &str) -> Result<f64> {
        let mut copy = self.clone();
        let v = *copy.param_mut(name)?;
        Ok(v)
    }

    /// Copy with one parameter replaced.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        c.set_param(name, value)?;
        Ok(c)
    }

    fn param_mut(&mut self, name: &str) -> Result<&mut f64> {
        let cp = &mut self.converter;
        let outer_missing =
            || Error::UnknownParameter(format!("{name} (not used by this outer loop)"));
        Ok(match name {
            "L_line" => &mut self.l_line,
            "C_f" => &mut self.c_f,
            "E_grid" => &mut self.e_grid,
            "f_0" => &mut self.f_0,
            "L_f" => &mut cp.l_f,
            "K_pi" => &mut cp.k_pi,
            "K_ii" => &mut cp.k_ii,
            "K_ppll" => &mut cp.k_ppll,
            "K_ipll" => &mut cp.k_ipll,
            "T_FF" => &mut cp.t_ff,
            "I_dref" => &mut cp.i_dref,
            "I_qref" => &mut cp.i_qref,
            "P_ref" => &mut cp.p_ref,
            "Q_ref" => &mut cp.q_ref,
            "K_pp" | "K_ip" | "T_p" => match &mut cp.outer {
                OuterLoop::Pq { k_pp, k_ip, t_p } => match name {
                    "K_pp" => k_pp,
                    "K_ip" => k_ip,
                    _ => t_p,
                },
                _ => return Err(outer_missing()),
            },
            "K_pdc" | "K_idc" | "C_dc" | "U_dcref" => match &mut cp.outer {
                OuterLoop::Dc {
                    k_pdc,
                    k_idc,
                    c_dc,
                    u_dcref,
                } => match name {
                    "K_pdc" => k_pdc,
                    "K_idc" => k_idc,
                    "C_dc" => c_dc,
                    _ => u_dcref,
                },
                _ => return Err(outer_missing()),
            },
            _ => return Err(Error::UnknownParameter(name.to_string())),
        })
    }
}
