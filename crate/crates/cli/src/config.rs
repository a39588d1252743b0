//! Sectioned key-value study configuration.
//!
//! Four sections are required: `[converter]`, `[grid]`, `[analysis]` and
//! `[scenario]`. A value may carry its declared unit after the number
//! (`S_b = 500 kVA`); a different unit is rejected rather than converted.
//! Parsing collects every problem before failing.

use std::collections::BTreeMap;
use std::fmt;

use gisc_core::case::{GridAngles, StudyCase};
use gisc_core::gisc::{CriterionMode, NyquistConfig};
use gisc_core::plant::{ConverterParams, ModelVariant, OuterLoop};
use gisc_core::poles::{CharacteristicForm, SweepSpec};
use gisc_core::timedom::{Event, Scenario, DEFAULT_DT, SIGNALS};
use ini::Ini;

pub const SECTIONS: [&str; 4] = ["converter", "grid", "analysis", "scenario"];

/// Signals that exist only as phase-domain reconstructions for the spectrum.
pub const PHASE_SIGNALS: [&str; 2] = ["I_a", "U_a"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Need {
    Required,
    Optional,
    /// Required when the converter uses this outer loop.
    Outer(&'static str),
}

struct Field {
    section: &'static str,
    key: &'static str,
    unit: Option<&'static str>,
    need: Need,
}

const fn f(
    section: &'static str,
    key: &'static str,
    unit: Option<&'static str>,
    need: Need,
) -> Field {
    Field {
        section,
        key,
        unit,
        need,
    }
}

const PU: Option<&str> = Some("pu");
const SEC: Option<&str> = Some("s");
const RAD_S: Option<&str> = Some("rad/s");
use Need::{Optional as Opt, Outer, Required as Req};

/// Every accepted key. Key names are unique across sections, so `--set`
/// may omit the section.
const FIELDS: &[Field] = &[
    f("converter", "S_b", Some("kVA"), Req),
    f("converter", "U_b", Some("V"), Req),
    f("converter", "L_f", PU, Req),
    f("converter", "K_pi", None, Req),
    f("converter", "K_ii", None, Req),
    f("converter", "K_ppll", None, Req),
    f("converter", "K_ipll", None, Req),
    f("converter", "T_FF", SEC, Opt),
    f("converter", "I_dref", PU, Req),
    f("converter", "I_qref", PU, Opt),
    f("converter", "outer", None, Opt),
    f("converter", "P_ref", PU, Outer("pq|dc")),
    f("converter", "Q_ref", PU, Outer("pq")),
    f("converter", "K_pp", None, Outer("pq")),
    f("converter", "K_ip", None, Outer("pq")),
    f("converter", "T_p", SEC, Outer("pq")),
    f("converter", "K_pdc", None, Outer("dc")),
    f("converter", "K_idc", None, Outer("dc")),
    f("converter", "C_dc", PU, Outer("dc")),
    f("converter", "U_dcref", PU, Outer("dc")),
    f("grid", "L_line", PU, Req),
    f("grid", "C_f", PU, Opt),
    f("grid", "E_grid", PU, Opt),
    f("grid", "f_0", Some("Hz"), Opt),
    f("grid", "phi_line", Some("rad"), Opt),
    f("grid", "phi_c", Some("rad"), Opt),
    f("analysis", "variant", None, Opt),
    f("analysis", "mode", None, Opt),
    f("analysis", "form", None, Opt),
    f("analysis", "omega_max", RAD_S, Opt),
    f("analysis", "omega_min", RAD_S, Opt),
    f("analysis", "points_per_decade", None, Opt),
    f("analysis", "indent_radius", RAD_S, Opt),
    f("analysis", "marginal_tol", None, Opt),
    f("analysis", "sweep_param", None, Opt),
    f("analysis", "sweep_from", None, Opt),
    f("analysis", "sweep_to", None, Opt),
    f("analysis", "sweep_steps", None, Opt),
    f("scenario", "duration", SEC, Req),
    f("scenario", "dt", SEC, Opt),
    f("scenario", "record_dt", SEC, Opt),
    f("scenario", "signals", None, Opt),
    f("scenario", "events", None, Opt),
    f("scenario", "spectrum_signal", None, Opt),
    f("scenario", "spectrum_start", SEC, Opt),
    f("scenario", "spectrum_end", SEC, Opt),
    f("scenario", "spectrum_peaks", None, Opt),
    f("scenario", "spectrum_fmax", Some("Hz"), Opt),
    f("scenario", "envelope_signal", None, Opt),
    f("scenario", "envelope_start", SEC, Opt),
];

fn field(section: &str, key: &str) -> Option<&'static Field> {
    FIELDS.iter().find(|f| f.section == section && f.key == key)
}

/// Every problem found in a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisConfig {
    /// `None` picks the criterion from the converter structure.
    pub mode: Option<CriterionMode>,
    pub form: CharacteristicForm,
    pub nyquist: NyquistConfig,
    pub sweep: SweepSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumConfig {
    pub signal: String,
    pub start: f64,
    pub end: f64,
    pub top_k: usize,
    pub f_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub spectrum: SpectrumConfig,
    /// Signal and start time of the envelope-rate fit, when requested.
    pub envelope: Option<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub case: StudyCase,
    pub s_base_kva: f64,
    pub u_base_v: f64,
    pub analysis: AnalysisConfig,
    pub scenario: ScenarioConfig,
}

/// Raw `section → key → value` text, before interpretation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<(String, String), String>,
    sections: Vec<String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigErrors> {
        let ini =
            Ini::load_from_str(text).map_err(|e| ConfigErrors(vec![format!("syntax: {e}")]))?;
        let mut raw = RawConfig::default();
        let mut errors = Vec::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                for (k, _) in props.iter() {
                    errors.push(format!("key '{k}' appears before any section header"));
                }
                continue;
            };
            if !SECTIONS.contains(&section) {
                errors.push(format!("unknown section [{section}]"));
                continue;
            }
            if raw.sections.iter().any(|s| s == section) {
                errors.push(format!("section [{section}] appears twice"));
            } else {
                raw.sections.push(section.to_string());
            }
            for (k, v) in props.iter() {
                if field(section, k).is_none() {
                    errors.push(format!("unknown key '{k}' in [{section}]"));
                    continue;
                }
                let slot = (section.to_string(), k.to_string());
                if raw.values.insert(slot, v.trim().to_string()).is_some() {
                    errors.push(format!("key '{k}' repeated in [{section}]"));
                }
            }
        }
        if errors.is_empty() {
            Ok(raw)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    /// Applies `section.key=value` or `key=value`.
    pub fn set(&mut self, assignment: &str) -> Result<(), String> {
        let (lhs, value) = assignment
            .split_once('=')
            .ok_or_else(|| format!("--set '{assignment}' is not of the form key=value"))?;
        let lhs = lhs.trim();
        let f = match lhs.split_once('.') {
            Some((section, key)) => field(section, key),
            None => FIELDS.iter().find(|f| f.key == lhs),
        }
        .ok_or_else(|| format!("--set: unknown key '{lhs}'"))?;
        self.values.insert(
            (f.section.to_string(), f.key.to_string()),
            value.trim().to_string(),
        );
        if !self.sections.iter().any(|s| s == f.section) {
            self.sections.push(f.section.to_string());
        }
        Ok(())
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(String::as_str)
    }
}

/// Interpretation state that accumulates errors instead of stopping.
struct Reader<'a> {
    raw: &'a RawConfig,
    outer: &'static str,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn text(&mut self, section: &str, key: &str) -> Option<String> {
        let fd = field(section, key).expect("key listed in FIELDS");
        match self.raw.get(section, key) {
            Some(v) => Some(v.to_string()),
            None => {
                let required = match fd.need {
                    Need::Required => true,
                    Need::Optional => false,
                    Need::Outer(loops) => loops.split('|').any(|l| l == self.outer),
                };
                if required && self.raw.sections.iter().any(|s| s == section) {
                    self.errors
                        .push(format!("missing required key '{key}' in [{section}]"));
                }
                None
            }
        }
    }

    fn num(&mut self, section: &str, key: &str) -> Option<f64> {
        let text = self.text(section, key)?;
        let fd = field(section, key).expect("key listed in FIELDS");
        let mut parts = text.split_whitespace();
        let number = parts.next().unwrap_or("");
        let unit = parts.next();
        if parts.next().is_some() {
            self.errors.push(format!(
                "{section}.{key}: expected '<number> [unit]', got '{text}'"
            ));
            return None;
        }
        match (unit, fd.unit) {
            (Some(u), Some(want)) if u != want => {
                self.errors.push(format!(
                    "{section}.{key}: unit '{u}' given, but the field is declared in {want}"
                ));
                return None;
            }
            (Some(u), None) => {
                self.errors.push(format!(
                    "{section}.{key}: unit '{u}' given for a dimensionless field"
                ));
                return None;
            }
            _ => {}
        }
        match number.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.errors.push(format!(
                    "{section}.{key}: '{number}' is not a finite number"
                ));
                None
            }
        }
    }

    fn num_or(&mut self, section: &str, key: &str, default: f64) -> f64 {
        self.num(section, key).unwrap_or(default)
    }

    fn positive(&mut self, section: &str, key: &str, v: Option<f64>) -> Option<f64> {
        match v {
            Some(x) if x <= 0.0 => {
                self.errors
                    .push(format!("{section}.{key} must be > 0 (got {x})"));
                None
            }
            other => other,
        }
    }

    fn count(&mut self, section: &str, key: &str, default: usize) -> usize {
        match self.num(section, key) {
            None => default,
            Some(v) if v >= 1.0 && v.fract() == 0.0 => v as usize,
            Some(v) => {
                self.errors.push(format!(
                    "{section}.{key} must be a positive integer (got {v})"
                ));
                default
            }
        }
    }
}

fn read_converter(r: &mut Reader) -> (ConverterParams, f64, f64) {
    let s = "converter";
    let mut cp = ConverterParams::case_study();
    let s_b = r.num(s, "S_b");
    let s_b = r.positive(s, "S_b", s_b).unwrap_or(f64::NAN);
    let u_b = r.num(s, "U_b");
    let u_b = r.positive(s, "U_b", u_b).unwrap_or(f64::NAN);
    cp.l_f = r.num_or(s, "L_f", cp.l_f);
    cp.k_pi = r.num_or(s, "K_pi", cp.k_pi);
    cp.k_ii = r.num_or(s, "K_ii", cp.k_ii);
    cp.k_ppll = r.num_or(s, "K_ppll", cp.k_ppll);
    cp.k_ipll = r.num_or(s, "K_ipll", cp.k_ipll);
    // Omitted T_FF means a 100 Hz feed-forward filter; table2.cfg sets 0.
    cp.t_ff = r.num_or(s, "T_FF", 1.0 / (200.0 * std::f64::consts::PI));
    cp.i_dref = r.num_or(s, "I_dref", cp.i_dref);
    cp.i_qref = r.num_or(s, "I_qref", 0.0);
    cp.p_ref = r.num_or(s, "P_ref", cp.i_dref);
    cp.q_ref = r.num_or(s, "Q_ref", 0.0);
    cp.outer = match r.outer {
        "pq" => OuterLoop::Pq {
            k_pp: r.num_or(s, "K_pp", 0.0),
            k_ip: r.num_or(s, "K_ip", 0.0),
            t_p: r.num_or(s, "T_p", 0.0),
        },
        "dc" => OuterLoop::Dc {
            k_pdc: r.num_or(s, "K_pdc", 0.0),
            k_idc: r.num_or(s, "K_idc", 0.0),
            c_dc: r.num_or(s, "C_dc", 0.0),
            u_dcref: r.num_or(s, "U_dcref", 1.0),
        },
        _ => OuterLoop::None,
    };
    if r.outer == "none" {
        for key in [
            "Q_ref", "K_pp", "K_ip", "T_p", "K_pdc", "K_idc", "C_dc", "U_dcref", "P_ref",
        ] {
            if r.raw.get(s, key).is_some() {
                r.errors.push(format!(
                    "converter.{key} is only meaningful with an outer loop (outer = none)"
                ));
            }
        }
    }
    (cp, s_b, u_b)
}

fn parse_events(text: &str, errors: &mut Vec<String>) -> Vec<Event> {
    text.split(',')
        .map(str::trim)
        .filter(|e| !e.is_empty())
        .filter_map(|e| {
            let parsed = e.split_once(':').and_then(|(t, rest)| {
                let (param, value) = rest.split_once('=')?;
                Some(Event {
                    time: t.trim().parse().ok()?,
                    param: param.trim().to_string(),
                    value: value.trim().parse().ok()?,
                })
            });
            if parsed.is_none() {
                errors.push(format!(
                    "scenario.events: '{e}' is not of the form <t>:<param>=<value>"
                ));
            }
            parsed
        })
        .collect()
}

fn read_scenario(r: &mut Reader, case: &StudyCase) -> ScenarioConfig {
    let s = "scenario";
    let duration = r.num(s, "duration");
    let duration = r.positive(s, "duration", duration).unwrap_or(1.0);
    let mut sc = Scenario::new(duration);
    let dt = r.num(s, "dt");
    sc.dt = r.positive(s, "dt", dt).unwrap_or(DEFAULT_DT);
    let rec = r.num(s, "record_dt");
    sc.record_dt = r.positive(s, "record_dt", rec).unwrap_or(sc.record_dt);
    if let Some(list) = r.text(s, "signals") {
        sc.signals = list
            .split(',')
            .map(|x| x.trim().to_string())
            .filter(|x| !x.is_empty())
            .collect();
        for sig in &sc.signals {
            if !SIGNALS.contains(&sig.as_str()) {
                r.errors.push(format!(
                    "scenario.signals: unknown signal '{sig}' (known: {})",
                    SIGNALS.join(", ")
                ));
            }
        }
    }
    if let Some(text) = r.text(s, "events") {
        sc.events = parse_events(&text, &mut r.errors);
        for e in &sc.events {
            if case.get_param(&e.param).is_err() {
                r.errors
                    .push(format!("scenario.events: unknown parameter '{}'", e.param));
            }
        }
    }
    if let Err(e) = sc.validate() {
        if !matches!(e, gisc_core::Error::UnknownSignal(_)) {
            r.errors.push(format!("scenario: {e}"));
        }
    }

    let signal = r.text(s, "spectrum_signal").unwrap_or_else(|| "I_a".into());
    if !SIGNALS.contains(&signal.as_str()) && !PHASE_SIGNALS.contains(&signal.as_str()) {
        r.errors.push(format!(
            "scenario.spectrum_signal: unknown signal '{signal}'"
        ));
    }
    let start = r.num_or(s, "spectrum_start", duration / 2.0);
    let end = r.num_or(s, "spectrum_end", duration);
    let top_k = r.count(s, "spectrum_peaks", 5);
    let f_max = r.num(s, "spectrum_fmax");
    let f_max = r.positive(s, "spectrum_fmax", f_max).unwrap_or(200.0);
    let env_signal = r
        .text(s, "envelope_signal")
        .unwrap_or_else(|| "omega_dev".into());
    let envelope = r.num(s, "envelope_start").map(|t| (env_signal, t));
    ScenarioConfig {
        scenario: sc,
        spectrum: SpectrumConfig {
            signal,
            start,
            end,
            top_k,
            f_max,
        },
        envelope,
    }
}

fn read_analysis(r: &mut Reader, case: &StudyCase) -> AnalysisConfig {
    let s = "analysis";
    let mode = match r.text(s, "mode").as_deref() {
        None | Some("auto") => None,
        Some(m) => match CriterionMode::from_name(m) {
            Some(mode) => Some(mode),
            None => {
                r.errors.push(format!(
                    "analysis.mode: '{m}' is not one of auto, gisc1, gisc2, deduction1"
                ));
                None
            }
        },
    };
    let form = match r.text(s, "form").as_deref() {
        None | Some("det2x2") => CharacteristicForm::Det2x2,
        Some("siso") => CharacteristicForm::Siso,
        Some(other) => {
            r.errors
                .push(format!("analysis.form: '{other}' is not det2x2 or siso"));
            CharacteristicForm::Det2x2
        }
    };
    let d = NyquistConfig::default();
    let omega_max = r.num(s, "omega_max");
    let omega_min = r.num(s, "omega_min");
    let indent = r.num(s, "indent_radius");
    let marginal = r.num(s, "marginal_tol");
    let nyquist = NyquistConfig {
        omega_max: r.positive(s, "omega_max", omega_max).unwrap_or(d.omega_max),
        omega_min: r.positive(s, "omega_min", omega_min).unwrap_or(d.omega_min),
        points_per_decade: r.count(s, "points_per_decade", d.points_per_decade),
        indent_radius: r
            .positive(s, "indent_radius", indent)
            .unwrap_or(d.indent_radius),
        marginal_tol: r
            .positive(s, "marginal_tol", marginal)
            .unwrap_or(d.marginal_tol),
        ..d
    };
    if nyquist.omega_min >= nyquist.omega_max {
        r.errors
            .push("analysis.omega_min must be below omega_max".into());
    }
    let name = r.text(s, "sweep_param").unwrap_or_else(|| "L_line".into());
    if case.get_param(&name).is_err() {
        r.errors
            .push(format!("analysis.sweep_param: unknown parameter '{name}'"));
    }
    let sweep = SweepSpec {
        name,
        from: r.num_or(s, "sweep_from", 0.05),
        to: r.num_or(s, "sweep_to", 0.50),
        steps: r.count(s, "sweep_steps", 46),
    };
    AnalysisConfig {
        mode,
        form,
        nyquist,
        sweep,
    }
}

impl StudyConfig {
    /// Parses and validates configuration text, reporting all errors at once.
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigErrors> {
        let mut errors: Vec<String> = SECTIONS
            .iter()
            .filter(|s| !raw.sections.iter().any(|have| have == *s))
            .map(|s| format!("missing section [{s}]"))
            .collect();
        let outer = match raw.get("converter", "outer").unwrap_or("none") {
            "none" => "none",
            "pq" => "pq",
            "dc" => "dc",
            other => {
                errors.push(format!(
                    "converter.outer: '{other}' is not one of none, pq, dc"
                ));
                "none"
            }
        };
        let mut r = Reader { raw, outer, errors };

        let (converter, s_b, u_b) = read_converter(&mut r);
        let g = "grid";
        let l_line = r.num_or(g, "L_line", 0.2);
        let c_f = r.num_or(g, "C_f", 0.0);
        let e_grid = r.num_or(g, "E_grid", 1.0);
        let f_0 = r.num_or(g, "f_0", 50.0);
        let angles = match (r.num(g, "phi_line"), r.num(g, "phi_c")) {
            (None, None) => GridAngles::FromOperatingPoint,
            (Some(phi_line), Some(phi_c)) => GridAngles::Fixed { phi_line, phi_c },
            _ => {
                r.errors.push(
                    "grid.phi_line and grid.phi_c must be given together or not at all".into(),
                );
                GridAngles::FromOperatingPoint
            }
        };
        let default_variant = match outer {
            "pq" => ModelVariant::OuterPq,
            "dc" => ModelVariant::OuterDc,
            _ => ModelVariant::Medium,
        };
        let variant = match r.text("analysis", "variant") {
            None => default_variant,
            Some(v) => ModelVariant::from_name(&v).unwrap_or_else(|| {
                let names: Vec<&str> = ModelVariant::ALL.iter().map(|m| m.name()).collect();
                r.errors.push(format!(
                    "analysis.variant: '{v}' is not one of {}",
                    names.join(", ")
                ));
                default_variant
            }),
        };
        let case = StudyCase {
            converter,
            l_line,
            c_f,
            angles,
            e_grid,
            f_0,
            variant,
        };
        if let Err(e) = case.validate() {
            r.errors.push(format!("invalid parameters: {e}"));
        }
        if !(l_line > 0.0) {
            r.errors
                .push(format!("grid.L_line must be > 0 (got {l_line})"));
        }
        if !(c_f >= 0.0) {
            r.errors.push(format!("grid.C_f must be ≥ 0 (got {c_f})"));
        }
        if let OuterLoop::Pq { t_p, .. } = case.converter.outer {
            if !(t_p > 0.0) {
                r.errors
                    .push(format!("converter.T_p must be > 0 (got {t_p})"));
            }
        }
        let analysis = read_analysis(&mut r, &case);
        let scenario = read_scenario(&mut r, &case);

        if r.errors.is_empty() {
            Ok(StudyConfig {
                case,
                s_base_kva: s_b,
                u_base_v: u_b,
                analysis,
                scenario,
            })
        } else {
            Err(ConfigErrors(r.errors))
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigErrors> {
        Self::from_raw(&RawConfig::parse(text)?)
    }
}
