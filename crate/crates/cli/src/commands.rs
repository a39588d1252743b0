//! One pipeline per command; each writes its CSVs and a `verdict.csv`
//! key/value summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gisc_core::gisc::{analyze, weak_grid_locus, weak_grid_sweep, Classification, NyquistCurve};
use gisc_core::poles::{case_poles, root_locus_sweep, PoleSet};
use gisc_core::timedom::{
    amplitude_spectrum, analysis_window, dt_halving_check, envelope_rate, init_steady_state,
    reconstruct_phase_signal, series_spectrum_peaks, simulate_scenario, PhaseQuantity, SimTrace,
};
use thiserror::Error;

use crate::config::{ConfigErrors, StudyConfig};
use crate::emit::{emit_csv, fmt_float, Cell, NYQUIST_HEADER, ROOTLOCUS_HEADER, SPECTRUM_HEADER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Analyze,
    Nyquist,
    Rootlocus,
    Weakgrid,
    Simulate,
}

pub const EXIT_STABLE: i32 = 0;
pub const EXIT_UNSTABLE: i32 = 1;
pub const EXIT_MARGINAL: i32 = 2;
pub const EXIT_CONFIG: i32 = 11;
pub const EXIT_IO: i32 = 12;
pub const EXIT_ANALYSIS: i32 = 13;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("configuration: {0}")]
    Usage(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("analysis failed: {0}")]
    Analysis(#[from] gisc_core::Error),
    #[error("not converged: {0}")]
    Convergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Analysis(_) | CliError::Convergence(_) => EXIT_ANALYSIS,
        }
    }
}

/// Exit code plus the human-readable summary.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: String,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub dt_halve: bool,
}

struct Out<'a> {
    dir: &'a Path,
}

impl Out<'_> {
    fn csv<R>(&self, name: &str, header: &[&str], rows: R) -> Result<(), CliError>
    where
        R: IntoIterator<Item = Vec<Cell>>,
    {
        let path = self.dir.join(name);
        emit_csv(&path, header, rows).map_err(|source| CliError::Io { path, source })
    }

    fn verdict(&self, rows: &[(&str, String)]) -> Result<(), CliError> {
        self.csv(
            "verdict.csv",
            &["key", "value"],
            rows.iter()
                .map(|(k, v)| vec![Cell::Text(k.to_string()), Cell::Text(v.clone())]),
        )
    }
}

fn curve_rows(curve: &NyquistCurve) -> impl Iterator<Item = Vec<Cell>> + '_ {
    curve.contour_samples().map(|p| {
        vec![
            Cell::Float(p.omega),
            Cell::Float(p.value.re),
            Cell::Float(p.value.im),
        ]
    })
}

fn exit_for(c: Classification) -> i32 {
    match c {
        Classification::Stable => EXIT_STABLE,
        Classification::Unstable => EXIT_UNSTABLE,
        Classification::Marginal => EXIT_MARGINAL,
    }
}

fn pole_rows(poles: &PoleSet) -> Vec<(&'static str, String)> {
    let d = poles.dominant.unwrap_or_default();
    vec![
        ("pole_source", poles.source.name().to_string()),
        ("pole_rhp_count", poles.rhp_count.to_string()),
        ("dominant_re", fmt_float(d.re)),
        ("dominant_im", fmt_float(d.im.abs())),
        (
            "dominant_freq_hz",
            fmt_float(d.im.abs() / (2.0 * std::f64::consts::PI)),
        ),
        ("cancelled_poles", poles.cancelled.len().to_string()),
    ]
}

/// Runs `cmd` and writes its outputs under `out`.
pub fn run_command(
    cmd: Command,
    cfg: &StudyConfig,
    out: &Path,
    opts: RunOptions,
) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let out = Out { dir: out };
    match cmd {
        Command::Analyze => run_analyze(cfg, &out, false),
        Command::Nyquist => run_analyze(cfg, &out, true),
        Command::Rootlocus => run_rootlocus(cfg, &out),
        Command::Weakgrid => run_weakgrid(cfg, &out),
        Command::Simulate => run_simulate(cfg, &out, opts),
    }
}

fn run_analyze(cfg: &StudyConfig, out: &Out, curves: bool) -> Result<Outcome, CliError> {
    let case = &cfg.case;
    let lin = case.linearize()?;
    let poles = case_poles(case, cfg.analysis.form)?;
    let mut rows: Vec<(&str, String)> = vec![
        (
            "command",
            (if curves { "nyquist" } else { "analyze" }).to_string(),
        ),
        ("variant", case.variant.name().to_string()),
        ("L_line", fmt_float(case.l_line)),
    ];
    let mut summary = String::new();

    let (classification, rhp) = if lin.y_conv.is_diagonal() {
        let a = analyze(
            &lin.y_conv,
            &lin.y_grid,
            cfg.analysis.mode,
            &cfg.analysis.nyquist,
        )?;
        let v = a.verdict;
        rows.extend([
            ("mode", a.mode.name().to_string()),
            ("classification", v.classification.name().to_string()),
            ("encirclements", v.encirclements.to_string()),
            (
                "open_loop_unstable_poles",
                v.open_loop_unstable_poles.to_string(),
            ),
            ("rhp_closed_loop_poles", v.rhp_closed_loop_poles.to_string()),
            ("margin", fmt_float(v.margin)),
        ]);
        let _ = writeln!(
            summary,
            "{}: {} ({} encirclements of -1, {} open-loop RHP poles, {} closed-loop RHP poles, margin {:.4})",
            a.mode.name(),
            v.classification.name(),
            v.encirclements,
            v.open_loop_unstable_poles,
            v.rhp_closed_loop_poles,
            v.margin
        );
        if curves {
            if a.curves.len() == 1 {
                out.csv("nyquist.csv", NYQUIST_HEADER, curve_rows(&a.curves[0]))?;
            } else {
                for (k, c) in a.curves.iter().enumerate() {
                    out.csv(
                        &format!("nyquist_{}.csv", k + 1),
                        NYQUIST_HEADER,
                        curve_rows(c),
                    )?;
                }
            }
        }
        (v.classification, v.rhp_closed_loop_poles)
    } else {
        if cfg.analysis.mode.is_some() || curves {
            return Err(CliError::Usage(format!(
                "variant {} has a full converter matrix; the reduced criteria need a diagonal variant",
                case.variant.name()
            )));
        }
        // Without a SISO reduction the verdict rests on the determinant poles.
        let c = if poles.is_stable() {
            Classification::Stable
        } else {
            Classification::Unstable
        };
        rows.extend([
            ("mode", "det2x2".to_string()),
            ("classification", c.name().to_string()),
        ]);
        let _ = writeln!(summary, "det2x2 poles: {}", c.name());
        (c, poles.rhp_count as i64)
    };

    let agree = rhp == poles.rhp_count as i64;
    rows.extend(pole_rows(&poles));
    rows.push(("criteria_agree", agree.to_string()));
    if !agree {
        log::warn!(
            "Nyquist predicts {rhp} RHP poles but the characteristic polynomial has {}",
            poles.rhp_count
        );
    }
    let d = poles.dominant.unwrap_or_default();
    let _ = writeln!(
        summary,
        "poles ({}): {} in the RHP, dominant {:.4} ± {:.4}j ({:.3} Hz)",
        poles.source.name(),
        poles.rhp_count,
        d.re,
        d.im.abs(),
        d.im.abs() / (2.0 * std::f64::consts::PI)
    );
    out.verdict(&rows)?;
    Ok(Outcome {
        exit_code: if curves {
            EXIT_STABLE
        } else {
            exit_for(classification)
        },
        summary,
    })
}

fn run_rootlocus(cfg: &StudyConfig, out: &Out) -> Result<Outcome, CliError> {
    let locus = root_locus_sweep(&cfg.case, &cfg.analysis.sweep, cfg.analysis.form)?;
    let rows = locus.values.iter().zip(&locus.sets).flat_map(|(v, set)| {
        set.poles
            .iter()
            .map(|p| {
                vec![
                    Cell::Float(*v),
                    Cell::Float(p.re),
                    Cell::Float(p.im),
                    Cell::Bool(set.is_dominant_member(*p)),
                ]
            })
            .collect::<Vec<_>>()
    });
    out.csv("rootlocus.csv", ROOTLOCUS_HEADER, rows)?;
    let first_unstable = locus
        .values
        .iter()
        .zip(&locus.sets)
        .find(|(_, s)| !s.is_stable())
        .map(|(v, _)| *v);
    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), fmt_float);
    out.verdict(&[
        ("command", "rootlocus".to_string()),
        ("param", locus.param.clone()),
        ("points", locus.values.len().to_string()),
        ("first_unstable", fmt_opt(first_unstable)),
        ("truncated_at", fmt_opt(locus.truncated_at)),
    ])?;
    Ok(Outcome {
        exit_code: EXIT_STABLE,
        summary: format!(
            "root locus over {} = {} values; first unstable value: {}\n",
            locus.param,
            locus.values.len(),
            first_unstable.map_or_else(|| "none".to_string(), |v| format!("{v:.4}"))
        ),
    })
}

fn run_weakgrid(cfg: &StudyConfig, out: &Out) -> Result<Outcome, CliError> {
    let sweep = &cfg.analysis.sweep;
    if sweep.name != "L_line" {
        return Err(CliError::Usage(format!(
            "weakgrid sweeps L_line, but analysis.sweep_param is {}",
            sweep.name
        )));
    }
    let lin = cfg.case.linearize()?;
    let locus = weak_grid_locus(
        lin.y_conv.entry(1, 1),
        cfg.case.omega_0(),
        &cfg.analysis.nyquist,
    )?;
    out.csv("weakgrid.csv", NYQUIST_HEADER, curve_rows(&locus.curve))?;
    let points = weak_grid_sweep(&cfg.case, &sweep.values()?, &cfg.analysis.nyquist)?;
    out.csv(
        "weakgrid_sweep.csv",
        &["l_line", "inv_l_line", "region", "rhp_poles"],
        points.iter().map(|p| {
            vec![
                Cell::Float(p.l_line),
                Cell::Float(1.0 / p.l_line),
                Cell::Text(p.region.name().to_string()),
                Cell::Int(p.rhp_poles),
            ]
        }),
    )?;
    let boundary = points
        .windows(2)
        .find(|w| w[0].region != w[1].region)
        .map(|w| 0.5 * (w[0].l_line + w[1].l_line));
    out.verdict(&[
        ("command", "weakgrid".to_string()),
        ("points", points.len().to_string()),
        (
            "region_change_near",
            boundary.map_or_else(|| "none".to_string(), fmt_float),
        ),
    ])?;
    Ok(Outcome {
        exit_code: EXIT_STABLE,
        summary: format!(
            "weak-grid locus: {} sweep points, region change near L_line = {}\n",
            points.len(),
            boundary.map_or_else(|| "none".to_string(), |v| format!("{v:.3}"))
        ),
    })
}

fn series_for(trace: &SimTrace, signal: &str, omega_0: f64) -> Result<Vec<f64>, CliError> {
    Ok(match signal {
        "I_a" => reconstruct_phase_signal(trace, PhaseQuantity::Current, omega_0)?,
        "U_a" => reconstruct_phase_signal(trace, PhaseQuantity::Voltage, omega_0)?,
        s => trace.column(s)?.to_vec(),
    })
}

fn run_simulate(cfg: &StudyConfig, out: &Out, opts: RunOptions) -> Result<Outcome, CliError> {
    let sc_cfg = &cfg.scenario;
    let mut scenario = sc_cfg.scenario.clone();
    // Record what the spectrum and envelope need even when not emitted.
    let mut extra: Vec<&str> = match sc_cfg.spectrum.signal.as_str() {
        "I_a" => vec!["I_x", "I_y"],
        "U_a" => vec!["U_x", "U_y"],
        s => vec![s],
    };
    if let Some((s, _)) = &sc_cfg.envelope {
        extra.push(s);
    }
    for s in extra {
        if !scenario.signals.iter().any(|x| x == s) {
            scenario.signals.push(s.to_string());
        }
    }
    let emitted = sc_cfg.scenario.signals.len();

    let state = init_steady_state(&cfg.case)?;
    let trace = simulate_scenario(&state, &scenario)?;
    let mut header = vec!["t_s"];
    header.extend(sc_cfg.scenario.signals.iter().map(String::as_str));
    out.csv(
        "trace.csv",
        &header,
        (0..trace.t.len()).map(|k| {
            std::iter::once(Cell::Float(trace.t[k]))
                .chain(trace.data[..emitted].iter().map(|col| Cell::Float(col[k])))
                .collect()
        }),
    )?;

    let mut rows: Vec<(&str, String)> = vec![
        ("command", "simulate".to_string()),
        ("diverged", trace.diverged.to_string()),
        (
            "diverged_at",
            trace
                .diverged_at
                .map_or_else(|| "none".to_string(), fmt_float),
        ),
    ];
    let mut summary = format!(
        "simulated {} s with dt = {} s: {}\n",
        scenario.duration,
        scenario.dt,
        if trace.diverged {
            "diverged"
        } else {
            "bounded"
        }
    );

    let sp = &sc_cfg.spectrum;
    let series = series_for(&trace, &sp.signal, cfg.case.omega_0())?;
    match analysis_window(&trace, &series, sp.start, sp.end) {
        Ok((window, fs)) => {
            let spec = amplitude_spectrum(window, fs);
            out.csv(
                "spectrum.csv",
                SPECTRUM_HEADER,
                spec.freq_hz
                    .iter()
                    .zip(&spec.magnitude)
                    .take_while(|(f, _)| **f <= sp.f_max)
                    .map(|(f, m)| vec![Cell::Float(*f), Cell::Float(*m)]),
            )?;
            let peaks = series_spectrum_peaks(&trace, &series, sp.start, sp.end, sp.top_k)?;
            out.csv(
                "peaks.csv",
                SPECTRUM_HEADER,
                peaks
                    .iter()
                    .map(|p| vec![Cell::Float(p.freq_hz), Cell::Float(p.magnitude)]),
            )?;
            let list: Vec<String> = peaks.iter().map(|p| format!("{:.2}", p.freq_hz)).collect();
            let _ = writeln!(
                summary,
                "{} spectrum peaks (Hz): {}",
                sp.signal,
                list.join(", ")
            );
            rows.push(("spectrum_peaks_hz", list.join(" ")));
        }
        Err(e) if trace.diverged => {
            // The run stopped before the window; leave header-only files.
            log::warn!("spectrum skipped: {e}");
            out.csv("spectrum.csv", SPECTRUM_HEADER, Vec::new())?;
            out.csv("peaks.csv", SPECTRUM_HEADER, Vec::new())?;
            rows.push(("spectrum_peaks_hz", "none".to_string()));
        }
        Err(e) => return Err(e.into()),
    }

    if let Some((signal, start)) = &sc_cfg.envelope {
        let fit = envelope_rate(&trace, signal, *start, 0.0)?;
        let _ = writeln!(summary, "envelope rate of {signal}: {:.4} 1/s", fit.rate);
        rows.push(("envelope_rate", fmt_float(fit.rate)));
    }
    if opts.dt_halve {
        let diff = dt_halving_check(&state, &scenario)?;
        let _ = writeln!(summary, "dt-halving change of final values: {diff:.3e}");
        rows.push(("dt_halve_max_change", fmt_float(diff)));
        if diff >= 1e-4 {
            out.verdict(&rows)?;
            return Err(CliError::Convergence(format!(
                "halving dt changes the final values by {diff:.3e} (limit 1e-4)"
            )));
        }
    }
    out.verdict(&rows)?;
    Ok(Outcome {
        exit_code: EXIT_STABLE,
        summary,
    })
}
