//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so each line reports its own
//! measured values and runtime.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use gisc_core::case::StudyCase;
use gisc_core::gisc::{
    analyze, assemble_open_loop, loop_set_verdict, weak_grid_sweep, CriterionMode, LocusRegion,
    NyquistConfig,
};
use gisc_core::network::{aggregate_grid_admittance, sequence_impedances, GridParams};
use gisc_core::plant::{ModelVariant, OuterLoop};
use gisc_core::poles::{
    case_poles, critical_parameter, critical_parameter_nyquist, CharacteristicForm,
};
use gisc_core::ratfun::{
    similarity_diagonalize, undiagonalize, AdmittanceMatrix2, CPolynomial, RationalFunction,
};
use gisc_core::timedom::{
    envelope_rate, init_steady_state, measure_admittance, reconstruct_phase_signal,
    series_spectrum_peaks, simulate_scenario, Event, PhaseQuantity, ResponseConfig, Scenario,
};
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;

const W0: f64 = 2.0 * PI * 50.0;
const COMMANDS: [&str; 5] = ["analyze", "nyquist", "rootlocus", "weakgrid", "simulate"];
const FORM: CharacteristicForm = CharacteristicForm::Det2x2;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn table2() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("table2.cfg")
}

fn run_cli(cmd: &str, sets: &[&str], out: &Path) -> i32 {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gisc"));
    c.arg(cmd)
        .arg("--config")
        .arg(table2())
        .arg("--out")
        .arg(out);
    for s in sets {
        c.arg("--set").arg(s);
    }
    c.output()
        .expect("gisc binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn verdict(out: &Path) -> BTreeMap<String, String> {
    std::fs::read_to_string(out.join("verdict.csv"))
        .unwrap_or_default()
        .lines()
        .skip(1)
        .filter_map(|l| {
            l.split_once(',')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| {
                    (
                        e.file_name().to_string_lossy().into_owned(),
                        std::fs::read(e.path()).unwrap(),
                    )
                })
                .collect()
        })
        .unwrap_or_default()
}

/// A 50 ms dip of the d-axis reference excites the PLL mode.
fn kicked(duration: f64) -> Scenario {
    let mut sc = Scenario::new(duration);
    for (time, value) in [(0.5, 0.98), (0.55, 1.0)] {
        sc.events.push(Event {
            time,
            param: "I_dref".into(),
            value,
        });
    }
    sc
}

fn bracketing() -> Outcome {
    let mut notes = Vec::new();
    for (l, code, rhp) in [("0.20", 0, "0"), ("0.26", 1, "2")] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let t = Instant::now();
        let got = run_cli("analyze", &[&format!("L_line={l}")], dir.path());
        let secs = t.elapsed().as_secs_f64();
        let v = verdict(dir.path());
        let nyq = v
            .get("rhp_closed_loop_poles")
            .map(String::as_str)
            .unwrap_or("?");
        let pol = v.get("pole_rhp_count").map(String::as_str).unwrap_or("?");
        ensure(
            got == code && nyq == rhp && pol == rhp && secs < 5.0,
            || format!("L={l}: exit {got}, Nyquist RHP {nyq}, pole RHP {pol}, {secs:.2} s"),
        )?;
        notes.push(format!("L={l} exit {got} RHP {nyq} ({secs:.2} s)"));
    }
    Ok(notes.join("; "))
}

fn critical() -> Result<(String, f64), String> {
    let base = StudyCase::case_study(0.2);
    let t = Instant::now();
    let lc = critical_parameter(&base, "L_line", (0.20, 0.26), FORM).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let ln = critical_parameter_nyquist(&base, "L_line", (0.20, 0.26), &NyquistConfig::default())
        .map_err(|e| e.to_string())?;
    let msg = format!("pole-based {lc:.5}, Nyquist-based {ln:.5} pu ({secs:.2} s)");
    ensure(
        (0.21..=0.25).contains(&lc) && (lc - ln).abs() <= 1e-3 && secs < 60.0,
        || msg.clone(),
    )?;
    Ok((msg, lc))
}

fn oscillation(lc: f64) -> Outcome {
    let base = StudyCase::case_study(0.2);
    let dom = case_poles(
        &base.with_param("L_line", lc).map_err(|e| e.to_string())?,
        FORM,
    )
    .map_err(|e| e.to_string())?
    .dominant
    .ok_or("no dominant pole")?;
    let f_r = dom.im.abs() / (2.0 * PI);
    ensure((6.0..=10.0).contains(&f_r), || {
        format!("dominant pole {dom} at {f_r:.3} Hz")
    })?;

    let t = Instant::now();
    let mut sc = Scenario::new(10.0);
    sc.events.push(Event {
        time: 5.0,
        param: "L_line".into(),
        value: lc,
    });
    let state = init_steady_state(&base).map_err(|e| e.to_string())?;
    let trace = simulate_scenario(&state, &sc).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let ia =
        reconstruct_phase_signal(&trace, PhaseQuantity::Current, W0).map_err(|e| e.to_string())?;
    let peaks = series_spectrum_peaks(&trace, &ia, 5.0, 10.0, 3).map_err(|e| e.to_string())?;
    let freqs: Vec<f64> = peaks.iter().map(|p| p.freq_hz).collect();
    let lower = freqs.iter().any(|f| (40.0..=44.0).contains(f));
    let upper = freqs.iter().any(|f| (56.0..=60.0).contains(f));
    let msg = format!("f_R {f_r:.3} Hz; I_a peaks {freqs:.2?} Hz; 10 s run in {secs:.2} s");
    ensure(!trace.diverged && lower && upper && secs < 120.0, || {
        msg.clone()
    })?;
    Ok(msg)
}

fn oracle_triangle() -> Outcome {
    let cfg = NyquistConfig::default();
    let mut notes = Vec::new();
    for l in [0.15, 0.20, 0.26, 0.30] {
        let case = StudyCase::case_study(l);
        let lin = case.linearize().map_err(|e| e.to_string())?;
        let nyq_stable = analyze(&lin.y_conv, &lin.y_grid, None, &cfg)
            .map_err(|e| e.to_string())?
            .verdict
            .rhp_closed_loop_poles
            == 0;
        let poles = case_poles(&case, FORM).map_err(|e| e.to_string())?;
        let sigma = poles.dominant.ok_or("no dominant pole")?.re;
        let trace = simulate_scenario(
            &init_steady_state(&case).map_err(|e| e.to_string())?,
            &kicked(10.0),
        )
        .map_err(|e| e.to_string())?;
        let fit = envelope_rate(&trace, "omega_dev", 2.05, 0.0).map_err(|e| e.to_string())?;
        let env_stable = fit.rate < 0.0;
        let msg = format!(
            "L={l}: Nyquist {nyq_stable}, poles {}, envelope {:.4} vs pole {sigma:.4}",
            poles.is_stable(),
            fit.rate
        );
        ensure(
            nyq_stable == poles.is_stable() && nyq_stable == env_stable,
            || msg.clone(),
        )?;
        if nyq_stable {
            ensure((fit.rate - sigma).abs() <= 0.2 * sigma.abs(), || {
                msg.clone()
            })?;
        }
        notes.push(format!(
            "L={l} {} σ_env {:.4}/σ_pole {sigma:.4}",
            if nyq_stable { "stable" } else { "unstable" },
            fit.rate
        ));
    }
    Ok(notes.join("; "))
}

fn random_medium() -> impl Strategy<Value = StudyCase> {
    prop::array::uniform6(0.5..1.5f64).prop_map(|k| {
        let mut case = StudyCase::case_study(0.2 * k[0]);
        let cp = &mut case.converter;
        cp.k_pi *= k[1];
        cp.k_ii *= k[2];
        cp.k_ppll *= k[3];
        cp.k_ipll *= k[4];
        cp.l_f *= k[5];
        case
    })
}

/// Proper real rational function with negative real poles.
fn real_rational() -> impl Strategy<Value = RationalFunction> {
    (
        prop::collection::vec(-3.0..3.0f64, 1..3),
        prop::collection::vec(0.2..5.0f64, 2..4),
    )
        .prop_map(|(num, poles)| {
            let roots: Vec<Complex64> = poles.iter().map(|p| Complex64::new(-p, 0.0)).collect();
            let den: Vec<f64> = CPolynomial::from_roots(&roots, Complex64::new(1.0, 0.0))
                .coeffs()
                .iter()
                .map(|z| z.re)
                .collect();
            RationalFunction::from_real(&num, &den).unwrap()
        })
}

fn runner(cases: u32) -> TestRunner {
    let cfg = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(cfg, TestRunner::deterministic().new_rng())
}

fn reductions() -> Outcome {
    runner(50)
        .run(&random_medium(), |case| {
            let lin = case.linearize().unwrap();
            let l1 = assemble_open_loop(&lin.y_conv, &lin.y_grid, CriterionMode::Gisc1).unwrap();
            let l2 = assemble_open_loop(&lin.y_conv, &lin.y_grid, CriterionMode::Gisc2).unwrap();
            prop_assert!(l1.loops[0].approx_eq(&l2.loops[0], 1e-9));
            Ok(())
        })
        .map_err(|e| format!("GISC2 vs GISC1: {e}"))?;

    runner(50)
        .run(&(real_rational(), real_rational()), |(a, b)| {
            let m = AdmittanceMatrix2::rotation_like(a, b);
            let (yp, ym) = similarity_diagonalize(&m).unwrap();
            prop_assert!(undiagonalize(&yp, &ym).approx_eq(&m, 1e-9));
            Ok(())
        })
        .map_err(|e| format!("diagonalization: {e}"))?;

    let grids = (0.02..1.0f64, 0.0..0.2f64, -0.5..0.5f64, -0.5..0.5f64);
    runner(50)
        .run(&grids, |(l, cf, phi_l, phi_c)| {
            let gp = GridParams {
                l_line: l,
                c_f: cf,
                phi_line: phi_l,
                phi_c,
                omega_0: W0,
            };
            let (zp, zm) = sequence_impedances(&aggregate_grid_admittance(&gp).unwrap()).unwrap();
            prop_assert!((&zp + &zm).scale_real(0.5).realify_check(1e-9).is_real);
            Ok(())
        })
        .map_err(|e| format!("realify: {e}"))?;

    let cfg = NyquistConfig::default();
    let values: Vec<f64> = (0..=45).map(|k| 0.05 + 0.01 * k as f64).collect();
    let points =
        weak_grid_sweep(&StudyCase::case_study(0.2), &values, &cfg).map_err(|e| e.to_string())?;
    for p in &points {
        let lin = StudyCase::case_study(p.l_line)
            .linearize()
            .map_err(|e| e.to_string())?;
        let set = assemble_open_loop(&lin.y_conv, &lin.y_grid, CriterionMode::Gisc1)
            .map_err(|e| e.to_string())?;
        let v = loop_set_verdict(&set, &cfg).map_err(|e| e.to_string())?.1;
        ensure(
            p.rhp_poles == v.rhp_closed_loop_poles
                && (p.region == LocusRegion::Stable) == (v.rhp_closed_loop_poles == 0),
            || {
                format!(
                    "weak-grid locus at L={}: {} RHP vs GISC1 {}",
                    p.l_line, p.rhp_poles, v.rhp_closed_loop_poles
                )
            },
        )?;
    }
    Ok(format!(
        "50 GISC2/GISC1 sets, 50 diagonalizations, 50 grids, {} weak-grid points",
        points.len()
    ))
}

fn dc_case() -> StudyCase {
    let mut c = StudyCase::case_study(0.2);
    c.converter.outer = OuterLoop::Dc {
        k_pdc: 2.0,
        k_idc: 30.0,
        c_dc: 0.05,
        u_dcref: 1.0,
    };
    c.converter.p_ref = 0.9;
    c.variant = ModelVariant::OuterDc;
    c
}

/// Relative error of Y_g1 and Y_g4; an entry the model holds at zero is
/// judged against 1e-3 of its row.
fn fidelity() -> Outcome {
    const FREQS: [f64; 8] = [2.0, 4.0, 8.7, 15.0, 30.0, 60.0, 110.0, 200.0];
    let mut worst = 0.0f64;
    for case in [StudyCase::case_study(0.2), dc_case()] {
        let lin = case.linearize().map_err(|e| e.to_string())?;
        for f in FREQS {
            let meas = measure_admittance(&case, f, &ResponseConfig::default())
                .map_err(|e| e.to_string())?;
            let model = lin
                .y_conv
                .eval(Complex64::new(0.0, 2.0 * PI * f))
                .map_err(|e| e.to_string())?;
            for k in 0..2 {
                let scale = model[k][0].norm().max(model[k][1].norm());
                let rel = (meas[k][k] - model[k][k]).norm()
                    / model[k][k].norm().max(1e-3 * scale).max(1e-9);
                worst = worst.max(rel);
                ensure(rel <= 0.05, || {
                    format!(
                        "{} Y_g{} at {f} Hz: measured {} model {} ({:.2}%)",
                        case.variant.name(),
                        if k == 0 { 1 } else { 4 },
                        meas[k][k],
                        model[k][k],
                        100.0 * rel
                    )
                })?;
            }
        }
    }
    Ok(format!(
        "Medium and OuterDC at {} frequencies, worst {:.3}%",
        FREQS.len(),
        100.0 * worst
    ))
}

fn determinism() -> Outcome {
    let golden_root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for cmd in COMMANDS {
        let a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let b = tempfile::tempdir().map_err(|e| e.to_string())?;
        run_cli(cmd, &[], a.path());
        run_cli(cmd, &[], b.path());
        let (fa, fb) = (files(a.path()), files(b.path()));
        ensure(!fa.is_empty() && fa == fb, || {
            format!("{cmd}: reruns differ")
        })?;
        ensure(fa == files(&golden_root.join(cmd)), || {
            format!("{cmd}: output differs from golden files")
        })?;
    }
    Ok(format!(
        "{} commands byte-identical across reruns and golden files",
        COMMANDS.len()
    ))
}

fn report(id: u32, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = t.elapsed().as_secs_f64();
    match &res {
        Ok(msg) => println!("PASS {id} {title}: {msg} [{secs:.1} s]"),
        Err(msg) => println!("FAIL {id} {title}: {msg} [{secs:.1} s]"),
    }
    res.is_ok()
}

fn main() {
    let mut lc = None;
    let mut results = vec![report(1, "stable/unstable bracketing", bracketing)];
    results.push(report(2, "critical inductance", || {
        let (msg, v) = critical()?;
        lc = Some(v);
        Ok(msg)
    }));
    results.push(report(3, "oscillation frequency", || {
        let lc = match lc {
            Some(v) => v,
            None => critical()?.1,
        };
        oscillation(lc)
    }));
    results.push(report(4, "oracle triangle", oracle_triangle));
    results.push(report(5, "reduction identities", reductions));
    results.push(report(6, "linearization fidelity", fidelity));
    results.push(report(7, "determinism and regression", determinism));
    let failed = results.iter().filter(|ok| !**ok).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
