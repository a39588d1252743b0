//! Nonlinear simulation against the small-signal verdicts.

use std::f64::consts::PI;

use gisc_core::case::StudyCase;
use gisc_core::poles::{case_poles, critical_parameter, CharacteristicForm};
use gisc_core::timedom::{
    dt_halving_check, envelope_rate, init_steady_state, reconstruct_phase_signal,
    series_spectrum_peaks, simulate_scenario, Event, PhaseQuantity, Scenario,
};

const W0: f64 = 2.0 * PI * 50.0;

/// A 50 ms dip of the d-axis reference excites the PLL mode.
fn kicked(duration: f64) -> Scenario {
    let mut sc = Scenario::new(duration);
    sc.events.push(Event {
        time: 0.5,
        param: "I_dref".into(),
        value: 0.98,
    });
    sc.events.push(Event {
        time: 0.55,
        param: "I_dref".into(),
        value: 1.0,
    });
    sc
}

#[test]
fn envelope_tracks_dominant_pole() {
    for l in [0.15, 0.20, 0.26, 0.30] {
        let case = StudyCase::case_study(l);
        let sigma = case_poles(&case, CharacteristicForm::Det2x2)
            .unwrap()
            .dominant
            .unwrap()
            .re;
        let trace = simulate_scenario(&init_steady_state(&case).unwrap(), &kicked(10.0)).unwrap();
        let fit = envelope_rate(&trace, "omega_dev", 2.05, 0.0).unwrap();
        assert!(
            (fit.rate - sigma).abs() <= 0.2 * sigma.abs(),
            "L = {l}: envelope {} against pole {sigma}",
            fit.rate
        );
    }
}

#[test]
fn critical_point_shows_twin_sidebands() {
    let base = StudyCase::case_study(0.2);
    let lc = critical_parameter(&base, "L_line", (0.2, 0.26), CharacteristicForm::Det2x2).unwrap();
    let mut sc = Scenario::new(10.0);
    sc.events.push(Event {
        time: 5.0,
        param: "L_line".into(),
        value: lc,
    });
    let trace = simulate_scenario(&init_steady_state(&base).unwrap(), &sc).unwrap();
    assert!(!trace.diverged);
    let ia = reconstruct_phase_signal(&trace, PhaseQuantity::Current, W0).unwrap();
    let peaks = series_spectrum_peaks(&trace, &ia, 5.0, 10.0, 3).unwrap();
    assert!((peaks[0].freq_hz - 50.0).abs() < 0.1);
    let side: Vec<f64> = peaks[1..].iter().map(|p| p.freq_hz).collect();
    assert!(side.iter().any(|f| (40.0..=44.0).contains(f)), "{side:?}");
    assert!(side.iter().any(|f| (56.0..=60.0).contains(f)), "{side:?}");
}

#[test]
fn halving_the_step_changes_little() {
    let state = init_steady_state(&StudyCase::case_study(0.2)).unwrap();
    assert!(dt_halving_check(&state, &kicked(2.0)).unwrap() < 1e-4);
}

#[test]
fn line_step_keeps_current_continuous() {
    let state = init_steady_state(&StudyCase::case_study(0.2)).unwrap();
    let mut sc = Scenario::new(0.2);
    sc.record_dt = sc.dt;
    sc.events.push(Event {
        time: 0.1,
        param: "L_line".into(),
        value: 0.24,
    });
    let trace = simulate_scenario(&state, &sc).unwrap();
    let ix = trace.column("I_x").unwrap();
    let jump = ix
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    assert!(jump < 1e-3, "largest step-to-step change {jump}");
}
