//! Average-model nonlinear simulator of the converter on its grid.
//!
//! Circuit states live in the grid (xy) frame rotating at `ω₀`; controller
//! states live in the PLL frame, which leads the xy frame by the angle `ε`.
//! Per-unit inductances `L` act as `(L/ω_b)·d/dt + jL` in the rotating frame.
//! The converter current `I` is the current injected into the PCC.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::case::StudyCase;
use crate::error::{Error, Result};
use crate::plant::{OperatingPoint, OuterLoop};

/// Magnitude (pu) past which a run counts as diverged. The PLL angle is
/// exempt.
pub const DIVERGENCE_LIMIT: f64 = 1e3;

/// Largest state derivative accepted at initialization.
pub const INIT_TOL: f64 = 1e-8;

pub const DEFAULT_DT: f64 = 50e-6;

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Prescribed PCC voltage in the xy frame as a function of time.
pub type VoltageSource = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

#[derive(Clone)]
enum Pcc {
    Grid,
    Stiff(VoltageSource),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Outer {
    None,
    Pq,
    Dc,
}

/// Positions of the optional state blocks.
#[derive(Clone, Copy, Debug)]
struct Layout {
    cap: Option<usize>,
    ff: Option<usize>,
    outer: Outer,
    outer_at: usize,
    len: usize,
}

const EPS: usize = 0;
const X_PLL: usize = 1;
const X_CC: usize = 2;
const I_CONV: usize = 4;

impl Layout {
    fn new(cap: bool, ff: bool, outer: Outer) -> Self {
        let mut n = 6;
        let cap = cap.then(|| {
            n += 4;
            n - 4
        });
        let ff = ff.then(|| {
            n += 2;
            n - 2
        });
        let outer_at = n;
        n += match outer {
            Outer::None => 0,
            Outer::Pq => 4,
            Outer::Dc => 2,
        };
        Self {
            cap,
            ff,
            outer,
            outer_at,
            len: n,
        }
    }

    fn state_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["eps_pll", "x_pll", "x_cc_d", "x_cc_q", "I_x", "I_y"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        if self.cap.is_some() {
            names.extend(["U_x", "U_y", "I_lx", "I_ly"].map(String::from));
        }
        if self.ff.is_some() {
            names.extend(["U_ff_d", "U_ff_q"].map(String::from));
        }
        match self.outer {
            Outer::None => {}
            Outer::Pq => names.extend(["P_meas", "Q_meas", "x_p", "x_q"].map(String::from)),
            Outer::Dc => names.extend(["U_dc", "x_dc"].map(String::from)),
        }
        names
    }
}

/// Algebraic quantities at one instant.
#[derive(Clone, Copy, Debug, Default)]
pub struct Aux {
    pub i_xy: Complex64,
    pub u_xy: Complex64,
    pub i_dq: Complex64,
    pub u_dq: Complex64,
    pub il_xy: Complex64,
    pub omega_dev: f64,
    pub eps: f64,
    pub p: f64,
    pub q: f64,
    pub u_dc: f64,
}

/// Recordable signal names.
pub const SIGNALS: [&str; 17] = [
    "I_d",
    "I_q",
    "I_x",
    "I_y",
    "U_d",
    "U_q",
    "U_x",
    "U_y",
    "I_lx",
    "I_ly",
    "omega_dev",
    "eps_pll",
    "P",
    "Q",
    "U_dc",
    "I_mag",
    "U_mag",
];

impl Aux {
    fn signal(&self, name: &str) -> f64 {
        match name {
            "I_d" => self.i_dq.re,
            "I_q" => self.i_dq.im,
            "I_x" => self.i_xy.re,
            "I_y" => self.i_xy.im,
            "U_d" => self.u_dq.re,
            "U_q" => self.u_dq.im,
            "U_x" => self.u_xy.re,
            "U_y" => self.u_xy.im,
            "I_lx" => self.il_xy.re,
            "I_ly" => self.il_xy.im,
            "omega_dev" => self.omega_dev,
            "eps_pll" => self.eps,
            "P" => self.p,
            "Q" => self.q,
            "U_dc" => self.u_dc,
            "I_mag" => self.i_xy.norm(),
            "U_mag" => self.u_xy.norm(),
            _ => f64::NAN,
        }
    }
}

/// The nonlinear model with its current parameter values.
#[derive(Clone)]
pub struct SimModel {
    case: StudyCase,
    layout: Layout,
    pcc: Pcc,
}

impl std::fmt::Debug for SimModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimModel")
            .field("case", &self.case)
            .field("layout", &self.layout)
            .field("stiff", &matches!(self.pcc, Pcc::Stiff(_)))
            .finish()
    }
}

impl SimModel {
    pub fn case(&self) -> &StudyCase {
        &self.case
    }

    pub fn state_names(&self) -> Vec<String> {
        self.layout.state_names()
    }

    /// Writes `dx/dt` and returns the algebraic quantities.
    pub fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Aux {
        let cp = &self.case.converter;
        let wb = self.case.omega_0();
        let (a, xf) = (cp.l_f / wb, cp.l_f);
        let (b, xl) = (self.case.l_line / wb, self.case.l_line);
        let e = Complex64::new(self.case.e_grid, 0.0);

        let eps = x[EPS];
        let rot = Complex64::from_polar(1.0, -eps);
        let i = Complex64::new(x[I_CONV], x[I_CONV + 1]);
        let i_dq = i * rot;
        let x_cc = Complex64::new(x[X_CC], x[X_CC + 1]);

        let lo = &self.layout;
        let o = lo.outer_at;
        let (i_ref, u_dc) = match (lo.outer, cp.outer) {
            (Outer::Pq, OuterLoop::Pq { k_pp, .. }) => {
                let (pm, qm, xp, xq) = (x[o], x[o + 1], x[o + 2], x[o + 3]);
                let id = k_pp * (cp.p_ref - pm) + xp;
                let iq = -(k_pp * (cp.q_ref - qm) + xq);
                (Complex64::new(id, iq), 1.0)
            }
            (Outer::Dc, OuterLoop::Dc { k_pdc, u_dcref, .. }) => {
                let (udc, xdc) = (x[o], x[o + 1]);
                (
                    Complex64::new(k_pdc * (udc - u_dcref) + xdc, cp.i_qref),
                    udc,
                )
            }
            _ => (Complex64::new(cp.i_dref, cp.i_qref), 1.0),
        };

        let err = i_ref - i_dq;
        let mut v_dq = cp.k_pi * err + x_cc + J * xf * i_dq;
        if let Some(k) = lo.ff {
            v_dq += Complex64::new(x[k], x[k + 1]);
        }
        // With G_FF ≡ 1 the PCC voltage is fed forward unfiltered, so it
        // cancels from the filter equation.
        let gamma = if lo.ff.is_some() { 0.0 } else { 1.0 };
        let v_xy = v_dq * rot.conj();

        let (di, u, il) = match (&self.pcc, lo.cap) {
            (Pcc::Stiff(src), _) => {
                let u = src(t);
                ((v_xy - (1.0 - gamma) * u - J * xf * i) / a, u, i)
            }
            (Pcc::Grid, None) => {
                let di = (v_xy - (1.0 - gamma) * (e + J * xl * i) - J * xf * i)
                    / (a + (1.0 - gamma) * b);
                (di, e + b * di + J * xl * i, i)
            }
            (Pcc::Grid, Some(k)) => {
                let u = Complex64::new(x[k], x[k + 1]);
                let il = Complex64::new(x[k + 2], x[k + 3]);
                let c = self.case.c_f;
                let du = (i - il - J * c * u) * (wb / c);
                let dil = (u - e - J * xl * il) / b;
                dx[k] = du.re;
                dx[k + 1] = du.im;
                dx[k + 2] = dil.re;
                dx[k + 3] = dil.im;
                ((v_xy - (1.0 - gamma) * u - J * xf * i) / a, u, il)
            }
        };
        dx[I_CONV] = di.re;
        dx[I_CONV + 1] = di.im;

        let u_dq = u * rot;
        let omega_dev = cp.k_ppll * u_dq.im + x[X_PLL];
        dx[EPS] = omega_dev;
        dx[X_PLL] = cp.k_ipll * u_dq.im;
        dx[X_CC] = cp.k_ii * err.re;
        dx[X_CC + 1] = cp.k_ii * err.im;
        if let Some(k) = lo.ff {
            dx[k] = (u_dq.re - x[k]) / cp.t_ff;
            dx[k + 1] = (u_dq.im - x[k + 1]) / cp.t_ff;
        }

        let s = u_dq * i_dq.conj();
        let (p, q) = (s.re, s.im);
        match cp.outer {
            OuterLoop::Pq { k_ip, t_p, .. } if lo.outer == Outer::Pq => {
                dx[o] = (p - x[o]) / t_p;
                dx[o + 1] = (q - x[o + 1]) / t_p;
                dx[o + 2] = k_ip * (cp.p_ref - x[o]);
                dx[o + 3] = k_ip * (cp.q_ref - x[o + 1]);
            }
            OuterLoop::Dc {
                k_idc,
                c_dc,
                u_dcref,
                ..
            } if lo.outer == Outer::Dc => {
                dx[o] = (cp.p_ref - p) / (x[o] * c_dc);
                dx[o + 1] = k_idc * (x[o] - u_dcref);
            }
            _ => {}
        }

        Aux {
            i_xy: i,
            u_xy: u,
            i_dq,
            u_dq,
            il_xy: il,
            omega_dev,
            eps,
            p,
            q,
            u_dc,
        }
    }

    pub fn aux(&self, t: f64, x: &[f64]) -> Aux {
        let mut dx = vec![0.0; x.len()];
        self.eval(t, x, &mut dx)
    }

    fn rk4_step(&self, t: f64, dt: f64, x: &mut [f64], work: &mut [Vec<f64>; 5]) {
        let n = x.len();
        let [k1, k2, k3, k4, tmp] = work;
        self.eval(t, x, k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        self.eval(t + 0.5 * dt, tmp, k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        self.eval(t + 0.5 * dt, tmp, k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        self.eval(t + dt, tmp, k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Model plus state at a time instant.
#[derive(Clone, Debug)]
pub struct SimState {
    pub model: SimModel,
    pub t: f64,
    pub x: Vec<f64>,
    pub op: OperatingPoint,
}

fn build(case: &StudyCase, pcc: Pcc) -> Result<(SimModel, OperatingPoint, Vec<f64>)> {
    let op = case.operating_point()?;
    let cp = &case.converter;
    let stiff = matches!(pcc, Pcc::Stiff(_));
    let outer = match cp.outer {
        OuterLoop::None => Outer::None,
        OuterLoop::Pq { t_p, .. } => {
            if !(t_p > 0.0) {
                return Err(Error::invalid(
                    "T_p",
                    "the simulator needs a power filter with T_p > 0",
                ));
            }
            Outer::Pq
        }
        OuterLoop::Dc { .. } => Outer::Dc,
    };
    let layout = Layout::new(case.c_f > 0.0 && !stiff, cp.t_ff > 0.0, outer);
    let model = SimModel {
        case: case.clone(),
        layout,
        pcc,
    };

    let rot = Complex64::from_polar(1.0, op.delta0);
    let i_dq = Complex64::new(op.i_d0(), op.i_q0());
    let u = op.u0 * rot;
    let i = i_dq * rot;
    let mut x = vec![0.0; layout.len];
    x[EPS] = op.delta0;
    x[I_CONV] = i.re;
    x[I_CONV + 1] = i.im;
    // Zero controller error and unity feed-forward at DC leave nothing for
    // the current-controller integrators to hold.
    let v_c = u + J * cp.l_f * i;
    let x_cc = (v_c * rot.conj()) - op.u0 - J * cp.l_f * i_dq;
    x[X_CC] = x_cc.re;
    x[X_CC + 1] = x_cc.im;
    if let Some(k) = layout.cap {
        let il = i - J * case.c_f * u;
        x[k] = u.re;
        x[k + 1] = u.im;
        x[k + 2] = il.re;
        x[k + 3] = il.im;
    }
    if let Some(k) = layout.ff {
        x[k] = op.u0;
    }
    let o = layout.outer_at;
    match cp.outer {
        OuterLoop::Pq { .. } => {
            x[o] = op.u0 * op.i_d0();
            x[o + 1] = -op.u0 * op.i_q0();
            x[o + 2] = op.i_d0();
            x[o + 3] = -op.i_q0();
        }
        OuterLoop::Dc { u_dcref, .. } => {
            x[o] = u_dcref;
            x[o + 1] = op.i_d0();
        }
        OuterLoop::None => {}
    }
    Ok((model, op, x))
}

fn check_steady(model: &SimModel, x: &[f64]) -> Result<()> {
    let mut dx = vec![0.0; x.len()];
    model.eval(0.0, x, &mut dx);
    let names = model.state_names();
    let (k, worst) = dx
        .iter()
        .enumerate()
        .map(|(k, d)| (k, d.abs()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0));
    if !(worst < INIT_TOL) {
        return Err(Error::Initialization {
            state: names[k].clone(),
            derivative: worst,
        });
    }
    Ok(())
}

/// Steady state of the grid-connected converter at the solved operating
/// point; every state derivative is checked against [`INIT_TOL`].
pub fn init_steady_state(case: &StudyCase) -> Result<SimState> {
    let (model, op, x) = build(case, Pcc::Grid)?;
    check_steady(&model, &x)?;
    Ok(SimState {
        model,
        t: 0.0,
        x,
        op,
    })
}

/// Steady state with the PCC voltage prescribed by `source`, which must equal
/// the operating-point voltage at `t = 0`.
pub fn init_stiff_source(case: &StudyCase, source: VoltageSource) -> Result<SimState> {
    let (model, op, x) = build(case, Pcc::Stiff(source))?;
    check_steady(&model, &x)?;
    Ok(SimState {
        model,
        t: 0.0,
        x,
        op,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    /// Any name accepted by [`StudyCase::set_param`] except `C_f` and `f_0`.
    pub param: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub duration: f64,
    pub dt: f64,
    /// Spacing of recorded samples; rounded to a whole number of steps.
    pub record_dt: f64,
    pub events: Vec<Event>,
    pub signals: Vec<String>,
}

impl Scenario {
    pub fn new(duration: f64) -> Self {
        Self {
            duration,
            dt: DEFAULT_DT,
            record_dt: 5e-4,
            events: Vec::new(),
            signals: [
                "I_d",
                "I_q",
                "I_x",
                "I_y",
                "U_d",
                "U_q",
                "U_x",
                "U_y",
                "omega_dev",
            ]
            .map(String::from)
            .to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("duration", "must be > 0"));
        }
        if !(self.record_dt >= self.dt) {
            return Err(Error::invalid("record_dt", "must be ≥ dt"));
        }
        for e in &self.events {
            if !(e.time >= 0.0 && e.time <= self.duration) {
                return Err(Error::invalid(
                    "event",
                    format!("time {} outside [0, duration]", e.time),
                ));
            }
            if e.param == "C_f" || e.param == "f_0" {
                return Err(Error::invalid(
                    "event",
                    format!("{} cannot change during a run", e.param),
                ));
            }
        }
        for s in &self.signals {
            if !SIGNALS.contains(&s.as_str()) {
                return Err(Error::UnknownSignal(s.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SimTrace {
    pub signals: Vec<String>,
    pub t: Vec<f64>,
    /// One column per signal.
    pub data: Vec<Vec<f64>>,
    pub diverged: bool,
    pub diverged_at: Option<f64>,
}

impl SimTrace {
    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.signals
            .iter()
            .position(|s| s == name)
            .map(|k| self.data[k].as_slice())
            .ok_or_else(|| Error::UnknownSignal(name.to_string()))
    }

    pub fn sample_interval(&self) -> f64 {
        if self.t.len() < 2 {
            return 0.0;
        }
        (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64
    }
}

fn diverged(x: &[f64]) -> bool {
    x.iter()
        .enumerate()
        .any(|(k, v)| !v.is_finite() || (k != EPS && v.abs() > DIVERGENCE_LIMIT))
}

/// Fixed-step RK4 integration. Events fire at the first step boundary at or
/// after their time; states are continuous across them, so inductor
/// currents are preserved.
pub fn simulate_scenario(state0: &SimState, scenario: &Scenario) -> Result<SimTrace> {
    scenario.validate()?;
    let mut model = state0.model.clone();
    let mut x = state0.x.clone();
    let n = x.len();
    let dt = scenario.dt;
    let steps = (scenario.duration / dt).round() as usize;
    let every = ((scenario.record_dt / dt).round() as usize).max(1);
    let mut events = scenario.events.clone();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut next_event = 0;

    let mut trace = SimTrace {
        signals: scenario.signals.clone(),
        t: Vec::with_capacity(steps / every + 2),
        data: vec![Vec::with_capacity(steps / every + 2); scenario.signals.len()],
        diverged: false,
        diverged_at: None,
    };
    let mut work: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let t0 = state0.t;

    for k in 0..=steps {
        let t = t0 + k as f64 * dt;
        while next_event < events.len() && events[next_event].time <= t - t0 + 0.5 * dt {
            let e = &events[next_event];
            model.case.set_param(&e.param, e.value)?;
            next_event += 1;
        }
        if k % every == 0 || k == steps {
            let aux = model.aux(t, &x);
            trace.t.push(t);
            for (col, name) in trace.data.iter_mut().zip(&scenario.signals) {
                col.push(aux.signal(name));
            }
        }
        if k == steps {
            break;
        }
        model.rk4_step(t, dt, &mut x, &mut work);
        if diverged(&x) {
            trace.diverged = true;
            trace.diverged_at = Some(t + dt);
            log::info!("simulation diverged at t = {:.4} s", t + dt);
            break;
        }
    }
    Ok(trace)
}

/// Runs the scenario at `dt` and `dt/2` and returns the largest difference of
/// the final recorded values.
pub fn dt_halving_check(state0: &SimState, scenario: &Scenario) -> Result<f64> {
    let coarse = simulate_scenario(state0, scenario)?;
    let mut fine_s = scenario.clone();
    fine_s.dt = scenario.dt / 2.0;
    let fine = simulate_scenario(state0, &fine_s)?;
    Ok(coarse
        .data
        .iter()
        .zip(&fine.data)
        .map(|(a, b)| (a.last().unwrap_or(&0.0) - b.last().unwrap_or(&0.0)).abs())
        .fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseQuantity {
    Current,
    Voltage,
}

/// Phase-a waveform `x_a = x_x·cos(ω₀t) − x_y·sin(ω₀t)`.
pub fn reconstruct_phase_signal(
    trace: &SimTrace,
    quantity: PhaseQuantity,
    omega_0: f64,
) -> Result<Vec<f64>> {
    let (xn, yn) = match quantity {
        PhaseQuantity::Current => ("I_x", "I_y"),
        PhaseQuantity::Voltage => ("U_x", "U_y"),
    };
    let (xs, ys) = (trace.column(xn)?, trace.column(yn)?);
    Ok(trace
        .t
        .iter()
        .zip(xs.iter().zip(ys))
        .map(|(t, (x, y))| x * (omega_0 * t).cos() - y * (omega_0 * t).sin())
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumPeak {
    pub freq_hz: f64,
    pub magnitude: f64,
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    pub freq_hz: Vec<f64>,
    pub magnitude: Vec<f64>,
}

/// Zero-padding factor of the spectrum.
const PAD: usize = 4;

/// Minimum analysis window, s.
pub const MIN_WINDOW: f64 = 0.5;

/// Hann-windowed amplitude spectrum of `x` sampled at `fs` over the sample
/// range, with the mean removed and ×4 zero padding.
pub fn amplitude_spectrum(x: &[f64], fs: f64) -> Spectrum {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let w: Vec<f64> = (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / (n as f64 - 1.0)).cos())
        .collect();
    let wsum: f64 = w.iter().sum();
    let m = (PAD * n).next_power_of_two();
    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n {
        buf[k] = Complex64::new((x[k] - mean) * w[k], 0.0);
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let half = m / 2 + 1;
    Spectrum {
        freq_hz: (0..half).map(|k| k as f64 * fs / m as f64).collect(),
        magnitude: buf[..half].iter().map(|c| 2.0 * c.norm() / wsum).collect(),
    }
}

/// Samples of `x` (aligned with `trace.t`) inside `[start, end]`, with the
/// sample rate.
pub fn analysis_window<'a>(
    trace: &SimTrace,
    x: &'a [f64],
    start: f64,
    end: f64,
) -> Result<(&'a [f64], f64)> {
    if !(end > start) || end - start < MIN_WINDOW {
        return Err(Error::Window(format!(
            "[{start}, {end}] is shorter than {MIN_WINDOW} s"
        )));
    }
    let (t_first, t_last) = match (trace.t.first(), trace.t.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::Window("empty trace".into())),
    };
    let tol = trace.sample_interval();
    if start < t_first - tol || end > t_last + tol {
        return Err(Error::Window(format!(
            "[{start}, {end}] outside the recorded [{t_first}, {t_last}]"
        )));
    }
    let i0 = trace.t.partition_point(|t| *t < start - tol);
    let i1 = trace.t.partition_point(|t| *t <= end + tol);
    Ok((&x[i0..i1], 1.0 / trace.sample_interval()))
}

/// Local maxima of the amplitude spectrum (DC excluded), strongest first,
/// with parabolic interpolation on the log magnitude.
pub fn spectrum_peaks_of(x: &[f64], fs: f64, top_k: usize) -> Vec<SpectrumPeak> {
    let spec = amplitude_spectrum(x, fs);
    let m = &spec.magnitude;
    let df = if spec.freq_hz.len() > 1 {
        spec.freq_hz[1]
    } else {
        0.0
    };
    // A peak must dominate two unpadded bins on either side, which rejects
    // the leakage sidelobes of stronger neighbours.
    let reach = (4 * (m.len() - 1) / x.len().max(1)).max(2);
    let mut peaks: Vec<SpectrumPeak> = (2..m.len().saturating_sub(1))
        .filter(|&k| m[k] > m[k - 1] && m[k] >= m[k + 1] && m[k] > 0.0)
        .filter(|&k| {
            let lo = k.saturating_sub(reach);
            let hi = (k + reach).min(m.len() - 1);
            (lo..=hi).all(|i| m[i] <= m[k])
        })
        .map(|k| {
            let (a, b, c) = (
                m[k - 1].max(1e-300).ln(),
                m[k].ln(),
                m[k + 1].max(1e-300).ln(),
            );
            let denom = a - 2.0 * b + c;
            let delta = if denom != 0.0 {
                0.5 * (a - c) / denom
            } else {
                0.0
            };
            SpectrumPeak {
                freq_hz: (k as f64 + delta) * df,
                magnitude: (b - 0.25 * (a - c) * delta).exp(),
            }
        })
        .collect();
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    peaks.truncate(top_k);
    peaks
}

/// Spectrum peaks of a recorded signal inside `[start, end]`.
pub fn spectrum_peaks(
    trace: &SimTrace,
    signal: &str,
    start: f64,
    end: f64,
    top_k: usize,
) -> Result<Vec<SpectrumPeak>> {
    let (x, fs) = analysis_window(trace, trace.column(signal)?, start, end)?;
    Ok(spectrum_peaks_of(x, fs, top_k))
}

/// Spectrum peaks of an arbitrary series aligned with `trace.t`.
pub fn series_spectrum_peaks(
    trace: &SimTrace,
    series: &[f64],
    start: f64,
    end: f64,
    top_k: usize,
) -> Result<Vec<SpectrumPeak>> {
    let (x, fs) = analysis_window(trace, series, start, end)?;
    Ok(spectrum_peaks_of(x, fs, top_k))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeFit {
    /// Exponential rate of the oscillation envelope, 1/s.
    pub rate: f64,
    pub peaks: usize,
}

/// Least-squares fit of `ln|x − center|` at the local maxima of `|x − center|`
/// for `t ≥ start`.
pub fn envelope_rate(
    trace: &SimTrace,
    signal: &str,
    start: f64,
    center: f64,
) -> Result<EnvelopeFit> {
    let x = trace.column(signal)?;
    let i0 = trace.t.partition_point(|t| *t < start);
    let y: Vec<f64> = x[i0..].iter().map(|v| (v - center).abs()).collect();
    let ts = &trace.t[i0..];
    let pts: Vec<(f64, f64)> = (1..y.len().saturating_sub(1))
        .filter(|&k| y[k] > y[k - 1] && y[k] >= y[k + 1] && y[k] > 1e-13)
        .map(|k| (ts[k], y[k].ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Window(format!(
            "only {} envelope peaks after t = {start}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(EnvelopeFit {
        rate: sxy / sxx,
        peaks: pts.len(),
    })
}

/// Settings of the perturbation-injection admittance measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResponseConfig {
    /// Perturbation amplitude, pu.
    pub amplitude: f64,
    /// Time allowed for the start-up transient, s.
    pub settle: f64,
    /// Minimum length of the analysed window, s.
    pub window: f64,
    /// Upper bound on the integration step, s.
    pub max_dt: f64,
}

impl Default for ResponseConfig {
    fn default() -> Self {
        Self {
            amplitude: 1e-3,
            settle: 12.0,
            window: 1.0,
            max_dt: DEFAULT_DT,
        }
    }
}

/// Measured polar admittance `[[Y11, Y12], [Y21, Y22]]` in the load
/// direction, at `freq_hz`, from the nonlinear model with a prescribed PCC
/// voltage.
pub fn measure_admittance(
    case: &StudyCase,
    freq_hz: f64,
    cfg: &ResponseConfig,
) -> Result<[[Complex64; 2]; 2]> {
    let op = case.operating_point()?;
    let w = 2.0 * PI * freq_hz;
    let period = 1.0 / freq_hz;
    let per_period = (period / cfg.max_dt).ceil();
    let dt = period / per_period;
    let settle_periods = (cfg.settle / period).ceil();
    let window_periods = (cfg.window / period).ceil().max(4.0);
    let t_settle = settle_periods * period;
    let duration = t_settle + window_periods * period;

    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for col in 0..2 {
        let (u0, d0, eps, w_) = (op.u0, op.delta0, cfg.amplitude, w);
        let source: VoltageSource = if col == 0 {
            Arc::new(move |t: f64| Complex64::from_polar(u0 + eps * (w_ * t).sin(), d0))
        } else {
            Arc::new(move |t: f64| Complex64::from_polar(u0, d0 + eps / u0 * (w_ * t).sin()))
        };
        let state = init_stiff_source(case, source)?;
        let mut sc = Scenario::new(duration);
        sc.dt = dt;
        sc.record_dt = dt;
        sc.signals = vec!["I_x".into(), "I_y".into()];
        let trace = simulate_scenario(&state, &sc)?;
        if trace.diverged {
            return Err(Error::Window(format!(
                "stiff-source run diverged at {freq_hz} Hz"
            )));
        }
        let (ix, iy) = (trace.column("I_x")?, trace.column("I_y")?);
        let i0 = op.i0;
        let phi0 = op.theta_i0 + op.delta0;
        let start = trace.t.partition_point(|t| *t < t_settle - 0.5 * dt);
        let n = trace.t.len() - 1 - start;
        let (mut mag, mut ang, mut inp) = (
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        );
        for k in start..start + n {
            let t = trace.t[k];
            let basis = Complex64::from_polar(1.0, -w * t);
            let i = Complex64::new(ix[k], iy[k]);
            let dphi = (i * Complex64::from_polar(1.0, -phi0)).arg();
            mag += (i.norm() - i0) * basis;
            ang += i0 * dphi * basis;
            inp += eps * (w * t).sin() * basis;
        }
        // Injected-current response; the load-direction matrix is its negative.
        out[0][col] = -mag / inp;
        out[1][col] = -ang / inp;
    }
    Ok(out)
}
