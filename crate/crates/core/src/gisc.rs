//! Generalized impedances, SISO loop assembly, Nyquist sweeps and the
//! GISC 1 / GISC 2 / Deduction 1 verdicts.
//!
//! For a converter `diag(Y_g1, Y_g4)` and a grid `[[a, −b], [b, a]]` with
//! sequence admittances `Y± = a ± jb`,
//! `det(Y_conv + Y_grid) = Ỹ₊·Ỹ₋·(1 + (Y_g4 − Y_g1)·(Z̃₊ + Z̃₋)/2)`, where
//! `Ỹ± = Y± + Y_g1` and `Z̃± = 1/Ỹ±`. Encirclements are counted
//! counter-clockwise positive, so `Z = P − N`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::case::StudyCase;
use crate::error::{Error, Result};
use crate::network::sequence_admittances;
use crate::ratfun::{AdmittanceMatrix2, RationalFunction};

/// Relative distance below which a pole counts as lying on the jω axis.
pub const AXIS_TOL: f64 = 1e-7;

const REAL_TOL: f64 = 1e-9;
const ROOT_MATCH_TOL: f64 = 1e-6;

/// Definition-1 quantities of a `[[A, −C], [C, D]]` matrix.
#[derive(Clone, Debug)]
pub struct GeneralizedSet {
    pub y_e1: RationalFunction,
    pub y_e2: RationalFunction,
    pub y_e3: RationalFunction,
}

impl GeneralizedSet {
    /// `(Z_e1, Z_e2, Z_e3)`; a zero admittance has no impedance.
    pub fn impedances(
        &self,
    ) -> (
        Result<RationalFunction>,
        Result<RationalFunction>,
        Result<RationalFunction>,
    ) {
        (self.y_e1.inv(), self.y_e2.inv(), self.y_e3.inv())
    }
}

/// `Y_e1 = D − A`, `Y_e2 = A + jC`, `Y_e3 = A − jC`.
pub fn generalized_quantities(m: &AdmittanceMatrix2) -> Result<GeneralizedSet> {
    if !m.has_common_shape() {
        return Err(Error::Structure(
            "generalized quantities need a [[A, -C], [C, D]] matrix".into(),
        ));
    }
    let (a, c, d) = (m.entry(0, 0), m.entry(1, 0), m.entry(1, 1));
    let jc = c.scale(Complex64::new(0.0, 1.0));
    Ok(GeneralizedSet {
        y_e1: d - a,
        y_e2: a + &jc,
        y_e3: a - &jc,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CriterionMode {
    Gisc1,
    Gisc2,
    Deduction1,
}

impl CriterionMode {
    pub fn name(self) -> &'static str {
        match self {
            CriterionMode::Gisc1 => "gisc1",
            CriterionMode::Gisc2 => "gisc2",
            CriterionMode::Deduction1 => "deduction1",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            CriterionMode::Gisc1,
            CriterionMode::Gisc2,
            CriterionMode::Deduction1,
        ]
        .into_iter()
        .find(|m| m.name() == name)
    }
}

/// One loop for GISC 1 / GISC 2, two for Deduction 1.
#[derive(Clone, Debug)]
pub struct OpenLoopSet {
    pub mode: CriterionMode,
    pub loops: Vec<RationalFunction>,
    /// `(Z̃₊, Z̃₋)` for GISC 2.
    pub shifted_impedances: Option<(RationalFunction, RationalFunction)>,
}

fn tidy(f: RationalFunction) -> RationalFunction {
    f.realified(REAL_TOL)
}

fn roots_coincide(a: &[Complex64], b: &[Complex64]) -> Option<Complex64> {
    a.iter()
        .find(|r| {
            b.iter()
                .any(|p| (*r - p).norm() <= ROOT_MATCH_TOL * r.norm().max(1.0))
        })
        .copied()
}

/// `Y_g4 = 0` at a zero of `Y₊` or `Y₋`: the reduction divides by zero there.
fn check_degenerate_resonance(
    y_g4: &RationalFunction,
    y_plus: &RationalFunction,
    y_minus: &RationalFunction,
) -> Result<()> {
    if y_g4.is_zero() {
        return Ok(());
    }
    let zeros4 = y_g4.zeros()?;
    for y in [y_plus, y_minus] {
        if let Some(r) = roots_coincide(&zeros4, &y.zeros()?) {
            return Err(Error::DegenerateResonance(r));
        }
    }
    Ok(())
}

/// Builds the SISO loop(s) of the requested criterion.
pub fn assemble_open_loop(
    conv: &AdmittanceMatrix2,
    grid: &AdmittanceMatrix2,
    mode: CriterionMode,
) -> Result<OpenLoopSet> {
    if !conv.is_diagonal() {
        return Err(Error::Structure(
            "the reduced criteria need a diagonal converter matrix; use a diagonal variant or the det2x2 pole analysis".into(),
        ));
    }
    let (y_g1, y_g4) = (conv.entry(0, 0), conv.entry(1, 1));
    let (y_plus, y_minus) = sequence_admittances(grid)?;
    check_degenerate_resonance(y_g4, &y_plus, &y_minus)?;
    let tol = conv.tolerance();

    match mode {
        CriterionMode::Gisc1 => {
            if !y_g1.is_negligible(tol) {
                return Err(Error::ModeMismatch(
                    "GISC1 needs Y_g1 ≡ 0 (Medium variant); use GISC2 for this converter".into(),
                ));
            }
            let z_sum = &y_plus.inv()? + &y_minus.inv()?;
            Ok(OpenLoopSet {
                mode,
                loops: vec![tidy(&z_sum.scale_real(0.5) * y_g4)],
                shifted_impedances: None,
            })
        }
        CriterionMode::Gisc2 => {
            let zt_plus = (&y_plus + y_g1).inv()?;
            let zt_minus = (&y_minus + y_g1).inv()?;
            let diff = y_g4 - y_g1;
            let l = &(&zt_plus + &zt_minus).scale_real(0.5) * &diff;
            Ok(OpenLoopSet {
                mode,
                loops: vec![tidy(l)],
                shifted_impedances: Some((zt_plus, zt_minus)),
            })
        }
        CriterionMode::Deduction1 => {
            // Z_g1/Z± = Y±/Y_g1.
            let z_g1 = y_g1.inv().map_err(|_| {
                Error::ModeMismatch("Deduction1 needs a nonzero Y_g1; use GISC1".into())
            })?;
            Ok(OpenLoopSet {
                mode,
                loops: vec![&y_plus * &z_g1, &y_minus * &z_g1],
                shifted_impedances: None,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NyquistConfig {
    /// Highest sampled |ω| before the closing arc, rad/s.
    pub omega_max: f64,
    /// Lowest nonzero |ω| of the log grid, rad/s.
    pub omega_min: f64,
    pub points_per_decade: usize,
    /// Radius of the rightward detours around jω-axis poles, rad/s.
    pub indent_radius: f64,
    /// Distance to (−1, 0) below which a verdict is marginal.
    pub marginal_tol: f64,
    /// Largest argument step between consecutive samples before bisection.
    pub max_arg_step: f64,
    /// Relative location accuracy of real-axis crossings.
    pub crossing_tol: f64,
}

impl Default for NyquistConfig {
    fn default() -> Self {
        Self {
            omega_max: 1e5,
            omega_min: 1e-2,
            points_per_decade: 200,
            indent_radius: 1e-3,
            marginal_tol: 1e-3,
            max_arg_step: PI / 12.0,
            crossing_tol: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContourPart {
    Axis,
    Indentation,
    Closure,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NyquistSample {
    pub s: Complex64,
    /// `Im(s)`; on the axis this is the angular frequency.
    pub omega: f64,
    pub value: Complex64,
    pub part: ContourPart,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Indentation {
    pub pole: Complex64,
    pub radius: f64,
}

/// Image of the closed D-contour.
#[derive(Clone, Debug)]
pub struct NyquistCurve {
    /// Traversal order: up the jω axis with detours, then the closing arc
    /// clockwise from `+jR` to `−jR`.
    pub samples: Vec<NyquistSample>,
    pub indentations: Vec<Indentation>,
    pub closed: bool,
    pub radius: f64,
    /// Located real-axis crossings, in traversal order.
    pub crossings: Vec<f64>,
}

impl NyquistCurve {
    /// Axis and indentation samples, the part exported for plotting.
    pub fn contour_samples(&self) -> impl Iterator<Item = &NyquistSample> {
        self.samples
            .iter()
            .filter(|s| s.part != ContourPart::Closure)
    }

    /// Minimum distance from `point` to the closed polyline.
    pub fn distance_to(&self, point: Complex64) -> f64 {
        let n = self.samples.len();
        if n == 0 {
            return f64::INFINITY;
        }
        (0..n)
            .map(|k| {
                let a = self.samples[k].value;
                let b = self.samples[(k + 1) % n].value;
                segment_distance(a, b, point)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(a: Complex64, b: Complex64, p: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if !(len2 > 0.0) || !len2.is_finite() {
        return (p - a).norm();
    }
    let t = ((p - a) * ab.conj()).re / len2;
    (a + ab * t.clamp(0.0, 1.0) - p).norm()
}

/// Poles of `l` on the imaginary axis, by imaginary part.
pub fn axis_poles(l: &RationalFunction) -> Result<Vec<Complex64>> {
    let mut poles: Vec<Complex64> = l
        .poles()?
        .into_iter()
        .filter(|p| p.re.abs() <= AXIS_TOL * p.norm().max(1.0))
        .map(|p| Complex64::new(0.0, p.im))
        .collect();
    poles.sort_by(|a, b| a.im.total_cmp(&b.im));
    poles.dedup_by(|a, b| (a.im - b.im).abs() <= AXIS_TOL * a.im.abs().max(1.0));
    Ok(poles)
}

/// Number of poles of `l` strictly inside the right half plane.
pub fn rhp_pole_count(l: &RationalFunction) -> Result<usize> {
    Ok(l.poles()?
        .into_iter()
        .filter(|p| p.re > AXIS_TOL * p.norm().max(1.0))
        .count())
}

#[derive(Clone, Copy, Debug)]
enum Segment {
    Axis { lo: f64, hi: f64 },
    Indent { center: f64, radius: f64 },
    Arc { radius: f64 },
}

impl Segment {
    /// Parameter range of the segment.
    fn range(&self) -> (f64, f64) {
        match *self {
            Segment::Axis { lo, hi } => (lo, hi),
            Segment::Indent { .. } => (-FRAC_PI_2, FRAC_PI_2),
            Segment::Arc { .. } => (FRAC_PI_2, -FRAC_PI_2),
        }
    }

    fn point(&self, t: f64) -> Complex64 {
        match *self {
            Segment::Axis { .. } => Complex64::new(0.0, t),
            Segment::Indent { center, radius } => {
                Complex64::new(0.0, center) + Complex64::from_polar(radius, t)
            }
            Segment::Arc { radius } => Complex64::from_polar(radius, t),
        }
    }

    fn part(&self) -> ContourPart {
        match self {
            Segment::Axis { .. } => ContourPart::Axis,
            Segment::Indent { .. } => ContourPart::Indentation,
            Segment::Arc { .. } => ContourPart::Closure,
        }
    }

    /// Smallest parameter step worth bisecting.
    fn min_step(&self, t: f64) -> f64 {
        match self {
            Segment::Axis { .. } => 1e-12 * t.abs().max(1.0),
            _ => 1e-12,
        }
    }

    fn crossing_resolution(&self, t: f64, rel: f64) -> f64 {
        match self {
            Segment::Axis { .. } => rel * t.abs().max(1e-12),
            _ => rel * PI,
        }
    }
}

fn build_segments(axis_poles: &[Complex64], radius: f64, r_max: f64) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut lo = -r_max;
    for p in axis_poles {
        let c = p.im;
        if c - radius < -r_max || c + radius > r_max {
            continue;
        }
        segments.push(Segment::Axis { lo, hi: c - radius });
        segments.push(Segment::Indent { center: c, radius });
        lo = c + radius;
    }
    segments.push(Segment::Axis { lo, hi: r_max });
    segments.push(Segment::Arc { radius: r_max });
    segments
}

fn initial_parameters(seg: &Segment, grid: &[f64]) -> Vec<f64> {
    let (a, b) = seg.range();
    match seg {
        Segment::Axis { lo, hi } => {
            let mut ts = vec![*lo];
            ts.extend(grid.iter().copied().filter(|w| *w > *lo && *w < *hi));
            ts.push(*hi);
            ts
        }
        Segment::Indent { .. } => (0..=32).map(|k| a + (b - a) * k as f64 / 32.0).collect(),
        Segment::Arc { .. } => (0..=180).map(|k| a + (b - a) * k as f64 / 180.0).collect(),
    }
}

fn symmetric_grid(cfg: &NyquistConfig, r_max: f64) -> Vec<f64> {
    let decades = (r_max / cfg.omega_min).log10().max(0.0);
    let n = (decades * cfg.points_per_decade as f64).ceil() as usize;
    let mut pos: Vec<f64> = (0..=n)
        .map(|k| cfg.omega_min * 10f64.powf(decades * k as f64 / n.max(1) as f64))
        .filter(|w| *w < r_max)
        .collect();
    pos.dedup();
    let mut grid: Vec<f64> = pos.iter().rev().map(|w| -w).collect();
    grid.push(0.0);
    grid.extend(pos);
    grid
}

fn needs_refinement(a: Complex64, b: Complex64, max_arg: f64) -> bool {
    let focus = Complex64::new(-1.0, 0.0);
    let (fa, fb) = (a - focus, b - focus);
    if (fb / fa).arg().abs() > max_arg {
        return true;
    }
    let (na, nb) = (a.norm(), b.norm());
    // Far from the origin and from (−1, 0) only the argument about (−1, 0)
    // matters; the magnitude test guards the region near the critical point.
    if na.min(nb) > 1e-6 && na.max(nb) < 1e3 {
        if (b / a).arg().abs() > max_arg {
            return true;
        }
        let ratio = nb / na;
        if !(0.67..=1.5).contains(&ratio) {
            return true;
        }
    }
    false
}

const MAX_SAMPLES_PER_SEGMENT: usize = 200_000;

fn sample_segment(
    l: &RationalFunction,
    seg: &Segment,
    grid: &[f64],
    cfg: &NyquistConfig,
    crossings: &mut Vec<f64>,
) -> Result<Vec<(f64, Complex64)>> {
    let eval = |t: f64| -> Result<Complex64> { l.eval(seg.point(t)) };
    let mut pts: Vec<(f64, Complex64)> = Vec::new();
    for t in initial_parameters(seg, grid) {
        pts.push((t, eval(t)?));
    }

    loop {
        let mut refined = Vec::with_capacity(pts.len() * 2);
        let mut changed = false;
        for w in pts.windows(2) {
            let ((ta, va), (tb, vb)) = (w[0], w[1]);
            refined.push((ta, va));
            let tm = 0.5 * (ta + tb);
            if (tb - ta).abs() > seg.min_step(tm) && needs_refinement(va, vb, cfg.max_arg_step) {
                refined.push((tm, eval(tm)?));
                changed = true;
            }
        }
        refined.push(*pts.last().expect("segment has samples"));
        pts = refined;
        if !changed || pts.len() > MAX_SAMPLES_PER_SEGMENT {
            break;
        }
    }

    // Locate real-axis crossings and insert them as samples.
    let mut out = Vec::with_capacity(pts.len() + 8);
    for w in pts.windows(2) {
        let ((ta, va), (tb, vb)) = (w[0], w[1]);
        out.push((ta, va));
        if va.im * vb.im < 0.0 {
            let (mut lo, mut hi, mut vlo) = (ta, tb, va);
            let mut mid = (0.5 * (lo + hi), va);
            for _ in 0..200 {
                let tm = 0.5 * (lo + hi);
                let vm = eval(tm)?;
                mid = (tm, vm);
                if vm.im == 0.0 {
                    break;
                }
                if (vm.im < 0.0) == (vlo.im < 0.0) {
                    lo = tm;
                    vlo = vm;
                } else {
                    hi = tm;
                }
                if (hi - lo).abs() <= seg.crossing_resolution(tm, cfg.crossing_tol) {
                    break;
                }
            }
            crossings.push(mid.1.re);
            if mid.0 != ta && mid.0 != tb {
                out.push(mid);
            }
        }
    }
    out.push(*pts.last().expect("segment has samples"));
    Ok(out)
}

/// Samples `l` along the indented D-contour.
///
/// The contour radius is `max(ω_max, 100·max(|poles|, |zeros|))`; the closing
/// arc is sampled explicitly, so improper loops are handled too.
pub fn nyquist_sweep(l: &RationalFunction, cfg: &NyquistConfig) -> Result<NyquistCurve> {
    let mut scale = 0.0f64;
    if !l.is_zero() {
        for r in l.poles()?.into_iter().chain(l.zeros()?) {
            scale = scale.max(r.norm());
        }
    }
    let r_max = cfg.omega_max.max(100.0 * scale);
    let on_axis = axis_poles(l)?;
    let segments = build_segments(&on_axis, cfg.indent_radius, r_max);
    let grid = symmetric_grid(cfg, r_max);

    let mut samples: Vec<NyquistSample> = Vec::new();
    let mut crossings = Vec::new();
    for seg in &segments {
        for (t, value) in sample_segment(l, seg, &grid, cfg, &mut crossings)? {
            let s = seg.point(t);
            if let Some(last) = samples.last() {
                if last.s == s {
                    continue;
                }
            }
            samples.push(NyquistSample {
                s,
                omega: s.im,
                value,
                part: seg.part(),
            });
        }
    }
    // The arc ends at −jR, which is where the axis started.
    if samples.len() > 1 && samples.last().map(|s| s.s) == samples.first().map(|s| s.s) {
        samples.pop();
    }
    Ok(NyquistCurve {
        samples,
        indentations: on_axis
            .iter()
            .map(|&pole| Indentation {
                pole,
                radius: cfg.indent_radius,
            })
            .collect(),
        closed: true,
        radius: r_max,
        crossings,
    })
}

/// Accumulated-argument winding number of the closed curve about `point`,
/// counter-clockwise positive.
pub fn winding_number(curve: &NyquistCurve, point: Complex64, guard: f64) -> Result<i64> {
    let distance = curve.distance_to(point);
    if distance <= guard {
        return Err(Error::OnCurve { distance });
    }
    let n = curve.samples.len();
    let total: f64 = (0..n)
        .map(|k| {
            let a = curve.samples[k].value - point;
            let b = curve.samples[(k + 1) % n].value - point;
            (b / a).arg()
        })
        .sum();
    Ok((total / (2.0 * PI)).round() as i64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Stable,
    Unstable,
    Marginal,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::Stable => "stable",
            Classification::Unstable => "unstable",
            Classification::Marginal => "marginal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityVerdict {
    /// Counter-clockwise positive encirclements of (−1, 0).
    pub encirclements: i64,
    pub open_loop_unstable_poles: usize,
    pub classification: Classification,
    pub margin: f64,
    pub rhp_closed_loop_poles: i64,
}

/// Verdict of a single loop from its sampled curve.
pub fn curve_verdict(
    l: &RationalFunction,
    curve: &NyquistCurve,
    cfg: &NyquistConfig,
) -> Result<StabilityVerdict> {
    let critical = Complex64::new(-1.0, 0.0);
    let p = if l.is_zero() { 0 } else { rhp_pole_count(l)? };
    let margin = if l.is_zero() {
        1.0
    } else {
        curve.distance_to(critical)
    };
    let encirclements = if l.is_zero() {
        0
    } else {
        winding_number(curve, critical, 0.0).unwrap_or(0)
    };
    let rhp = p as i64 - encirclements;
    let classification = if margin < cfg.marginal_tol {
        Classification::Marginal
    } else if rhp == 0 {
        Classification::Stable
    } else {
        Classification::Unstable
    };
    Ok(StabilityVerdict {
        encirclements,
        open_loop_unstable_poles: p,
        classification,
        margin,
        rhp_closed_loop_poles: rhp,
    })
}

/// Sweeps `l` and renders its verdict.
pub fn stability_verdict(
    l: &RationalFunction,
    cfg: &NyquistConfig,
) -> Result<(NyquistCurve, StabilityVerdict)> {
    let curve = if l.is_zero() {
        NyquistCurve {
            samples: Vec::new(),
            indentations: Vec::new(),
            closed: true,
            radius: cfg.omega_max,
            crossings: Vec::new(),
        }
    } else {
        nyquist_sweep(l, cfg)?
    };
    let verdict = curve_verdict(l, &curve, cfg)?;
    Ok((curve, verdict))
}

/// Combined verdict over all loops of a set (Deduction 1 sums its pair).
pub fn loop_set_verdict(
    set: &OpenLoopSet,
    cfg: &NyquistConfig,
) -> Result<(Vec<NyquistCurve>, StabilityVerdict)> {
    let mut curves = Vec::new();
    let mut total = StabilityVerdict {
        encirclements: 0,
        open_loop_unstable_poles: 0,
        classification: Classification::Stable,
        margin: f64::INFINITY,
        rhp_closed_loop_poles: 0,
    };
    for l in &set.loops {
        let (curve, v) = stability_verdict(l, cfg)?;
        total.encirclements += v.encirclements;
        total.open_loop_unstable_poles += v.open_loop_unstable_poles;
        total.rhp_closed_loop_poles += v.rhp_closed_loop_poles;
        total.margin = total.margin.min(v.margin);
        curves.push(curve);
    }
    total.classification = if total.margin < cfg.marginal_tol {
        Classification::Marginal
    } else if total.rhp_closed_loop_poles == 0 {
        Classification::Stable
    } else {
        Classification::Unstable
    };
    Ok((curves, total))
}

/// Criterion chosen when the caller does not force one.
pub fn default_mode(conv: &AdmittanceMatrix2) -> CriterionMode {
    if conv.entry(0, 0).is_negligible(conv.tolerance()) {
        CriterionMode::Gisc1
    } else {
        CriterionMode::Gisc2
    }
}

/// Outcome of the full frequency-domain pipeline.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub mode: CriterionMode,
    pub loops: OpenLoopSet,
    pub curves: Vec<NyquistCurve>,
    pub verdict: StabilityVerdict,
}

/// Assembles the loop(s) and renders the verdict. GISC 2 falls back to
/// Deduction 1 when `Y_g4 ≡ Y_g1` makes its loop vanish.
pub fn analyze(
    conv: &AdmittanceMatrix2,
    grid: &AdmittanceMatrix2,
    mode: Option<CriterionMode>,
    cfg: &NyquistConfig,
) -> Result<Analysis> {
    let mut mode = mode.unwrap_or_else(|| default_mode(conv));
    let mut loops = assemble_open_loop(conv, grid, mode)?;
    if mode == CriterionMode::Gisc2 && loops.loops[0].is_zero() && !conv.entry(0, 0).is_zero() {
        log::info!("Y_g4 ≡ Y_g1: GISC2 loop vanishes, using Deduction1");
        mode = CriterionMode::Deduction1;
        loops = assemble_open_loop(conv, grid, mode)?;
    }
    let (curves, verdict) = loop_set_verdict(&loops, cfg)?;
    Ok(Analysis {
        mode,
        loops,
        curves,
        verdict,
    })
}

/// `G_OL(s) = −s·Y_g4/ω_b`; the GISC 1 characteristic equation of a pure
/// line reads `G_OL = 1/L_line`.
#[derive(Clone, Debug)]
pub struct WeakGridLocus {
    pub g_ol: RationalFunction,
    pub curve: NyquistCurve,
    open_loop_unstable: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocusRegion {
    Stable,
    Unstable,
}

impl WeakGridLocus {
    /// Predicted closed-loop RHP poles for the point `(1/L_line, 0)`.
    pub fn rhp_poles(&self, l_line: f64, guard: f64) -> Result<i64> {
        if l_line <= 0.0 {
            return Ok(self.open_loop_unstable as i64);
        }
        // 1 − L·G_OL = 0 ⇔ G_OL = 1/L, and −L·G_OL winds about −1 as G_OL
        // winds about 1/L.
        let n = winding_number(&self.curve, Complex64::new(1.0 / l_line, 0.0), guard)?;
        Ok(self.open_loop_unstable as i64 - n)
    }

    pub fn classify(&self, l_line: f64, guard: f64) -> Result<LocusRegion> {
        Ok(if self.rhp_poles(l_line, guard)? == 0 {
            LocusRegion::Stable
        } else {
            LocusRegion::Unstable
        })
    }
}

pub fn weak_grid_locus(
    y_g4: &RationalFunction,
    omega_b: f64,
    cfg: &NyquistConfig,
) -> Result<WeakGridLocus> {
    let g_ol = tidy(&RationalFunction::s().scale_real(-1.0 / omega_b) * y_g4);
    let curve = if g_ol.is_zero() {
        NyquistCurve {
            samples: Vec::new(),
            indentations: Vec::new(),
            closed: true,
            radius: cfg.omega_max,
            crossings: Vec::new(),
        }
    } else {
        nyquist_sweep(&g_ol, cfg)?
    };
    let open_loop_unstable = if g_ol.is_zero() {
        0
    } else {
        rhp_pole_count(&g_ol)?
    };
    Ok(WeakGridLocus {
        g_ol,
        curve,
        open_loop_unstable,
    })
}

/// Locus classification at one line inductance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakGridPoint {
    pub l_line: f64,
    pub region: LocusRegion,
    pub rhp_poles: i64,
}

impl LocusRegion {
    pub fn name(self) -> &'static str {
        match self {
            LocusRegion::Stable => "stable",
            LocusRegion::Unstable => "unstable",
        }
    }
}

/// Classifies each line inductance against the locus built at its own
/// operating point, since `U₀` and `I₀` move with `L_line`.
pub fn weak_grid_sweep(
    case: &StudyCase,
    values: &[f64],
    cfg: &NyquistConfig,
) -> Result<Vec<WeakGridPoint>> {
    values
        .par_iter()
        .map(|&l| {
            let mut c = case.clone();
            c.l_line = l;
            let lin = c.linearize()?;
            if !lin.y_conv.entry(0, 0).is_negligible(lin.y_conv.tolerance())
                || !lin.y_conv.is_diagonal()
            {
                return Err(Error::ModeMismatch(
                    "the weak-grid locus needs Y_g1 ≡ 0 and a diagonal converter matrix".into(),
                ));
            }
            let locus = weak_grid_locus(lin.y_conv.entry(1, 1), c.omega_0(), cfg)?;
            let rhp_poles = locus.rhp_poles(l, 0.0)?;
            Ok(WeakGridPoint {
                l_line: l,
                region: if rhp_poles == 0 {
                    LocusRegion::Stable
                } else {
                    LocusRegion::Unstable
                },
                rhp_poles,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::StudyCase;
    use crate::network::{aggregate_grid_admittance, GridParams};

    const W0: f64 = 2.0 * PI * 50.0;

    fn rf(num: &[f64], den: &[f64]) -> RationalFunction {
        RationalFunction::from_real(num, den).unwrap()
    }

    fn medium(l_line: f64) -> (AdmittanceMatrix2, AdmittanceMatrix2) {
        let lin = StudyCase::case_study(l_line).linearize().unwrap();
        (lin.y_conv, lin.y_grid)
    }

    #[test]
    fn generalized_quantities_examples() {
        let grid = aggregate_grid_admittance(&GridParams::new(0.2, 0.0, W0)).unwrap();
        let g = generalized_quantities(&grid).unwrap();
        assert!(g.y_e1.is_zero());
        let (yp, ym) = crate::ratfun::similarity_diagonalize(&grid).unwrap();
        assert!(g.y_e2.approx_eq(&yp, 1e-12) && g.y_e3.approx_eq(&ym, 1e-12));

        let id = generalized_quantities(&AdmittanceMatrix2::identity()).unwrap();
        assert!(id.y_e1.is_zero());
        assert_eq!(id.y_e2, RationalFunction::one());
        assert_eq!(id.y_e3, RationalFunction::one());

        let y = rf(&[1.0], &[1.0, 1.0]);
        let same = AdmittanceMatrix2::diagonal(y.clone(), y);
        assert!(generalized_quantities(&same).unwrap().y_e1.is_zero());

        let bad = AdmittanceMatrix2::new([
            [RationalFunction::one(), RationalFunction::one()],
            [RationalFunction::one(), RationalFunction::one()],
        ]);
        assert!(generalized_quantities(&bad).is_err());
    }

    #[test]
    fn gisc1_loop_is_y_g4_times_line() {
        let (conv, grid) = medium(0.2);
        let set = assemble_open_loop(&conv, &grid, CriterionMode::Gisc1).unwrap();
        let expected =
            &RationalFunction::from_real(&[0.0, 0.2 / W0], &[1.0]).unwrap() * conv.entry(1, 1);
        assert!(set.loops[0].approx_eq(&expected, 1e-10));
        assert!(set.loops[0].is_real(1e-12));
    }

    #[test]
    fn gisc2_reduces_to_gisc1() {
        let (conv, grid) = medium(0.23);
        let l1 = assemble_open_loop(&conv, &grid, CriterionMode::Gisc1).unwrap();
        let l2 = assemble_open_loop(&conv, &grid, CriterionMode::Gisc2).unwrap();
        assert!(l1.loops[0].approx_eq(&l2.loops[0], 1e-9));
    }

    #[test]
    fn gisc1_rejects_nonzero_y_g1() {
        let y = rf(&[1.0], &[1.0, 1.0]);
        let conv = AdmittanceMatrix2::diagonal(y.clone(), y);
        let grid = aggregate_grid_admittance(&GridParams::new(0.2, 0.0, W0)).unwrap();
        assert!(matches!(
            assemble_open_loop(&conv, &grid, CriterionMode::Gisc1),
            Err(Error::ModeMismatch(_))
        ));
        // Y_g4 ≡ Y_g1: the GISC2 loop vanishes and Deduction1 takes over.
        let a = analyze(
            &conv,
            &grid,
            Some(CriterionMode::Gisc2),
            &NyquistConfig::default(),
        )
        .unwrap();
        assert_eq!(a.mode, CriterionMode::Deduction1);
        assert_eq!(a.loops.loops.len(), 2);
    }

    #[test]
    fn degenerate_resonance_is_reported() {
        // Y₊ of an LC grid vanishes at s = −jω ± j/√(LbCb); put a Y_g4 zero there.
        let (l, c) = (0.2, 0.1);
        let grid = aggregate_grid_admittance(&GridParams::new(l, c, W0)).unwrap();
        let (yp, _) = sequence_admittances(&grid).unwrap();
        let z = yp.zeros().unwrap()[0];
        let y_g4 = RationalFunction::new(
            crate::ratfun::CPolynomial::from_roots(&[z, z.conj()], Complex64::new(1.0, 0.0)),
            crate::ratfun::CPolynomial::from_real(&[1.0, 1.0, 1.0, 1.0]),
        )
        .unwrap();
        let conv = AdmittanceMatrix2::diagonal(RationalFunction::zero(), y_g4);
        let err = assemble_open_loop(&conv, &grid, CriterionMode::Gisc1).unwrap_err();
        assert!(matches!(err, Error::DegenerateResonance(_)));
        assert!(err
            .to_string()
            .starts_with("degenerate-resonance: unsupported"));
    }

    #[test]
    fn integrator_contour() {
        let cfg = NyquistConfig::default();
        let l = rf(&[1.0], &[0.0, 1.0]);
        let curve = nyquist_sweep(&l, &cfg).unwrap();
        assert_eq!(curve.indentations.len(), 1);
        assert_eq!(
            winding_number(&curve, Complex64::new(-1.0, 0.0), 0.0).unwrap(),
            0
        );
        // The detour image is a large semicircle through the right half plane.
        let max_re = curve.samples.iter().map(|s| s.value.re).fold(0.0, f64::max);
        assert!(max_re > 0.9 / cfg.indent_radius);
        for s in curve.contour_samples() {
            assert!((s.s.norm() - 0.0) >= cfg.indent_radius * (1.0 - 1e-12));
        }
    }

    #[test]
    fn first_order_circle() {
        let cfg = NyquistConfig::default();
        let (curve, v) = stability_verdict(&rf(&[2.0], &[1.0, 1.0]), &cfg).unwrap();
        for s in &curve.samples {
            assert!((s.value - Complex64::new(1.0, 0.0)).norm() < 1.0 + 1e-9);
        }
        assert_eq!(v.classification, Classification::Stable);
        assert!((v.margin - 1.0).abs() < 1e-3);
    }

    fn circle(ccw: bool) -> NyquistCurve {
        let samples = (0..64)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 64.0;
                let value = Complex64::from_polar(2.0, if ccw { t } else { -t });
                NyquistSample {
                    s: Complex64::new(0.0, t),
                    omega: t,
                    value,
                    part: ContourPart::Axis,
                }
            })
            .collect();
        NyquistCurve {
            samples,
            indentations: Vec::new(),
            closed: true,
            radius: 1.0,
            crossings: Vec::new(),
        }
    }

    #[test]
    fn circle_winding_signs() {
        let p = Complex64::new(-1.0, 0.0);
        assert_eq!(winding_number(&circle(true), p, 1e-3).unwrap(), 1);
        assert_eq!(winding_number(&circle(false), p, 1e-3).unwrap(), -1);
        assert!(matches!(
            winding_number(&circle(true), Complex64::new(2.0, 0.0), 1e-3),
            Err(Error::OnCurve { .. })
        ));
    }

    #[test]
    fn zero_loop_is_stable_with_unit_margin() {
        let (_, v) =
            stability_verdict(&RationalFunction::zero(), &NyquistConfig::default()).unwrap();
        assert_eq!(v.classification, Classification::Stable);
        assert_eq!(v.margin, 1.0);
    }

    #[test]
    fn unstable_open_loop_counts_poles() {
        // L = 2/(s − 1): one RHP open-loop pole, closed loop s + 1 = 0 stable.
        let (_, v) =
            stability_verdict(&rf(&[2.0], &[-1.0, 1.0]), &NyquistConfig::default()).unwrap();
        assert_eq!(v.open_loop_unstable_poles, 1);
        assert_eq!(v.encirclements, 1);
        assert_eq!(v.classification, Classification::Stable);
        // L = 0.5/(s − 1): closed loop s − 0.5 = 0, one RHP pole.
        let (_, v) =
            stability_verdict(&rf(&[0.5], &[-1.0, 1.0]), &NyquistConfig::default()).unwrap();
        assert_eq!(v.rhp_closed_loop_poles, 1);
    }

    #[test]
    fn case_study_bracket() {
        let cfg = NyquistConfig::default();
        let (conv, grid) = medium(0.20);
        let a = analyze(&conv, &grid, None, &cfg).unwrap();
        assert_eq!(a.mode, CriterionMode::Gisc1);
        assert_eq!(a.verdict.classification, Classification::Stable);
        assert_eq!(a.verdict.encirclements, 0);

        let (conv, grid) = medium(0.26);
        let a = analyze(&conv, &grid, None, &cfg).unwrap();
        assert_eq!(a.verdict.classification, Classification::Unstable);
        assert_eq!(a.verdict.encirclements, -2);
        assert_eq!(a.verdict.rhp_closed_loop_poles, 2);
        let left_of_critical = a.curves[0].crossings.iter().filter(|x| **x < -1.0).count();
        assert_eq!(left_of_critical, 2);
    }

    #[test]
    fn weak_grid_points() {
        let cfg = NyquistConfig::default();
        for (l, expected) in [(0.20, LocusRegion::Stable), (0.26, LocusRegion::Unstable)] {
            let (conv, _) = medium(l);
            let locus = weak_grid_locus(conv.entry(1, 1), W0, &cfg).unwrap();
            assert_eq!(locus.classify(l, 1e-9).unwrap(), expected);
            assert_eq!(locus.classify(1e-9, 1e-9).unwrap(), LocusRegion::Stable);
        }
    }
}
