//! Closed-loop poles from the 2×2 determinant or the reduced SISO loop,
//! root-locus sweeps and critical-parameter search.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::case::StudyCase;
use crate::error::{Error, Result};
use crate::gisc::{analyze, assemble_open_loop, default_mode, CriterionMode, NyquistConfig};
use crate::ratfun::{AdmittanceMatrix2, CPolynomial, RationalFunction};

/// Relative root distance at which numerator and denominator roots cancel.
pub const CANCEL_TOL: f64 = 1e-6;

/// Resolution of [`critical_parameter`].
pub const CRITICAL_RESOLUTION: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CharacteristicForm {
    Det2x2,
    Siso,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoleSource {
    Det2x2,
    SisoGisc1,
    SisoGisc2,
    SisoDeduction1,
}

impl PoleSource {
    pub fn name(self) -> &'static str {
        match self {
            PoleSource::Det2x2 => "det2x2",
            PoleSource::SisoGisc1 => "siso_gisc1",
            PoleSource::SisoGisc2 => "siso_gisc2",
            PoleSource::SisoDeduction1 => "siso_deduction1",
        }
    }
}

/// Numerator of the characteristic function after root-matched cancellation.
#[derive(Clone, Debug)]
pub struct CharacteristicPolynomial {
    pub poly: CPolynomial,
    /// Numerator before cancellation.
    pub raw: CPolynomial,
    pub source: PoleSource,
    pub cancelled: Vec<Complex64>,
}

fn realify_poly(p: CPolynomial) -> CPolynomial {
    if p.is_real(1e-9) {
        p.real_part()
    } else {
        p
    }
}

fn reduce(f: &RationalFunction, source: PoleSource) -> Result<CharacteristicPolynomial> {
    if f.is_zero() {
        return Err(Error::Degenerate(
            "characteristic function vanishes identically",
        ));
    }
    let (reduced, cancelled) = f.cancel_common(CANCEL_TOL)?;
    Ok(CharacteristicPolynomial {
        poly: realify_poly(reduced.num().clone()),
        raw: realify_poly(f.num().clone()),
        source,
        cancelled,
    })
}

/// `det(Y_conv + Y_grid)` or `1 + L` for the default criterion of `conv`.
pub fn characteristic_polynomial(
    conv: &AdmittanceMatrix2,
    grid: &AdmittanceMatrix2,
    form: CharacteristicForm,
) -> Result<CharacteristicPolynomial> {
    match form {
        CharacteristicForm::Det2x2 => reduce(&conv.add(grid).det(), PoleSource::Det2x2),
        CharacteristicForm::Siso => {
            let mode = default_mode(conv);
            let set = assemble_open_loop(conv, grid, mode)?;
            let source = match mode {
                CriterionMode::Gisc1 => PoleSource::SisoGisc1,
                CriterionMode::Gisc2 => PoleSource::SisoGisc2,
                CriterionMode::Deduction1 => PoleSource::SisoDeduction1,
            };
            let mut product = RationalFunction::one();
            for l in &set.loops {
                product = &product * &(&RationalFunction::one() + l);
            }
            reduce(&product, source)
        }
    }
}

#[derive(Clone, Debug)]
pub struct PoleSet {
    pub poles: Vec<Complex64>,
    pub source: PoleSource,
    pub cancelled: Vec<Complex64>,
    /// Pole with the largest real part; ties go to the larger |Im|, then to
    /// the upper half plane.
    pub dominant: Option<Complex64>,
    pub rhp_count: usize,
}

impl PoleSet {
    pub fn max_real_part(&self) -> f64 {
        self.dominant.map_or(f64::NEG_INFINITY, |p| p.re)
    }

    pub fn is_stable(&self) -> bool {
        self.max_real_part() < 0.0
    }

    /// The dominant pole and, when it exists, its conjugate partner.
    pub fn is_dominant_member(&self, p: Complex64) -> bool {
        self.dominant.is_some_and(|d| {
            (p - d).norm() <= 1e-9 * d.norm().max(1.0)
                || (p - d.conj()).norm() <= 1e-9 * d.norm().max(1.0)
        })
    }
}

pub fn dominant_pole(poles: &[Complex64]) -> Option<Complex64> {
    poles.iter().copied().reduce(|best, p| {
        let tie = (p.re - best.re).abs() <= 1e-9 * p.norm().max(best.norm()).max(1.0);
        if tie {
            if p.im.abs() > best.im.abs() + 1e-12
                || (p.im.abs() >= best.im.abs() - 1e-12 && p.im > best.im)
            {
                p
            } else {
                best
            }
        } else if p.re > best.re {
            p
        } else {
            best
        }
    })
}

pub fn system_poles(cp: &CharacteristicPolynomial) -> Result<PoleSet> {
    let poles = cp.poly.roots()?;
    let rhp_count = poles.iter().filter(|p| p.re > 0.0).count();
    Ok(PoleSet {
        dominant: dominant_pole(&poles),
        poles,
        source: cp.source,
        cancelled: cp.cancelled.clone(),
        rhp_count,
    })
}

/// Linearizes `case` and returns its closed-loop poles.
pub fn case_poles(case: &StudyCase, form: CharacteristicForm) -> Result<PoleSet> {
    let lin = case.linearize()?;
    system_poles(&characteristic_polynomial(&lin.y_conv, &lin.y_grid, form)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub name: String,
    pub from: f64,
    pub to: f64,
    /// Number of swept values, endpoints included.
    pub steps: usize,
}

impl SweepSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be ≥ 1"));
        }
        if self.steps == 1 {
            return Ok(vec![self.from]);
        }
        if !(self.from.is_finite() && self.to.is_finite()) || self.from == self.to {
            return Err(Error::invalid("sweep", "needs distinct finite endpoints"));
        }
        let n = (self.steps - 1) as f64;
        Ok((0..self.steps)
            .map(|k| self.from + (self.to - self.from) * k as f64 / n)
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct RootLocus {
    pub param: String,
    pub values: Vec<f64>,
    pub sets: Vec<PoleSet>,
    /// Max-real-part pole per value.
    pub dominant: Vec<Complex64>,
    /// Branch of the first dominant pole followed by nearest-neighbour
    /// continuation.
    pub tracked: Vec<Complex64>,
    /// First value whose operating point or poles could not be computed.
    pub truncated_at: Option<f64>,
}

/// Evaluates the poles at every swept value in parallel; results keep sweep
/// order and stop at the first failing value.
pub fn root_locus_sweep(
    case: &StudyCase,
    spec: &SweepSpec,
    form: CharacteristicForm,
) -> Result<RootLocus> {
    let values = spec.values()?;
    case.get_param(&spec.name)?;
    let results: Vec<Result<PoleSet>> = values
        .par_iter()
        .map(|&v| case_poles(&case.with_param(&spec.name, v)?, form))
        .collect();

    let mut locus = RootLocus {
        param: spec.name.clone(),
        values: Vec::new(),
        sets: Vec::new(),
        dominant: Vec::new(),
        tracked: Vec::new(),
        truncated_at: None,
    };
    for (v, r) in values.iter().zip(results) {
        match r {
            Ok(set) => {
                locus.values.push(*v);
                locus.dominant.push(set.dominant.unwrap_or_default());
                let next = match locus.tracked.last() {
                    None => set.dominant.unwrap_or_default(),
                    Some(prev) => set
                        .poles
                        .iter()
                        .copied()
                        .min_by(|a, b| (a - prev).norm().total_cmp(&(b - prev).norm()))
                        .unwrap_or_default(),
                };
                locus.tracked.push(next);
                locus.sets.push(set);
            }
            Err(e) => {
                log::warn!("root locus truncated at {} = {v}: {e}", spec.name);
                locus.truncated_at = Some(*v);
                break;
            }
        }
    }
    Ok(locus)
}

fn bisect<F>(lo: f64, hi: f64, resolution: f64, stable: F) -> Result<f64>
where
    F: Fn(f64) -> Result<bool>,
{
    let (mut a, mut b) = (lo, hi);
    let sa = stable(a)?;
    if sa == stable(b)? {
        return Err(Error::SameSignBracket { lo, hi });
    }
    while (b - a).abs() > resolution {
        let m = 0.5 * (a + b);
        if stable(m)? == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Bisection on the sign of the dominant pole's real part.
pub fn critical_parameter(
    case: &StudyCase,
    param: &str,
    bracket: (f64, f64),
    form: CharacteristicForm,
) -> Result<f64> {
    bisect(bracket.0, bracket.1, CRITICAL_RESOLUTION, |v| {
        Ok(case_poles(&case.with_param(param, v)?, form)?.is_stable())
    })
}

/// Bisection on the Nyquist verdict, independent of the root finder.
pub fn critical_parameter_nyquist(
    case: &StudyCase,
    param: &str,
    bracket: (f64, f64),
    cfg: &NyquistConfig,
) -> Result<f64> {
    bisect(bracket.0, bracket.1, CRITICAL_RESOLUTION, |v| {
        let lin = case.with_param(param, v)?.linearize()?;
        Ok(analyze(&lin.y_conv, &lin.y_grid, None, cfg)?
            .verdict
            .rhp_closed_loop_poles
            == 0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{aggregate_grid_admittance, GridParams};
    use std::f64::consts::PI;

    const W0: f64 = 2.0 * PI * 50.0;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Greedy nearest-neighbour matching of two root multisets.
    fn assert_same_roots(a: &[Complex64], b: &[Complex64], tol: f64) {
        assert_eq!(a.len(), b.len());
        let mut used = vec![false; b.len()];
        for r in a {
            let (k, d) = b
                .iter()
                .enumerate()
                .filter(|(k, _)| !used[*k])
                .map(|(k, p)| (k, (p - r).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            assert!(d <= tol * b[k].norm().max(1.0), "{r} vs {}", b[k]);
            used[k] = true;
        }
    }

    #[test]
    fn grid_only_determinant() {
        let grid = aggregate_grid_admittance(&GridParams::new(0.2, 0.0, W0)).unwrap();
        let cp = characteristic_polynomial(
            &AdmittanceMatrix2::zero(),
            &grid,
            CharacteristicForm::Det2x2,
        )
        .unwrap();
        assert_same_roots(&cp.raw.roots().unwrap(), &[c(0.0, -W0), c(0.0, W0)], 1e-9);
        assert_eq!(cp.cancelled.len(), 2);
        assert_eq!(cp.poly.degree(), Some(0));
    }

    #[test]
    fn siso_matches_hand_polynomial() {
        let lin = StudyCase::case_study(0.2).linearize().unwrap();
        let cp =
            characteristic_polynomial(&lin.y_conv, &lin.y_grid, CharacteristicForm::Siso).unwrap();
        // B·D − (L_line/ω_b)·s·A·C·I₀ with A = K_pi s + K_ii, B = (L_f/ω_b)s² + A,
        // C = K_ppll s + K_ipll, D = s² + U₀C.
        let (u0, i0) = (lin.op.u0, lin.op.i0);
        let a = CPolynomial::from_real(&[15.0, 0.6]);
        let b = CPolynomial::from_real(&[15.0, 0.6, 0.2 / W0]);
        let cc = CPolynomial::from_real(&[3020.0, 2.5]);
        let d = CPolynomial::from_real(&[3020.0 * u0, 2.5 * u0, 1.0]);
        let hand = &(&b * &d) - &(&(&a * &cc) * &CPolynomial::from_real(&[0.0, 0.2 / W0 * i0]));
        assert_same_roots(&cp.poly.roots().unwrap(), &hand.roots().unwrap(), 1e-6);
    }

    #[test]
    fn det_and_siso_agree_at_022() {
        let lin = StudyCase::case_study(0.22).linearize().unwrap();
        let det = system_poles(
            &characteristic_polynomial(&lin.y_conv, &lin.y_grid, CharacteristicForm::Det2x2)
                .unwrap(),
        )
        .unwrap();
        let siso = system_poles(
            &characteristic_polynomial(&lin.y_conv, &lin.y_grid, CharacteristicForm::Siso).unwrap(),
        )
        .unwrap();
        assert_same_roots(&det.poles, &siso.poles, 1e-4);
    }

    #[test]
    fn bracket_pole_signs() {
        let stable = case_poles(&StudyCase::case_study(0.20), CharacteristicForm::Det2x2).unwrap();
        assert!(stable.poles.iter().all(|p| p.re < 0.0));
        let unstable =
            case_poles(&StudyCase::case_study(0.26), CharacteristicForm::Det2x2).unwrap();
        assert_eq!(unstable.rhp_count, 2);
        let d = unstable.dominant.unwrap();
        assert!(d.im > 0.0);
        assert!(unstable.is_dominant_member(d.conj()));
    }

    #[test]
    fn dominant_tie_prefers_larger_imaginary_part() {
        let p = dominant_pole(&[c(-1.0, 0.0), c(-1.0, 5.0), c(-1.0, -5.0), c(-3.0, 0.0)]).unwrap();
        assert_eq!(p, c(-1.0, 5.0));
    }

    #[test]
    fn single_step_sweep_equals_system_poles() {
        let case = StudyCase::case_study(0.2);
        let spec = SweepSpec {
            name: "L_line".into(),
            from: 0.2,
            to: 0.2,
            steps: 1,
        };
        let locus = root_locus_sweep(&case, &spec, CharacteristicForm::Det2x2).unwrap();
        let direct = case_poles(&case, CharacteristicForm::Det2x2).unwrap();
        assert_eq!(locus.sets[0].poles, direct.poles);
    }

    #[test]
    fn locus_crosses_once_and_is_continuous() {
        let case = StudyCase::case_study(0.2);
        let run = |steps| {
            let spec = SweepSpec {
                name: "L_line".into(),
                from: 0.10,
                to: 0.40,
                steps,
            };
            root_locus_sweep(&case, &spec, CharacteristicForm::Det2x2).unwrap()
        };
        let locus = run(61);
        assert!(locus.truncated_at.is_none());
        let signs: Vec<bool> = locus.dominant.iter().map(|p| p.re > 0.0).collect();
        let flips = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(flips, 1);
        let k = signs.iter().position(|s| *s).unwrap();
        assert!(locus.values[k - 1] >= 0.20 && locus.values[k] <= 0.26);

        // Halving the step roughly halves the largest jump of the tracked branch.
        let jump = |l: &RootLocus| {
            l.tracked
                .windows(2)
                .map(|w| (w[1] - w[0]).norm())
                .fold(0.0, f64::max)
        };
        let fine = run(121);
        assert!(jump(&fine) < 0.75 * jump(&locus));
    }

    #[test]
    fn critical_inductance() {
        let case = StudyCase::case_study(0.2);
        let l_c =
            critical_parameter(&case, "L_line", (0.20, 0.26), CharacteristicForm::Det2x2).unwrap();
        assert!((0.21..=0.25).contains(&l_c), "{l_c}");
        let l_n =
            critical_parameter_nyquist(&case, "L_line", (0.20, 0.26), &NyquistConfig::default())
                .unwrap();
        assert!((l_c - l_n).abs() < 1e-3, "{l_c} vs {l_n}");
        assert!(matches!(
            critical_parameter(&case, "L_line", (0.26, 0.40), CharacteristicForm::Det2x2),
            Err(Error::SameSignBracket { .. })
        ));
    }

    #[test]
    fn weak_grid_truncates_sweep() {
        let spec = SweepSpec {
            name: "L_line".into(),
            from: 0.5,
            to: 1.5,
            steps: 11,
        };
        let locus = root_locus_sweep(
            &StudyCase::case_study(0.2),
            &spec,
            CharacteristicForm::Det2x2,
        )
        .unwrap();
        assert!(locus.truncated_at.is_some());
        assert!(locus.values.len() < 11);
    }
}
