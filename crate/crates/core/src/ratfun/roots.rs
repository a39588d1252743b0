//! Simultaneous root finding by Aberth–Ehrlich iteration.
//!
//! Initial approximations come from the upper convex hull of the points
//! `(i, ln|aᵢ|)` (the Newton polygon), which places starting circles at the
//! right radii even when root magnitudes span several decades. The iteration
//! is Gauss–Seidel style and fully deterministic; the result is sorted by
//! real part, then imaginary part.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::poly::CPolynomial;
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 2000;

/// Returns exactly `degree` roots with multiplicity.
///
/// A constant polynomial has no roots; the zero polynomial is rejected.
pub fn poly_roots(p: &CPolynomial) -> Result<Vec<Complex64>> {
    let degree = p
        .degree()
        .ok_or(Error::Degenerate("zero polynomial has no finite root set"))?;
    if degree == 0 {
        return Ok(Vec::new());
    }
    let zeros = p.trailing_zeros();
    let mut roots = vec![Complex64::new(0.0, 0.0); zeros];
    let reduced = p.shift_down(zeros);
    roots.extend(aberth(&reduced));
    sort_roots(&mut roots);
    Ok(roots)
}

pub(crate) fn sort_roots(roots: &mut [Complex64]) {
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

fn aberth(p: &CPolynomial) -> Vec<Complex64> {
    let n = match p.degree() {
        Some(0) | None => return Vec::new(),
        Some(n) => n,
    };
    let lead = p.leading();
    let monic = p.scale(lead.inv());
    if n == 1 {
        return vec![-monic.coeffs()[0]];
    }

    let mut z = initial_guesses(&monic);
    let mut converged = vec![false; n];
    for _ in 0..MAX_ITERATIONS {
        let mut all = true;
        for i in 0..n {
            if converged[i] {
                continue;
            }
            let (v, dv) = monic.eval_with_derivative(z[i]);
            if v.norm() <= 16.0 * f64::EPSILON * monic.abs_eval(z[i]) {
                converged[i] = true;
                continue;
            }
            all = false;
            let ratio = v / dv;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (z[i] - z[j]).inv())
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.is_finite() {
                z[i] -= step;
            } else {
                // dv vanished at an exact critical point: nudge off it.
                let nudge = Complex64::new(1e-8, 1e-8) * (1.0 + z[i].norm());
                z[i] += nudge;
            }
        }
        if all {
            break;
        }
    }
    z
}

fn initial_guesses(monic: &CPolynomial) -> Vec<Complex64> {
    let coeffs = monic.coeffs();
    let n = coeffs.len() - 1;
    let pts: Vec<(usize, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(i, c)| (i, c.norm().ln()))
        .collect();

    // Upper convex hull, left to right.
    let mut hull: Vec<(usize, f64)> = Vec::new();
    for &pt in &pts {
        while hull.len() >= 2 {
            let (i1, y1) = hull[hull.len() - 2];
            let (i2, y2) = hull[hull.len() - 1];
            let cross =
                (i2 as f64 - i1 as f64) * (pt.1 - y1) - (y2 - y1) * (pt.0 as f64 - i1 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }

    let mut guesses = Vec::with_capacity(n);
    let sigma = 0.7;
    for w in hull.windows(2) {
        let (i, yi) = w[0];
        let (j, yj) = w[1];
        let count = j - i;
        let radius = ((yi - yj) / count as f64).exp();
        for k in 0..count {
            let angle = 2.0 * PI * k as f64 / count as f64 + 2.0 * PI * i as f64 / n as f64 + sigma;
            guesses.push(Complex64::from_polar(radius, angle));
        }
    }
    guesses
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_root_sets(found: &[Complex64], expected: &[Complex64], tol: f64) {
        assert_eq!(found.len(), expected.len());
        let mut used = vec![false; expected.len()];
        for r in found {
            let (k, d) = expected
                .iter()
                .enumerate()
                .filter(|(k, _)| !used[*k])
                .map(|(k, e)| (k, (r - e).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(d <= tol * (1.0 + expected[k].norm()), "root {r} off by {d}");
            used[k] = true;
        }
    }

    #[test]
    fn unit_circle_pair() {
        let roots = poly_roots(&CPolynomial::from_real(&[1.0, 0.0, 1.0])).unwrap();
        assert_root_sets(&roots, &[c(0.0, 1.0), c(0.0, -1.0)], 1e-12);
    }

    #[test]
    fn double_root() {
        let roots = poly_roots(&CPolynomial::from_real(&[1.0, 2.0, 1.0])).unwrap();
        assert_root_sets(&roots, &[c(-1.0, 0.0), c(-1.0, 0.0)], 1e-6);
    }

    #[test]
    fn zero_and_constant() {
        assert!(matches!(
            poly_roots(&CPolynomial::zero()),
            Err(Error::Degenerate(_))
        ));
        assert!(poly_roots(&CPolynomial::from_real(&[4.0]))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn roots_at_origin_are_exact() {
        let p = CPolynomial::from_real(&[0.0, 0.0, 2.0, 1.0]);
        let roots = poly_roots(&p).unwrap();
        assert_root_sets(&roots, &[c(0.0, 0.0), c(0.0, 0.0), c(-2.0, 0.0)], 1e-12);
    }

    #[test]
    fn degree_six_from_chosen_roots() {
        let chosen = [
            c(-1.0, 0.0),
            c(2.5, 0.0),
            c(-0.3, 4.0),
            c(-0.3, -4.0),
            c(0.0, 7.5),
            c(-12.0, 1.0),
        ];
        let p = CPolynomial::from_roots(&chosen, c(0.7, -0.2));
        let roots = poly_roots(&p).unwrap();
        assert_root_sets(&roots, &chosen, 1e-6);
    }

    #[test]
    fn widely_spread_magnitudes() {
        // Mirrors the case-study characteristic polynomials: a fast current
        // loop, a slow integrator and a lightly damped PLL pair.
        let chosen = [
            c(-942.0, 0.0),
            c(-25.0, 0.0),
            c(-0.24, 54.4),
            c(-0.24, -54.4),
        ];
        let p = CPolynomial::from_roots(&chosen, c(6.4e-4, 0.0));
        let roots = poly_roots(&p).unwrap();
        assert_root_sets(&roots, &chosen, 1e-9);
    }

    #[test]
    fn deterministic_output() {
        let p = CPolynomial::from_real(&[3.0, -1.0, 0.5, 2.0, 1.0, 0.1]);
        assert_eq!(poly_roots(&p).unwrap(), poly_roots(&p).unwrap());
    }
}
