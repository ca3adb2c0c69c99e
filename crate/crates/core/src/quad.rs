//! Adaptive one-dimensional quadrature.
//!
//! The line integrals in this crate (entropies, divergences, information
//! densities) are smooth but sharply peaked, so the workhorse is an adaptive
//! Gauss-Kronrod 7-15 rule with the classical QUADPACK error estimate:
//! the interval with the largest estimated error is bisected until the global
//! estimate meets the requested tolerance. Circle integrals of smooth
//! periodic integrands use a midpoint trapezoid rule with order doubling,
//! which is spectrally accurate there.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Tolerances and budget for numerical integration.
///
/// The reported error estimate of a converged integral is at most
/// `max(abs_tol, rel_tol * |value|)`.
#[derive(Debug, Clone)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of interval bisections before giving up.
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_subdivisions: 4000,
        }
    }
}

impl QuadratureSpec {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        QuadratureSpec {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }

    /// Radius `r` such that everything a unit-variance mixture with sup
    /// `density_sup` puts outside `[-A - r, A + r]` is below `abs_tol`:
    /// `r = sqrt(2 ln(density_sup * sqrt(2 pi) / abs_tol)) + 1`, clamped to
    /// `[8, 40]`.
    pub fn truncation_radius(&self, density_sup: f64) -> f64 {
        let ratio = (density_sup * SQRT_2PI / self.abs_tol).max(1.0);
        ((2.0 * ratio.ln()).sqrt() + 1.0).clamp(8.0, 40.0)
    }

    /// Integration interval `[-A - r, A + r]` for integrands dominated by a
    /// unit-variance Gaussian mixture supported on `[-A, A]`.
    pub fn truncation_interval(&self, amplitude: f64, density_sup: f64) -> (f64, f64) {
        let r = self.truncation_radius(density_sup);
        (-amplitude - r, amplitude + r)
    }
}

pub(crate) const SQRT_2PI: f64 = 2.5066282746310002;

/// Value and certified error estimate of a converged integral.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

// 15-point Kronrod abscissae (QUADPACK dqk15); odd indices are the embedded
// 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];

const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

/// One Gauss-Kronrod 7-15 panel on `[a, b]`; returns (value, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);

    let mut fv1 = [0.0f64; 7];
    let mut fv2 = [0.0f64; 7];
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = resk.abs();

    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        let fsum = f1 + f2;
        resk += WGK[j] * fsum;
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * fsum;
        }
    }

    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }

    let value = resk * half;
    resabs *= half.abs();
    resasc *= half.abs();
    let err = rescale_error((resk - resg) * half, resabs, resasc);
    (value, err)
}

struct Segment {
    value: f64,
    error: f64,
    lo: f64,
    hi: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive Gauss-Kronrod integration of `f` over `[lo, hi]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    integrate_with_breakpoints(f, &[lo, hi], spec)
}

/// Widest panel the initial subdivision may use. The integrands here live at
/// the unit noise scale; panels at half that scale cannot miss their peaks.
const MAX_INITIAL_PANEL: f64 = 0.5;

/// Adaptive integration over `[points[0], points[last]]` with the initial
/// subdivision placed at the given interior breakpoints (must be sorted).
///
/// Used by total variation, which needs panel edges at the sign changes of
/// its integrand to keep the Kronrod error estimate meaningful.
pub fn integrate_with_breakpoints<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    if points.len() < 2 {
        return Err(Error::invalid("integration needs at least two endpoints"));
    }
    let mut heap = BinaryHeap::new();
    let mut total_value = 0.0;
    let mut total_error = 0.0;
    for w in points.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if !(hi >= lo) {
            return Err(Error::invalid(format!(
                "integration breakpoints not sorted: {lo} > {hi}"
            )));
        }
        if hi == lo {
            continue;
        }
        let pieces = ((hi - lo) / MAX_INITIAL_PANEL).ceil().max(1.0) as usize;
        let h = (hi - lo) / pieces as f64;
        for p in 0..pieces {
            let plo = lo + p as f64 * h;
            let phi = if p + 1 == pieces { hi } else { lo + (p + 1) as f64 * h };
            let (value, error) = gk15(&f, plo, phi);
            total_value += value;
            total_error += error;
            heap.push(Segment {
                value,
                error,
                lo: plo,
                hi: phi,
            });
        }
    }

    let tolerance = |value: f64| spec.abs_tol.max(spec.rel_tol * value.abs());
    let mut subdivisions = 0;
    while total_error > tolerance(total_value) {
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::QuadratureNonConvergence {
                error: total_error,
                tolerance: tolerance(total_value),
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap cannot be empty while error > 0");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Interval at floating-point resolution; its error cannot shrink.
            return Err(Error::QuadratureNonConvergence {
                error: total_error,
                tolerance: tolerance(total_value),
                subdivisions,
            });
        }
        let (v1, e1) = gk15(&f, worst.lo, mid);
        let (v2, e2) = gk15(&f, mid, worst.hi);
        total_value += v1 + v2 - worst.value;
        total_error += e1 + e2 - worst.error;
        heap.push(Segment {
            value: v1,
            error: e1,
            lo: worst.lo,
            hi: mid,
        });
        heap.push(Segment {
            value: v2,
            error: e2,
            lo: mid,
            hi: worst.hi,
        });
        subdivisions += 1;
    }

    Ok(Estimate {
        value: total_value,
        error: total_error,
    })
}

/// Integral of a smooth 2pi-periodic function over the circle `(-pi, pi)`,
/// by the midpoint trapezoid rule with order doubling until two successive
/// estimates agree to tolerance.
///
/// The midpoint offset keeps the single excluded angle `-pi` off the grid.
pub fn periodic_trapezoid<F: Fn(f64) -> f64>(f: F, spec: &QuadratureSpec) -> Result<Estimate> {
    let mut n: usize = 64;
    let mut prev = midpoint_rule(&f, n);
    loop {
        n *= 2;
        let next = midpoint_rule(&f, n);
        let diff = (next - prev).abs();
        if diff <= spec.abs_tol.max(spec.rel_tol * next.abs()) {
            return Ok(Estimate {
                value: next,
                error: diff,
            });
        }
        if n >= (1 << 22) {
            return Err(Error::QuadratureNonConvergence {
                error: diff,
                tolerance: spec.abs_tol.max(spec.rel_tol * next.abs()),
                subdivisions: n,
            });
        }
        prev = next;
    }
}

fn midpoint_rule<F: Fn(f64) -> f64>(f: &F, n: usize) -> f64 {
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let mut sum = 0.0;
    for j in 0..n {
        let theta = -std::f64::consts::PI + (j as f64 + 0.5) * h;
        sum += f(theta);
    }
    sum * h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn polynomial_is_exact() {
        let est = integrate(|x| 3.0 * x * x, 0.0, 2.0, &spec()).unwrap();
        assert!((est.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_mass_over_truncated_line() {
        let est = integrate(
            |x| (-0.5 * x * x).exp() / SQRT_2PI,
            -9.0,
            9.0,
            &spec(),
        )
        .unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
        assert!(est.error <= 1e-9);
    }

    #[test]
    fn peaked_integrand_converges() {
        // Narrow spike at 0.3; adaptivity must localize effort.
        let est = integrate(
            |x| (-(x - 0.3) * (x - 0.3) / (2.0 * 1e-4)).exp(),
            -10.0,
            10.0,
            &spec(),
        )
        .unwrap();
        let exact = 1e-2 * SQRT_2PI; // sigma * sqrt(2 pi)
        assert!((est.value - exact).abs() < 1e-12);
    }

    #[test]
    fn budget_exhaustion_is_signalled() {
        let tight = QuadratureSpec {
            abs_tol: 1e-300,
            rel_tol: 1e-300,
            max_subdivisions: 16,
        };
        let err = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, &tight).unwrap_err();
        assert!(matches!(err, Error::QuadratureNonConvergence { .. }));
    }

    #[test]
    fn breakpoints_must_be_sorted() {
        let err = integrate_with_breakpoints(|x| x, &[0.0, -1.0, 1.0], &spec()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn periodic_rule_on_smooth_integrand() {
        // integral of (1 + 0.5 cos t)^2 over (-pi, pi) = 2 pi (1 + 0.125)
        let est = periodic_trapezoid(|t| (1.0 + 0.5 * t.cos()).powi(2), &spec()).unwrap();
        let exact = 2.0 * std::f64::consts::PI * 1.125;
        assert!((est.value - exact).abs() < 1e-12);
    }

    #[test]
    fn truncation_radius_clamps() {
        let s = QuadratureSpec::default();
        let r = s.truncation_radius(1.0 / SQRT_2PI);
        assert!((8.0..=40.0).contains(&r));
        let loose = QuadratureSpec::with_tolerances(1.0, 1.0);
        assert_eq!(loose.truncation_radius(1.0 / SQRT_2PI), 8.0);
    }
}
