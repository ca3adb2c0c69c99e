//! Total variation, relative entropy, and chi-squared divergence between
//! evaluable densities on the line or on the circle `(-pi, pi)`.
//!
//! TV places quadrature nodes at the detected sign changes of `p - q` so the
//! Kronrod error estimate stays valid on `|p - q|`. KL and chi-squared on the
//! circle use the spectrally accurate periodic rule; on the line they use the
//! adaptive Gauss-Kronrod driver.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::quad::{self, QuadratureSpec};

/// Integration domain of a density pair.
#[derive(Debug, Clone, Copy)]
pub enum Domain {
    /// The real line, truncated to `[lo, hi]` (truncation chosen by the
    /// caller so the discarded tails are below tolerance).
    Line { lo: f64, hi: f64 },
    /// The circle `(-pi, pi)`.
    Circle,
}

/// Two densities on a common domain.
pub struct DensityPair<'a> {
    pub p: &'a (dyn Fn(f64) -> f64 + Sync),
    pub q: &'a (dyn Fn(f64) -> f64 + Sync),
    pub domain: Domain,
}

impl<'a> DensityPair<'a> {
    pub fn line(
        p: &'a (dyn Fn(f64) -> f64 + Sync),
        q: &'a (dyn Fn(f64) -> f64 + Sync),
        lo: f64,
        hi: f64,
    ) -> Self {
        DensityPair {
            p,
            q,
            domain: Domain::Line { lo, hi },
        }
    }

    pub fn circle(
        p: &'a (dyn Fn(f64) -> f64 + Sync),
        q: &'a (dyn Fn(f64) -> f64 + Sync),
    ) -> Self {
        DensityPair {
            p,
            q,
            domain: Domain::Circle,
        }
    }

    fn interval(&self) -> (f64, f64) {
        match self.domain {
            Domain::Line { lo, hi } => (lo, hi),
            Domain::Circle => (-std::f64::consts::PI, std::f64::consts::PI),
        }
    }
}

const SIGN_SCAN_POINTS: usize = 4096;

/// Roots of `f` inside `(lo, hi)`, located by scanning a uniform grid for
/// sign changes and bisecting each bracket.
fn sign_change_roots<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Vec<f64> {
    let n = SIGN_SCAN_POINTS;
    let h = (hi - lo) / n as f64;
    let mut roots = Vec::new();
    let mut prev_x = lo;
    let mut prev_v = f(lo);
    for j in 1..=n {
        let x = lo + j as f64 * h;
        let v = f(x);
        if prev_v == 0.0 {
            roots.push(prev_x);
        } else if prev_v.signum() != v.signum() && v != 0.0 {
            let (mut a, mut b) = (prev_x, x);
            let mut fa = prev_v;
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                let fm = f(m);
                if fm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if fa.signum() == fm.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_x = x;
        prev_v = v;
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    roots
}

/// Total variation `0.5 * integral |p - q|`, in `[0, 1]`.
pub fn tv(pair: &DensityPair<'_>, spec: &QuadratureSpec) -> Result<f64> {
    let (lo, hi) = pair.interval();
    let diff = |x: f64| (pair.p)(x) - (pair.q)(x);
    let mut breaks = vec![lo];
    breaks.extend(sign_change_roots(&diff, lo, hi));
    breaks.push(hi);
    breaks.retain(|&x| x >= lo && x <= hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let est = quad::integrate_with_breakpoints(|x| diff(x).abs(), &breaks, spec)?;
    Ok((0.5 * est.value).clamp(0.0, 1.0))
}

/// Threshold below which a density value is treated as zero mass.
const P_FLOOR: f64 = 1e-300;
/// `p` above this where `q` vanishes counts as a support violation.
const SUPPORT_EPS: f64 = 1e-12;

/// Relative entropy `integral p ln(p/q)` in nats, non-negative.
///
/// Signals [`Error::SupportViolation`] (the divergence is `+inf`) when `p`
/// carries mass where `q` vanishes on the evaluated grid.
pub fn kl(pair: &DensityPair<'_>, spec: &QuadratureSpec) -> Result<f64> {
    let violation: Cell<Option<(f64, f64, f64)>> = Cell::new(None);
    let integrand = |x: f64| {
        let pv = (pair.p)(x);
        if pv < P_FLOOR {
            return 0.0;
        }
        let qv = (pair.q)(x);
        if qv < P_FLOOR {
            if pv > SUPPORT_EPS && violation.get().is_none() {
                violation.set(Some((x, pv, qv)));
            }
            return 0.0;
        }
        pv * (pv / qv).ln()
    };
    let value = match pair.domain {
        Domain::Line { lo, hi } => quad::integrate(integrand, lo, hi, spec)?.value,
        Domain::Circle => quad::periodic_trapezoid(integrand, spec)?.value,
    };
    if let Some((x, p, q)) = violation.get() {
        return Err(Error::SupportViolation { x, p, q });
    }
    Ok(value.max(0.0))
}

/// Chi-squared divergence `integral (p - q)^2 / q`, non-negative.
///
/// On the circle with `q = 1/(2 pi)` this reduces to
/// `2 pi * integral (p - 1/(2 pi))^2`.
pub fn chi2(pair: &DensityPair<'_>, spec: &QuadratureSpec) -> Result<f64> {
    let violation: Cell<Option<(f64, f64, f64)>> = Cell::new(None);
    let integrand = |x: f64| {
        let pv = (pair.p)(x);
        let qv = (pair.q)(x);
        if qv < P_FLOOR {
            if pv > SUPPORT_EPS && violation.get().is_none() {
                violation.set(Some((x, pv, qv)));
            }
            return 0.0;
        }
        let d = pv - qv;
        d * d / qv
    };
    let value = match pair.domain {
        Domain::Line { lo, hi } => quad::integrate(integrand, lo, hi, spec)?.value,
        Domain::Circle => quad::periodic_trapezoid(integrand, spec)?.value,
    };
    if let Some((x, p, q)) = violation.get() {
        return Err(Error::SupportViolation { x, p, q });
    }
    Ok(value.max(0.0))
}
