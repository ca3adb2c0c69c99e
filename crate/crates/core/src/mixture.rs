//! Discrete inputs on `[-A, A]` and the Gaussian mixture output densities
//! they induce through the unit-variance AWGN channel.
//!
//! A `DiscreteInput` is a finite set of mass points with positive weights;
//! the channel output `X + Z` then has density `f(y) = sum_i w_i phi(y - x_i)`
//! with `phi` the standard normal density. This module evaluates that mixture
//! (in linear and log domain), its differential entropy, the mutual
//! information it achieves, the per-input marginal information density whose
//! KKT conditions certify optimality, and the global density maximum.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quad::{self, QuadratureSpec, SQRT_2PI};

/// Differential entropy of the standard normal noise, `0.5 * ln(2 pi e)` nats.
pub const STANDARD_GAUSSIAN_ENTROPY: f64 = 1.4189385332046727;

const LN_SQRT_2PI: f64 = 0.9189385332046727;

/// Mass points closer than this are merged by the `DiscreteInput` constructor.
const MERGE_EPS: f64 = 1e-10;

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / SQRT_2PI
}

/// Log of the standard normal density; finite for all finite `u`.
#[inline]
pub fn std_normal_log_pdf(u: f64) -> f64 {
    -0.5 * u * u - LN_SQRT_2PI
}

/// Standard normal CDF, computed through `erfc` to stay accurate in both tails.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Peak-power bound `A > 0` on the channel input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AmplitudeConstraint {
    bound: f64,
}

impl AmplitudeConstraint {
    pub fn new(bound: f64) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::invalid(format!(
                "amplitude bound must be positive and finite, got {bound}"
            )));
        }
        Ok(AmplitudeConstraint { bound })
    }

    #[inline]
    pub fn bound(&self) -> f64 {
        self.bound
    }
}

/// JSON shape of a discrete input: `{"A": ..., "points": [...], "weights": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteInputJson {
    #[serde(rename = "A")]
    pub a: f64,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// A finite input law: strictly increasing mass points in `[-A, A]` with
/// positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiscreteInputJson", into = "DiscreteInputJson")]
pub struct DiscreteInput {
    points: Vec<f64>,
    weights: Vec<f64>,
    constraint: AmplitudeConstraint,
}

impl DiscreteInput {
    /// Build a validated input law. Points are sorted, near-duplicates
    /// (closer than 1e-10) merged by weight addition, and weights
    /// renormalized after the sum is checked to be within 1e-12 of one.
    pub fn new(points: Vec<f64>, weights: Vec<f64>, constraint: AmplitudeConstraint) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("input needs at least one mass point"));
        }
        if points.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let a = constraint.bound();
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for (&x, &w) in points.iter().zip(weights.iter()) {
            if !x.is_finite() || !w.is_finite() {
                return Err(Error::invalid("non-finite point or weight"));
            }
            if !(w > 0.0) {
                return Err(Error::invalid(format!("weight {w} at point {x} not positive")));
            }
            let clamped = x.clamp(-a, a);
            if (x - clamped).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "point {x} outside amplitude bound {a}"
                )));
            }
            pairs.push((clamped, w));
        }
        pairs.sort_by(|l, r| l.0.total_cmp(&r.0));

        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            match merged.last_mut() {
                Some((mx, mw)) if x - *mx < MERGE_EPS => {
                    let total = *mw + w;
                    *mx = (*mx * *mw + x * w) / total;
                    *mw = total;
                }
                _ => merged.push((x, w)),
            }
        }

        let sum: f64 = merged.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "weights sum to {sum}, expected 1 within 1e-12"
            )));
        }
        let (points, weights) = merged
            .into_iter()
            .map(|(x, w)| (x, w / sum))
            .unzip();
        Ok(DiscreteInput {
            points,
            weights,
            constraint,
        })
    }

    /// The equiprobable two-point law on `{-A, A}`.
    pub fn symmetric_pair(constraint: AmplitudeConstraint) -> Self {
        let a = constraint.bound();
        DiscreteInput {
            points: vec![-a, a],
            weights: vec![0.5, 0.5],
            constraint,
        }
    }

    /// Point mass at `x`.
    pub fn point_mass(x: f64, constraint: AmplitudeConstraint) -> Result<Self> {
        DiscreteInput::new(vec![x], vec![1.0], constraint)
    }

    #[inline]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn constraint(&self) -> AmplitudeConstraint {
        self.constraint
    }

    #[inline]
    pub fn support_size(&self) -> usize {
        self.points.len()
    }

    /// Exact mirror symmetry about the origin.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let k = self.points.len();
        (0..k).all(|i| {
            (self.points[i] + self.points[k - 1 - i]).abs() <= tol
                && (self.weights[i] - self.weights[k - 1 - i]).abs() <= tol
        })
    }
}

impl From<DiscreteInput> for DiscreteInputJson {
    fn from(d: DiscreteInput) -> Self {
        DiscreteInputJson {
            a: d.constraint.bound(),
            points: d.points,
            weights: d.weights,
        }
    }
}

impl TryFrom<DiscreteInputJson> for DiscreteInput {
    type Error = Error;

    fn try_from(j: DiscreteInputJson) -> Result<Self> {
        DiscreteInput::new(j.points, j.weights, AmplitudeConstraint::new(j.a)?)
    }
}

/// Location and value of a density maximum.
#[derive(Debug, Clone, Copy)]
pub struct DensityPeak {
    pub location: f64,
    pub value: f64,
}

/// The output law of `X + Z` for a discrete `X`: a unit-variance Gaussian
/// mixture `f(y) = sum_i w_i phi(y - x_i)`.
#[derive(Debug, Clone)]
pub struct MixtureDensity {
    input: DiscreteInput,
}

impl MixtureDensity {
    pub fn new(input: DiscreteInput) -> Self {
        MixtureDensity { input }
    }

    #[inline]
    pub fn input(&self) -> &DiscreteInput {
        &self.input
    }

    /// `f(y)` by direct summation.
    pub fn pdf(&self, y: f64) -> f64 {
        self.input
            .points
            .iter()
            .zip(&self.input.weights)
            .map(|(&x, &w)| w * std_normal_pdf(y - x))
            .sum()
    }

    /// `ln f(y)` in the log domain (log-sum-exp), finite and accurate even
    /// where the linear pdf underflows.
    pub fn log_pdf(&self, y: f64) -> f64 {
        let mut max_term = f64::NEG_INFINITY;
        for (&x, &w) in self.input.points.iter().zip(&self.input.weights) {
            let t = w.ln() - 0.5 * (y - x) * (y - x);
            if t > max_term {
                max_term = t;
            }
        }
        let mut sum = 0.0;
        for (&x, &w) in self.input.points.iter().zip(&self.input.weights) {
            sum += (w.ln() - 0.5 * (y - x) * (y - x) - max_term).exp();
        }
        max_term + sum.ln() - LN_SQRT_2PI
    }

    /// Differential entropy `-integral f ln f` in nats.
    ///
    /// The integration interval is `[-A - r, A + r]` with the truncation
    /// radius certifying the discarded tail mass via the Gaussian envelope
    /// `f(y) <= M exp(-(|y| - A)^2 / 2)` beyond the amplitude bound.
    pub fn entropy(&self, spec: &QuadratureSpec) -> Result<f64> {
        let a = self.input.constraint.bound();
        let (lo, hi) = spec.truncation_interval(a, std_normal_pdf(0.0));
        let est = quad::integrate(
            |y| {
                let f = self.pdf(y);
                if f < 1e-300 {
                    0.0
                } else {
                    -f * f.ln()
                }
            },
            lo,
            hi,
            spec,
        )?;
        Ok(est.value)
    }

    /// Global maximizer and maximum of `f` over `[-A - 1, A + 1]`.
    ///
    /// Every local maximum of a unit-variance Gaussian mixture lies within
    /// distance 1 of a mass point, so scanning the union of the intervals
    /// `[x_i - 1, x_i + 1]` with derivative-sign bracketing finds the global
    /// peak.
    pub fn peak(&self) -> DensityPeak {
        let deriv = |y: f64| -> f64 {
            self.input
                .points
                .iter()
                .zip(&self.input.weights)
                .map(|(&x, &w)| w * (x - y) * std_normal_pdf(y - x))
                .sum()
        };

        // Union of [x_i - 1, x_i + 1] as disjoint segments.
        let mut segments: Vec<(f64, f64)> = Vec::new();
        for &x in &self.input.points {
            let (lo, hi) = (x - 1.0, x + 1.0);
            match segments.last_mut() {
                Some((_, shi)) if lo <= *shi => *shi = hi,
                _ => segments.push((lo, hi)),
            }
        }

        let mut best = DensityPeak {
            location: self.input.points[0],
            value: self.pdf(self.input.points[0]),
        };
        let mut consider = |y: f64, value: f64| {
            if value > best.value {
                best = DensityPeak { location: y, value };
            }
        };
        for &x in &self.input.points {
            consider(x, self.pdf(x));
        }

        const STEP: f64 = 2e-4;
        for &(lo, hi) in &segments {
            let n = ((hi - lo) / STEP).ceil() as usize;
            let h = (hi - lo) / n as f64;
            let mut prev_y = lo;
            let mut prev_d = deriv(lo);
            for j in 1..=n {
                let y = lo + j as f64 * h;
                let d = deriv(y);
                if prev_d > 0.0 && d <= 0.0 {
                    // Bracketed a local maximum; bisect the derivative root.
                    let (mut ya, mut yb) = (prev_y, y);
                    for _ in 0..60 {
                        let ym = 0.5 * (ya + yb);
                        if deriv(ym) > 0.0 {
                            ya = ym;
                        } else {
                            yb = ym;
                        }
                    }
                    let ystar = 0.5 * (ya + yb);
                    consider(ystar, self.pdf(ystar));
                }
                prev_y = y;
                prev_d = d;
            }
        }
        best
    }
}

/// Mutual information `I(X; X + Z) = h(Y) - h(Z)` in nats, for the mixture
/// output induced by `input`.
pub fn mutual_information(input: &DiscreteInput, spec: &QuadratureSpec) -> Result<f64> {
    let density = MixtureDensity::new(input.clone());
    let h = density.entropy(spec)?;
    Ok((h - STANDARD_GAUSSIAN_ENTROPY).max(0.0))
}

/// Marginal information density `i(x) = D(N(x, 1) || P_{X+Z})` in nats:
/// the relative entropy between the channel output at input `x` and the
/// mixture output law. Requires `|x| <= A`.
pub fn marginal_information_density(
    input: &DiscreteInput,
    x: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let a = input.constraint().bound();
    if x.abs() > a {
        return Err(Error::precondition(format!(
            "query point {x} outside amplitude bound {a}"
        )));
    }
    let density = MixtureDensity::new(input.clone());
    let r = spec.truncation_radius(std_normal_pdf(0.0));
    let est = quad::integrate(
        |y| {
            let g = std_normal_pdf(y - x);
            if g < 1e-300 {
                0.0
            } else {
                g * (std_normal_log_pdf(y - x) - density.log_pdf(y))
            }
        },
        x - r,
        x + r,
        spec,
    )?;
    Ok(est.value.max(0.0))
}

/// Gradient of mutual information with respect to the mass-point locations,
/// holding the weights fixed:
/// `dI/dx_k = -w_k * integral (y - x_k) phi(y - x_k) ln f(y) dy`.
pub fn mutual_information_location_gradient(
    input: &DiscreteInput,
    spec: &QuadratureSpec,
) -> Result<Vec<f64>> {
    let density = MixtureDensity::new(input.clone());
    let r = spec.truncation_radius(std_normal_pdf(0.0));
    let mut grad = Vec::with_capacity(input.support_size());
    for (&x, &w) in input.points().iter().zip(input.weights()) {
        let est = quad::integrate(
            |y| {
                let g = std_normal_pdf(y - x);
                if g < 1e-300 {
                    0.0
                } else {
                    (y - x) * g * density.log_pdf(y)
                }
            },
            x - r,
            x + r,
            spec,
        )?;
        grad.push(-w * est.value);
    }
    Ok(grad)
}

/// Output density of the continuous uniform input `U[-A, A]` through the
/// channel: `(Phi(y + A) - Phi(y - A)) / (2A)`, evaluated through `erfc`
/// so both tails stay accurate.
pub fn uniform_output_pdf(a: f64, y: f64) -> f64 {
    let y = y.abs();
    let d = erfc((y - a) / std::f64::consts::SQRT_2) - erfc((y + a) / std::f64::consts::SQRT_2);
    (d / (4.0 * a)).max(0.0)
}
