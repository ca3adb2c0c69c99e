//! Cross-module invariants: randomized normalization and log/linear
//! consistency of mixtures, divergence orderings on mixture pairs, the
//! chi-squared/TV upgrade on the circle, Parseval consistency on random
//! inputs, and solver symmetry properties.

use proptest::prelude::*;

use ampcap_core::bounds;
use ampcap_core::divergence::{self, DensityPair};
use ampcap_core::mixture::{
    self, std_normal_pdf, AmplitudeConstraint, DiscreteInput, MixtureDensity,
};
use ampcap_core::quad::{self, QuadratureSpec};
use ampcap_core::solver::{self, SolverConfig};
use ampcap_core::wrapped::{self, WrapParameter, WrappedDensity};

fn arbitrary_input() -> impl Strategy<Value = DiscreteInput> {
    (
        0.5f64..4.0,
        prop::collection::vec((0.01f64..1.0, 0.05f64..1.0), 1..6),
    )
        .prop_map(|(a, raw)| {
            let constraint = AmplitudeConstraint::new(a).unwrap();
            let mut points = Vec::new();
            let mut weights = Vec::new();
            for (i, (frac, w)) in raw.iter().enumerate() {
                // Spread candidate points over [-A, A] with distinct slots.
                let slot = (i as f64 + frac) / raw.len() as f64;
                points.push(-a + 2.0 * a * slot);
                weights.push(*w);
            }
            let sum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= sum);
            DiscreteInput::new(points, weights, constraint).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mixture_normalizes(input in arbitrary_input()) {
        let spec = QuadratureSpec::default();
        let a = input.constraint().bound();
        let mix = MixtureDensity::new(input);
        let (lo, hi) = spec.truncation_interval(a, std_normal_pdf(0.0));
        let est = quad::integrate(|y| mix.pdf(y), lo, hi, &spec).unwrap();
        prop_assert!((est.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_and_linear_pdf_agree(input in arbitrary_input()) {
        let a = input.constraint().bound();
        let mix = MixtureDensity::new(input);
        let mut y = -a - 12.0;
        while y <= a + 12.0 {
            let linear = mix.pdf(y);
            if linear > 1e-300 {
                let relative = ((mix.log_pdf(y).exp() - linear) / linear).abs();
                prop_assert!(relative < 1e-12, "y = {y}, rel = {relative}");
            }
            y += 0.37;
        }
    }

    #[test]
    fn peak_lies_within_one_of_a_mass_point(input in arbitrary_input()) {
        let mix = MixtureDensity::new(input.clone());
        let peak = mix.peak();
        let nearest = input
            .points()
            .iter()
            .map(|&x| (peak.location - x).abs())
            .fold(f64::INFINITY, f64::min);
        prop_assert!(nearest <= 1.0 + 1e-9);
    }

    #[test]
    fn mutual_information_capped_by_log_support(input in arbitrary_input()) {
        let spec = QuadratureSpec::default();
        let mi = mixture::mutual_information(&input, &spec).unwrap();
        let cap = (input.support_size() as f64).ln();
        prop_assert!(mi >= 0.0);
        prop_assert!(mi <= cap + 1e-9, "I = {mi}, ln K = {cap}");
    }
}

#[test]
fn divergences_vanish_only_for_equal_mixtures() {
    let spec = QuadratureSpec::default();
    let constraint = AmplitudeConstraint::new(2.0).unwrap();
    let d1 = DiscreteInput::new(vec![-1.5, 0.3, 1.7], vec![0.3, 0.4, 0.3], constraint).unwrap();
    let d2 = DiscreteInput::new(vec![-1.5, 0.4, 1.7], vec![0.3, 0.4, 0.3], constraint).unwrap();
    let m1 = MixtureDensity::new(d1);
    let m2 = MixtureDensity::new(d2);
    let p = |y: f64| m1.pdf(y);
    let q = |y: f64| m2.pdf(y);

    let same = DensityPair::line(&p, &p, -12.0, 12.0);
    assert!(divergence::tv(&same, &spec).unwrap() < 1e-12);
    assert!(divergence::kl(&same, &spec).unwrap() < 1e-12);
    assert!(divergence::chi2(&same, &spec).unwrap() < 1e-12);

    let diff = DensityPair::line(&p, &q, -12.0, 12.0);
    let tv = divergence::tv(&diff, &spec).unwrap();
    let kl = divergence::kl(&diff, &spec).unwrap();
    let chi2 = divergence::chi2(&diff, &spec).unwrap();
    assert!(tv > 1e-4 && kl > 1e-6 && chi2 > 1e-6);
    // Standard ordering.
    assert!(chi2 >= kl - 1e-12);
    assert!(kl >= 2.0 * tv * tv - 1e-12);
}

#[test]
fn chi2_tv_upgrade_on_the_circle() {
    // For a wrapped density bounded by M against the circular uniform:
    // chi2 <= 2 (2 pi M + 1) tv.
    let spec = QuadratureSpec::default();
    for a in [1.5, 3.0] {
        let constraint = AmplitudeConstraint::new(a).unwrap();
        let input = DiscreteInput::new(
            vec![-0.8 * a, 0.1 * a, 0.9 * a],
            vec![0.45, 0.2, 0.35],
            constraint,
        )
        .unwrap();
        let wd = WrappedDensity::mixture(input, WrapParameter::new(a).unwrap());
        let p = |t: f64| wd.pdf(t);
        let q = |_t: f64| 1.0 / (2.0 * std::f64::consts::PI);
        let mut sup: f64 = 0.0;
        for i in 0..4000 {
            let t = -std::f64::consts::PI + (i as f64 + 0.5) * (2.0 * std::f64::consts::PI / 4000.0);
            sup = sup.max(wd.pdf(t));
        }
        let pair = DensityPair::circle(&p, &q);
        let chi2 = divergence::chi2(&pair, &spec).unwrap();
        let tv = divergence::tv(&pair, &spec).unwrap();
        let factor = 2.0 * (2.0 * std::f64::consts::PI * sup + 1.0);
        assert!(chi2 <= factor * tv + 1e-9, "A={a}: {chi2} vs {}", factor * tv);
    }
}

#[test]
fn parseval_matches_quadrature_on_random_inputs() {
    use rand::Rng;
    use rand::SeedableRng;
    let spec = QuadratureSpec::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    for _ in 0..6 {
        let a = rng.random_range(1.0..5.0);
        let k = rng.random_range(2..6);
        let constraint = AmplitudeConstraint::new(a).unwrap();
        let mut points: Vec<f64> = Vec::new();
        while points.len() < k {
            let x: f64 = rng.random_range(-a..a);
            if points.iter().all(|&p: &f64| (p - x).abs() > 1e-2) {
                points.push(x);
            }
        }
        points.sort_by(f64::total_cmp);
        let mut weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let input = DiscreteInput::new(points, weights, constraint).unwrap();

        let order = wrapped::parseval_order(&constraint, k, 1e-12);
        let series = wrapped::chi2_wrapped_parseval(&input, &constraint, order).unwrap();
        let wd = WrappedDensity::mixture(input, WrapParameter::new(a).unwrap());
        let p = |t: f64| wd.pdf(t);
        let q = |_t: f64| 1.0 / (2.0 * std::f64::consts::PI);
        let pair = DensityPair::circle(&p, &q);
        let quadrature = divergence::chi2(&pair, &spec).unwrap();
        assert!(
            (series.value - quadrature).abs() <= 1e-8,
            "A={a} K={k}: series {} vs quadrature {}",
            series.value,
            quadrature
        );
    }
}

#[test]
fn pinsker_holds_for_wrapped_solved_pair() {
    // Wrapped uniform against the wrapped solved output at A = 5.
    let spec = QuadratureSpec::default();
    let cfg = SolverConfig::new(5.0).unwrap();
    let solved = solver::solve_capacity(&cfg).unwrap();
    assert!(solved.kkt.certified);
    let wd = WrappedDensity::mixture(solved.input.clone(), WrapParameter::new(5.0).unwrap());
    let p = |_t: f64| 1.0 / (2.0 * std::f64::consts::PI);
    let q = |t: f64| wd.pdf(t);
    let pair = DensityPair::circle(&p, &q);
    let tv = divergence::tv(&pair, &spec).unwrap();
    let kl = divergence::kl(&pair, &spec).unwrap();
    assert!(tv > 0.0);
    assert!(tv <= (0.5 * kl).sqrt() + 1e-12);

    // Corollary-style consistency: the closed-form TV lower bound stays
    // below the measured distance.
    let k = solved.input.support_size();
    let bound =
        wrapped::tv_wrapped_lower_bound(k, &solved.input.constraint(), bounds::WRAPPED_DENSITY_SUP)
            .unwrap();
    assert!(bound <= tv);
}

#[test]
fn uniform_kl_bound_and_golden_gap_at_a10() {
    let spec = QuadratureSpec::default();
    let cfg = SolverConfig::new(10.0).unwrap();
    let solved = solver::solve_capacity(&cfg).unwrap();
    assert!(solved.kkt.certified);

    // Measured D(grid-uniform output || solved output) under the closed-form
    // bound sqrt(pi e / 2) / A.
    let (grid, _) = bounds::grid_uniform_auto(10.0, &spec).unwrap();
    let gm = MixtureDensity::new(grid.clone());
    let sm = MixtureDensity::new(solved.input.clone());
    let p = |y: f64| gm.pdf(y);
    let q = |y: f64| sm.pdf(y);
    let (lo, hi) = spec.truncation_interval(10.0, std_normal_pdf(0.0));
    let pair = DensityPair::line(&p, &q, lo, hi);
    let kl = divergence::kl(&pair, &spec).unwrap();
    assert!(kl <= bounds::kl_uniform_bound(10.0));

    // Capacity-gap inequality for the grid-uniform candidate, and the gap
    // itself under the same closed form.
    let gap = solver::golden_gap(&grid, &solved, &spec).unwrap();
    assert!(gap.holds);
    assert!(gap.output_divergence <= gap.capacity_gap + 1e-9);
    assert!(gap.capacity_gap <= bounds::kl_uniform_bound(10.0));
}

#[test]
fn grid_uniform_information_stays_in_sandwich_at_larger_amplitudes() {
    let spec = QuadratureSpec::default();
    for a in [5.0, 10.0] {
        let (lo, hi) = bounds::capacity_bounds(a);
        let d = bounds::grid_uniform(a, 101).unwrap();
        let mi = mixture::mutual_information(&d, &spec).unwrap();
        assert!(mi >= lo && mi <= hi, "A={a}: {lo} <= {mi} <= {hi}");
    }
}

#[test]
fn verified_bounds_report_at_a2() {
    let spec = QuadratureSpec::default();
    let cfg = SolverConfig::new(2.0).unwrap();
    let solved = solver::solve_capacity(&cfg).unwrap();
    let (report, measured) = bounds::bounds_report(&solved, &spec).unwrap();
    assert!(report.all_pass, "checks: {:?}", report.checks);
    assert!(measured.wrapped_density_max <= report.wrapped_density_bound.unwrap());
    // CSV row formatting round-trips the amplitude.
    let row = report.csv_row(&measured);
    assert!(row.starts_with("2,"));
    assert_eq!(row.split(',').count(), bounds::BoundsReport::csv_header().split(',').count());
}

#[test]
fn symmetry_toggle_preserves_capacity() {
    // Solving without the symmetry constraint from a symmetric warm start
    // changes the capacity by at most 1e-9.
    let symmetric = solver::solve_capacity(&SolverConfig::new(2.0).unwrap()).unwrap();
    assert!(symmetric.input.is_symmetric(0.0));

    let mut free_cfg = SolverConfig::new(2.0).unwrap();
    free_cfg.enforce_symmetry = false;
    free_cfg.warm_start = Some(symmetric.input.clone());
    let free = solver::solve_capacity(&free_cfg).unwrap();
    assert!(free.kkt.certified);
    assert!(
        (free.capacity - symmetric.capacity).abs() <= 1e-9,
        "{} vs {}",
        free.capacity,
        symmetric.capacity
    );
}

#[test]
fn interior_pair_drifts_toward_merge() {
    // At A = 2 a four-point start has its interior pair drift together
    // (the optimum is ternary); the full solve merges them.
    let cfg = SolverConfig::new(2.0).unwrap();
    let support = [-2.0, -0.1, 0.1, 2.0];
    let w = solver::optimize_weights(&support, &cfg).unwrap();
    let d = DiscreteInput::new(support.to_vec(), w.weights, cfg.constraint()).unwrap();
    let moved = solver::optimize_locations(&d, &cfg).unwrap();
    // The pair is driven together; either it has already collapsed (merge
    // flagged) or its gap shrank.
    if moved.merged {
        assert_eq!(moved.input.support_size(), 3);
        assert!(moved.input.points()[1].abs() < 1e-12);
    } else {
        let gap_after = moved.input.points()[2] - moved.input.points()[1];
        assert!(gap_after <= 0.2 + 1e-12, "gap grew to {gap_after}");
    }

    let solved = solver::solve_capacity(&cfg).unwrap();
    assert_eq!(solved.input.support_size(), 3);
}

#[test]
fn kkt_report_for_point_mass_scales_with_amplitude() {
    // A single point at the origin with claimed capacity zero certifies only
    // in the vanishing-amplitude limit; the violation grows with A.
    let mut violations = Vec::new();
    for a in [1e-4, 0.05, 0.5] {
        let cfg = SolverConfig::new(a).unwrap();
        let d = DiscreteInput::point_mass(0.0, cfg.constraint()).unwrap();
        let report = solver::kkt_report(&d, 0.0, &cfg).unwrap();
        violations.push(report.max_violation);
    }
    assert!(violations[0] <= 1e-8, "tiny amplitude certifies: {violations:?}");
    assert!(violations[0] < violations[1] && violations[1] < violations[2]);
}
