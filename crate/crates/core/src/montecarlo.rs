//! Independent sampling oracle.
//!
//! Draws offset pairs from their uniform product distribution with
//! counter-based streams and estimates every statistic of [`crate::analysis`]
//! empirically, by materializing snapshots and walking satellites with the
//! plain [`crate::geometry`] predicates — deliberately not sharing the
//! quadrature code paths it is meant to check. Also runs the ergodic
//! time-average versus ensemble-average experiment.

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{self, QuadratureGrid};
use crate::dynamics::{self, AngularSpeeds, DynamicsError, RegimeClassification};
use crate::geometry::{
    is_visible, nearest_satellite, snapshot, ConstellationSpec, OffsetPair, UserGeometry,
};
use crate::link::{antenna_gain, FadingModel, LinkBudget};
use crate::numeric::{pairwise_sum, powa};
use crate::stats;
use crate::stream::{domain, stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonteCarloError {
    #[error("ensemble needs at least 100 samples: got {0}")]
    TooFewSamples(usize),
    #[error("confidence must lie strictly inside (0, 1): got {0}")]
    InvalidConfidence(f64),
    #[error(
        "offsets with no visible satellite occur with probability {probability:.2e}; \
         the mean nearest distance is infinite under the distance-infinity convention, \
         so the time-vs-ensemble comparison is refused for this setting"
    )]
    CoverageHole { probability: f64 },
    #[error("time average did not stay finite: a coverage hole was hit along the trajectory")]
    UnboundedMetric,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Ensemble size, seed, and the confidence level of reported intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    n_samples: usize,
    seed: u64,
    confidence: f64,
}

impl EnsembleConfig {
    pub fn new(n_samples: usize, seed: u64) -> Result<Self, MonteCarloError> {
        if n_samples < 100 {
            return Err(MonteCarloError::TooFewSamples(n_samples));
        }
        Ok(Self {
            n_samples,
            seed,
            confidence: 0.99,
        })
    }

    pub fn with_confidence(mut self, confidence: f64) -> Result<Self, MonteCarloError> {
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(MonteCarloError::InvalidConfidence(confidence));
        }
        self.confidence = confidence;
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }
}

/// Point estimate with a confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Estimate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Outcome of an analytic-versus-empirical comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub analytic_value: f64,
    pub empirical_value: f64,
    pub half_width: f64,
    /// Largest absolute deviation; equals `|analytic - empirical|` for scalars.
    pub sup_norm: f64,
    pub passed: bool,
    pub note: Option<String>,
}

/// The `k`-th offset pair of the ensemble: a pure function of
/// `(seed, k)`, uniform on the product interval.
pub fn sample_offsets(config: &EnsembleConfig, k: usize, spec: &ConstellationSpec) -> OffsetPair {
    assert!(k < config.n_samples, "sample index {k} out of range");
    let mut rng = stream(config.seed, domain::OFFSET_SAMPLES, k as u64, 0);
    let u1: f64 = rand::Rng::gen(&mut rng);
    let u2: f64 = rand::Rng::gen(&mut rng);
    OffsetPair::new(u1 * spec.theta_interval(), u2 * spec.omega_interval(), spec)
}

/// Nearest-satellite distance of every sample; no visibility maps to
/// infinity (the distance-infinity convention).
fn nearest_distance_samples(
    spec: &ConstellationSpec,
    user: &UserGeometry,
    config: &EnsembleConfig,
) -> Vec<f64> {
    (0..config.n_samples)
        .into_par_iter()
        .map(|k| {
            let sats = snapshot(spec, &sample_offsets(config, k, spec));
            nearest_satellite(&sats, user).map_or(f64::INFINITY, |(_, d)| d)
        })
        .collect()
}

/// Empirical CCDF of the nearest-satellite distance on a distance grid, with
/// Wilson score intervals. Samples with no visible satellite count as
/// exceeding every distance.
pub fn empirical_distance_ccdf(
    spec: &ConstellationSpec,
    user: &UserGeometry,
    distances: &[f64],
    config: &EnsembleConfig,
) -> Vec<Estimate> {
    let mut samples = nearest_distance_samples(spec, user, config);
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    distances
        .iter()
        .map(|&d| {
            let exceed = n - samples.partition_point(|&x| x <= d);
            let (lo, hi) = stats::wilson_interval(exceed as u64, n as u64, config.confidence);
            Estimate {
                value: exceed as f64 / n as f64,
                lo,
                hi,
            }
        })
        .collect()
}

fn flat_index(spec: &ConstellationSpec, orbit: u32, slot: u32) -> u64 {
    (orbit as u64 - 1) * spec.sats_per_orbit() as u64 + (slot as u64 - 1)
}

/// One draw of the total interference power: sum over visible satellites of
/// `p * G * H * d^-alpha` with a fresh fade per satellite, keyed by
/// (sample index, satellite index).
fn sample_total_interference<F: FadingModel>(
    spec: &ConstellationSpec,
    budget: &LinkBudget,
    fading: &F,
    user: &UserGeometry,
    config: &EnsembleConfig,
    k: usize,
) -> f64 {
    let sats = snapshot(spec, &sample_offsets(config, k, spec));
    let mut total = 0.0;
    for (idx, pos) in sats.iter() {
        if !is_visible(pos, user, spec) {
            continue;
        }
        let d = pos.distance(user.position());
        let mut rng = stream(
            config.seed,
            domain::INTERFERENCE_FADING,
            k as u64,
            flat_index(spec, idx.orbit, idx.slot),
        );
        let h = fading.sample(&mut rng);
        total +=
            budget.ref_power() * antenna_gain(d, budget) * h / powa(d, budget.pathloss_exponent());
    }
    total
}

/// Empirical mean of the total interference power, with a normal-approximation
/// confidence interval.
pub fn empirical_mean_interference<F: FadingModel>(
    spec: &ConstellationSpec,
    budget: &LinkBudget,
    fading: &F,
    user: &UserGeometry,
    config: &EnsembleConfig,
) -> Estimate {
    let values: Vec<f64> = (0..config.n_samples)
        .into_par_iter()
        .map(|k| sample_total_interference(spec, budget, fading, user, config, k))
        .collect();
    let (mean, lo, hi) = stats::mean_interval(&values, config.confidence);
    Estimate {
        value: mean,
        lo,
        hi,
    }
}

/// Empirical Laplace transform of the total interference: sample mean of
/// `exp(-s * T)` over fresh constellation and fading draws.
pub fn empirical_interference_laplace<F: FadingModel>(
    spec: &ConstellationSpec,
    budget: &LinkBudget,
    fading: &F,
    user: &UserGeometry,
    s: f64,
    config: &EnsembleConfig,
) -> Estimate {
    assert!(s >= 0.0 && s.is_finite());
    let values: Vec<f64> = (0..config.n_samples)
        .into_par_iter()
        .map(|k| (-s * sample_total_interference(spec, budget, fading, user, config, k)).exp())
        .collect();
    let (mean, lo, hi) = stats::mean_interval(&values, config.confidence);
    Estimate {
        value: mean,
        lo,
        hi,
    }
}

/// Empirical downlink coverage: fraction of samples whose nearest-satellite
/// SINR exceeds `tau`, with a Wilson interval. Samples with no visible
/// satellite count as not covered.
pub fn empirical_coverage<F: FadingModel>(
    spec: &ConstellationSpec,
    budget: &LinkBudget,
    fading: &F,
    user: &UserGeometry,
    tau: f64,
    config: &EnsembleConfig,
) -> Estimate {
    assert!(tau > 0.0 && tau.is_finite());
    let covered: Vec<f64> = (0..config.n_samples)
        .into_par_iter()
        .map(|k| {
            let sats = snapshot(spec, &sample_offsets(config, k, spec));
            let Some((serving_idx, d_star)) = nearest_satellite(&sats, user) else {
                return 0.0;
            };
            let alpha = budget.pathloss_exponent();
            let mut interference = 0.0;
            for (idx, pos) in sats.iter() {
                if idx == serving_idx || !is_visible(pos, user, spec) {
                    continue;
                }
                let d = pos.distance(user.position());
                let mut rng = stream(
                    config.seed,
                    domain::COVERAGE_FADING,
                    k as u64,
                    flat_index(spec, idx.orbit, idx.slot),
                );
                let h = fading.sample(&mut rng);
                interference += budget.ref_power() * antenna_gain(d, budget) * h / powa(d, alpha);
            }
            let mut rng = stream(
                config.seed,
                domain::COVERAGE_FADING,
                k as u64,
                flat_index(spec, serving_idx.orbit, serving_idx.slot),
            );
            let h_star = fading.sample(&mut rng);
            let signal =
                budget.ref_power() * antenna_gain(d_star, budget) * h_star / powa(d_star, alpha);
            if signal > tau * (interference + budget.noise_power()) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let successes = pairwise_sum(&covered) as u64;
    let (lo, hi) = stats::wilson_interval(successes, config.n_samples as u64, config.confidence);
    Estimate {
        value: successes as f64 / config.n_samples as f64,
        lo,
        hi,
    }
}

/// Compares the long-horizon time average of the nearest-satellite distance
/// with the ensemble mean derived from the analytic CCDF.
///
/// Settings where some offsets leave the user without a visible satellite
/// are refused: the ensemble mean is infinite there by the
/// distance-infinity convention. A periodic speed declaration still runs,
/// but the report is flagged: time averages then depend on the initial
/// offsets and have no reason to match the ensemble mean.
pub fn ergodicity_experiment(
    spec: &ConstellationSpec,
    speeds: &AngularSpeeds,
    user: &UserGeometry,
    horizon: f64,
    step: f64,
    config: &EnsembleConfig,
    rel_tolerance: f64,
) -> Result<ComparisonReport, MonteCarloError> {
    let regime = dynamics::classify(speeds, spec)?;

    // ensemble side: converged quadrature of the mean nearest distance
    let (mnd, _grid) = analysis::refine(
        QuadratureGrid::new(512, 512).expect("valid grid"),
        1e-3,
        2,
        |g| analysis::mean_nearest_distance(spec, user, g),
        |a, b| (a.truncated_mean - b.truncated_mean).abs() / b.truncated_mean.abs().max(1.0),
    );
    if mnd.no_visibility_probability > 0.0 {
        return Err(MonteCarloError::CoverageHole {
            probability: mnd.no_visibility_probability,
        });
    }
    let ensemble_mean = mnd.truncated_mean;

    // time side
    let initial = sample_offsets(config, 0, spec);
    let metric = |sats: &crate::geometry::SatelliteSet| {
        nearest_satellite(sats, user).map_or(f64::INFINITY, |(_, d)| d)
    };
    let time_avg = dynamics::time_average(metric, &initial, speeds, spec, horizon, step)?;
    if !time_avg.is_finite() {
        return Err(MonteCarloError::UnboundedMetric);
    }

    // batch-means noise estimate over 16 contiguous sub-horizons
    let half_width = {
        let batches = 16usize;
        let sub = horizon / batches as f64;
        if sub >= step {
            let means: Vec<f64> = (0..batches)
                .map(|b| {
                    let start = dynamics::offsets_at(&initial, speeds, spec, b as f64 * sub);
                    dynamics::time_average(metric, &start, speeds, spec, sub, step)
                        .expect("validated sampling")
                })
                .collect();
            let (_, lo, hi) = stats::mean_interval(&means, config.confidence);
            0.5 * (hi - lo)
        } else {
            0.0
        }
    };

    let rel_error = (time_avg - ensemble_mean).abs() / ensemble_mean;
    let note = match regime {
        RegimeClassification::Periodic { period } => Some(format!(
            "periodic (period {period:.3} s): time average is initial-condition-dependent \
             and need not match the ensemble mean"
        )),
        RegimeClassification::Ergodic => None,
    };
    Ok(ComparisonReport {
        analytic_value: ensemble_mean,
        empirical_value: time_avg,
        half_width,
        sup_norm: (time_avg - ensemble_mean).abs(),
        passed: rel_error <= rel_tolerance,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::RatioDeclaration;
    use crate::link::{deterministic_fading, rayleigh_fading};
    use approx::assert_abs_diff_eq;

    fn leo(n_o: u32, n_s: u32) -> ConstellationSpec {
        ConstellationSpec::new(n_o, n_s, 33f64.to_radians(), 6.921e6, 6.37e6).unwrap()
    }

    fn user(spec: &ConstellationSpec, lat_deg: f64) -> UserGeometry {
        UserGeometry::new(lat_deg.to_radians(), spec).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(matches!(
            EnsembleConfig::new(99, 1),
            Err(MonteCarloError::TooFewSamples(99))
        ));
        assert!(matches!(
            EnsembleConfig::new(100, 1).unwrap().with_confidence(1.0),
            Err(MonteCarloError::InvalidConfidence(_))
        ));
        let c = EnsembleConfig::new(100, 1).unwrap();
        assert_eq!(c.confidence(), 0.99);
    }

    #[test]
    fn offsets_are_deterministic_in_seed_and_index() {
        let spec = leo(5, 7);
        let config = EnsembleConfig::new(1000, 42).unwrap();
        let a = sample_offsets(&config, 17, &spec);
        let b = sample_offsets(&config, 17, &spec);
        assert_eq!(a, b);
        let other_seed = EnsembleConfig::new(1000, 43).unwrap();
        assert_ne!(a, sample_offsets(&other_seed, 17, &spec));
        assert_ne!(a, sample_offsets(&config, 18, &spec));
    }

    #[test]
    fn offsets_marginals_are_uniform_and_uncorrelated() {
        let spec = leo(5, 7);
        let n = 100_000;
        let config = EnsembleConfig::new(n, 7).unwrap();
        let pairs: Vec<OffsetPair> = (0..n).map(|k| sample_offsets(&config, k, &spec)).collect();
        let mut thetas: Vec<f64> = pairs.iter().map(|p| p.theta_bar()).collect();
        let mut omegas: Vec<f64> = pairs.iter().map(|p| p.omega_bar()).collect();
        let crit = crate::stats::ks_critical_one_sample(n, 0.01);
        let d_theta = crate::stats::ks_statistic_uniform(&mut thetas, 0.0, spec.theta_interval());
        let d_omega = crate::stats::ks_statistic_uniform(&mut omegas, 0.0, spec.omega_interval());
        assert!(d_theta < crit, "theta marginal KS {d_theta} >= {crit}");
        assert!(d_omega < crit, "omega marginal KS {d_omega} >= {crit}");

        let thetas: Vec<f64> = pairs.iter().map(|p| p.theta_bar()).collect();
        let omegas: Vec<f64> = pairs.iter().map(|p| p.omega_bar()).collect();
        let rho = crate::stats::sample_correlation(&thetas, &omegas);
        assert!(rho.abs() < 0.01, "correlation {rho}");
    }

    #[test]
    fn time_shifted_offsets_remain_uniform() {
        // one-sample KS on each marginal after pushing the uniform ensemble
        // through the flow, plus a two-sample KS against a fresh ensemble
        let spec = leo(5, 7);
        let speeds = AngularSpeeds::physical(&spec);
        let n = 100_000;
        let config = EnsembleConfig::new(n, 11).unwrap();
        let t = 123_456.789;
        let moved: Vec<OffsetPair> = (0..n)
            .map(|k| dynamics::offsets_at(&sample_offsets(&config, k, &spec), &speeds, &spec, t))
            .collect();
        let mut thetas: Vec<f64> = moved.iter().map(|p| p.theta_bar()).collect();
        let mut omegas: Vec<f64> = moved.iter().map(|p| p.omega_bar()).collect();
        let crit = crate::stats::ks_critical_one_sample(n, 0.01);
        assert!(crate::stats::ks_statistic_uniform(&mut thetas, 0.0, spec.theta_interval()) < crit);
        assert!(crate::stats::ks_statistic_uniform(&mut omegas, 0.0, spec.omega_interval()) < crit);

        let fresh_config = EnsembleConfig::new(n, 12).unwrap();
        let mut fresh: Vec<f64> = (0..n)
            .map(|k| sample_offsets(&fresh_config, k, &spec).theta_bar())
            .collect();
        let two = crate::stats::ks_statistic_two_sample(&mut thetas, &mut fresh);
        assert!(
            two < crate::stats::ks_critical_two_sample(n, n, 0.01),
            "two-sample KS {two}"
        );
    }

    #[test]
    fn ccdf_below_minimum_chord_is_exactly_one() {
        let spec = leo(4, 5);
        let u = user(&spec, 15.0);
        let config = EnsembleConfig::new(500, 3).unwrap();
        let est = &empirical_distance_ccdf(&spec, &u, &[spec.min_distance() - 1.0], &config)[0];
        assert_eq!(est.value, 1.0);
        assert!(est.lo > 0.98);
    }

    #[test]
    fn deterministic_fading_interference_matches_quadrature() {
        let spec = leo(6, 9);
        let u = user(&spec, 15.0);
        let budget =
            LinkBudget::new(100.0, crate::link::db_to_linear(24.0), 1.0, 946e3, 2.0, 0.0).unwrap();
        let config = EnsembleConfig::new(20_000, 5).unwrap();
        let emp = empirical_mean_interference(&spec, &budget, &deterministic_fading(), &u, &config);
        let grid = QuadratureGrid::new(256, 256).unwrap();
        let analytic = analysis::mean_interference(&spec, &budget, &u, &grid);
        let rel = (emp.value - analytic).abs() / analytic;
        assert!(
            rel < 0.02,
            "relative gap {rel}: {} vs {analytic}",
            emp.value
        );
        assert!(
            emp.contains(analytic),
            "[{}, {}] misses {analytic}",
            emp.lo,
            emp.hi
        );
    }

    #[test]
    fn interference_laplace_matches_quadrature_at_moderate_argument() {
        // an argument where the transform sits well inside (0, 1), so the
        // agreement is not vacuous
        let spec = ConstellationSpec::new(12, 16, 53f64.to_radians(), 6.921e6, 6.37e6).unwrap();
        let u = user(&spec, 15.0);
        let budget =
            LinkBudget::new(100.0, crate::link::db_to_linear(24.0), 1.0, 946e3, 2.0, 0.0).unwrap();
        let fading = rayleigh_fading();
        let s = 1e7;
        let grid = QuadratureGrid::new(256, 256).unwrap();
        let analytic = analysis::interference_laplace(&spec, &budget, &fading, &u, s, &grid);
        assert!(
            (0.5..0.95).contains(&analytic),
            "test setting drifted: L = {analytic}"
        );
        let config = EnsembleConfig::new(20_000, 6).unwrap();
        let emp = empirical_interference_laplace(&spec, &budget, &fading, &u, s, &config);
        assert!(
            (analytic - emp.value).abs() < 0.01,
            "analytic {analytic} vs empirical {}",
            emp.value
        );
    }

    #[test]
    fn coverage_limits() {
        let spec = leo(6, 9);
        let u = user(&spec, 15.0);
        let config = EnsembleConfig::new(2_000, 8).unwrap();
        let quiet =
            LinkBudget::new(100.0, crate::link::db_to_linear(30.0), 1.0, 946e3, 2.0, 0.0).unwrap();
        // vanishing threshold: covered iff anything is visible
        let est = empirical_coverage(&spec, &quiet, &rayleigh_fading(), &u, 1e-12, &config);
        let visible: f64 = (0..config.n_samples())
            .map(|k| {
                let sats = snapshot(&spec, &sample_offsets(&config, k, &spec));
                if nearest_satellite(&sats, &u).is_some() {
                    1.0
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / config.n_samples() as f64;
        assert_abs_diff_eq!(est.value, visible, epsilon = 1e-9);

        // overwhelming noise: nothing is covered
        let deaf =
            LinkBudget::new(100.0, crate::link::db_to_linear(30.0), 1.0, 946e3, 2.0, 1e6).unwrap();
        let est = empirical_coverage(&spec, &deaf, &rayleigh_fading(), &u, 1.0, &config);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn empirical_operations_replay_bit_identically() {
        let spec = leo(5, 6);
        let u = user(&spec, 10.0);
        let budget = LinkBudget::new(
            100.0,
            crate::link::db_to_linear(24.0),
            1.0,
            946e3,
            2.0,
            1e-13,
        )
        .unwrap();
        let config = EnsembleConfig::new(500, 99).unwrap();
        let a = empirical_coverage(&spec, &budget, &rayleigh_fading(), &u, 1.0, &config);
        let b = empirical_coverage(&spec, &budget, &rayleigh_fading(), &u, 1.0, &config);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        let la =
            empirical_interference_laplace(&spec, &budget, &rayleigh_fading(), &u, 1e7, &config);
        let lb =
            empirical_interference_laplace(&spec, &budget, &rayleigh_fading(), &u, 1e7, &config);
        assert_eq!(la.value.to_bits(), lb.value.to_bits());
    }

    #[test]
    fn interval_calibration_across_seeds() {
        // the analytic value should fall inside the 99% interval nearly always
        let spec = leo(4, 6);
        let u = user(&spec, 15.0);
        let d = 0.5 * (spec.min_distance() + spec.max_visible_distance());
        let grid = QuadratureGrid::new(1024, 1024).unwrap();
        let analytic = analysis::distance_ccdf(&spec, &u, d, &grid).unwrap();
        let mut inside = 0;
        for seed in 0..100 {
            let config = EnsembleConfig::new(1000, seed).unwrap();
            let est = &empirical_distance_ccdf(&spec, &u, &[d], &config)[0];
            if est.contains(analytic) {
                inside += 1;
            }
        }
        assert!(
            inside >= 95,
            "analytic value inside only {inside}/100 intervals"
        );
    }

    #[test]
    fn interval_width_follows_the_root_n_law() {
        let spec = leo(4, 6);
        let u = user(&spec, 15.0);
        let d = 0.5 * (spec.min_distance() + spec.max_visible_distance());
        let small = EnsembleConfig::new(10_000, 21).unwrap();
        let large = EnsembleConfig::new(20_000, 21).unwrap();
        let hw_small = empirical_distance_ccdf(&spec, &u, &[d], &small)[0].half_width();
        let hw_large = empirical_distance_ccdf(&spec, &u, &[d], &large)[0].half_width();
        let ratio = hw_small / hw_large;
        assert!((1.3..=1.5).contains(&ratio), "shrink ratio {ratio}");
    }

    #[test]
    fn ergodicity_experiment_refuses_coverage_holes() {
        let spec = leo(3, 3);
        let u = user(&spec, 15.0);
        let speeds = AngularSpeeds::physical(&spec);
        let config = EnsembleConfig::new(100, 1).unwrap();
        let got = ergodicity_experiment(&spec, &speeds, &u, 1e5, 100.0, &config, 0.02);
        assert!(matches!(got, Err(MonteCarloError::CoverageHole { .. })));
    }

    #[test]
    fn ergodicity_experiment_flags_periodic_declarations() {
        let spec = leo(20, 20);
        let u = user(&spec, 15.0);
        let v_theta = std::f64::consts::TAU / 86164.0;
        let speeds = AngularSpeeds::new(
            v_theta,
            14.0 * v_theta,
            RatioDeclaration::Rational {
                numer: 1,
                denom: 14,
            },
        )
        .unwrap();
        let config = EnsembleConfig::new(100, 2).unwrap();
        let report =
            ergodicity_experiment(&spec, &speeds, &u, 17_000.0, 13.0, &config, 0.02).unwrap();
        assert!(report.note.as_deref().unwrap_or("").contains("periodic"));
        assert!(report.analytic_value.is_finite() && report.empirical_value.is_finite());
    }

    #[test]
    fn constant_metric_agrees_in_any_regime() {
        let spec = leo(5, 5);
        let speeds = AngularSpeeds::physical(&spec);
        let config = EnsembleConfig::new(100, 3).unwrap();
        let initial = sample_offsets(&config, 0, &spec);
        let avg = dynamics::time_average(|_| 4.25, &initial, &speeds, &spec, 1000.0, 10.0).unwrap();
        assert_eq!(avg, 4.25);
    }
}
