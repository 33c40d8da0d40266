//! End-to-end verification suite.
//!
//! Each criterion cross-validates an analytic evaluator against the sampling
//! oracle at pinned parameters and tolerances, or checks a structural
//! invariant. The `acceptance` integration test runs them one per test; the
//! CLI `--self-test` runs them all and prints the table.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{self, CoverageQuery, QuadratureGrid};
use crate::dynamics::{self, AngularSpeeds, RatioDeclaration, RegimeClassification};
use crate::geometry::{nearest_satellite, snapshot, ConstellationSpec, OffsetPair, UserGeometry};
use crate::link::{db_to_linear, noise_from_temperature, rayleigh_fading, LinkBudget};
use crate::montecarlo::{self, EnsembleConfig};
use crate::stats;

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict}  {}: {}", self.name, self.detail)
    }
}

const ORBIT_RADIUS_M: f64 = 6.921e6;
const EARTH_RADIUS_M: f64 = 6.37e6;

fn reference_spec(n_orbits: u32, sats_per_orbit: u32) -> ConstellationSpec {
    ConstellationSpec::new(
        n_orbits,
        sats_per_orbit,
        33f64.to_radians(),
        ORBIT_RADIUS_M,
        EARTH_RADIUS_M,
    )
    .expect("reference constellation")
}

fn user_at(spec: &ConstellationSpec, lat_deg: f64) -> UserGeometry {
    UserGeometry::new(lat_deg.to_radians(), spec).expect("valid latitude")
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Distance-distribution oracle equivalence: converged quadrature CCDF versus
/// the 1e5-sample empirical CCDF, sup-norm at most 0.01, for a 20x20 and a
/// 30x50 shell at 15 degrees latitude.
pub fn criterion_distance_oracle() -> CriterionResult {
    let mut details = Vec::new();
    let mut passed = true;
    for (n_o, n_s) in [(20u32, 20u32), (30, 50)] {
        let spec = reference_spec(n_o, n_s);
        let user = user_at(&spec, 15.0);
        let ds = linspace(spec.min_distance(), spec.max_visible_distance(), 101);

        let (analytic, _grid) = analysis::refine(
            QuadratureGrid::new(512, 512).unwrap(),
            0.002,
            2,
            |g| analysis::distance_ccdf_curve(&spec, &user, &ds, g).unwrap(),
            |x, y| sup_gap(x, y),
        );
        let config = EnsembleConfig::new(100_000, 0x5EED_0001).unwrap();
        let empirical = montecarlo::empirical_distance_ccdf(&spec, &user, &ds, &config);
        let emp_values: Vec<f64> = empirical.iter().map(|e| e.value).collect();
        let sup = sup_gap(&analytic, &emp_values);
        passed &= sup <= 0.01;
        details.push(format!("{n_o}x{n_s} sup-norm {sup:.4}"));
    }
    CriterionResult {
        name: "distance-ccdf-oracle",
        passed,
        detail: format!("{} (tolerance 0.01)", details.join(", ")),
    }
}

/// Critical distance of the 30x50 shell at 15 degrees latitude: inside
/// [725, 825] km, with the CCDF vanishing 10 km above it and still positive
/// 10 km below it.
pub fn criterion_critical_distance() -> CriterionResult {
    let spec = reference_spec(30, 50);
    let user = user_at(&spec, 15.0);
    let grid = QuadratureGrid::new(2048, 2048).unwrap();
    let d_c = analysis::critical_distance(&spec, &user, &grid, 100.0);
    let above = analysis::distance_ccdf(&spec, &user, d_c + 10e3, &grid).unwrap();
    let below = analysis::distance_ccdf(&spec, &user, d_c - 10e3, &grid).unwrap();
    let in_range = (725e3..=825e3).contains(&d_c);
    let passed = in_range && above == 0.0 && below > 0.0;
    CriterionResult {
        name: "critical-distance",
        passed,
        detail: format!(
            "d_c = {:.1} km (expected 725..825), ccdf(d_c+10km) = {above:.2e}, \
             ccdf(d_c-10km) = {below:.2e}",
            d_c / 1e3
        ),
    }
}

/// Interference oracle equivalence on the 30x75 shell: analytic mean within
/// 2% of the empirical mean at five latitudes, Laplace transform within 0.005
/// absolute at s in {1e12, 1e13} per watt, and the 30-degree mean exceeding
/// the equatorial one.
pub fn criterion_interference_oracle() -> CriterionResult {
    let spec = reference_spec(30, 75);
    let budget =
        LinkBudget::new(db_to_linear(20.0), db_to_linear(24.0), 1.0, 946e3, 2.0, 0.0).unwrap();
    let fading = rayleigh_fading();
    let config = EnsembleConfig::new(100_000, 0x5EED_0003).unwrap();

    let mut passed = true;
    let mut worst_rel = 0.0f64;
    let mut means = Vec::new();
    for lat in [0.0, 15.0, 30.0, 45.0, 60.0] {
        let user = user_at(&spec, lat);
        let (analytic, _) = analysis::refine(
            QuadratureGrid::new(256, 256).unwrap(),
            2e-3,
            2,
            |g| analysis::mean_interference(&spec, &budget, &user, g),
            |x, y| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE),
        );
        let empirical =
            montecarlo::empirical_mean_interference(&spec, &budget, &fading, &user, &config);
        // a shell that never rises above the horizon gives 0 on both routes
        let scale = empirical.value.abs().max(analytic.abs());
        let rel = if scale == 0.0 {
            0.0
        } else {
            (analytic - empirical.value).abs() / scale
        };
        worst_rel = worst_rel.max(rel);
        passed &= rel <= 0.02;
        means.push((lat, analytic));
    }

    let mean_at = |deg: f64| means.iter().find(|(l, _)| *l == deg).unwrap().1;
    let ordering_ok = mean_at(30.0) > mean_at(0.0);
    passed &= ordering_ok;

    let user = user_at(&spec, 15.0);
    let grid = QuadratureGrid::new(256, 256).unwrap();
    let mut worst_laplace = 0.0f64;
    for s in [1e12, 1e13] {
        let analytic = analysis::interference_laplace(&spec, &budget, &fading, &user, s, &grid);
        let empirical =
            montecarlo::empirical_interference_laplace(&spec, &budget, &fading, &user, s, &config);
        let gap = (analytic - empirical.value).abs();
        worst_laplace = worst_laplace.max(gap);
        passed &= gap <= 0.005;
    }

    CriterionResult {
        name: "interference-oracle",
        passed,
        detail: format!(
            "worst mean rel err {worst_rel:.4} (tol 0.02), worst Laplace gap \
             {worst_laplace:.2e} (tol 0.005), mean(30) > mean(0): {ordering_ok}"
        ),
    }
}

/// Coverage oracle equivalence on the 25x30 shell with thermal noise:
/// analytic and empirical coverage within 0.015 at five thresholds, and the
/// closed-form inner expectation within 0.01 of the sampled one.
pub fn criterion_coverage_oracle() -> CriterionResult {
    let spec = reference_spec(25, 30);
    let budget = LinkBudget::new(
        db_to_linear(20.0),
        db_to_linear(30.0),
        1.0,
        946e3,
        2.0,
        noise_from_temperature(300.0, 7.0, 10e6),
    )
    .unwrap();
    let fading = rayleigh_fading();
    let user = user_at(&spec, 15.0);
    let taus: Vec<f64> = [-10.0, -5.0, 0.0, 5.0, 10.0]
        .iter()
        .map(|db| db_to_linear(*db))
        .collect();

    let (analytic, _) = analysis::refine(
        QuadratureGrid::new(256, 256).unwrap(),
        0.002,
        2,
        |g| analysis::coverage_curve(&spec, &budget, &fading, &user, &taus, 1, g, 0),
        |x, y| sup_gap(x, y),
    );
    let config = EnsembleConfig::new(100_000, 0x5EED_0004).unwrap();
    let mut worst = 0.0f64;
    for (ti, &tau) in taus.iter().enumerate() {
        let empirical =
            montecarlo::empirical_coverage(&spec, &budget, &fading, &user, tau, &config);
        worst = worst.max((analytic[ti] - empirical.value).abs());
    }
    let mut passed = worst <= 0.015;

    // closed form vs generic sampling for the inner fading expectation
    let inner_grid = QuadratureGrid::new(64, 64).unwrap();
    let closed = analysis::coverage_probability(
        &spec,
        &budget,
        &fading,
        &user,
        &CoverageQuery::new(1.0, 1).unwrap(),
        &inner_grid,
        7,
    );
    let sampled = analysis::coverage_probability_sampled(
        &spec,
        &budget,
        &fading,
        &user,
        &CoverageQuery::new(1.0, 20_000).unwrap(),
        &inner_grid,
        7,
    );
    let inner_gap = (closed - sampled).abs();
    passed &= inner_gap <= 0.01;

    CriterionResult {
        name: "coverage-oracle",
        passed,
        detail: format!(
            "worst |analytic - empirical| {worst:.4} (tol 0.015), closed-vs-sampled inner \
             gap {inner_gap:.4} (tol 0.01)"
        ),
    }
}

/// Ergodic regime: with physical speeds on the 25x30 shell, the 1e7-second
/// time average of the nearest-satellite distance matches the ensemble mean
/// from the analytic CCDF within 2%.
pub fn criterion_ergodic_time_average() -> CriterionResult {
    let spec = reference_spec(25, 30);
    let user = user_at(&spec, 15.0);
    let speeds = AngularSpeeds::physical(&spec);
    let step = dynamics::default_step(&speeds, &spec);
    let config = EnsembleConfig::new(100, 0x5EED_0005).unwrap();
    match montecarlo::ergodicity_experiment(&spec, &speeds, &user, 1e7, step, &config, 0.02) {
        Ok(report) => {
            let rel =
                (report.empirical_value - report.analytic_value).abs() / report.analytic_value;
            CriterionResult {
                name: "ergodic-time-average",
                passed: report.passed && report.note.is_none(),
                detail: format!(
                    "time avg {:.3} km vs ensemble mean {:.3} km, rel err {rel:.4} (tol 0.02), \
                     step {step:.3} s",
                    report.empirical_value / 1e3,
                    report.analytic_value / 1e3
                ),
            }
        }
        Err(e) => CriterionResult {
            name: "ergodic-time-average",
            passed: false,
            detail: format!("experiment refused: {e}"),
        },
    }
}

/// Periodic regime: a 1:14 rational speed ratio on the 20x20 shell returns
/// the offsets to the initial state after the computed 4308.2 s period, and
/// two different initial offsets produce clearly different time averages.
pub fn criterion_periodic_return() -> CriterionResult {
    let spec = reference_spec(20, 20);
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

    let period = match dynamics::classify(&speeds, &spec) {
        Ok(RegimeClassification::Periodic { period }) => period,
        other => {
            return CriterionResult {
                name: "periodic-return",
                passed: false,
                detail: format!("expected a periodic classification, got {other:?}"),
            }
        }
    };
    let period_ok = (period - 4308.2).abs() / 4308.2 <= 1e-6;

    let s0 = OffsetPair::new(0.0123, 0.0171, &spec);
    let s1 = dynamics::offsets_at(&s0, &speeds, &spec, period);
    let circ = |a: f64, b: f64, l: f64| {
        let d = (a - b).abs();
        d.min(l - d)
    };
    let return_error = circ(s1.theta_bar(), s0.theta_bar(), spec.theta_interval()).max(circ(
        s1.omega_bar(),
        s0.omega_bar(),
        spec.omega_interval(),
    ));
    let return_ok = return_error <= 1e-9;

    // two different starting offsets, each averaged over exactly one period
    // with power-of-two sampling (so the sample count is exact): a periodic
    // flow keeps the orbit averages distinct. The metric is the nearest
    // distance, capped at the cap chord where nothing is visible.
    let user = user_at(&spec, 15.0);
    let cap = spec.max_visible_distance();
    let metric = move |sats: &crate::geometry::SatelliteSet| {
        nearest_satellite(sats, &user).map_or(cap, |(_, d)| d)
    };
    let step = period / 32768.0;
    let s_a = OffsetPair::new(0.001, 0.002, &spec);
    let s_b = OffsetPair::new(0.011, 0.0154, &spec);
    let avg = |s0: &OffsetPair, step: f64| {
        dynamics::time_average(metric, s0, &speeds, &spec, period, step).unwrap()
    };
    let (a1, a2) = (avg(&s_a, step), avg(&s_b, step));
    // sampling noise floor from step refinement
    let floor = 10.0
        * ((a1 - avg(&s_a, step / 2.0))
            .abs()
            .max((a2 - avg(&s_b, step / 2.0)).abs()))
        .max(1e-3);
    let separated = (a1 - a2).abs() > floor;

    CriterionResult {
        name: "periodic-return",
        passed: period_ok && return_ok && separated,
        detail: format!(
            "period {period:.4} s (expected 4308.2), return error {return_error:.2e} rad \
             (tol 1e-9), time averages {:.3} km vs {:.3} km, separation {:.3} km > floor {:.3} km: \
             {separated}",
            a1 / 1e3,
            a2 / 1e3,
            (a1 - a2).abs() / 1e3,
            floor / 1e3
        ),
    }
}

fn check(failures: &mut Vec<String>, ok: bool, label: &str) {
    if !ok {
        failures.push(label.to_string());
    }
}

/// Structural invariants: placement invariants on 1e3 random shells, CCDF
/// shape properties, latitude/longitude symmetry, Laplace and coverage
/// monotonicity, grid-refinement convergence, KS uniformity of the
/// time-shifted offsets, and bit-identical reruns at 1, 4, and 8 threads.
pub fn criterion_invariants() -> CriterionResult {
    let mut failures: Vec<String> = Vec::new();

    // placement invariants on random shells
    {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0007);
        let mut ok = true;
        for _ in 0..1000 {
            let n_o = rng.gen_range(1..=10u32);
            let n_s = rng.gen_range(1..=10u32);
            let incl = rng.gen_range(0.01..std::f64::consts::PI - 0.01);
            let r = EARTH_RADIUS_M + rng.gen_range(1e5..3e7);
            let spec = ConstellationSpec::new(n_o, n_s, incl, r, EARTH_RADIUS_M).unwrap();
            let offsets = OffsetPair::new(
                rng.gen::<f64>() * spec.theta_interval(),
                rng.gen::<f64>() * spec.omega_interval(),
                &spec,
            );
            let sats = snapshot(&spec, &offsets);
            ok &= sats.len() == spec.num_satellites();
            let z_bound = r * incl.sin() * (1.0 + 1e-12) + 1e-9;
            for (_, p) in sats.iter() {
                ok &= (p.norm() - r).abs() <= 1e-12 * r;
                ok &= p.z.abs() <= z_bound;
            }
        }
        check(
            &mut failures,
            ok,
            "snapshot norms/count/band on 1000 random shells",
        );
    }

    let spec = reference_spec(10, 12);
    let user = user_at(&spec, 15.0);

    // CCDF monotone in d and bounded
    {
        let grid = QuadratureGrid::new(512, 512).unwrap();
        let ds = linspace(spec.min_distance(), spec.max_visible_distance(), 64);
        let curve = analysis::distance_ccdf_curve(&spec, &user, &ds, &grid).unwrap();
        let monotone = curve.windows(2).all(|w| w[1] <= w[0]);
        let bounded = curve.iter().all(|v| (0.0..=1.0).contains(v));
        check(
            &mut failures,
            monotone && bounded,
            "ccdf monotone and bounded",
        );
    }

    // latitude symmetry and longitude invariance within quadrature tolerance
    {
        let grid = QuadratureGrid::new(1024, 1024).unwrap();
        let ds = linspace(
            spec.min_distance() + 1e3,
            spec.max_visible_distance() - 1e3,
            9,
        );
        let north =
            analysis::distance_ccdf_curve(&spec, &user_at(&spec, 27.0), &ds, &grid).unwrap();
        let south =
            analysis::distance_ccdf_curve(&spec, &user_at(&spec, -27.0), &ds, &grid).unwrap();
        check(
            &mut failures,
            sup_gap(&north, &south) <= 5e-3,
            "latitude symmetry",
        );

        let rotated_user = UserGeometry::at_longitude(15f64.to_radians(), 1.234, &spec).unwrap();
        let base = analysis::distance_ccdf_curve(&spec, &user, &ds, &grid).unwrap();
        let rotated = analysis::distance_ccdf_curve(&spec, &rotated_user, &ds, &grid).unwrap();
        check(
            &mut failures,
            sup_gap(&base, &rotated) <= 5e-3,
            "longitude invariance",
        );
    }

    let budget = LinkBudget::new(
        db_to_linear(20.0),
        db_to_linear(30.0),
        1.0,
        946e3,
        2.0,
        noise_from_temperature(300.0, 7.0, 10e6),
    )
    .unwrap();
    let fading = rayleigh_fading();

    // interference Laplace transform: exact unity at zero, monotone in s
    {
        let grid = QuadratureGrid::new(64, 64).unwrap();
        let at_zero = analysis::interference_laplace(&spec, &budget, &fading, &user, 0.0, &grid);
        let mut ok = at_zero == 1.0;
        let mut prev = 1.0;
        for s in [1e4, 1e6, 1e8, 1e10] {
            let v = analysis::interference_laplace(&spec, &budget, &fading, &user, s, &grid);
            ok &= v <= prev && v >= 0.0;
            prev = v;
        }
        check(&mut failures, ok, "laplace(0) = 1 and monotone");
    }

    // coverage monotone in the threshold
    {
        let grid = QuadratureGrid::new(96, 96).unwrap();
        let taus: Vec<f64> = [-10.0, -5.0, 0.0, 5.0, 10.0]
            .iter()
            .map(|db| db_to_linear(*db))
            .collect();
        let curve = analysis::coverage_curve(&spec, &budget, &fading, &user, &taus, 1, &grid, 0);
        check(
            &mut failures,
            curve.windows(2).all(|w| w[1] <= w[0]),
            "coverage monotone in tau",
        );
    }

    // grid-refinement convergence on both evaluators
    {
        let (cov, cov_grid) = analysis::refine(
            QuadratureGrid::new(64, 64).unwrap(),
            analysis::CONVERGENCE_TOLERANCE,
            3,
            |g| {
                analysis::coverage_probability(
                    &spec,
                    &budget,
                    &fading,
                    &user,
                    &CoverageQuery::new(1.0, 1).unwrap(),
                    g,
                    3,
                )
            },
            |x, y| (x - y).abs(),
        );
        let cov_next = analysis::coverage_probability(
            &spec,
            &budget,
            &fading,
            &user,
            &CoverageQuery::new(1.0, 1).unwrap(),
            &cov_grid.doubled(),
            3,
        );
        check(
            &mut failures,
            (cov - cov_next).abs() < analysis::CONVERGENCE_TOLERANCE,
            "coverage grid convergence",
        );

        let d_mid = 0.5 * (spec.min_distance() + spec.max_visible_distance());
        let (ccdf, ccdf_grid) = analysis::refine(
            QuadratureGrid::new(256, 256).unwrap(),
            analysis::CONVERGENCE_TOLERANCE,
            3,
            |g| analysis::distance_ccdf(&spec, &user, d_mid, g).unwrap(),
            |x, y| (x - y).abs(),
        );
        let ccdf_next = analysis::distance_ccdf(&spec, &user, d_mid, &ccdf_grid.doubled()).unwrap();
        check(
            &mut failures,
            (ccdf - ccdf_next).abs() < analysis::CONVERGENCE_TOLERANCE,
            "ccdf grid convergence",
        );
    }

    // KS uniformity of the time-shifted offset ensemble
    {
        let spec = reference_spec(5, 7);
        let speeds = AngularSpeeds::physical(&spec);
        let n = 100_000;
        let config = EnsembleConfig::new(n, 0x5EED_0008).unwrap();
        let t = 987_654.3;
        let moved: Vec<OffsetPair> = (0..n)
            .map(|k| {
                dynamics::offsets_at(
                    &montecarlo::sample_offsets(&config, k, &spec),
                    &speeds,
                    &spec,
                    t,
                )
            })
            .collect();
        let mut thetas: Vec<f64> = moved.iter().map(|p| p.theta_bar()).collect();
        let mut omegas: Vec<f64> = moved.iter().map(|p| p.omega_bar()).collect();
        let crit = stats::ks_critical_one_sample(n, 0.01);
        let ok = stats::ks_statistic_uniform(&mut thetas, 0.0, spec.theta_interval()) < crit
            && stats::ks_statistic_uniform(&mut omegas, 0.0, spec.omega_interval()) < crit;
        check(&mut failures, ok, "KS uniformity of time-shifted offsets");
    }

    // bit-identical reruns across thread counts
    {
        let spec = reference_spec(25, 30);
        let user = user_at(&spec, 15.0);
        let compute = || {
            let grid = QuadratureGrid::new(256, 256).unwrap();
            let d_mid = 0.5 * (spec.min_distance() + spec.max_visible_distance());
            let a = analysis::distance_ccdf(&spec, &user, d_mid, &grid).unwrap();
            let b = analysis::coverage_probability(
                &spec,
                &budget,
                &fading,
                &user,
                &CoverageQuery::new(1.0, 1).unwrap(),
                &grid,
                11,
            );
            let config = EnsembleConfig::new(20_000, 0x5EED_0009).unwrap();
            let c = montecarlo::empirical_coverage(&spec, &budget, &fading, &user, 1.0, &config);
            (a.to_bits(), b.to_bits(), c.value.to_bits())
        };
        let mut outcomes = Vec::new();
        let mut pool_ok = true;
        for threads in [1usize, 4, 8] {
            match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => outcomes.push(pool.install(compute)),
                Err(_) => pool_ok = false,
            }
        }
        let identical = pool_ok && outcomes.windows(2).all(|w| w[0] == w[1]);
        check(&mut failures, identical, "bit-identical at 1/4/8 threads");
    }

    let passed = failures.is_empty();
    CriterionResult {
        name: "invariant-suite",
        passed,
        detail: if passed {
            "all structural invariants hold".to_string()
        } else {
            format!("failed: {}", failures.join("; "))
        },
    }
}

/// Runs every criterion in order.
pub fn run_all() -> Vec<CriterionResult> {
    vec![
        criterion_distance_oracle(),
        criterion_critical_distance(),
        criterion_interference_oracle(),
        criterion_coverage_oracle(),
        criterion_ergodic_time_average(),
        criterion_periodic_return(),
        criterion_invariants(),
    ]
}
