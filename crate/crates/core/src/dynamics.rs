//! Offset dynamics: the constellation seen from the rotating Earth frame is a
//! linear flow of the offset pair on a two-dimensional torus. Earth spin
//! drives the longitude offset backwards, orbital motion drives the phase
//! offset forwards. A rational speed ratio makes the flow periodic; an
//! irrational one makes it ergodic, so long-run time averages match ensemble
//! averages under the uniform invariant distribution.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{snapshot, ConstellationSpec, OffsetPair, SatelliteSet};
use crate::numeric::{advance_mod, pairwise_sum};

/// Sidereal day, seconds.
pub const SIDEREAL_DAY_S: f64 = 86164.0905;

/// Geocentric gravitational parameter, m^3/s^2.
pub const EARTH_MU: f64 = 3.986004418e14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("earth spin rate must be nonnegative and finite: got {0} rad/s")]
    InvalidEarthSpin(f64),
    #[error("satellite angular rate must be positive and finite: got {0} rad/s")]
    InvalidSatelliteRate(f64),
    #[error("rational declaration needs a positive denominator")]
    ZeroDenominator,
    #[error(
        "declared ratio {numer}/{denom} inconsistent with speeds: \
         earth_spin/satellite_rate = {actual}"
    )]
    InconsistentRatio { numer: i64, denom: u64, actual: f64 },
    #[error("time averaging needs horizon > 0 and 0 < step <= horizon: horizon = {horizon} s, step = {step} s")]
    InvalidSampling { horizon: f64, step: f64 },
}

/// Declared arithmetic nature of the speed ratio `earth_spin / satellite_rate`.
///
/// Rationality is undecidable from floating-point speeds, so the designer
/// states it; `Rational` declarations are validated against the numeric
/// speeds to 1e-12 relative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioDeclaration {
    Rational { numer: i64, denom: u64 },
    Irrational,
}

/// Angular speeds of the two torus coordinates plus the declared ratio kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularSpeeds {
    earth_spin: f64,
    satellite_rate: f64,
    ratio: RatioDeclaration,
}

impl AngularSpeeds {
    pub fn new(
        earth_spin: f64,
        satellite_rate: f64,
        ratio: RatioDeclaration,
    ) -> Result<Self, DynamicsError> {
        if !(earth_spin.is_finite() && earth_spin >= 0.0) {
            return Err(DynamicsError::InvalidEarthSpin(earth_spin));
        }
        if !(satellite_rate.is_finite() && satellite_rate > 0.0) {
            return Err(DynamicsError::InvalidSatelliteRate(satellite_rate));
        }
        if let RatioDeclaration::Rational { numer, denom } = ratio {
            if denom == 0 {
                return Err(DynamicsError::ZeroDenominator);
            }
            let lhs = earth_spin * denom as f64;
            let rhs = satellite_rate * numer as f64;
            let scale = lhs.abs().max(rhs.abs());
            let consistent = scale == 0.0 || (lhs - rhs).abs() <= 1e-12 * scale;
            if !consistent {
                return Err(DynamicsError::InconsistentRatio {
                    numer,
                    denom,
                    actual: earth_spin / satellite_rate,
                });
            }
        }
        Ok(Self {
            earth_spin,
            satellite_rate,
            ratio,
        })
    }

    /// Standard physical speeds: sidereal Earth spin and the circular-orbit
    /// Kepler rate `sqrt(mu / r^3)`, declared irrational.
    pub fn physical(spec: &ConstellationSpec) -> Self {
        let r = spec.orbit_radius();
        Self {
            earth_spin: std::f64::consts::TAU / SIDEREAL_DAY_S,
            satellite_rate: (EARTH_MU / (r * r * r)).sqrt(),
            ratio: RatioDeclaration::Irrational,
        }
    }

    pub fn earth_spin(&self) -> f64 {
        self.earth_spin
    }

    pub fn satellite_rate(&self) -> f64 {
        self.satellite_rate
    }

    pub fn ratio(&self) -> RatioDeclaration {
        self.ratio
    }
}

/// Offset pair rescaled to the unit torus `[0,1)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedTorusState {
    pub theta_unit: f64,
    pub omega_unit: f64,
}

/// Linear rescaling onto the unit torus.
pub fn normalize(offsets: &OffsetPair, spec: &ConstellationSpec) -> NormalizedTorusState {
    NormalizedTorusState {
        theta_unit: offsets.theta_bar() / spec.theta_interval(),
        omega_unit: offsets.omega_bar() / spec.omega_interval(),
    }
}

/// Inverse of [`normalize`].
pub fn denormalize(state: &NormalizedTorusState, spec: &ConstellationSpec) -> OffsetPair {
    OffsetPair::new(
        state.theta_unit * spec.theta_interval(),
        state.omega_unit * spec.omega_interval(),
        spec,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegimeClassification {
    /// The flow repeats exactly with this period (seconds).
    Periodic { period: f64 },
    /// Orbits are dense; time averages converge to ensemble averages.
    Ergodic,
}

/// Offset pair after `t` seconds: the longitude offset decreases with Earth
/// spin, the phase offset increases with orbital motion, each modulo its own
/// interval. Reduction keeps ulp-level accuracy out to ~1e9 s.
pub fn offsets_at(
    initial: &OffsetPair,
    speeds: &AngularSpeeds,
    spec: &ConstellationSpec,
    t: f64,
) -> OffsetPair {
    assert!(
        t >= 0.0 && t.is_finite(),
        "time must be nonnegative, got {t}"
    );
    let theta = advance_mod(
        initial.theta_bar(),
        -speeds.earth_spin(),
        t,
        spec.theta_interval(),
    );
    let omega = advance_mod(
        initial.omega_bar(),
        speeds.satellite_rate(),
        t,
        spec.omega_interval(),
    );
    OffsetPair::new(theta, omega, spec)
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Classifies the flow from the declared ratio.
///
/// For `Rational { numer: p, denom: q }` (so `earth_spin/satellite_rate = p/q`)
/// the longitude-offset cycle is `C_th = (2pi/N_o)/earth_spin` and the phase
/// cycle `C_om = (2pi/N_s)/satellite_rate`; their cycle-count ratio
/// `C_th : C_om = N_s*q : N_o*p` is cleared to lowest integer terms, giving
/// the joint period `(N_s*q / gcd(N_s*q, N_o*p)) * C_om` with the only
/// floating-point step being the final division.
pub fn classify(
    speeds: &AngularSpeeds,
    spec: &ConstellationSpec,
) -> Result<RegimeClassification, DynamicsError> {
    // revalidate so stale struct contents cannot smuggle an inconsistent declaration
    let speeds = AngularSpeeds::new(speeds.earth_spin, speeds.satellite_rate, speeds.ratio)?;
    match speeds.ratio {
        RatioDeclaration::Irrational => Ok(RegimeClassification::Ergodic),
        RatioDeclaration::Rational { numer, denom } => {
            if numer < 0 {
                // nonnegative speeds make a negative ratio impossible; the
                // consistency check above already rejected it unless both are 0
                return Err(DynamicsError::InconsistentRatio {
                    numer,
                    denom,
                    actual: speeds.earth_spin / speeds.satellite_rate,
                });
            }
            let p = numer as u128;
            let q = denom as u128;
            let g0 = gcd_u128(p, q).max(1);
            let (p, q) = (p / g0, q / g0);
            let ns_q = spec.sats_per_orbit() as u128 * q;
            let no_p = spec.n_orbits() as u128 * p;
            let g = gcd_u128(ns_q, no_p).max(1);
            let omega_cycles = (ns_q / g) as f64;
            let omega_cycle_s = spec.omega_interval() / speeds.satellite_rate;
            Ok(RegimeClassification::Periodic {
                period: omega_cycles * omega_cycle_s,
            })
        }
    }
}

/// Left-endpoint Riemann time average of `metric` over `floor(horizon/step)`
/// snapshots. Sample evaluations run in parallel; the reduction is a fixed
/// pairwise tree, so the result is bit-stable across thread counts.
pub fn time_average<F>(
    metric: F,
    initial: &OffsetPair,
    speeds: &AngularSpeeds,
    spec: &ConstellationSpec,
    horizon: f64,
    step: f64,
) -> Result<f64, DynamicsError>
where
    F: Fn(&SatelliteSet) -> f64 + Sync,
{
    if !(horizon > 0.0 && step > 0.0 && step <= horizon && horizon.is_finite()) {
        return Err(DynamicsError::InvalidSampling { horizon, step });
    }
    let samples = (horizon / step).floor() as u64;
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let offsets = offsets_at(initial, speeds, spec, k as f64 * step);
            metric(&snapshot(spec, &offsets))
        })
        .collect();
    Ok(pairwise_sum(&values) / samples as f64)
}

/// Default time-average step: 1/64 of the phase-offset cycle.
pub fn default_step(speeds: &AngularSpeeds, spec: &ConstellationSpec) -> f64 {
    spec.omega_interval() / speeds.satellite_rate() / 64.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{Signed, ToPrimitive};
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn spec_20_20() -> ConstellationSpec {
        ConstellationSpec::new(20, 20, 33f64.to_radians(), 6.921e6, 6.37e6).unwrap()
    }

    /// Exact rational value of an f64 (mantissa times power of two).
    fn big(x: f64) -> BigRational {
        BigRational::from_float(x).expect("finite")
    }

    /// Exact floored modulus in arbitrary-precision rationals.
    fn rational_mod(x: &BigRational, l: &BigRational) -> BigRational {
        let q = (x / l).floor();
        let mut r = x - q * l;
        if r.is_negative() {
            r += l;
        }
        if &r >= l {
            r -= l;
        }
        r
    }

    /// Extended-precision oracle for the torus flow.
    fn offsets_at_oracle(
        initial: (f64, f64),
        speeds: (f64, f64),
        spec: &ConstellationSpec,
        t: f64,
    ) -> (f64, f64) {
        let l_theta = big(spec.theta_interval());
        let l_omega = big(spec.omega_interval());
        let theta = rational_mod(&(big(initial.0) - big(speeds.0) * big(t)), &l_theta);
        let omega = rational_mod(&(big(initial.1) + big(speeds.1) * big(t)), &l_omega);
        (theta.to_f64().unwrap(), omega.to_f64().unwrap())
    }

    #[test]
    fn zero_time_is_identity() {
        let spec = spec_20_20();
        let speeds = AngularSpeeds::new(7.3e-5, 1.1e-3, RatioDeclaration::Irrational).unwrap();
        let s0 = OffsetPair::new(0.01, 0.02, &spec);
        assert_eq!(offsets_at(&s0, &speeds, &spec, 0.0), s0);
    }

    #[test]
    fn full_theta_cycle_leaves_theta_unchanged() {
        let spec = spec_20_20();
        let speeds =
            AngularSpeeds::new(TAU / 86164.0, 1.0e-3, RatioDeclaration::Irrational).unwrap();
        let s0 = OffsetPair::new(0.013, 0.021, &spec);
        let t = spec.theta_interval() / speeds.earth_spin();
        let s1 = offsets_at(&s0, &speeds, &spec, t);
        assert_abs_diff_eq!(s1.theta_bar(), s0.theta_bar(), epsilon = 1e-10);
        // naive fmod route as an independent cross-check for the omega leg
        let expected_omega =
            (s0.omega_bar() + speeds.satellite_rate() * t).rem_euclid(spec.omega_interval());
        assert_abs_diff_eq!(s1.omega_bar(), expected_omega, epsilon = 1e-9);
    }

    #[test]
    fn flow_matches_extended_precision_oracle() {
        let spec = spec_20_20();
        let v_theta = TAU / 86164.0;
        let v_omega = 1.0e-3;
        let speeds = AngularSpeeds::new(v_theta, v_omega, RatioDeclaration::Irrational).unwrap();
        let s0 = OffsetPair::new(0.01, 0.02, &spec);
        for t in [1.0e3, 4.56e5, 7.89e7, 1.0e9] {
            let got = offsets_at(&s0, &speeds, &spec, t);
            let (want_theta, want_omega) =
                offsets_at_oracle((0.01, 0.02), (v_theta, v_omega), &spec, t);
            // compare on the circle: 0 and the interval length are the same point
            let circ = |a: f64, b: f64, l: f64| {
                let d = (a - b).abs();
                d.min(l - d)
            };
            assert!(
                circ(got.theta_bar(), want_theta, spec.theta_interval()) < 1e-9,
                "t = {t}: theta {} vs oracle {want_theta}",
                got.theta_bar()
            );
            assert!(
                circ(got.omega_bar(), want_omega, spec.omega_interval()) < 1e-9,
                "t = {t}: omega {} vs oracle {want_omega}",
                got.omega_bar()
            );
        }
    }

    #[test]
    fn rational_declaration_is_validated() {
        let v_theta = TAU / 86164.0;
        assert!(AngularSpeeds::new(
            v_theta,
            14.0 * v_theta,
            RatioDeclaration::Rational {
                numer: 1,
                denom: 14
            }
        )
        .is_ok());
        assert!(matches!(
            AngularSpeeds::new(
                v_theta,
                13.0 * v_theta,
                RatioDeclaration::Rational {
                    numer: 1,
                    denom: 14
                }
            ),
            Err(DynamicsError::InconsistentRatio { .. })
        ));
        assert!(matches!(
            AngularSpeeds::new(
                v_theta,
                1.0,
                RatioDeclaration::Rational { numer: 1, denom: 0 }
            ),
            Err(DynamicsError::ZeroDenominator)
        ));
    }

    #[test]
    fn classify_examples() {
        let spec = spec_20_20();
        let v_theta = TAU / 86164.0;

        // one-to-fourteen ratio: the phase cycle divides the longitude cycle
        let speeds = AngularSpeeds::new(
            v_theta,
            14.0 * v_theta,
            RatioDeclaration::Rational {
                numer: 1,
                denom: 14,
            },
        )
        .unwrap();
        match classify(&speeds, &spec).unwrap() {
            RegimeClassification::Periodic { period } => {
                assert_relative_eq!(period, 86164.0 / 20.0, max_relative = 1e-9);
                // .. and the phase cycle fits exactly 14 times
                let omega_cycle = spec.omega_interval() / speeds.satellite_rate();
                assert_relative_eq!(period / omega_cycle, 14.0, max_relative = 1e-9);
            }
            other => panic!("expected periodic, got {other:?}"),
        }

        // irrational declaration
        let speeds = AngularSpeeds::physical(&spec);
        assert_eq!(
            classify(&speeds, &spec).unwrap(),
            RegimeClassification::Ergodic
        );

        // equal speeds, equal counts
        let speeds = AngularSpeeds::new(
            1.0e-3,
            1.0e-3,
            RatioDeclaration::Rational { numer: 1, denom: 1 },
        )
        .unwrap();
        match classify(&speeds, &spec).unwrap() {
            RegimeClassification::Periodic { period } => {
                assert_relative_eq!(period, spec.theta_interval() / 1.0e-3, max_relative = 1e-12);
            }
            other => panic!("expected periodic, got {other:?}"),
        }
    }

    #[test]
    fn classify_period_matches_exact_rational_oracle() {
        // independent route: exact LCM of the two cycle lengths in BigRational
        let spec = ConstellationSpec::new(6, 15, 0.9, 7.0e6, 6.37e6).unwrap();
        for (p, q) in [(1u64, 14u64), (2, 5), (3, 7), (0, 1), (5, 3)] {
            let v_omega = 1.1e-3;
            let v_theta = v_omega * p as f64 / q as f64;
            let speeds = AngularSpeeds::new(
                v_theta,
                v_omega,
                RatioDeclaration::Rational {
                    numer: p as i64,
                    denom: q,
                },
            )
            .unwrap();
            let got = match classify(&speeds, &spec).unwrap() {
                RegimeClassification::Periodic { period } => period,
                other => panic!("expected periodic, got {other:?}"),
            };

            // least T = a*C_theta = b*C_omega over positive integers, via the
            // reduced fraction C_theta/C_omega = (N_s q)/(N_o p)
            let c_omega = big(spec.omega_interval()) / big(v_omega);
            let want = if p == 0 {
                c_omega.clone()
            } else {
                let ns_q = BigRational::from(BigInt::from(15u64 * q));
                let no_p = BigRational::from(BigInt::from(6u64 * p));
                let ratio = ns_q / no_p; // = C_theta / C_omega
                                         // smallest b with b * ratio ... b = numerator of reduced ratio
                let b = ratio.numer().clone();
                BigRational::from(b) * c_omega.clone()
            };
            let want = want.to_f64().unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-9);

            // definition check: both coordinates return to zero displacement
            let theta_cycles = v_theta * got / spec.theta_interval();
            let omega_cycles = v_omega * got / spec.omega_interval();
            if p > 0 {
                assert_relative_eq!(theta_cycles, theta_cycles.round(), epsilon = 1e-6);
            }
            assert_relative_eq!(omega_cycles, omega_cycles.round(), epsilon = 1e-6);
        }
    }

    #[test]
    fn periodic_flow_returns_to_start() {
        let spec = spec_20_20();
        let v_theta = TAU / 86164.0;
        let speeds = AngularSpeeds::new(
            v_theta,
            14.0 * v_theta,
            RatioDeclaration::Rational {
                numer: 1,
                denom: 14,
            },
        )
        .unwrap();
        let period = match classify(&speeds, &spec).unwrap() {
            RegimeClassification::Periodic { period } => period,
            _ => unreachable!(),
        };
        let s0 = OffsetPair::new(0.0123, 0.0456, &spec);
        let s1 = offsets_at(&s0, &speeds, &spec, period);
        let circ = |a: f64, b: f64, l: f64| {
            let d = (a - b).abs();
            d.min(l - d)
        };
        assert!(circ(s1.theta_bar(), s0.theta_bar(), spec.theta_interval()) < 1e-9);
        assert!(circ(s1.omega_bar(), s0.omega_bar(), spec.omega_interval()) < 1e-9);
    }

    #[test]
    fn constant_metric_time_average_is_exact() {
        let spec = ConstellationSpec::new(3, 4, 0.9, 7.0e6, 6.37e6).unwrap();
        let speeds = AngularSpeeds::physical(&spec);
        let s0 = OffsetPair::new(0.1, 0.2, &spec);
        let avg = time_average(|_| 2.5, &s0, &speeds, &spec, 1000.0, 10.0).unwrap();
        assert_eq!(avg, 2.5);
    }

    #[test]
    fn time_average_validates_sampling() {
        let spec = spec_20_20();
        let speeds = AngularSpeeds::physical(&spec);
        let s0 = OffsetPair::new(0.0, 0.0, &spec);
        assert!(matches!(
            time_average(|_| 1.0, &s0, &speeds, &spec, 0.0, 1.0),
            Err(DynamicsError::InvalidSampling { .. })
        ));
        assert!(matches!(
            time_average(|_| 1.0, &s0, &speeds, &spec, 10.0, 20.0),
            Err(DynamicsError::InvalidSampling { .. })
        ));
    }

    #[test]
    fn periodic_average_ignores_phase_within_the_cycle() {
        let spec = ConstellationSpec::new(4, 6, 0.9, 6.921e6, 6.37e6).unwrap();
        let v_theta = 1.0e-4;
        let speeds = AngularSpeeds::new(
            v_theta,
            3.0 * v_theta,
            RatioDeclaration::Rational { numer: 1, denom: 3 },
        )
        .unwrap();
        let period = match classify(&speeds, &spec).unwrap() {
            RegimeClassification::Periodic { period } => period,
            _ => unreachable!(),
        };
        let step = period / 256.0;
        let user = crate::geometry::UserGeometry::new(0.25, &spec).unwrap();
        let d_cap = spec.max_visible_distance();
        let metric = move |sats: &SatelliteSet| {
            crate::geometry::nearest_satellite(sats, &user).map_or(d_cap, |(_, d)| d)
        };

        let s0 = OffsetPair::new(0.07, 0.11, &spec);
        let a0 = time_average(metric, &s0, &speeds, &spec, period, step).unwrap();
        // start 17 sample slots later on the same orbit: same sample multiset
        let s1 = offsets_at(&s0, &speeds, &spec, 17.0 * step);
        let a1 = time_average(metric, &s1, &speeds, &spec, period, step).unwrap();
        assert_relative_eq!(a0, a1, max_relative = 1e-9);
    }

    #[test]
    fn normalization_examples() {
        let spec = spec_20_20();
        let o = OffsetPair::new(0.1, 0.2, &spec);
        let n = normalize(&o, &spec);
        assert_relative_eq!(
            n.theta_unit,
            0.1 / spec.theta_interval(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            n.omega_unit,
            0.2 / spec.omega_interval(),
            max_relative = 1e-15
        );
    }

    proptest! {
        #[test]
        fn flow_property_composes(
            t0 in 0.0f64..1.0,
            w0 in 0.0f64..1.0,
            t1 in 0.0f64..1.0e7,
            t2 in 0.0f64..1.0e7,
        ) {
            let spec = ConstellationSpec::new(20, 20, 0.576, 6.921e6, 6.37e6).unwrap();
            let speeds = AngularSpeeds::physical(&spec);
            let s0 = OffsetPair::new(t0 * spec.theta_interval(), w0 * spec.omega_interval(), &spec);
            let one_shot = offsets_at(&s0, &speeds, &spec, t1 + t2);
            let two_shot = offsets_at(&offsets_at(&s0, &speeds, &spec, t1), &speeds, &spec, t2);
            let circ = |a: f64, b: f64, l: f64| { let d = (a - b).abs(); d.min(l - d) };
            prop_assert!(circ(one_shot.theta_bar(), two_shot.theta_bar(), spec.theta_interval()) < 1e-9);
            prop_assert!(circ(one_shot.omega_bar(), two_shot.omega_bar(), spec.omega_interval()) < 1e-9);
        }

        #[test]
        fn normalization_roundtrips(
            t0 in 0.0f64..0.9999,
            w0 in 0.0f64..0.9999,
        ) {
            let spec = ConstellationSpec::new(20, 20, 0.576, 6.921e6, 6.37e6).unwrap();
            let o = OffsetPair::new(t0 * spec.theta_interval(), w0 * spec.omega_interval(), &spec);
            let back = denormalize(&normalize(&o, &spec), &spec);
            prop_assert!((back.theta_bar() - o.theta_bar()).abs() <= 1e-15 * spec.theta_interval());
            prop_assert!((back.omega_bar() - o.omega_bar()).abs() <= 1e-15 * spec.omega_interval());
            let n = normalize(&o, &spec);
            prop_assert!((0.0..1.0).contains(&n.theta_unit));
            prop_assert!((0.0..1.0).contains(&n.omega_unit));
        }
    }
}
