//! Radio-link primitives: two-level antenna gain with a cutoff distance,
//! power-law path loss referenced to 1 m, unit-mean fading models, and
//! thermal noise power.
//!
//! Everything here is linear SI. Decibel and megahertz conversions happen at
//! configuration boundaries only.

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::numeric::powa;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("{name} must be positive and finite: got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("transmit gain must be at least 1 (linear): got {0}")]
    TransmitGainBelowUnity(f64),
    #[error("path-loss exponent must be at least 2: got {0}")]
    PathlossExponentTooSmall(f64),
    #[error("noise power must be nonnegative: got {0}")]
    NegativeNoise(f64),
    #[error("path loss is referenced to 1 m; channel distance must exceed it: got {0} m")]
    DistanceBelowReference(f64),
}

/// Downlink budget: reference received power at 1 m, linear antenna gains,
/// gain-cutoff distance, path-loss exponent, and receiver noise power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    ref_power: f64,
    tx_gain: f64,
    rx_gain: f64,
    gain_cutoff: f64,
    pathloss_exponent: f64,
    noise_power: f64,
}

impl LinkBudget {
    pub fn new(
        ref_power: f64,
        tx_gain: f64,
        rx_gain: f64,
        gain_cutoff: f64,
        pathloss_exponent: f64,
        noise_power: f64,
    ) -> Result<Self, LinkError> {
        let positive = [
            ("ref_power", ref_power),
            ("rx_gain", rx_gain),
            ("gain_cutoff", gain_cutoff),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(LinkError::NonPositive { name, value });
            }
        }
        if !(tx_gain.is_finite() && tx_gain >= 1.0) {
            return Err(LinkError::TransmitGainBelowUnity(tx_gain));
        }
        if !(pathloss_exponent.is_finite() && pathloss_exponent >= 2.0) {
            return Err(LinkError::PathlossExponentTooSmall(pathloss_exponent));
        }
        if !(noise_power.is_finite() && noise_power >= 0.0) {
            return Err(LinkError::NegativeNoise(noise_power));
        }
        Ok(Self {
            ref_power,
            tx_gain,
            rx_gain,
            gain_cutoff,
            pathloss_exponent,
            noise_power,
        })
    }

    pub fn ref_power(&self) -> f64 {
        self.ref_power
    }

    pub fn tx_gain(&self) -> f64 {
        self.tx_gain
    }

    pub fn rx_gain(&self) -> f64 {
        self.rx_gain
    }

    pub fn gain_cutoff(&self) -> f64 {
        self.gain_cutoff
    }

    pub fn pathloss_exponent(&self) -> f64 {
        self.pathloss_exponent
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }
}

/// Aggregate antenna gain over a channel of length `d`: the transmit boost
/// applies inside the cutoff (inclusive), the isotropic receive gain always.
pub fn antenna_gain(d: f64, budget: &LinkBudget) -> f64 {
    debug_assert!(d > 0.0);
    if d <= budget.gain_cutoff {
        budget.tx_gain * budget.rx_gain
    } else {
        budget.rx_gain
    }
}

/// Mean received power at distance `d`: `p * G(d) * d^-alpha` (unit-mean
/// fading averaged out). `d` must exceed the 1 m reference distance.
pub fn mean_rx_power(d: f64, budget: &LinkBudget) -> Result<f64, LinkError> {
    if d.is_nan() || d <= 1.0 {
        return Err(LinkError::DistanceBelowReference(d));
    }
    Ok(budget.ref_power * antenna_gain(d, budget) / powa(d, budget.pathloss_exponent))
}

/// Receiver noise power `k_B * T * B * 10^(NF/10)`.
pub fn noise_from_temperature(temperature_k: f64, noise_figure_db: f64, bandwidth_hz: f64) -> f64 {
    debug_assert!(temperature_k > 0.0 && bandwidth_hz > 0.0);
    BOLTZMANN * temperature_k * bandwidth_hz * db_to_linear(noise_figure_db)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

// ============================================================================
// Fading
// ============================================================================

/// Unit-mean channel fading: CCDF, Laplace transform, and a sampler driven by
/// a caller-supplied random source.
pub trait FadingModel: Send + Sync {
    /// `P(H > x)` for `x >= 0`.
    fn ccdf(&self, x: f64) -> f64;

    /// `E[exp(-s H)]` for `s >= 0`.
    fn laplace(&self, s: f64) -> f64;

    fn sample(&self, rng: &mut dyn RngCore) -> f64;

    /// Closed form for `E[ccdf(a * (noise + sum_k powers[k] * H_k))]` over
    /// i.i.d. fades `H_k`, when the model admits one. `None` means the caller
    /// falls back to Monte Carlo over the fades.
    fn conditional_coverage_closed_form(
        &self,
        a: f64,
        noise: f64,
        interferer_powers: &[f64],
    ) -> Option<f64> {
        let _ = (a, noise, interferer_powers);
        None
    }
}

/// Rayleigh fading: exponential power with unit mean.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayleighFading;

impl FadingModel for RayleighFading {
    fn ccdf(&self, x: f64) -> f64 {
        (-x).exp()
    }

    fn laplace(&self, s: f64) -> f64 {
        1.0 / (1.0 + s)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        // inverse CDF; 1 - u stays in (0, 1]
        let u: f64 = rng.gen();
        -(1.0 - u).ln()
    }

    fn conditional_coverage_closed_form(
        &self,
        a: f64,
        noise: f64,
        interferer_powers: &[f64],
    ) -> Option<f64> {
        // exp(-a*noise) * prod_k 1/(1 + a*b_k): the exponential CCDF factors
        // the interference sum into per-satellite Laplace transforms.
        let mut value = (-a * noise).exp();
        for &b in interferer_powers {
            value /= 1.0 + a * b;
        }
        Some(value)
    }
}

/// Degenerate fading `H = 1`. Collapses the stochastic layer so that
/// geometry-only quantities can be validated exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicFading;

impl FadingModel for DeterministicFading {
    fn ccdf(&self, x: f64) -> f64 {
        if x < 1.0 {
            1.0
        } else {
            0.0
        }
    }

    fn laplace(&self, s: f64) -> f64 {
        (-s).exp()
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> f64 {
        1.0
    }

    fn conditional_coverage_closed_form(
        &self,
        a: f64,
        noise: f64,
        interferer_powers: &[f64],
    ) -> Option<f64> {
        let total: f64 = interferer_powers.iter().sum();
        Some(self.ccdf(a * (noise + total)))
    }
}

pub fn rayleigh_fading() -> RayleighFading {
    RayleighFading
}

pub fn deterministic_fading() -> DeterministicFading {
    DeterministicFading
}
