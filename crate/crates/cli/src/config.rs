//! Experiment configuration.
//!
//! One TOML tree per run. Angles are degrees, lengths kilometers, powers
//! dBW, gains dBi, bandwidth MHz at this boundary — everything is converted
//! to SI radians/meters/watts on load, then re-validated against the module
//! constraints with field-attributed (and, where possible, line-attributed)
//! messages.

use serde::{Deserialize, Serialize};
use walker_sg_core::analysis::QuadratureGrid;
use walker_sg_core::dynamics::{AngularSpeeds, RatioDeclaration, SIDEREAL_DAY_S};
use walker_sg_core::geometry::{ConstellationSpec, OffsetPair, UserGeometry};
use walker_sg_core::link::{db_to_linear, noise_from_temperature, LinkBudget};
use walker_sg_core::montecarlo::EnsembleConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Snapshot,
    DistanceCcdf,
    CriticalDistance,
    Interference,
    Coverage,
    Ergodicity,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Snapshot => "snapshot",
            ExperimentKind::DistanceCcdf => "distance-ccdf",
            ExperimentKind::CriticalDistance => "critical-distance",
            ExperimentKind::Interference => "interference",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::Ergodicity => "ergodicity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FadingKind {
    Rayleigh,
    Deterministic,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: ExperimentKind,
    pub constellation: ConstellationSection,
    pub user: UserSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<LinkSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fading: Option<FadingKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speeds: Option<SpeedsSection>,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<DistanceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interference: Option<InterferenceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ergodicity: Option<ErgodicitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<OffsetsSection>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConstellationSection {
    pub n_orbits: u32,
    pub sats_per_orbit: u32,
    pub inclination_deg: f64,
    pub orbit_radius_km: f64,
    #[serde(default = "default_earth_radius_km")]
    pub earth_radius_km: f64,
}

fn default_earth_radius_km() -> f64 {
    6370.0
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct UserSection {
    pub latitudes_deg: Vec<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub ref_power_dbw: f64,
    pub tx_gain_dbi: f64,
    #[serde(default)]
    pub rx_gain_dbi: f64,
    pub gain_cutoff_km: f64,
    /// Provenance only: the elevation angle a cutoff distance was quoted
    /// for. No elevation-to-distance formula is applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_elevation_deg: Option<f64>,
    #[serde(default = "default_pathloss_exponent")]
    pub pathloss_exponent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_power_dbw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
}

fn default_pathloss_exponent() -> f64 {
    2.0
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub temperature_k: f64,
    pub noise_figure_db: f64,
    pub bandwidth_mhz: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub earth_spin_rad_per_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub satellite_rate_rad_per_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<RatioSection>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum RatioSection {
    Named(String),
    Fraction { p: i64, q: u64 },
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    #[serde(default = "default_grid_axis")]
    pub n_theta: usize,
    #[serde(default = "default_grid_axis")]
    pub n_omega: usize,
    #[serde(default = "default_true")]
    pub converge: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_doublings")]
    pub max_doublings: u32,
}

fn default_grid_axis() -> usize {
    256
}

fn default_true() -> bool {
    true
}

fn default_tolerance() -> f64 {
    1e-3
}

fn default_max_doublings() -> u32 {
    3
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self {
            n_theta: default_grid_axis(),
            n_omega: default_grid_axis(),
            converge: true,
            tolerance: default_tolerance(),
            max_doublings: default_max_doublings(),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_samples() -> usize {
    100_000
}

fn default_seed() -> u64 {
    1
}

fn default_confidence() -> f64 {
    0.99
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n_samples: default_samples(),
            seed: default_seed(),
            confidence: default_confidence(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_min_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_max_km: Option<f64>,
    #[serde(default = "default_distance_count")]
    pub count: usize,
    #[serde(default = "default_refine_tolerance_m")]
    pub refine_tolerance_m: f64,
}

fn default_distance_count() -> usize {
    101
}

fn default_refine_tolerance_m() -> f64 {
    100.0
}

impl Default for DistanceSection {
    fn default() -> Self {
        Self {
            d_min_km: None,
            d_max_km: None,
            count: default_distance_count(),
            refine_tolerance_m: default_refine_tolerance_m(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSection {
    #[serde(default = "default_tau_db")]
    pub tau_db: Vec<f64>,
    #[serde(default = "default_fading_draws")]
    pub fading_draws: usize,
}

fn default_tau_db() -> Vec<f64> {
    vec![-10.0, -5.0, 0.0, 5.0, 10.0]
}

fn default_fading_draws() -> usize {
    1000
}

impl Default for CoverageSection {
    fn default() -> Self {
        Self {
            tau_db: default_tau_db(),
            fading_draws: default_fading_draws(),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceSection {
    #[serde(default)]
    pub laplace_s_per_watt: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicitySection {
    #[serde(default = "default_horizon_s")]
    pub horizon_s: f64,
    /// Omitted or zero: one sixty-fourth of the phase-offset cycle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_s: Option<f64>,
    #[serde(default = "default_rel_tolerance")]
    pub rel_tolerance: f64,
}

fn default_horizon_s() -> f64 {
    1e7
}

fn default_rel_tolerance() -> f64 {
    0.02
}

impl Default for ErgodicitySection {
    fn default() -> Self {
        Self {
            horizon_s: default_horizon_s(),
            step_s: None,
            rel_tolerance: default_rel_tolerance(),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetsSection {
    pub theta_bar_rad: f64,
    pub omega_bar_rad: f64,
}

// ============================================================================
// Validation and resolution
// ============================================================================

#[derive(Debug, Clone)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: &str, message: impl ToString) -> Self {
        Self {
            path: path.to_string(),
            message: message.to_string(),
        }
    }
}

/// Everything an experiment needs, in SI units and validated.
pub struct Resolved {
    pub experiment: ExperimentKind,
    pub spec: ConstellationSpec,
    pub latitudes_deg: Vec<f64>,
    pub users: Vec<UserGeometry>,
    pub budget: Option<LinkBudget>,
    pub fading: FadingKind,
    pub speeds: AngularSpeeds,
    pub grid: QuadratureGrid,
    pub converge: bool,
    pub tolerance: f64,
    pub max_doublings: u32,
    pub ensemble: EnsembleConfig,
    pub distance: DistanceSection,
    pub tau_linear: Vec<f64>,
    pub tau_db: Vec<f64>,
    pub fading_draws: usize,
    pub laplace_s: Vec<f64>,
    pub horizon_s: f64,
    pub step_s: Option<f64>,
    pub rel_tolerance: f64,
    pub offsets: Option<OffsetPair>,
    pub noise_power_w: f64,
}

/// Validates the whole tree, collecting every violation instead of stopping
/// at the first.
pub fn validate(raw: &RawConfig) -> Vec<Violation> {
    resolve_inner(raw).err().unwrap_or_default()
}

/// Validates and converts to SI core types.
pub fn resolve(raw: &RawConfig) -> Result<Resolved, Vec<Violation>> {
    resolve_inner(raw)
}

fn resolve_inner(raw: &RawConfig) -> Result<Resolved, Vec<Violation>> {
    let mut violations: Vec<Violation> = Vec::new();

    let c = &raw.constellation;
    let spec = match ConstellationSpec::new(
        c.n_orbits,
        c.sats_per_orbit,
        c.inclination_deg.to_radians(),
        c.orbit_radius_km * 1e3,
        c.earth_radius_km * 1e3,
    ) {
        Ok(spec) => Some(spec),
        Err(e) => {
            violations.push(Violation::new("constellation", e));
            None
        }
    };

    let mut users = Vec::new();
    if raw.user.latitudes_deg.is_empty() {
        violations.push(Violation::new(
            "user.latitudes_deg",
            "at least one latitude is required",
        ));
    }
    if let Some(spec) = &spec {
        for &lat in &raw.user.latitudes_deg {
            match UserGeometry::new(lat.to_radians(), spec) {
                Ok(u) => users.push(u),
                Err(e) => violations.push(Violation::new("user.latitudes_deg", e)),
            }
        }
    }

    // noise: direct dBW figure, a temperature block, or neither (0 W)
    let mut noise_power_w = 0.0;
    let mut budget = None;
    if let Some(link) = &raw.link {
        match (&link.noise_power_dbw, &link.noise) {
            (Some(_), Some(_)) => violations.push(Violation::new(
                "link.noise",
                "give either noise_power_dbw or the noise block, not both",
            )),
            (Some(dbw), None) => noise_power_w = db_to_linear(*dbw),
            (None, Some(n)) => {
                if n.temperature_k <= 0.0 || n.bandwidth_mhz <= 0.0 {
                    violations.push(Violation::new(
                        "link.noise",
                        "temperature and bandwidth must be positive",
                    ));
                } else {
                    noise_power_w = noise_from_temperature(
                        n.temperature_k,
                        n.noise_figure_db,
                        n.bandwidth_mhz * 1e6,
                    );
                }
            }
            (None, None) => {}
        }
        match LinkBudget::new(
            db_to_linear(link.ref_power_dbw),
            db_to_linear(link.tx_gain_dbi),
            db_to_linear(link.rx_gain_dbi),
            link.gain_cutoff_km * 1e3,
            link.pathloss_exponent,
            noise_power_w,
        ) {
            Ok(b) => budget = Some(b),
            Err(e) => violations.push(Violation::new("link", e)),
        }
    }
    if matches!(
        raw.experiment,
        ExperimentKind::Interference | ExperimentKind::Coverage
    ) && raw.link.is_none()
    {
        violations.push(Violation::new(
            "link",
            format!(
                "the {} experiment needs a [link] section",
                raw.experiment.name()
            ),
        ));
    }

    // speeds: default to the physical sidereal spin and Kepler rate
    let speeds = {
        let s = raw.speeds.as_ref();
        let earth_spin = s
            .and_then(|s| s.earth_spin_rad_per_s)
            .unwrap_or(std::f64::consts::TAU / SIDEREAL_DAY_S);
        // the Kepler default needs the orbit radius, an explicit rate does not
        let satellite_rate = s.and_then(|s| s.satellite_rate_rad_per_s).or_else(|| {
            spec.as_ref()
                .map(|spec| AngularSpeeds::physical(spec).satellite_rate())
        });
        let ratio = match s.and_then(|s| s.ratio.as_ref()) {
            None => Ok(RatioDeclaration::Irrational),
            Some(RatioSection::Named(name)) if name.eq_ignore_ascii_case("irrational") => {
                Ok(RatioDeclaration::Irrational)
            }
            Some(RatioSection::Named(name)) => Err(Violation::new(
                "speeds.ratio",
                format!(
                    "unknown ratio kind {name:?}; use \"irrational\" or {{ p = ..., q = ... }}"
                ),
            )),
            Some(RatioSection::Fraction { p, q }) => Ok(RatioDeclaration::Rational {
                numer: *p,
                denom: *q,
            }),
        };
        match (satellite_rate, ratio) {
            (_, Err(v)) => {
                violations.push(v);
                None
            }
            (Some(rate), Ok(ratio)) => match AngularSpeeds::new(earth_spin, rate, ratio) {
                Ok(s) => Some(s),
                Err(e) => {
                    violations.push(Violation::new("speeds", e));
                    None
                }
            },
            // no rate and no spec to derive it from: the constellation
            // violation is already on the list
            (None, Ok(_)) => None,
        }
    };

    let grid = match QuadratureGrid::new(raw.quadrature.n_theta, raw.quadrature.n_omega) {
        Ok(g) => Some(g),
        Err(e) => {
            violations.push(Violation::new("quadrature", e));
            None
        }
    };
    if raw.quadrature.tolerance.is_nan() || raw.quadrature.tolerance <= 0.0 {
        violations.push(Violation::new("quadrature.tolerance", "must be positive"));
    }

    let e = &raw.ensemble;
    let ensemble = match EnsembleConfig::new(e.n_samples, e.seed)
        .and_then(|c| c.with_confidence(e.confidence))
    {
        Ok(c) => Some(c),
        Err(err) => {
            violations.push(Violation::new("ensemble", err));
            None
        }
    };

    let coverage = raw.coverage.clone().unwrap_or_default();
    let tau_db = coverage.tau_db.clone();
    let tau_linear: Vec<f64> = tau_db.iter().map(|db| db_to_linear(*db)).collect();
    if tau_linear.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        violations.push(Violation::new(
            "coverage.tau_db",
            "thresholds must be finite",
        ));
    }
    if coverage.fading_draws == 0 {
        violations.push(Violation::new(
            "coverage.fading_draws",
            "must be at least 1",
        ));
    }

    let distance = raw.distance.clone().unwrap_or_default();
    if distance.count < 2 {
        violations.push(Violation::new(
            "distance.count",
            "need at least 2 grid points",
        ));
    }
    if distance.refine_tolerance_m.is_nan() || distance.refine_tolerance_m <= 0.0 {
        violations.push(Violation::new(
            "distance.refine_tolerance_m",
            "must be positive",
        ));
    }

    let ergodicity = raw.ergodicity.clone().unwrap_or_default();
    if ergodicity.horizon_s.is_nan() || ergodicity.horizon_s <= 0.0 {
        violations.push(Violation::new("ergodicity.horizon_s", "must be positive"));
    }
    if let Some(step) = ergodicity.step_s {
        if step < 0.0 {
            violations.push(Violation::new("ergodicity.step_s", "must be nonnegative"));
        }
    }
    if ergodicity.rel_tolerance.is_nan() || ergodicity.rel_tolerance <= 0.0 {
        violations.push(Violation::new(
            "ergodicity.rel_tolerance",
            "must be positive",
        ));
    }

    let laplace_s = raw
        .interference
        .as_ref()
        .map(|i| i.laplace_s_per_watt.clone())
        .unwrap_or_default();
    if laplace_s.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        violations.push(Violation::new(
            "interference.laplace_s_per_watt",
            "Laplace arguments must be nonnegative",
        ));
    }

    let offsets = match (&raw.offsets, &spec) {
        (Some(o), Some(spec)) => {
            if o.theta_bar_rad.is_finite() && o.omega_bar_rad.is_finite() {
                Some(OffsetPair::new(o.theta_bar_rad, o.omega_bar_rad, spec))
            } else {
                violations.push(Violation::new("offsets", "offsets must be finite angles"));
                None
            }
        }
        _ => None,
    };

    if !violations.is_empty() {
        return Err(violations);
    }

    Ok(Resolved {
        experiment: raw.experiment,
        spec: spec.expect("validated"),
        latitudes_deg: raw.user.latitudes_deg.clone(),
        users,
        budget,
        fading: raw.fading.unwrap_or(FadingKind::Rayleigh),
        speeds: speeds.expect("validated"),
        grid: grid.expect("validated"),
        converge: raw.quadrature.converge,
        tolerance: raw.quadrature.tolerance,
        max_doublings: raw.quadrature.max_doublings,
        ensemble: ensemble.expect("validated"),
        distance,
        tau_linear,
        tau_db,
        fading_draws: coverage.fading_draws,
        laplace_s,
        horizon_s: ergodicity.horizon_s,
        step_s: ergodicity.step_s.filter(|s| *s > 0.0),
        rel_tolerance: ergodicity.rel_tolerance,
        offsets,
        noise_power_w,
    })
}

/// Best-effort line lookup for a dotted config path: the line where the last
/// path segment is assigned or opened as a table.
pub fn line_of_path(source: &str, path: &str) -> Option<usize> {
    let key = path.rsplit('.').next()?;
    for (idx, line) in source.lines().enumerate() {
        let trimmed = line.trim_start();
        if trimmed.starts_with(&format!("{key} "))
            || trimmed.starts_with(&format!("{key}="))
            || trimmed.starts_with(&format!("[{key}]"))
            || trimmed.starts_with(&format!("[{path}]"))
        {
            return Some(idx + 1);
        }
    }
    // fall back to the first path segment (its table header)
    let head = path.split('.').next()?;
    source
        .lines()
        .position(|l| l.trim_start().starts_with(&format!("[{head}]")))
        .map(|idx| idx + 1)
}
