//! Walker constellation geometry: shifted-periodic orbit longitudes and
//! satellite phases, Cartesian placement on the orbit sphere, and the purely
//! geometric predicates (visibility, cap membership, nearest satellite).
//!
//! All lengths are meters and all angles radians. Unit conversions belong at
//! configuration boundaries, not here.

use std::f64::consts::TAU;

use thiserror::Error;

use crate::numeric::floored_rem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("orbit radius must exceed earth radius: r = {orbit_radius} m, e = {earth_radius} m")]
    OrbitBelowSurface {
        orbit_radius: f64,
        earth_radius: f64,
    },
    #[error("radii must be positive and finite: r = {orbit_radius} m, e = {earth_radius} m")]
    InvalidRadius {
        orbit_radius: f64,
        earth_radius: f64,
    },
    #[error("inclination must lie strictly inside (0, pi): got {0} rad")]
    InvalidInclination(f64),
    #[error("a constellation needs at least one orbit and one satellite per orbit")]
    EmptyConstellation,
    #[error("latitude must lie in [-pi/2, pi/2]: got {0} rad")]
    InvalidLatitude(f64),
    #[error("central angle of a zero-norm vector is undefined")]
    ZeroNormVector,
    #[error("distance {distance} m outside the chord range [{min} m, {max} m]")]
    DistanceOutOfRange { distance: f64, min: f64, max: f64 },
}

// ============================================================================
// Vectors
// ============================================================================

/// Cartesian 3-vector in the Earth-fixed frame (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;

    fn sub(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }
}

// ============================================================================
// Domain types
// ============================================================================

/// Static Walker parameters: the family of point patterns.
///
/// `n_orbits` orbital planes share one inclination; each carries
/// `sats_per_orbit` evenly spaced satellites on a circular orbit of radius
/// `orbit_radius` around an Earth of radius `earth_radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstellationSpec {
    n_orbits: u32,
    sats_per_orbit: u32,
    inclination: f64,
    orbit_radius: f64,
    earth_radius: f64,
}

impl ConstellationSpec {
    pub fn new(
        n_orbits: u32,
        sats_per_orbit: u32,
        inclination: f64,
        orbit_radius: f64,
        earth_radius: f64,
    ) -> Result<Self, GeometryError> {
        if n_orbits == 0 || sats_per_orbit == 0 {
            return Err(GeometryError::EmptyConstellation);
        }
        if !(orbit_radius.is_finite() && earth_radius.is_finite() && earth_radius > 0.0) {
            return Err(GeometryError::InvalidRadius {
                orbit_radius,
                earth_radius,
            });
        }
        if orbit_radius <= earth_radius {
            return Err(GeometryError::OrbitBelowSurface {
                orbit_radius,
                earth_radius,
            });
        }
        if !(inclination > 0.0 && inclination < std::f64::consts::PI) {
            return Err(GeometryError::InvalidInclination(inclination));
        }
        Ok(Self {
            n_orbits,
            sats_per_orbit,
            inclination,
            orbit_radius,
            earth_radius,
        })
    }

    pub fn n_orbits(&self) -> u32 {
        self.n_orbits
    }

    pub fn sats_per_orbit(&self) -> u32 {
        self.sats_per_orbit
    }

    pub fn inclination(&self) -> f64 {
        self.inclination
    }

    pub fn orbit_radius(&self) -> f64 {
        self.orbit_radius
    }

    pub fn earth_radius(&self) -> f64 {
        self.earth_radius
    }

    pub fn num_satellites(&self) -> usize {
        self.n_orbits as usize * self.sats_per_orbit as usize
    }

    /// Width of the longitude-offset interval, `2*pi / n_orbits`.
    pub fn theta_interval(&self) -> f64 {
        TAU / self.n_orbits as f64
    }

    /// Width of the phase-offset interval, `2*pi / sats_per_orbit`.
    pub fn omega_interval(&self) -> f64 {
        TAU / self.sats_per_orbit as f64
    }

    /// Smallest possible user-satellite distance, `r - e` (satellite at zenith).
    pub fn min_distance(&self) -> f64 {
        self.orbit_radius - self.earth_radius
    }

    /// Chord length to the rim of the visible cap, `sqrt(r^2 - e^2)`.
    pub fn max_visible_distance(&self) -> f64 {
        (self.orbit_radius * self.orbit_radius - self.earth_radius * self.earth_radius).sqrt()
    }

    /// Cosine of the central angle at the visibility rim, `e / r`.
    pub fn visibility_cos_threshold(&self) -> f64 {
        self.earth_radius / self.orbit_radius
    }
}

/// The two uniform random offsets selecting one pattern from the family;
/// also the state of the torus dynamical system.
///
/// `theta_bar` lives in `[0, 2*pi/n_orbits)` and `omega_bar` in
/// `[0, 2*pi/sats_per_orbit)`; the constructor reduces arbitrary angles into
/// those intervals with a floored modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetPair {
    theta_bar: f64,
    omega_bar: f64,
}

impl OffsetPair {
    pub fn new(theta_bar: f64, omega_bar: f64, spec: &ConstellationSpec) -> Self {
        assert!(
            theta_bar.is_finite() && omega_bar.is_finite(),
            "offsets must be finite angles"
        );
        Self {
            theta_bar: floored_rem(theta_bar, spec.theta_interval()),
            omega_bar: floored_rem(omega_bar, spec.omega_interval()),
        }
    }

    pub fn theta_bar(&self) -> f64 {
        self.theta_bar
    }

    pub fn omega_bar(&self) -> f64 {
        self.omega_bar
    }
}

/// 1-based orbit/slot label of a satellite, ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SatIndex {
    pub orbit: u32,
    pub slot: u32,
}

/// One materialized point pattern: `n_orbits * sats_per_orbit` Cartesian
/// positions keyed by (orbit, slot). Immutable after construction.
#[derive(Debug, Clone)]
pub struct SatelliteSet {
    spec: ConstellationSpec,
    positions: Vec<Vec3>,
}

impl SatelliteSet {
    pub(crate) fn from_positions(spec: ConstellationSpec, positions: Vec<Vec3>) -> Self {
        debug_assert_eq!(positions.len(), spec.num_satellites());
        Self { spec, positions }
    }

    pub fn spec(&self) -> &ConstellationSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Position of the satellite with 1-based labels `(orbit, slot)`.
    pub fn position(&self, orbit: u32, slot: u32) -> Option<Vec3> {
        if orbit == 0 || slot == 0 || orbit > self.spec.n_orbits || slot > self.spec.sats_per_orbit
        {
            return None;
        }
        let idx = (orbit - 1) as usize * self.spec.sats_per_orbit as usize + (slot - 1) as usize;
        Some(self.positions[idx])
    }

    /// Iterates in lexicographic (orbit, slot) order.
    pub fn iter(&self) -> impl Iterator<Item = (SatIndex, Vec3)> + '_ {
        let n_s = self.spec.sats_per_orbit;
        self.positions.iter().enumerate().map(move |(k, &p)| {
            let orbit = (k as u32) / n_s + 1;
            let slot = (k as u32) % n_s + 1;
            (SatIndex { orbit, slot }, p)
        })
    }
}

/// A fixed receiver on the Earth sphere.
///
/// The canonical typical user sits at longitude 0; [`UserGeometry::at_longitude`]
/// exists so rotation-invariance can be exercised directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserGeometry {
    latitude: f64,
    longitude: f64,
    position: Vec3,
}

impl UserGeometry {
    pub fn new(latitude: f64, spec: &ConstellationSpec) -> Result<Self, GeometryError> {
        Self::at_longitude(latitude, 0.0, spec)
    }

    pub fn at_longitude(
        latitude: f64,
        longitude: f64,
        spec: &ConstellationSpec,
    ) -> Result<Self, GeometryError> {
        if !(latitude.is_finite() && latitude.abs() <= std::f64::consts::FRAC_PI_2) {
            return Err(GeometryError::InvalidLatitude(latitude));
        }
        let e = spec.earth_radius();
        let (sin_lat, cos_lat) = latitude.sin_cos();
        let (sin_lon, cos_lon) = longitude.sin_cos();
        Ok(Self {
            latitude,
            longitude,
            position: Vec3::new(e * cos_lat * cos_lon, e * cos_lat * sin_lon, e * sin_lat),
        })
    }

    pub fn latitude(&self) -> f64 {
        self.latitude
    }

    pub fn longitude(&self) -> f64 {
        self.longitude
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }
}

// ============================================================================
// Placement
// ============================================================================

/// Longitudes of the ascending points: `2*pi*i/n_orbits + theta_bar mod 2*pi`
/// for `i = 1..=n_orbits`.
pub fn orbit_longitudes(spec: &ConstellationSpec, theta_bar: f64) -> Vec<f64> {
    let n = spec.n_orbits() as f64;
    (1..=spec.n_orbits())
        .map(|i| floored_rem(TAU * i as f64 / n + theta_bar, TAU))
        .collect()
}

/// In-plane phases: `2*pi*j/sats_per_orbit + omega_bar mod 2*pi` for
/// `j = 1..=sats_per_orbit`. The same list applies to every orbit.
pub fn satellite_phases(spec: &ConstellationSpec, omega_bar: f64) -> Vec<f64> {
    let n = spec.sats_per_orbit() as f64;
    (1..=spec.sats_per_orbit())
        .map(|j| floored_rem(TAU * j as f64 / n + omega_bar, TAU))
        .collect()
}

/// Cartesian position of a satellite at in-plane phase `phase` on the orbit
/// with ascending-point longitude `longitude` and inclination `inclination`.
///
/// The in-plane angle is projected onto the equatorial plane through the
/// two-argument arctangent of `(sin(phase) * cos(inclination), cos(phase))`,
/// which keeps the quadrant and stays defined at `phase = pi/2`, so the point
/// traces the full orbit circle.
pub fn satellite_position(orbit_radius: f64, inclination: f64, longitude: f64, phase: f64) -> Vec3 {
    debug_assert!(orbit_radius > 0.0);
    let (sin_w, cos_w) = phase.sin_cos();
    let (sin_phi, cos_phi) = inclination.sin_cos();
    let rho = (cos_w * cos_w + sin_w * sin_w * cos_phi * cos_phi).sqrt();
    let theta_hat = f64::atan2(sin_w * cos_phi, cos_w);
    let (s, c) = (theta_hat + longitude).sin_cos();
    Vec3::new(
        orbit_radius * rho * c,
        orbit_radius * rho * s,
        orbit_radius * sin_w * sin_phi,
    )
}

/// Materializes the full pattern for one offset pair.
///
/// Positions equal `satellite_position(r, phi, theta_i, omega_j)` pointwise;
/// the per-orbit/per-phase trigonometry is hoisted and combined with angle
/// addition, which is what makes dense time averaging affordable.
pub fn snapshot(spec: &ConstellationSpec, offsets: &OffsetPair) -> SatelliteSet {
    let r = spec.orbit_radius();
    let (sin_phi, cos_phi) = spec.inclination().sin_cos();
    let longitudes = orbit_longitudes(spec, offsets.theta_bar());
    let phases = satellite_phases(spec, offsets.omega_bar());

    let orbit_trig: Vec<(f64, f64)> = longitudes.iter().map(|&t| t.sin_cos()).collect();
    // per-phase data: (r*rho, cos(theta_hat), sin(theta_hat), z)
    let phase_geom: Vec<(f64, f64, f64, f64)> = phases
        .iter()
        .map(|&w| {
            let (sin_w, cos_w) = w.sin_cos();
            let rho = (cos_w * cos_w + sin_w * sin_w * cos_phi * cos_phi).sqrt();
            let (cos_th, sin_th) = if rho == 0.0 {
                (1.0, 0.0)
            } else {
                (cos_w / rho, sin_w * cos_phi / rho)
            };
            (r * rho, cos_th, sin_th, r * sin_w * sin_phi)
        })
        .collect();

    let mut positions = Vec::with_capacity(spec.num_satellites());
    for &(sin_t, cos_t) in &orbit_trig {
        for &(r_rho, cos_th, sin_th, z) in &phase_geom {
            let c = cos_th * cos_t - sin_th * sin_t;
            let s = sin_th * cos_t + cos_th * sin_t;
            positions.push(Vec3::new(r_rho * c, r_rho * s, z));
        }
    }
    SatelliteSet::from_positions(*spec, positions)
}

// ============================================================================
// Predicates
// ============================================================================

/// Cosine of the central angle between two nonzero vectors, clamped to
/// `[-1, 1]` against rounding.
pub fn cos_central_angle(x: Vec3, u: Vec3) -> Result<f64, GeometryError> {
    let nx = x.norm();
    let nu = u.norm();
    if nx == 0.0 || nu == 0.0 {
        return Err(GeometryError::ZeroNormVector);
    }
    Ok((x.dot(u) / (nx * nu)).clamp(-1.0, 1.0))
}

/// Cosine of the cap angle subtended at the Earth center by the chord `d`:
/// `(r^2 + e^2 - d^2) / (2*r*e)`, strictly decreasing in `d` on
/// `[r - e, r + e]`.
pub fn distance_to_cos_kappa(d: f64, spec: &ConstellationSpec) -> Result<f64, GeometryError> {
    let r = spec.orbit_radius();
    let e = spec.earth_radius();
    if !(d >= r - e && d <= r + e) {
        return Err(GeometryError::DistanceOutOfRange {
            distance: d,
            min: r - e,
            max: r + e,
        });
    }
    Ok((r * r + e * e - d * d) / (2.0 * r * e))
}

/// Inverse of [`distance_to_cos_kappa`]: chord length for a given central-angle
/// cosine, `sqrt(r^2 + e^2 - 2*r*e*cos_kappa)`.
pub fn cos_kappa_to_distance(cos_kappa: f64, spec: &ConstellationSpec) -> f64 {
    let r = spec.orbit_radius();
    let e = spec.earth_radius();
    (r * r + e * e - 2.0 * r * e * cos_kappa).max(0.0).sqrt()
}

/// True when the satellite at `x` is above the user's horizon. The boundary
/// is inclusive: `cos(central angle) >= e / r`.
pub fn is_visible(x: Vec3, user: &UserGeometry, spec: &ConstellationSpec) -> bool {
    match cos_central_angle(x, user.position()) {
        Ok(c) => c >= spec.visibility_cos_threshold(),
        Err(_) => false,
    }
}

/// Nearest visible satellite: the visible satellite maximizing the central-angle
/// cosine (equivalently minimizing Euclidean distance), with ties broken by the
/// lowest (orbit, slot) label. `None` when no satellite is visible.
pub fn nearest_satellite(sats: &SatelliteSet, user: &UserGeometry) -> Option<(SatIndex, f64)> {
    let spec = sats.spec();
    let threshold = spec.visibility_cos_threshold();
    let mut best: Option<(SatIndex, f64)> = None;
    for (idx, pos) in sats.iter() {
        let c = match cos_central_angle(pos, user.position()) {
            Ok(c) => c,
            Err(_) => continue,
        };
        if c < threshold {
            continue;
        }
        // strict improvement keeps the lexicographically first label on ties
        match best {
            Some((_, best_cos)) if c <= best_cos => {}
            _ => best = Some((idx, c)),
        }
    }
    best.map(|(idx, _)| {
        let pos = sats
            .position(idx.orbit, idx.slot)
            .expect("index from iterator");
        (idx, pos.distance(user.position()))
    })
}
