//! Deterministic evaluation over the offset torus.
//!
//! Every ensemble statistic of the constellation is an integral of a
//! function of the offset pair over `[0, 2pi/N_o) x [0, 2pi/N_s)`. The
//! integrands contain indicator discontinuities (visibility and gain
//! boundaries), so a tensor midpoint rule with grid refinement is used
//! throughout; high-order rules would gain nothing.
//!
//! Cell evaluations run in parallel and are reduced with a fixed pairwise
//! tree, so results are bit-stable across thread counts. The inner fading
//! expectation of the coverage integrand uses counter-based random streams
//! keyed by (cell index, draw index) for the same reason.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{ConstellationSpec, UserGeometry};
use crate::link::{FadingModel, LinkBudget};
use crate::numeric::{adaptive_simpson, pairwise_mean, powa};
use crate::stream::{domain, stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("distance must be a nonnegative finite length: got {0} m")]
    InvalidDistance(f64),
    #[error("quadrature grid needs at least 2 points per axis: got {n_theta} x {n_omega}")]
    GridTooCoarse { n_theta: usize, n_omega: usize },
    #[error("SINR threshold must be positive and finite: got {0}")]
    InvalidThreshold(f64),
    #[error("the inner fading expectation needs at least one draw")]
    NoFadingDraws,
}

/// Tensor midpoint grid over the offset torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureGrid {
    n_theta: usize,
    n_omega: usize,
}

impl QuadratureGrid {
    pub fn new(n_theta: usize, n_omega: usize) -> Result<Self, AnalysisError> {
        if n_theta < 2 || n_omega < 2 {
            return Err(AnalysisError::GridTooCoarse { n_theta, n_omega });
        }
        Ok(Self { n_theta, n_omega })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_omega(&self) -> usize {
        self.n_omega
    }

    pub fn cells(&self) -> usize {
        self.n_theta * self.n_omega
    }

    pub fn doubled(&self) -> Self {
        Self {
            n_theta: self.n_theta * 2,
            n_omega: self.n_omega * 2,
        }
    }
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self {
            n_theta: 256,
            n_omega: 256,
        }
    }
}

/// Default stopping tolerance for grid refinement.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-3;

/// Coverage request: linear SINR threshold plus the Monte Carlo size for the
/// inner fading expectation when no closed form applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageQuery {
    sinr_threshold: f64,
    fading_draws: usize,
}

impl CoverageQuery {
    pub fn new(sinr_threshold: f64, fading_draws: usize) -> Result<Self, AnalysisError> {
        if !(sinr_threshold.is_finite() && sinr_threshold > 0.0) {
            return Err(AnalysisError::InvalidThreshold(sinr_threshold));
        }
        if fading_draws == 0 {
            return Err(AnalysisError::NoFadingDraws);
        }
        Ok(Self {
            sinr_threshold,
            fading_draws,
        })
    }

    pub fn sinr_threshold(&self) -> f64 {
        self.sinr_threshold
    }

    pub fn fading_draws(&self) -> usize {
        self.fading_draws
    }
}

/// Doubles the grid until successive values differ by less than `tolerance`
/// (or `max_doublings` is exhausted). Returns the finest value and its grid.
pub fn refine<T>(
    base: QuadratureGrid,
    tolerance: f64,
    max_doublings: u32,
    mut eval: impl FnMut(&QuadratureGrid) -> T,
    distance: impl Fn(&T, &T) -> f64,
) -> (T, QuadratureGrid) {
    let mut grid = base;
    let mut value = eval(&grid);
    for _ in 0..max_doublings {
        let finer = grid.doubled();
        let next = eval(&finer);
        let delta = distance(&next, &value);
        value = next;
        grid = finer;
        if delta < tolerance {
            break;
        }
    }
    (value, grid)
}

// ============================================================================
// Cell machinery
// ============================================================================

/// Per-phase placement data for one row of cells (fixed phase offset).
///
/// A satellite at phase `w` on the orbit with longitude `theta` sits at
/// central-angle cosine `A * cos(theta_hat + theta - lambda) + B` from the
/// user, with `A = rho * cos(lat)` and `B = sin(w) * sin(incl) * sin(lat)`;
/// only the orbit longitude varies along a row.
struct PhaseRow {
    cos_th: Vec<f64>,
    sin_th: Vec<f64>,
    theta_hat: Vec<f64>,
    amp: Vec<f64>,
    base: Vec<f64>,
    /// phase indices sorted by the cosine upper bound `amp + base`, descending
    order: Vec<usize>,
}

impl PhaseRow {
    fn new(spec: &ConstellationSpec, user: &UserGeometry, omega_bar: f64) -> Self {
        let n_s = spec.sats_per_orbit() as usize;
        let (sin_phi, cos_phi) = spec.inclination().sin_cos();
        let (sin_lat, cos_lat) = (user.latitude().sin(), user.latitude().cos());
        let mut cos_th = Vec::with_capacity(n_s);
        let mut sin_th = Vec::with_capacity(n_s);
        let mut theta_hat = Vec::with_capacity(n_s);
        let mut amp = Vec::with_capacity(n_s);
        let mut base = Vec::with_capacity(n_s);
        for j in 1..=n_s {
            let w = std::f64::consts::TAU * j as f64 / n_s as f64 + omega_bar;
            let (sin_w, cos_w) = w.sin_cos();
            let rho = (cos_w * cos_w + sin_w * sin_w * cos_phi * cos_phi).sqrt();
            let (c, s) = if rho == 0.0 {
                (1.0, 0.0)
            } else {
                (cos_w / rho, sin_w * cos_phi / rho)
            };
            cos_th.push(c);
            sin_th.push(s);
            theta_hat.push(f64::atan2(sin_w * cos_phi, cos_w));
            amp.push(rho * cos_lat);
            base.push(sin_w * sin_phi * sin_lat);
        }
        let mut order: Vec<usize> = (0..n_s).collect();
        order.sort_by(|&a, &b| (amp[b] + base[b]).total_cmp(&(amp[a] + base[a])));
        Self {
            cos_th,
            sin_th,
            theta_hat,
            amp,
            base,
            order,
        }
    }

    /// Maximum central-angle cosine over all satellites of the pattern with
    /// longitude offset `theta_bar`. The per-orbit maximum of
    /// `cos(c + 2pi*i/N_o)` is taken in closed form (the lattice point nearest
    /// the user meridian), and phases are visited in upper-bound order so the
    /// scan can stop early.
    fn max_cos(&self, spec: &ConstellationSpec, lambda: f64, theta_bar: f64) -> f64 {
        let interval = spec.theta_interval();
        let mut best = f64::NEG_INFINITY;
        for &j in &self.order {
            if self.amp[j] + self.base[j] <= best {
                break;
            }
            let m = crate::numeric::floored_rem(self.theta_hat[j] + theta_bar - lambda, interval);
            let nearest = m.min(interval - m);
            let c = self.amp[j] * nearest.cos() + self.base[j];
            if c > best {
                best = c;
            }
        }
        best
    }
}

// ============================================================================
// Nearest-distance field
// ============================================================================

/// Midpoint coordinate of cell `a` along an axis of `n` cells spanning `[0, l)`.
fn midpoint(a: usize, n: usize, l: f64) -> f64 {
    (a as f64 + 0.5) * l / n as f64
}

/// Nearest-satellite distance (chord to the highest-cosine satellite) at each
/// grid-cell midpoint, row-major `[omega][theta]`. Cells where nothing is
/// visible hold the chord to the sub-horizon maximum, which exceeds the
/// visible-cap chord `sqrt(r^2 - e^2)`.
fn nearest_distance_field(
    spec: &ConstellationSpec,
    user: &UserGeometry,
    grid: &QuadratureGrid,
) -> Vec<f64> {
    let mut field = vec![0.0; grid.cells()];
    let lambda = user.longitude();
    field
        .par_chunks_mut(grid.n_theta)
        .enumerate()
        .for_each(|(b, row)| {
            let omega_bar = midpoint(b, grid.n_omega, spec.omega_interval());
            let phase_row = PhaseRow::new(spec, user, omega_bar);
            for (a, out) in row.iter_mut().enumerate() {
                let theta_bar = midpoint(a, grid.n_theta, spec.theta_interval());
                let c = phase_row.max_cos(spec, lambda, theta_bar);
                *out = crate::geometry::cos_kappa_to_distance(c, spec);
            }
        });
    field
}

/// Nearest-satellite distance at a single offset pair, by the same route as
/// the field (used for local refinement).
fn nearest_distance_at(
    spec: &ConstellationSpec,
    user: &UserGeometry,
    theta_bar: f64,
    omega_bar: f64,
) -> f64 {
    let phase_row = PhaseRow::new(spec, user, omega_bar);
    let c = phase_row.max_cos(spec, user.longitude(), theta_bar);
    crate::geometry::cos_kappa_to_distance(c, spec)
}

fn sorted(mut field: Vec<f64>) -> Vec<f64> {
    field.sort_by(f64::total_cmp);
    field
}

/// Fraction of a sorted field strictly above `d`.
fn fraction_above(sorted_field: &[f64], d: f64) -> f64 {
    let below_or_equal = sorted_field.partition_point(|&x| x <= d);
    (sorted_field.len() - below_or_equal) as f64 / sorted_field.len() as f64
}

fn ccdf_from_sorted(sorted_field: &[f64], d: f64, d_vis: f64) -> f64 {
    // beyond the visible cap the event "distance exceeds d" degenerates to
    // "nothing is visible", whose probability is the mass above d_vis
    fraction_above(sorted_field, d.min(d_vis))
}

/// CCDF of the nearest-satellite distance, `P(D > d)`.
///
/// `d` below `r - e` returns 1; `d` at or beyond the visible-cap chord
/// `sqrt(r^2 - e^2)` returns the no-visibility probability (distance is taken
/// as infinite when no satellite is visible). Only non-finite or negative `d`
/// is an error.
pub fn distance_ccdf(
    spec: &ConstellationSpec,
    user: &UserGeometry,
    d: f64,
    grid: &QuadratureGrid,
) -> Result<f64, AnalysisError> {
    Ok(distance_ccdf_curve(spec, user, &[d], grid)?[0])
}

/// CCDF evaluated at many distances over one shared field.
pub fn distance_ccdf_curve(
    spec: &ConstellationSpec,
    user: &UserGeometry,
    distances: &[f64],
    grid: &QuadratureGrid,
) -> Result<Vec<f64>, AnalysisError> {
    for &d in distances {
        if !(d.is_finite() && d >= 0.0) {
            return Err(AnalysisError::InvalidDistance(d));
        }
    }
    let field = sorted(nearest_distance_field(spec, user, grid));
    let d_vis = spec.max_visible_distance();
    Ok(distances
        .iter()
        .map(|&d| ccdf_from_sorted(&field, d, d_vis))
        .collect())
}

/// Probability that no satellite is visible from the user.
pub fn no_visibility_probability(
    spec: &ConstellationSpec,
    user: &UserGeometry,
    grid: &QuadratureGrid,
) -> f64 {
    let field = sorted(nearest_distance_field(spec, user, grid));
    fraction_above(&field, spec.max_visible_distance())
}

/// Ensemble mean of the nearest-satellite distance, computed as
/// `(r - e) + integral of the CCDF` over the visible chord range by adaptive
/// Simpson. Offsets with no visible satellite would make the raw mean
/// infinite; their mass is reported separately and the integral treats the
/// distance as truncated at the cap chord.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanNearestDistance {
    pub truncated_mean: f64,
    pub no_visibility_probability: f64,
}

pub fn mean_nearest_distance(
    spec: &ConstellationSpec,
    user: &UserGeometry,
    grid: &QuadratureGrid,
) -> MeanNearestDistance {
    let field = sorted(nearest_distance_field(spec, user, grid));
    let d_vis = spec.max_visible_distance();
    let no_vis = fraction_above(&field, d_vis);
    let lo = spec.min_distance();
    let integral = adaptive_simpson(
        |d| ccdf_from_sorted(&field, d, d_vis),
        lo,
        d_vis,
        0.5, // meters of mean-distance error
        24,
    );
    MeanNearestDistance {
        truncated_mean: lo + integral,
        no_visibility_probability: no_vis,
    }
}

/// Largest nearest-satellite distance over the offset torus, i.e. the distance
/// beyond which the CCDF vanishes.
///
/// A coarse field scan seeds local shrinking-window refinements around the
/// strongest local maxima; refinement stops once the located maximum moves by
/// less than `refine_tolerance` meters. If any offset leaves the user without
/// a visible satellite, the no-coverage sentinel `sqrt(r^2 - e^2)` is
/// returned.
pub fn critical_distance(
    spec: &ConstellationSpec,
    user: &UserGeometry,
    grid: &QuadratureGrid,
    refine_tolerance: f64,
) -> f64 {
    let field = nearest_distance_field(spec, user, grid);
    let d_vis = spec.max_visible_distance();
    let (nt, no) = (grid.n_theta, grid.n_omega);

    if field.iter().any(|&d| d > d_vis) {
        return d_vis;
    }

    // local maxima over the torus grid (>= all four neighbours)
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for b in 0..no {
        for a in 0..nt {
            let v = field[b * nt + a];
            let left = field[b * nt + (a + nt - 1) % nt];
            let right = field[b * nt + (a + 1) % nt];
            let down = field[(b + no - 1) % no * nt + a];
            let up = field[(b + 1) % no * nt + a];
            if v >= left && v >= right && v >= down && v >= up {
                candidates.push((v, a, b));
            }
        }
    }
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0));
    candidates.truncate(8);

    let cell_theta = spec.theta_interval() / nt as f64;
    let cell_omega = spec.omega_interval() / no as f64;
    let mut best = f64::NEG_INFINITY;
    for &(coarse, a, b) in &candidates {
        let mut center = (
            midpoint(a, nt, spec.theta_interval()),
            midpoint(b, no, spec.omega_interval()),
        );
        let mut half = (1.5 * cell_theta, 1.5 * cell_omega);
        let mut current = coarse;
        for _ in 0..64 {
            let mut local_best = (current, center);
            const N: i32 = 8;
            for db in -N..=N {
                for da in -N..=N {
                    let t = center.0 + half.0 * da as f64 / N as f64;
                    let w = center.1 + half.1 * db as f64 / N as f64;
                    let d = nearest_distance_at(spec, user, t, w);
                    if d > local_best.0 {
                        local_best = (d, (t, w));
                    }
                }
            }
            let moved = local_best.0 - current;
            center = local_best.1;
            current = local_best.0;
            // window shrinks to 1.5 probe spacings
            half = (half.0 * 1.5 / N as f64, half.1 * 1.5 / N as f64);
            if moved.abs() < 0.25 * refine_tolerance {
                break;
            }
        }
        best = best.max(current);
    }
    if best > d_vis {
        // refinement slipped past the horizon: a coverage hole after all
        return d_vis;
    }
    best
}

// ============================================================================
// Link-level integrands
// ============================================================================

/// Fixed link context for cell scans: thresholds in cosine space plus the
/// pieces of the mean-power formula.
struct LinkCtx {
    r2_plus_e2: f64,
    two_re: f64,
    vis_cos: f64,
    gain_cos: f64,
    gain_hi: f64,
    gain_lo: f64,
    ref_power: f64,
    alpha: f64,
}

impl LinkCtx {
    fn new(spec: &ConstellationSpec, budget: &LinkBudget) -> Self {
        let r = spec.orbit_radius();
        let e = spec.earth_radius();
        let d_g = budget.gain_cutoff();
        Self {
            r2_plus_e2: r * r + e * e,
            two_re: 2.0 * r * e,
            vis_cos: spec.visibility_cos_threshold(),
            // same boundary as distance <= gain_cutoff, expressed on cosines
            gain_cos: (r * r + e * e - d_g * d_g) / (2.0 * r * e),
            gain_hi: budget.tx_gain() * budget.rx_gain(),
            gain_lo: budget.rx_gain(),
            ref_power: budget.ref_power(),
            alpha: budget.pathloss_exponent(),
        }
    }

    #[inline]
    fn distance(&self, cos: f64) -> f64 {
        (self.r2_plus_e2 - self.two_re * cos).max(0.0).sqrt()
    }

    #[inline]
    fn mean_power(&self, cos: f64) -> f64 {
        let g = if cos >= self.gain_cos {
            self.gain_hi
        } else {
            self.gain_lo
        };
        self.ref_power * g / powa(self.distance(cos), self.alpha)
    }
}

/// Per-cell trig tables for the full satellite scan.
struct ScanTables {
    /// per theta-cell, per orbit: (sin, cos) of `theta_i - lambda`
    col: Vec<Vec<(f64, f64)>>,
    /// per omega-cell: phase row geometry
    row: Vec<PhaseRow>,
}

impl ScanTables {
    fn new(spec: &ConstellationSpec, user: &UserGeometry, grid: &QuadratureGrid) -> Self {
        let n_o = spec.n_orbits() as usize;
        let lambda = user.longitude();
        let col = (0..grid.n_theta)
            .map(|a| {
                let theta_bar = midpoint(a, grid.n_theta, spec.theta_interval());
                (1..=n_o)
                    .map(|i| {
                        (std::f64::consts::TAU * i as f64 / n_o as f64 + theta_bar - lambda)
                            .sin_cos()
                    })
                    .collect()
            })
            .collect();
        let row = (0..grid.n_omega)
            .map(|b| PhaseRow::new(spec, user, midpoint(b, grid.n_omega, spec.omega_interval())))
            .collect();
        Self { col, row }
    }

    /// Visits the central-angle cosine of every satellite of cell `(a, b)` in
    /// lexicographic (orbit, slot) order.
    #[inline]
    fn scan(&self, a: usize, b: usize, mut visit: impl FnMut(f64)) {
        let col = &self.col[a];
        let row = &self.row[b];
        for &(sin_t, cos_t) in col {
            for j in 0..row.amp.len() {
                let c = row.amp[j] * (row.cos_th[j] * cos_t - row.sin_th[j] * sin_t) + row.base[j];
                visit(c);
            }
        }
    }
}

/// Grid average of a per-cell evaluation; parallel over rows, pairwise-summed.
fn grid_average(grid: &QuadratureGrid, cell_value: impl Fn(usize, usize) -> f64 + Sync) -> f64 {
    let nt = grid.n_theta;
    let mut values = vec![0.0; grid.cells()];
    values.par_chunks_mut(nt).enumerate().for_each(|(b, row)| {
        for (a, out) in row.iter_mut().enumerate() {
            *out = cell_value(a, b);
        }
    });
    pairwise_mean(&values)
}

/// Laplace transform of the total interference power at argument `s`
/// (per watt, `s >= 0`): torus average of the product of per-satellite fading
/// Laplace transforms, evaluated as `exp(sum of logs)`.
pub fn interference_laplace<F: FadingModel>(
    spec: &ConstellationSpec,
    budget: &LinkBudget,
    fading: &F,
    user: &UserGeometry,
    s: f64,
    grid: &QuadratureGrid,
) -> f64 {
    assert!(
        s >= 0.0 && s.is_finite(),
        "Laplace argument must be nonnegative, got {s}"
    );
    let ctx = LinkCtx::new(spec, budget);
    let tables = ScanTables::new(spec, user, grid);
    grid_average(grid, |a, b| {
        let mut log_sum = 0.0;
        tables.scan(a, b, |c| {
            if c >= ctx.vis_cos {
                log_sum += fading.laplace(s * ctx.mean_power(c)).ln();
            }
        });
        log_sum.exp()
    })
}

/// Mean total interference power: torus average of the summed per-satellite
/// mean powers (linearity of expectation, unit-mean fading).
pub fn mean_interference(
    spec: &ConstellationSpec,
    budget: &LinkBudget,
    user: &UserGeometry,
    grid: &QuadratureGrid,
) -> f64 {
    let ctx = LinkCtx::new(spec, budget);
    let tables = ScanTables::new(spec, user, grid);
    grid_average(grid, |a, b| {
        let mut sum = 0.0;
        tables.scan(a, b, |c| {
            if c >= ctx.vis_cos {
                sum += ctx.mean_power(c);
            }
        });
        sum
    })
}

/// Alternative product-form reduction: torus average of
/// `exp(sum of log per-satellite mean powers)`, i.e. the average of the
/// *product* of the visible satellites' mean powers. A cell with no visible
/// satellite contributes `exp(0) = 1` watt. This is not a mean power — it is
/// provided for comparison against [`mean_interference`], which is the
/// quantity validated against sampling.
pub fn mean_interference_product_form(
    spec: &ConstellationSpec,
    budget: &LinkBudget,
    user: &UserGeometry,
    grid: &QuadratureGrid,
) -> f64 {
    let ctx = LinkCtx::new(spec, budget);
    let tables = ScanTables::new(spec, user, grid);
    grid_average(grid, |a, b| {
        let mut log_sum = 0.0;
        tables.scan(a, b, |c| {
            if c >= ctx.vis_cos {
                log_sum += ctx.mean_power(c).ln();
            }
        });
        log_sum.exp()
    })
}

/// Per-cell link state for the coverage integrand.
struct CellLinks {
    /// mean powers of all visible satellites, scan order
    powers: Vec<f64>,
    /// position of the serving satellite in `powers` (first maximum-cosine)
    serving: Option<usize>,
}

impl CellLinks {
    fn collect(tables: &ScanTables, ctx: &LinkCtx, a: usize, b: usize, buf: &mut Self) {
        buf.powers.clear();
        buf.serving = None;
        let mut best_cos = f64::NEG_INFINITY;
        tables.scan(a, b, |c| {
            if c >= ctx.vis_cos {
                buf.powers.push(ctx.mean_power(c));
                if c > best_cos {
                    best_cos = c;
                    buf.serving = Some(buf.powers.len() - 1);
                }
            }
        });
    }
}

/// Inner expectation over interferer fades, by closed form when the model
/// has one, else by `draws` counter-keyed Monte Carlo samples.
#[allow(clippy::too_many_arguments)]
fn inner_coverage<F: FadingModel>(
    fading: &F,
    a_factor: f64,
    noise: f64,
    interferers: &[f64],
    draws: usize,
    seed: u64,
    cell: u64,
    force_sampling: bool,
) -> f64 {
    if !force_sampling {
        if let Some(v) = fading.conditional_coverage_closed_form(a_factor, noise, interferers) {
            return v;
        }
    }
    let mut acc = 0.0;
    for draw in 0..draws {
        let mut rng = stream(seed, domain::COVERAGE_INNER, cell, draw as u64);
        let mut interference = 0.0;
        for &b in interferers {
            interference += b * fading.sample(&mut rng);
        }
        acc += fading.ccdf(a_factor * (noise + interference));
    }
    acc / draws as f64
}

#[allow(clippy::too_many_arguments)]
fn coverage_impl<F: FadingModel>(
    spec: &ConstellationSpec,
    budget: &LinkBudget,
    fading: &F,
    user: &UserGeometry,
    taus: &[f64],
    draws: usize,
    grid: &QuadratureGrid,
    seed: u64,
    force_sampling: bool,
) -> Vec<f64> {
    let ctx = LinkCtx::new(spec, budget);
    let tables = ScanTables::new(spec, user, grid);
    let noise = budget.noise_power();
    let nt = grid.n_theta;
    let n_taus = taus.len();

    // cell-major [cell][tau] layout so rows can be filled independently
    let mut values = vec![0.0; grid.cells() * n_taus];
    values
        .par_chunks_mut(nt * n_taus)
        .enumerate()
        .for_each(|(b, row)| {
            let mut links = CellLinks {
                powers: Vec::new(),
                serving: None,
            };
            let mut interferers: Vec<f64> = Vec::new();
            for a in 0..nt {
                CellLinks::collect(&tables, &ctx, a, b, &mut links);
                let out = &mut row[a * n_taus..(a + 1) * n_taus];
                match links.serving {
                    None => out.fill(0.0),
                    Some(si) => {
                        let serving_power = links.powers[si];
                        interferers.clear();
                        interferers.extend(
                            links
                                .powers
                                .iter()
                                .enumerate()
                                .filter(|&(k, _)| k != si)
                                .map(|(_, &p)| p),
                        );
                        let cell = (b * nt + a) as u64;
                        for (ti, &tau) in taus.iter().enumerate() {
                            let a_factor = tau / serving_power;
                            out[ti] = inner_coverage(
                                fading,
                                a_factor,
                                noise,
                                &interferers,
                                draws,
                                seed,
                                cell,
                                force_sampling,
                            );
                        }
                    }
                }
            }
        });

    // per-tau pairwise means over the cell axis
    let cells = grid.cells();
    let mut scratch = vec![0.0; cells];
    (0..n_taus)
        .map(|ti| {
            for cell in 0..cells {
                scratch[cell] = values[cell * n_taus + ti];
            }
            pairwise_mean(&scratch)
        })
        .collect()
}

/// Downlink coverage probability `P(SINR > tau)` for the nearest-satellite
/// association. Offsets with no visible satellite contribute zero. The inner
/// expectation over interferer fades uses the model's closed form when
/// available (Rayleigh, deterministic), else `fading_draws` Monte Carlo
/// samples keyed by (cell, draw).
pub fn coverage_probability<F: FadingModel>(
    spec: &ConstellationSpec,
    budget: &LinkBudget,
    fading: &F,
    user: &UserGeometry,
    query: &CoverageQuery,
    grid: &QuadratureGrid,
    seed: u64,
) -> f64 {
    coverage_impl(
        spec,
        budget,
        fading,
        user,
        &[query.sinr_threshold],
        query.fading_draws,
        grid,
        seed,
        false,
    )[0]
}

/// Same integrand as [`coverage_probability`] with the closed-form inner
/// expectation disabled, so the generic sampling path can be validated
/// against it.
pub fn coverage_probability_sampled<F: FadingModel>(
    spec: &ConstellationSpec,
    budget: &LinkBudget,
    fading: &F,
    user: &UserGeometry,
    query: &CoverageQuery,
    grid: &QuadratureGrid,
    seed: u64,
) -> f64 {
    coverage_impl(
        spec,
        budget,
        fading,
        user,
        &[query.sinr_threshold],
        query.fading_draws,
        grid,
        seed,
        true,
    )[0]
}

/// Coverage probability over a threshold sweep, sharing the per-cell
/// geometry across thresholds.
#[allow(clippy::too_many_arguments)]
pub fn coverage_curve<F: FadingModel>(
    spec: &ConstellationSpec,
    budget: &LinkBudget,
    fading: &F,
    user: &UserGeometry,
    taus: &[f64],
    fading_draws: usize,
    grid: &QuadratureGrid,
    seed: u64,
) -> Vec<f64> {
    assert!(
        taus.iter().all(|&t| t > 0.0 && t.is_finite()),
        "thresholds must be positive"
    );
    assert!(fading_draws > 0);
    coverage_impl(
        spec,
        budget,
        fading,
        user,
        taus,
        fading_draws,
        grid,
        seed,
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cos_central_angle, snapshot, OffsetPair};
    use crate::link::{deterministic_fading, rayleigh_fading};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn leo(n_o: u32, n_s: u32) -> ConstellationSpec {
        ConstellationSpec::new(n_o, n_s, 33f64.to_radians(), 6.921e6, 6.37e6).unwrap()
    }

    fn user(spec: &ConstellationSpec, lat_deg: f64) -> UserGeometry {
        UserGeometry::new(lat_deg.to_radians(), spec).unwrap()
    }

    /// Straightforward oracle: materialize the snapshot and take the max
    /// central-angle cosine satellite by satellite.
    fn max_cos_naive(spec: &ConstellationSpec, u: &UserGeometry, t: f64, w: f64) -> f64 {
        let sats = snapshot(spec, &OffsetPair::new(t, w, spec));
        sats.iter()
            .map(|(_, p)| cos_central_angle(p, u.position()).unwrap())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn fast_max_cos_matches_naive_scan() {
        let spec = leo(9, 11);
        let u = user(&spec, 23.0);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let t = rng.gen::<f64>() * spec.theta_interval();
            let w = rng.gen::<f64>() * spec.omega_interval();
            let fast = PhaseRow::new(&spec, &u, w).max_cos(&spec, u.longitude(), t);
            let naive = max_cos_naive(&spec, &u, t, w);
            assert_abs_diff_eq!(fast, naive, epsilon = 1e-12);
        }
    }

    #[test]
    fn fast_max_cos_matches_naive_scan_off_meridian() {
        let spec = leo(6, 7);
        let u = UserGeometry::at_longitude(0.31, 1.2, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..100 {
            let t = rng.gen::<f64>() * spec.theta_interval();
            let w = rng.gen::<f64>() * spec.omega_interval();
            let fast = PhaseRow::new(&spec, &u, w).max_cos(&spec, u.longitude(), t);
            let naive = max_cos_naive(&spec, &u, t, w);
            assert_abs_diff_eq!(fast, naive, epsilon = 1e-12);
        }
    }

    #[test]
    fn ccdf_is_one_near_the_zenith_distance() {
        let spec = leo(8, 10);
        let u = user(&spec, 15.0);
        let grid = QuadratureGrid::new(64, 64).unwrap();
        let d = spec.min_distance() + 1.0;
        assert_eq!(distance_ccdf(&spec, &u, d, &grid).unwrap(), 1.0);
        // and exactly 1 below the minimum chord
        assert_eq!(
            distance_ccdf(&spec, &u, spec.min_distance() / 2.0, &grid).unwrap(),
            1.0
        );
    }

    #[test]
    fn ccdf_rejects_silly_distances() {
        let spec = leo(4, 4);
        let u = user(&spec, 0.0);
        let grid = QuadratureGrid::default();
        assert!(matches!(
            distance_ccdf(&spec, &u, f64::NAN, &grid),
            Err(AnalysisError::InvalidDistance(_))
        ));
        assert!(matches!(
            distance_ccdf(&spec, &u, -1.0, &grid),
            Err(AnalysisError::InvalidDistance(_))
        ));
    }

    #[test]
    fn ccdf_is_monotone_and_bounded() {
        let spec = leo(8, 10);
        let u = user(&spec, 15.0);
        let grid = QuadratureGrid::new(128, 128).unwrap();
        let ds: Vec<f64> = (0..=60)
            .map(|k| {
                spec.min_distance()
                    + (spec.max_visible_distance() - spec.min_distance()) * k as f64 / 60.0
            })
            .collect();
        let curve = distance_ccdf_curve(&spec, &u, &ds, &grid).unwrap();
        let mut prev = 1.0 + 1e-15;
        for &v in &curve {
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn ccdf_beyond_the_cap_reports_no_visibility_mass() {
        // sparse constellation: visibility holes exist
        let spec = leo(3, 3);
        let u = user(&spec, 15.0);
        let grid = QuadratureGrid::new(256, 256).unwrap();
        let no_vis = no_visibility_probability(&spec, &u, &grid);
        assert!(
            no_vis > 0.0,
            "expected coverage holes in a 3x3 constellation"
        );
        let at_cap = distance_ccdf(&spec, &u, spec.max_visible_distance(), &grid).unwrap();
        assert_abs_diff_eq!(at_cap, no_vis, epsilon = 1e-12);
        let beyond = distance_ccdf(&spec, &u, spec.max_visible_distance() + 1e5, &grid).unwrap();
        assert_abs_diff_eq!(beyond, no_vis, epsilon = 1e-12);
    }

    #[test]
    fn critical_distance_single_orbit_ring_matches_half_gap_chord() {
        // near-equatorial ring, equatorial user: the worst case is a satellite
        // half a slot spacing away, so d_c is the chord of pi/N_s
        let spec = ConstellationSpec::new(1, 8, 1e-6, 6.921e6, 6.37e6).unwrap();
        let u = user(&spec, 0.0);
        let grid = QuadratureGrid::new(128, 128).unwrap();
        let got = critical_distance(&spec, &u, &grid, 1.0);
        let r = spec.orbit_radius();
        let e = spec.earth_radius();
        let half_gap = std::f64::consts::PI / 8.0;
        let want = (r * r + e * e - 2.0 * r * e * half_gap.cos()).sqrt();
        assert_abs_diff_eq!(got, want, epsilon = 50.0);

        // 1-D brute-force over the phase offset as an independent check
        let mut brute = f64::NEG_INFINITY;
        for k in 0..20_000 {
            let w = spec.omega_interval() * k as f64 / 20_000.0;
            brute = brute.max(nearest_distance_at(&spec, &u, 0.0, w));
        }
        assert_abs_diff_eq!(got, brute, epsilon = 50.0);
    }

    #[test]
    fn mean_nearest_distance_agrees_with_direct_field_average() {
        // two algebraic routes: (r - e) + integral of the CCDF versus the
        // plain average of the per-cell nearest distances
        let spec = ConstellationSpec::new(12, 16, 53f64.to_radians(), 6.921e6, 6.37e6).unwrap();
        let u = user(&spec, 15.0);
        let grid = QuadratureGrid::new(256, 256).unwrap();
        let via_ccdf = mean_nearest_distance(&spec, &u, &grid);
        assert_eq!(via_ccdf.no_visibility_probability, 0.0);
        let field = nearest_distance_field(&spec, &u, &grid);
        let direct = crate::numeric::pairwise_mean(&field);
        assert_abs_diff_eq!(via_ccdf.truncated_mean, direct, epsilon = 20.0);
    }

    #[test]
    fn critical_distance_reports_sentinel_on_coverage_holes() {
        let spec = leo(3, 3);
        let u = user(&spec, 15.0);
        let grid = QuadratureGrid::new(64, 64).unwrap();
        assert_eq!(
            critical_distance(&spec, &u, &grid, 10.0),
            spec.max_visible_distance()
        );
    }

    #[test]
    fn critical_distance_never_increases_with_denser_orbits() {
        let sparse = leo(10, 25);
        let dense = leo(10, 50);
        let grid = QuadratureGrid::new(128, 128).unwrap();
        let u_sparse = user(&sparse, 15.0);
        let u_dense = user(&dense, 15.0);
        let d_sparse = critical_distance(&sparse, &u_sparse, &grid, 10.0);
        let d_dense = critical_distance(&dense, &u_dense, &grid, 10.0);
        assert!(
            d_dense <= d_sparse + 1.0,
            "d_c grew from {d_sparse} to {d_dense} despite doubling satellites"
        );
    }

    #[test]
    fn ccdf_vanishes_beyond_critical_distance() {
        let spec = leo(30, 50);
        let u = user(&spec, 15.0);
        let grid = QuadratureGrid::new(1024, 1024).unwrap();
        let d_c = critical_distance(&spec, &u, &grid, 10.0);
        assert!(d_c < spec.max_visible_distance());
        let above = distance_ccdf(&spec, &u, d_c + 10e3, &grid).unwrap();
        let below = distance_ccdf(&spec, &u, d_c - 10e3, &grid).unwrap();
        assert_eq!(above, 0.0);
        assert!(below > 0.0);
        // well past the largest association distance of this shell
        assert_eq!(distance_ccdf(&spec, &u, 800e3, &grid).unwrap(), 0.0);
    }

    fn interference_budget() -> LinkBudget {
        LinkBudget::new(100.0, crate::link::db_to_linear(24.0), 1.0, 946e3, 2.0, 0.0).unwrap()
    }

    #[test]
    fn laplace_at_zero_is_exactly_one_and_monotone() {
        let spec = leo(8, 10);
        let u = user(&spec, 15.0);
        let grid = QuadratureGrid::new(64, 64).unwrap();
        let budget = interference_budget();
        let fading = rayleigh_fading();
        assert_eq!(
            interference_laplace(&spec, &budget, &fading, &u, 0.0, &grid),
            1.0
        );
        let mut prev = 1.0;
        for s in [1e5, 1e6, 1e7, 1e8] {
            let v = interference_laplace(&spec, &budget, &fading, &u, s, &grid);
            assert!(v <= prev && v > 0.0, "s = {s}, v = {v}");
            prev = v;
        }
    }

    #[test]
    fn polar_user_sees_nothing_from_a_low_inclination_shell() {
        let spec = leo(6, 8); // 33 degree inclination
        let u = user(&spec, 90.0);
        let grid = QuadratureGrid::new(64, 64).unwrap();
        // verify emptiness of the visible set across the torus grid
        assert_eq!(no_visibility_probability(&spec, &u, &grid), 1.0);
        let budget = interference_budget();
        for s in [0.0, 1e6, 1e9] {
            assert_eq!(
                interference_laplace(&spec, &budget, &rayleigh_fading(), &u, s, &grid),
                1.0
            );
        }
        assert_eq!(mean_interference(&spec, &budget, &u, &grid), 0.0);
    }

    #[test]
    fn single_visible_satellite_cell_contribution() {
        // satellite at the zenith: one-term sum p * gt * gr * (r - e)^-alpha
        let spec = ConstellationSpec::new(1, 1, 0.9, 6.921e6, 6.37e6).unwrap();
        let budget = interference_budget();
        let ctx = LinkCtx::new(&spec, &budget);
        let power = ctx.mean_power(1.0);
        let want =
            100.0 * crate::link::db_to_linear(24.0) / (spec.min_distance() * spec.min_distance());
        assert_relative_eq!(power, want, max_relative = 1e-12);
    }

    #[test]
    fn deterministic_fading_log_laplace_slope_is_mean_interference() {
        let spec = leo(6, 9);
        let u = user(&spec, 15.0);
        let grid = QuadratureGrid::new(96, 96).unwrap();
        let budget = interference_budget();
        let fading = deterministic_fading();
        let mean = mean_interference(&spec, &budget, &u, &grid);
        // Richardson-extrapolated forward difference of -ln L_T at 0
        let h = 0.02 / mean;
        let slope_h = -interference_laplace(&spec, &budget, &fading, &u, h, &grid).ln() / h;
        let slope_h2 =
            -interference_laplace(&spec, &budget, &fading, &u, h / 2.0, &grid).ln() / (h / 2.0);
        let slope = 2.0 * slope_h2 - slope_h;
        assert_relative_eq!(slope, mean, max_relative = 1e-3);
    }

    #[test]
    fn product_form_differs_from_sum_form() {
        let spec = leo(6, 9);
        let u = user(&spec, 15.0);
        let grid = QuadratureGrid::new(64, 64).unwrap();
        let budget = interference_budget();
        let sum = mean_interference(&spec, &budget, &u, &grid);
        let product = mean_interference_product_form(&spec, &budget, &u, &grid);
        assert!(sum > 0.0 && product > 0.0);
        assert!(
            (sum - product).abs() > 1e-3 * sum.abs(),
            "expected the two reductions to disagree: sum {sum}, product {product}"
        );
    }

    fn coverage_budget() -> LinkBudget {
        LinkBudget::new(
            100.0,
            crate::link::db_to_linear(30.0),
            1.0,
            946e3,
            2.0,
            crate::link::noise_from_temperature(300.0, 7.0, 10e6),
        )
        .unwrap()
    }

    #[test]
    fn coverage_at_vanishing_threshold_is_visibility_probability() {
        let spec = leo(5, 6);
        let u = user(&spec, 15.0);
        let grid = QuadratureGrid::new(128, 128).unwrap();
        let budget = coverage_budget();
        let query = CoverageQuery::new(1e-12, 4).unwrap();
        let covered =
            coverage_probability(&spec, &budget, &rayleigh_fading(), &u, &query, &grid, 1);
        let visible = 1.0 - no_visibility_probability(&spec, &u, &grid);
        assert_abs_diff_eq!(covered, visible, epsilon = 1e-4);
    }

    #[test]
    fn coverage_is_monotone_in_threshold() {
        let spec = leo(8, 10);
        let u = user(&spec, 15.0);
        let grid = QuadratureGrid::new(96, 96).unwrap();
        let budget = coverage_budget();
        let taus: Vec<f64> = [-10.0, -5.0, 0.0, 5.0, 10.0]
            .iter()
            .map(|db| crate::link::db_to_linear(*db))
            .collect();
        let curve = coverage_curve(&spec, &budget, &rayleigh_fading(), &u, &taus, 4, &grid, 1);
        let mut prev = 1.0 + 1e-12;
        for &v in &curve {
            assert!(v <= prev, "curve not monotone: {curve:?}");
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn rayleigh_closed_form_matches_sampled_inner_expectation() {
        let settings = [
            (5u32, 6u32, 10.0, 0.0),
            (7, 5, 25.0, -5.0),
            (4, 9, 40.0, 5.0),
        ];
        for (n_o, n_s, lat, tau_db) in settings {
            let spec = leo(n_o, n_s);
            let u = user(&spec, lat);
            let grid = QuadratureGrid::new(32, 32).unwrap();
            let budget = coverage_budget();
            let tau = crate::link::db_to_linear(tau_db);
            let fading = rayleigh_fading();
            let closed = coverage_probability(
                &spec,
                &budget,
                &fading,
                &u,
                &CoverageQuery::new(tau, 1).unwrap(),
                &grid,
                9,
            );
            let sampled = coverage_probability_sampled(
                &spec,
                &budget,
                &fading,
                &u,
                &CoverageQuery::new(tau, 100_000).unwrap(),
                &grid,
                9,
            );
            assert!(
                (closed - sampled).abs() <= 0.01,
                "closed {closed} vs sampled {sampled} at ({n_o},{n_s},{lat},{tau_db})"
            );
        }
    }

    #[test]
    fn refinement_converges_on_smooth_targets() {
        let spec = leo(6, 8);
        let u = user(&spec, 15.0);
        let budget = coverage_budget();
        let tau = 1.0;
        let (value, grid) = refine(
            QuadratureGrid::new(32, 32).unwrap(),
            CONVERGENCE_TOLERANCE,
            4,
            |g| {
                coverage_probability(
                    &spec,
                    &budget,
                    &rayleigh_fading(),
                    &u,
                    &CoverageQuery::new(tau, 1).unwrap(),
                    g,
                    3,
                )
            },
            |x, y| (x - y).abs(),
        );
        // one more doubling stays inside the declared tolerance
        let next = coverage_probability(
            &spec,
            &budget,
            &rayleigh_fading(),
            &u,
            &CoverageQuery::new(tau, 1).unwrap(),
            &grid.doubled(),
            3,
        );
        assert!(
            (next - value).abs() < CONVERGENCE_TOLERANCE,
            "grid {grid:?} value {value}"
        );
    }

    #[test]
    fn latitude_symmetry_of_the_ccdf() {
        let spec = leo(10, 12);
        let grid = QuadratureGrid::new(512, 512).unwrap();
        let ds: Vec<f64> = (1..=9)
            .map(|k| {
                spec.min_distance()
                    + (spec.max_visible_distance() - spec.min_distance()) * k as f64 / 10.0
            })
            .collect();
        let north = distance_ccdf_curve(&spec, &user(&spec, 27.0), &ds, &grid).unwrap();
        let south = distance_ccdf_curve(&spec, &user(&spec, -27.0), &ds, &grid).unwrap();
        for (n, s) in north.iter().zip(&south) {
            assert_abs_diff_eq!(n, s, epsilon = 5e-3);
        }
    }

    #[test]
    fn longitude_invariance_of_the_ccdf() {
        let spec = leo(10, 12);
        let grid = QuadratureGrid::new(512, 512).unwrap();
        let ds: Vec<f64> = (1..=9)
            .map(|k| {
                spec.min_distance()
                    + (spec.max_visible_distance() - spec.min_distance()) * k as f64 / 10.0
            })
            .collect();
        let on_meridian = distance_ccdf_curve(&spec, &user(&spec, 15.0), &ds, &grid).unwrap();
        let rotated_user = UserGeometry::at_longitude(15f64.to_radians(), 1.234, &spec).unwrap();
        let rotated = distance_ccdf_curve(&spec, &rotated_user, &ds, &grid).unwrap();
        for (a, b) in on_meridian.iter().zip(&rotated) {
            assert_abs_diff_eq!(a, b, epsilon = 5e-3);
        }
    }
}
