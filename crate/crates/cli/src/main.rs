//! Batch front end: experiment configs in, CSV curves and a run manifest out.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{ExperimentKind, FadingKind, RawConfig, Resolved};
use output::{field, CsvWriter};
use walker_sg_core::analysis::{self, QuadratureGrid};
use walker_sg_core::dynamics;
use walker_sg_core::geometry::snapshot;
use walker_sg_core::link::{deterministic_fading, rayleigh_fading, FadingModel};
use walker_sg_core::montecarlo::{self, EnsembleConfig};
use walker_sg_core::suite;

#[derive(Parser)]
#[command(
    name = "walker-sg",
    version,
    about = "Walker constellation statistics: quadrature evaluators cross-checked by sampling",
    arg_required_else_help = true
)]
struct Cli {
    /// Run the built-in verification suite and print a pass/fail table.
    #[arg(long)]
    self_test: bool,

    /// Worker threads (default: WALKER_SG_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config; write CSV curves and a run manifest.
    Run {
        /// TOML experiment configuration.
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, short)]
        out: PathBuf,
        /// Override the ensemble seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List every constraint violation in a config without running it.
    Validate {
        /// TOML experiment configuration.
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let threads = cli.threads.or_else(|| {
        std::env::var("WALKER_SG_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = threads {
        // a failure here means a pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }

    if cli.self_test {
        return self_test();
    }

    match cli.command {
        Some(Command::Run { config, out, seed }) => match run(&config, &out, seed) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
        Some(Command::Validate { config }) => validate_command(&config),
        None => {
            eprintln!("nothing to do: pass a subcommand or --self-test (see --help)");
            ExitCode::from(2)
        }
    }
}

fn self_test() -> ExitCode {
    println!("running the verification suite (several minutes)...");
    let results = suite::run_all();
    println!();
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!();
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn load(path: &Path) -> Result<(RawConfig, String)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let raw: RawConfig = toml::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok((raw, text))
}

fn print_violations(path: &Path, source: &str, violations: &[config::Violation]) {
    for v in violations {
        match config::line_of_path(source, &v.path) {
            Some(line) => eprintln!("{}:{line}: {}: {}", path.display(), v.path, v.message),
            None => eprintln!("{}: {}: {}", path.display(), v.path, v.message),
        }
    }
}

fn validate_command(path: &Path) -> ExitCode {
    let (raw, source) = match load(path) {
        Ok(ok) => ok,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let violations = config::validate(&raw);
    if violations.is_empty() {
        println!("{}: configuration is runnable", path.display());
        ExitCode::SUCCESS
    } else {
        print_violations(path, &source, &violations);
        eprintln!("{} violation(s)", violations.len());
        ExitCode::FAILURE
    }
}

fn run(path: &Path, out_dir: &Path, seed_override: Option<u64>) -> Result<()> {
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);

    let (raw, source) = load(path)?;
    let mut resolved = match config::resolve(&raw) {
        Ok(r) => r,
        Err(violations) => {
            print_violations(path, &source, &violations);
            bail!("{} configuration violation(s)", violations.len());
        }
    };
    if let Some(seed) = seed_override {
        resolved.ensemble = EnsembleConfig::new(resolved.ensemble.n_samples(), seed)
            .and_then(|c| c.with_confidence(resolved.ensemble.confidence()))
            .map_err(|e| anyhow!("--seed override: {e}"))?;
    }

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let outputs = match resolved.fading {
        FadingKind::Rayleigh => run_experiment(&resolved, out_dir, &rayleigh_fading())?,
        FadingKind::Deterministic => run_experiment(&resolved, out_dir, &deterministic_fading())?,
    };

    write_manifest(
        &raw,
        &resolved,
        out_dir,
        &outputs,
        started_unix,
        started.elapsed().as_secs_f64(),
    )?;
    for name in &outputs {
        println!("wrote {}", out_dir.join(name).display());
    }
    println!("wrote {}", out_dir.join("manifest.toml").display());
    Ok(())
}

// ============================================================================
// Experiments
// ============================================================================

fn run_experiment<F: FadingModel>(
    resolved: &Resolved,
    out: &Path,
    fading: &F,
) -> Result<Vec<String>> {
    match resolved.experiment {
        ExperimentKind::Snapshot => snapshot_experiment(resolved, out),
        ExperimentKind::DistanceCcdf => distance_ccdf_experiment(resolved, out),
        ExperimentKind::CriticalDistance => critical_distance_experiment(resolved, out),
        ExperimentKind::Interference => interference_experiment(resolved, out, fading),
        ExperimentKind::Coverage => coverage_experiment(resolved, out, fading),
        ExperimentKind::Ergodicity => ergodicity_experiment(resolved, out),
    }
}

fn lat_tag(lat_deg: f64) -> String {
    format!("{lat_deg}").replace('-', "m").replace('.', "p")
}

/// Distance grid in meters: configured bounds or the full chord range.
fn distance_grid(resolved: &Resolved) -> Vec<f64> {
    let spec = &resolved.spec;
    let lo = resolved
        .distance
        .d_min_km
        .map_or(spec.min_distance(), |km| km * 1e3);
    let hi = resolved
        .distance
        .d_max_km
        .map_or(spec.max_visible_distance(), |km| km * 1e3);
    let n = resolved.distance.count;
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

fn converged_curve(resolved: &Resolved, eval: impl FnMut(&QuadratureGrid) -> Vec<f64>) -> Vec<f64> {
    if resolved.converge {
        analysis::refine(
            resolved.grid,
            resolved.tolerance,
            resolved.max_doublings,
            eval,
            |a, b| sup_gap(a, b),
        )
        .0
    } else {
        let mut eval = eval;
        eval(&resolved.grid)
    }
}

fn converged_scalar(resolved: &Resolved, eval: impl FnMut(&QuadratureGrid) -> f64) -> f64 {
    if resolved.converge {
        analysis::refine(
            resolved.grid,
            resolved.tolerance,
            resolved.max_doublings,
            eval,
            |a, b| (a - b).abs(),
        )
        .0
    } else {
        let mut eval = eval;
        eval(&resolved.grid)
    }
}

fn snapshot_experiment(resolved: &Resolved, out: &Path) -> Result<Vec<String>> {
    let offsets = resolved
        .offsets
        .unwrap_or_else(|| montecarlo::sample_offsets(&resolved.ensemble, 0, &resolved.spec));
    let sats = snapshot(&resolved.spec, &offsets);
    let mut csv = CsvWriter::new("snapshot.csv", "i,j,x_km,y_km,z_km");
    for (idx, p) in sats.iter() {
        csv.row(&[
            idx.orbit.to_string(),
            idx.slot.to_string(),
            field(p.x / 1e3)?,
            field(p.y / 1e3)?,
            field(p.z / 1e3)?,
        ]);
    }
    csv.write(out)?;
    Ok(vec!["snapshot.csv".into()])
}

fn distance_ccdf_experiment(resolved: &Resolved, out: &Path) -> Result<Vec<String>> {
    let ds = distance_grid(resolved);
    let mut outputs = Vec::new();
    for (user, &lat) in resolved.users.iter().zip(&resolved.latitudes_deg) {
        let analytic = converged_curve(resolved, |g| {
            analysis::distance_ccdf_curve(&resolved.spec, user, &ds, g).expect("validated grid")
        });
        let empirical =
            montecarlo::empirical_distance_ccdf(&resolved.spec, user, &ds, &resolved.ensemble);
        let name = format!("distance_ccdf_lat{}.csv", lat_tag(lat));
        let mut csv = CsvWriter::new(&name, "d_km,analytic,empirical,half_width");
        for (k, &d) in ds.iter().enumerate() {
            csv.row(&[
                field(d / 1e3)?,
                field(analytic[k])?,
                field(empirical[k].value)?,
                field(empirical[k].half_width())?,
            ]);
        }
        csv.write(out)?;
        outputs.push(name);
    }
    Ok(outputs)
}

fn critical_distance_experiment(resolved: &Resolved, out: &Path) -> Result<Vec<String>> {
    let refine_tol = resolved.distance.refine_tolerance_m;
    let mut csv = CsvWriter::new(
        "critical_distance.csv",
        "latitude_deg,critical_distance_km,ccdf_10km_below,ccdf_10km_above",
    );
    for (user, &lat) in resolved.users.iter().zip(&resolved.latitudes_deg) {
        // lengths converge relative to their own scale, not the 1e-3 absolute
        // tolerance used for probabilities
        let d_c = if resolved.converge {
            analysis::refine(
                resolved.grid,
                resolved.tolerance,
                resolved.max_doublings,
                |g| analysis::critical_distance(&resolved.spec, user, g, refine_tol),
                |a, b| (a - b).abs() / b.abs().max(1.0),
            )
            .0
        } else {
            analysis::critical_distance(&resolved.spec, user, &resolved.grid, refine_tol)
        };
        // the CCDF straddle needs a fine grid, and an unequal one: with equal
        // axis counts the two offset lattices alias whenever the interval
        // ratio is a small integer (e.g. a single-orbit ring), hiding the
        // thin ridge around the maximum
        let fine = QuadratureGrid::new(
            resolved.grid.n_theta().max(1024) * 3 / 2,
            resolved.grid.n_omega().max(1024),
        )
        .expect("straddle grid");
        let below = analysis::distance_ccdf(&resolved.spec, user, d_c - 10e3, &fine)?;
        let above = analysis::distance_ccdf(&resolved.spec, user, d_c + 10e3, &fine)?;
        csv.row(&[field(lat)?, field(d_c / 1e3)?, field(below)?, field(above)?]);
    }
    csv.write(out)?;
    Ok(vec!["critical_distance.csv".into()])
}

fn interference_experiment<F: FadingModel>(
    resolved: &Resolved,
    out: &Path,
    fading: &F,
) -> Result<Vec<String>> {
    let budget = resolved
        .budget
        .as_ref()
        .expect("validated for this experiment");
    let mut outputs = Vec::new();

    let mut mean_csv = CsvWriter::new(
        "interference_mean.csv",
        "latitude_deg,analytic_w,empirical_w,half_width_w",
    );
    for (user, &lat) in resolved.users.iter().zip(&resolved.latitudes_deg) {
        let analytic = converged_scalar(resolved, |g| {
            analysis::mean_interference(&resolved.spec, budget, user, g)
        });
        let empirical = montecarlo::empirical_mean_interference(
            &resolved.spec,
            budget,
            fading,
            user,
            &resolved.ensemble,
        );
        mean_csv.row(&[
            field(lat)?,
            field(analytic)?,
            field(empirical.value)?,
            field(empirical.half_width())?,
        ]);
    }
    mean_csv.write(out)?;
    outputs.push("interference_mean.csv".into());

    if !resolved.laplace_s.is_empty() {
        let mut csv = CsvWriter::new(
            "interference_laplace.csv",
            "latitude_deg,s_per_watt,analytic,empirical,half_width",
        );
        for (user, &lat) in resolved.users.iter().zip(&resolved.latitudes_deg) {
            for &s in &resolved.laplace_s {
                let analytic = converged_scalar(resolved, |g| {
                    analysis::interference_laplace(&resolved.spec, budget, fading, user, s, g)
                });
                let empirical = montecarlo::empirical_interference_laplace(
                    &resolved.spec,
                    budget,
                    fading,
                    user,
                    s,
                    &resolved.ensemble,
                );
                csv.row(&[
                    field(lat)?,
                    field(s)?,
                    field(analytic)?,
                    field(empirical.value)?,
                    field(empirical.half_width())?,
                ]);
            }
        }
        csv.write(out)?;
        outputs.push("interference_laplace.csv".into());
    }
    Ok(outputs)
}

fn coverage_experiment<F: FadingModel>(
    resolved: &Resolved,
    out: &Path,
    fading: &F,
) -> Result<Vec<String>> {
    let budget = resolved
        .budget
        .as_ref()
        .expect("validated for this experiment");
    let mut outputs = Vec::new();
    for (user, &lat) in resolved.users.iter().zip(&resolved.latitudes_deg) {
        let analytic = converged_curve(resolved, |g| {
            analysis::coverage_curve(
                &resolved.spec,
                budget,
                fading,
                user,
                &resolved.tau_linear,
                resolved.fading_draws,
                g,
                resolved.ensemble.seed(),
            )
        });
        let name = format!("coverage_lat{}.csv", lat_tag(lat));
        let mut csv = CsvWriter::new(&name, "tau_db,analytic,empirical,half_width");
        for (k, (&tau_db, &tau)) in resolved.tau_db.iter().zip(&resolved.tau_linear).enumerate() {
            let empirical = montecarlo::empirical_coverage(
                &resolved.spec,
                budget,
                fading,
                user,
                tau,
                &resolved.ensemble,
            );
            csv.row(&[
                field(tau_db)?,
                field(analytic[k])?,
                field(empirical.value)?,
                field(empirical.half_width())?,
            ]);
        }
        csv.write(out)?;
        outputs.push(name);
    }
    Ok(outputs)
}

fn ergodicity_experiment(resolved: &Resolved, out: &Path) -> Result<Vec<String>> {
    let step = resolved
        .step_s
        .unwrap_or_else(|| dynamics::default_step(&resolved.speeds, &resolved.spec));
    let mut csv = CsvWriter::new(
        "ergodicity.csv",
        "latitude_deg,ensemble_mean_m,time_average_m,half_width_m,relative_error,regime",
    );
    for (user, &lat) in resolved.users.iter().zip(&resolved.latitudes_deg) {
        let report = montecarlo::ergodicity_experiment(
            &resolved.spec,
            &resolved.speeds,
            user,
            resolved.horizon_s,
            step,
            &resolved.ensemble,
            resolved.rel_tolerance,
        )
        .map_err(|e| anyhow!("latitude {lat}: {e}"))?;
        let regime = if report.note.is_some() {
            "periodic"
        } else {
            "ergodic"
        };
        if let Some(note) = &report.note {
            eprintln!("note (latitude {lat}): {note}");
        }
        let rel = (report.empirical_value - report.analytic_value).abs() / report.analytic_value;
        csv.row(&[
            field(lat)?,
            field(report.analytic_value)?,
            field(report.empirical_value)?,
            field(report.half_width)?,
            field(rel)?,
            regime.to_string(),
        ]);
    }
    csv.write(out)?;
    Ok(vec!["ergodicity.csv".into()])
}

// ============================================================================
// Manifest
// ============================================================================

#[derive(Serialize)]
struct Manifest<'a> {
    run: RunInfo,
    resolved: ResolvedEcho,
    config: &'a RawConfig,
}

#[derive(Serialize)]
struct RunInfo {
    version: &'static str,
    experiment: &'static str,
    seed: u64,
    threads: usize,
    started_unix_s: u64,
    wall_clock_s: f64,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct ResolvedEcho {
    n_orbits: u32,
    sats_per_orbit: u32,
    inclination_rad: f64,
    orbit_radius_m: f64,
    earth_radius_m: f64,
    theta_interval_rad: f64,
    omega_interval_rad: f64,
    latitudes_rad: Vec<f64>,
    fading: String,
    earth_spin_rad_per_s: f64,
    satellite_rate_rad_per_s: f64,
    noise_power_w: f64,
    grid_n_theta: usize,
    grid_n_omega: usize,
    n_samples: usize,
    confidence: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ref_power_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tx_gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rx_gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gain_cutoff_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pathloss_exponent: Option<f64>,
}

fn write_manifest(
    raw: &RawConfig,
    resolved: &Resolved,
    out: &Path,
    outputs: &[String],
    started_unix_s: u64,
    wall_clock_s: f64,
) -> Result<()> {
    let spec = &resolved.spec;
    let manifest = Manifest {
        run: RunInfo {
            version: env!("CARGO_PKG_VERSION"),
            experiment: resolved.experiment.name(),
            seed: resolved.ensemble.seed(),
            threads: rayon::current_num_threads(),
            started_unix_s,
            wall_clock_s,
            outputs: outputs.to_vec(),
        },
        resolved: ResolvedEcho {
            n_orbits: spec.n_orbits(),
            sats_per_orbit: spec.sats_per_orbit(),
            inclination_rad: spec.inclination(),
            orbit_radius_m: spec.orbit_radius(),
            earth_radius_m: spec.earth_radius(),
            theta_interval_rad: spec.theta_interval(),
            omega_interval_rad: spec.omega_interval(),
            latitudes_rad: resolved.users.iter().map(|u| u.latitude()).collect(),
            fading: format!("{:?}", resolved.fading).to_lowercase(),
            earth_spin_rad_per_s: resolved.speeds.earth_spin(),
            satellite_rate_rad_per_s: resolved.speeds.satellite_rate(),
            noise_power_w: resolved.noise_power_w,
            grid_n_theta: resolved.grid.n_theta(),
            grid_n_omega: resolved.grid.n_omega(),
            n_samples: resolved.ensemble.n_samples(),
            confidence: resolved.ensemble.confidence(),
            ref_power_w: resolved.budget.as_ref().map(|b| b.ref_power()),
            tx_gain: resolved.budget.as_ref().map(|b| b.tx_gain()),
            rx_gain: resolved.budget.as_ref().map(|b| b.rx_gain()),
            gain_cutoff_m: resolved.budget.as_ref().map(|b| b.gain_cutoff()),
            pathloss_exponent: resolved.budget.as_ref().map(|b| b.pathloss_exponent()),
        },
        config: raw,
    };
    let text = toml::to_string_pretty(&manifest).context("serializing the run manifest")?;
    output::write_atomic(&out.join("manifest.toml"), text.as_bytes())
}
