//! The four subcommands. Each returns the process exit code on success.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use klslab::bounds::{comparison_table, optimal_ell, EllChoice};
use klslab::isoperimetry::{
    conductance_proxy, gaussian_component_lower_bound_at_time, halfspace_isoperimetry, stability_fraction,
    truncate_to_ball, write_estimates_csv, EstimateKind, IsoperimetryEstimate, Witness, DEFAULT_LEVELS,
};
use klslab::linalg::random_spd;
use klslab::localization::{check_martingale, init_state, simulate_ensemble, MartingaleCheck, MartingaleTarget, PathOptions};
use klslab::measures::sample_atomic;
use klslab::report::{CheckRecord, Report};
use klslab::rng::{stream_rng, stream_seed};
use klslab::{Density, Family, Vector};
use serde::Serialize;

use crate::config::{Command, CovarianceKind, ExperimentConfig};
use crate::suites::{lower_half, run_suite};
use crate::CliError;

/// Stream indices split from the master seed.
pub mod streams {
    pub const BASE_COVARIANCE: u64 = 0;
    pub const CLOUD: u64 = 1;
    pub const ENSEMBLE: u64 = 2;
    pub const SCAN: u64 = 3;
    pub const TRUNCATION: u64 = 4;
    pub const PROXY_CLOUD: u64 = 5;
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), bytes)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(klslab::Error::from)?;
    s.push('\n');
    Ok(s)
}

/// The base density named by the config.
pub fn base_density(cfg: &ExperimentConfig, master: u64) -> Result<Density, CliError> {
    Ok(match cfg.covariance {
        CovarianceKind::Isotropic => cfg.family.isotropic(cfg.d),
        CovarianceKind::Random => {
            let mut rng = stream_rng(master, streams::BASE_COVARIANCE);
            Density::gaussian(Vector::zeros(cfg.d), random_spd(cfg.d, 0.5, 2.0, &mut rng))?
        }
    })
}

#[derive(Debug, Serialize)]
struct PathSummary {
    index: usize,
    seed: u64,
    gamma_t: f64,
    spec_q_t: f64,
    g_t: f64,
}

#[derive(Debug, Serialize)]
struct SimulateSummary<'a> {
    config: &'a ExperimentConfig,
    master_seed: u64,
    seed_rule: &'static str,
    steps: usize,
    dt_effective: f64,
    paths: Vec<PathSummary>,
    gamma_t_mean: f64,
    gamma_t_standard_error: f64,
    /// `d/(1+T)^q`, exact for Gaussian bases.
    gaussian_gamma_t: Option<f64>,
    subset_martingale: MartingaleCheck,
}

pub fn simulate(cfg: &ExperimentConfig, master: u64, out: Option<&Path>) -> Result<i32, CliError> {
    cfg.expect_command(Command::Simulate)?;
    let density = base_density(cfg, master)?;
    let cloud = sample_atomic(&density, cfg.n_atoms, stream_seed(master, streams::CLOUD))?;
    let start = init_state(&cloud, cfg.q)?;
    let opts = PathOptions { subset: Some(lower_half(&cloud)), drift_stride: cfg.drift_stride, ..Default::default() };
    let ensemble_master = stream_seed(master, streams::ENSEMBLE);
    let (steps, dt_effective) = klslab::localization::step_grid(cfg.horizon, cfg.dt())?;
    let paths = simulate_ensemble(&start, cfg.horizon, cfg.dt(), ensemble_master, cfg.paths, &opts)?;

    let summaries: Vec<PathSummary> = paths
        .iter()
        .enumerate()
        .map(|(index, p)| PathSummary {
            index,
            seed: p.seed,
            gamma_t: p.terminal().gamma(),
            spec_q_t: p.terminal().spec_q(),
            g_t: p.tracker.as_ref().map(|t| t.g).unwrap_or(f64::NAN),
        })
        .collect();
    let gammas: Vec<f64> = summaries.iter().map(|s| s.gamma_t).collect();
    let (gamma_t_mean, gamma_t_standard_error, _) = klslab::localization::mean_z(&gammas, 0.0);
    let subset_martingale = check_martingale(&paths, &[MartingaleTarget::Subset])?.remove(0);
    let summary = SimulateSummary {
        config: cfg,
        master_seed: master,
        seed_rule: "seed_i = splitmix64(master + 0x9E3779B97F4A7C15 * (i + 1))",
        steps,
        dt_effective,
        paths: summaries,
        gamma_t_mean,
        gamma_t_standard_error,
        gaussian_gamma_t: (density.family() == Family::Gaussian)
            .then(|| cfg.d as f64 / (1.0 + cfg.horizon).powi(cfg.q as i32)),
        subset_martingale,
    };
    let json = to_json(&summary)?;
    match out {
        Some(dir) => {
            let width = (paths.len().max(1) - 1).to_string().len().max(4);
            for (i, p) in paths.iter().enumerate() {
                let mut buf = Vec::new();
                p.write_csv(&mut buf)?;
                write_file(&dir.join("paths"), &format!("path_{i:0width$}.csv"), &buf)?;
            }
            write_file(dir, "summary.json", json.as_bytes())?;
        }
        None => print!("{json}"),
    }
    Ok(0)
}

pub fn verify(cfg: &ExperimentConfig, master: u64, out: Option<&Path>) -> Result<i32, CliError> {
    cfg.expect_command(Command::Verify)?;
    let mut cfg = cfg.clone();
    cfg.seed = master;
    let report = run_suite(&cfg)?;
    let json = to_json(&report)?;
    match out {
        Some(dir) => write_file(dir, "report.json", json.as_bytes())?,
        None => print!("{json}"),
    }
    let fails = report.checks.iter().filter(|c| c.status == klslab::report::Status::Fail).count();
    let flags = report.flagged().count();
    eprintln!("verify: {} checks, {fails} failed, {flags} flagged", report.checks.len());
    Ok(if report.failed() { 1 } else { 0 })
}

#[derive(Debug, Serialize)]
struct BoundsSidecar {
    log_base: &'static str,
    c: f64,
    c_lv: f64,
    rows: usize,
    first_row_beating_lee_vempala: Option<usize>,
    crossover_ln_d: Option<f64>,
    crossover_ell: Option<u32>,
    ell_choices: Vec<EllChoice>,
}

pub fn bounds(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<i32, CliError> {
    cfg.expect_command(Command::Bounds)?;
    if cfg.d_list.is_empty() {
        return Err(CliError::Usage("d_list is empty".into()));
    }
    let table = comparison_table(&cfg.d_list, cfg.c, cfg.c_lv)?;
    let ell_choices = cfg.d_list.iter().filter(|&&d| d >= 16.0).map(|&d| optimal_ell(d, cfg.c)).collect::<klslab::Result<_>>()?;
    let sidecar = BoundsSidecar {
        log_base: "natural",
        c: table.c,
        c_lv: table.c_lv,
        rows: table.rows.len(),
        first_row_beating_lee_vempala: table.first_row_beating_lee_vempala,
        crossover_ln_d: table.crossover_ln_d,
        crossover_ell: table.crossover_ell,
        ell_choices,
    };
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    let json = to_json(&sidecar)?;
    match out {
        Some(dir) => {
            write_file(dir, "bounds.csv", &csv)?;
            write_file(dir, "bounds.json", json.as_bytes())?;
        }
        None => {
            std::io::stdout().write_all(&csv)?;
            eprint!("{json}");
        }
    }
    Ok(0)
}

/// Isoperimetric estimates for the configured density and the sandwich between them.
pub fn report(cfg: &ExperimentConfig, master: u64, out: Option<&Path>) -> Result<i32, CliError> {
    cfg.expect_command(Command::Report)?;
    if !(cfg.horizon > 0.0) {
        return Err(CliError::Usage("report needs T > 0 for the Gaussian-component bound".into()));
    }
    let density = base_density(cfg, master)?;
    let d = cfg.d;
    let upper = halfspace_isoperimetry(&density, cfg.directions.max(1), &DEFAULT_LEVELS, stream_seed(master, streams::SCAN))?;

    let proxy_cloud = sample_atomic(&density, cfg.n_atoms.clamp(100, 2000), stream_seed(master, streams::PROXY_CLOUD))?;
    let proxy = conductance_proxy(&proxy_cloud, cfg.knn, 32)?;

    let cloud = sample_atomic(&density, cfg.n_atoms, stream_seed(master, streams::CLOUD))?;
    let start = init_state(&cloud, cfg.q)?;
    let opts = PathOptions { subset: Some(lower_half(&cloud)), ..Default::default() };
    let paths = simulate_ensemble(&start, cfg.horizon, cfg.dt(), stream_seed(master, streams::ENSEMBLE), cfg.paths, &opts)?;
    let finals: Vec<f64> = paths.iter().map(|p| p.tracker.as_ref().map(|t| t.g).unwrap_or(f64::NAN)).collect();
    let stable = stability_fraction(&finals);
    let lower_value = gaussian_component_lower_bound_at_time(cfg.horizon, start.base_covariance(), stable)?;
    let lower = IsoperimetryEstimate { value: lower_value, kind: EstimateKind::LowerViaGaussianComponent, witness: Witness::None };
    let kls = klslab::bounds::kls_original_bound(density.covariance())?;

    let truncation = truncate_to_ball(&density, 0.25, cfg.n_atoms, stream_seed(master, streams::TRUNCATION))?;

    let estimates = vec![upper.clone(), proxy.clone(), lower];
    let mut rep = Report::new();
    rep.echo("seed", master);
    rep.echo("family", density.family().name());
    rep.echo("d", d);
    rep.echo("T", cfg.horizon);
    rep.echo("paths", cfg.paths);
    rep.echo("stability_fraction", stable);
    rep.echo("conductance_proxy", proxy.value);
    rep.echo("truncation_radius", truncation.radius);
    rep.echo("truncation_tail", truncation.tail);
    rep.echo("truncation_chain_factor", truncation.chain_factor);
    rep.echo("truncation_half_factor_holds", if truncation.half_factor_holds { "true" } else { "false" });
    let sandwich = |name: &str, low: f64| {
        CheckRecord::statistical(name, low, upper.value, 1.0, 1, usize::from(low > upper.value), vec![master])
    };
    rep.push(sandwich("sandwich/kls-lower-vs-halfspace-upper", kls));
    rep.push(sandwich("sandwich/gaussian-component-lower-vs-halfspace-upper", lower_value));

    let mut csv = Vec::new();
    write_estimates_csv(&estimates, d, &mut csv)?;
    let json = to_json(&rep)?;
    match out {
        Some(dir) => {
            write_file(dir, "estimates.csv", &csv)?;
            write_file(dir, "sandwich.json", json.as_bytes())?;
        }
        None => {
            std::io::stdout().write_all(&csv)?;
            eprint!("{json}");
        }
    }
    Ok(0)
}

/// Resolves `--out` over the config's `out` key.
pub fn output_dir(cli: Option<PathBuf>, cfg: &ExperimentConfig) -> Option<PathBuf> {
    cli.or_else(|| cfg.out.clone())
}
