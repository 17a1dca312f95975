//! Command-line front end: load a configuration, run one of the pipelines,
//! and emit CSV outputs plus a manifest into the output directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pmspec::config::{load_config, RunConfig};
use pmspec::output::{
    config_hash, grid_cache_path, grid_hash, read_grid_cache, write_compare_csv,
    write_components_csv, write_grid_cache, write_grid_csv, write_peaks_csv, write_spectrum_csv,
    write_spectrum_meta, CompareRow, Manifest,
};
use pmspec::perturbation::{first_harmonic_signal, second_harmonic_signal};
use pmspec::propagator::SignalGrid;
use pmspec::sweep::{
    analytic_spectra, extract_all_peaks, numeric_grid, numeric_spectra_from_grid, run_sweep,
    SweepRoute,
};

#[derive(Parser)]
#[command(
    name = "pmspec",
    version,
    about = "Phase-modulated nonlinear spectroscopy of a coupled three-level emitter pair"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the signal grid, demodulate, and write spectra.
    Simulate(RunArgs),
    /// Evaluate the perturbative spectra and component breakdowns.
    Analytic(RunArgs),
    /// Sweep a parameter axis and tabulate peak heights.
    Sweep(SweepArgs),
    /// Run both routes at the configured parameters and compare peaks.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (flat key-value JSON, or a manifest from a
    /// previous run).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; results are identical for any count.
    #[arg(long)]
    workers: Option<usize>,
    /// Use the full-size delay grid (4500 points, window 500) instead of the
    /// reduced default.
    #[arg(long)]
    full_grid: bool,
    /// Which demodulation orders to emit.
    #[arg(long, value_enum, default_value_t = KappaChoice::Both)]
    kappa: KappaChoice,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Override the sweep route from the config.
    #[arg(long, value_enum)]
    route: Option<RouteChoice>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KappaChoice {
    #[value(name = "1")]
    First,
    #[value(name = "2")]
    Second,
    Both,
}

impl KappaChoice {
    fn emits(self, kappa: u32) -> bool {
        matches!(
            (self, kappa),
            (KappaChoice::Both, _) | (KappaChoice::First, 1) | (KappaChoice::Second, 2)
        )
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RouteChoice {
    Numeric,
    Analytic,
    Both,
}

impl From<RouteChoice> for SweepRoute {
    fn from(r: RouteChoice) -> Self {
        match r {
            RouteChoice::Numeric => SweepRoute::Numeric,
            RouteChoice::Analytic => SweepRoute::Analytic,
            RouteChoice::Both => SweepRoute::Both,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => prepared(&args).and_then(|cfg| simulate(&args, &cfg)),
        Command::Analytic(args) => prepared(&args).and_then(|cfg| analytic(&args, &cfg)),
        Command::Sweep(args) => {
            prepared(&args.run).and_then(|cfg| sweep_command(&args, &cfg))
        }
        Command::Compare(args) => prepared(&args).and_then(|cfg| compare(&args, &cfg)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Load the config, apply CLI overrides, set up workers and the out dir.
fn prepared(args: &RunArgs) -> Result<RunConfig> {
    if let Some(n) = args.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("worker pool already initialized")?;
    }
    let mut cfg = load_config(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if args.full_grid {
        cfg.t21_grid.count = 4500;
        cfg.t21_grid.spacing = 0.5;
        cfg.window_sigma = 500.0;
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    Ok(cfg)
}

/// Signal grid with caching: reuse a cached grid for the same grid-relevant
/// configuration, otherwise compute and store it.
fn cached_grid(cfg: &RunConfig, out: &Path) -> Result<SignalGrid> {
    let cache_dir = out.join("cache");
    std::fs::create_dir_all(&cache_dir)?;
    let key = grid_hash(cfg)?;
    let path = grid_cache_path(&cache_dir, &key);
    if path.exists() {
        if let Ok(grid) = read_grid_cache(&path) {
            return Ok(grid);
        }
    }
    let grid = numeric_grid(cfg)?;
    write_grid_cache(&path, &grid)?;
    Ok(grid)
}

fn simulate(args: &RunArgs, cfg: &RunConfig) -> Result<()> {
    let mut manifest = Manifest::new("simulate", cfg)?;
    let grid = cached_grid(cfg, &args.out)?;

    let grid_csv = args.out.join("grid.csv");
    write_grid_csv(&grid_csv, &grid)?;
    manifest.record(&grid_csv)?;

    let spectra = numeric_spectra_from_grid(cfg, &grid)?;
    for (idx, kappa) in [1u32, 2].into_iter().enumerate() {
        if !args.kappa.emits(kappa) {
            continue;
        }
        let csv = args.out.join(format!("spectrum_k{kappa}.csv"));
        write_spectrum_csv(&csv, &spectra[idx])?;
        manifest.record(&csv)?;
        let meta = args.out.join(format!("spectrum_k{kappa}.meta.json"));
        write_spectrum_meta(&meta, cfg, &spectra[idx], "numeric")?;
        manifest.record(&meta)?;
    }

    manifest.write(&args.out.join("manifest.json"))?;
    println!("simulate: config {} done", &manifest.config_hash[..12]);
    println!("max norm drift: {:.3e}", grid.max_norm_drift);
    Ok(())
}

fn analytic(args: &RunArgs, cfg: &RunConfig) -> Result<()> {
    let mut manifest = Manifest::new("analytic", cfg)?;
    let t21 = cfg.t21_grid.values();
    let spectra = analytic_spectra(cfg)?;
    for (idx, kappa) in [1u32, 2].into_iter().enumerate() {
        if !args.kappa.emits(kappa) {
            continue;
        }
        let sig = if kappa == 1 {
            first_harmonic_signal(&cfg.system, &cfg.pulses.envelope, cfg.pulses.omega_l, cfg.demod.omega_m, &t21)?
        } else {
            second_harmonic_signal(&cfg.system, &cfg.pulses.envelope, cfg.pulses.omega_l, cfg.demod.omega_m, &t21)?
        };
        let csv = args.out.join(format!("analytic_spectrum_k{kappa}.csv"));
        write_spectrum_csv(&csv, &spectra[idx])?;
        manifest.record(&csv)?;
        let meta = args.out.join(format!("analytic_spectrum_k{kappa}.meta.json"));
        write_spectrum_meta(&meta, cfg, &spectra[idx], "analytic")?;
        manifest.record(&meta)?;
        let comps = args.out.join(format!("analytic_components_k{kappa}.csv"));
        write_components_csv(&comps, &sig, cfg.window_sigma, &cfg.omega_grid(kappa))?;
        manifest.record(&comps)?;
    }
    manifest.write(&args.out.join("manifest.json"))?;
    println!("analytic: config {} done", &manifest.config_hash[..12]);
    Ok(())
}

fn sweep_command(args: &SweepArgs, cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(route) = args.route {
        let sweep = cfg.sweep.as_mut().context("config has no sweep section")?;
        sweep.route = route.into();
    }
    let mut manifest = Manifest::new("sweep", &cfg)?;
    let table = run_sweep(&cfg)?;
    let csv = args.run.out.join("peaks.csv");
    write_peaks_csv(&csv, &table)?;
    manifest.record(&csv)?;
    manifest.write(&args.run.out.join("manifest.json"))?;
    println!("sweep: {} rows over axis {}", table.rows.len(), table.axis.as_str());
    Ok(())
}

fn compare(args: &RunArgs, cfg: &RunConfig) -> Result<()> {
    let mut manifest = Manifest::new("compare", cfg)?;
    let grid = cached_grid(cfg, &args.out)?;
    let numeric = numeric_spectra_from_grid(cfg, &grid)?;
    let analytic = analytic_spectra(cfg)?;
    let numeric_peaks = extract_all_peaks(cfg, &numeric)?;
    let analytic_peaks = extract_all_peaks(cfg, &analytic)?;

    let rows: Vec<CompareRow> = numeric_peaks
        .iter()
        .zip(&analytic_peaks)
        .map(|((label, wn, vn), (_, wa, va))| {
            let (num, ana) = match label.kappa() {
                1 => (vn.re, va.re),
                _ => (vn.im, va.im),
            };
            CompareRow {
                label: label.as_str(),
                kappa: label.kappa(),
                omega_numeric: *wn,
                numeric: *vn,
                omega_analytic: *wa,
                analytic: *va,
                rel_deviation: (num - ana).abs() / ana.abs().max(f64::MIN_POSITIVE),
            }
        })
        .collect();

    let csv = args.out.join("compare.csv");
    write_compare_csv(&csv, &rows)?;
    manifest.record(&csv)?;
    manifest.write(&args.out.join("manifest.json"))?;
    for r in &rows {
        println!(
            "{:5} kappa {}: numeric {:+.6e} analytic {:+.6e} deviation {:.2}%",
            r.label,
            r.kappa,
            if r.kappa == 1 { r.numeric.re } else { r.numeric.im },
            if r.kappa == 1 { r.analytic.re } else { r.analytic.im },
            100.0 * r.rel_deviation
        );
    }
    println!("compare: config {} done", &config_hash(cfg)?[..12]);
    Ok(())
}
