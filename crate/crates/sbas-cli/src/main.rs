use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sbas_core::pipeline::{
    correlate_files, run_correlate, run_invert, run_network, run_pipeline, run_simulate,
    run_unwrap,
};
use sbas_core::{Error, PipelineConfig, Result};

#[derive(Parser)]
#[command(
    name = "sbas",
    version,
    about = "Small-baseline InSAR time-series toolkit",
    propagate_version = true
)]
struct Cli {
    /// Pipeline configuration file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override the configured output directory
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Override the configured simulation seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate wrapped interferograms for the configured scene and network
    Simulate,
    /// Resolve the pair network; write pairs.csv and a baseline plot
    Network,
    /// Unwrap the simulated interferograms
    Unwrap(UnwrapArgs),
    /// Invert unwrapped phase into displacement series and mean velocity
    Invert(InvertArgs),
    /// Correlate displacement series against well production records
    Correlate(CorrelateArgs),
    /// Run every stage in order and write the artifact manifest
    Pipeline,
}

#[derive(Args)]
struct UnwrapArgs {
    /// Mask pixels below this coherence in least-squares unwrapping
    #[arg(long, value_name = "C")]
    coh_threshold: Option<f64>,
}

#[derive(Args)]
struct InvertArgs {
    /// Also estimate per-pixel DEM error from the baseline diversity
    #[arg(long)]
    with_topo: bool,

    /// Accept a network that splits into several connected components
    #[arg(long)]
    allow_disconnected: bool,

    /// Reference pixel `x,y` (overrides max-coherence auto-selection)
    #[arg(long, value_name = "X,Y")]
    ref_pixel: Option<String>,
}

#[derive(Args)]
struct CorrelateArgs {
    /// Production CSV (`well_id,month,barrels`); with --series, runs on the
    /// given files instead of the configured pipeline artifacts
    #[arg(long, value_name = "FILE", requires = "series")]
    production: Option<PathBuf>,

    /// Displacement series CSV (`epoch,displacement_mm`)
    #[arg(long, value_name = "FILE", requires = "production")]
    series: Option<PathBuf>,

    /// Maximum lag in interferometric intervals
    #[arg(long, value_name = "K")]
    max_lag: Option<i32>,

    /// Report destination for the file mode (default: correlation.csv)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut cfg = PipelineConfig::from_file(path)?;
    if let Some(dir) = &cli.out_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.scene.seed = seed;
    }
    Ok(cfg)
}

fn parse_ref_pixel(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("--ref-pixel expects \"x,y\", got {s:?}"));
    let (x, y) = s.split_once(',').ok_or_else(bad)?;
    Ok((
        x.trim().parse().map_err(|_| bad())?,
        y.trim().parse().map_err(|_| bad())?,
    ))
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("could not configure {n} threads: {e}")))?;
    }

    match &cli.command {
        Command::Simulate => {
            let cfg = load_config(cli)?;
            run_simulate(&cfg)?;
            println!("simulate: wrote interferograms to {}", cfg.output_dir.display());
        }
        Command::Network => {
            let cfg = load_config(cli)?;
            run_network(&cfg)?;
            println!(
                "network: wrote pairs.csv and network.svg to {}",
                cfg.output_dir.display()
            );
        }
        Command::Unwrap(args) => {
            let mut cfg = load_config(cli)?;
            if let Some(t) = args.coh_threshold {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::Config(format!(
                        "--coh-threshold must lie in [0, 1], got {t}"
                    )));
                }
                cfg.unwrap.coh_threshold = t;
            }
            run_unwrap(&cfg)?;
            println!("unwrap: wrote unwrapped phase to {}", cfg.output_dir.display());
        }
        Command::Invert(args) => {
            let mut cfg = load_config(cli)?;
            cfg.invert.with_topo |= args.with_topo;
            cfg.invert.allow_disconnected |= args.allow_disconnected;
            if let Some(s) = &args.ref_pixel {
                cfg.invert.ref_pixel = Some(parse_ref_pixel(s)?);
            }
            let sol = run_invert(&cfg)?;
            println!(
                "invert: {} epochs referenced to pixel ({}, {}); velocity map in {}",
                sol.epochs.len(),
                sol.ref_pixel.0,
                sol.ref_pixel.1,
                cfg.output_dir.display()
            );
        }
        Command::Correlate(args) => match (&args.production, &args.series) {
            (Some(production), Some(series)) => {
                let out = args
                    .out
                    .clone()
                    .or_else(|| cli.out_dir.as_ref().map(|d| d.join("correlation.csv")))
                    .unwrap_or_else(|| PathBuf::from("correlation.csv"));
                if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                        path: dir.to_path_buf(),
                        source: e,
                    })?;
                }
                correlate_files(production, series, args.max_lag.unwrap_or(3), &out)?;
                println!("correlate: wrote {}", out.display());
            }
            _ => {
                let mut cfg = load_config(cli)?;
                if let Some(k) = args.max_lag {
                    if k < 0 {
                        return Err(Error::Config(format!("--max-lag must be >= 0, got {k}")));
                    }
                    cfg.correlate.max_lag = k;
                }
                run_correlate(&cfg)?;
                println!(
                    "correlate: wrote correlation.csv to {}",
                    cfg.output_dir.display()
                );
            }
        },
        Command::Pipeline => {
            let cfg = load_config(cli)?;
            let manifest = run_pipeline(&cfg)?;
            println!(
                "pipeline: wrote {} artifacts to {} (manifest.txt)",
                manifest.len(),
                cfg.output_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
