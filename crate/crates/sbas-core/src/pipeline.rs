//! File-driven pipeline stages and the end-to-end driver.
//!
//! Stages communicate through artifacts in the output directory, so each one
//! also works standalone from the CLI. `run_pipeline` chains them all and
//! writes `manifest.txt` with a SHA-256 per artifact; identical configs must
//! reproduce identical manifests regardless of thread count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::correlate::{
    aggregate_production, displacement_rate, lagged_correlation, load_production,
    well_ids, CorrelationReport, ProductionRecord,
};
use crate::error::{Error, Result};
use crate::invert::{invert_stack, InvertOptions, TimeSeriesSolution};
use crate::io::config::{NetworkSource, PipelineConfig, UnwrapMethod};
use crate::io::manifest::Manifest;
use crate::io::sgrid::{encode, read_sgrid};
use crate::io::svg::{render_network, render_quicklook, ColorRamp};
use crate::network::{
    build_network, compact_date, estimate_epoch_baselines, load_acquisitions, load_pairs,
    pairs_to_csv, parse_compact_date, PairSpec,
};
use crate::raster::Raster;
use crate::sim::{forward_interferogram, make_atmosphere, make_velocity_bowl, SceneTruth};
use crate::unwrap::{compute_residues, unwrap_itoh, unwrap_ls};

/// Writes artifacts into the output directory and records their hashes.
pub struct ArtifactWriter {
    out_dir: PathBuf,
    manifest: Manifest,
}

impl ArtifactWriter {
    pub fn create(out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        Ok(ArtifactWriter {
            out_dir: out_dir.to_path_buf(),
            manifest: Manifest::new(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.manifest.record(name, bytes);
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_raster(&mut self, name: &str, raster: &Raster) -> Result<()> {
        self.write_bytes(name, &encode(raster))
    }

    /// Write `manifest.txt` (not itself listed) and hand the manifest back.
    pub fn finish(self) -> Result<Manifest> {
        self.manifest.write(&self.out_dir.join("manifest.txt"))?;
        Ok(self.manifest)
    }
}

/// Epoch list, pair list, and per-epoch baselines ready for simulation.
#[derive(Debug, Clone)]
pub struct ResolvedNetwork {
    pub epochs: Vec<NaiveDate>,
    pub pairs: Vec<PairSpec>,
    /// Perpendicular baseline per epoch, metres; estimated by least squares
    /// when the network came from a pair list.
    pub baselines_m: Vec<f64>,
}

/// Build the network from whichever source the config names. Errors carry the
/// `network` stage tag.
pub fn resolve_network(cfg: &PipelineConfig) -> Result<ResolvedNetwork> {
    let build = || -> Result<ResolvedNetwork> {
        match cfg.network.as_ref().ok_or_else(|| {
            Error::Config("config must set network.pairs_csv or network.acquisitions_csv".into())
        })? {
            NetworkSource::Pairs(path) => {
                let (epochs, pairs) = load_pairs(path)?;
                let baselines_m = estimate_epoch_baselines(epochs.len(), &pairs)?;
                Ok(ResolvedNetwork {
                    epochs,
                    pairs,
                    baselines_m,
                })
            }
            NetworkSource::Acquisitions { path, thresholds } => {
                let acqs = load_acquisitions(path)?;
                let (acqs, pairs) = build_network(&acqs, thresholds)?;
                Ok(ResolvedNetwork {
                    epochs: acqs.iter().map(|a| a.date).collect(),
                    baselines_m: acqs.iter().map(|a| a.bperp_m).collect(),
                    pairs,
                })
            }
        }
    };
    build().map_err(|e| e.in_stage("network"))
}

/// Instantiate the ground truth the scene config describes.
pub fn build_truth(cfg: &PipelineConfig, n_epochs: usize) -> Result<SceneTruth> {
    let s = &cfg.scene;
    let velocity = make_velocity_bowl(
        s.width,
        s.height,
        s.dx_m,
        s.dy_m,
        s.peak_mm_yr,
        (s.center_x_px, s.center_y_px),
        s.sigma_px,
    )?;
    let dem_error = make_velocity_bowl(
        s.width,
        s.height,
        s.dx_m,
        s.dy_m,
        s.dem_peak_m,
        (s.dem_center_x_px, s.dem_center_y_px),
        s.dem_sigma_px,
    )?;
    let atmosphere = (0..n_epochs)
        .map(|e| {
            make_atmosphere(
                s.width,
                s.height,
                s.dx_m,
                s.dy_m,
                s.atmosphere_corr_px,
                s.atmosphere_sigma_rad,
                s.seed,
                e as u64,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneTruth {
        velocity_mm_yr: velocity,
        dem_error_m: dem_error,
        atmosphere_rad: atmosphere,
        noise_sigma_rad: s.noise_sigma_rad,
        sensor: cfg.sensor.clone(),
        seed: s.seed,
    })
}

fn pair_name(prefix: &str, epochs: &[NaiveDate], pair: &PairSpec) -> String {
    format!(
        "{prefix}_{}_{}.sgrid",
        compact_date(epochs[pair.master_idx]),
        compact_date(epochs[pair.slave_idx])
    )
}

fn simulate_stage(
    cfg: &PipelineConfig,
    net: &ResolvedNetwork,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let truth = build_truth(cfg, net.epochs.len())?;
    w.write_raster("truth_velocity.sgrid", &truth.velocity_mm_yr)?;
    w.write_raster("truth_dem_error.sgrid", &truth.dem_error_m)?;
    for (e, atm) in truth.atmosphere_rad.iter().enumerate() {
        w.write_raster(&format!("atm_{}.sgrid", compact_date(net.epochs[e])), atm)?;
    }
    // Interferograms are independent; simulate in parallel, write in order.
    let ifgs = net
        .pairs
        .par_iter()
        .map(|p| forward_interferogram(&truth, &net.epochs, p))
        .collect::<Result<Vec<_>>>()?;
    for ifg in &ifgs {
        w.write_raster(&pair_name("ifg", &net.epochs, &ifg.pair), &ifg.phase)?;
        w.write_raster(&pair_name("coh", &net.epochs, &ifg.pair), &ifg.coherence)?;
    }
    Ok(())
}

fn network_stage(net: &ResolvedNetwork, w: &mut ArtifactWriter) -> Result<()> {
    w.write_text("pairs.csv", &pairs_to_csv(&net.epochs, &net.pairs)?)?;
    w.write_text(
        "network.svg",
        &render_network(&net.epochs, &net.baselines_m, &net.pairs),
    )
}

fn unwrap_one(
    cfg: &PipelineConfig,
    wrapped: &Raster,
    coherence: &Raster,
) -> Result<Raster> {
    let threshold = cfg.unwrap.coh_threshold;
    match cfg.unwrap.method {
        UnwrapMethod::Itoh => unwrap_itoh(wrapped),
        UnwrapMethod::Ls => unwrap_ls(wrapped, coherence, threshold),
        UnwrapMethod::Auto => {
            if compute_residues(wrapped)?.nonzero_count() == 0 {
                unwrap_itoh(wrapped)
            } else {
                unwrap_ls(wrapped, coherence, threshold)
            }
        }
    }
}

fn unwrap_stage(
    cfg: &PipelineConfig,
    net: &ResolvedNetwork,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let inputs: Vec<(String, Raster, Raster)> = net
        .pairs
        .iter()
        .map(|p| {
            let ifg = read_sgrid(&w.out_dir().join(pair_name("ifg", &net.epochs, p)))?;
            let coh = read_sgrid(&w.out_dir().join(pair_name("coh", &net.epochs, p)))?;
            Ok((pair_name("unw", &net.epochs, p), ifg, coh))
        })
        .collect::<Result<Vec<_>>>()?;
    let unwrapped = inputs
        .par_iter()
        .map(|(name, ifg, coh)| Ok((name.clone(), unwrap_one(cfg, ifg, coh)?)))
        .collect::<Result<Vec<(String, Raster)>>>()?;
    for (name, r) in &unwrapped {
        w.write_raster(name, r)?;
    }
    Ok(())
}

fn invert_stage(
    cfg: &PipelineConfig,
    net: &ResolvedNetwork,
    w: &mut ArtifactWriter,
) -> Result<TimeSeriesSolution> {
    let mut unwrapped = Vec::with_capacity(net.pairs.len());
    let mut coherence = Vec::with_capacity(net.pairs.len());
    for p in &net.pairs {
        unwrapped.push(read_sgrid(&w.out_dir().join(pair_name("unw", &net.epochs, p)))?);
        coherence.push(read_sgrid(&w.out_dir().join(pair_name("coh", &net.epochs, p)))?);
    }
    let options = InvertOptions {
        with_topo: cfg.invert.with_topo,
        allow_disconnected: cfg.invert.allow_disconnected,
        ref_pixel: cfg.invert.ref_pixel,
        svd_truncation: cfg.invert.svd_truncation,
    };
    let sol = invert_stack(
        &unwrapped,
        &coherence,
        &net.pairs,
        &net.epochs,
        &cfg.sensor,
        &options,
    )?;

    w.write_raster("velocity.sgrid", &sol.mean_velocity)?;
    w.write_raster("residual_rms.sgrid", &sol.residual_rms)?;
    if let Some(dem) = &sol.dem_error {
        w.write_raster("dem_error.sgrid", dem)?;
    }
    for (e, disp) in sol.displacement.iter().enumerate() {
        w.write_raster(&format!("disp_{}.sgrid", compact_date(sol.epochs[e])), disp)?;
    }
    w.write_text(
        "velocity.svg",
        &render_quicklook(&sol.mean_velocity, ColorRamp::BlueRed, "Mean LOS velocity", "mm/yr"),
    )?;
    for (well, (x, y)) in &cfg.correlate.probes {
        w.write_text(
            &format!("timeseries_{well}.csv"),
            &timeseries_to_csv(&sol.epochs, &sol.series_at(*x, *y)),
        )?;
    }
    Ok(sol)
}

/// Render a displacement series as `epoch,displacement_mm` CSV text.
pub fn timeseries_to_csv(epochs: &[NaiveDate], displacement_mm: &[f64]) -> String {
    let mut out = String::from("epoch,displacement_mm\n");
    for (d, v) in epochs.iter().zip(displacement_mm) {
        let _ = writeln!(out, "{},{v}", compact_date(*d));
    }
    out
}

/// Read a displacement series CSV written by the invert stage.
pub fn load_timeseries(path: &Path) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut epochs = Vec::new();
    let mut disp = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.into(),
            line: lineno + 1,
            msg,
        };
        if lineno == 0 {
            if line != "epoch,displacement_mm" {
                return Err(err(format!(
                    "expected header \"epoch,displacement_mm\", got {line:?}"
                )));
            }
            continue;
        }
        let (date, value) = line
            .split_once(',')
            .ok_or_else(|| err(format!("expected \"epoch,value\", got {line:?}")))?;
        let date = parse_compact_date(date).map_err(|e| err(e.to_string()))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| err(format!("invalid displacement {value:?}: {e}")))?;
        if let Some(&prev) = epochs.last() {
            if date <= prev {
                return Err(err(format!(
                    "epochs must be strictly increasing, {} follows {}",
                    compact_date(date),
                    compact_date(prev)
                )));
            }
        }
        epochs.push(date);
        disp.push(value);
    }
    if epochs.len() < 2 {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: format!("need at least 2 epochs, got {}", epochs.len()),
        });
    }
    Ok((epochs, disp))
}

/// Lagged correlations of one displacement series against one well's records.
fn correlate_series(
    well: &str,
    records: &[ProductionRecord],
    epochs: &[NaiveDate],
    displacement_mm: &[f64],
    max_lag: i32,
) -> Result<Vec<CorrelationReport>> {
    let rate = displacement_rate(displacement_mm, epochs)?;
    let mut production = Vec::with_capacity(epochs.len() - 1);
    for k in 0..epochs.len() - 1 {
        production.push(aggregate_production(records, epochs[k], epochs[k + 1])?);
    }
    lagged_correlation(well, &production, &rate, max_lag)
}

fn report_csv(reports: &[CorrelationReport]) -> String {
    let mut out = String::from("well_id,lag,r,n\n");
    for rep in reports {
        let _ = writeln!(out, "{},{},{:.6},{}", rep.well_id, rep.lag, rep.r, rep.n);
    }
    out
}

fn correlate_stage(
    cfg: &PipelineConfig,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let Some(production_csv) = &cfg.correlate.production_csv else {
        return Ok(()); // nothing to correlate against
    };
    let records = load_production(production_csv)?;
    let mut reports = Vec::new();
    for (well, _) in &cfg.correlate.probes {
        let recs: Vec<ProductionRecord> = records
            .iter()
            .filter(|r| &r.well_id == well)
            .cloned()
            .collect();
        if recs.is_empty() {
            return Err(Error::Invalid(format!(
                "no production records for well {well} in {}",
                production_csv.display()
            )));
        }
        let (epochs, disp) = load_timeseries(&w.out_dir().join(format!("timeseries_{well}.csv")))?;
        reports.extend(correlate_series(well, &recs, &epochs, &disp, cfg.correlate.max_lag)?);
    }
    w.write_text("correlation.csv", &report_csv(&reports))
}

/// Correlate one displacement series file against every well in a production
/// file; used by the standalone `correlate` subcommand.
pub fn correlate_files(
    production_csv: &Path,
    series_csv: &Path,
    max_lag: i32,
    out_csv: &Path,
) -> Result<()> {
    let run = || -> Result<()> {
        let records = load_production(production_csv)?;
        let (epochs, disp) = load_timeseries(series_csv)?;
        let mut reports = Vec::new();
        for well in well_ids(&records) {
            let recs: Vec<ProductionRecord> = records
                .iter()
                .filter(|r| r.well_id == well)
                .cloned()
                .collect();
            reports.extend(correlate_series(&well, &recs, &epochs, &disp, max_lag)?);
        }
        std::fs::write(out_csv, report_csv(&reports)).map_err(|e| Error::io(out_csv, e))
    };
    run().map_err(|e| e.in_stage("correlate"))
}

pub fn run_simulate(cfg: &PipelineConfig) -> Result<()> {
    let net = resolve_network(cfg)?;
    let mut w = ArtifactWriter::create(&cfg.output_dir)?;
    simulate_stage(cfg, &net, &mut w).map_err(|e| e.in_stage("simulate"))
}

pub fn run_network(cfg: &PipelineConfig) -> Result<()> {
    let net = resolve_network(cfg)?;
    let mut w = ArtifactWriter::create(&cfg.output_dir)?;
    network_stage(&net, &mut w).map_err(|e| e.in_stage("network"))
}

pub fn run_unwrap(cfg: &PipelineConfig) -> Result<()> {
    let net = resolve_network(cfg)?;
    let mut w = ArtifactWriter::create(&cfg.output_dir)?;
    unwrap_stage(cfg, &net, &mut w).map_err(|e| e.in_stage("unwrap"))
}

pub fn run_invert(cfg: &PipelineConfig) -> Result<TimeSeriesSolution> {
    let net = resolve_network(cfg)?;
    let mut w = ArtifactWriter::create(&cfg.output_dir)?;
    invert_stage(cfg, &net, &mut w).map_err(|e| e.in_stage("invert"))
}

pub fn run_correlate(cfg: &PipelineConfig) -> Result<()> {
    let mut w = ArtifactWriter::create(&cfg.output_dir)?;
    correlate_stage(cfg, &mut w).map_err(|e| e.in_stage("correlate"))
}

/// Run every stage in order and write the artifact manifest.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    let net = resolve_network(cfg)?;
    let mut w = ArtifactWriter::create(&cfg.output_dir)?;
    simulate_stage(cfg, &net, &mut w).map_err(|e| e.in_stage("simulate"))?;
    network_stage(&net, &mut w).map_err(|e| e.in_stage("network"))?;
    unwrap_stage(cfg, &net, &mut w).map_err(|e| e.in_stage("unwrap"))?;
    invert_stage(cfg, &net, &mut w).map_err(|e| e.in_stage("invert"))?;
    correlate_stage(cfg, &mut w).map_err(|e| e.in_stage("correlate"))?;
    w.finish()
}
