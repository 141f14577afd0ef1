//! SBAS inversion: unwrapped interferogram stack -> per-pixel displacement
//! time series, mean LOS velocity, and (optionally) DEM error.
//!
//! The system is parameterized by interval velocities: each interferogram row
//! holds the duration (in years) of every epoch interval its pair spans, so a
//! constant-velocity pixel maps to a constant solution vector. Observations
//! are converted from phase to LOS millimetres (`d = -lambda phi / 4 pi`)
//! before solving; with `with_topo` an extra column models the
//! baseline-proportional DEM-error displacement in mm per metre. The solve is
//! minimum-norm least squares via SVD with singular values below
//! `truncation * sigma_max` discarded, which bridges disconnected networks
//! with zero velocity rather than failing.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{connected_components, describe_components, temporal_baseline, PairSpec};
use crate::raster::Raster;
use crate::sim::{SensorConstants, YEAR_DAYS};

/// Default SVD truncation threshold, relative to the largest singular value.
pub const DEFAULT_SVD_TRUNCATION: f64 = 1e-10;

/// Interval-velocity design matrix with its SVD factored once up front.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
    svd: nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n_epochs: usize,
    with_topo: bool,
}

impl DesignMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_pairs(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_epochs(&self) -> usize {
        self.n_epochs
    }

    pub fn n_intervals(&self) -> usize {
        self.n_epochs - 1
    }

    pub fn with_topo(&self) -> bool {
        self.with_topo
    }

    /// Numerical rank at a relative truncation threshold.
    pub fn rank(&self, truncation: f64) -> usize {
        let smax = self.svd.singular_values.max();
        if smax <= 0.0 {
            return 0;
        }
        self.svd
            .singular_values
            .iter()
            .filter(|&&s| s > truncation * smax)
            .count()
    }
}

/// Build the design matrix for a pair network over sorted epochs.
pub fn build_design_matrix(
    pairs: &[PairSpec],
    epochs: &[NaiveDate],
    with_topo: bool,
    sensor: &SensorConstants,
) -> Result<DesignMatrix> {
    sensor.validate()?;
    if epochs.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 epochs, got {}",
            epochs.len()
        )));
    }
    if epochs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("epochs must be strictly increasing".into()));
    }
    if pairs.is_empty() {
        return Err(Error::Invalid("design matrix needs at least one pair".into()));
    }
    let n_intervals = epochs.len() - 1;
    let dt_years: Vec<f64> = epochs
        .windows(2)
        .map(|w| temporal_baseline(w[0], w[1]) as f64 / YEAR_DAYS)
        .collect();
    let n_cols = n_intervals + with_topo as usize;
    let mut m = DMatrix::<f64>::zeros(pairs.len(), n_cols);
    for (row, p) in pairs.iter().enumerate() {
        if p.slave_idx >= epochs.len() || p.master_idx >= p.slave_idx {
            return Err(Error::Invalid(format!(
                "pair ({}, {}) does not reference valid sorted epochs (n = {})",
                p.master_idx,
                p.slave_idx,
                epochs.len()
            )));
        }
        for k in p.master_idx..p.slave_idx {
            m[(row, k)] = dt_years[k];
        }
        if with_topo {
            // Displacement (mm) produced per metre of DEM error at this
            // pair's baseline; keeps every column in mm like the observations.
            m[(row, n_intervals)] =
                sensor.displacement_mm(sensor.topo_phase_rad(p.bperp_m, 1.0));
        }
    }
    let svd = m.clone().svd(true, true);
    Ok(DesignMatrix {
        matrix: m,
        svd,
        n_epochs: epochs.len(),
        with_topo,
    })
}

/// Per-pixel solve result. `interval_velocities` are mm/yr; a pixel with no
/// usable observations comes back as nodata (all NaN).
#[derive(Debug, Clone)]
pub struct PixelSolution {
    pub interval_velocities: Vec<f64>,
    pub dem_error_m: Option<f64>,
    pub residual_rms_rad: f64,
    pub valid_obs: usize,
}

impl PixelSolution {
    fn nodata(dm: &DesignMatrix) -> PixelSolution {
        PixelSolution {
            interval_velocities: vec![f64::NAN; dm.n_intervals()],
            dem_error_m: dm.with_topo.then_some(f64::NAN),
            residual_rms_rad: f64::NAN,
            valid_obs: 0,
        }
    }

    pub fn is_nodata(&self) -> bool {
        self.valid_obs == 0
    }
}

/// Minimum-norm least-squares solve of one pixel's phase observations
/// (radians, one per pair). NaN observations are dropped row-wise; an all-NaN
/// pixel yields a nodata solution rather than an error.
pub fn solve_pixel(
    dm: &DesignMatrix,
    obs_rad: &[f64],
    sensor: &SensorConstants,
    truncation: f64,
) -> Result<PixelSolution> {
    if obs_rad.len() != dm.n_pairs() {
        return Err(Error::Invalid(format!(
            "expected {} observations, got {}",
            dm.n_pairs(),
            obs_rad.len()
        )));
    }
    if !(truncation > 0.0 && truncation < 1.0) {
        return Err(Error::Invalid(format!(
            "SVD truncation must lie in (0, 1), got {truncation}"
        )));
    }
    let valid: Vec<usize> = (0..obs_rad.len())
        .filter(|&i| obs_rad[i].is_finite())
        .collect();
    if valid.is_empty() {
        return Ok(PixelSolution::nodata(dm));
    }

    let solve = |svd: &nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
                 rhs: &DVector<f64>|
     -> Result<DVector<f64>> {
        let smax = svd.singular_values.max();
        let eps = if smax > 0.0 { truncation * smax } else { f64::MAX };
        svd.solve(rhs, eps)
            .map_err(|e| Error::Invalid(format!("SVD solve failed: {e}")))
    };

    let x = if valid.len() == obs_rad.len() {
        let d = DVector::from_iterator(
            obs_rad.len(),
            obs_rad.iter().map(|&p| sensor.displacement_mm(p)),
        );
        let x = solve(&dm.svd, &d)?;
        (x, d)
    } else {
        let sub = DMatrix::from_fn(valid.len(), dm.matrix.ncols(), |r, c| {
            dm.matrix[(valid[r], c)]
        });
        let d = DVector::from_iterator(
            valid.len(),
            valid.iter().map(|&i| sensor.displacement_mm(obs_rad[i])),
        );
        let svd = sub.clone().svd(true, true);
        let x = solve(&svd, &d)?;
        (x, d)
    };
    let (x, d_used) = x;

    // Residual in mm over the rows actually used, reported in radians.
    let mut ss = 0.0;
    for (ri, &row) in valid.iter().enumerate() {
        let mut pred = 0.0;
        for c in 0..dm.matrix.ncols() {
            pred += dm.matrix[(row, c)] * x[c];
        }
        let r = pred - d_used[ri];
        ss += r * r;
    }
    let rms_mm = (ss / valid.len() as f64).sqrt();
    let rad_per_mm = sensor.phase_rad(1.0).abs();

    let n_int = dm.n_intervals();
    Ok(PixelSolution {
        interval_velocities: x.iter().take(n_int).copied().collect(),
        dem_error_m: dm.with_topo.then(|| x[n_int]),
        residual_rms_rad: rms_mm * rad_per_mm,
        valid_obs: valid.len(),
    })
}

/// Cumulative displacement from interval velocities: `d[0] = 0`,
/// `d[k] = d[k-1] + v[k-1] * dt_k` in mm.
pub fn integrate_displacement(
    interval_velocities: &[f64],
    epochs: &[NaiveDate],
) -> Result<Vec<f64>> {
    if epochs.len() != interval_velocities.len() + 1 {
        return Err(Error::Invalid(format!(
            "{} interval velocities need {} epochs, got {}",
            interval_velocities.len(),
            interval_velocities.len() + 1,
            epochs.len()
        )));
    }
    let mut d = Vec::with_capacity(epochs.len());
    d.push(0.0);
    for (k, v) in interval_velocities.iter().enumerate() {
        let dt = temporal_baseline(epochs[k], epochs[k + 1]) as f64 / YEAR_DAYS;
        d.push(d[k] + v * dt);
    }
    Ok(d)
}

/// Ordinary least-squares slope of displacement (mm) against time (years
/// since the first epoch). Non-finite samples are skipped; fewer than two
/// valid samples yields None (nodata).
pub fn fit_mean_velocity(displacement_mm: &[f64], epochs: &[NaiveDate]) -> Option<f64> {
    if displacement_mm.len() != epochs.len() {
        return None;
    }
    let mut n = 0.0;
    let (mut st, mut sd, mut stt, mut std_) = (0.0, 0.0, 0.0, 0.0);
    for (d, &e) in displacement_mm.iter().zip(epochs) {
        if !d.is_finite() {
            continue;
        }
        let t = temporal_baseline(epochs[0], e) as f64 / YEAR_DAYS;
        n += 1.0;
        st += t;
        sd += d;
        stt += t * t;
        std_ += t * d;
    }
    if n < 2.0 {
        return None;
    }
    let denom = n * stt - st * st;
    if denom == 0.0 {
        return None;
    }
    Some((n * std_ - st * sd) / denom)
}

/// Inversion options; defaults match the CLI defaults.
#[derive(Debug, Clone)]
pub struct InvertOptions {
    pub with_topo: bool,
    pub allow_disconnected: bool,
    /// Override the automatic (max mean coherence) reference pixel.
    pub ref_pixel: Option<(usize, usize)>,
    pub svd_truncation: f64,
}

impl Default for InvertOptions {
    fn default() -> Self {
        InvertOptions {
            with_topo: false,
            allow_disconnected: false,
            ref_pixel: None,
            svd_truncation: DEFAULT_SVD_TRUNCATION,
        }
    }
}

/// Full time-series solution over a pixel grid.
#[derive(Debug, Clone)]
pub struct TimeSeriesSolution {
    pub epochs: Vec<NaiveDate>,
    /// One raster per epoch, mm; identically 0 at the first (reference) epoch.
    pub displacement: Vec<Raster>,
    /// OLS slope of each pixel's displacement series, mm/yr.
    pub mean_velocity: Raster,
    /// Estimated DEM error in metres when `with_topo` was set.
    pub dem_error: Option<Raster>,
    /// Per-pixel inversion residual RMS, radians.
    pub residual_rms: Raster,
    /// Spatial reference pixel all observations were differenced against.
    pub ref_pixel: (usize, usize),
}

impl TimeSeriesSolution {
    /// Displacement time series (mm) at one pixel, one value per epoch.
    pub fn series_at(&self, x: usize, y: usize) -> Vec<f64> {
        self.displacement.iter().map(|r| r.get(x, y)).collect()
    }
}

/// Invert a stack of unwrapped interferograms.
///
/// Every interferogram is first differenced against the reference pixel
/// (maximum mean coherence across the stack, ties to the lowest row-major
/// index), making the solution relative in space; the first epoch pins it in
/// time. Per-pixel solves run in parallel and the result is independent of
/// scheduling.
pub fn invert_stack(
    unwrapped: &[Raster],
    coherence: &[Raster],
    pairs: &[PairSpec],
    epochs: &[NaiveDate],
    sensor: &SensorConstants,
    options: &InvertOptions,
) -> Result<TimeSeriesSolution> {
    if unwrapped.len() != pairs.len() || coherence.len() != pairs.len() {
        return Err(Error::Invalid(format!(
            "stack size mismatch: {} unwrapped, {} coherence, {} pairs",
            unwrapped.len(),
            coherence.len(),
            pairs.len()
        )));
    }
    if pairs.is_empty() {
        return Err(Error::Invalid("cannot invert an empty stack".into()));
    }
    let shape = &unwrapped[0];
    for r in unwrapped.iter().chain(coherence.iter()) {
        if !r.same_shape(shape) {
            return Err(Error::Invalid(
                "stack rasters do not all share the same shape".into(),
            ));
        }
    }

    let comps = connected_components(epochs.len(), pairs)?;
    if comps.count > 1 && !options.allow_disconnected {
        return Err(Error::Disconnected {
            count: comps.count,
            detail: describe_components(epochs, &comps),
        });
    }

    let (w, h) = (shape.width(), shape.height());
    let n_px = w * h;

    // Mean coherence per pixel decides the reference pixel.
    let ref_idx = match options.ref_pixel {
        Some((x, y)) => {
            if x >= w || y >= h {
                return Err(Error::Invalid(format!(
                    "reference pixel ({x}, {y}) lies outside the {w}x{h} grid"
                )));
            }
            y * w + x
        }
        None => {
            let mut mean = vec![0.0f64; n_px];
            for c in coherence {
                let vals = c.values();
                for i in 0..n_px {
                    let v = vals[i];
                    mean[i] += if c.is_nodata(v) || !v.is_finite() { 0.0 } else { v };
                }
            }
            crate::unwrap::reference_pixel_index(&mean)
        }
    };

    let dm = build_design_matrix(pairs, epochs, options.with_topo, sensor)?;

    // Reference-pixel phase per interferogram.
    let ref_phase: Vec<f64> = unwrapped.iter().map(|u| u.values()[ref_idx]).collect();

    let solutions: Vec<(PixelSolution, Vec<f64>, f64)> = (0..n_px)
        .into_par_iter()
        .map(|i| {
            let obs: Vec<f64> = unwrapped
                .iter()
                .zip(&ref_phase)
                .map(|(u, rp)| {
                    let v = u.values()[i];
                    if u.is_nodata(v) {
                        f64::NAN
                    } else {
                        v - rp
                    }
                })
                .collect();
            let sol = solve_pixel(&dm, &obs, sensor, options.svd_truncation)?;
            if sol.is_nodata() {
                let disp = vec![f64::NAN; epochs.len()];
                return Ok((sol, disp, f64::NAN));
            }
            let disp = integrate_displacement(&sol.interval_velocities, epochs)?;
            let vel = fit_mean_velocity(&disp, epochs).unwrap_or(f64::NAN);
            Ok((sol, disp, vel))
        })
        .collect::<Result<Vec<_>>>()?;

    let blank = || Raster::filled(w, h, shape.dx_m(), shape.dy_m(), f64::NAN, f64::NAN);
    let mut mean_velocity = blank()?;
    let mut residual_rms = blank()?;
    let mut dem_error = if options.with_topo { Some(blank()?) } else { None };
    let mut displacement: Vec<Raster> = (0..epochs.len())
        .map(|_| blank())
        .collect::<Result<Vec<_>>>()?;
    for (i, (sol, disp, vel)) in solutions.iter().enumerate() {
        mean_velocity.values_mut()[i] = *vel;
        residual_rms.values_mut()[i] = sol.residual_rms_rad;
        if let (Some(dem), Some(d)) = (dem_error.as_mut(), sol.dem_error_m) {
            dem.values_mut()[i] = d;
        }
        for (k, r) in displacement.iter_mut().enumerate() {
            r.values_mut()[i] = disp[k];
        }
    }

    Ok(TimeSeriesSolution {
        epochs: epochs.to_vec(),
        displacement,
        mean_velocity,
        dem_error,
        residual_rms,
        ref_pixel: (ref_idx % w, ref_idx / w),
    })
}
