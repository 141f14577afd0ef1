//! Forward simulation of wrapped interferograms from a known scene.
//!
//! The phase model per pair (master m, slave s) is
//!
//! ```text
//! phi = wrap( phi_defo + phi_topo + atm[s] - atm[m] + noise )
//! phi_defo = -(4 pi / lambda) * v * dt          (v: LOS velocity, dt: years)
//! phi_topo =  (4 pi / lambda) * bperp / (R sin theta) * dh
//! ```
//!
//! LOS displacement is positive toward the satellite, so subsidence carries a
//! negative velocity and produces positive interferometric phase. All noise
//! is counter-keyed (see [`crate::rng`]), making simulation output identical
//! across thread counts and evaluation order.

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{temporal_baseline, PairSpec};
use crate::raster::Raster;
use crate::rng;

/// Days per Julian year, used for all day->year conversions.
pub const YEAR_DAYS: f64 = 365.25;

/// Radar geometry constants (C-band stripmap defaults).
#[derive(Debug, Clone, PartialEq)]
pub struct SensorConstants {
    pub wavelength_m: f64,
    pub slant_range_m: f64,
    pub incidence_deg: f64,
}

impl Default for SensorConstants {
    fn default() -> Self {
        SensorConstants {
            wavelength_m: 0.05624,
            slant_range_m: 850_000.0,
            incidence_deg: 23.0,
        }
    }
}

impl SensorConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_m > 0.0) || !(self.slant_range_m > 0.0) {
            return Err(Error::Invalid(format!(
                "wavelength and slant range must be positive, got {} / {}",
                self.wavelength_m, self.slant_range_m
            )));
        }
        if !(self.incidence_deg > 0.0 && self.incidence_deg < 90.0) {
            return Err(Error::Invalid(format!(
                "incidence angle must lie in (0, 90) degrees, got {}",
                self.incidence_deg
            )));
        }
        Ok(())
    }

    /// Phase of a steady LOS motion `v_mm_yr` observed over `btemp_days`.
    pub fn defo_phase_rad(&self, v_mm_yr: f64, btemp_days: f64) -> f64 {
        let four_pi = 4.0 * std::f64::consts::PI;
        -(four_pi / self.wavelength_m) * (v_mm_yr * 1e-3) * (btemp_days / YEAR_DAYS)
    }

    /// Residual-topography phase of a DEM error `dh_m` at baseline `bperp_m`.
    pub fn topo_phase_rad(&self, bperp_m: f64, dh_m: f64) -> f64 {
        let four_pi = 4.0 * std::f64::consts::PI;
        (four_pi / self.wavelength_m) * bperp_m
            / (self.slant_range_m * self.incidence_deg.to_radians().sin())
            * dh_m
    }

    /// LOS displacement equivalent of an unwrapped phase: `d = -lambda phi / 4 pi`.
    pub fn displacement_mm(&self, phase_rad: f64) -> f64 {
        -(self.wavelength_m * 1e3) * phase_rad / (4.0 * std::f64::consts::PI)
    }

    /// Phase equivalent of a LOS displacement in mm (inverse of
    /// [`Self::displacement_mm`]).
    pub fn phase_rad(&self, displacement_mm: f64) -> f64 {
        -displacement_mm * 4.0 * std::f64::consts::PI / (self.wavelength_m * 1e3)
    }
}

/// Principal phase value in (-pi, pi]; -pi maps to +pi.
#[inline]
pub(crate) fn wrap_value(x: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let y = x.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y - two_pi
    } else {
        y
    }
}

/// Wrap a phase to (-pi, pi]. Errors on non-finite input.
pub fn wrap(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Invalid(format!("cannot wrap non-finite phase {x}")));
    }
    Ok(wrap_value(x))
}

/// Ground-truth scene shared by every simulated pair.
#[derive(Debug, Clone)]
pub struct SceneTruth {
    /// Mean LOS velocity in mm/yr (negative = subsidence).
    pub velocity_mm_yr: Raster,
    /// DEM error in metres.
    pub dem_error_m: Raster,
    /// One atmospheric phase screen per epoch, radians.
    pub atmosphere_rad: Vec<Raster>,
    /// Per-pixel phase noise standard deviation, radians.
    pub noise_sigma_rad: f64,
    pub sensor: SensorConstants,
    pub seed: u64,
}

impl SceneTruth {
    /// Check internal consistency against an epoch list length.
    pub fn validate(&self, n_epochs: usize) -> Result<()> {
        self.sensor.validate()?;
        if !self.dem_error_m.same_shape(&self.velocity_mm_yr) {
            return Err(Error::Invalid(
                "DEM error raster does not match the velocity raster shape".into(),
            ));
        }
        if self.atmosphere_rad.len() != n_epochs {
            return Err(Error::Invalid(format!(
                "expected {n_epochs} atmospheric screens, got {}",
                self.atmosphere_rad.len()
            )));
        }
        for (i, a) in self.atmosphere_rad.iter().enumerate() {
            if !a.same_shape(&self.velocity_mm_yr) {
                return Err(Error::Invalid(format!(
                    "atmospheric screen {i} does not match the velocity raster shape"
                )));
            }
        }
        if !(self.noise_sigma_rad >= 0.0) {
            return Err(Error::Invalid(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma_rad
            )));
        }
        Ok(())
    }
}

/// Gaussian surface `peak * exp(-r^2 / 2 sigma^2)` around a pixel center.
/// Doubles as the subsidence bowl (peak in mm/yr) and as a DEM-error bump
/// (peak in metres).
pub fn make_velocity_bowl(
    width: usize,
    height: usize,
    dx_m: f64,
    dy_m: f64,
    peak: f64,
    center_px: (f64, f64),
    sigma_px: f64,
) -> Result<Raster> {
    if !(sigma_px > 0.0) {
        return Err(Error::Invalid(format!(
            "bowl sigma must be positive, got {sigma_px}"
        )));
    }
    let mut r = Raster::zeros(width, height, dx_m, dy_m)?;
    let inv = 1.0 / (2.0 * sigma_px * sigma_px);
    let vals = r.values_mut();
    for y in 0..height {
        for x in 0..width {
            let dx = x as f64 - center_px.0;
            let dy = y as f64 - center_px.1;
            vals[y * width + x] = peak * (-(dx * dx + dy * dy) * inv).exp();
        }
    }
    Ok(r)
}

/// Correlated atmospheric phase screen: white Gaussian noise convolved with a
/// separable Gaussian kernel (std `corr_px`, truncated at 3 sigma with edge
/// renormalization), recentred to zero mean and rescaled so the sample
/// standard deviation equals `sigma_rad` exactly. `corr_px = 0` yields white
/// noise; `sigma_rad = 0` yields an all-zero screen. `stream` keys the noise
/// (use the epoch index).
pub fn make_atmosphere(
    width: usize,
    height: usize,
    dx_m: f64,
    dy_m: f64,
    corr_px: f64,
    sigma_rad: f64,
    seed: u64,
    stream: u64,
) -> Result<Raster> {
    if !(corr_px >= 0.0) {
        return Err(Error::Invalid(format!(
            "correlation length must be non-negative, got {corr_px}"
        )));
    }
    if !(sigma_rad >= 0.0) {
        return Err(Error::Invalid(format!(
            "atmosphere sigma must be non-negative, got {sigma_rad}"
        )));
    }
    let mut r = Raster::zeros(width, height, dx_m, dy_m)?;
    if sigma_rad == 0.0 {
        return Ok(r);
    }

    let rng_stream = rng::atmosphere_stream(stream as usize);
    let mut field: Vec<f64> = (0..width * height)
        .map(|i| rng::standard_normal(seed, rng_stream, i as u64))
        .collect();

    if corr_px > 0.0 {
        let radius = (3.0 * corr_px).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|k| (-(k * k) as f64 / (2.0 * corr_px * corr_px)).exp())
            .collect();
        // Horizontal pass.
        let mut pass = vec![0.0; width * height];
        pass.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
            for x in 0..width {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (ki, w) in kernel.iter().enumerate() {
                    let xx = x as isize + ki as isize - radius;
                    if xx >= 0 && (xx as usize) < width {
                        acc += w * field[y * width + xx as usize];
                        wsum += w;
                    }
                }
                row[x] = acc / wsum;
            }
        });
        // Vertical pass; parallelise over output rows so writes stay disjoint.
        let mut out = vec![0.0; width * height];
        out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
            for x in 0..width {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (ki, w) in kernel.iter().enumerate() {
                    let yy = y as isize + ki as isize - radius;
                    if yy >= 0 && (yy as usize) < height {
                        acc += w * pass[yy as usize * width + x];
                        wsum += w;
                    }
                }
                row[x] = acc / wsum;
            }
        });
        field = out;
    }

    // Recentre and rescale sequentially so reductions are order-deterministic.
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    for v in &mut field {
        *v -= mean;
    }
    let var = field.iter().map(|v| v * v).sum::<f64>() / n;
    if var > 0.0 {
        let scale = sigma_rad / var.sqrt();
        for v in &mut field {
            *v *= scale;
        }
    }
    r.values_mut().copy_from_slice(&field);
    Ok(r)
}

/// One simulated interferogram: wrapped phase plus a coherence estimate.
#[derive(Debug, Clone)]
pub struct WrappedInterferogram {
    pub pair: PairSpec,
    /// Wrapped phase, strictly within (-pi, pi].
    pub phase: Raster,
    /// Coherence in [0, 1]; here `exp(-sigma_noise^2)` everywhere.
    pub coherence: Raster,
}

fn check_pair(truth: &SceneTruth, epochs: &[NaiveDate], pair: &PairSpec) -> Result<()> {
    truth.validate(epochs.len())?;
    if pair.master_idx >= epochs.len() || pair.slave_idx >= epochs.len() {
        return Err(Error::Invalid(format!(
            "pair ({}, {}) references epochs outside 0..{}",
            pair.master_idx,
            pair.slave_idx,
            epochs.len()
        )));
    }
    if pair.master_idx >= pair.slave_idx {
        return Err(Error::Invalid(format!(
            "pair master index {} must precede slave index {}",
            pair.master_idx, pair.slave_idx
        )));
    }
    let btemp = temporal_baseline(epochs[pair.master_idx], epochs[pair.slave_idx]);
    if btemp != pair.btemp_days {
        return Err(Error::Invalid(format!(
            "pair temporal baseline {} does not match epoch dates ({} days apart)",
            pair.btemp_days, btemp
        )));
    }
    Ok(())
}

/// Noise-free unwrapped model phase for one pair (deformation + residual
/// topography + differential atmosphere).
pub fn model_phase(truth: &SceneTruth, epochs: &[NaiveDate], pair: &PairSpec) -> Result<Raster> {
    check_pair(truth, epochs, pair)?;
    let v = &truth.velocity_mm_yr;
    let (width, height) = (v.width(), v.height());
    let mut out = Raster::zeros(width, height, v.dx_m(), v.dy_m())?;
    let atm_m = truth.atmosphere_rad[pair.master_idx].values();
    let atm_s = truth.atmosphere_rad[pair.slave_idx].values();
    let vel = v.values();
    let dem = truth.dem_error_m.values();
    let sensor = &truth.sensor;
    let btemp = pair.btemp_days as f64;
    let bperp = pair.bperp_m;
    out.values_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..width {
                let i = y * width + x;
                row[x] = sensor.defo_phase_rad(vel[i], btemp)
                    + sensor.topo_phase_rad(bperp, dem[i])
                    + (atm_s[i] - atm_m[i]);
            }
        });
    Ok(out)
}

/// Simulate one wrapped interferogram with per-pixel phase noise.
pub fn forward_interferogram(
    truth: &SceneTruth,
    epochs: &[NaiveDate],
    pair: &PairSpec,
) -> Result<WrappedInterferogram> {
    let mut phase = model_phase(truth, epochs, pair)?;
    let (width, height) = (phase.width(), phase.height());
    let sigma = truth.noise_sigma_rad;
    let stream = rng::pair_stream(pair.master_idx, pair.slave_idx);
    let seed = truth.seed;
    phase
        .values_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..width {
                let i = (y * width + x) as u64;
                let noisy = row[x] + sigma * rng::standard_normal(seed, stream, i);
                row[x] = wrap_value(noisy);
            }
        });
    let coherence = Raster::filled(
        width,
        height,
        phase.dx_m(),
        phase.dy_m(),
        f64::NAN,
        (-sigma * sigma).exp(),
    )?;
    Ok(WrappedInterferogram {
        pair: pair.clone(),
        phase,
        coherence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_compact_date;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        parse_compact_date(s).unwrap()
    }

    fn small_truth(noise_sigma: f64, n_epochs: usize) -> (SceneTruth, Vec<NaiveDate>) {
        let velocity =
            make_velocity_bowl(16, 16, 30.0, 30.0, -13.5, (8.0, 8.0), 4.0).unwrap();
        let dem = make_velocity_bowl(16, 16, 30.0, 30.0, 10.0, (4.0, 12.0), 3.0).unwrap();
        let atmosphere: Vec<Raster> = (0..n_epochs)
            .map(|e| make_atmosphere(16, 16, 30.0, 30.0, 4.0, 0.5, 42, e as u64).unwrap())
            .collect();
        let epochs: Vec<NaiveDate> = (0..n_epochs)
            .map(|i| d("20030926") + chrono::Days::new(35 * i as u64))
            .collect();
        (
            SceneTruth {
                velocity_mm_yr: velocity,
                dem_error_m: dem,
                atmosphere_rad: atmosphere,
                noise_sigma_rad: noise_sigma,
                sensor: SensorConstants::default(),
                seed: 42,
            },
            epochs,
        )
    }

    #[test]
    fn wrap_matches_hand_values() {
        assert_relative_eq!(wrap(7.5).unwrap(), 1.2168146928204138, epsilon = 1e-15);
        assert_eq!(wrap(-std::f64::consts::PI).unwrap(), std::f64::consts::PI);
        assert_eq!(wrap(std::f64::consts::PI).unwrap(), std::f64::consts::PI);
        assert_eq!(wrap(0.0).unwrap(), 0.0);
        assert!(wrap(f64::NAN).is_err());
        assert!(wrap(f64::INFINITY).is_err());
    }

    #[test]
    fn phase_model_matches_hand_values() {
        let s = SensorConstants::default();
        // 13.5 mm/yr of subsidence over 70 days is about 0.58 rad of phase.
        assert_relative_eq!(
            s.defo_phase_rad(-13.5, 70.0),
            0.5781042150716844,
            epsilon = 1e-12
        );
        // 10 m of DEM error at a 100 m baseline.
        assert_relative_eq!(
            s.topo_phase_rad(100.0, 10.0),
            0.6727715450288243,
            epsilon = 1e-12
        );
        // displacement_mm inverts phase_rad, and the sign convention holds:
        // positive phase = motion away from the satellite.
        assert_relative_eq!(s.displacement_mm(s.phase_rad(-4.2)), -4.2, epsilon = 1e-12);
        assert!(s.displacement_mm(1.0) < 0.0);
    }

    #[test]
    fn bowl_hits_peak_and_three_sigma_point() {
        let bowl = make_velocity_bowl(128, 128, 30.0, 30.0, -13.5, (64.0, 64.0), 20.0).unwrap();
        assert_eq!(bowl.get(64, 64), -13.5);
        assert_relative_eq!(
            bowl.get(124, 64),
            -0.14997145326627112,
            epsilon = 1e-15
        );
        assert!(make_velocity_bowl(8, 8, 30.0, 30.0, 1.0, (4.0, 4.0), 0.0).is_err());
    }

    #[test]
    fn atmosphere_screen_statistics() {
        let a = make_atmosphere(256, 256, 30.0, 30.0, 20.0, 0.5, 42, 0).unwrap();
        let n = a.len() as f64;
        let mean = a.values().iter().sum::<f64>() / n;
        let var = a.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12, "mean {mean}");
        assert_relative_eq!(var.sqrt(), 0.5, epsilon = 1e-12);
        // Neighbouring pixels of a 20 px screen are strongly correlated.
        let mut num = 0.0;
        let mut den = 0.0;
        for y in 0..256 {
            for x in 0..255 {
                num += a.get(x, y) * a.get(x + 1, y);
                den += a.get(x, y) * a.get(x, y);
            }
        }
        assert!(num / den > 0.9, "lag-1 autocorrelation {}", num / den);

        let zero = make_atmosphere(64, 64, 30.0, 30.0, 20.0, 0.0, 42, 0).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        assert!(make_atmosphere(64, 64, 30.0, 30.0, -1.0, 0.5, 42, 0).is_err());
    }

    #[test]
    fn atmosphere_differs_per_epoch_and_seed() {
        let a = make_atmosphere(32, 32, 30.0, 30.0, 5.0, 0.5, 42, 0).unwrap();
        let b = make_atmosphere(32, 32, 30.0, 30.0, 5.0, 0.5, 42, 1).unwrap();
        let c = make_atmosphere(32, 32, 30.0, 30.0, 5.0, 0.5, 43, 0).unwrap();
        assert_ne!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn forward_is_wrapped_and_noise_free_case_matches_model() {
        let (mut truth, epochs) = small_truth(0.0, 3);
        truth.noise_sigma_rad = 0.0;
        let pair = PairSpec {
            master_idx: 0,
            slave_idx: 2,
            bperp_m: 120.0,
            btemp_days: 70,
        };
        let model = model_phase(&truth, &epochs, &pair).unwrap();
        let ifg = forward_interferogram(&truth, &epochs, &pair).unwrap();
        for (&w, &m) in ifg.phase.values().iter().zip(model.values()) {
            assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
            assert_relative_eq!(w, wrap_value(m), epsilon = 1e-12);
        }
        assert_eq!(ifg.coherence.get(3, 3), 1.0);

        let (truth, epochs) = small_truth(0.3, 3);
        let ifg = forward_interferogram(&truth, &epochs, &pair).unwrap();
        assert_relative_eq!(ifg.coherence.get(3, 3), (-0.09f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn forward_is_deterministic_across_thread_counts_and_order() {
        let (truth, epochs) = small_truth(0.3, 4);
        let pairs = vec![
            PairSpec { master_idx: 0, slave_idx: 1, bperp_m: 35.0, btemp_days: 35 },
            PairSpec { master_idx: 1, slave_idx: 3, bperp_m: -80.0, btemp_days: 70 },
            PairSpec { master_idx: 0, slave_idx: 2, bperp_m: 10.0, btemp_days: 70 },
        ];
        let run = |threads: usize, order: &[usize]| -> Vec<Vec<u64>> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mut out: Vec<(usize, Vec<u64>)> = order
                    .iter()
                    .map(|&i| {
                        let ifg = forward_interferogram(&truth, &epochs, &pairs[i]).unwrap();
                        (i, ifg.phase.values().iter().map(|v| v.to_bits()).collect())
                    })
                    .collect();
                out.sort_by_key(|(i, _)| *i);
                out.into_iter().map(|(_, v)| v).collect()
            })
        };
        let a = run(1, &[0, 1, 2]);
        let b = run(4, &[2, 0, 1]);
        assert_eq!(a, b);
    }

    #[test]
    fn forward_validates_pair_consistency() {
        let (truth, epochs) = small_truth(0.0, 3);
        let bad_btemp = PairSpec { master_idx: 0, slave_idx: 1, bperp_m: 0.0, btemp_days: 99 };
        assert!(forward_interferogram(&truth, &epochs, &bad_btemp).is_err());
        let bad_idx = PairSpec { master_idx: 0, slave_idx: 9, bperp_m: 0.0, btemp_days: 35 };
        assert!(forward_interferogram(&truth, &epochs, &bad_idx).is_err());
        let reversed = PairSpec { master_idx: 2, slave_idx: 1, bperp_m: 0.0, btemp_days: 35 };
        assert!(forward_interferogram(&truth, &epochs, &reversed).is_err());
    }

    proptest! {
        /// wrap is idempotent and lands in (-pi, pi].
        #[test]
        fn wrap_is_idempotent(x in -1e6f64..1e6) {
            let w = wrap(x).unwrap();
            prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
            prop_assert_eq!(wrap(w).unwrap().to_bits(), w.to_bits());
        }

        /// wrap(x + 2 pi k) == wrap(x) up to float noise.
        #[test]
        fn wrap_is_periodic(x in -10.0f64..10.0, k in -50i64..50) {
            let w1 = wrap(x).unwrap();
            let w2 = wrap(x + std::f64::consts::TAU * k as f64).unwrap();
            // Wrapped values near the +pi boundary may legitimately land on
            // opposite ends, so compare circularly.
            let diff = wrap_value(w1 - w2).abs();
            prop_assert!(diff < 1e-9, "x={x} k={k} w1={w1} w2={w2}");
        }
    }
}
