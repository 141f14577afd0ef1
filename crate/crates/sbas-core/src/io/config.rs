//! Flat `key = value` pipeline configuration.
//!
//! Lines are `module.key = value`; `#` starts a comment anywhere on a line.
//! Relative paths resolve against the directory containing the config file.
//! Unknown or duplicate keys are errors — a typo should never silently fall
//! back to a default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::network::NetworkThresholds;
use crate::sim::SensorConstants;

/// Scene geometry and noise parameters for the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub dx_m: f64,
    pub dy_m: f64,
    pub peak_mm_yr: f64,
    pub center_x_px: f64,
    pub center_y_px: f64,
    pub sigma_px: f64,
    pub dem_peak_m: f64,
    pub dem_center_x_px: f64,
    pub dem_center_y_px: f64,
    pub dem_sigma_px: f64,
    pub noise_sigma_rad: f64,
    pub atmosphere_sigma_rad: f64,
    pub atmosphere_corr_px: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 128,
            height: 128,
            dx_m: 30.0,
            dy_m: 30.0,
            peak_mm_yr: -13.5,
            center_x_px: 64.0,
            center_y_px: 64.0,
            sigma_px: 20.0,
            dem_peak_m: 0.0,
            dem_center_x_px: 40.0,
            dem_center_y_px: 88.0,
            dem_sigma_px: 10.0,
            noise_sigma_rad: 0.0,
            atmosphere_sigma_rad: 0.0,
            atmosphere_corr_px: 20.0,
            seed: 42,
        }
    }
}

/// Where the pair network comes from: a ready-made pair list, or an
/// acquisition table filtered by baseline thresholds.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkSource {
    Pairs(PathBuf),
    Acquisitions {
        path: PathBuf,
        thresholds: NetworkThresholds,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnwrapMethod {
    /// Itoh when the interferogram is residue-free, least squares otherwise.
    Auto,
    Itoh,
    Ls,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnwrapConfig {
    pub method: UnwrapMethod,
    pub coh_threshold: f64,
}

impl Default for UnwrapConfig {
    fn default() -> Self {
        UnwrapConfig {
            method: UnwrapMethod::Auto,
            coh_threshold: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertConfig {
    pub with_topo: bool,
    pub allow_disconnected: bool,
    pub ref_pixel: Option<(usize, usize)>,
    pub svd_truncation: f64,
}

impl Default for InvertConfig {
    fn default() -> Self {
        InvertConfig {
            with_topo: false,
            allow_disconnected: false,
            ref_pixel: None,
            svd_truncation: crate::invert::DEFAULT_SVD_TRUNCATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrelateConfig {
    pub production_csv: Option<PathBuf>,
    pub max_lag: i32,
    /// Probe pixels keyed by well id: `correlate.probe.<well> = x,y`.
    pub probes: Vec<(String, (usize, usize))>,
}

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub scene: SceneConfig,
    pub sensor: SensorConstants,
    pub network: Option<NetworkSource>,
    pub unwrap: UnwrapConfig,
    pub invert: InvertConfig,
    pub correlate: CorrelateConfig,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scene: SceneConfig::default(),
            sensor: SensorConstants::default(),
            network: None,
            unwrap: UnwrapConfig::default(),
            invert: InvertConfig::default(),
            correlate: CorrelateConfig {
                max_lag: 3,
                ..CorrelateConfig::default()
            },
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_pixel_pair(v: &str) -> std::result::Result<(usize, usize), String> {
    let (x, y) = v
        .split_once(',')
        .ok_or_else(|| format!("expected \"x,y\", got {v:?}"))?;
    let x = x.trim().parse().map_err(|e| format!("invalid x {:?}: {e}", x.trim()))?;
    let y = y.trim().parse().map_err(|e| format!("invalid y {:?}: {e}", y.trim()))?;
    Ok((x, y))
}

impl PipelineConfig {
    /// Parse a config file; relative paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_str_with_base(&text, base, &path.display().to_string())
    }

    /// Parse config text. `source` names the origin in error messages.
    pub fn from_str_with_base(text: &str, base: &Path, source: &str) -> Result<PipelineConfig> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |msg: String| Error::Config(format!("{source}:{}: {msg}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| fail(format!("expected \"key = value\", got {line:?}")))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(fail("empty key or value".into()));
            }
            if entries.insert(key.clone(), (lineno + 1, value)).is_some() {
                return Err(fail(format!("duplicate key {key:?}")));
            }
        }

        let mut cfg = PipelineConfig::default();
        let mut acq_path: Option<PathBuf> = None;
        let mut pairs_path: Option<PathBuf> = None;
        let mut thresholds = NetworkThresholds::default();

        for (key, (lineno, value)) in &entries {
            let fail =
                |msg: String| Error::Config(format!("{source}:{lineno}: key {key:?}: {msg}"));
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>().map_err(|e| fail(format!("invalid number {v:?}: {e}")))
            };
            let int = |v: &str| -> Result<usize> {
                v.parse::<usize>().map_err(|e| fail(format!("invalid integer {v:?}: {e}")))
            };
            let boolean = |v: &str| -> Result<bool> {
                match v {
                    "true" => Ok(true),
                    "false" => Ok(false),
                    _ => Err(fail(format!("expected true/false, got {v:?}"))),
                }
            };
            let rel_path = |v: &str| base.join(v);

            match key.as_str() {
                "scene.width" => cfg.scene.width = int(value)?,
                "scene.height" => cfg.scene.height = int(value)?,
                "scene.dx_m" => cfg.scene.dx_m = num(value)?,
                "scene.dy_m" => cfg.scene.dy_m = num(value)?,
                "scene.peak_mm_yr" => cfg.scene.peak_mm_yr = num(value)?,
                "scene.center_x_px" => cfg.scene.center_x_px = num(value)?,
                "scene.center_y_px" => cfg.scene.center_y_px = num(value)?,
                "scene.sigma_px" => cfg.scene.sigma_px = num(value)?,
                "scene.dem_peak_m" => cfg.scene.dem_peak_m = num(value)?,
                "scene.dem_center_x_px" => cfg.scene.dem_center_x_px = num(value)?,
                "scene.dem_center_y_px" => cfg.scene.dem_center_y_px = num(value)?,
                "scene.dem_sigma_px" => cfg.scene.dem_sigma_px = num(value)?,
                "scene.noise_sigma_rad" => cfg.scene.noise_sigma_rad = num(value)?,
                "scene.atmosphere_sigma_rad" => cfg.scene.atmosphere_sigma_rad = num(value)?,
                "scene.atmosphere_corr_px" => cfg.scene.atmosphere_corr_px = num(value)?,
                "scene.seed" => {
                    cfg.scene.seed = value
                        .parse()
                        .map_err(|e| fail(format!("invalid seed {value:?}: {e}")))?
                }
                "sensor.wavelength_m" => cfg.sensor.wavelength_m = num(value)?,
                "sensor.slant_range_m" => cfg.sensor.slant_range_m = num(value)?,
                "sensor.incidence_deg" => cfg.sensor.incidence_deg = num(value)?,
                "network.pairs_csv" => pairs_path = Some(rel_path(value)),
                "network.acquisitions_csv" => acq_path = Some(rel_path(value)),
                "network.max_bperp_m" => thresholds.max_bperp_m = num(value)?,
                "network.max_btemp_days" => thresholds.max_btemp_days = num(value)?,
                "network.max_doppler_hz" => thresholds.max_doppler_hz = Some(num(value)?),
                "unwrap.method" => {
                    cfg.unwrap.method = match value.as_str() {
                        "auto" => UnwrapMethod::Auto,
                        "itoh" => UnwrapMethod::Itoh,
                        "ls" => UnwrapMethod::Ls,
                        _ => return Err(fail(format!("expected auto/itoh/ls, got {value:?}"))),
                    }
                }
                "unwrap.coh_threshold" => cfg.unwrap.coh_threshold = num(value)?,
                "invert.with_topo" => cfg.invert.with_topo = boolean(value)?,
                "invert.allow_disconnected" => cfg.invert.allow_disconnected = boolean(value)?,
                "invert.ref_pixel" => {
                    cfg.invert.ref_pixel = Some(parse_pixel_pair(value).map_err(|e| fail(e))?)
                }
                "invert.svd_truncation" => cfg.invert.svd_truncation = num(value)?,
                "correlate.production_csv" => {
                    cfg.correlate.production_csv = Some(rel_path(value))
                }
                "correlate.max_lag" => {
                    cfg.correlate.max_lag = value
                        .parse()
                        .map_err(|e| fail(format!("invalid lag {value:?}: {e}")))?
                }
                "output.dir" => cfg.output_dir = rel_path(value),
                _ => {
                    if let Some(well) = key.strip_prefix("correlate.probe.") {
                        if well.is_empty() {
                            return Err(fail("probe key needs a well id".into()));
                        }
                        cfg.correlate
                            .probes
                            .push((well.to_string(), parse_pixel_pair(value).map_err(|e| fail(e))?));
                    } else {
                        return Err(fail("unknown key".into()));
                    }
                }
            }
        }

        cfg.network = match (pairs_path, acq_path) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(format!(
                    "{source}: network.pairs_csv and network.acquisitions_csv are mutually exclusive"
                )))
            }
            (Some(p), None) => Some(NetworkSource::Pairs(p)),
            (None, Some(p)) => Some(NetworkSource::Acquisitions {
                path: p,
                thresholds,
            }),
            (None, None) => None,
        };

        cfg.validate(source)?;
        Ok(cfg)
    }

    /// Semantic validation: numeric ranges plus existence of referenced files.
    pub fn validate(&self, source: &str) -> Result<()> {
        let fail = |msg: String| Error::Config(format!("{source}: {msg}"));
        let s = &self.scene;
        if s.width == 0 || s.height == 0 {
            return Err(fail(format!("scene dimensions must be positive, got {}x{}", s.width, s.height)));
        }
        if !(s.dx_m > 0.0 && s.dy_m > 0.0) {
            return Err(fail("pixel spacing must be positive".into()));
        }
        if !(s.sigma_px > 0.0) || !(s.dem_sigma_px > 0.0) {
            return Err(fail("bowl and DEM sigmas must be positive".into()));
        }
        if !(s.noise_sigma_rad >= 0.0) || !(s.atmosphere_sigma_rad >= 0.0) {
            return Err(fail("noise and atmosphere sigmas must be non-negative".into()));
        }
        if !(s.atmosphere_corr_px >= 0.0) {
            return Err(fail("atmosphere correlation length must be non-negative".into()));
        }
        self.sensor
            .validate()
            .map_err(|e| fail(format!("sensor: {e}")))?;
        if !(0.0..=1.0).contains(&self.unwrap.coh_threshold) {
            return Err(fail(format!(
                "unwrap.coh_threshold must lie in [0, 1], got {}",
                self.unwrap.coh_threshold
            )));
        }
        if !(self.invert.svd_truncation > 0.0 && self.invert.svd_truncation < 1.0) {
            return Err(fail(format!(
                "invert.svd_truncation must lie in (0, 1), got {}",
                self.invert.svd_truncation
            )));
        }
        if self.correlate.max_lag < 0 {
            return Err(fail(format!(
                "correlate.max_lag must be >= 0, got {}",
                self.correlate.max_lag
            )));
        }
        if let Some((x, y)) = self.invert.ref_pixel {
            if x >= s.width || y >= s.height {
                return Err(fail(format!(
                    "invert.ref_pixel ({x}, {y}) lies outside the {}x{} scene",
                    s.width, s.height
                )));
            }
        }
        for (well, (x, y)) in &self.correlate.probes {
            if *x >= s.width || *y >= s.height {
                return Err(fail(format!(
                    "correlate.probe.{well} ({x}, {y}) lies outside the {}x{} scene",
                    s.width, s.height
                )));
            }
        }
        match &self.network {
            None => return Err(fail(
                "config must set network.pairs_csv or network.acquisitions_csv".into(),
            )),
            Some(NetworkSource::Pairs(p)) => {
                if !p.exists() {
                    return Err(fail(format!("network.pairs_csv does not exist: {}", p.display())));
                }
            }
            Some(NetworkSource::Acquisitions { path, thresholds }) => {
                if !path.exists() {
                    return Err(fail(format!(
                        "network.acquisitions_csv does not exist: {}",
                        path.display()
                    )));
                }
                thresholds
                    .validate()
                    .map_err(|e| fail(format!("network thresholds: {e}")))?;
            }
        }
        if let Some(p) = &self.correlate.production_csv {
            if !p.exists() {
                return Err(fail(format!(
                    "correlate.production_csv does not exist: {}",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("test.conf");
        std::fs::write(&path, body).unwrap();
        path
    }

    fn with_fixture_paths(extra: &str) -> String {
        let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
        format!(
            "network.pairs_csv = {}/envisat_pairs.csv\n{extra}",
            fixtures.display()
        )
    }

    #[test]
    fn parses_keys_comments_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("pairs.csv"), "master,slave,bperp_m\n").unwrap();
        let path = write_config(
            dir.path(),
            "# demo\n\
             scene.peak_mm_yr = -13.5  # bowl depth\n\
             scene.seed = 7\n\
             network.pairs_csv = pairs.csv\n\
             unwrap.method = ls\n\
             invert.ref_pixel = 3, 4\n\
             correlate.probe.78 = 64,64\n",
        );
        let cfg = PipelineConfig::from_file(&path).unwrap();
        assert_eq!(cfg.scene.peak_mm_yr, -13.5);
        assert_eq!(cfg.scene.seed, 7);
        assert_eq!(cfg.unwrap.method, UnwrapMethod::Ls);
        assert_eq!(cfg.invert.ref_pixel, Some((3, 4)));
        assert_eq!(cfg.correlate.probes, vec![("78".to_string(), (64, 64))]);
        match cfg.network {
            Some(NetworkSource::Pairs(p)) => assert_eq!(p, dir.path().join("pairs.csv")),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn unknown_and_duplicate_keys_are_config_errors() {
        let base = Path::new(".");
        let err =
            PipelineConfig::from_str_with_base("scene.widht = 4\n", base, "c").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("unknown key"), "{err}");
        let err = PipelineConfig::from_str_with_base(
            "scene.seed = 1\nscene.seed = 2\n",
            base,
            "c",
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        let err =
            PipelineConfig::from_str_with_base("scene.width is 4\n", base, "c").unwrap_err();
        assert!(err.to_string().contains("key = value"), "{err}");
    }

    #[test]
    fn validation_catches_bad_ranges_and_missing_paths() {
        let base = Path::new(".");
        let text = with_fixture_paths("unwrap.coh_threshold = 1.5\n");
        let err = PipelineConfig::from_str_with_base(&text, base, "c").unwrap_err();
        assert!(err.to_string().contains("coh_threshold"), "{err}");

        let err = PipelineConfig::from_str_with_base(
            "network.pairs_csv = /does/not/exist.csv\n",
            base,
            "c",
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("does not exist"), "{err}");

        let err = PipelineConfig::from_str_with_base("scene.width = 10\n", base, "c");
        assert!(err.is_err()); // no network source configured

        let text = with_fixture_paths("correlate.probe.78 = 4000,0\n");
        let err = PipelineConfig::from_str_with_base(&text, base, "c").unwrap_err();
        assert!(err.to_string().contains("outside"), "{err}");
    }

    #[test]
    fn pairs_and_acquisitions_are_mutually_exclusive() {
        let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
        let text = format!(
            "network.pairs_csv = {0}/envisat_pairs.csv\nnetwork.acquisitions_csv = {0}/acquisitions.csv\n",
            fixtures.display()
        );
        let err = PipelineConfig::from_str_with_base(&text, Path::new("."), "c").unwrap_err();
        assert!(err.to_string().contains("mutually exclusive"), "{err}");
    }

    #[test]
    fn missing_config_file_is_an_io_error() {
        let err = PipelineConfig::from_file(Path::new("/does/not/exist.conf")).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
