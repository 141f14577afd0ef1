//! Shared builders for the benchmarks.

use std::path::Path;

use chrono::NaiveDate;
use sbas_core::network::load_pairs;
use sbas_core::sim::{make_atmosphere, make_velocity_bowl};
use sbas_core::{PairSpec, Raster, SceneTruth, SensorConstants};

pub fn fixture_network() -> (Vec<NaiveDate>, Vec<PairSpec>) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/envisat_pairs.csv");
    load_pairs(&path).expect("fixture pair list parses")
}

/// Noisy truth over an n x n grid, sized for benchmarking single operations.
pub fn truth(n: usize, n_epochs: usize) -> SceneTruth {
    let velocity = make_velocity_bowl(
        n,
        n,
        30.0,
        30.0,
        -13.5,
        (n as f64 / 2.0, n as f64 / 2.0),
        n as f64 / 6.0,
    )
    .unwrap();
    let dem_error = make_velocity_bowl(
        n,
        n,
        30.0,
        30.0,
        10.0,
        (n as f64 / 3.0, 2.0 * n as f64 / 3.0),
        n as f64 / 12.0,
    )
    .unwrap();
    let atmosphere: Vec<Raster> = (0..n_epochs)
        .map(|e| make_atmosphere(n, n, 30.0, 30.0, 20.0, 0.5, 42, e as u64).unwrap())
        .collect();
    SceneTruth {
        velocity_mm_yr: velocity,
        dem_error_m: dem_error,
        atmosphere_rad: atmosphere,
        noise_sigma_rad: 0.3,
        sensor: SensorConstants::default(),
        seed: 42,
    }
}
