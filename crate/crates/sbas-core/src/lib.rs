//! Small-baseline InSAR time-series toolkit.
//!
//! The crate simulates wrapped interferograms over a known deformation truth,
//! builds the small-baseline pair network, unwraps phase, inverts per-pixel
//! displacement time series and mean LOS velocity by truncated SVD, and
//! correlates the recovered motion against well production records. Every
//! algorithm is deterministic for a given seed, independent of thread count.

pub mod correlate;
pub mod error;
pub mod invert;
pub mod io;
pub mod network;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod sim;
pub mod unwrap;

pub use correlate::{CorrelationReport, ProductionRecord};
pub use error::{Error, Result};
pub use invert::{DesignMatrix, InvertOptions, PixelSolution, TimeSeriesSolution};
pub use io::config::{
    CorrelateConfig, InvertConfig, NetworkSource, PipelineConfig, SceneConfig, UnwrapConfig,
    UnwrapMethod,
};
pub use io::manifest::Manifest;
pub use network::{Acquisition, NetworkThresholds, PairSpec};
pub use raster::Raster;
pub use sim::{SceneTruth, SensorConstants, WrappedInterferogram, YEAR_DAYS};
pub use unwrap::ResidueMap;
