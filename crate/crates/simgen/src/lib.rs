//! Synthetic data generation for the monitoring experiments: three-panel
//! truth scenes, spatially correlated Matern lattice layers, the three
//! change types (spatial correlation, edge structure, pixel intensity),
//! noise injection, and detection-delay metrics.
//!
//! Everything is bit-reproducible from `(spec, seed)`, with independent
//! substreams for the spatial layers, the reference set and the online
//! stream, so changing the stream length never perturbs the references.

mod error;
mod matern;
mod metrics;
mod scenario;

pub use error::SimgenError;
pub use matern::{sample_matern, MaternSampler, MaternSpec};
pub use metrics::{score_run, DetectionMetrics};
pub use scenario::{
    base_panels, build_scenario, top_right_block, ScenarioBundle, ScenarioKind, ScenarioSpec,
};
