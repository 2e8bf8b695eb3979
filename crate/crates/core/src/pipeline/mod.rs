//! Feature preprocessing, synthetic data, metrics and the iterative
//! labeling harness.

pub mod features;
pub mod harness;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod synth;

pub use features::{fit_feature_pipeline, FeatureTransform};
pub use harness::{
    mean_aupc, run_experiment, run_prepared, run_sweep, sweep_prepared, ExperimentData, ExperimentOutput, RawData, SelectionRecord,
    SweepParam, SweepPoint,
};
pub use manifest::{Algorithm, ExperimentManifest, DEFAULT_SEED};
pub use metrics::{aupc, metrics, CurvePoint, Metrics, PerformanceCurve};
pub use synth::{gen_synthetic, ShiftSpec, SyntheticData};
