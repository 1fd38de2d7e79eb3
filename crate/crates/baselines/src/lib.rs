//! Classical outlier detectors behind one interface, and a harness comparing them with the
//! mixture-model detector on a labelled simulation trace.

pub mod error;
pub mod harness;
pub mod methods;

pub use error::{BaselineError, Result};
pub use harness::{run_comparison, ComparisonConfig, ComparisonRow, ComparisonTable, Evaluation, SCHEMA_VERSION};
pub use methods::{
    iforest_detector, kde_detector, kmeans_detector, knn_detector, lrm_detector, run_detector, BandwidthRule,
    BaselineResult, Emodm, IsolationForest, KMeans, Kde, Knn, Lof, Lrm, OutlierDetector,
};
