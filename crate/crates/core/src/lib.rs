//! Outlier detection on relative change rates with a two-component Gaussian mixture.
//!
//! The pipeline is [`relative_change_rate`] → [`fit_em`] → [`canonicalize_components`]
//! → [`flag_and_segment`]; [`detect`] runs all of it. [`OnlineDetectorState`] does the same
//! one sample at a time.

pub mod detector;
pub mod error;
pub mod gmm;
pub mod ingest;
pub mod preprocess;

pub use detector::{
    canonicalize_components, detect, detect_rates, failure_probability, flag_and_segment,
    merge_runs, posterior_abnormal, posterior_normal, Alarm, Detection, DetectionConfig,
    DetectionReport, OnlineDetectorState, OnlineStatus,
};
pub use error::{Error, ErrorKind, Result};
pub use gmm::{
    default_init, e_step, fit_default, fit_em, m_step, normal_density, observed_log_likelihood,
    FitConfig, FitResult, GaussianComponent, MixtureParams, ResponsibilityMatrix,
};
pub use ingest::{aggregate_sum, read_csv, read_csv_from, write_csv, Dataset, Layout, ReadOptions};
pub use preprocess::{
    log10_transform, relative_change_rate, relative_change_rate_default, RateSeries, RawSeries,
    Timestamp,
};
