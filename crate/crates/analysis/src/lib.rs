//! Signal-quality analytics for paired recordings.
//!
//! [`aligned_correlation`] finds the best-matching lag between two devices,
//! [`snr_powerline`] and [`snr_alpha`] score single channels, and
//! [`state_report`] aggregates both over labeled state segments.

pub mod correlation;
pub mod error;
pub mod report;
pub mod snr;

pub use correlation::{
    aligned_correlation, aligned_correlation_filtered, bandpass_2_30, pearson, Alignment, CORRELATION_BAND_HZ,
    DEFAULT_MAX_LAG_S,
};
pub use error::{AnalysisError, Result};
pub use report::{
    bootstrap_mean_ci, state_report, DeviceSnr, QualityReport, ReportConfig, SnrPair, State, StateSegment,
    StateSummary,
};
pub use snr::{snr_alpha, snr_alpha_from, snr_powerline, snr_powerline_from, snr_spectrum, Snr};
