//! Artifact suppression by independent component analysis.
//!
//! [`fit_ica`] decomposes an 8-channel referential window with extended
//! infomax, [`extract_features`] describes each component (waveform, scalp
//! topomap, spectrum and scalar ratios), a [`ComponentClassifier`] labels it
//! and [`remove_artifacts`] reconstructs the window without the artifactual
//! components.

pub mod classify;
pub mod clean;
pub mod error;
pub mod features;
pub mod ica;

pub use classify::{ArtifactClass, BaselineRules, ComponentClassifier, ComponentLabel, LinearClassifier};
pub use clean::{clean_window, remove_artifacts, CleanOutput, Cleaner, CLEAN_WINDOW_S};
pub use error::{ArtifactError, Result};
pub use features::{excess_kurtosis, extract_all, extract_features, ComponentFeatures};
pub use ica::{amari_index, fit_ica, IcaConfig, IcaModel, IcaReport, SourceKind};
