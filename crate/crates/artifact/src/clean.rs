//! Artifact-suppressed reconstruction.

use ndarray::{Array2, ArrayView2};

use neoscan_core::montage::ElectrodeSet;

use crate::classify::{ComponentClassifier, ComponentLabel};
use crate::error::{ArtifactError, Result};
use crate::features::{extract_all, ComponentFeatures};
use crate::ica::{fit_ica, IcaConfig, IcaModel};

/// Analysis window for a fresh decomposition.
pub const CLEAN_WINDOW_S: f64 = 120.0;

/// Zeroes the activations of artifactual components and reconstructs.
pub fn remove_artifacts(x: ArrayView2<f64>, labels: &[ComponentLabel], model: &IcaModel) -> Result<Array2<f64>> {
    if labels.len() != model.n_components() {
        return Err(ArtifactError::Input(format!(
            "{} labels for {} components",
            labels.len(),
            model.n_components()
        )));
    }
    if !labels.iter().any(ComponentLabel::is_artifact) {
        if x.nrows() != model.n_components() {
            return Err(ArtifactError::Input(format!("expected {} rows", model.n_components())));
        }
        return Ok(x.to_owned());
    }
    let mut s = model.transform(x)?;
    for (k, l) in labels.iter().enumerate() {
        if l.is_artifact() {
            s.row_mut(k).fill(0.0);
        }
    }
    model.inverse_transform(s.view())
}

#[derive(Debug, Clone)]
pub struct CleanOutput {
    pub cleaned: Array2<f64>,
    pub model: IcaModel,
    pub features: Vec<ComponentFeatures>,
    pub labels: Vec<ComponentLabel>,
    /// Set when the window was cleaned with a model fitted on earlier data.
    pub stale: bool,
}

impl CleanOutput {
    pub fn n_removed(&self) -> usize {
        self.labels.iter().filter(|l| l.is_artifact()).count()
    }
}

/// Fit, describe, classify and clean one referential window.
pub fn clean_window(
    x: ArrayView2<f64>,
    fs_hz: f64,
    electrodes: &ElectrodeSet,
    classifier: &dyn ComponentClassifier,
    cfg: &IcaConfig,
) -> Result<CleanOutput> {
    let model = fit_ica(x, cfg)?;
    apply_model(x, fs_hz, electrodes, classifier, model, false)
}

fn apply_model(
    x: ArrayView2<f64>,
    fs_hz: f64,
    electrodes: &ElectrodeSet,
    classifier: &dyn ComponentClassifier,
    model: IcaModel,
    stale: bool,
) -> Result<CleanOutput> {
    let s = model.transform(x)?;
    let features = extract_all(&model, s.view(), electrodes, fs_hz)?;
    let labels: Vec<ComponentLabel> = features.iter().map(|f| classifier.classify(f)).collect();
    let cleaned = remove_artifacts(x, &labels, &model)?;
    Ok(CleanOutput { cleaned, model, features, labels, stale })
}

/// Live-buffer cleaner: refits on windows of at least [`CLEAN_WINDOW_S`] and
/// falls back to the last fitted model for shorter buffers.
pub struct Cleaner {
    pub fs_hz: f64,
    pub electrodes: ElectrodeSet,
    pub ica: IcaConfig,
    classifier: Box<dyn ComponentClassifier>,
    last: Option<IcaModel>,
}

impl Cleaner {
    pub fn new(fs_hz: f64, electrodes: ElectrodeSet, classifier: Box<dyn ComponentClassifier>, ica: IcaConfig) -> Self {
        Self { fs_hz, electrodes, ica, classifier, last: None }
    }

    pub fn has_model(&self) -> bool {
        self.last.is_some()
    }

    pub fn clean(&mut self, x: ArrayView2<f64>) -> Result<CleanOutput> {
        let full = (CLEAN_WINDOW_S * self.fs_hz) as usize;
        if x.ncols() >= full {
            let out = clean_window(x, self.fs_hz, &self.electrodes, self.classifier.as_ref(), &self.ica)?;
            self.last = Some(out.model.clone());
            return Ok(out);
        }
        let model = self.last.clone().ok_or_else(|| {
            ArtifactError::Input(format!("buffer of {} samples is too short and no model is fitted yet", x.ncols()))
        })?;
        log::warn!("cleaning {:.1} s buffer with a model fitted on earlier data", x.ncols() as f64 / self.fs_hz);
        apply_model(x, self.fs_hz, &self.electrodes, self.classifier.as_ref(), model, true)
    }
}
