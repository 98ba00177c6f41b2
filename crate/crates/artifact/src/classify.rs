//! Component classifiers.

use neoscan_detector::{Tensor, WeightContainer};

use crate::error::{ArtifactError, Result};
use crate::features::ComponentFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactClass {
    Artifactual,
    NonArtifactual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabel {
    pub class: ArtifactClass,
    pub confidence: f64,
    pub rationale: String,
}

impl ComponentLabel {
    pub fn is_artifact(&self) -> bool {
        self.class == ArtifactClass::Artifactual
    }

    pub fn keep(rationale: &str) -> Self {
        Self { class: ArtifactClass::NonArtifactual, confidence: 0.0, rationale: rationale.into() }
    }
}

pub trait ComponentClassifier: Send + Sync {
    fn classify(&self, f: &ComponentFeatures) -> ComponentLabel;

    fn name(&self) -> &str;
}

/// Threshold rules over the scalar features.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRules {
    pub kurtosis: f64,
    pub low_ratio: f64,
    pub line_ratio: f64,
    pub frontal_fraction: f64,
}

impl Default for BaselineRules {
    fn default() -> Self {
        Self { kurtosis: 8.0, low_ratio: 0.7, line_ratio: 0.5, frontal_fraction: 0.5 }
    }
}

/// Signed distance past a threshold, scaled to [-1, 1]: below the threshold
/// it is relative to the threshold, above it relative to `span`.
fn margin(v: f64, thr: f64, span: f64) -> f64 {
    let m = if v >= thr { (v - thr) / span } else { (v - thr) / thr.abs().max(f64::MIN_POSITIVE) };
    m.clamp(-1.0, 1.0)
}

impl BaselineRules {
    /// `(rule name, margin)` per rule; a rule fires when its margin is
    /// non-negative.
    pub fn margins(&self, f: &ComponentFeatures) -> [(&'static str, f64); 3] {
        let frontal = margin(f.frontal_fraction, self.frontal_fraction, 1.0 - self.frontal_fraction);
        [
            ("kurtosis+frontal", margin(f.kurtosis, self.kurtosis, self.kurtosis).min(frontal)),
            ("low-band+frontal", margin(f.low_ratio, self.low_ratio, 1.0 - self.low_ratio).min(frontal)),
            ("line-band", margin(f.line_ratio, self.line_ratio, 1.0 - self.line_ratio)),
        ]
    }
}

impl ComponentClassifier for BaselineRules {
    fn classify(&self, f: &ComponentFeatures) -> ComponentLabel {
        let m = self.margins(f);
        let (rule, best) = m.iter().copied().fold(("", f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let confidence = (1.0 + best) / 2.0;
        if best > 0.0 {
            ComponentLabel { class: ArtifactClass::Artifactual, confidence, rationale: format!("rule {rule}") }
        } else {
            ComponentLabel {
                class: ArtifactClass::NonArtifactual,
                confidence,
                rationale: format!("no rule fired (closest {rule})"),
            }
        }
    }

    fn name(&self) -> &str {
        "baseline"
    }
}

pub const LINEAR_WEIGHT: &str = "artifact.linear.weight";
pub const LINEAR_BIAS: &str = "artifact.linear.bias";

/// Logistic model over [`ComponentFeatures::scalars`], loaded from a
/// weight container.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub weight: [f64; 4],
    pub bias: f64,
}

impl LinearClassifier {
    pub fn from_container(w: &WeightContainer) -> Result<Self> {
        let wt = w.expect(LINEAR_WEIGHT, &[1, 4])?.to_f64();
        let b = w.expect(LINEAR_BIAS, &[1])?.to_f64();
        let weight: [f64; 4] = wt.try_into().map_err(|_| ArtifactError::Classifier("weight length".into()))?;
        Ok(Self { weight, bias: b[0] })
    }

    pub fn to_container(&self) -> WeightContainer {
        let mut w = WeightContainer::new();
        w.insert(LINEAR_WEIGHT, Tensor::new(vec![1, 4], self.weight.iter().map(|&v| v as f32).collect()).unwrap());
        w.insert(LINEAR_BIAS, Tensor::new(vec![1], vec![self.bias as f32]).unwrap());
        w.metadata.insert("kind".into(), "artifact-linear".into());
        w
    }

    pub fn score(&self, f: &ComponentFeatures) -> f64 {
        let z: f64 = self.bias + self.weight.iter().zip(f.scalars()).map(|(w, x)| w * x).sum::<f64>();
        1.0 / (1.0 + (-z).exp())
    }
}

impl ComponentClassifier for LinearClassifier {
    fn classify(&self, f: &ComponentFeatures) -> ComponentLabel {
        let p = self.score(f);
        let class = if p > 0.5 { ArtifactClass::Artifactual } else { ArtifactClass::NonArtifactual };
        ComponentLabel { class, confidence: p.max(1.0 - p), rationale: format!("model score {p:.3}") }
    }

    fn name(&self) -> &str {
        "linear"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(k: f64, low: f64, line: f64, frontal: f64) -> ComponentFeatures {
        let mut f = ComponentFeatures::zeros(0);
        f.kurtosis = k;
        f.low_ratio = low;
        f.line_ratio = line;
        f.frontal_fraction = frontal;
        f
    }

    #[test]
    fn line_component_is_artifact() {
        let l = BaselineRules::default().classify(&feats(-1.5, 0.0, 0.95, 0.25));
        assert!(l.is_artifact());
        assert!(l.rationale.contains("line"));
    }

    #[test]
    fn blink_profile_is_artifact() {
        assert!(BaselineRules::default().classify(&feats(14.0, 0.9, 0.0, 0.95)).is_artifact());
        assert!(BaselineRules::default().classify(&feats(2.0, 0.9, 0.0, 0.95)).is_artifact());
    }

    #[test]
    fn central_spike_wave_is_kept() {
        let l = BaselineRules::default().classify(&feats(4.0, 0.6, 0.01, 0.1));
        assert!(!l.is_artifact());
    }

    #[test]
    fn spiky_but_not_frontal_is_kept() {
        assert!(!BaselineRules::default().classify(&feats(20.0, 0.9, 0.0, 0.2)).is_artifact());
    }

    #[test]
    fn zero_features_sit_at_the_floor() {
        let l = BaselineRules::default().classify(&ComponentFeatures::zeros(0));
        assert!(!l.is_artifact());
        assert_eq!(l.confidence, 0.0);
    }

    #[test]
    fn confidence_in_unit_interval() {
        for f in [feats(1e9, 1.0, 1.0, 1.0), feats(-1e9, -1.0, -1.0, -1.0)] {
            let c = BaselineRules::default().classify(&f).confidence;
            assert!((0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn linear_round_trips_through_container() {
        let c = LinearClassifier { weight: [0.5, 2.0, 8.0, 1.0], bias: -4.0 };
        let back = LinearClassifier::from_container(&c.to_container()).unwrap();
        assert_eq!(back, c);
        assert!(back.classify(&feats(0.0, 0.0, 1.0, 0.0)).is_artifact());
        assert!(!back.classify(&feats(0.0, 0.0, 0.0, 0.0)).is_artifact());
        assert!(LinearClassifier::from_container(&WeightContainer::new()).is_err());
    }
}
