//! Per-component descriptors for artifact classification.

use ndarray::{Array2, ArrayView2};

use neoscan_core::dsp::{welch_psd, SpectralMethod, Spectrum};
use neoscan_core::montage::ElectrodeSet;

use crate::error::{ArtifactError, Result};
use crate::ica::IcaModel;

pub const TOPOMAP_SIZE: usize = 32;
pub const LOW_BAND_HZ: (f64, f64) = (0.5, 4.0);
pub const LINE_BAND_HZ: (f64, f64) = (48.0, 52.0);
/// Lower edge of the reference band for the power ratios; DC is excluded.
pub const RATIO_FLOOR_HZ: f64 = 0.5;
pub const FRONTAL: [&str; 2] = ["Fp1", "Fp2"];

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFeatures {
    pub index: usize,
    pub waveform: Vec<f64>,
    /// Row 0 is the back of the head, row 31 the nose; cells outside the
    /// unit disc hold 0.
    pub topomap: Array2<f64>,
    pub psd: Spectrum,
    pub kurtosis: f64,
    pub low_ratio: f64,
    pub line_ratio: f64,
    /// Share of the squared scalp pattern on the frontal electrodes.
    pub frontal_fraction: f64,
}

impl ComponentFeatures {
    /// `[kurtosis, low_ratio, line_ratio, frontal_fraction]`.
    pub fn scalars(&self) -> [f64; 4] {
        [self.kurtosis, self.low_ratio, self.line_ratio, self.frontal_fraction]
    }

    /// All-zero descriptor, mostly for tests.
    pub fn zeros(index: usize) -> Self {
        Self {
            index,
            waveform: vec![],
            topomap: Array2::zeros((TOPOMAP_SIZE, TOPOMAP_SIZE)),
            psd: Spectrum { freqs_hz: vec![0.0], power: vec![0.0], method: SpectralMethod::Welch },
            kurtosis: 0.0,
            low_ratio: 0.0,
            line_ratio: 0.0,
            frontal_fraction: 0.0,
        }
    }
}

pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.is_empty() {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    if m2 > 0.0 {
        m4 / (m2 * m2) - 3.0
    } else {
        0.0
    }
}

/// Grid coordinate of a cell centre.
pub fn grid_coord(i: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / TOPOMAP_SIZE as f64
}

/// Grid cell containing a unit-disc position, as `(row, col)`.
pub fn grid_cell(p: (f64, f64)) -> (usize, usize) {
    let idx = |v: f64| (((v + 1.0) / 2.0 * TOPOMAP_SIZE as f64) as usize).min(TOPOMAP_SIZE - 1);
    (idx(p.1), idx(p.0))
}

/// Inverse-distance-squared interpolation of electrode weights onto the
/// 32 x 32 grid spanning the unit disc.
pub fn idw_topomap(points: &[(f64, f64)], values: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((TOPOMAP_SIZE, TOPOMAP_SIZE), |(r, c)| {
        let (x, y) = (grid_coord(c), grid_coord(r));
        if x * x + y * y > 1.0 {
            return 0.0;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (&(px, py), &v) in points.iter().zip(values) {
            let d2 = (x - px).powi(2) + (y - py).powi(2);
            if d2 < 1e-12 {
                return v;
            }
            num += v / d2;
            den += 1.0 / d2;
        }
        num / den
    })
}

fn ratio(psd: &Spectrum, band: (f64, f64)) -> f64 {
    let nyq = psd.freqs_hz.last().copied().unwrap_or(0.0);
    let total = psd.band_power(RATIO_FLOOR_HZ, nyq);
    if total > 0.0 {
        psd.band_power(band.0, band.1) / total
    } else {
        0.0
    }
}

/// Describes component `index` of a fitted model. `activations` come from
/// [`IcaModel::transform`]; model rows follow `electrodes.recorded()`.
pub fn extract_features(
    model: &IcaModel,
    activations: ArrayView2<f64>,
    index: usize,
    electrodes: &ElectrodeSet,
    fs_hz: f64,
) -> Result<ComponentFeatures> {
    if index >= model.n_components() || activations.nrows() != model.n_components() {
        return Err(ArtifactError::Input(format!("component {index} out of range")));
    }
    let recorded = electrodes.recorded();
    if recorded.len() != model.n_components() {
        return Err(ArtifactError::Input(format!(
            "{} recorded electrodes for {} components",
            recorded.len(),
            model.n_components()
        )));
    }
    let pattern: Vec<f64> = model.channel_mixing().column(index).to_vec();
    let points: Vec<(f64, f64)> = recorded.iter().map(|l| electrodes.position(l).expect("recorded label")).collect();
    let topomap = idw_topomap(&points, &pattern);
    let energy: f64 = pattern.iter().map(|v| v * v).sum();
    let frontal: f64 = recorded
        .iter()
        .zip(&pattern)
        .filter(|(l, _)| FRONTAL.contains(l))
        .map(|(_, v)| v * v)
        .sum();
    let waveform = activations.row(index).to_vec();
    let seg = ((2.0 * fs_hz) as usize).min(waveform.len()).max(2);
    let psd = welch_psd(&waveform, fs_hz, seg, 0.5)?;
    Ok(ComponentFeatures {
        index,
        kurtosis: excess_kurtosis(&waveform),
        low_ratio: ratio(&psd, LOW_BAND_HZ),
        line_ratio: ratio(&psd, LINE_BAND_HZ),
        frontal_fraction: if energy > 0.0 { frontal / energy } else { 0.0 },
        waveform,
        topomap,
        psd,
    })
}

pub fn extract_all(
    model: &IcaModel,
    activations: ArrayView2<f64>,
    electrodes: &ElectrodeSet,
    fs_hz: f64,
) -> Result<Vec<ComponentFeatures>> {
    (0..model.n_components()).map(|k| extract_features(model, activations, k, electrodes, fs_hz)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ica::{IcaReport, SourceKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn identity_model(n: usize) -> IcaModel {
        let eye = Array2::eye(n);
        IcaModel {
            unmixing: eye.clone(),
            mixing: eye.clone(),
            whitener: eye.clone(),
            dewhitener: eye,
            means: vec![0.0; n],
            kinds: vec![SourceKind::SuperGaussian; n],
            report: IcaReport { converged: true, iterations: 0, final_change: 0.0, final_learning_rate: 0.0, restarts: 0 },
        }
    }

    #[test]
    fn fp1_indicator_peaks_at_fp1() {
        let e = ElectrodeSet::standard();
        let m = identity_model(8);
        let act = Array2::from_shape_fn((8, 1000), |(_, t)| (t as f64 * 0.1).sin());
        let fp1 = e.recorded().iter().position(|l| *l == "Fp1").unwrap();
        let f = extract_features(&m, act.view(), fp1, &e, 250.0).unwrap();
        let (mut best, mut at) = (f64::MIN, (0, 0));
        for ((r, c), &v) in f.topomap.indexed_iter() {
            if v > best {
                best = v;
                at = (r, c);
            }
        }
        assert_eq!(at, grid_cell(e.position("Fp1").unwrap()));
        assert!(f.topomap.iter().all(|v| v.is_finite()));
        assert!((f.frontal_fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_line_has_high_line_ratio() {
        let e = ElectrodeSet::standard();
        let act = Array2::from_shape_fn((8, 5000), |(_, t)| (2.0 * std::f64::consts::PI * 50.0 * t as f64 / 250.0).sin());
        let f = extract_features(&identity_model(8), act.view(), 0, &e, 250.0).unwrap();
        assert!(f.line_ratio > 0.8, "{}", f.line_ratio);
        assert!(f.psd.power.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn gaussian_white_kurtosis_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..15000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(excess_kurtosis(&x).abs() < 0.5);
    }

    #[test]
    fn out_of_range_component() {
        let e = ElectrodeSet::standard();
        let act = Array2::zeros((8, 600));
        assert!(extract_features(&identity_model(8), act.view(), 8, &e, 250.0).is_err());
    }
}
