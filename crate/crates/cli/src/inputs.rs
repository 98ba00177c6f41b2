//! Loading recordings from session and EDF files.

use std::path::Path;

use ndarray::{Array2, ArrayView2};

use neoscan_core::montage::{MontageGraph, RECORDED};
use neoscan_core::Recording;
use neoscan_stream::{read_edf, read_session, Annotation, ImuSample};

use crate::error::{CliError, Result};

pub fn is_edf(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("edf"))
}

/// `"EEG Fp1-REF"` and `"fp1"` both become `"fp1"`; bipolar labels keep
/// their dash.
pub fn normalize_label(label: &str) -> String {
    let mut s = label.trim().to_ascii_lowercase();
    if let Some(rest) = s.strip_prefix("eeg ") {
        s = rest.trim().to_string();
    }
    for suffix in ["-ref", "-avg", "-le"] {
        if let Some(rest) = s.strip_suffix(suffix) {
            s = rest.to_string();
        }
    }
    s
}

pub struct Loaded {
    pub rec: Recording,
    pub imu: Option<Vec<ImuSample>>,
    pub annotations: Vec<Annotation>,
}

pub fn imu_samples(imu: ArrayView2<f64>, fs_hz: f64) -> Vec<ImuSample> {
    (0..imu.ncols())
        .map(|i| ImuSample {
            t_us: (i as f64 * 1e6 / fs_hz).round() as u64,
            accel_g: [imu[[0, i]], imu[[1, i]], imu[[2, i]]],
            gyro_dps: [imu[[3, i]], imu[[4, i]], imu[[5, i]]],
        })
        .collect()
}

/// Any session or EDF file, channels as stored.
pub fn load_any(path: &Path) -> Result<Loaded> {
    if !path.exists() {
        return Err(CliError::Io(format!("{} does not exist", path.display())));
    }
    if is_edf(path) {
        return Ok(Loaded { rec: read_edf(path)?, imu: None, annotations: vec![] });
    }
    let s = read_session(path)?;
    if s.is_truncated() {
        log::warn!("{}: incomplete tail ignored", path.display());
    }
    let imu = (s.imu.ncols() == s.n_samples() && s.n_samples() > 0).then(|| imu_samples(s.imu.view(), s.header.fs_hz));
    Ok(Loaded { rec: s.recording()?, imu, annotations: s.annotations })
}

/// Rows of `rec` matched to `labels` by normalized name.
pub fn select_rows(rec: &Recording, labels: &[&str]) -> Option<Array2<f64>> {
    let names: Vec<String> = rec.channels().iter().map(|c| normalize_label(c)).collect();
    let idx: Option<Vec<usize>> =
        labels.iter().map(|l| names.iter().position(|n| *n == normalize_label(l))).collect();
    idx.map(|i| rec.data().select(ndarray::Axis(0), &i))
}

/// The eight referential channels in wire order.
pub fn load_referential(path: &Path) -> Result<Loaded> {
    let mut l = load_any(path)?;
    let data = select_rows(&l.rec, &RECORDED).ok_or_else(|| {
        CliError::Usage(format!(
            "{} lacks one of the referential channels {RECORDED:?} (has {:?})",
            path.display(),
            l.rec.channels()
        ))
    })?;
    let meta = l.rec.meta.clone();
    l.rec = Recording::new(l.rec.fs_hz(), RECORDED.iter().map(|s| s.to_string()).collect(), data)?;
    l.rec.meta = meta;
    Ok(l)
}

/// Bipolar rows for `montage`: taken directly when the file already holds
/// the bipolar channels, derived from referential electrodes otherwise. An
/// absent reference electrode counts as zero.
pub fn bipolar_rows(rec: &Recording, montage: &MontageGraph) -> Result<Array2<f64>> {
    let names = montage.channel_names();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    if let Some(d) = select_rows(rec, &name_refs) {
        return Ok(d);
    }
    let reference = montage.electrodes().reference().to_string();
    let normalized: Vec<String> = rec.channels().iter().map(|c| normalize_label(c)).collect();
    let row = |e: &str| normalized.iter().position(|n| *n == normalize_label(e));
    let mut out = Array2::zeros((names.len(), rec.n_samples()));
    let data = rec.data();
    for (k, (a, b)) in montage.channels().iter().enumerate() {
        let mut get = |e: &str, sign: f64| -> Result<()> {
            match row(e) {
                Some(i) => {
                    out.row_mut(k).scaled_add(sign, &data.row(i));
                    Ok(())
                }
                None if *e == reference => Ok(()),
                None => Err(CliError::Usage(format!("recording lacks electrode {e} for channel {a}-{b}"))),
            }
        };
        get(a, 1.0)?;
        get(b, -1.0)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(normalize_label("EEG Fp1-REF"), "fp1");
        assert_eq!(normalize_label(" T3 "), "t3");
        assert_eq!(normalize_label("Fp1-T3"), "fp1-t3");
    }

    #[test]
    fn bipolar_from_referential_treats_missing_cz_as_zero() {
        let labels: Vec<String> = RECORDED.iter().map(|l| format!("EEG {l}-REF")).collect();
        let data = Array2::from_shape_fn((8, 4), |(c, _)| c as f64 + 1.0);
        let rec = Recording::new(250.0, labels, data).unwrap();
        let g = MontageGraph::standard();
        let b = bipolar_rows(&rec, &g).unwrap();
        let direct = g.derive_matrix(rec.data()).unwrap();
        assert_eq!(b, direct);
    }

    #[test]
    fn bipolar_labels_are_used_directly() {
        let g = MontageGraph::standard();
        let data = Array2::from_shape_fn((12, 3), |(c, t)| (c * 10 + t) as f64);
        let rec = Recording::new(256.0, g.channel_names(), data.clone()).unwrap();
        assert_eq!(bipolar_rows(&rec, &g).unwrap(), data);
    }
}
