//! EDF directory to a labeled epoch dataset in the weight-container format.

use std::path::{Path, PathBuf};

use ndarray::{s, Array2};

use neoscan_core::dsp::Resampler;
use neoscan_core::epoch::{plan_windows, SeizureMask, SegmentMode};
use neoscan_core::montage::MontageGraph;
use neoscan_core::{DEVICE_FS_HZ, EPOCH_SAMPLES, EPOCH_SECONDS};
use neoscan_detector::{preprocess_for_model, Tensor, WeightContainer, RAW_EPOCH_SAMPLES};
use neoscan_stream::read_edf;
use neoscan_stream::synth::parse_annotations;

use crate::error::{CliError, Result};
use crate::inputs::bipolar_rows;

pub const EPOCHS: &str = "epochs";
pub const LABELS: &str = "labels";
pub const SEIZURE_SECONDS: &str = "seizure_seconds";
pub const T_START_S: &str = "t_start_s";
pub const FILE_INDEX: &str = "file_index";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrepareSummary {
    pub files: usize,
    pub epochs: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Per-second labels from `<stem>.mask` (0/1 tokens) or `<stem>.ann`
/// (`t_start t_end label` lines, label `seizure`).
pub fn load_mask(dir: &Path, stem: &str, n_seconds: usize) -> Result<SeizureMask> {
    let mask_path = dir.join(format!("{stem}.mask"));
    if mask_path.exists() {
        let text = std::fs::read_to_string(&mask_path)?;
        let bits = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map(|v| v >= 0.5)
                    .map_err(|_| CliError::Usage(format!("{}: bad mask value {t:?}", mask_path.display())))
            })
            .collect::<Result<Vec<bool>>>()?;
        return Ok(SeizureMask::new(bits));
    }
    let ann_path = dir.join(format!("{stem}.ann"));
    if ann_path.exists() {
        let text = std::fs::read_to_string(&ann_path)?;
        let intervals: Vec<(f64, f64)> = parse_annotations(&text)?
            .into_iter()
            .filter(|a| a.label.eq_ignore_ascii_case("seizure"))
            .map(|a| (a.t_start_s, a.t_end_s))
            .collect();
        return Ok(SeizureMask::from_intervals(&intervals, n_seconds));
    }
    Err(CliError::Io(format!("no {stem}.mask or {stem}.ann label file in {}", dir.display())))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Brings bipolar rows at an integer rate to the device rate.
fn to_device_rate(x: Array2<f64>, fs_hz: f64) -> Result<Array2<f64>> {
    if fs_hz == DEVICE_FS_HZ {
        return Ok(x);
    }
    if fs_hz.fract() != 0.0 {
        return Err(CliError::Usage(format!("sampling rate {fs_hz} Hz is not an integer")));
    }
    let (from, to) = (fs_hz as usize, DEVICE_FS_HZ as usize);
    let g = gcd(from, to);
    let (up, down) = (to / g, from / g);
    let fs_up = fs_hz * up as f64;
    let nyq = from.min(to) as f64 / 2.0;
    let r = Resampler::new(up, down, 0.8 * nyq / fs_up, 0.2 * nyq / fs_up, 60.0)?;
    Ok(r.process_rows(x.view())?)
}

pub fn prepare(edf_dir: &Path, labels_dir: &Path, out: &Path, zscore: bool, montage: &MontageGraph) -> Result<PrepareSummary> {
    if !edf_dir.is_dir() {
        return Err(CliError::Io(format!("{} is not a directory", edf_dir.display())));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(edf_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && crate::inputs::is_edf(p))
        .collect();
    files.sort();

    let nch = montage.n_channels();
    let mut epochs: Vec<f32> = Vec::new();
    let (mut labels, mut seconds, mut starts, mut file_idx) = (vec![], vec![], vec![], vec![]);
    let mut summary = PrepareSummary { files: files.len(), ..Default::default() };
    for (k, path) in files.iter().enumerate() {
        let rec = read_edf(path)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let mask = load_mask(labels_dir, &stem, rec.duration_s().ceil() as usize)?;
        let x = to_device_rate(bipolar_rows(&rec, montage)?, rec.fs_hz())?;
        let plan = plan_windows(x.ncols(), DEVICE_FS_HZ, &mask, SegmentMode::Train)?;
        for (start, label) in plan {
            let t0_s = start as f64 / DEVICE_FS_HZ;
            let raw = x.slice(s![.., start..start + RAW_EPOCH_SAMPLES]);
            let e = preprocess_for_model(raw, (t0_s * 1e6).round() as u64, zscore)?;
            epochs.extend(e.data().iter().map(|&v| v as f32));
            labels.push(f32::from(u8::from(label.is_seizure())));
            seconds.push(label.seizure_seconds as f32);
            starts.push(t0_s as f32);
            file_idx.push(k as f32);
            if label.is_seizure() {
                summary.positive += 1;
            } else {
                summary.negative += 1;
            }
        }
        log::info!("{}: {} epochs", path.display(), labels.len() - summary.epochs);
        summary.epochs = labels.len();
    }

    let n = labels.len();
    let mut w = WeightContainer::new();
    w.zscore = zscore;
    w.insert(EPOCHS, Tensor::new(vec![n, nch, EPOCH_SAMPLES], epochs)?);
    w.insert(LABELS, Tensor::new(vec![n], labels)?);
    w.insert(SEIZURE_SECONDS, Tensor::new(vec![n], seconds)?);
    w.insert(T_START_S, Tensor::new(vec![n], starts)?);
    w.insert(FILE_INDEX, Tensor::new(vec![n], file_idx)?);
    w.metadata.insert("kind".into(), "epoch-dataset".into());
    w.metadata.insert("epoch_seconds".into(), EPOCH_SECONDS.to_string());
    w.metadata.insert("channels".into(), montage.channel_names().join(","));
    let names: Vec<String> =
        files.iter().map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()).collect();
    w.metadata.insert("files".into(), names.join(";"));
    w.metadata.insert("positive".into(), summary.positive.to_string());
    w.metadata.insert("negative".into(), summary.negative.to_string());
    w.save(out)?;
    Ok(summary)
}
