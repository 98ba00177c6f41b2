//! European Data Format import and export (16-bit, continuous records).

use std::path::Path;

use ndarray::Array2;
use neoscan_core::Recording;

use crate::error::{Result, StreamError};

const ANNOTATION_LABEL: &str = "EDF Annotations";

fn field(h: &[u8], start: usize, len: usize) -> Result<String> {
    let b = h.get(start..start + len).ok_or_else(|| StreamError::Format("EDF header is truncated".into()))?;
    Ok(String::from_utf8_lossy(b).trim().to_string())
}

fn number<T: std::str::FromStr>(h: &[u8], start: usize, len: usize, what: &str) -> Result<T> {
    let s = field(h, start, len)?;
    s.parse().map_err(|_| StreamError::Format(format!("EDF {what} field {s:?} is not a number")))
}

#[derive(Debug, Clone)]
struct Signal {
    label: String,
    unit: String,
    phys_min: f64,
    phys_max: f64,
    dig_min: i32,
    dig_max: i32,
    samples_per_record: usize,
}

impl Signal {
    fn is_annotation(&self) -> bool {
        self.label == ANNOTATION_LABEL
    }

    fn unit_to_uv(&self) -> Result<f64> {
        match self.unit.as_str() {
            "uV" | "µV" | "microvolt" | "" => Ok(1.0),
            "mV" => Ok(1e3),
            "V" => Ok(1e6),
            "nV" => Ok(1e-3),
            u => Err(StreamError::Format(format!("channel {} has unsupported unit {u:?}", self.label))),
        }
    }
}

/// Reads an EDF or EDF+C file. Annotation channels are skipped; every other
/// channel must share one sampling rate. Values are returned in µV.
pub fn read_edf(path: impl AsRef<Path>) -> Result<Recording> {
    let bytes = std::fs::read(path)?;
    parse_edf(&bytes)
}

pub fn parse_edf(bytes: &[u8]) -> Result<Recording> {
    if bytes.len() < 256 {
        return Err(StreamError::Format("file too short for an EDF header".into()));
    }
    if &bytes[..8] != b"0       " {
        return Err(StreamError::Format("not an EDF file (bad version field)".into()));
    }
    let reserved = field(bytes, 192, 44)?;
    if reserved.starts_with("EDF+D") {
        return Err(StreamError::Format("discontinuous EDF+D records are not supported".into()));
    }
    let header_bytes: usize = number(bytes, 184, 8, "header size")?;
    let n_records_decl: i64 = number(bytes, 236, 8, "record count")?;
    let record_s: f64 = number(bytes, 244, 8, "record duration")?;
    let ns: usize = number(bytes, 252, 4, "signal count")?;
    if header_bytes != 256 * (ns + 1) {
        return Err(StreamError::Format(format!("header size {header_bytes} does not match {ns} signals")));
    }
    if bytes.len() < header_bytes {
        return Err(StreamError::Format("EDF signal headers are truncated".into()));
    }
    let off = |k: usize| 256 + k * ns;
    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let at = |base: usize, len: usize| off(base) + i * len;
        let s = Signal {
            label: field(bytes, at(0, 16), 16)?,
            unit: field(bytes, off(16 + 80) + i * 8, 8)?,
            phys_min: number(bytes, off(16 + 80 + 8) + i * 8, 8, "physical minimum")?,
            phys_max: number(bytes, off(16 + 80 + 16) + i * 8, 8, "physical maximum")?,
            dig_min: number(bytes, off(16 + 80 + 24) + i * 8, 8, "digital minimum")?,
            dig_max: number(bytes, off(16 + 80 + 32) + i * 8, 8, "digital maximum")?,
            samples_per_record: number(bytes, off(16 + 80 + 40 + 80) + i * 8, 8, "samples per record")?,
        };
        if s.dig_max <= s.dig_min {
            return Err(StreamError::Format(format!(
                "channel {}: digital maximum {} is not above digital minimum {}",
                s.label, s.dig_max, s.dig_min
            )));
        }
        if s.phys_max == s.phys_min {
            return Err(StreamError::Format(format!("channel {}: empty physical range", s.label)));
        }
        signals.push(s);
    }
    let record_len: usize = signals.iter().map(|s| s.samples_per_record * 2).sum();
    let body = &bytes[header_bytes..];
    let n_records = if n_records_decl < 0 {
        if record_len == 0 { 0 } else { body.len() / record_len }
    } else {
        n_records_decl as usize
    };
    if body.len() < n_records * record_len {
        return Err(StreamError::Format(format!(
            "EDF body holds {} bytes, header declares {} records of {record_len}",
            body.len(),
            n_records
        )));
    }
    let data_idx: Vec<usize> = (0..ns).filter(|&i| !signals[i].is_annotation()).collect();
    let spr = data_idx.first().map(|&i| signals[i].samples_per_record).unwrap_or(0);
    if let Some(&i) = data_idx.iter().find(|&&i| signals[i].samples_per_record != spr) {
        return Err(StreamError::Format(format!(
            "channel {} has {} samples per record, expected {spr}",
            signals[i].label, signals[i].samples_per_record
        )));
    }
    if !(record_s > 0.0) && spr > 0 {
        return Err(StreamError::Format("record duration must be positive".into()));
    }
    let fs = if spr > 0 { spr as f64 / record_s } else { 1.0 };
    let mut data = Array2::zeros((data_idx.len(), n_records * spr));
    for r in 0..n_records {
        let mut p = r * record_len;
        for (i, s) in signals.iter().enumerate() {
            let n = s.samples_per_record;
            if let Some(row) = data_idx.iter().position(|&d| d == i) {
                let gain = (s.phys_max - s.phys_min) / (s.dig_max - s.dig_min) as f64;
                let to_uv = s.unit_to_uv()?;
                for k in 0..n {
                    let d = i16::from_le_bytes([body[p + 2 * k], body[p + 2 * k + 1]]) as f64;
                    data[[row, r * spr + k]] = ((d - s.dig_min as f64) * gain + s.phys_min) * to_uv;
                }
            }
            p += 2 * n;
        }
    }
    let labels = data_idx.iter().map(|&i| signals[i].label.clone()).collect();
    let mut rec = Recording::new(fs, labels, data)?;
    rec.meta.insert("patient".into(), field(bytes, 8, 80)?);
    rec.meta.insert("recording".into(), field(bytes, 88, 80)?);
    rec.meta.insert("start_date".into(), field(bytes, 168, 8)?);
    rec.meta.insert("start_time".into(), field(bytes, 176, 8)?);
    Ok(rec)
}

fn put(out: &mut Vec<u8>, s: &str, len: usize) {
    let mut b: Vec<u8> = s.bytes().filter(|c| c.is_ascii() && !c.is_ascii_control()).take(len).collect();
    b.resize(len, b' ');
    out.extend(b);
}

fn fmt_num(v: f64) -> String {
    for prec in (0..=6).rev() {
        let s = format!("{v:.prec$}");
        if s.len() <= 8 {
            return s;
        }
    }
    format!("{:.0}", v)
}

/// Writes a continuous EDF with 1 s records, 16-bit samples in µV. The
/// physical range of each channel is its symmetric data range.
pub fn write_edf(path: impl AsRef<Path>, rec: &Recording) -> Result<()> {
    std::fs::write(path, encode_edf(rec)?)?;
    Ok(())
}

pub fn encode_edf(rec: &Recording) -> Result<Vec<u8>> {
    let fs = rec.fs_hz();
    if fs.fract() != 0.0 {
        return Err(StreamError::Format(format!("EDF export needs an integer sampling rate, got {fs}")));
    }
    let spr = fs as usize;
    let ns = rec.n_channels();
    let n_records = rec.n_samples().div_ceil(spr);
    let meta = |k: &str, d: &str| rec.meta.get(k).cloned().unwrap_or_else(|| d.to_string());
    let mut out = Vec::with_capacity(256 * (ns + 1) + n_records * spr * ns * 2);
    put(&mut out, "0", 8);
    put(&mut out, &meta("patient", "X X X X"), 80);
    put(&mut out, &meta("recording", "Startdate X X X X"), 80);
    put(&mut out, &meta("start_date", "01.01.00"), 8);
    put(&mut out, &meta("start_time", "00.00.00"), 8);
    put(&mut out, &(256 * (ns + 1)).to_string(), 8);
    put(&mut out, "EDF+C", 44);
    put(&mut out, &n_records.to_string(), 8);
    put(&mut out, "1", 8);
    put(&mut out, &ns.to_string(), 4);
    let ranges: Vec<f64> = rec
        .data()
        .rows()
        .into_iter()
        .map(|r| {
            let m = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let m = if m > 0.0 { m * 1.0001 } else { 1.0 };
            fmt_num(m).parse::<f64>().unwrap_or(m).max(m)
        })
        .collect();
    for c in rec.channels() {
        put(&mut out, c, 16);
    }
    for _ in 0..ns {
        put(&mut out, "AgAgCl electrode", 80);
    }
    for _ in 0..ns {
        put(&mut out, "uV", 8);
    }
    for r in &ranges {
        put(&mut out, &fmt_num(-r), 8);
    }
    for r in &ranges {
        put(&mut out, &fmt_num(*r), 8);
    }
    for _ in 0..ns {
        put(&mut out, "-32767", 8);
    }
    for _ in 0..ns {
        put(&mut out, "32767", 8);
    }
    for _ in 0..ns {
        put(&mut out, "", 80);
    }
    for _ in 0..ns {
        put(&mut out, &spr.to_string(), 8);
    }
    for _ in 0..ns {
        put(&mut out, "", 32);
    }
    // re-read the rounded header ranges so scaling matches what a reader sees
    let phys: Vec<f64> = ranges.iter().map(|r| fmt_num(*r).parse().unwrap()).collect();
    let data = rec.data();
    for r in 0..n_records {
        for (c, &p) in phys.iter().enumerate() {
            for k in 0..spr {
                let i = r * spr + k;
                let v = if i < rec.n_samples() { data[[c, i]] } else { 0.0 };
                let d = (v / p * 32767.0).round().clamp(-32767.0, 32767.0) as i16;
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Builds an EDF by hand, independent of the writer.
    fn fixture(ns: usize, spr: &[usize], dig: (i32, i32), phys: (f64, f64), records: &[Vec<i16>], reserved: &str) -> Vec<u8> {
        let mut h = Vec::new();
        put(&mut h, "0", 8);
        put(&mut h, "patient", 80);
        put(&mut h, "rec", 80);
        put(&mut h, "01.02.03", 8);
        put(&mut h, "04.05.06", 8);
        put(&mut h, &(256 * (ns + 1)).to_string(), 8);
        put(&mut h, reserved, 44);
        put(&mut h, &records.len().to_string(), 8);
        put(&mut h, "1", 8);
        put(&mut h, &ns.to_string(), 4);
        for i in 0..ns {
            put(&mut h, if i == ns - 1 && ns > 1 { ANNOTATION_LABEL } else { "EEG" }, 16);
        }
        for _ in 0..ns {
            put(&mut h, "", 80);
        }
        for _ in 0..ns {
            put(&mut h, "uV", 8);
        }
        for _ in 0..ns {
            put(&mut h, &phys.0.to_string(), 8);
        }
        for _ in 0..ns {
            put(&mut h, &phys.1.to_string(), 8);
        }
        for _ in 0..ns {
            put(&mut h, &dig.0.to_string(), 8);
        }
        for _ in 0..ns {
            put(&mut h, &dig.1.to_string(), 8);
        }
        for _ in 0..ns {
            put(&mut h, "", 80);
        }
        for s in spr {
            put(&mut h, &s.to_string(), 8);
        }
        for _ in 0..ns {
            put(&mut h, "", 32);
        }
        for r in records {
            for v in r {
                h.extend_from_slice(&v.to_le_bytes());
            }
        }
        h
    }

    #[test]
    fn ramp_scales_exactly() {
        // digital -100..100 maps to -50..50 uV: 0.5 uV per step
        let ramp: Vec<i16> = (-5..5).collect();
        let b = fixture(1, &[10], (-100, 100), (-50.0, 50.0), &[ramp.clone()], "");
        let r = parse_edf(&b).unwrap();
        assert_eq!(r.fs_hz(), 10.0);
        assert_eq!(r.n_samples(), 10);
        for (k, d) in ramp.iter().enumerate() {
            assert_eq!(r.data()[[0, k]], *d as f64 * 0.5);
        }
        assert_eq!(r.meta["start_time"], "04.05.06");
    }

    #[test]
    fn inverted_digital_range_is_an_error() {
        let b = fixture(1, &[4], (100, -100), (-50.0, 50.0), &[vec![0; 4]], "");
        let e = parse_edf(&b).unwrap_err().to_string();
        assert!(e.contains("digital"), "{e}");
    }

    #[test]
    fn bad_magic_is_an_error() {
        let mut b = fixture(1, &[4], (-100, 100), (-50.0, 50.0), &[vec![0; 4]], "");
        b[0] = b'X';
        assert!(parse_edf(&b).is_err());
    }

    #[test]
    fn discontinuous_is_an_error() {
        let b = fixture(1, &[4], (-100, 100), (-50.0, 50.0), &[vec![0; 4]], "EDF+D");
        assert!(parse_edf(&b).is_err());
    }

    #[test]
    fn rate_mismatch_is_an_error() {
        let mut b = fixture(2, &[4, 8], (-100, 100), (-50.0, 50.0), &[vec![0; 12]], "");
        // relabel the second signal so it is not an annotation channel
        b[256 + 16..256 + 32].copy_from_slice(b"EEG2            ");
        assert!(parse_edf(&b).unwrap_err().to_string().contains("samples per record"));
    }

    #[test]
    fn annotation_channel_is_skipped() {
        let b = fixture(2, &[4, 3], (-100, 100), (-50.0, 50.0), &[vec![2, 2, 2, 2, 9, 9, 9]], "EDF+C");
        let r = parse_edf(&b).unwrap();
        assert_eq!(r.n_channels(), 1);
        assert_eq!(r.data().row(0).to_vec(), vec![1.0; 4]);
    }

    #[test]
    fn empty_body_is_zero_length() {
        let b = fixture(1, &[4], (-100, 100), (-50.0, 50.0), &[], "");
        let r = parse_edf(&b).unwrap();
        assert_eq!(r.n_samples(), 0);
        assert_eq!(r.channels(), &["EEG".to_string()]);
    }

    #[test]
    fn writer_round_trip_within_quantization() {
        let data = Array2::from_shape_fn((2, 600), |(c, i)| (i as f64 * 0.1).sin() * 80.0 * (c + 1) as f64);
        let rec = Recording::new(250.0, vec!["Fp1-T3".into(), "T3-O1".into()], data.clone()).unwrap();
        let back = parse_edf(&encode_edf(&rec).unwrap()).unwrap();
        assert_eq!(back.n_samples(), 750);
        assert_eq!(back.channels(), rec.channels());
        for c in 0..2 {
            let step = 160.0 * (c + 1) as f64 / 65534.0 * 1.01;
            for i in 0..600 {
                assert!((back.data()[[c, i]] - data[[c, i]]).abs() <= step);
            }
        }
    }
}
