//! Chunked session file with a text header, readable while it is written.
//!
//! ```text
//! NEOSESSION 1\n
//! key=value\n ...
//! END\n
//! { tag[4] u32 len payload[len] u32 crc32(payload) }*
//! ```
//!
//! `DATA` payload: `u32 n`, then `n` f32 samples per channel (channel-major,
//! µV), then 6 x `n` f32 IMU values (accel g xyz, gyro deg/s xyz).
//! `ANNO` payload: one UTF-8 annotation line.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use neoscan_core::Recording;

use crate::error::{Result, StreamError};
use crate::synth::Annotation;

const MAGIC_LINE: &str = "NEOSESSION 1";
const END_LINE: &str = "END";
const TAG_DATA: &[u8; 4] = b"DATA";
const TAG_ANNO: &[u8; 4] = b"ANNO";
pub const IMU_ROWS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionHeader {
    pub fs_hz: f64,
    pub channels: Vec<String>,
    pub gain: f64,
    pub vref_v: f64,
    pub start_time: String,
    pub device_id: String,
    pub montage: String,
    /// Samples per `DATA` chunk.
    pub chunk_samples: usize,
    pub extra: BTreeMap<String, String>,
}

impl SessionHeader {
    pub fn new(fs_hz: f64, channels: Vec<String>) -> Self {
        Self {
            fs_hz,
            channels,
            gain: neoscan_core::units::DEFAULT_GAIN,
            vref_v: neoscan_core::units::DEFAULT_VREF_V,
            start_time: "0".into(),
            device_id: "unknown".into(),
            montage: "referential-cz".into(),
            chunk_samples: 250,
            extra: BTreeMap::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC_LINE}\n");
        let mut kv = |k: &str, v: &str| {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        };
        kv("fs_hz", &self.fs_hz.to_string());
        kv("channels", &self.channels.join(","));
        kv("gain", &self.gain.to_string());
        kv("vref_v", &self.vref_v.to_string());
        kv("start_time", &self.start_time);
        kv("device_id", &self.device_id);
        kv("montage", &self.montage);
        kv("chunk_samples", &self.chunk_samples.to_string());
        kv("imu_rows", &IMU_ROWS.to_string());
        kv("sample_format", "f32le");
        for (k, v) in &self.extra {
            kv(k, v);
        }
        s.push_str(END_LINE);
        s.push('\n');
        s
    }

    /// Parses a header at the start of `bytes`; `Ok(None)` when the END line
    /// has not arrived yet. Returns the header and its length in bytes.
    pub fn parse(bytes: &[u8]) -> Result<Option<(Self, usize)>> {
        let mut pos = 0;
        let mut lines = Vec::new();
        loop {
            let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
                if !MAGIC_LINE.as_bytes().starts_with(&bytes[..bytes.len().min(MAGIC_LINE.len())]) {
                    return Err(StreamError::Format("not a session file".into()));
                }
                return Ok(None);
            };
            let line = std::str::from_utf8(&bytes[pos..pos + nl])
                .map_err(|_| StreamError::Format("header is not UTF-8".into()))?;
            pos += nl + 1;
            if lines.is_empty() && line != MAGIC_LINE {
                return Err(StreamError::Format("not a session file".into()));
            }
            if line == END_LINE {
                break;
            }
            lines.push(line.to_string());
        }
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for l in &lines[1..] {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| StreamError::Format(format!("bad header line {l:?}")))?;
            map.insert(k.to_string(), v.to_string());
        }
        let mut take = |k: &str| map.remove(k).ok_or_else(|| StreamError::Format(format!("header lacks {k}")));
        let num = |k: &str, v: String| -> Result<f64> {
            v.parse().map_err(|_| StreamError::Format(format!("bad value for {k}: {v}")))
        };
        let fs_hz = num("fs_hz", take("fs_hz")?)?;
        let channels: Vec<String> = take("channels")?.split(',').filter(|s| !s.is_empty()).map(String::from).collect();
        let gain = num("gain", take("gain")?)?;
        let vref_v = num("vref_v", take("vref_v")?)?;
        let start_time = take("start_time")?;
        let device_id = take("device_id")?;
        let montage = take("montage")?;
        let chunk_samples = take("chunk_samples")?
            .parse()
            .map_err(|_| StreamError::Format("bad chunk_samples".into()))?;
        let imu_rows: usize = take("imu_rows")?.parse().map_err(|_| StreamError::Format("bad imu_rows".into()))?;
        let fmt = take("sample_format")?;
        if imu_rows != IMU_ROWS || fmt != "f32le" {
            return Err(StreamError::Format(format!("unsupported body layout ({imu_rows} imu rows, {fmt})")));
        }
        if !(fs_hz > 0.0) || channels.is_empty() {
            return Err(StreamError::Format("header declares no channels or rate".into()));
        }
        let header = Self { fs_hz, channels, gain, vref_v, start_time, device_id, montage, chunk_samples, extra: map };
        Ok(Some((header, pos)))
    }
}

fn chunk_bytes(tag: &[u8; 4], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 12);
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    out
}

/// Appends fixed-size chunks, flushing each one as soon as it is complete.
pub struct SessionWriter {
    file: File,
    header: SessionHeader,
    uv: Vec<Vec<f32>>,
    imu: Vec<[f32; IMU_ROWS]>,
    samples_written: u64,
}

impl SessionWriter {
    pub fn create(path: impl AsRef<Path>, header: SessionHeader) -> Result<Self> {
        if header.chunk_samples == 0 {
            return Err(StreamError::Config("chunk_samples must be positive".into()));
        }
        let mut file = File::create(path)?;
        file.write_all(header.to_text().as_bytes())?;
        file.flush()?;
        let n = header.channels.len();
        Ok(Self { file, header, uv: vec![Vec::new(); n], imu: Vec::new(), samples_written: 0 })
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    pub fn samples_written(&self) -> u64 {
        self.samples_written
    }

    /// One instant: a µV value per channel and the six IMU readings.
    pub fn push_sample(&mut self, uv: &[f64], imu: [f64; IMU_ROWS]) -> Result<()> {
        if uv.len() != self.uv.len() {
            return Err(StreamError::Format(format!("expected {} channels, got {}", self.uv.len(), uv.len())));
        }
        for (buf, &v) in self.uv.iter_mut().zip(uv) {
            buf.push(v as f32);
        }
        self.imu.push(imu.map(|v| v as f32));
        if self.imu.len() == self.header.chunk_samples {
            self.flush_chunk()?;
        }
        Ok(())
    }

    /// Channels x samples and 6 x samples blocks.
    pub fn push_block(&mut self, uv: ArrayView2<'_, f64>, imu: ArrayView2<'_, f64>) -> Result<()> {
        if imu.nrows() != IMU_ROWS || imu.ncols() != uv.ncols() {
            return Err(StreamError::Format("IMU block does not match the sample block".into()));
        }
        let mut row = vec![0.0; uv.nrows()];
        for i in 0..uv.ncols() {
            for (c, r) in row.iter_mut().enumerate() {
                *r = uv[[c, i]];
            }
            let mut m = [0.0; IMU_ROWS];
            for (k, v) in m.iter_mut().enumerate() {
                *v = imu[[k, i]];
            }
            self.push_sample(&row, m)?;
        }
        Ok(())
    }

    pub fn write_annotation(&mut self, a: &Annotation) -> Result<()> {
        self.file.write_all(&chunk_bytes(TAG_ANNO, a.to_line().as_bytes()))?;
        self.file.flush()?;
        Ok(())
    }

    /// Writes buffered samples as a (possibly short) chunk.
    pub fn flush_chunk(&mut self) -> Result<()> {
        let n = self.imu.len();
        if n == 0 {
            return Ok(());
        }
        let mut payload = Vec::with_capacity(4 + 4 * n * (self.uv.len() + IMU_ROWS));
        payload.extend_from_slice(&(n as u32).to_le_bytes());
        for ch in &self.uv {
            for v in ch {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        for k in 0..IMU_ROWS {
            for s in &self.imu {
                payload.extend_from_slice(&s[k].to_le_bytes());
            }
        }
        self.file.write_all(&chunk_bytes(TAG_DATA, &payload))?;
        self.file.flush()?;
        self.uv.iter_mut().for_each(Vec::clear);
        self.imu.clear();
        self.samples_written += n as u64;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        self.flush_chunk()?;
        self.file.sync_all()?;
        Ok(self.samples_written)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Chunk {
    Data { uv: Array2<f64>, imu: Array2<f64> },
    Annotation(Annotation),
}

enum ChunkParse {
    Done(Chunk, usize),
    Incomplete,
    Corrupt(String),
}

fn parse_chunk(b: &[u8], n_channels: usize) -> ChunkParse {
    if b.len() < 8 {
        return ChunkParse::Incomplete;
    }
    let len = u32::from_le_bytes(b[4..8].try_into().unwrap()) as usize;
    let total = 8 + len + 4;
    if b.len() < total {
        return ChunkParse::Incomplete;
    }
    let payload = &b[8..8 + len];
    let crc = u32::from_le_bytes(b[8 + len..total].try_into().unwrap());
    if crc32fast::hash(payload) != crc {
        return ChunkParse::Corrupt("chunk checksum mismatch".into());
    }
    match &b[..4] {
        t if t == TAG_DATA => {
            if len < 4 {
                return ChunkParse::Corrupt("short DATA chunk".into());
            }
            let n = u32::from_le_bytes(payload[..4].try_into().unwrap()) as usize;
            if len != 4 + 4 * n * (n_channels + IMU_ROWS) {
                return ChunkParse::Corrupt("DATA chunk size disagrees with the header".into());
            }
            let vals: Vec<f64> =
                payload[4..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
            let uv = Array2::from_shape_vec((n_channels, n), vals[..n_channels * n].to_vec()).unwrap();
            let imu = Array2::from_shape_vec((IMU_ROWS, n), vals[n_channels * n..].to_vec()).unwrap();
            ChunkParse::Done(Chunk::Data { uv, imu }, total)
        }
        t if t == TAG_ANNO => match std::str::from_utf8(payload).map_err(|e| e.to_string()).and_then(|s| {
            Annotation::parse_line(s).map_err(|e| e.to_string())
        }) {
            Ok(a) => ChunkParse::Done(Chunk::Annotation(a), total),
            Err(e) => ChunkParse::Corrupt(e),
        },
        _ => ChunkParse::Corrupt("unknown chunk tag".into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionData {
    pub header: SessionHeader,
    /// Channels x samples, µV.
    pub data: Array2<f64>,
    pub imu: Array2<f64>,
    pub annotations: Vec<Annotation>,
    pub chunks: usize,
    /// Bytes after the last complete chunk (non-zero for an interrupted write).
    pub truncated_bytes: usize,
    pub corruption: Option<String>,
}

impl SessionData {
    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated_bytes > 0 || self.corruption.is_some()
    }

    pub fn recording(&self) -> Result<Recording> {
        let mut r = Recording::new(self.header.fs_hz, self.header.channels.clone(), self.data.clone())?;
        r.meta.insert("device_id".into(), self.header.device_id.clone());
        r.meta.insert("montage".into(), self.header.montage.clone());
        r.meta.insert("start_time".into(), self.header.start_time.clone());
        Ok(r)
    }
}

fn concat(blocks: &[Array2<f64>], rows: usize) -> Array2<f64> {
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    if views.is_empty() {
        Array2::zeros((rows, 0))
    } else {
        ndarray::concatenate(ndarray::Axis(1), &views).expect("blocks share a row count")
    }
}

/// Reads every complete chunk; an incomplete or damaged tail is reported,
/// not fatal.
pub fn read_session(path: impl AsRef<Path>) -> Result<SessionData> {
    let bytes = std::fs::read(path)?;
    let (header, mut pos) =
        SessionHeader::parse(&bytes)?.ok_or_else(|| StreamError::Format("session header is incomplete".into()))?;
    let nc = header.channels.len();
    let (mut uv, mut imu, mut annotations) = (Vec::new(), Vec::new(), Vec::new());
    let mut chunks = 0;
    let mut corruption = None;
    while pos < bytes.len() {
        match parse_chunk(&bytes[pos..], nc) {
            ChunkParse::Done(c, len) => {
                pos += len;
                chunks += 1;
                match c {
                    Chunk::Data { uv: u, imu: m } => {
                        uv.push(u);
                        imu.push(m);
                    }
                    Chunk::Annotation(a) => annotations.push(a),
                }
            }
            ChunkParse::Incomplete => break,
            ChunkParse::Corrupt(e) => {
                corruption = Some(e);
                break;
            }
        }
    }
    Ok(SessionData {
        data: concat(&uv, nc),
        imu: concat(&imu, IMU_ROWS),
        header,
        annotations,
        chunks,
        truncated_bytes: bytes.len() - pos,
        corruption,
    })
}

/// Follows a session file that another process is still writing.
pub struct SessionTail {
    file: File,
    header: Option<SessionHeader>,
    offset: u64,
    pending: Vec<u8>,
}

impl SessionTail {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self { file: File::open(path)?, header: None, offset: 0, pending: Vec::new() })
    }

    pub fn header(&self) -> Option<&SessionHeader> {
        self.header.as_ref()
    }

    /// Returns chunks completed since the previous call.
    pub fn poll(&mut self) -> Result<Vec<Chunk>> {
        self.file.seek(SeekFrom::Start(self.offset))?;
        let mut fresh = Vec::new();
        self.file.read_to_end(&mut fresh)?;
        self.offset += fresh.len() as u64;
        self.pending.extend(fresh);
        if self.header.is_none() {
            match SessionHeader::parse(&self.pending)? {
                Some((h, len)) => {
                    self.header = Some(h);
                    self.pending.drain(..len);
                }
                None => return Ok(Vec::new()),
            }
        }
        let nc = self.header.as_ref().map_or(0, |h| h.channels.len());
        let mut out = Vec::new();
        let mut pos = 0;
        loop {
            match parse_chunk(&self.pending[pos..], nc) {
                ChunkParse::Done(c, len) => {
                    pos += len;
                    out.push(c);
                }
                ChunkParse::Incomplete => break,
                ChunkParse::Corrupt(e) => return Err(StreamError::Format(e)),
            }
        }
        self.pending.drain(..pos);
        Ok(out)
    }
}
