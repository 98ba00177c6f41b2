//! Packet layout (all multi-byte integers little-endian except ADC words):
//!
//! ```text
//! magic  A5 5A
//! version u8, flags u8, seq u32, t_us u64, n u8 (1..=25)
//! n x { 8 x i24 big-endian ADC, 3 x i16 accel, 3 x i16 gyro }
//! crc u16  CRC-16/CCITT-FALSE over version..payload
//! ```

use crc::{Crc, CRC_16_IBM_3740};
use neoscan_core::types::{ADC_MAX, ADC_MIN};
use neoscan_core::SampleFrame;

use crate::error::{Result, StreamError};

pub const MAGIC: [u8; 2] = [0xA5, 0x5A];
pub const VERSION: u8 = 1;
pub const MAX_FRAMES: usize = 25;
pub const DEFAULT_FRAMES_PER_PACKET: usize = 10;
/// Sample period at 250 Hz.
pub const FRAME_PERIOD_US: u64 = 4000;
/// Magic through `n`.
pub const HEADER_LEN: usize = 17;
pub const FRAME_LEN: usize = 8 * 3 + 3 * 2 + 3 * 2;
pub const CRC_LEN: usize = 2;

pub(crate) const CRC16: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub const fn packet_len(n_frames: usize) -> usize {
    HEADER_LEN + n_frames * FRAME_LEN + CRC_LEN
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub version: u8,
    pub flags: u8,
    pub frames: Vec<SampleFrame>,
}

impl Packet {
    pub fn seq(&self) -> u32 {
        self.frames.first().map_or(0, |f| f.seq)
    }
}

/// Serializes up to [`MAX_FRAMES`] consecutive frames.
pub fn encode_packet(frames: &[SampleFrame]) -> Result<Vec<u8>> {
    encode_packet_with_flags(frames, 0)
}

pub fn encode_packet_with_flags(frames: &[SampleFrame], flags: u8) -> Result<Vec<u8>> {
    if frames.is_empty() || frames.len() > MAX_FRAMES {
        return Err(StreamError::Protocol(format!(
            "a packet carries 1..={MAX_FRAMES} frames, got {}",
            frames.len()
        )));
    }
    let first = &frames[0];
    for (i, f) in frames.iter().enumerate() {
        if f.seq != first.seq.wrapping_add(i as u32) || f.t_us != first.t_us + i as u64 * FRAME_PERIOD_US {
            return Err(StreamError::Protocol(format!("frame {i} is not contiguous with frame 0")));
        }
        if !f.adc_in_range() {
            return Err(StreamError::Protocol(format!("frame {i} has an ADC value outside 24 bits")));
        }
    }
    let mut out = Vec::with_capacity(packet_len(frames.len()));
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(flags);
    out.extend_from_slice(&first.seq.to_le_bytes());
    out.extend_from_slice(&first.t_us.to_le_bytes());
    out.push(frames.len() as u8);
    for f in frames {
        for &c in &f.adc {
            out.extend_from_slice(&c.to_be_bytes()[1..]);
        }
        for v in f.accel.iter().chain(&f.gyro) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = CRC16.checksum(&out[2..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn i24_be(b: &[u8]) -> i32 {
    (i32::from_be_bytes([b[0], b[1], b[2], 0])) >> 8
}

fn i16_le(b: &[u8]) -> i16 {
    i16::from_le_bytes([b[0], b[1]])
}

/// Outcome of inspecting the bytes at the start of a buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parse {
    /// A valid packet and the number of bytes it occupied.
    Packet(Packet, usize),
    /// More bytes are needed to decide.
    Incomplete,
    /// No magic at offset 0, or a header field out of range.
    BadFraming,
    /// A complete packet whose checksum does not match.
    BadCrc { len: usize },
}

/// Parses one packet starting at `buf[0]`.
pub fn parse_packet(buf: &[u8]) -> Parse {
    if buf.len() < 2 {
        return if buf.is_empty() || buf[0] == MAGIC[0] { Parse::Incomplete } else { Parse::BadFraming };
    }
    if buf[..2] != MAGIC {
        return Parse::BadFraming;
    }
    if buf.len() < HEADER_LEN {
        return Parse::Incomplete;
    }
    let version = buf[2];
    let n = buf[16] as usize;
    if version != VERSION || n == 0 || n > MAX_FRAMES {
        return Parse::BadFraming;
    }
    let len = packet_len(n);
    if buf.len() < len {
        return Parse::Incomplete;
    }
    let expected = u16::from_le_bytes([buf[len - 2], buf[len - 1]]);
    if CRC16.checksum(&buf[2..len - 2]) != expected {
        return Parse::BadCrc { len };
    }
    let flags = buf[3];
    let seq = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    let t_us = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    let frames = buf[HEADER_LEN..len - 2]
        .chunks_exact(FRAME_LEN)
        .enumerate()
        .map(|(i, p)| {
            let mut f = SampleFrame {
                seq: seq.wrapping_add(i as u32),
                t_us: t_us + i as u64 * FRAME_PERIOD_US,
                ..SampleFrame::default()
            };
            for (c, b) in f.adc.iter_mut().zip(p[..24].chunks_exact(3)) {
                *c = i24_be(b);
            }
            for (k, b) in p[24..].chunks_exact(2).enumerate() {
                if k < 3 {
                    f.accel[k] = i16_le(b);
                } else {
                    f.gyro[k - 3] = i16_le(b);
                }
            }
            f
        })
        .collect();
    Parse::Packet(Packet { version, flags, frames }, len)
}

/// Decodes exactly one packet occupying all of `bytes`.
pub fn decode_packet(bytes: &[u8]) -> Result<Packet> {
    match parse_packet(bytes) {
        Parse::Packet(p, len) if len == bytes.len() => Ok(p),
        Parse::Packet(_, len) => Err(StreamError::Protocol(format!(
            "{} trailing bytes after a {len}-byte packet",
            bytes.len() - len
        ))),
        Parse::Incomplete => Err(StreamError::Protocol("truncated packet".into())),
        Parse::BadFraming => Err(StreamError::Protocol("bad magic or header".into())),
        Parse::BadCrc { .. } => Err(StreamError::Protocol("checksum mismatch".into())),
    }
}

/// Splits a frame sequence into packets of at most `per_packet` frames.
pub fn encode_frames(frames: &[SampleFrame], per_packet: usize) -> Result<Vec<u8>> {
    if per_packet == 0 || per_packet > MAX_FRAMES {
        return Err(StreamError::Config(format!("frames per packet must be 1..={MAX_FRAMES}")));
    }
    let mut out = Vec::with_capacity(frames.len() / per_packet * packet_len(per_packet) + packet_len(per_packet));
    for chunk in frames.chunks(per_packet) {
        out.extend(encode_packet(chunk)?);
    }
    Ok(out)
}

/// Clamps a count into the 24-bit range.
pub fn saturate_adc(c: i64) -> i32 {
    c.clamp(ADC_MIN as i64, ADC_MAX as i64) as i32
}
