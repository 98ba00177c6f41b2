//! Incremental byte-stream decoder with resynchronization.

use neoscan_core::SampleFrame;

use crate::packet::{parse_packet, Parse, MAGIC};

/// Frames missing between two received packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapReport {
    pub first_missing_seq: u32,
    pub n_missing: u32,
}

impl GapReport {
    pub fn last_missing_seq(&self) -> u32 {
        self.first_missing_seq.wrapping_add(self.n_missing - 1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecoderStats {
    pub packets_ok: u64,
    pub crc_failures: u64,
    /// Resynchronization episodes (bytes that did not start a packet).
    pub framing_errors: u64,
    pub bytes_skipped: u64,
    pub gaps: u64,
    pub missing_frames: u64,
    /// Packets dropped because every frame was at or before the last one emitted.
    pub stale_packets: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecodeOutput {
    pub frames: Vec<SampleFrame>,
    pub gaps: Vec<GapReport>,
}

impl DecodeOutput {
    fn append(&mut self, other: DecodeOutput) {
        self.frames.extend(other.frames);
        self.gaps.extend(other.gaps);
    }
}

/// Accepts bytes in arbitrary chunks and emits frames in strictly increasing
/// sequence order.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    next_seq: Option<u32>,
    stats: DecoderStats,
    in_resync: bool,
}

fn find_magic(buf: &[u8], from: usize) -> usize {
    let mut i = from;
    while i < buf.len() {
        if buf[i] == MAGIC[0] && (i + 1 == buf.len() || buf[i + 1] == MAGIC[1]) {
            return i;
        }
        i += 1;
    }
    buf.len()
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> DecoderStats {
        self.stats
    }

    /// Bytes held back waiting for the rest of a packet.
    pub fn pending_bytes(&self) -> usize {
        self.buf.len()
    }

    pub fn push(&mut self, bytes: &[u8]) -> DecodeOutput {
        self.buf.extend_from_slice(bytes);
        let mut out = DecodeOutput::default();
        let mut pos = 0;
        while pos < self.buf.len() {
            match parse_packet(&self.buf[pos..]) {
                Parse::Incomplete => break,
                Parse::Packet(p, len) => {
                    self.in_resync = false;
                    pos += len;
                    self.accept(p.frames, &mut out);
                }
                Parse::BadCrc { .. } => {
                    self.stats.crc_failures += 1;
                    let next = find_magic(&self.buf, pos + 1);
                    self.stats.bytes_skipped += (next - pos) as u64;
                    pos = next;
                }
                Parse::BadFraming => {
                    if !self.in_resync {
                        self.stats.framing_errors += 1;
                        self.in_resync = true;
                    }
                    let next = find_magic(&self.buf, pos + 1);
                    self.stats.bytes_skipped += (next - pos) as u64;
                    pos = next;
                }
            }
        }
        self.buf.drain(..pos);
        out
    }

    fn accept(&mut self, frames: Vec<SampleFrame>, out: &mut DecodeOutput) {
        let mut kept = 0;
        for f in frames {
            if let Some(expected) = self.next_seq {
                let d = f.seq.wrapping_sub(expected) as i32;
                if d < 0 {
                    continue;
                }
                if d > 0 {
                    let gap = GapReport { first_missing_seq: expected, n_missing: d as u32 };
                    self.stats.gaps += 1;
                    self.stats.missing_frames += d as u64;
                    out.gaps.push(gap);
                }
            }
            self.next_seq = Some(f.seq.wrapping_add(1));
            out.frames.push(f);
            kept += 1;
        }
        if kept == 0 {
            self.stats.stale_packets += 1;
        } else {
            self.stats.packets_ok += 1;
        }
    }
}

/// Decodes a complete byte stream in one call.
pub fn decode_stream(bytes: &[u8]) -> (DecodeOutput, DecoderStats) {
    let mut d = StreamDecoder::new();
    let mut out = DecodeOutput::default();
    out.append(d.push(bytes));
    (out, d.stats())
}
