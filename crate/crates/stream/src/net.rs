//! TCP transport for the simulated headset.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use crate::decoder::{DecodeOutput, DecoderStats, StreamDecoder};
use crate::error::{Result, StreamError};
use crate::packet::{encode_packet, MAX_FRAMES};
use crate::synth::{Simulator, FS_HZ};

pub const DEFAULT_PORT: u16 = 7878;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// One packet every `frames / 250` seconds.
    RealTime,
    /// As fast as the transport accepts.
    Unpaced,
}

/// Streams the whole simulation into `out`. Returns the number of frames sent.
pub fn stream_simulation<W: Write>(sim: &mut Simulator, out: &mut W, per_packet: usize, pacing: Pacing) -> Result<u64> {
    if per_packet == 0 || per_packet > MAX_FRAMES {
        return Err(StreamError::Config(format!("frames per packet must be 1..={MAX_FRAMES}")));
    }
    let t0 = Instant::now();
    let mut sent = 0u64;
    loop {
        let frames = sim.next_frames(per_packet);
        if frames.is_empty() {
            break;
        }
        if pacing == Pacing::RealTime {
            let due = Duration::from_secs_f64(sent as f64 / FS_HZ);
            if let Some(wait) = due.checked_sub(t0.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        let bytes = encode_packet(&frames)?;
        out.write_all(&bytes)?;
        sent += frames.len() as u64;
    }
    out.flush()?;
    Ok(sent)
}

/// Accepts one client on `listener`, writes the annotation side channel to
/// `annotations` and streams the simulation to the client.
pub fn serve_once(
    listener: &TcpListener,
    sim: &mut Simulator,
    per_packet: usize,
    pacing: Pacing,
    annotations: Option<&mut dyn Write>,
) -> Result<u64> {
    if let Some(w) = annotations {
        for a in sim.annotations() {
            writeln!(w, "{}", a.to_line())?;
        }
        w.flush()?;
    }
    let (mut stream, _) = listener.accept()?;
    stream.set_nodelay(true)?;
    stream_simulation(sim, &mut stream, per_packet, pacing)
}

/// Connects, decodes until the peer closes or `sink` returns `false`.
pub fn receive<A: ToSocketAddrs>(addr: A, mut sink: impl FnMut(DecodeOutput) -> bool) -> Result<DecoderStats> {
    let stream = TcpStream::connect(addr)?;
    receive_from(stream, &mut sink)
}

pub fn receive_from<R: Read>(mut src: R, sink: &mut impl FnMut(DecodeOutput) -> bool) -> Result<DecoderStats> {
    let mut dec = StreamDecoder::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = match src.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        };
        let out = dec.push(&buf[..n]);
        if (!out.frames.is_empty() || !out.gaps.is_empty()) && !sink(out) {
            break;
        }
    }
    Ok(dec.stats())
}

/// Connects with retries, for a client racing a freshly started server.
pub fn connect_retry<A: ToSocketAddrs + Clone>(addr: A, attempts: usize, delay: Duration) -> Result<TcpStream> {
    let mut last = None;
    for _ in 0..attempts.max(1) {
        match TcpStream::connect(addr.clone()) {
            Ok(s) => return Ok(s),
            Err(e) => {
                last = Some(e);
                std::thread::sleep(delay);
            }
        }
    }
    Err(last.map(StreamError::from).unwrap_or_else(|| StreamError::Config("no connection attempts".into())))
}
