//! Device link for the neoscan headset: packet codec, resynchronizing
//! decoder, synthetic device, TCP transport, session files, EDF and IMU
//! movement alerts.

pub mod convert;
pub mod decoder;
pub mod edf;
pub mod error;
pub mod motion;
pub mod net;
pub mod packet;
pub mod session;
pub mod synth;

pub use convert::{frames_to_imu, frames_to_recording, ImuSample};
pub use decoder::{decode_stream, DecodeOutput, DecoderStats, GapReport, StreamDecoder};
pub use edf::{read_edf, write_edf};
pub use error::{Result, StreamError};
pub use motion::{detect_motion, MotionAlert, MotionConfig, MotionDetector, MotionEvent, Severity};
pub use packet::{decode_packet, encode_packet, Packet};
pub use session::{read_session, SessionData, SessionHeader, SessionTail, SessionWriter};
pub use synth::{Annotation, Segment, Simulator, SynthConfig};
