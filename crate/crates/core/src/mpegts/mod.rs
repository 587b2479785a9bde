//! MPEG-2 transport stream: PSI, PES, constant-bitrate multiplexing with PCR,
//! and a streaming demultiplexer.

mod demux;
mod mux;
mod packet;
mod pes;
mod psi;

use thiserror::Error;

pub use demux::{demux_to_elementary, demux_ts, DemuxOutput, DemuxedStream, PesInfo, TsDemuxer, TsIssue};
pub use mux::{mux_ts, MuxConfig, RateMode, TimedFrame, TsAudio, TsMuxer};
pub use packet::{Adaptation, TsPacket, NULL_PID, TS_PACKET_SIZE};
pub use pes::{build_pes, parse_pes_header, PesHeader};
pub use psi::{build_psi, crc32_mpeg2, parse_pat, parse_pmt, section_packets};

/// Stream type signalled in the PMT for VVC video.
pub const VVC_STREAM_TYPE: u8 = 0x33;
/// ADTS AAC, the default for pass-through audio.
pub const AAC_STREAM_TYPE: u8 = 0x0F;

pub const DEFAULT_PMT_PID: u16 = 0x0100;
pub const DEFAULT_VIDEO_PID: u16 = 0x0101;
pub const DEFAULT_AUDIO_PID: u16 = 0x0102;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TsError {
    #[error("lost sync at byte {offset}")]
    BadSync { offset: u64 },
    #[error("CRC mismatch in section on PID {pid:#06x}")]
    CrcMismatch { pid: u16 },
    #[error("PID {pid:#06x} packet {packet_index}: continuity counter {found}, expected {expected}")]
    ContinuityError { pid: u16, packet_index: u64, expected: u8, found: u8 },
    #[error("program does not fit one PMT section")]
    TooManyStreams,
    #[error("access unit at {timestamp_s:.3} s cannot be delivered in time at {rate_bps} bit/s")]
    RateExceeded { timestamp_s: f64, rate_bps: u64 },
    #[error("malformed {0}")]
    Malformed(String),
    #[error("no VVC stream in program")]
    NoVvcStream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Vvc,
    Audio,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsStream {
    pub pid: u16,
    pub stream_type: u8,
    pub kind: StreamKind,
}

/// A single-program transport stream description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsProgram {
    pub program_number: u16,
    pub pmt_pid: u16,
    pub pcr_pid: u16,
    pub streams: Vec<TsStream>,
}

impl TsProgram {
    /// Video (and optionally audio) on the default PIDs.
    pub fn standard(vvc_stream_type: u8, audio_stream_type: Option<u8>) -> TsProgram {
        let mut streams = vec![TsStream { pid: DEFAULT_VIDEO_PID, stream_type: vvc_stream_type, kind: StreamKind::Vvc }];
        if let Some(t) = audio_stream_type {
            streams.push(TsStream { pid: DEFAULT_AUDIO_PID, stream_type: t, kind: StreamKind::Audio });
        }
        TsProgram { program_number: 1, pmt_pid: DEFAULT_PMT_PID, pcr_pid: DEFAULT_VIDEO_PID, streams }
    }

    pub fn stream(&self, pid: u16) -> Option<&TsStream> {
        self.streams.iter().find(|s| s.pid == pid)
    }

    pub fn video_pid(&self) -> Option<u16> {
        self.streams.iter().find(|s| s.kind == StreamKind::Vvc).map(|s| s.pid)
    }
}

/// Classify a PMT stream type.
pub fn stream_kind(stream_type: u8, vvc_stream_type: u8) -> StreamKind {
    match stream_type {
        t if t == vvc_stream_type => StreamKind::Vvc,
        0x03 | 0x04 | 0x0F | 0x11 | 0x81 | 0x87 => StreamKind::Audio,
        _ => StreamKind::Other,
    }
}
