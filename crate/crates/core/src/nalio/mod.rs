//! Elementary stream parsing: Annex B framing, NAL headers, emulation
//! prevention, partial SPS decoding, access unit assembly and format probing.

mod annexb;
mod au;
pub mod bits;
mod ebsp;
pub mod nal;
mod probe;
pub mod sps;

use thiserror::Error;

pub use annexb::{scan_annex_b, scan_annex_b_with, write_annex_b, AnnexBScan};
pub use au::{
    assemble_access_units, assemble_access_units_with, AccessUnit, AuRules, AuTiming, ElementaryStream,
    FrameRate,
};
pub use ebsp::{insert_emulation_prevention, remove_emulation_prevention, remove_emulation_prevention_lenient, EbspIssue};
pub use nal::{NalCategory, NalHeader, NalUnit};
pub use probe::{probe_format, ContainerKind, PROBE_LEN};
pub use sps::{parameter_set_id, parse_sps_summary, sps_from_nal, ProfileTierLevel, SpsSummary};

/// Whether recoverable irregularities are reported as warnings or rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Lenient,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NalError {
    #[error("no start code found in non-empty input")]
    NoStartCodeFound,
    #[error("start code at byte {offset} is followed by fewer than 2 header bytes")]
    TruncatedNal { offset: usize },
    #[error("forbidden_zero_bit set in NAL at byte {offset}")]
    ForbiddenBitSet { offset: usize },
    #[error("malformed EBSP at byte {position}: {message}")]
    MalformedEbsp { position: usize, message: String },
    #[error("bitstream underflow at bit {bit}")]
    BitstreamUnderflow { bit: usize },
    #[error("unsupported syntax: {0}")]
    UnsupportedSyntax(String),
    #[error("suffix NAL at byte {offset} precedes any access unit")]
    OrphanSuffix { offset: usize },
}
