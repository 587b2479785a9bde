//! ISO base media file format: VVC sample entries, progressive and fragmented
//! packaging, and the reverse MP4-to-Annex-B filter.

mod boxes;
mod fragment;
mod progressive;
mod reader;
mod vvcc;

use std::fmt;

use thiserror::Error;

use crate::nalio::NalError;

pub use boxes::{dump_tree, find_box, read_box_tree, write_box_tree, BoxContent, FourCc, Mp4Box, SizeForm};
pub use fragment::{fragment, patch_fragment, FragmentedOutput, SapType, SidxEntry};
pub use progressive::{package_progressive, prepare_samples, PreparedSamples};
pub use reader::{extract_annex_b, extract_elementary_stream, read_tracks, split_sample, ExtractedStream};
pub use vvcc::{NalArray, VvcConfigRecord, VvcPtlInfo};

pub(crate) use boxes::{put_box, put_full_box, Cursor, PutBe};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Mp4Error {
    #[error("box at byte {offset} extends past the end of its parent")]
    TruncatedBox { offset: u64 },
    #[error("box at byte {offset} declares invalid size {size}")]
    SizeOverflow { offset: u64, size: u64 },
    #[error("malformed box: {0}")]
    Malformed(String),
    #[error("first access unit is not an IRAP picture")]
    NoIrapStart,
    #[error("stream carries no {0}")]
    MissingParameterSets(&'static str),
    #[error("NAL of {size} bytes does not fit a {length_size}-byte length field")]
    OversizedNal { size: usize, length_size: usize },
    #[error("conflicting {kind} with id {id}; use the in-band sample entry")]
    ParameterSetConflict { kind: &'static str, id: u8 },
    #[error("file contains no VVC track")]
    NoVvcTrack,
    #[error("sample {sample} lies outside the media data")]
    CorruptSampleTable { sample: usize },
    #[error("segment boundary at access unit {index} is not an IRAP picture")]
    BoundaryNotIrap { index: usize },
    #[error(transparent)]
    Nal(#[from] NalError),
}

/// VVC sample entry type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleEntryKind {
    /// Parameter sets only in the `vvcC` record.
    #[default]
    Vvc1,
    /// Parameter sets in-band, duplicated in `vvcC`.
    Vvc2,
}

impl SampleEntryKind {
    pub fn fourcc(self) -> &'static [u8; 4] {
        match self {
            SampleEntryKind::Vvc1 => b"vvc1",
            SampleEntryKind::Vvc2 => b"vvc2",
        }
    }

    pub fn from_fourcc(f: &[u8]) -> Option<SampleEntryKind> {
        match f {
            b"vvc1" => Some(SampleEntryKind::Vvc1),
            b"vvc2" => Some(SampleEntryKind::Vvc2),
            _ => None,
        }
    }
}

impl fmt::Display for SampleEntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(std::str::from_utf8(self.fourcc()).expect("ascii"))
    }
}

impl std::str::FromStr for SampleEntryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SampleEntryKind::from_fourcc(s.as_bytes()).ok_or_else(|| format!("unknown sample entry {s:?}, expected vvc1 or vvc2"))
    }
}

/// Audio carried through unparsed: a complete sample entry box and its samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioTrack {
    pub timescale: u32,
    /// Full sample entry box, e.g. an `mp4a` box with its `esds`.
    pub sample_entry: Vec<u8>,
    pub samples: Vec<AudioSample>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioSample {
    pub data: Vec<u8>,
    pub duration: u32,
}

impl AudioTrack {
    pub fn duration_ticks(&self) -> u64 {
        self.samples.iter().map(|s| s.duration as u64).sum()
    }
}

/// One entry of a sample table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SampleInfo {
    /// Absolute file offset of the sample data.
    pub offset: u64,
    pub size: u32,
    pub duration: u32,
    pub sync: bool,
    pub composition_offset: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SampleEntry {
    Vvc { kind: SampleEntryKind, config: VvcConfigRecord, width: u16, height: u16 },
    Opaque(Vec<u8>),
}

/// The sample-level view of one track, shared by writer and reader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackModel {
    pub track_id: u32,
    pub timescale: u32,
    pub samples: Vec<SampleInfo>,
    pub sample_entry: SampleEntry,
}

impl TrackModel {
    pub fn is_video(&self) -> bool {
        matches!(self.sample_entry, SampleEntry::Vvc { .. })
    }

    pub fn duration_ticks(&self) -> u64 {
        self.samples.iter().map(|s| s.duration as u64).sum()
    }

    pub fn sync_samples(&self) -> Vec<u32> {
        self.samples.iter().enumerate().filter(|(_, s)| s.sync).map(|(i, _)| i as u32 + 1).collect()
    }

    pub fn has_composition_offsets(&self) -> bool {
        self.samples.iter().any(|s| s.composition_offset != 0)
    }
}

/// Rescale `v` from timescale `from` to timescale `to`, rounding to nearest.
pub(crate) fn rescale(v: u64, from: u32, to: u32) -> u64 {
    ((v as u128 * to as u128 + from as u128 / 2) / from as u128) as u64
}
