use std::fmt;

use serde::Serialize;

/// Number of bytes [`probe_format`] looks at.
pub const PROBE_LEN: usize = 512;

const TOP_LEVEL_BOXES: &[&[u8; 4]] = &[
    b"ftyp", b"styp", b"moov", b"moof", b"mdat", b"free", b"skip", b"sidx", b"wide", b"uuid", b"pdin",
    b"meta", b"emsg", b"prft",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContainerKind {
    AnnexB,
    IsoBmff,
    Mpeg2Ts,
    Unknown,
}

impl fmt::Display for ContainerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContainerKind::AnnexB => "annexb",
            ContainerKind::IsoBmff => "isobmff",
            ContainerKind::Mpeg2Ts => "mpeg2ts",
            ContainerKind::Unknown => "unknown",
        })
    }
}

impl std::str::FromStr for ContainerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "annexb" | "es" | "vvc" | "266" => Ok(ContainerKind::AnnexB),
            "isobmff" | "mp4" => Ok(ContainerKind::IsoBmff),
            "mpeg2ts" | "ts" => Ok(ContainerKind::Mpeg2Ts),
            other => Err(format!("unknown container kind {other:?}")),
        }
    }
}

/// Guess the container of a byte stream from its first bytes.
///
/// Precedence is ISO-BMFF, then MPEG-2 TS, then Annex B. Only the first
/// [`PROBE_LEN`] bytes of `head` are examined.
pub fn probe_format(head: &[u8], total_len: u64) -> ContainerKind {
    let head = &head[..head.len().min(PROBE_LEN)];
    if head.len() >= 8 && TOP_LEVEL_BOXES.iter().any(|b| &head[4..8] == *b) {
        return ContainerKind::IsoBmff;
    }
    if head.first() == Some(&0x47)
        && [188usize, 376].iter().all(|&o| o >= head.len() || head[o] == 0x47)
        && total_len >= 188
    {
        return ContainerKind::Mpeg2Ts;
    }
    let zeros = head.iter().take_while(|&&b| b == 0).count();
    if zeros >= 2 && head.get(zeros) == Some(&1) {
        return ContainerKind::AnnexB;
    }
    let window = &head[zeros..head.len().min(zeros + 64)];
    if window.windows(3).any(|w| w == [0, 0, 1]) {
        return ContainerKind::AnnexB;
    }
    ContainerKind::Unknown
}
