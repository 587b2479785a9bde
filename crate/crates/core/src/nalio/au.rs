//! Access unit assembly and timing.

use std::fmt;

use super::nal::{self, NalCategory, NalUnit};
use super::NalError;

/// Decode/presentation timing of one access unit, in the stream's timescale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AuTiming {
    pub dts: u64,
    pub pts: u64,
    pub duration: u32,
}

impl AuTiming {
    pub fn composition_offset(&self) -> i64 {
        self.pts as i64 - self.dts as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessUnit {
    pub nals: Vec<NalUnit>,
    pub is_irap: bool,
    pub decode_index: usize,
    pub timing: Option<AuTiming>,
}

impl AccessUnit {
    /// Build an access unit, deriving `is_irap` from its VCL NALs.
    pub fn new(nals: Vec<NalUnit>, decode_index: usize) -> AccessUnit {
        let is_irap = irap_flag(&nals);
        AccessUnit { nals, is_irap, decode_index, timing: None }
    }

    pub fn vcl_nals(&self) -> impl Iterator<Item = &NalUnit> {
        self.nals.iter().filter(|n| n.is_vcl())
    }

    /// True when every VCL NAL is an IDR picture.
    pub fn is_idr(&self) -> bool {
        self.is_irap && self.vcl_nals().all(|n| nal::is_idr(n.nal_unit_type()))
    }

    /// Total NAL bytes, headers included, excluding any framing.
    pub fn payload_size(&self) -> usize {
        self.nals.iter().map(NalUnit::size).sum()
    }
}

fn irap_flag(nals: &[NalUnit]) -> bool {
    let mut vcl = nals.iter().filter(|n| n.is_vcl()).peekable();
    vcl.peek().is_some() && vcl.all(|n| nal::is_irap(n.nal_unit_type()))
}

/// Knobs for [`assemble_access_units_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct AuRules {
    /// Split consecutive VCL NALs when the slice carries its own picture header
    /// (`sh_picture_header_in_slice_header_flag`, the first slice header bit).
    pub slice_flag_detection: bool,
}

/// Group NAL units into access units with the default rules.
pub fn assemble_access_units(nals: &[NalUnit]) -> Result<Vec<AccessUnit>, NalError> {
    assemble_access_units_with(nals, AuRules::default())
}

/// Group NAL units into access units.
///
/// A new access unit starts at an AUD, at a picture header, at any other prefix
/// NAL following a VCL NAL, or at a VCL NAL that follows a suffix NAL. Suffix
/// NALs stay with the access unit before them. Non-VCL NALs at the end of the
/// stream are appended to the last access unit.
pub fn assemble_access_units_with(nals: &[NalUnit], rules: AuRules) -> Result<Vec<AccessUnit>, NalError> {
    let mut aus: Vec<AccessUnit> = Vec::new();
    let mut current: Vec<NalUnit> = Vec::new();
    let mut has_vcl = false;
    // a suffix NAL has been seen since the last VCL of `current`
    let mut after_suffix = false;

    let close = |current: &mut Vec<NalUnit>, aus: &mut Vec<AccessUnit>| {
        let idx = aus.len();
        aus.push(AccessUnit::new(std::mem::take(current), idx));
    };

    for unit in nals {
        let t = unit.nal_unit_type();
        let cat = unit.category();
        if cat.is_vcl() {
            let new_picture = has_vcl
                && (after_suffix || (rules.slice_flag_detection && picture_header_in_slice(unit)));
            if new_picture {
                close(&mut current, &mut aus);
            }
            current.push(unit.clone());
            has_vcl = true;
            after_suffix = false;
        } else if nal::is_suffix(t) || cat == NalCategory::EosEob {
            if !has_vcl && nal::is_suffix(t) {
                return Err(NalError::OrphanSuffix { offset: unit.offset });
            }
            current.push(unit.clone());
            after_suffix = has_vcl;
        } else {
            // AUD, parameter sets, PH, prefix SEI/APS, reserved and unspecified types
            if has_vcl {
                close(&mut current, &mut aus);
                has_vcl = false;
                after_suffix = false;
            }
            current.push(unit.clone());
        }
    }
    if has_vcl {
        close(&mut current, &mut aus);
    } else if !current.is_empty() {
        if let Some(last) = aus.last_mut() {
            last.nals.append(&mut current);
        }
    }
    Ok(aus)
}

fn picture_header_in_slice(unit: &NalUnit) -> bool {
    unit.ebsp.first().is_some_and(|b| b & 0x80 != 0)
}

/// A frame rate as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl FrameRate {
    pub fn new(num: u32, den: u32) -> FrameRate {
        assert!(num > 0 && den > 0, "frame rate must be positive");
        FrameRate { num, den }
    }

    /// Track timescale that makes every frame duration integral: `num * 1000`.
    pub fn timescale(self) -> u32 {
        self.num * 1000
    }

    pub fn frame_duration(self) -> u32 {
        self.den * 1000
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Default for FrameRate {
    fn default() -> Self {
        FrameRate::new(25, 1)
    }
}

impl fmt::Display for FrameRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl std::str::FromStr for FrameRate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n, d),
            None => (s, "1"),
        };
        let num: u32 = n.trim().parse().map_err(|_| format!("bad frame rate {s:?}"))?;
        let den: u32 = d.trim().parse().map_err(|_| format!("bad frame rate {s:?}"))?;
        if num == 0 || den == 0 {
            return Err(format!("bad frame rate {s:?}"));
        }
        Ok(FrameRate::new(num, den))
    }
}

/// A timed sequence of access units: the common input of the packagers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementaryStream {
    pub timescale: u32,
    pub aus: Vec<AccessUnit>,
}

impl ElementaryStream {
    /// Give every access unit constant-rate timing with `pts == dts`.
    pub fn with_frame_rate(mut aus: Vec<AccessUnit>, rate: FrameRate) -> ElementaryStream {
        let dur = rate.frame_duration();
        for (i, au) in aus.iter_mut().enumerate() {
            let t = i as u64 * dur as u64;
            au.timing = Some(AuTiming { dts: t, pts: t, duration: dur });
        }
        ElementaryStream { timescale: rate.timescale(), aus }
    }

    /// Scan and assemble an Annex B byte stream at a constant frame rate.
    pub fn from_annex_b(data: &[u8], rate: FrameRate) -> Result<ElementaryStream, NalError> {
        let nals = super::scan_annex_b(data)?;
        let aus = assemble_access_units(&nals)?;
        Ok(ElementaryStream::with_frame_rate(aus, rate))
    }

    pub fn timing(&self, i: usize) -> AuTiming {
        self.aus[i].timing.unwrap_or_default()
    }

    /// Sum of all access unit durations.
    pub fn duration_ticks(&self) -> u64 {
        self.aus.iter().map(|a| a.timing.map_or(0, |t| t.duration as u64)).sum()
    }

    pub fn nals(&self) -> impl Iterator<Item = &NalUnit> {
        self.aus.iter().flat_map(|a| a.nals.iter())
    }

    /// Frame rate implied by the first access unit's duration.
    pub fn nominal_frame_rate(&self) -> Option<f64> {
        let d = self.aus.first()?.timing?.duration;
        (d > 0).then(|| self.timescale as f64 / d as f64)
    }
}
