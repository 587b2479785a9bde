//! Segment planning, DASH manifests and HLS playlists over fragmented MP4.

mod hls;
mod mpd;
mod package;

use std::fmt;

use thiserror::Error;

use crate::isobmff::{Mp4Error, SampleEntry};
use crate::mpegts::TsError;
use crate::nalio::{ElementaryStream, FrameRate, NalError};

pub use hls::{media_playlist, multivariant_playlist, write_hls, HlsMedia, HlsSegment};
pub use mpd::{write_mpd, LiveTiming, MpdConfig};
pub use package::{load_elementary_stream, package_presentation, OutputKind, PackageOptions, PackageReport};

pub const PROFILE_ONDEMAND: &str = "urn:mpeg:dash:profile:isoff-on-demand:2011";
pub const PROFILE_LIVE: &str = "urn:mpeg:dash:profile:isoff-live:2011";
pub const INIT_NAME: &str = "init.mp4";
pub const MEDIA_TEMPLATE: &str = "seg_$Number$.m4s";

#[derive(Debug, Error)]
pub enum DashError {
    #[error("stream has no IRAP access unit")]
    NoIrap,
    #[error("first access unit is not an IRAP picture")]
    FirstAuNotIrap,
    #[error("inconsistent segment plan: {0}")]
    InconsistentPlan(String),
    #[error("unsupported input: {0}")]
    UnsupportedInput(String),
    #[error(transparent)]
    Mp4(#[from] Mp4Error),
    #[error(transparent)]
    Ts(#[from] TsError),
    #[error(transparent)]
    Nal(#[from] NalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    OnDemand,
    Live,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::OnDemand => "ondemand",
            Profile::Live => "live",
        })
    }
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ondemand" | "on-demand" => Ok(Profile::OnDemand),
            "live" => Ok(Profile::Live),
            other => Err(format!("unknown profile {other:?}, expected ondemand or live")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedSegment {
    pub first_au: usize,
    pub au_count: usize,
    pub duration: u64,
    /// Decode time of the first access unit; also the timeline `t` value.
    pub start: u64,
    pub earliest_pts: u64,
}

impl PlannedSegment {
    pub fn end(&self) -> u64 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentPlan {
    pub target_dur_ms: u32,
    pub timescale: u32,
    pub segments: Vec<PlannedSegment>,
}

impl SegmentPlan {
    pub fn total_duration(&self) -> u64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn target_ticks(&self) -> u64 {
        self.target_dur_ms as u64 * self.timescale as u64 / 1000
    }

    pub fn starts(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.first_au).collect()
    }

    pub fn seconds(&self, ticks: u64) -> f64 {
        ticks as f64 / self.timescale as f64
    }

    /// Duration shared by every segment but the last, if there is one.
    pub fn constant_duration(&self) -> Option<u64> {
        let (last, rest) = self.segments.split_last()?;
        match rest.first() {
            None => Some(last.duration),
            Some(first) => {
                (rest.iter().all(|s| s.duration == first.duration) && last.duration <= first.duration).then_some(first.duration)
            }
        }
    }
}

/// Cut a timed stream into segments that each start with an IRAP picture.
///
/// A segment ends at the first IRAP whose presentation time is at least the
/// target duration after the segment's own start; the last segment takes
/// whatever remains.
pub fn plan_segments(es: &ElementaryStream, target_dur_ms: u32) -> Result<SegmentPlan, DashError> {
    if !es.aus.iter().any(|a| a.is_irap) {
        return Err(DashError::NoIrap);
    }
    if !es.aus[0].is_irap {
        return Err(DashError::FirstAuNotIrap);
    }
    let ts = es.timescale as u128;
    let target = target_dur_ms as u128 * ts;
    let mut starts = vec![0usize];
    let mut boundary_pts = es.timing(0).pts;
    for (i, au) in es.aus.iter().enumerate().skip(1) {
        let pts = es.timing(i).pts;
        if au.is_irap && pts >= boundary_pts && (pts - boundary_pts) as u128 * 1000 >= target {
            starts.push(i);
            boundary_pts = pts;
        }
    }
    let mut segments = Vec::with_capacity(starts.len());
    for (k, &first) in starts.iter().enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(es.aus.len());
        let duration = (first..end).map(|i| es.timing(i).duration as u64).sum();
        let earliest_pts = (first..end).map(|i| es.timing(i).pts).min().unwrap_or(0);
        segments.push(PlannedSegment { first_au: first, au_count: end - first, duration, start: es.timing(first).dts, earliest_pts });
    }
    Ok(SegmentPlan { target_dur_ms, timescale: es.timescale, segments })
}

/// One video representation as advertised in manifests.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub id: String,
    pub bandwidth: u64,
    pub width: u32,
    pub height: u32,
    pub codecs: String,
    pub frame_rate: Option<FrameRate>,
}

/// Frame rate implied by the first access unit's duration, as a reduced fraction.
pub fn stream_frame_rate(es: &ElementaryStream) -> Option<FrameRate> {
    let d = es.aus.first()?.timing?.duration;
    if d == 0 || es.timescale == 0 {
        return None;
    }
    let (mut a, mut b) = (es.timescale, d);
    while b != 0 {
        (a, b) = (b, a % b);
    }
    Some(FrameRate::new(es.timescale / a, d / a))
}

/// Codecs parameter: `<sample entry>.<profile_idc>.<L|H><level_idc>`.
///
/// This is a simplified form; callers may substitute their own string.
pub fn codecs_string(entry: &SampleEntry) -> Option<String> {
    let SampleEntry::Vvc { kind, config, .. } = entry else { return None };
    let ptl = &config.ptl.as_ref()?.native_ptl;
    Some(format!("{kind}.{}.{}{}", ptl.profile_idc, if ptl.tier_flag { 'H' } else { 'L' }, ptl.level_idc))
}

/// `ceil(bits / seconds)` with exact integer arithmetic.
pub fn bandwidth(media_bytes: u64, duration_ticks: u64, timescale: u32) -> u64 {
    if duration_ticks == 0 {
        return 0;
    }
    let bits = media_bytes as u128 * 8 * timescale as u128;
    bits.div_ceil(duration_ticks as u128) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nalio::nal::{NalHeader, NalUnit, IDR_N_LP, TRAIL_NUT};
    use crate::nalio::{AccessUnit, AuTiming};

    fn stream(irap_times_ms: &[u64], frame_ms: u64, total_ms: u64) -> ElementaryStream {
        let aus = (0..total_ms / frame_ms)
            .map(|i| {
                let t = i * frame_ms;
                let ty = if irap_times_ms.contains(&t) { IDR_N_LP } else { TRAIL_NUT };
                let mut au = AccessUnit::new(vec![NalUnit::new(NalHeader::new(ty, 0, 0), vec![0x80])], i as usize);
                au.timing = Some(AuTiming { dts: t, pts: t, duration: frame_ms as u32 });
                au
            })
            .collect();
        ElementaryStream { timescale: 1000, aus }
    }

    // brute-force restatement of the boundary rule
    fn oracle(irap: &[u64], target: u64) -> Vec<u64> {
        let mut out = vec![0];
        for &t in irap.iter().skip(1) {
            if t >= out.last().unwrap() + target {
                out.push(t);
            }
        }
        out
    }

    #[test]
    fn periodic_idr_gives_exact_segments() {
        let irap: Vec<u64> = (0..5).map(|k| k * 2000).collect();
        let plan = plan_segments(&stream(&irap, 40, 10_000), 2000).unwrap();
        assert_eq!(plan.segments.len(), 5);
        assert!(plan.segments.iter().all(|s| s.duration == 2000 && s.au_count == 50));
        assert_eq!(plan.constant_duration(), Some(2000));
    }

    #[test]
    fn first_irap_at_or_after_target() {
        let irap = [0, 1900, 4100];
        let plan = plan_segments(&stream(&irap, 100, 6000), 2000).unwrap();
        let starts: Vec<u64> = plan.segments.iter().map(|s| s.start).collect();
        assert_eq!(starts, oracle(&irap, 2000));
        assert_eq!(starts, [0, 4100]);
        assert_eq!(plan.total_duration(), 6000);
        assert_eq!(plan.constant_duration(), Some(4100));
    }

    #[test]
    fn single_irap_and_errors() {
        let plan = plan_segments(&stream(&[0], 40, 4000), 2000).unwrap();
        assert_eq!(plan.segments.len(), 1);
        assert_eq!(plan.segments[0].au_count, 100);
        assert!(matches!(plan_segments(&stream(&[40], 40, 400), 2000), Err(DashError::FirstAuNotIrap)));
        assert!(matches!(plan_segments(&stream(&[], 40, 400), 2000), Err(DashError::NoIrap)));
    }

    #[test]
    fn bandwidth_rounds_up() {
        assert_eq!(bandwidth(1000, 1000, 1000), 8000);
        assert_eq!(bandwidth(1001, 3000, 1000), 2670);
    }
}
