//! HLS media and multivariant playlists over fragmented MP4.

use std::fmt::Write;

use super::{Representation, SegmentPlan};

/// Where a segment (or the init section) lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HlsSegment {
    File(String),
    /// A byte range of a larger file.
    Range { uri: String, offset: u64, length: u64 },
}

impl HlsSegment {
    fn uri(&self) -> &str {
        match self {
            HlsSegment::File(u) | HlsSegment::Range { uri: u, .. } => u,
        }
    }
}

/// A media playlist before rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct HlsMedia {
    pub map: HlsSegment,
    /// `(duration in seconds, location)` per segment.
    pub segments: Vec<(f64, HlsSegment)>,
    pub media_sequence: u64,
    /// Write `EXT-X-ENDLIST`; false for a live sliding window.
    pub ended: bool,
}

impl HlsMedia {
    /// One playlist entry per planned segment, in plan order.
    pub fn from_plan(plan: &SegmentPlan, map: HlsSegment, locations: Vec<HlsSegment>) -> HlsMedia {
        let segments = plan.segments.iter().zip(locations).map(|(s, loc)| (plan.seconds(s.duration), loc)).collect();
        HlsMedia { map, segments, media_sequence: 0, ended: true }
    }

    pub fn target_duration(&self) -> u64 {
        // a tiny epsilon keeps 2.0000000001 from rounding up to 3
        self.segments.iter().map(|(d, _)| (d - 1e-9).ceil().max(1.0) as u64).max().unwrap_or(1)
    }
}

pub fn media_playlist(media: &HlsMedia) -> String {
    let mut out = String::from("#EXTM3U\n#EXT-X-VERSION:7\n");
    let _ = writeln!(out, "#EXT-X-TARGETDURATION:{}", media.target_duration());
    let _ = writeln!(out, "#EXT-X-MEDIA-SEQUENCE:{}", media.media_sequence);
    if media.ended {
        out.push_str("#EXT-X-PLAYLIST-TYPE:VOD\n");
    }
    out.push_str("#EXT-X-INDEPENDENT-SEGMENTS\n");
    match &media.map {
        HlsSegment::File(uri) => {
            let _ = writeln!(out, "#EXT-X-MAP:URI=\"{uri}\"");
        }
        HlsSegment::Range { uri, offset, length } => {
            let _ = writeln!(out, "#EXT-X-MAP:URI=\"{uri}\",BYTERANGE=\"{length}@{offset}\"");
        }
    }
    for (dur, seg) in &media.segments {
        let _ = writeln!(out, "#EXTINF:{dur:.5},");
        if let HlsSegment::Range { offset, length, .. } = seg {
            let _ = writeln!(out, "#EXT-X-BYTERANGE:{length}@{offset}");
        }
        out.push_str(seg.uri());
        out.push('\n');
    }
    if media.ended {
        out.push_str("#EXT-X-ENDLIST\n");
    }
    out
}

pub fn multivariant_playlist(rep: &Representation, media_uri: &str) -> String {
    let mut out = String::from("#EXTM3U\n#EXT-X-VERSION:7\n#EXT-X-INDEPENDENT-SEGMENTS\n");
    let _ = write!(
        out,
        "#EXT-X-STREAM-INF:BANDWIDTH={},RESOLUTION={}x{},CODECS=\"{}\"",
        rep.bandwidth, rep.width, rep.height, rep.codecs
    );
    if let Some(fr) = rep.frame_rate {
        let _ = write!(out, ",FRAME-RATE={:.3}", fr.as_f64());
    }
    out.push('\n');
    out.push_str(media_uri);
    out.push('\n');
    out
}

/// Multivariant and media playlist for a finished presentation.
pub fn write_hls(
    plan: &SegmentPlan,
    rep: &Representation,
    map: HlsSegment,
    locations: Vec<HlsSegment>,
    media_uri: &str,
) -> (String, String) {
    let media = HlsMedia::from_plan(plan, map, locations);
    (multivariant_playlist(rep, media_uri), media_playlist(&media))
}
