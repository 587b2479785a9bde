//! Live origin: clock-driven segment availability, an HTTP server over
//! packaged presentations, and paced UDP transport stream emission.

mod http;
mod udp;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, SubsecRound, Utc};
use thiserror::Error;

use crate::dashhls::{
    media_playlist, multivariant_playlist, write_mpd, DashError, HlsMedia, HlsSegment, LiveTiming, MpdConfig,
    PackageReport, PlannedSegment, Representation, SegmentPlan,
};
use crate::isobmff::{patch_fragment, Mp4Error};
use crate::mpegts::TsError;

pub use http::{content_type, http_serve, parse_range, Origin, OriginHandle};
pub use udp::{udp_emit, UdpStats, DATAGRAM_SIZE};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {reason}")]
    Bind { addr: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ts(#[from] TsError),
    #[error(transparent)]
    Dash(#[from] DashError),
    #[error(transparent)]
    Mp4(#[from] Mp4Error),
}

/// Source of wall-clock time. Library code never reads the system clock directly.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A manually driven clock, shared between clones.
#[derive(Debug, Clone)]
pub struct TestClock(Arc<Mutex<DateTime<Utc>>>);

impl TestClock {
    pub fn new(t: DateTime<Utc>) -> TestClock {
        TestClock(Arc::new(Mutex::new(t)))
    }

    pub fn set(&self, t: DateTime<Utc>) {
        *self.0.lock().expect("clock poisoned") = t;
    }

    pub fn advance(&self, d: Duration) {
        let mut t = self.0.lock().expect("clock poisoned");
        *t += d;
    }
}

impl Clock for TestClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().expect("clock poisoned")
    }
}

/// Availability snapshot at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pace {
    /// Segments 1..=available may be downloaded.
    pub available: u64,
    /// Lowest segment number still inside the time-shift window.
    pub first_listed: u64,
}

impl Pace {
    pub fn listed(&self) -> u64 {
        self.available + 1 - self.first_listed.min(self.available + 1)
    }
}

fn ns(d: Duration) -> i128 {
    d.num_nanoseconds().map_or(i128::from(d.num_seconds()) * 1_000_000_000, i128::from)
}

/// Number of segment ends (from `ends`, cumulative and increasing) that are
/// at or before `ticks`, repeating the list every `period` when looping.
fn ends_upto(ends: &[u64], ticks: i128, looping: bool) -> u64 {
    if ticks < 0 || ends.is_empty() {
        return 0;
    }
    let ticks = ticks as u128;
    let period = *ends.last().expect("non-empty") as u128;
    let count_in = |t: u128| ends.partition_point(|&e| e as u128 <= t) as u64;
    if looping && period > 0 {
        (ticks / period) as u64 * ends.len() as u64 + count_in(ticks % period)
    } else {
        count_in(ticks)
    }
}

/// Segments available at `now`: segment k (1-based) becomes available once
/// `now >= session_start + end_k - availability_offset`, where `end_k` is the
/// media time at which the segment ends. Exact to the nanosecond.
pub fn pace(
    plan: &SegmentPlan,
    session_start: DateTime<Utc>,
    availability_offset: Duration,
    time_shift_buffer: Duration,
    looping: bool,
    now: DateTime<Utc>,
) -> Pace {
    let ends: Vec<u64> = plan
        .segments
        .iter()
        .scan(0u64, |acc, s| {
            *acc += s.duration;
            Some(*acc)
        })
        .collect();
    let ts = plan.timescale as i128;
    let to_ticks = |elapsed_ns: i128| elapsed_ns.checked_mul(ts).map_or(i128::MAX, |v| v.div_euclid(1_000_000_000));
    let elapsed = ns(now - session_start) + ns(availability_offset);
    let available = ends_upto(&ends, to_ticks(elapsed), looping);
    // a segment stays listed until it ends before the start of the window
    let gone = ends_upto(&ends, to_ticks(elapsed - ns(time_shift_buffer)), looping);
    Pace { available, first_listed: (gone + 1).min(available.max(1)) }
}

/// A presentation being published in real time from pre-packaged segments.
#[derive(Debug)]
pub struct LiveSession {
    pub plan: SegmentPlan,
    pub representation: Representation,
    pub init: Vec<u8>,
    pub segments: Vec<Vec<u8>>,
    /// Whole seconds, as announced in the MPD.
    pub session_start: DateTime<Utc>,
    pub availability_offset: Duration,
    pub time_shift_buffer: Duration,
    pub looping: bool,
    pub timeline: bool,
    pub manifest_name: String,
    published_upto: AtomicU64,
}

impl LiveSession {
    /// `session_start` is truncated to whole seconds.
    pub fn new(report: &PackageReport, session_start: DateTime<Utc>, availability_offset_s: f64) -> LiveSession {
        LiveSession {
            plan: report.plan.clone(),
            representation: report.representation.clone(),
            init: report.fragments.init.clone(),
            segments: report.fragments.segments.clone(),
            session_start: session_start.trunc_subsecs(0),
            availability_offset: Duration::nanoseconds((availability_offset_s * 1e9).round() as i64),
            time_shift_buffer: Duration::seconds(30),
            looping: false,
            timeline: true,
            manifest_name: "live.mpd".into(),
            published_upto: AtomicU64::new(0),
        }
    }

    pub fn with_loop(mut self, looping: bool) -> LiveSession {
        self.looping = looping;
        self
    }

    pub fn with_timeline(mut self, timeline: bool) -> LiveSession {
        self.timeline = timeline;
        self
    }

    /// Availability at `now`; also advances the published index.
    pub fn pace(&self, now: DateTime<Utc>) -> Pace {
        let p = pace(&self.plan, self.session_start, self.availability_offset, self.time_shift_buffer, self.looping, now);
        self.published_upto.fetch_max(p.available, Ordering::SeqCst);
        p
    }

    pub fn published_upto(&self) -> u64 {
        self.published_upto.load(Ordering::SeqCst)
    }

    /// Segment number `k` (1-based, continuing across loops) as planned segment.
    pub fn planned(&self, k: u64) -> Option<PlannedSegment> {
        let n = self.plan.segments.len() as u64;
        if k == 0 || n == 0 || (!self.looping && k > n) {
            return None;
        }
        let (lap, idx) = ((k - 1) / n, ((k - 1) % n) as usize);
        let shift = lap * self.plan.total_duration();
        let s = self.plan.segments[idx];
        Some(PlannedSegment { start: s.start + shift, earliest_pts: s.earliest_pts + shift, ..s })
    }

    /// Bytes of segment `k` if published at `now`.
    pub fn segment(&self, k: u64, now: DateTime<Utc>) -> Result<Option<Vec<u8>>, Mp4Error> {
        if k > self.pace(now).available {
            return Ok(None);
        }
        let Some(planned) = self.planned(k) else { return Ok(None) };
        let idx = ((k - 1) % self.segments.len() as u64) as usize;
        let mut data = self.segments[idx].clone();
        if k as usize > self.segments.len() {
            patch_fragment(&mut data, k as u32, planned.start)?;
        }
        Ok(Some(data))
    }

    fn window(&self, p: Pace) -> SegmentPlan {
        let segments = (p.first_listed..=p.available).filter_map(|k| self.planned(k)).collect();
        SegmentPlan { segments, ..self.plan.clone() }
    }

    /// The dynamic MPD as of `now`; lists only published segments.
    pub fn mpd(&self, now: DateTime<Utc>) -> Result<String, DashError> {
        let p = self.pace(now);
        let mut live = LiveTiming::new(self.session_start, now, self.plan.target_dur_ms);
        live.availability_time_offset = ns(self.availability_offset) as f64 / 1e9;
        live.time_shift_buffer_s = self.time_shift_buffer.num_seconds().max(0) as u32;
        let mut cfg = MpdConfig { live: Some(live), ..MpdConfig::live(self.representation.clone(), self.timeline) };
        if self.timeline {
            cfg.start_number = p.first_listed;
            write_mpd(&self.window(p), &cfg)
        } else {
            write_mpd(&self.plan, &cfg)
        }
    }

    /// Sliding-window media playlist as of `now`.
    pub fn media_playlist(&self, now: DateTime<Utc>) -> String {
        let p = self.pace(now);
        let window = self.window(p);
        let segments = window
            .segments
            .iter()
            .zip(p.first_listed..)
            .map(|(s, k)| (window.seconds(s.duration), HlsSegment::File(format!("seg_{k}.m4s"))))
            .collect();
        let ended = !self.looping && p.available >= self.plan.segments.len() as u64;
        let media = HlsMedia {
            map: HlsSegment::File(crate::dashhls::INIT_NAME.into()),
            segments,
            media_sequence: p.first_listed.saturating_sub(1),
            ended,
        };
        media_playlist(&media)
    }

    pub fn multivariant_playlist(&self) -> String {
        multivariant_playlist(&self.representation, &self.media_playlist_name())
    }

    pub fn playlist_name(&self) -> String {
        format!("{}.m3u8", self.stem())
    }

    pub fn media_playlist_name(&self) -> String {
        format!("{}_media.m3u8", self.stem())
    }

    fn stem(&self) -> &str {
        self.manifest_name.strip_suffix(".mpd").unwrap_or(&self.manifest_name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dashhls::{package_presentation, PackageOptions, Profile};
    use crate::isobmff::{read_box_tree, BoxContent};
    use crate::nalio::{ElementaryStream, FrameRate};
    use crate::synth::{generate_annex_b, SynthConfig};

    fn t0() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2024-05-01T12:00:00Z").unwrap().with_timezone(&Utc)
    }

    fn session(frames: usize) -> LiveSession {
        let cfg = SynthConfig { frames, idr_period: 50, idr_bytes: 3000, trail_bytes: 500, ..Default::default() };
        let es = ElementaryStream::from_annex_b(&generate_annex_b(&cfg), FrameRate::new(25, 1)).unwrap();
        let opts = PackageOptions { profile: Profile::Live, timeline: true, ..Default::default() };
        let report = package_presentation(&es, &opts).unwrap();
        LiveSession::new(&report, t0(), 1.9)
    }

    #[test]
    fn availability_edges_are_exact() {
        let s = session(250);
        assert_eq!(s.pace(t0()).available, 0);
        for k in 1..=5i64 {
            let at = t0() + Duration::milliseconds(2000 * k - 1900);
            assert_eq!(s.pace(at - Duration::nanoseconds(1)).available, (k - 1) as u64);
            assert_eq!(s.pace(at).available, k as u64);
        }
        assert_eq!(s.pace(t0() + Duration::seconds(1000)).available, 5);
        assert_eq!(s.published_upto(), 5);
    }

    #[test]
    fn ten_segments_after_ten_durations() {
        let s = LiveSession { availability_offset: Duration::zero(), ..session(500) };
        assert_eq!(s.pace(t0() + Duration::seconds(20)).available, 10);
    }

    fn tfdt(seg: &[u8]) -> u64 {
        let tree = read_box_tree(seg).unwrap();
        let moof = tree.iter().find(|b| b.fourcc == b"moof").unwrap();
        let BoxContent::Children(kids) = &moof.content else { panic!() };
        let traf = kids.iter().find(|b| b.fourcc == b"traf").unwrap();
        let BoxContent::Children(kids) = &traf.content else { panic!() };
        let BoxContent::Leaf(d) = &kids.iter().find(|b| b.fourcc == b"tfdt").unwrap().content else { panic!() };
        u64::from_be_bytes(d[4..12].try_into().unwrap())
    }

    #[test]
    fn looping_shifts_decode_time() {
        let s = session(150).with_loop(true);
        let n = s.segments.len() as u64;
        let total = s.plan.total_duration();
        let now = t0() + Duration::seconds(2 * (n as i64 + 1));
        assert_eq!(s.pace(now).available, n + 1);
        let first = s.segment(1, now).unwrap().unwrap();
        let again = s.segment(n + 1, now).unwrap().unwrap();
        assert_eq!(tfdt(&again), tfdt(&first) + total);
        assert!(s.segment(n + 3, now).unwrap().is_none());
    }

    #[test]
    fn dynamic_mpd_lists_published_only() {
        let s = session(250);
        let count = |now| {
            let mpd = s.mpd(now).unwrap();
            let doc = roxmltree::Document::parse(&mpd).unwrap();
            doc.descendants()
                .filter(|n| n.has_tag_name("S"))
                .map(|n| 1 + n.attribute("r").map_or(0, |r| r.parse::<u64>().unwrap()))
                .sum::<u64>()
        };
        assert_eq!(count(t0() + Duration::milliseconds(100)), 1);
        assert_eq!(count(t0() + Duration::milliseconds(2100)), 2);
        let pl = s.media_playlist(t0() + Duration::milliseconds(2100));
        assert!(pl.contains("seg_2.m4s") && !pl.contains("seg_3.m4s") && !pl.contains("ENDLIST"));
    }

    #[test]
    fn time_shift_window_drops_old_segments() {
        let mut s = session(500).with_loop(true);
        s.time_shift_buffer = Duration::seconds(6);
        let p = s.pace(t0() + Duration::seconds(40));
        assert_eq!(p.available, 20);
        assert!(p.first_listed > 1 && p.listed() <= 4);
    }
}
