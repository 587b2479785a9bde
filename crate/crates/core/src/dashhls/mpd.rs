//! DASH MPD writer for one video representation.

use std::fmt::Write;

use chrono::{DateTime, SecondsFormat, Utc};

use super::{DashError, Profile, Representation, SegmentPlan, PROFILE_LIVE, PROFILE_ONDEMAND};

/// Clock values of a dynamic presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveTiming {
    pub availability_start: DateTime<Utc>,
    pub publish_time: DateTime<Utc>,
    /// Seconds a segment is announced ahead of its nominal availability.
    pub availability_time_offset: f64,
    pub time_shift_buffer_s: u32,
    pub minimum_update_period_ms: u32,
}

impl LiveTiming {
    pub fn new(availability_start: DateTime<Utc>, publish_time: DateTime<Utc>, segment_ms: u32) -> LiveTiming {
        LiveTiming {
            availability_start,
            publish_time,
            availability_time_offset: 0.0,
            time_shift_buffer_s: 30,
            minimum_update_period_ms: segment_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpdConfig {
    pub profile: Profile,
    /// Live profile only: `SegmentTimeline` instead of `@duration`.
    pub timeline: bool,
    pub representation: Representation,
    /// On-demand media file.
    pub base_url: String,
    /// Inclusive byte range of the `sidx` box in `base_url`.
    pub index_range: (u64, u64),
    pub init_name: String,
    pub media_template: String,
    pub start_number: u64,
    /// `Some` makes the presentation dynamic.
    pub live: Option<LiveTiming>,
}

impl MpdConfig {
    pub fn ondemand(representation: Representation, base_url: &str, index_range: (u64, u64)) -> MpdConfig {
        MpdConfig {
            profile: Profile::OnDemand,
            timeline: false,
            representation,
            base_url: base_url.to_owned(),
            index_range,
            init_name: super::INIT_NAME.to_owned(),
            media_template: super::MEDIA_TEMPLATE.to_owned(),
            start_number: 1,
            live: None,
        }
    }

    pub fn live(representation: Representation, timeline: bool) -> MpdConfig {
        MpdConfig { profile: Profile::Live, timeline, ..MpdConfig::ondemand(representation, "", (0, 0)) }
    }
}

fn iso_duration(seconds: f64) -> String {
    format!("PT{:.3}S", seconds.max(0.0))
}

fn iso_time(t: &DateTime<Utc>, precision: SecondsFormat) -> String {
    t.to_rfc3339_opts(precision, true)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn timeline(plan: &SegmentPlan, out: &mut String) {
    out.push_str("          <SegmentTimeline>\n");
    let segs = &plan.segments;
    let mut i = 0;
    let mut expected = None;
    while i < segs.len() {
        let d = segs[i].duration;
        let mut r = 0;
        while i + r + 1 < segs.len() && segs[i + r + 1].duration == d && segs[i + r + 1].start == segs[i + r].end() {
            r += 1;
        }
        out.push_str("            <S");
        if expected != Some(segs[i].start) {
            let _ = write!(out, " t=\"{}\"", segs[i].start);
        }
        let _ = write!(out, " d=\"{d}\"");
        if r > 0 {
            let _ = write!(out, " r=\"{r}\"");
        }
        out.push_str("/>\n");
        expected = Some(segs[i + r].end());
        i += r + 1;
    }
    out.push_str("          </SegmentTimeline>\n");
}

/// Render an MPD for `plan`. Dynamic presentations list only the segments in
/// `plan`, numbered from `cfg.start_number`.
pub fn write_mpd(plan: &SegmentPlan, cfg: &MpdConfig) -> Result<String, DashError> {
    if plan.segments.is_empty() && cfg.live.is_none() {
        return Err(DashError::InconsistentPlan("no segments".into()));
    }
    if plan.timescale == 0 {
        return Err(DashError::InconsistentPlan("zero timescale".into()));
    }
    let template_duration = match cfg.profile {
        Profile::OnDemand if cfg.live.is_some() => {
            return Err(DashError::InconsistentPlan("the on-demand profile is static only".into()))
        }
        Profile::OnDemand if cfg.index_range.1 < cfg.index_range.0 => {
            return Err(DashError::InconsistentPlan("empty index range".into()))
        }
        Profile::Live if !cfg.timeline => match plan.constant_duration() {
            Some(d) => Some(d),
            None if plan.segments.is_empty() => Some(plan.target_ticks()),
            None => {
                return Err(DashError::InconsistentPlan(
                    "segment durations differ; use a segment timeline".into(),
                ))
            }
        },
        _ => None,
    };
    let max_seg = plan.segments.iter().map(|s| s.duration).max().unwrap_or(plan.target_ticks());
    let rep = &cfg.representation;

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<MPD xmlns=\"urn:mpeg:dash:schema:mpd:2011\"");
    let profile = if cfg.profile == Profile::OnDemand { PROFILE_ONDEMAND } else { PROFILE_LIVE };
    let _ = write!(out, " profiles=\"{profile}\"");
    match &cfg.live {
        None => {
            let _ = write!(
                out,
                " type=\"static\" mediaPresentationDuration=\"{}\"",
                iso_duration(plan.seconds(plan.total_duration()))
            );
        }
        Some(live) => {
            let seg_s = plan.seconds(max_seg);
            let _ = write!(
                out,
                " type=\"dynamic\" availabilityStartTime=\"{}\" publishTime=\"{}\" minimumUpdatePeriod=\"{}\" timeShiftBufferDepth=\"{}\" suggestedPresentationDelay=\"{}\"",
                iso_time(&live.availability_start, SecondsFormat::Secs),
                iso_time(&live.publish_time, SecondsFormat::Millis),
                iso_duration(live.minimum_update_period_ms as f64 / 1000.0),
                iso_duration(live.time_shift_buffer_s as f64),
                iso_duration(seg_s - live.availability_time_offset),
            );
        }
    }
    let _ = writeln!(out, " minBufferTime=\"{}\">", iso_duration(plan.seconds(max_seg)));
    out.push_str("  <Period id=\"1\" start=\"PT0S\">\n");
    out.push_str(
        "    <AdaptationSet contentType=\"video\" mimeType=\"video/mp4\" segmentAlignment=\"true\" startWithSAP=\"1\">\n",
    );
    let _ = write!(
        out,
        "      <Representation id=\"{}\" codecs=\"{}\" width=\"{}\" height=\"{}\"",
        escape(&rep.id),
        escape(&rep.codecs),
        rep.width,
        rep.height
    );
    if let Some(fr) = rep.frame_rate {
        let _ = write!(out, " frameRate=\"{fr}\"");
    }
    let _ = writeln!(out, " bandwidth=\"{}\">", rep.bandwidth);

    match cfg.profile {
        Profile::OnDemand => {
            let _ = writeln!(out, "        <BaseURL>{}</BaseURL>", escape(&cfg.base_url));
            let _ = writeln!(
                out,
                "        <SegmentBase timescale=\"{}\" indexRange=\"{}-{}\" indexRangeExact=\"true\">",
                plan.timescale, cfg.index_range.0, cfg.index_range.1
            );
            if cfg.index_range.0 > 0 {
                let _ = writeln!(out, "          <Initialization range=\"0-{}\"/>", cfg.index_range.0 - 1);
            }
            out.push_str("        </SegmentBase>\n");
        }
        Profile::Live => {
            let _ = write!(
                out,
                "        <SegmentTemplate timescale=\"{}\" startNumber=\"{}\" initialization=\"{}\" media=\"{}\"",
                plan.timescale,
                cfg.start_number,
                escape(&cfg.init_name),
                escape(&cfg.media_template)
            );
            if let Some(d) = template_duration {
                let _ = write!(out, " duration=\"{d}\"");
            }
            if let Some(live) = &cfg.live {
                if live.availability_time_offset > 0.0 {
                    let _ = write!(out, " availabilityTimeOffset=\"{}\"", live.availability_time_offset);
                }
            }
            if cfg.timeline {
                out.push_str(">\n");
                timeline(plan, &mut out);
                out.push_str("        </SegmentTemplate>\n");
            } else {
                out.push_str("/>\n");
            }
        }
    }
    out.push_str("      </Representation>\n    </AdaptationSet>\n  </Period>\n</MPD>\n");
    Ok(out)
}
