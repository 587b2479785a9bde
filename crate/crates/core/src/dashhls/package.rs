//! End-to-end packaging: probe, plan, fragment, write manifests and segments.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::isobmff::{extract_elementary_stream, fragment, FragmentedOutput, SampleEntry, SampleEntryKind};
use crate::mpegts::{demux_to_elementary, demux_ts};
use crate::nalio::{probe_format, ContainerKind, ElementaryStream, FrameRate, ParseMode, PROBE_LEN};

use super::{
    bandwidth, codecs_string, plan_segments, stream_frame_rate, write_hls, write_mpd, DashError, HlsSegment,
    LiveTiming, MpdConfig, Profile, Representation, SegmentPlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    Dash,
    Hls,
    /// DASH and HLS manifests over the same segments.
    Dual,
}

impl OutputKind {
    fn dash(self) -> bool {
        self != OutputKind::Hls
    }

    fn hls(self) -> bool {
        self != OutputKind::Dash
    }
}

impl fmt::Display for OutputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputKind::Dash => "dash",
            OutputKind::Hls => "hls",
            OutputKind::Dual => "dual",
        })
    }
}

impl std::str::FromStr for OutputKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dash" => Ok(OutputKind::Dash),
            "hls" => Ok(OutputKind::Hls),
            "dual" => Ok(OutputKind::Dual),
            other => Err(format!("unknown output {other:?}, expected dash, hls or dual")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackageOptions {
    pub target_dur_ms: u32,
    pub profile: Profile,
    /// Live profile: address segments with a `SegmentTimeline`.
    pub timeline: bool,
    pub output: OutputKind,
    pub kind: SampleEntryKind,
    /// Stem of the manifest and on-demand file names.
    pub name: String,
    pub codecs: Option<String>,
    pub live: Option<LiveTiming>,
}

impl Default for PackageOptions {
    fn default() -> Self {
        PackageOptions {
            target_dur_ms: 2000,
            profile: Profile::OnDemand,
            timeline: false,
            output: OutputKind::Dash,
            kind: SampleEntryKind::Vvc1,
            name: "vod".into(),
            codecs: None,
            live: None,
        }
    }
}

/// Everything produced by packaging, before it touches the disk.
#[derive(Debug, Clone)]
pub struct PackageReport {
    pub plan: SegmentPlan,
    pub fragments: FragmentedOutput,
    pub representation: Representation,
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, Vec<u8>)>,
    pub manifest: Option<String>,
    pub playlist: Option<String>,
}

impl PackageReport {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, d)| d.as_slice())
    }

    pub fn write_to(&self, out_dir: &Path) -> Result<Vec<PathBuf>, DashError> {
        std::fs::create_dir_all(out_dir)?;
        let mut paths = Vec::with_capacity(self.files.len());
        for (name, data) in &self.files {
            let p = out_dir.join(name);
            std::fs::write(&p, data)?;
            paths.push(p);
        }
        Ok(paths)
    }
}

/// Decode any supported input into a timed elementary stream.
///
/// Annex B input is timed at `frame_rate`; MP4 and TS carry their own timing.
pub fn load_elementary_stream(
    data: &[u8],
    format: Option<ContainerKind>,
    frame_rate: FrameRate,
) -> Result<ElementaryStream, DashError> {
    let kind = format.unwrap_or_else(|| probe_format(&data[..data.len().min(PROBE_LEN)], data.len() as u64));
    match kind {
        ContainerKind::AnnexB => Ok(ElementaryStream::from_annex_b(data, frame_rate)?),
        ContainerKind::IsoBmff => Ok(extract_elementary_stream(data)?.stream),
        ContainerKind::Mpeg2Ts => {
            let out = demux_ts(data, ParseMode::Lenient)?;
            let dur = (90_000u64 * frame_rate.den as u64 / frame_rate.num as u64) as u32;
            Ok(demux_to_elementary(&out, dur)?)
        }
        ContainerKind::Unknown => Err(DashError::UnsupportedInput("input is not Annex B, MP4 or MPEG-2 TS".into())),
    }
}

fn representation(es: &ElementaryStream, frags: &FragmentedOutput, plan: &SegmentPlan, codecs: Option<&str>) -> Representation {
    let (width, height) = match &frags.sample_entry {
        SampleEntry::Vvc { width, height, .. } => (*width as u32, *height as u32),
        SampleEntry::Opaque(_) => (0, 0),
    };
    Representation {
        id: "1".into(),
        bandwidth: bandwidth(frags.media_bytes(), plan.total_duration(), plan.timescale),
        width,
        height,
        codecs: codecs.map(str::to_owned).or_else(|| codecs_string(&frags.sample_entry)).unwrap_or_else(|| "vvc1".into()),
        frame_rate: stream_frame_rate(es),
    }
}

/// Segment one stream and render the requested manifests.
///
/// On-demand output is a single `<name>.mp4` plus `<name>.mpd`; live output is
/// `init.mp4`, `seg_<n>.m4s` for n = 1..N, and `<name>.mpd`. HLS adds
/// `<name>.m3u8` (multivariant) and `<name>_media.m3u8`.
pub fn package_presentation(es: &ElementaryStream, opts: &PackageOptions) -> Result<PackageReport, DashError> {
    let plan = plan_segments(es, opts.target_dur_ms)?;
    let frags = fragment(es, &plan.starts(), opts.kind)?;
    let rep = representation(es, &frags, &plan, opts.codecs.as_deref());
    let mut files = Vec::new();
    let (mut manifest, mut playlist) = (None, None);
    let mpd_name = format!("{}.mpd", opts.name);
    let master_name = format!("{}.m3u8", opts.name);
    let media_name = format!("{}_media.m3u8", opts.name);

    match opts.profile {
        Profile::OnDemand => {
            let mp4_name = format!("{}.mp4", opts.name);
            let (file, index_range) = frags.ondemand_file();
            files.push((mp4_name.clone(), file));
            if opts.output.dash() {
                let mpd = write_mpd(&plan, &MpdConfig::ondemand(rep.clone(), &mp4_name, index_range))?;
                files.push((mpd_name.clone(), mpd.into_bytes()));
                manifest = Some(mpd_name);
            }
            if opts.output.hls() {
                let map = HlsSegment::Range { uri: mp4_name.clone(), offset: 0, length: frags.init.len() as u64 };
                let mut offset = index_range.1 + 1;
                let ranges = frags
                    .segments
                    .iter()
                    .map(|s| {
                        let r = HlsSegment::Range { uri: mp4_name.clone(), offset, length: s.len() as u64 };
                        offset += s.len() as u64;
                        r
                    })
                    .collect();
                let (master, media) = write_hls(&plan, &rep, map, ranges, &media_name);
                files.push((master_name.clone(), master.into_bytes()));
                files.push((media_name, media.into_bytes()));
                playlist = Some(master_name);
            }
        }
        Profile::Live => {
            let cfg = MpdConfig { live: opts.live.clone(), ..MpdConfig::live(rep.clone(), opts.timeline) };
            files.push((cfg.init_name.clone(), frags.init.clone()));
            let names: Vec<String> =
                (1..=frags.segments.len()).map(|n| cfg.media_template.replace("$Number$", &n.to_string())).collect();
            for (name, seg) in names.iter().zip(&frags.segments) {
                files.push((name.clone(), seg.clone()));
            }
            if opts.output.dash() {
                let mpd = write_mpd(&plan, &cfg)?;
                files.push((mpd_name.clone(), mpd.into_bytes()));
                manifest = Some(mpd_name);
            }
            if opts.output.hls() {
                let locations = names.into_iter().map(HlsSegment::File).collect();
                let (master, media) =
                    write_hls(&plan, &rep, HlsSegment::File(cfg.init_name.clone()), locations, &media_name);
                files.push((master_name.clone(), master.into_bytes()));
                files.push((media_name, media.into_bytes()));
                playlist = Some(master_name);
            }
        }
    }
    Ok(PackageReport { plan, fragments: frags, representation: rep, files, manifest, playlist })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isobmff::read_box_tree;
    use crate::synth::{generate_annex_b, SynthConfig};

    fn es(frames: usize, idr_period: usize) -> ElementaryStream {
        let cfg = SynthConfig { frames, idr_period, ..Default::default() };
        ElementaryStream::from_annex_b(&generate_annex_b(&cfg), FrameRate::new(25, 1)).unwrap()
    }

    #[test]
    fn ondemand_two_files() {
        let r = package_presentation(&es(150, 50), &PackageOptions::default()).unwrap();
        let names: Vec<&str> = r.files.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["vod.mp4", "vod.mpd"]);
        assert_eq!(r.plan.segments.len(), 3);
        let mp4 = r.file("vod.mp4").unwrap();
        let mpd = String::from_utf8(r.file("vod.mpd").unwrap().to_vec()).unwrap();
        let doc = roxmltree::Document::parse(&mpd).unwrap();
        let range = doc.descendants().find_map(|n| n.attribute("indexRange")).unwrap();
        let (a, b) = range.split_once('-').unwrap();
        let (a, b): (usize, usize) = (a.parse().unwrap(), b.parse().unwrap());
        assert_eq!(&mp4[a + 4..a + 8], b"sidx");
        assert_eq!(u32::from_be_bytes(mp4[a..a + 4].try_into().unwrap()) as usize, b - a + 1);
        assert!(read_box_tree(mp4).is_ok());
    }

    #[test]
    fn live_dual_file_set() {
        let opts = PackageOptions { profile: Profile::Live, output: OutputKind::Dual, ..Default::default() };
        let r = package_presentation(&es(125, 25), &opts).unwrap();
        let n = r.plan.segments.len();
        assert_eq!(n, 3);
        assert_eq!(r.files.len(), n + 2 + 2);
        let media = String::from_utf8(r.file("vod_media.m3u8").unwrap().to_vec()).unwrap();
        for k in 1..=n {
            let name = format!("seg_{k}.m4s");
            assert!(r.file(&name).is_some());
            assert!(media.lines().any(|l| l == name));
        }
        let master = String::from_utf8(r.file("vod.m3u8").unwrap().to_vec()).unwrap();
        assert!(master.contains(&format!("CODECS=\"{}\"", r.representation.codecs)));
        assert!(r.representation.codecs.starts_with("vvc1."));
    }

    #[test]
    fn reads_mp4_and_ts_inputs() {
        let src = es(50, 25);
        let mp4 = crate::isobmff::package_progressive(&src, SampleEntryKind::Vvc2, None).unwrap();
        let from_mp4 = load_elementary_stream(&mp4, None, FrameRate::default()).unwrap();
        assert_eq!(from_mp4.aus.len(), 50);
        let ts = crate::mpegts::mux_ts(&src, None, &Default::default()).unwrap();
        let from_ts = load_elementary_stream(&ts, None, FrameRate::default()).unwrap();
        assert_eq!(from_ts.timescale, 90_000);
        assert_eq!(plan_segments(&from_ts, 1000).unwrap().segments.len(), 2);
        assert!(matches!(
            load_elementary_stream(b"not a video", None, FrameRate::default()),
            Err(DashError::UnsupportedInput(_))
        ));
    }
}
