//! Live-profile DASH with a SegmentTimeline, plus HLS playlists for the same segments.
//!
//! cargo run --example dash_live_timeline [OUT_DIR]

use vvcsys::dashhls::{package_presentation, OutputKind, PackageOptions, Profile};
use vvcsys::nalio::{ElementaryStream, FrameRate};
use vvcsys::synth::{generate_annex_b, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("vvcsys-dash-live"));
    // IRAPs every 1.6 s against a 2 s target: segments span two IRAP periods
    let bytes = generate_annex_b(&SynthConfig { frames: 300, idr_period: 40, ..SynthConfig::default() });
    let es = ElementaryStream::from_annex_b(&bytes, FrameRate::new(25, 1))?;
    let opts = PackageOptions { profile: Profile::Live, timeline: true, output: OutputKind::Dual, ..PackageOptions::default() };
    let report = package_presentation(&es, &opts)?;
    report.write_to(&out)?;
    for s in &report.plan.segments {
        println!("segment at {:6} ticks, {:6} ticks, {} pictures", s.start, s.duration, s.au_count);
    }
    let mpd = report.manifest.as_deref().and_then(|m| report.file(m)).unwrap_or_default();
    println!("{}", String::from_utf8_lossy(mpd));
    println!("files in {}: {}", out.display(), report.files.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(" "));
    Ok(())
}
