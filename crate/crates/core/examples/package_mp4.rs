//! Package an Annex B stream as progressive MP4 with both sample entries.
//!
//! cargo run --example package_mp4 [OUT_DIR]

use vvcsys::isobmff::{package_progressive, read_tracks, SampleEntryKind};
use vvcsys::nalio::{ElementaryStream, FrameRate};
use vvcsys::synth::{generate_annex_b, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("vvcsys-mp4"));
    std::fs::create_dir_all(&out)?;
    let bytes = generate_annex_b(&SynthConfig { frames: 100, idr_period: 25, ..SynthConfig::default() });
    let es = ElementaryStream::from_annex_b(&bytes, FrameRate::new(25, 1))?;
    for kind in [SampleEntryKind::Vvc1, SampleEntryKind::Vvc2] {
        let mp4 = package_progressive(&es, kind, None)?;
        let name = format!("demo_{}.mp4", String::from_utf8_lossy(kind.fourcc()));
        std::fs::write(out.join(&name), &mp4)?;
        let track = &read_tracks(&mp4)?[0];
        println!("{name}: {} bytes, sync samples {:?}", mp4.len(), track.sync_samples());
    }
    println!("written to {}", out.display());
    Ok(())
}
