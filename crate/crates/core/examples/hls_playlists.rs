//! HLS over fragmented MP4: multivariant and media playlists with byte ranges.
//!
//! cargo run --example hls_playlists

use vvcsys::dashhls::{package_presentation, OutputKind, PackageOptions};
use vvcsys::nalio::{ElementaryStream, FrameRate};
use vvcsys::synth::{generate_annex_b, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bytes = generate_annex_b(&SynthConfig { frames: 150, idr_period: 50, ..SynthConfig::default() });
    let es = ElementaryStream::from_annex_b(&bytes, FrameRate::new(25, 1))?;
    let report = package_presentation(&es, &PackageOptions { output: OutputKind::Hls, ..PackageOptions::default() })?;
    for (name, data) in &report.files {
        if name.ends_with(".m3u8") {
            println!("# {name}\n{}", String::from_utf8_lossy(data));
        }
    }
    Ok(())
}
