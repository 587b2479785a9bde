//! Detect the container of a file, or of each representation of a synthetic stream.
//!
//! cargo run --example probe [FILE]

use vvcsys::isobmff::{package_progressive, SampleEntryKind};
use vvcsys::mpegts::{mux_ts, MuxConfig};
use vvcsys::nalio::{probe_format, ElementaryStream, FrameRate};
use vvcsys::synth::{generate_annex_b, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    if let Some(path) = std::env::args().nth(1) {
        let data = std::fs::read(&path)?;
        println!("{path}: {}", probe_format(&data, data.len() as u64));
        return Ok(());
    }
    let es_bytes = generate_annex_b(&SynthConfig { frames: 25, ..SynthConfig::default() });
    let es = ElementaryStream::from_annex_b(&es_bytes, FrameRate::new(25, 1))?;
    let mp4 = package_progressive(&es, SampleEntryKind::Vvc1, None)?;
    let ts = mux_ts(&es, None, &MuxConfig::default())?;
    for (name, data) in [("annex b", &es_bytes), ("mp4", &mp4), ("ts", &ts)] {
        println!("{name:8} {:8} bytes -> {}", data.len(), probe_format(data, data.len() as u64));
    }
    Ok(())
}
