//! Per-NAL and per-access-unit report of a stream in any supported container.
//!
//! cargo run --example inspect_stream [FILE]

use vvcsys::cli::{inspect, Depth};
use vvcsys::nalio::{FrameRate, ParseMode};
use vvcsys::synth::{generate_annex_b, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = match std::env::args().nth(1) {
        Some(path) => std::fs::read(path)?,
        None => generate_annex_b(&SynthConfig { frames: 8, idr_period: 4, width: 416, height: 240, ..SynthConfig::default() }),
    };
    let report = inspect(&data, None, Depth::Deep, ParseMode::Lenient, FrameRate::new(25, 1))?;
    print!("{}", report.to_text());
    Ok(())
}
