//! Real-time transport stream over UDP at a constant rate.
//!
//! cargo run --example udp_broadcast [DEST] [RATE]

use vvcsys::mpegts::{MuxConfig, RateMode, TsMuxer};
use vvcsys::nalio::{ElementaryStream, FrameRate};
use vvcsys::serve::udp_emit;
use vvcsys::synth::{generate_annex_b, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dest = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:1234".into());
    let rate: RateMode = std::env::args().nth(2).as_deref().unwrap_or("10m").parse()?;
    let RateMode::Cbr(bps) = rate else { return Err("a constant rate is required".into()) };
    let bytes = generate_annex_b(&SynthConfig { frames: 75, ..SynthConfig::default() });
    let es = ElementaryStream::from_annex_b(&bytes, FrameRate::new(25, 1))?;
    let muxer = TsMuxer::new(&es, None, &MuxConfig { rate, ..MuxConfig::default() })?;
    println!("sending {} packets to udp://{dest}", muxer.planned_packets());
    let stats = udp_emit(muxer, bps, &dest)?;
    println!("{} datagrams, {} bytes in {:.3} s", stats.datagrams, stats.bytes, stats.elapsed.as_secs_f64());
    Ok(())
}
