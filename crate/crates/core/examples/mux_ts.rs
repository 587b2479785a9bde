//! Multiplex into a constant bit rate transport stream and demultiplex it again.
//!
//! cargo run --example mux_ts [RATE]

use vvcsys::mpegts::{demux_ts, mux_ts, MuxConfig, RateMode, NULL_PID, TS_PACKET_SIZE};
use vvcsys::nalio::{ElementaryStream, FrameRate, ParseMode};
use vvcsys::synth::{generate_annex_b, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rate: RateMode = std::env::args().nth(1).as_deref().unwrap_or("10m").parse()?;
    let bytes = generate_annex_b(&SynthConfig { frames: 100, ..SynthConfig::default() });
    let es = ElementaryStream::from_annex_b(&bytes, FrameRate::new(25, 1))?;
    let ts = mux_ts(&es, None, &MuxConfig { rate, ..MuxConfig::default() })?;
    let packets = ts.len() / TS_PACKET_SIZE;
    let nulls = ts.chunks(TS_PACKET_SIZE).filter(|p| u16::from_be_bytes([p[1] & 0x1f, p[2]]) == NULL_PID).count();
    println!("{packets} packets ({nulls} null) for {:.2} s of video", es.duration_ticks() as f64 / es.timescale as f64);
    let out = demux_ts(&ts, ParseMode::Strict)?;
    let video = out.video().ok_or("no video stream")?;
    println!("demuxed {} PES packets, identical: {}", video.pes.len(), video.data == bytes);
    Ok(())
}
