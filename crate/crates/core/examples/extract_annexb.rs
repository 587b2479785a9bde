//! Recover the Annex B elementary stream from an MP4 file.
//!
//! cargo run --example extract_annexb [IN.mp4 OUT.vvc]

use vvcsys::isobmff::{extract_annex_b, package_progressive, SampleEntryKind};
use vvcsys::nalio::{ElementaryStream, FrameRate};
use vvcsys::synth::{generate_annex_b, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [input, output] = args.as_slice() {
        let es = extract_annex_b(&std::fs::read(input)?)?;
        std::fs::write(output, &es)?;
        println!("{output}: {} bytes", es.len());
        return Ok(());
    }
    let bytes = generate_annex_b(&SynthConfig { frames: 50, ..SynthConfig::default() });
    let es = ElementaryStream::from_annex_b(&bytes, FrameRate::new(25, 1))?;
    let mp4 = package_progressive(&es, SampleEntryKind::Vvc2, None)?;
    let back = extract_annex_b(&mp4)?;
    println!("{} byte stream -> {} byte mp4 -> {} byte stream, identical: {}", bytes.len(), mp4.len(), back.len(), back == bytes);
    Ok(())
}
