//! On-demand DASH: one indexed MP4 plus a static MPD using byte ranges.
//!
//! cargo run --example dash_ondemand [OUT_DIR]

use vvcsys::dashhls::{package_presentation, PackageOptions, Profile};
use vvcsys::nalio::{ElementaryStream, FrameRate};
use vvcsys::synth::{generate_annex_b, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("vvcsys-dash-ondemand"));
    let bytes = generate_annex_b(&SynthConfig { frames: 250, idr_period: 50, ..SynthConfig::default() });
    let es = ElementaryStream::from_annex_b(&bytes, FrameRate::new(25, 1))?;
    let opts = PackageOptions { target_dur_ms: 2000, profile: Profile::OnDemand, ..PackageOptions::default() };
    let report = package_presentation(&es, &opts)?;
    for p in report.write_to(&out)? {
        println!("wrote {}", p.display());
    }
    let mpd = report.manifest.as_deref().and_then(|m| report.file(m)).unwrap_or_default();
    println!("{}", String::from_utf8_lossy(mpd));
    Ok(())
}
