//! Live DASH/HLS origin: segments appear on the wall clock, looping forever.
//!
//! cargo run --example live_origin [ADDR] [SECONDS]

use std::sync::Arc;

use vvcsys::dashhls::{package_presentation, OutputKind, PackageOptions, Profile};
use vvcsys::nalio::{ElementaryStream, FrameRate};
use vvcsys::serve::{http_serve, Clock, LiveSession, Origin, SystemClock};
use vvcsys::synth::{generate_annex_b, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into());
    let seconds: u64 = std::env::args().nth(2).map_or(Ok(10), |s| s.parse())?;
    let bytes = generate_annex_b(&SynthConfig { frames: 250, idr_period: 50, width: 416, height: 240, ..SynthConfig::default() });
    let es = ElementaryStream::from_annex_b(&bytes, FrameRate::new(25, 1))?;
    let opts = PackageOptions { profile: Profile::Live, timeline: true, output: OutputKind::Dual, ..PackageOptions::default() };
    let report = package_presentation(&es, &opts)?;
    let clock = Arc::new(SystemClock);
    let session = Arc::new(LiveSession::new(&report, clock.now(), 1.9).with_loop(true));
    let server = http_serve(Origin::new(None, Some(Arc::clone(&session)), clock.clone()), &addr)?;
    println!("http://{}/{}  http://{}/{}", server.addr(), session.manifest_name, server.addr(), session.playlist_name());
    for _ in 0..seconds {
        std::thread::sleep(std::time::Duration::from_secs(1));
        let pace = session.pace(clock.now());
        println!("available up to seg_{}.m4s, listing from {}", pace.available, pace.first_listed);
    }
    server.shutdown();
    Ok(())
}
