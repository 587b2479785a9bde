mod common;

use std::io::{Read, Write};
use std::net::UdpSocket;
use std::sync::Arc;
use std::time::Duration as StdDuration;

use chrono::{DateTime, Duration, Utc};
use vvcsys::dashhls::{package_presentation, OutputKind, PackageOptions, Profile};
use vvcsys::isobmff::{extract_annex_b, package_progressive, read_tracks, SampleEntryKind};
use vvcsys::mpegts::{demux_ts, mux_ts, MuxConfig, RateMode, TsMuxer};
use vvcsys::nalio::{scan_annex_b, ParseMode};
use vvcsys::serve::{http_serve, udp_emit, LiveSession, Origin, SystemClock, TestClock};

fn t0() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2025-03-01T10:00:00Z").unwrap().with_timezone(&Utc)
}

#[test]
fn mp4_roundtrip_both_entries() {
    let (bytes, es) = common::synth(60, 20, 3);
    let vvc2 = package_progressive(&es, SampleEntryKind::Vvc2, None).unwrap();
    assert_eq!(extract_annex_b(&vvc2).unwrap(), bytes);

    let vvc1 = package_progressive(&es, SampleEntryKind::Vvc1, None).unwrap();
    let back = scan_annex_b(&extract_annex_b(&vvc1).unwrap()).unwrap();
    let orig = scan_annex_b(&bytes).unwrap();
    let key = |n: &vvcsys::nalio::NalUnit| n.to_bytes();
    // vvc1 moves parameter sets out of band and re-inserts them at sync samples
    let vcl = |v: &[vvcsys::nalio::NalUnit]| v.iter().filter(|n| n.is_vcl()).map(key).collect::<Vec<_>>();
    assert_eq!(vcl(&back), vcl(&orig));
    let tracks = read_tracks(&vvc1).unwrap();
    assert_eq!(tracks[0].sync_samples(), [1, 21, 41]);
}

#[test]
fn dash_live_files_match_manifest() {
    let (_, es) = common::synth(250, 50, 9);
    let dir = tempfile::tempdir().unwrap();
    let opts = PackageOptions { profile: Profile::Live, output: OutputKind::Dash, ..Default::default() };
    let report = package_presentation(&es, &opts).unwrap();
    let paths = report.write_to(dir.path()).unwrap();
    let n = report.plan.segments.len();
    assert_eq!(paths.len(), n + 2);
    let mpd = std::fs::read_to_string(dir.path().join("vod.mpd")).unwrap();
    let doc = roxmltree::Document::parse(&mpd).unwrap();
    let st = doc.descendants().find(|e| e.has_tag_name("SegmentTemplate")).unwrap();
    assert!(dir.path().join(st.attribute("initialization").unwrap()).is_file());
    let media = st.attribute("media").unwrap();
    for k in 1..=n {
        let p = dir.path().join(media.replace("$Number$", &k.to_string()));
        let seg = std::fs::read(&p).unwrap();
        let (_, _, flags) = common::segment_info(&seg);
        assert!(common::is_sync(flags));
    }
    assert!(!dir.path().join(media.replace("$Number$", &(n + 1).to_string())).exists());
}

fn get(url: &str, range: Option<&str>) -> (u16, Vec<u8>, Option<String>) {
    let mut req = ureq::get(url);
    if let Some(r) = range {
        req = req.set("Range", r);
    }
    match req.call() {
        Ok(resp) => {
            let status = resp.status();
            let ct = resp.header("Content-Type").map(str::to_owned);
            let mut body = Vec::new();
            resp.into_reader().read_to_end(&mut body).unwrap();
            (status, body, ct)
        }
        Err(ureq::Error::Status(code, resp)) => (code, Vec::new(), resp.header("Content-Type").map(str::to_owned)),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn static_origin_ranges() {
    let (_, es) = common::synth(100, 50, 1);
    let dir = tempfile::tempdir().unwrap();
    package_presentation(&es, &PackageOptions::default()).unwrap().write_to(dir.path()).unwrap();
    let origin = Origin::new(Some(dir.path().to_path_buf()), None, Arc::new(SystemClock));
    let server = http_serve(origin, "127.0.0.1:0").unwrap();
    let base = format!("http://{}", server.addr());
    let (status, body, ct) = get(&format!("{base}/vod.mp4"), Some("bytes=0-7"));
    assert_eq!(status, 206);
    assert_eq!(body.len(), 8);
    assert_eq!(&body[4..8], b"ftyp");
    assert_eq!(ct.as_deref(), Some("video/mp4"));
    let (status, _, ct) = get(&format!("{base}/vod.mpd"), None);
    assert_eq!((status, ct.as_deref()), (200, Some("application/dash+xml")));
    assert_eq!(get(&format!("{base}/missing.mp4"), None).0, 404);
    // raw request: HTTP clients normalise dot segments before sending
    let mut tcp = std::net::TcpStream::connect(server.addr()).unwrap();
    tcp.write_all(b"GET /%2e%2e/%2e%2e/etc/passwd HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    let mut reply = String::new();
    tcp.read_to_string(&mut reply).unwrap();
    assert!(reply.starts_with("HTTP/1.1 403"), "{reply}");
}

#[test]
fn live_origin_publishes_over_time() {
    let (_, es) = common::synth(500, 50, 2);
    let opts = PackageOptions { profile: Profile::Live, timeline: true, ..Default::default() };
    let report = package_presentation(&es, &opts).unwrap();
    let clock = TestClock::new(t0());
    let session = Arc::new(LiveSession::new(&report, t0(), 1.9));
    let origin = Origin::new(None, Some(Arc::clone(&session)), Arc::new(clock.clone()));
    let server = http_serve(origin, "127.0.0.1:0").unwrap();
    let base = format!("http://{}", server.addr());

    let count = || {
        let (status, body, _) = get(&format!("{base}/live.mpd"), None);
        assert_eq!(status, 200);
        let text = String::from_utf8(body).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        assert_eq!(doc.root_element().attribute("type"), Some("dynamic"));
        doc.descendants()
            .filter(|n| n.has_tag_name("S"))
            .map(|n| 1 + n.attribute("r").map_or(0, |r| r.parse::<u64>().unwrap()))
            .sum::<u64>()
    };
    clock.set(t0() + Duration::milliseconds(3000));
    let before = count();
    clock.set(t0() + Duration::milliseconds(5000));
    let after = count();
    assert_eq!(after, before + 1);
    assert_eq!(get(&format!("{base}/seg_99999.m4s"), None).0, 404);
    assert_eq!(get(&format!("{base}/seg_2.m4s"), None).0, 200);
    assert_eq!(get(&format!("{base}/seg_4.m4s"), None).0, 404);
    let (status, _, ct) = get(&format!("{base}/live_media.m3u8"), None);
    assert_eq!((status, ct.as_deref()), (200, Some("application/vnd.apple.mpegurl")));
    assert!(session.published_upto() >= 3);
}

#[test]
fn udp_loopback_demuxes_to_source() {
    let (bytes, es) = common::synth(25, 25, 4);
    let rx = UdpSocket::bind("127.0.0.1:0").unwrap();
    rx.set_read_timeout(Some(StdDuration::from_secs(3))).unwrap();
    let dest = rx.local_addr().unwrap().to_string();
    let cfg = MuxConfig { rate: RateMode::Cbr(4_000_000), ..MuxConfig::default() };
    let expected = mux_ts(&es, None, &cfg).unwrap();
    let reader = std::thread::spawn(move || {
        let mut got = Vec::new();
        let mut buf = [0u8; 2048];
        while let Ok(n) = rx.recv(&mut buf) {
            got.extend_from_slice(&buf[..n]);
        }
        got
    });
    let stats = udp_emit(TsMuxer::new(&es, None, &cfg).unwrap(), 4_000_000, &dest).unwrap();
    let got = reader.join().unwrap();
    assert_eq!(stats.bytes as usize, expected.len());
    assert_eq!(got, expected);
    let out = demux_ts(&got, ParseMode::Strict).unwrap();
    assert_eq!(out.video().unwrap().data, bytes);
}
