mod common;

use proptest::prelude::*;
use vvcsys::dashhls::{plan_segments, write_mpd, MpdConfig, PlannedSegment, Representation, SegmentPlan};
use vvcsys::isobmff::{read_box_tree, write_box_tree, Mp4Box, NalArray, SizeForm, VvcConfigRecord, VvcPtlInfo};
use vvcsys::mpegts::{demux_ts, mux_ts, MuxConfig, RateMode, DEFAULT_VIDEO_PID};
use vvcsys::nalio::nal::{PPS_NUT, SPS_NUT, VPS_NUT};
use vvcsys::nalio::{
    insert_emulation_prevention, remove_emulation_prevention, scan_annex_b, write_annex_b, ParseMode,
    ProfileTierLevel,
};
use vvcsys::synth::SynthConfig;

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn emulation_prevention_inverse(rbsp in prop::collection::vec(prop_oneof![Just(0u8), Just(1), Just(2), Just(3), any::<u8>()], 0..200)) {
        let ebsp = insert_emulation_prevention(&rbsp);
        prop_assert!(!ebsp.windows(3).any(|w| w[0] == 0 && w[1] == 0 && w[2] <= 2));
        prop_assert_eq!(remove_emulation_prevention(&ebsp).unwrap(), rbsp);
    }

    #[test]
    fn annex_b_rescan_is_identity(seed in any::<u64>()) {
        let data = common::random_annex_b(&mut common::rng(seed));
        let nals = scan_annex_b(&data).unwrap();
        prop_assert_eq!(write_annex_b(&nals), data);
    }

    #[test]
    fn vvcc_parse_inverts_serialize(
        length_size_minus_one in 0u8..4,
        num_sublayers in 1u8..=7,
        profile_idc in 0u8..128,
        tier in any::<bool>(),
        level_idc in any::<u8>(),
        gci in prop::collection::vec(any::<u8>(), 1..4),
        sublayer_levels in prop::collection::vec(prop::option::of(any::<u8>()), 6),
        sub_profiles in prop::collection::vec(any::<u32>(), 0..3),
        width in any::<u16>(),
        height in any::<u16>(),
        sets in prop::collection::vec(prop::collection::vec(any::<u8>(), 2..40), 1..4),
    ) {
        let n = usize::from(num_sublayers) - 1;
        let ptl = ProfileTierLevel {
            profile_idc,
            tier_flag: tier,
            level_idc,
            constraint_info: gci,
            sublayer_level_idc: sublayer_levels[..n].to_vec(),
            sub_profile_idc: sub_profiles,
        };
        let record = VvcConfigRecord {
            length_size_minus_one,
            ptl: Some(VvcPtlInfo {
                ols_idx: 0,
                num_sublayers,
                constant_frame_rate: 1,
                chroma_format_idc: 1,
                bit_depth_minus8: 2,
                native_ptl: ptl,
                max_picture_width: width,
                max_picture_height: height,
                avg_frame_rate: 6400,
            }),
            arrays: [VPS_NUT, SPS_NUT, PPS_NUT]
                .iter()
                .zip(&sets)
                .map(|(&t, s)| NalArray { completeness: true, nal_unit_type: t, nalus: vec![s.clone()] })
                .collect(),
        };
        let bytes = record.serialize().unwrap();
        prop_assert_eq!(VvcConfigRecord::parse(&bytes).unwrap(), record);
    }

    #[test]
    fn box_tree_write_inverts_read(tree in box_tree()) {
        let bytes = write_box_tree(&tree).unwrap();
        let parsed = read_box_tree(&bytes).unwrap();
        prop_assert_eq!(&parsed, &tree);
        prop_assert_eq!(write_box_tree(&parsed).unwrap(), bytes);
    }

    #[test]
    fn segment_plan_invariants(idr_gaps in prop::collection::vec(1usize..60, 1..8), target in 200u32..4000) {
        let frames: usize = idr_gaps.iter().sum();
        let irap: Vec<usize> = idr_gaps.iter().scan(0, |acc, g| { let s = *acc; *acc += g; Some(s) }).collect();
        let cfg = SynthConfig { frames, idr_period: usize::MAX, idr_bytes: 200, trail_bytes: 50, ..Default::default() };
        let mut es = common::synth_with(&cfg).1;
        // re-label pictures so IRAPs sit exactly at the chosen positions
        for (i, au) in es.aus.iter_mut().enumerate() {
            au.is_irap = irap.contains(&i);
        }
        let plan = plan_segments(&es, target).unwrap();
        prop_assert!(plan.segments.iter().all(|s| es.aus[s.first_au].is_irap && s.au_count > 0));
        prop_assert_eq!(plan.segments.iter().map(|s| s.au_count).sum::<usize>(), es.aus.len());
        prop_assert_eq!(plan.total_duration(), es.duration_ticks());
        // each boundary is the first IRAP at or after start + target
        let target_ticks = target as u64 * es.timescale as u64 / 1000;
        for w in plan.segments.windows(2) {
            let first_ok = irap.iter().map(|&i| es.timing(i).pts).find(|&p| p * 1000 >= (w[0].start * 1000 + target as u64 * es.timescale as u64));
            prop_assert_eq!(Some(w[1].start), first_ok);
            prop_assert!(w[1].start - w[0].start >= target_ticks);
        }
    }

    #[test]
    fn timeline_expansion_reproduces_plan(durs in prop::collection::vec(prop_oneof![Just(2000u64), Just(1960), Just(2400)], 1..20)) {
        let mut t = 0;
        let segments: Vec<PlannedSegment> = durs.iter().map(|&d| {
            let s = PlannedSegment { first_au: 0, au_count: 1, duration: d, start: t, earliest_pts: t };
            t += d;
            s
        }).collect();
        let plan = SegmentPlan { target_dur_ms: 2000, timescale: 1000, segments };
        let rep = Representation { id: "1".into(), bandwidth: 1, width: 16, height: 16, codecs: "vvc1.1.L51".into(), frame_rate: None };
        let mpd = write_mpd(&plan, &MpdConfig::live(rep, true)).unwrap();
        let doc = roxmltree::Document::parse(&mpd).unwrap();
        let mut expanded = Vec::new();
        let mut now = 0u64;
        for s in doc.descendants().filter(|n| n.has_tag_name("S")) {
            if let Some(t) = s.attribute("t") { now = t.parse().unwrap(); }
            let d: u64 = s.attribute("d").unwrap().parse().unwrap();
            let r: u64 = s.attribute("r").map_or(0, |r| r.parse().unwrap());
            for _ in 0..=r {
                expanded.push((now, d));
                now += d;
            }
        }
        let want: Vec<(u64, u64)> = plan.segments.iter().map(|s| (s.start, s.duration)).collect();
        prop_assert_eq!(expanded, want);
    }
}

fn leaf() -> impl Strategy<Value = Mp4Box> {
    (prop::array::uniform3(b'a'..=b'z'), prop::collection::vec(any::<u8>(), 0..64), any::<bool>()).prop_map(
        |(name, payload, large)| {
            let mut b = Mp4Box::leaf(&[b'z', name[0], name[1], name[2]], payload);
            if large {
                b.size_form = SizeForm::Large;
            }
            b
        },
    )
}

fn box_tree() -> impl Strategy<Value = Vec<Mp4Box>> {
    let node = leaf().prop_recursive(3, 24, 4, |inner| {
        (prop::sample::select(vec![*b"moov", *b"trak", *b"mdia", *b"stbl", *b"moof", *b"traf"]), prop::collection::vec(inner, 0..4))
            .prop_map(|(fourcc, kids)| Mp4Box::container(&fourcc, kids))
    });
    prop::collection::vec(node, 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn ts_roundtrip_invariants(frames in 5usize..40, idr_period in 1usize..20, seed in any::<u64>(), vbr in any::<bool>()) {
        let (bytes, es) = common::synth(frames, idr_period, seed);
        let rate = if vbr { RateMode::Vbr } else { RateMode::Cbr(8_000_000) };
        let ts = mux_ts(&es, None, &MuxConfig { rate, ..MuxConfig::default() }).unwrap();
        let nulls = common::check_ts(&ts).map_err(TestCaseError::fail)?;
        if vbr {
            prop_assert_eq!(nulls, 0);
        }
        let out = demux_ts(&ts, ParseMode::Strict).unwrap();
        prop_assert!(out.issues.is_empty());
        prop_assert_eq!(&out.streams[&DEFAULT_VIDEO_PID].data, &bytes);
    }
}
