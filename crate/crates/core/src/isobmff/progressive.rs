//! Progressive (`ftyp`/`moov`/`mdat`) packaging and the `moov` writer shared
//! with the fragmenter.

use crate::nalio::nal::{self, NalUnit, PPS_NUT, SPS_NUT, VPS_NUT};
use crate::nalio::{parameter_set_id, sps_from_nal, ElementaryStream, SpsSummary};

use super::{
    put_box, put_full_box, rescale, AudioTrack, Mp4Error, PutBe, SampleEntry, SampleEntryKind, SampleInfo,
    TrackModel, VvcConfigRecord,
};

pub(crate) const MOVIE_TIMESCALE: u32 = 1000;

/// Video samples in length-prefixed form, ready to be placed in `mdat`.
#[derive(Debug, Clone)]
pub struct PreparedSamples {
    pub kind: SampleEntryKind,
    pub config: VvcConfigRecord,
    pub sps: SpsSummary,
    pub timescale: u32,
    pub data: Vec<Vec<u8>>,
    /// Sample table entries with zero offsets.
    pub infos: Vec<SampleInfo>,
}

impl PreparedSamples {
    pub fn sample_entry(&self) -> SampleEntry {
        SampleEntry::Vvc {
            kind: self.kind,
            config: self.config.clone(),
            width: self.sps.width_luma.min(u16::MAX as u32) as u16,
            height: self.sps.height_luma.min(u16::MAX as u32) as u16,
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.data.iter().map(|d| d.len() as u64).sum()
    }
}

#[derive(Default)]
struct ParamSets {
    // (nal type, id, bytes) in first-seen order
    sets: Vec<(u8, u8, Vec<u8>)>,
}

impl ParamSets {
    fn add(&mut self, n: &NalUnit, strict: bool) -> Result<(), Mp4Error> {
        let t = n.nal_unit_type();
        let id = parameter_set_id(n).unwrap_or(0);
        let bytes = n.to_bytes();
        match self.sets.iter().find(|(st, sid, _)| *st == t && *sid == id) {
            Some((_, _, existing)) if strict && *existing != bytes => {
                Err(Mp4Error::ParameterSetConflict { kind: nal::type_name(t), id })
            }
            Some(_) => Ok(()),
            None => {
                self.sets.push((t, id, bytes));
                Ok(())
            }
        }
    }

    fn of_type(&self, t: u8) -> Vec<Vec<u8>> {
        self.sets.iter().filter(|(st, _, _)| *st == t).map(|(_, _, b)| b.clone()).collect()
    }
}

/// Convert access units to length-prefixed samples and build the `vvcC` record.
pub fn prepare_samples(
    es: &ElementaryStream,
    kind: SampleEntryKind,
    length_size_minus_one: u8,
) -> Result<PreparedSamples, Mp4Error> {
    if !matches!(length_size_minus_one, 0 | 1 | 3) {
        return Err(Mp4Error::Malformed(format!("length_size_minus_one {length_size_minus_one}")));
    }
    if !es.aus.first().is_some_and(|a| a.is_irap) {
        return Err(Mp4Error::NoIrapStart);
    }
    let mut ps = ParamSets::default();
    let mut first_sps = None;
    for n in es.nals().filter(|n| nal::is_parameter_set(n.nal_unit_type())) {
        ps.add(n, kind == SampleEntryKind::Vvc1)?;
        if n.nal_unit_type() == SPS_NUT && first_sps.is_none() {
            first_sps = Some(sps_from_nal(n)?);
        }
    }
    let sps = first_sps.ok_or(Mp4Error::MissingParameterSets("SPS"))?;
    let pps = ps.of_type(PPS_NUT);
    if pps.is_empty() {
        return Err(Mp4Error::MissingParameterSets("PPS"));
    }
    let first = es.timing(0);
    let avg_frame_rate = if first.duration > 0 {
        u16::try_from((256 * es.timescale as u64 + first.duration as u64 / 2) / first.duration as u64).unwrap_or(0)
    } else {
        0
    };
    let mut config = VvcConfigRecord::from_parameter_sets(
        Some(&sps),
        &ps.of_type(VPS_NUT),
        &ps.of_type(SPS_NUT),
        &pps,
        kind == SampleEntryKind::Vvc1,
        avg_frame_rate,
    );
    config.length_size_minus_one = length_size_minus_one;

    let length_size = length_size_minus_one as usize + 1;
    let max_len = if length_size == 4 { u32::MAX as usize } else { (1usize << (8 * length_size)) - 1 };
    let mut data = Vec::with_capacity(es.aus.len());
    let mut infos = Vec::with_capacity(es.aus.len());
    for (i, au) in es.aus.iter().enumerate() {
        let mut sample = Vec::with_capacity(au.payload_size() + au.nals.len() * length_size);
        for n in &au.nals {
            if kind == SampleEntryKind::Vvc1 && nal::is_parameter_set(n.nal_unit_type()) {
                continue;
            }
            let size = n.size();
            if size > max_len {
                return Err(Mp4Error::OversizedNal { size, length_size });
            }
            sample.extend_from_slice(&(size as u32).to_be_bytes()[4 - length_size..]);
            sample.extend_from_slice(&n.header.to_bytes());
            sample.extend_from_slice(&n.ebsp);
        }
        let t = es.timing(i);
        let composition_offset = i32::try_from(t.composition_offset())
            .map_err(|_| Mp4Error::Malformed(format!("composition offset of access unit {i} out of range")))?;
        infos.push(SampleInfo {
            offset: 0,
            size: u32::try_from(sample.len()).map_err(|_| Mp4Error::Malformed("sample larger than 4 GiB".into()))?,
            duration: t.duration,
            sync: au.is_irap,
            composition_offset,
        });
        data.push(sample);
    }
    Ok(PreparedSamples { kind, config, sps, timescale: es.timescale, data, infos })
}

/// Package an elementary stream (and optional opaque audio) as a progressive MP4.
pub fn package_progressive(
    es: &ElementaryStream,
    kind: SampleEntryKind,
    audio: Option<&AudioTrack>,
) -> Result<Vec<u8>, Mp4Error> {
    let prepared = prepare_samples(es, kind, 3)?;
    let mut tracks = vec![TrackModel {
        track_id: 1,
        timescale: prepared.timescale,
        samples: prepared.infos.clone(),
        sample_entry: prepared.sample_entry(),
    }];
    let mut payloads: Vec<&[u8]> = prepared.data.iter().map(Vec::as_slice).collect();
    if let Some(a) = audio {
        tracks.push(TrackModel {
            track_id: 2,
            timescale: a.timescale,
            samples: a
                .samples
                .iter()
                .map(|s| SampleInfo { offset: 0, size: s.data.len() as u32, duration: s.duration, sync: true, composition_offset: 0 })
                .collect(),
            sample_entry: SampleEntry::Opaque(a.sample_entry.clone()),
        });
        payloads.extend(a.samples.iter().map(|s| s.data.as_slice()));
    }
    let payload_len: u64 = payloads.iter().map(|p| p.len() as u64).sum();

    let mut out = Vec::new();
    write_ftyp(&mut out, b"ftyp", b"isom", 0x200, &[b"isom", b"iso2", b"mp41"]);
    let ftyp_len = out.len() as u64;

    let mut co64 = false;
    let large_mdat = payload_len + 8 > u32::MAX as u64;
    let mdat_header = if large_mdat { 16 } else { 8 };
    let moov = loop {
        let moov_len = build_moov(&tracks, false, co64).len() as u64;
        let mut off = ftyp_len + moov_len + mdat_header;
        for t in &mut tracks {
            for s in &mut t.samples {
                s.offset = off;
                off += s.size as u64;
            }
        }
        if !co64 && off > u32::MAX as u64 {
            co64 = true;
            continue;
        }
        break build_moov(&tracks, false, co64);
    };
    out.extend_from_slice(&moov);
    if large_mdat {
        out.u32(1);
        out.extend_from_slice(b"mdat");
        out.u64(payload_len + 16);
    } else {
        out.u32((payload_len + 8) as u32);
        out.extend_from_slice(b"mdat");
    }
    for p in payloads {
        out.extend_from_slice(p);
    }
    Ok(out)
}

pub(crate) fn write_ftyp(out: &mut Vec<u8>, fourcc: &[u8; 4], major: &[u8; 4], minor: u32, compat: &[&[u8; 4]]) {
    put_box(out, fourcc, |o| {
        o.extend_from_slice(major);
        o.u32(minor);
        for c in compat {
            o.extend_from_slice(*c);
        }
    });
}

const MATRIX: [u32; 9] = [0x0001_0000, 0, 0, 0, 0x0001_0000, 0, 0, 0, 0x4000_0000];

fn put_matrix(o: &mut Vec<u8>) {
    for m in MATRIX {
        o.u32(m);
    }
}

/// Build a `moov` box. Fragmented mode writes empty sample tables plus `mvex`.
pub(crate) fn build_moov(tracks: &[TrackModel], fragmented: bool, co64: bool) -> Vec<u8> {
    let movie_duration = if fragmented {
        0
    } else {
        tracks.iter().map(|t| rescale(t.duration_ticks(), t.timescale, MOVIE_TIMESCALE)).max().unwrap_or(0)
    };
    let next_track_id = tracks.iter().map(|t| t.track_id).max().unwrap_or(0) + 1;
    let mut out = Vec::new();
    put_box(&mut out, b"moov", |o| {
        let v1 = movie_duration > u32::MAX as u64;
        put_full_box(o, b"mvhd", v1 as u8, 0, |o| {
            if v1 {
                o.u64(0);
                o.u64(0);
                o.u32(MOVIE_TIMESCALE);
                o.u64(movie_duration);
            } else {
                o.u32(0);
                o.u32(0);
                o.u32(MOVIE_TIMESCALE);
                o.u32(movie_duration as u32);
            }
            o.u32(0x0001_0000); // rate 1.0
            o.u16(0x0100); // volume 1.0
            o.zeros(10);
            put_matrix(o);
            o.zeros(24);
            o.u32(next_track_id);
        });
        for t in tracks {
            write_trak(o, t, fragmented, co64);
        }
        if fragmented {
            put_box(o, b"mvex", |o| {
                for t in tracks {
                    put_full_box(o, b"trex", 0, 0, |o| {
                        o.u32(t.track_id);
                        o.u32(1); // sample description index
                        o.u32(0);
                        o.u32(0);
                        o.u32(0);
                    });
                }
            });
        }
    });
    out
}

fn write_trak(o: &mut Vec<u8>, t: &TrackModel, fragmented: bool, co64: bool) {
    let media_duration = if fragmented { 0 } else { t.duration_ticks() };
    let movie_duration = rescale(media_duration, t.timescale, MOVIE_TIMESCALE);
    let (width, height) = match &t.sample_entry {
        SampleEntry::Vvc { width, height, .. } => (*width, *height),
        SampleEntry::Opaque(_) => (0, 0),
    };
    put_box(o, b"trak", |o| {
        let v1 = movie_duration > u32::MAX as u64;
        // enabled | in movie
        put_full_box(o, b"tkhd", v1 as u8, 3, |o| {
            if v1 {
                o.u64(0);
                o.u64(0);
                o.u32(t.track_id);
                o.u32(0);
                o.u64(movie_duration);
            } else {
                o.u32(0);
                o.u32(0);
                o.u32(t.track_id);
                o.u32(0);
                o.u32(movie_duration as u32);
            }
            o.zeros(8);
            o.u16(0); // layer
            o.u16(0); // alternate group
            o.u16(if t.is_video() { 0 } else { 0x0100 });
            o.u16(0);
            put_matrix(o);
            o.u32((width as u32) << 16);
            o.u32((height as u32) << 16);
        });
        put_box(o, b"mdia", |o| {
            let v1 = media_duration > u32::MAX as u64;
            put_full_box(o, b"mdhd", v1 as u8, 0, |o| {
                if v1 {
                    o.u64(0);
                    o.u64(0);
                    o.u32(t.timescale);
                    o.u64(media_duration);
                } else {
                    o.u32(0);
                    o.u32(0);
                    o.u32(t.timescale);
                    o.u32(media_duration as u32);
                }
                o.u16(0x55C4); // 'und'
                o.u16(0);
            });
            let (handler, name): (&[u8; 4], &[u8]) =
                if t.is_video() { (b"vide", b"VideoHandler\0") } else { (b"soun", b"SoundHandler\0") };
            put_full_box(o, b"hdlr", 0, 0, |o| {
                o.u32(0);
                o.extend_from_slice(handler);
                o.zeros(12);
                o.extend_from_slice(name);
            });
            put_box(o, b"minf", |o| {
                if t.is_video() {
                    put_full_box(o, b"vmhd", 0, 1, |o| o.zeros(8));
                } else {
                    put_full_box(o, b"smhd", 0, 0, |o| o.zeros(4));
                }
                put_box(o, b"dinf", |o| {
                    put_full_box(o, b"dref", 0, 0, |o| {
                        o.u32(1);
                        put_full_box(o, b"url ", 0, 1, |_| {});
                    });
                });
                write_stbl(o, t, fragmented, co64);
            });
        });
    });
}

fn write_sample_entry(o: &mut Vec<u8>, entry: &SampleEntry) {
    match entry {
        SampleEntry::Opaque(bytes) => o.extend_from_slice(bytes),
        SampleEntry::Vvc { kind, config, width, height } => {
            put_box(o, kind.fourcc(), |o| {
                o.zeros(6);
                o.u16(1); // data reference index
                o.zeros(16);
                o.u16(*width);
                o.u16(*height);
                o.u32(0x0048_0000);
                o.u32(0x0048_0000);
                o.u32(0);
                o.u16(1); // frame count
                let mut name = [0u8; 32];
                let label = b"VVC Coding";
                name[0] = label.len() as u8;
                name[1..=label.len()].copy_from_slice(label);
                o.extend_from_slice(&name);
                o.u16(0x0018);
                o.u16(0xffff);
                // serialization only fails for out-of-range fields, which
                // prepare_samples never produces
                let record = config.serialize().expect("valid vvcC record");
                put_full_box(o, b"vvcC", 0, 0, |o| o.extend_from_slice(&record));
            });
        }
    }
}

fn write_stbl(o: &mut Vec<u8>, t: &TrackModel, fragmented: bool, co64: bool) {
    let samples: &[SampleInfo] = if fragmented { &[] } else { &t.samples };
    put_box(o, b"stbl", |o| {
        put_full_box(o, b"stsd", 0, 0, |o| {
            o.u32(1);
            write_sample_entry(o, &t.sample_entry);
        });
        let mut runs: Vec<(u32, u32)> = Vec::new();
        for s in samples {
            match runs.last_mut() {
                Some((n, d)) if *d == s.duration => *n += 1,
                _ => runs.push((1, s.duration)),
            }
        }
        put_full_box(o, b"stts", 0, 0, |o| {
            o.u32(runs.len() as u32);
            for (n, d) in &runs {
                o.u32(*n);
                o.u32(*d);
            }
        });
        if samples.iter().any(|s| s.composition_offset != 0) {
            let mut runs: Vec<(u32, i32)> = Vec::new();
            for s in samples {
                match runs.last_mut() {
                    Some((n, c)) if *c == s.composition_offset => *n += 1,
                    _ => runs.push((1, s.composition_offset)),
                }
            }
            put_full_box(o, b"ctts", 1, 0, |o| {
                o.u32(runs.len() as u32);
                for (n, c) in &runs {
                    o.u32(*n);
                    o.i32(*c);
                }
            });
        }
        if t.is_video() {
            let sync: Vec<u32> =
                samples.iter().enumerate().filter(|(_, s)| s.sync).map(|(i, _)| i as u32 + 1).collect();
            put_full_box(o, b"stss", 0, 0, |o| {
                o.u32(sync.len() as u32);
                for n in sync {
                    o.u32(n);
                }
            });
        }
        put_full_box(o, b"stsc", 0, 0, |o| {
            if samples.is_empty() {
                o.u32(0);
            } else {
                o.u32(1);
                o.u32(1);
                o.u32(samples.len() as u32);
                o.u32(1);
            }
        });
        put_full_box(o, b"stsz", 0, 0, |o| {
            o.u32(0);
            o.u32(samples.len() as u32);
            for s in samples {
                o.u32(s.size);
            }
        });
        let chunk = samples.first().map(|s| s.offset);
        if co64 {
            put_full_box(o, b"co64", 0, 0, |o| {
                o.u32(chunk.is_some() as u32);
                if let Some(c) = chunk {
                    o.u64(c);
                }
            });
        } else {
            put_full_box(o, b"stco", 0, 0, |o| {
                o.u32(chunk.is_some() as u32);
                if let Some(c) = chunk {
                    o.u32(c as u32);
                }
            });
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isobmff::read_box_tree;
    use crate::nalio::FrameRate;
    use crate::synth::{generate_annex_b, SynthConfig};

    fn es(frames: usize, idr_period: usize) -> ElementaryStream {
        let cfg = SynthConfig { frames, idr_period, idr_bytes: 3000, trail_bytes: 500, ..Default::default() };
        ElementaryStream::from_annex_b(&generate_annex_b(&cfg), FrameRate::new(25, 1)).unwrap()
    }

    fn u32_at(b: &[u8], i: usize) -> u32 {
        u32::from_be_bytes(b[i..i + 4].try_into().unwrap())
    }

    #[test]
    fn ten_samples_one_sync() {
        let file = package_progressive(&es(10, 0), SampleEntryKind::Vvc2, None).unwrap();
        let tree = read_box_tree(&file).unwrap();
        let names: Vec<String> = tree.iter().map(|b| b.fourcc.as_str()).collect();
        assert_eq!(names, ["ftyp", "moov", "mdat"]);
        let stbl = tree[1].path(&[b"trak", b"mdia", b"minf", b"stbl"]).unwrap();
        let stsz = stbl.child(b"stsz").unwrap().payload().unwrap();
        assert_eq!(u32_at(stsz, 8), 10);
        let stss = stbl.child(b"stss").unwrap().payload().unwrap();
        assert_eq!((u32_at(stss, 4), u32_at(stss, 8)), (1, 1));
        let mdhd = tree[1].path(&[b"trak", b"mdia", b"mdhd"]).unwrap().payload().unwrap();
        assert_eq!((u32_at(mdhd, 12), u32_at(mdhd, 16)), (25_000, 10_000));
        let mvhd = tree[1].child(b"mvhd").unwrap().payload().unwrap();
        assert_eq!((u32_at(mvhd, 12), u32_at(mvhd, 16)), (1000, 400));
    }

    #[test]
    fn vvc1_mdat_has_no_parameter_sets() {
        let stream = es(1, 0);
        let file = package_progressive(&stream, SampleEntryKind::Vvc1, None).unwrap();
        let tree = read_box_tree(&file).unwrap();
        let mdat = tree[2].payload().unwrap();
        let mut pos = 0;
        while pos < mdat.len() {
            let len = u32_at(mdat, pos) as usize;
            let t = mdat[pos + 5] >> 3;
            assert!(!nal::is_parameter_set(t));
            pos += 4 + len;
        }
        assert_eq!(pos, mdat.len());
        let sps = stream.nals().find(|n| n.nal_unit_type() == SPS_NUT).unwrap().to_bytes();
        assert!(!mdat.windows(sps.len()).any(|w| w == sps.as_slice()));
    }

    #[test]
    fn errors() {
        let mut s = es(3, 0);
        s.aus.remove(0);
        assert_eq!(prepare_samples(&s, SampleEntryKind::Vvc2, 3).unwrap_err(), Mp4Error::NoIrapStart);

        let mut s = es(2, 0);
        s.aus[0].nals.retain(|n| n.nal_unit_type() != PPS_NUT);
        assert_eq!(prepare_samples(&s, SampleEntryKind::Vvc2, 3).unwrap_err(), Mp4Error::MissingParameterSets("PPS"));

        let s = es(1, 0);
        assert!(matches!(prepare_samples(&s, SampleEntryKind::Vvc2, 0), Err(Mp4Error::OversizedNal { length_size: 1, .. })));
    }

    #[test]
    fn conflicting_parameter_sets_need_vvc2() {
        let mut s = es(4, 2);
        let pps = s.aus[2].nals.iter_mut().find(|n| n.nal_unit_type() == PPS_NUT).unwrap();
        pps.ebsp.push(0x80);
        assert!(matches!(
            prepare_samples(&s, SampleEntryKind::Vvc1, 3),
            Err(Mp4Error::ParameterSetConflict { id: 0, .. })
        ));
        assert!(prepare_samples(&s, SampleEntryKind::Vvc2, 3).is_ok());
    }
}
