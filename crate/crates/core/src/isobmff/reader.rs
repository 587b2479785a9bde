//! Reading sample tables (progressive and fragmented) and the MP4-to-Annex-B filter.

use std::collections::HashMap;

use crate::nalio::nal::{NalUnit, AUD_NUT};
use crate::nalio::{write_annex_b, AccessUnit, AuTiming, ElementaryStream};

use super::{read_box_tree, Cursor, Mp4Box, Mp4Error, SampleEntry, SampleEntryKind, SampleInfo, TrackModel, VvcConfigRecord};

/// Parse every track of an MP4 file, following `moof` fragments when present.
pub fn read_tracks(data: &[u8]) -> Result<Vec<TrackModel>, Mp4Error> {
    let tree = read_box_tree(data)?;
    let moov = tree.iter().find(|b| b.fourcc == b"moov").ok_or_else(|| Mp4Error::Malformed("no moov box".into()))?;
    let mut tracks = Vec::new();
    for trak in moov.children().iter().filter(|b| b.fourcc == b"trak") {
        tracks.push(parse_trak(trak)?);
    }
    let trex = parse_trex(moov)?;

    let mut mdats = Vec::new();
    let mut pos = 0u64;
    for b in &tree {
        let header = b.size() - content_len(b);
        if b.fourcc == b"mdat" {
            mdats.push((pos + header, pos + b.size()));
        } else if b.fourcc == b"moof" {
            read_moof(b, pos, &trex, &mut tracks)?;
        }
        pos += b.size();
    }
    for t in &tracks {
        for (i, s) in t.samples.iter().enumerate() {
            let end = s.offset + s.size as u64;
            if !mdats.iter().any(|&(a, b)| s.offset >= a && end <= b) {
                return Err(Mp4Error::CorruptSampleTable { sample: i });
            }
        }
    }
    Ok(tracks)
}

fn content_len(b: &Mp4Box) -> u64 {
    match b.payload() {
        Some(p) => p.len() as u64,
        None => b.children().iter().map(Mp4Box::size).sum(),
    }
}

fn leaf<'a>(b: &'a Mp4Box, path: &[&[u8; 4]]) -> Result<&'a [u8], Mp4Error> {
    b.path(path).and_then(Mp4Box::payload).ok_or_else(|| {
        let names: Vec<String> = path.iter().map(|p| String::from_utf8_lossy(*p).into_owned()).collect();
        Mp4Error::Malformed(format!("missing {}", names.join("/")))
    })
}

fn parse_trak(trak: &Mp4Box) -> Result<TrackModel, Mp4Error> {
    let mut c = Cursor::new(leaf(trak, &[b"tkhd"])?, "tkhd");
    let (v, _) = c.full_header()?;
    c.skip(if v == 1 { 16 } else { 8 })?;
    let track_id = c.u32()?;

    let mut c = Cursor::new(leaf(trak, &[b"mdia", b"mdhd"])?, "mdhd");
    let (v, _) = c.full_header()?;
    c.skip(if v == 1 { 16 } else { 8 })?;
    let timescale = c.u32()?;
    if timescale == 0 {
        return Err(Mp4Error::Malformed("zero media timescale".into()));
    }

    let stbl = trak
        .path(&[b"mdia", b"minf", b"stbl"])
        .ok_or_else(|| Mp4Error::Malformed("missing stbl".into()))?;
    let sample_entry = parse_stsd(leaf(stbl, &[b"stsd"])?)?;
    let samples = parse_sample_table(stbl)?;
    Ok(TrackModel { track_id, timescale, samples, sample_entry })
}

fn parse_stsd(payload: &[u8]) -> Result<SampleEntry, Mp4Error> {
    let mut c = Cursor::new(payload, "stsd");
    c.full_header()?;
    if c.u32()? == 0 {
        return Err(Mp4Error::Malformed("empty stsd".into()));
    }
    let rest = c.rest();
    if rest.len() < 8 {
        return Err(Mp4Error::Malformed("stsd payload too short".into()));
    }
    let size = (u32::from_be_bytes(rest[..4].try_into().expect("4")) as usize).clamp(8, rest.len());
    let entry = &rest[..size];
    let Some(kind) = SampleEntryKind::from_fourcc(&entry[4..8]) else {
        return Ok(SampleEntry::Opaque(entry.to_vec()));
    };
    let body = &entry[8..];
    if body.len() < 78 {
        return Err(Mp4Error::Malformed("visual sample entry too short".into()));
    }
    let width = u16::from_be_bytes([body[24], body[25]]);
    let height = u16::from_be_bytes([body[26], body[27]]);
    let children = read_box_tree(&body[78..])?;
    let vvcc = children
        .iter()
        .find(|b| b.fourcc == b"vvcC")
        .and_then(Mp4Box::payload)
        .ok_or_else(|| Mp4Error::Malformed(format!("{kind} entry without vvcC")))?;
    if vvcc.len() < 4 {
        return Err(Mp4Error::Malformed("vvcC too short".into()));
    }
    let config = VvcConfigRecord::parse(&vvcc[4..])?;
    Ok(SampleEntry::Vvc { kind, config, width, height })
}

fn table<'a>(stbl: &'a Mp4Box, name: &[u8; 4]) -> Option<Cursor<'a>> {
    stbl.child(name).and_then(Mp4Box::payload).map(|p| Cursor::new(p, "sample table"))
}

fn parse_sample_table(stbl: &Mp4Box) -> Result<Vec<SampleInfo>, Mp4Error> {
    let mut durations = Vec::new();
    if let Some(mut c) = table(stbl, b"stts") {
        c.full_header()?;
        for _ in 0..c.u32()? {
            let (n, d) = (c.u32()?, c.u32()?);
            durations.extend(std::iter::repeat(d).take(n as usize));
        }
    }
    let mut sizes = Vec::new();
    if let Some(mut c) = table(stbl, b"stsz") {
        c.full_header()?;
        let fixed = c.u32()?;
        let count = c.u32()?;
        for _ in 0..count {
            sizes.push(if fixed != 0 { fixed } else { c.u32()? });
        }
    }
    if sizes.len() != durations.len() {
        return Err(Mp4Error::Malformed(format!("stsz has {} entries, stts {}", sizes.len(), durations.len())));
    }
    let mut offsets_by_sample = Vec::with_capacity(sizes.len());
    if !sizes.is_empty() {
        let chunks: Vec<u64> = if let Some(mut c) = table(stbl, b"stco") {
            c.full_header()?;
            (0..c.u32()?).map(|_| c.u32().map(u64::from)).collect::<Result<_, _>>()?
        } else if let Some(mut c) = table(stbl, b"co64") {
            c.full_header()?;
            (0..c.u32()?).map(|_| c.u64()).collect::<Result<_, _>>()?
        } else {
            return Err(Mp4Error::Malformed("no chunk offset table".into()));
        };
        let mut stsc = Vec::new();
        if let Some(mut c) = table(stbl, b"stsc") {
            c.full_header()?;
            for _ in 0..c.u32()? {
                stsc.push((c.u32()?, c.u32()?));
                c.skip(4)?;
            }
        }
        let mut sample = 0usize;
        for (ci, &chunk_offset) in chunks.iter().enumerate() {
            let chunk_no = ci as u32 + 1;
            let per_chunk = stsc.iter().rev().find(|(first, _)| *first <= chunk_no).map_or(0, |e| e.1);
            let mut off = chunk_offset;
            for _ in 0..per_chunk {
                if sample == sizes.len() {
                    break;
                }
                offsets_by_sample.push(off);
                off += sizes[sample] as u64;
                sample += 1;
            }
        }
        if offsets_by_sample.len() != sizes.len() {
            return Err(Mp4Error::CorruptSampleTable { sample: offsets_by_sample.len() });
        }
    }
    let mut cts = vec![0i32; sizes.len()];
    if let Some(mut c) = table(stbl, b"ctts") {
        c.full_header()?;
        let mut i = 0;
        for _ in 0..c.u32()? {
            let (n, o) = (c.u32()?, c.u32()? as i32);
            for _ in 0..n {
                if let Some(slot) = cts.get_mut(i) {
                    *slot = o;
                }
                i += 1;
            }
        }
    }
    let mut sync = vec![true; sizes.len()];
    if let Some(mut c) = table(stbl, b"stss") {
        c.full_header()?;
        sync.fill(false);
        for _ in 0..c.u32()? {
            let n = c.u32()? as usize;
            if n >= 1 && n <= sync.len() {
                sync[n - 1] = true;
            }
        }
    }
    Ok((0..sizes.len())
        .map(|i| SampleInfo {
            offset: offsets_by_sample[i],
            size: sizes[i],
            duration: durations[i],
            sync: sync[i],
            composition_offset: cts[i],
        })
        .collect())
}

#[derive(Clone, Copy, Default)]
struct TrackDefaults {
    duration: u32,
    size: u32,
    flags: u32,
}

fn parse_trex(moov: &Mp4Box) -> Result<HashMap<u32, TrackDefaults>, Mp4Error> {
    let mut out = HashMap::new();
    if let Some(mvex) = moov.child(b"mvex") {
        for trex in mvex.children().iter().filter(|b| b.fourcc == b"trex") {
            let mut c = Cursor::new(trex.payload().unwrap_or_default(), "trex");
            c.full_header()?;
            let id = c.u32()?;
            c.skip(4)?;
            out.insert(id, TrackDefaults { duration: c.u32()?, size: c.u32()?, flags: c.u32()? });
        }
    }
    Ok(out)
}

fn is_sync(flags: u32) -> bool {
    flags & 0x0001_0000 == 0
}

fn read_moof(
    moof: &Mp4Box,
    moof_start: u64,
    trex: &HashMap<u32, TrackDefaults>,
    tracks: &mut [TrackModel],
) -> Result<(), Mp4Error> {
    for traf in moof.children().iter().filter(|b| b.fourcc == b"traf") {
        let mut c = Cursor::new(leaf(traf, &[b"tfhd"])?, "tfhd");
        let (_, flags) = c.full_header()?;
        let track_id = c.u32()?;
        let mut d = trex.get(&track_id).copied().unwrap_or_default();
        let base = if flags & 0x1 != 0 { c.u64()? } else { moof_start };
        if flags & 0x2 != 0 {
            c.skip(4)?;
        }
        if flags & 0x8 != 0 {
            d.duration = c.u32()?;
        }
        if flags & 0x10 != 0 {
            d.size = c.u32()?;
        }
        if flags & 0x20 != 0 {
            d.flags = c.u32()?;
        }
        let track = tracks
            .iter_mut()
            .find(|t| t.track_id == track_id)
            .ok_or_else(|| Mp4Error::Malformed(format!("fragment for unknown track {track_id}")))?;
        let mut cursor = base;
        for trun in traf.children().iter().filter(|b| b.fourcc == b"trun") {
            let mut c = Cursor::new(trun.payload().unwrap_or_default(), "trun");
            let (version, tf) = c.full_header()?;
            let count = c.u32()?;
            if tf & 0x1 != 0 {
                cursor = base.wrapping_add_signed(c.u32()? as i32 as i64);
            }
            let first_flags = if tf & 0x4 != 0 { Some(c.u32()?) } else { None };
            for i in 0..count {
                let duration = if tf & 0x100 != 0 { c.u32()? } else { d.duration };
                let size = if tf & 0x200 != 0 { c.u32()? } else { d.size };
                let mut sflags = if tf & 0x400 != 0 { c.u32()? } else { d.flags };
                if i == 0 {
                    sflags = first_flags.unwrap_or(sflags);
                }
                let cto = if tf & 0x800 != 0 {
                    let raw = c.u32()?;
                    if version == 0 { raw.min(i32::MAX as u32) as i32 } else { raw as i32 }
                } else {
                    0
                };
                track.samples.push(SampleInfo {
                    offset: cursor,
                    size,
                    duration,
                    sync: is_sync(sflags),
                    composition_offset: cto,
                });
                cursor += size as u64;
            }
        }
    }
    Ok(())
}

/// The VVC track of a file, rebuilt as an elementary stream.
#[derive(Debug, Clone)]
pub struct ExtractedStream {
    pub kind: SampleEntryKind,
    pub config: VvcConfigRecord,
    pub width: u16,
    pub height: u16,
    pub stream: ElementaryStream,
}

/// One sample's NAL units split out of length-prefixed form.
pub fn split_sample(data: &[u8], length_size: usize, sample: usize) -> Result<Vec<NalUnit>, Mp4Error> {
    let mut nals = Vec::new();
    let mut pos = 0;
    while pos < data.len() {
        if data.len() - pos < length_size {
            return Err(Mp4Error::CorruptSampleTable { sample });
        }
        let len = data[pos..pos + length_size].iter().fold(0usize, |a, &b| a << 8 | b as usize);
        pos += length_size;
        if len > data.len() - pos {
            return Err(Mp4Error::CorruptSampleTable { sample });
        }
        let nal = NalUnit::from_bytes(&data[pos..pos + len]).ok_or(Mp4Error::CorruptSampleTable { sample })?;
        nals.push(nal);
        pos += len;
    }
    Ok(nals)
}

/// Read the first VVC track of a file as timed access units.
///
/// For `vvc1` tracks the `vvcC` parameter sets are inserted in front of the
/// first sample and every sync sample, after a leading access unit delimiter.
pub fn extract_elementary_stream(data: &[u8]) -> Result<ExtractedStream, Mp4Error> {
    let tracks = read_tracks(data)?;
    let track = tracks.into_iter().find(TrackModel::is_video).ok_or(Mp4Error::NoVvcTrack)?;
    let SampleEntry::Vvc { kind, config, width, height } = track.sample_entry else {
        return Err(Mp4Error::NoVvcTrack);
    };
    let param_sets: Vec<NalUnit> = config.parameter_sets().filter_map(NalUnit::from_bytes).collect();
    let mut aus = Vec::with_capacity(track.samples.len());
    let mut dts = 0u64;
    for (i, s) in track.samples.iter().enumerate() {
        let bytes = &data[s.offset as usize..(s.offset + s.size as u64) as usize];
        let mut nals = split_sample(bytes, config.length_size(), i)?;
        if kind == SampleEntryKind::Vvc1 && (i == 0 || s.sync) {
            let at = usize::from(nals.first().is_some_and(|n| n.nal_unit_type() == AUD_NUT));
            nals.splice(at..at, param_sets.iter().cloned());
        }
        let mut au = AccessUnit::new(nals, i);
        au.timing = Some(AuTiming {
            dts,
            pts: dts.saturating_add_signed(s.composition_offset as i64),
            duration: s.duration,
        });
        dts += s.duration as u64;
        aus.push(au);
    }
    Ok(ExtractedStream {
        kind,
        config,
        width,
        height,
        stream: ElementaryStream { timescale: track.timescale, aus },
    })
}

/// The MP4-to-Annex-B filter: every NAL gets a 4-byte start code.
pub fn extract_annex_b(data: &[u8]) -> Result<Vec<u8>, Mp4Error> {
    let x = extract_elementary_stream(data)?;
    let nals: Vec<NalUnit> = x.stream.nals().cloned().collect();
    Ok(write_annex_b(&nals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isobmff::{package_progressive, put_box, write_box_tree, AudioSample, AudioTrack};
    use crate::nalio::nal::{self, PPS_NUT, SPS_NUT};
    use crate::nalio::{scan_annex_b, FrameRate};
    use crate::synth::{generate_annex_b, SynthConfig};

    fn cfg() -> SynthConfig {
        SynthConfig { frames: 12, idr_period: 4, idr_bytes: 2000, trail_bytes: 300, with_aud: true, ..Default::default() }
    }

    fn key(n: &NalUnit) -> (u8, Vec<u8>) {
        (n.nal_unit_type(), n.to_bytes())
    }

    fn keys(nals: &[NalUnit]) -> Vec<(u8, Vec<u8>)> {
        nals.iter().map(key).collect()
    }

    #[test]
    fn vvc2_roundtrip_is_exact() {
        let es_bytes = generate_annex_b(&SynthConfig { suffix_sei: true, with_vps: true, ..cfg() });
        let es = ElementaryStream::from_annex_b(&es_bytes, FrameRate::new(25, 1)).unwrap();
        let file = package_progressive(&es, SampleEntryKind::Vvc2, None).unwrap();
        let back = extract_annex_b(&file).unwrap();
        assert_eq!(back, es_bytes);
    }

    #[test]
    fn vvc1_reinjects_before_sync_samples() {
        // parameter sets only at the first IDR
        let es_bytes = generate_annex_b(&SynthConfig { repeat_parameter_sets: false, ..cfg() });
        let src = scan_annex_b(&es_bytes).unwrap();
        let es = ElementaryStream::from_annex_b(&es_bytes, FrameRate::new(25, 1)).unwrap();
        let file = package_progressive(&es, SampleEntryKind::Vvc1, None).unwrap();
        let x = extract_elementary_stream(&file).unwrap();
        assert_eq!(x.stream.aus.len(), 12);
        for (i, au) in x.stream.aus.iter().enumerate() {
            let types: Vec<u8> = au.nals.iter().map(|n| n.nal_unit_type()).collect();
            if au.is_irap {
                assert_eq!(&types[..3], &[nal::AUD_NUT, SPS_NUT, PPS_NUT], "au {i}");
            } else {
                assert!(!types.iter().any(|&t| nal::is_parameter_set(t)));
            }
        }
        let mut got = keys(&x.stream.nals().cloned().collect::<Vec<_>>());
        got.retain(|k| !nal::is_parameter_set(k.0));
        let mut want = keys(&src);
        want.retain(|k| !nal::is_parameter_set(k.0));
        assert_eq!(got, want);
        let back = scan_annex_b(&extract_annex_b(&file).unwrap()).unwrap();
        assert_eq!(back.len(), src.len() + 2 * 2);
    }

    #[test]
    fn timing_and_audio_track() {
        let es = ElementaryStream::from_annex_b(&generate_annex_b(&cfg()), FrameRate::new(30000, 1001)).unwrap();
        let mut entry = Vec::new();
        put_box(&mut entry, b"mp4a", |o| o.extend_from_slice(&[0; 28]));
        let audio = AudioTrack {
            timescale: 48_000,
            sample_entry: entry.clone(),
            samples: (0..5).map(|i| AudioSample { data: vec![i; 100 + i as usize], duration: 1024 }).collect(),
        };
        let file = package_progressive(&es, SampleEntryKind::Vvc2, Some(&audio)).unwrap();
        let tracks = read_tracks(&file).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].timescale, 30_000_000);
        assert!(tracks[0].samples.iter().all(|s| s.duration == 1_001_000));
        assert_eq!(tracks[1].sample_entry, SampleEntry::Opaque(entry));
        for (s, a) in tracks[1].samples.iter().zip(&audio.samples) {
            assert_eq!(&file[s.offset as usize..][..s.size as usize], a.data.as_slice());
        }
        let x = extract_elementary_stream(&file).unwrap();
        assert_eq!(x.stream.timing(3), es.timing(3));
    }

    #[test]
    fn no_vvc_track_and_corrupt_tables() {
        let es = ElementaryStream::from_annex_b(&generate_annex_b(&cfg()), FrameRate::new(25, 1)).unwrap();
        let file = package_progressive(&es, SampleEntryKind::Vvc2, None).unwrap();

        let mut tree = read_box_tree(&file).unwrap();
        let payload = tree.pop().unwrap().payload().unwrap().to_vec();
        let mut short = tree.clone();
        short.push(Mp4Box::leaf(b"mdat", payload[..payload.len() - 10].to_vec()));
        let bytes = write_box_tree(&short).unwrap();
        assert!(matches!(extract_annex_b(&bytes), Err(Mp4Error::CorruptSampleTable { sample: 11 })));

        let renamed: Vec<u8> = {
            let at = file.windows(4).position(|w| w == b"vvc2").unwrap();
            let mut f = file.clone();
            f[at..at + 4].copy_from_slice(b"xxxx");
            f
        };
        assert_eq!(extract_annex_b(&renamed).unwrap_err(), Mp4Error::NoVvcTrack);
    }
}
