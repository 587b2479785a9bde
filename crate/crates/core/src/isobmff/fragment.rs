//! Fragmented MP4: init segment, `styp`/`moof`/`mdat` media segments and the
//! segment index used by the on-demand profile.

use crate::nalio::nal;
use crate::nalio::{AccessUnit, ElementaryStream};

use super::progressive::{build_moov, write_ftyp};
use super::{prepare_samples, put_box, put_full_box, Mp4Error, PutBe, SampleEntry, SampleEntryKind, SampleInfo, TrackModel};

const SYNC_FLAGS: u32 = 0x0200_0000;
const NON_SYNC_FLAGS: u32 = 0x0101_0000;

/// One `sidx` reference: a media segment as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SidxEntry {
    pub referenced_size: u32,
    pub subsegment_duration: u32,
    pub earliest_presentation_time: u64,
    pub starts_with_sap: bool,
    pub sap_type: SapType,
}

/// Stream access point type of a segment's first picture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SapType {
    /// IDR: closed GOP, decode order equals presentation order from here.
    Type1 = 1,
    /// CRA: leading pictures may not be decodable.
    Type3 = 3,
}

impl SapType {
    fn of(au: &AccessUnit) -> SapType {
        if au.vcl_nals().all(|n| nal::is_idr(n.nal_unit_type())) {
            SapType::Type1
        } else {
            SapType::Type3
        }
    }
}

#[derive(Debug, Clone)]
pub struct FragmentedOutput {
    pub init: Vec<u8>,
    pub segments: Vec<Vec<u8>>,
    pub sidx: Vec<SidxEntry>,
    pub timescale: u32,
    pub sample_entry: SampleEntry,
    /// Base media decode time of each segment.
    pub decode_times: Vec<u64>,
}

impl FragmentedOutput {
    /// A `sidx` box indexing every segment, for placement right after the init segment.
    pub fn sidx_box(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let ept = self.sidx.first().map_or(0, |e| e.earliest_presentation_time);
        put_full_box(&mut out, b"sidx", 1, 0, |o| {
            o.u32(1); // reference_ID
            o.u32(self.timescale);
            o.u64(ept);
            o.u64(0); // first_offset
            o.u16(0);
            o.u16(self.sidx.len() as u16);
            for e in &self.sidx {
                o.u32(e.referenced_size & 0x7fff_ffff);
                o.u32(e.subsegment_duration);
                o.u32((e.starts_with_sap as u32) << 31 | (e.sap_type as u32) << 28);
            }
        });
        out
    }

    /// Single-file layout: init, `sidx`, then every segment. Returns the file
    /// and the inclusive byte range of the `sidx` box.
    pub fn ondemand_file(&self) -> (Vec<u8>, (u64, u64)) {
        let sidx = self.sidx_box();
        let start = self.init.len() as u64;
        let mut out = Vec::with_capacity(self.init.len() + sidx.len() + self.segments.iter().map(Vec::len).sum::<usize>());
        out.extend_from_slice(&self.init);
        out.extend_from_slice(&sidx);
        for s in &self.segments {
            out.extend_from_slice(s);
        }
        (out, (start, start + sidx.len() as u64 - 1))
    }

    pub fn media_bytes(&self) -> u64 {
        self.segments.iter().map(|s| s.len() as u64).sum()
    }
}

/// Split a stream into fragments starting at the given access unit indices.
pub fn fragment(es: &ElementaryStream, segment_starts: &[usize], kind: SampleEntryKind) -> Result<FragmentedOutput, Mp4Error> {
    let prepared = prepare_samples(es, kind, 3)?;
    if segment_starts.first() != Some(&0) {
        return Err(Mp4Error::Malformed("first segment must start at access unit 0".into()));
    }
    for w in segment_starts.windows(2) {
        if w[1] <= w[0] || w[1] >= es.aus.len() {
            return Err(Mp4Error::Malformed(format!("segment start {} out of order", w[1])));
        }
    }
    for &s in segment_starts {
        if !es.aus[s].is_irap {
            return Err(Mp4Error::BoundaryNotIrap { index: s });
        }
    }

    let sample_entry = prepared.sample_entry();
    let mut init = Vec::new();
    write_ftyp(&mut init, b"ftyp", b"isom", 0, &[b"isom", b"iso6", b"dash"]);
    let track = TrackModel { track_id: 1, timescale: prepared.timescale, samples: Vec::new(), sample_entry: sample_entry.clone() };
    init.extend_from_slice(&build_moov(&[track], true, false));

    let mut segments = Vec::with_capacity(segment_starts.len());
    let mut sidx = Vec::with_capacity(segment_starts.len());
    let mut decode_times = Vec::with_capacity(segment_starts.len());
    let mut decode_time = 0u64;
    for (k, &start) in segment_starts.iter().enumerate() {
        let end = segment_starts.get(k + 1).copied().unwrap_or(es.aus.len());
        let infos = &prepared.infos[start..end];
        let data = &prepared.data[start..end];
        let seg = media_segment(k as u32 + 1, decode_time, infos, data)?;
        let duration: u64 = infos.iter().map(|s| s.duration as u64).sum();
        let earliest = infos
            .iter()
            .scan(decode_time, |t, s| {
                let pts = t.saturating_add_signed(s.composition_offset as i64);
                *t += s.duration as u64;
                Some(pts)
            })
            .min()
            .unwrap_or(decode_time);
        sidx.push(SidxEntry {
            referenced_size: u32::try_from(seg.len()).map_err(|_| Mp4Error::Malformed("segment larger than 2 GiB".into()))?,
            subsegment_duration: u32::try_from(duration).map_err(|_| Mp4Error::Malformed("segment duration overflow".into()))?,
            earliest_presentation_time: earliest,
            starts_with_sap: true,
            sap_type: SapType::of(&es.aus[start]),
        });
        decode_times.push(decode_time);
        decode_time += duration;
        segments.push(seg);
    }
    Ok(FragmentedOutput { init, segments, sidx, timescale: prepared.timescale, sample_entry, decode_times })
}

fn write_moof(out: &mut Vec<u8>, seq: u32, decode_time: u64, infos: &[SampleInfo], data_offset: i32) {
    let with_cto = infos.iter().any(|s| s.composition_offset != 0);
    put_box(out, b"moof", |o| {
        put_full_box(o, b"mfhd", 0, 0, |o| o.u32(seq));
        put_box(o, b"traf", |o| {
            put_full_box(o, b"tfhd", 0, 0x02_0000, |o| o.u32(1));
            put_full_box(o, b"tfdt", 1, 0, |o| o.u64(decode_time));
            let flags = 0x1 | 0x100 | 0x200 | 0x400 | if with_cto { 0x800 } else { 0 };
            put_full_box(o, b"trun", with_cto as u8, flags, |o| {
                o.u32(infos.len() as u32);
                o.i32(data_offset);
                for s in infos {
                    o.u32(s.duration);
                    o.u32(s.size);
                    o.u32(if s.sync { SYNC_FLAGS } else { NON_SYNC_FLAGS });
                    if with_cto {
                        o.i32(s.composition_offset);
                    }
                }
            });
        });
    });
}

fn media_segment(seq: u32, decode_time: u64, infos: &[SampleInfo], data: &[Vec<u8>]) -> Result<Vec<u8>, Mp4Error> {
    let mut out = Vec::new();
    write_ftyp(&mut out, b"styp", b"msdh", 0, &[b"msdh", b"msix"]);
    let mut probe = Vec::new();
    write_moof(&mut probe, seq, decode_time, infos, 0);
    let data_offset = i32::try_from(probe.len() + 8).map_err(|_| Mp4Error::Malformed("moof too large".into()))?;
    write_moof(&mut out, seq, decode_time, infos, data_offset);
    let payload: usize = data.iter().map(Vec::len).sum();
    let mdat_size = u32::try_from(payload + 8).map_err(|_| Mp4Error::Malformed("fragment larger than 4 GiB".into()))?;
    out.u32(mdat_size);
    out.extend_from_slice(b"mdat");
    for d in data {
        out.extend_from_slice(d);
    }
    Ok(out)
}

/// Rewrite the sequence number and base media decode time of a media
/// segment in place. Used to replay segments with a continuous timeline.
pub fn patch_fragment(segment: &mut [u8], sequence_number: u32, decode_time: u64) -> Result<(), Mp4Error> {
    let mut patched = (false, false);
    let mut pos = 0usize;
    while pos + 8 <= segment.len() {
        let size = u32::from_be_bytes(segment[pos..pos + 4].try_into().expect("4")) as usize;
        if size < 8 || pos + size > segment.len() {
            return Err(Mp4Error::TruncatedBox { offset: pos as u64 });
        }
        if &segment[pos + 4..pos + 8] == b"moof" {
            patch_moof(&mut segment[pos + 8..pos + size], sequence_number, decode_time, &mut patched)?;
        }
        pos += size;
    }
    if patched != (true, true) {
        return Err(Mp4Error::Malformed("segment has no mfhd/tfdt".into()));
    }
    Ok(())
}

fn patch_moof(body: &mut [u8], seq: u32, decode_time: u64, patched: &mut (bool, bool)) -> Result<(), Mp4Error> {
    let mut pos = 0usize;
    while pos + 8 <= body.len() {
        let size = u32::from_be_bytes(body[pos..pos + 4].try_into().expect("4")) as usize;
        if size < 8 || pos + size > body.len() {
            return Err(Mp4Error::TruncatedBox { offset: pos as u64 });
        }
        let b = &mut body[pos..pos + size];
        match &b[4..8] {
            b"mfhd" if size >= 16 => {
                b[12..16].copy_from_slice(&seq.to_be_bytes());
                patched.0 = true;
            }
            b"traf" => patch_moof(&mut b[8..], seq, decode_time, patched)?,
            b"tfdt" if size >= 20 && b[8] == 1 => {
                b[12..20].copy_from_slice(&decode_time.to_be_bytes());
                patched.1 = true;
            }
            b"tfdt" => return Err(Mp4Error::Malformed("tfdt version 0 cannot be patched".into())),
            _ => {}
        }
        pos += size;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isobmff::{package_progressive, read_box_tree, read_tracks};
    use crate::nalio::FrameRate;
    use crate::synth::{generate_annex_b, SynthConfig};

    fn es() -> ElementaryStream {
        let cfg = SynthConfig { frames: 20, idr_period: 10, idr_bytes: 2000, trail_bytes: 300, ..Default::default() };
        ElementaryStream::from_annex_b(&generate_annex_b(&cfg), FrameRate::new(25, 1)).unwrap()
    }

    fn be32(b: &[u8]) -> u32 {
        u32::from_be_bytes(b[..4].try_into().unwrap())
    }

    #[test]
    fn two_segments_sequence_and_tfdt() {
        let out = fragment(&es(), &[0, 10], SampleEntryKind::Vvc1).unwrap();
        assert_eq!(out.segments.len(), 2);
        for (k, seg) in out.segments.iter().enumerate() {
            let tree = read_box_tree(seg).unwrap();
            assert_eq!(tree[0].fourcc, b"styp");
            let moof = &tree[1];
            let mfhd = moof.child(b"mfhd").unwrap().payload().unwrap();
            assert_eq!(be32(&mfhd[4..]), k as u32 + 1);
            let tfdt = moof.path(&[b"traf", b"tfdt"]).unwrap().payload().unwrap();
            assert_eq!(u64::from_be_bytes(tfdt[4..12].try_into().unwrap()), k as u64 * 10_000);
            assert_eq!(out.sidx[k].referenced_size as usize, seg.len());
            assert_eq!(out.sidx[k].sap_type, SapType::Type1);
        }
        assert_eq!(out.decode_times, [0, 10_000]);
    }

    #[test]
    fn concatenation_matches_progressive_samples() {
        let stream = es();
        let out = fragment(&stream, &[0, 10], SampleEntryKind::Vvc2).unwrap();
        let (file, (a, b)) = out.ondemand_file();
        assert_eq!(&file[a as usize + 4..a as usize + 8], b"sidx");
        assert_eq!(be32(&file[a as usize..]) as u64, b - a + 1);
        let frag = read_tracks(&file).unwrap();
        let prog = read_tracks(&package_progressive(&stream, SampleEntryKind::Vvc2, None).unwrap()).unwrap();
        let prog_file = package_progressive(&stream, SampleEntryKind::Vvc2, None).unwrap();
        assert_eq!(frag[0].samples.len(), 20);
        for (f, p) in frag[0].samples.iter().zip(&prog[0].samples) {
            assert_eq!((f.size, f.duration, f.sync), (p.size, p.duration, p.sync));
            assert_eq!(
                &file[f.offset as usize..][..f.size as usize],
                &prog_file[p.offset as usize..][..p.size as usize]
            );
        }
        assert_eq!(frag[0].sample_entry, prog[0].sample_entry);
    }

    #[test]
    fn boundary_must_be_irap() {
        assert_eq!(fragment(&es(), &[0, 5], SampleEntryKind::Vvc1).unwrap_err(), Mp4Error::BoundaryNotIrap { index: 5 });
    }

    #[test]
    fn patching() {
        let out = fragment(&es(), &[0, 10], SampleEntryKind::Vvc1).unwrap();
        let mut seg = out.segments[0].clone();
        patch_fragment(&mut seg, 7, 123_456).unwrap();
        let tree = read_box_tree(&seg).unwrap();
        let tfdt = tree[1].path(&[b"traf", b"tfdt"]).unwrap().payload().unwrap();
        assert_eq!(u64::from_be_bytes(tfdt[4..12].try_into().unwrap()), 123_456);
        assert_eq!(be32(&tree[1].child(b"mfhd").unwrap().payload().unwrap()[4..]), 7);
        assert_eq!(seg.len(), out.segments[0].len());
    }
}
