#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vvcsys::nalio::{insert_emulation_prevention, ElementaryStream, FrameRate};
use vvcsys::synth::{generate_annex_b, SynthConfig};

pub fn synth(frames: usize, idr_period: usize, seed: u64) -> (Vec<u8>, ElementaryStream) {
    let cfg = SynthConfig { frames, idr_period, idr_bytes: 6_000, trail_bytes: 1_200, seed, ..Default::default() };
    let bytes = generate_annex_b(&cfg);
    let es = ElementaryStream::from_annex_b(&bytes, cfg.frame_rate).unwrap();
    (bytes, es)
}

pub fn synth_with(cfg: &SynthConfig) -> (Vec<u8>, ElementaryStream) {
    let bytes = generate_annex_b(cfg);
    let es = ElementaryStream::from_annex_b(&bytes, FrameRate::new(cfg.frame_rate.num, cfg.frame_rate.den)).unwrap();
    (bytes, es)
}

/// Bit-serial CRC-32/MPEG-2: poly 0x04C11DB7, init all ones, no reflection, no final xor.
pub fn crc32_bitwise(data: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &byte in data {
        for i in (0..8).rev() {
            let bit = (byte >> i) & 1 == 1;
            let top = crc & 0x8000_0000 != 0;
            crc <<= 1;
            if top != bit {
                crc ^= 0x04C1_1DB7;
            }
        }
    }
    crc
}

/// A random Annex B stream with mixed start code lengths and zero padding.
pub fn random_annex_b(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut out = Vec::new();
    for i in 0..rng.gen_range(1..40) {
        let extra_zeros = if i > 0 && rng.gen_ratio(1, 8) { rng.gen_range(1..4) } else { 0 };
        out.extend(std::iter::repeat(0).take(extra_zeros));
        if rng.gen_bool(0.5) {
            out.push(0);
        }
        out.extend_from_slice(&[0, 0, 1]);
        let nal_type: u8 = rng.gen_range(0..32);
        let tid_plus1: u8 = rng.gen_range(1..8);
        out.push(rng.gen_range(0..64));
        out.push(nal_type << 3 | tid_plus1);
        let len = rng.gen_range(0..600);
        let mut rbsp: Vec<u8> = (0..len).map(|_| if rng.gen_ratio(1, 4) { 0 } else { rng.gen() }).collect();
        rbsp.push(0x80);
        out.extend_from_slice(&insert_emulation_prevention(&rbsp));
    }
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Structural TS checks: packet size and sync, continuity per PID, PSI CRCs
/// (verified with the bit-serial oracle). Returns the number of null packets.
pub fn check_ts(ts: &[u8]) -> Result<usize, String> {
    if ts.len() % 188 != 0 {
        return Err(format!("length {} is not a multiple of 188", ts.len()));
    }
    let mut cc: HashMap<u16, u8> = HashMap::new();
    let mut nulls = 0;
    for (i, p) in ts.chunks(188).enumerate() {
        if p[0] != 0x47 {
            return Err(format!("packet {i}: sync byte {:#04x}", p[0]));
        }
        let pid = u16::from_be_bytes([p[1] & 0x1f, p[2]]);
        if pid == 0x1fff {
            nulls += 1;
            continue;
        }
        let has_payload = p[3] & 0x10 != 0;
        let c = p[3] & 0x0f;
        if has_payload {
            if let Some(prev) = cc.insert(pid, c) {
                if c != (prev + 1) & 0x0f {
                    return Err(format!("packet {i}: PID {pid:#x} continuity {prev} -> {c}"));
                }
            }
        }
        let pusi = p[1] & 0x40 != 0;
        if (pid == 0 || pid == 0x100) && pusi {
            let start = if p[3] & 0x20 != 0 { 5 + p[4] as usize } else { 4 };
            let pointer = p[start] as usize;
            let sec = &p[start + 1 + pointer..];
            let len = 3 + (u16::from_be_bytes([sec[1], sec[2]]) & 0x0fff) as usize;
            if crc32_bitwise(&sec[..len]) != 0 {
                return Err(format!("packet {i}: PSI CRC does not verify"));
            }
        }
    }
    Ok(nulls)
}

/// `(decode time, sample count, first sample flags)` of a `styp/moof/mdat` segment.
pub fn segment_info(seg: &[u8]) -> (u64, u32, u32) {
    use vvcsys::isobmff::{read_box_tree, BoxContent};
    let tree = read_box_tree(seg).unwrap();
    let moof = tree.iter().find(|b| b.fourcc == b"moof").expect("moof");
    let traf = moof.child(b"traf").expect("traf");
    let leaf = |b: &[u8; 4]| match &traf.child(b).expect("box").content {
        BoxContent::Leaf(d) => d.clone(),
        BoxContent::Children(_) => panic!("leaf expected"),
    };
    let tfdt = leaf(b"tfdt");
    let dt = if tfdt[0] == 1 {
        u64::from_be_bytes(tfdt[4..12].try_into().unwrap())
    } else {
        u32::from_be_bytes(tfdt[4..8].try_into().unwrap()) as u64
    };
    let trun = leaf(b"trun");
    let flags = u32::from_be_bytes([0, trun[1], trun[2], trun[3]]);
    let count = u32::from_be_bytes(trun[4..8].try_into().unwrap());
    let mut pos = 8;
    if flags & 0x1 != 0 {
        pos += 4;
    }
    let first_flags = if flags & 0x4 != 0 {
        u32::from_be_bytes(trun[pos..pos + 4].try_into().unwrap())
    } else {
        // per-sample record: duration, size, flags
        let mut p = pos;
        if flags & 0x100 != 0 {
            p += 4;
        }
        if flags & 0x200 != 0 {
            p += 4;
        }
        u32::from_be_bytes(trun[p..p + 4].try_into().unwrap())
    };
    (dt, count, first_flags)
}

/// True when sample flags mark a sync sample (sample_is_non_sync_sample clear).
pub fn is_sync(flags: u32) -> bool {
    flags & 0x0001_0000 == 0
}
