//! Deterministic synthetic VVC elementary streams.
//!
//! The generated streams carry syntactically valid NAL headers, parameter sets
//! whose leading fields decode with [`crate::nalio::parse_sps_summary`], picture
//! headers and slice NALs with random (but properly emulation-protected)
//! payloads. They are not decodable pictures; they exercise every layer of the
//! systems toolchain without needing an encoder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nalio::bits::BitWriter;
use crate::nalio::nal::{self, NalHeader, NalUnit};
use crate::nalio::{insert_emulation_prevention, write_annex_b, FrameRate};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub width: u32,
    pub height: u32,
    pub frame_rate: FrameRate,
    pub frames: usize,
    /// Distance between IDR pictures, in frames.
    pub idr_period: usize,
    /// Mean slice payload sizes in bytes.
    pub idr_bytes: usize,
    pub trail_bytes: usize,
    pub bit_depth: u8,
    pub level_idc: u8,
    pub with_aud: bool,
    pub with_vps: bool,
    /// Repeat VPS/SPS/PPS in front of every IDR, not only the first.
    pub repeat_parameter_sets: bool,
    /// Attach a suffix SEI to every IDR picture.
    pub suffix_sei: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 1920,
            height: 1080,
            frame_rate: FrameRate::new(25, 1),
            frames: 100,
            idr_period: 50,
            idr_bytes: 24_000,
            trail_bytes: 4_000,
            bit_depth: 10,
            level_idc: 67,
            with_aud: false,
            with_vps: false,
            repeat_parameter_sets: true,
            suffix_sei: false,
            seed: 1,
        }
    }
}

fn unit(t: u8, rbsp: &[u8]) -> NalUnit {
    NalUnit::new(NalHeader::new(t, 0, 0), insert_emulation_prevention(rbsp))
}

/// SPS payload for the given picture format (Main 10, one sublayer).
pub fn sps_rbsp(cfg: &SynthConfig) -> Vec<u8> {
    let mut w = BitWriter::new();
    w.put_bits(0, 4); // sps_seq_parameter_set_id
    w.put_bits(u64::from(cfg.with_vps), 4); // sps_video_parameter_set_id
    w.put_bits(0, 3); // sps_max_sublayers_minus1
    w.put_bits(1, 2); // 4:2:0
    w.put_bits(2, 2); // CTU 128
    w.put_bit(true); // ptl present
    w.put_bits(1, 7); // Main 10
    w.put_bit(false); // Main tier
    w.put_bits(cfg.level_idc as u64, 8);
    w.put_bit(true); // frame only
    w.put_bit(false); // multilayer
    w.put_bit(false); // gci_present_flag
    w.align_zero();
    w.put_bits(0, 8); // ptl_num_sub_profiles
    w.put_bit(false); // gdr
    w.put_bit(false); // ref pic resampling
    let coded_w = cfg.width.div_ceil(8) * 8;
    let coded_h = cfg.height.div_ceil(8) * 8;
    w.put_ue(coded_w);
    w.put_ue(coded_h);
    let crop = coded_w != cfg.width || coded_h != cfg.height;
    w.put_bit(crop);
    if crop {
        w.put_ue(0);
        w.put_ue((coded_w - cfg.width) / 2);
        w.put_ue(0);
        w.put_ue((coded_h - cfg.height) / 2);
    }
    w.put_bit(false); // subpic info
    w.put_ue(u32::from(cfg.bit_depth - 8));
    // a few of the following flags so the payload looks like a real SPS tail
    w.put_bits(0b1011_0110_0101, 12);
    w.finish_rbsp()
}

fn pps_rbsp() -> Vec<u8> {
    let mut w = BitWriter::new();
    w.put_bits(0, 6); // pps_pic_parameter_set_id
    w.put_bits(0, 4); // pps_seq_parameter_set_id
    w.put_bits(0b0110_1001_1100_0011, 16);
    w.finish_rbsp()
}

fn vps_rbsp() -> Vec<u8> {
    let mut w = BitWriter::new();
    w.put_bits(1, 4);
    w.put_bits(0, 6);
    w.put_bits(0b1010_0101, 8);
    w.finish_rbsp()
}

fn random_rbsp(rng: &mut ChaCha8Rng, mean: usize) -> Vec<u8> {
    let jitter = mean / 4;
    let len = if jitter > 0 { rng.gen_range(mean - jitter..=mean + jitter) } else { mean }.max(2);
    let mut v: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
    // sh_picture_header_in_slice_header_flag = 0
    v[0] &= 0x7f;
    // sprinkle zero runs so emulation prevention is exercised
    for _ in 0..len / 500 {
        let at = rng.gen_range(1..len.saturating_sub(3).max(2));
        let end = (at + 3).min(len - 1);
        v[at..end].fill(0);
    }
    *v.last_mut().expect("len >= 2") = 0x80;
    v
}

/// Generate the NAL sequence of a synthetic stream.
pub fn generate_nals(cfg: &SynthConfig) -> Vec<NalUnit> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sps = sps_rbsp(cfg);
    let pps = pps_rbsp();
    let vps = vps_rbsp();
    let mut out = Vec::new();
    for i in 0..cfg.frames {
        let idr = cfg.idr_period == 0 && i == 0 || cfg.idr_period > 0 && i % cfg.idr_period == 0;
        if cfg.with_aud {
            // aud_irap_or_gdr_flag, aud_pic_type
            out.push(unit(nal::AUD_NUT, &[if idr { 0x90 } else { 0x50 }]));
        }
        if idr && (i == 0 || cfg.repeat_parameter_sets) {
            if cfg.with_vps {
                out.push(unit(nal::VPS_NUT, &vps));
            }
            out.push(unit(nal::SPS_NUT, &sps));
            out.push(unit(nal::PPS_NUT, &pps));
        }
        out.push(unit(nal::PH_NUT, &[if idr { 0xC4 } else { 0x44 }, (i as u8) | 1, 0x80]));
        if idr {
            out.push(unit(nal::IDR_N_LP, &random_rbsp(&mut rng, cfg.idr_bytes)));
            if cfg.suffix_sei {
                out.push(unit(nal::SUFFIX_SEI_NUT, &[0x84, 0x02, 0x12, 0x34, 0x80]));
            }
        } else {
            out.push(unit(nal::TRAIL_NUT, &random_rbsp(&mut rng, cfg.trail_bytes)));
        }
    }
    out
}

/// Generate a synthetic stream as Annex B bytes with 4-byte start codes.
pub fn generate_annex_b(cfg: &SynthConfig) -> Vec<u8> {
    write_annex_b(&generate_nals(cfg))
}
