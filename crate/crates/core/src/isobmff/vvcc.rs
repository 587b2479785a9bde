//! VVC decoder configuration record (the payload of the `vvcC` box).
//!
//! ```text
//! reserved '11111'(5) | LengthSizeMinusOne(2) | ptl_present_flag(1)
//! if ptl_present_flag:
//!   ols_idx(9) num_sublayers(3) constant_frame_rate(2) chroma_format_idc(2)
//!   bit_depth_minus8(3) reserved '11111'(5)
//!   VvcPTLRecord(num_sublayers)
//!   max_picture_width(16) max_picture_height(16) avg_frame_rate(16)
//! num_of_arrays(8)
//!   array_completeness(1) reserved(2) NAL_unit_type(5)
//!   [num_nalus(16) unless DCI/OPI] { nal_unit_length(16) nal_unit }
//! ```

use crate::nalio::bits::{BitReader, BitWriter};
use crate::nalio::nal::{DCI_NUT, OPI_NUT, PPS_NUT, SPS_NUT, VPS_NUT};
use crate::nalio::{NalError, ProfileTierLevel, SpsSummary};

use super::Mp4Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VvcPtlInfo {
    pub ols_idx: u16,
    pub num_sublayers: u8,
    pub constant_frame_rate: u8,
    pub chroma_format_idc: u8,
    pub bit_depth_minus8: u8,
    pub native_ptl: ProfileTierLevel,
    pub max_picture_width: u16,
    pub max_picture_height: u16,
    /// Frames per 256 seconds; 0 means unspecified.
    pub avg_frame_rate: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NalArray {
    pub completeness: bool,
    pub nal_unit_type: u8,
    /// Complete NAL units, header included.
    pub nalus: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VvcConfigRecord {
    pub length_size_minus_one: u8,
    pub ptl: Option<VvcPtlInfo>,
    pub arrays: Vec<NalArray>,
}

impl VvcConfigRecord {
    pub fn ptl_present(&self) -> bool {
        self.ptl.is_some()
    }

    pub fn length_size(&self) -> usize {
        usize::from(self.length_size_minus_one) + 1
    }

    /// Build a record from collected parameter sets, ordered VPS, SPS, PPS.
    pub fn from_parameter_sets(
        sps: Option<&SpsSummary>,
        vps: &[Vec<u8>],
        sps_nals: &[Vec<u8>],
        pps: &[Vec<u8>],
        complete: bool,
        avg_frame_rate: u16,
    ) -> VvcConfigRecord {
        let ptl = sps.and_then(|s| {
            let native_ptl = s.ptl.clone()?;
            Some(VvcPtlInfo {
                ols_idx: 0,
                num_sublayers: s.max_sublayers_minus1 + 1,
                constant_frame_rate: 1,
                chroma_format_idc: s.chroma_format_idc,
                bit_depth_minus8: s.bit_depth - 8,
                native_ptl,
                max_picture_width: s.coded_width.min(u16::MAX as u32) as u16,
                max_picture_height: s.coded_height.min(u16::MAX as u32) as u16,
                avg_frame_rate,
            })
        });
        let arrays = [(VPS_NUT, vps), (SPS_NUT, sps_nals), (PPS_NUT, pps)]
            .into_iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(t, v)| NalArray { completeness: complete, nal_unit_type: t, nalus: v.to_vec() })
            .collect();
        VvcConfigRecord { length_size_minus_one: 3, ptl, arrays }
    }

    /// Parameter set NALs in array order.
    pub fn parameter_sets(&self) -> impl Iterator<Item = &[u8]> {
        self.arrays.iter().flat_map(|a| a.nalus.iter().map(Vec::as_slice))
    }

    pub fn serialize(&self) -> Result<Vec<u8>, Mp4Error> {
        let mut w = BitWriter::new();
        w.put_bits(0b11111, 5);
        w.put_bits(self.length_size_minus_one as u64, 2);
        w.put_bit(self.ptl.is_some());
        if let Some(p) = &self.ptl {
            w.put_bits(p.ols_idx as u64, 9);
            w.put_bits(p.num_sublayers as u64, 3);
            w.put_bits(p.constant_frame_rate as u64, 2);
            w.put_bits(p.chroma_format_idc as u64, 2);
            w.put_bits(p.bit_depth_minus8 as u64, 3);
            w.put_bits(0b11111, 5);
            write_ptl_record(&mut w, &p.native_ptl, p.num_sublayers)?;
            w.put_bits(p.max_picture_width as u64, 16);
            w.put_bits(p.max_picture_height as u64, 16);
            w.put_bits(p.avg_frame_rate as u64, 16);
        }
        let num_arrays = u8::try_from(self.arrays.len())
            .map_err(|_| Mp4Error::Malformed("more than 255 vvcC arrays".into()))?;
        w.put_bits(num_arrays as u64, 8);
        for a in &self.arrays {
            w.put_bit(a.completeness);
            w.put_bits(0, 2);
            w.put_bits(a.nal_unit_type as u64, 5);
            if a.nal_unit_type != DCI_NUT && a.nal_unit_type != OPI_NUT {
                let n = u16::try_from(a.nalus.len()).map_err(|_| Mp4Error::Malformed("too many NALs".into()))?;
                w.put_bits(n as u64, 16);
            } else if a.nalus.len() != 1 {
                return Err(Mp4Error::Malformed("DCI/OPI arrays carry exactly one NAL".into()));
            }
            for nal in &a.nalus {
                let len = u16::try_from(nal.len())
                    .map_err(|_| Mp4Error::Malformed("parameter set longer than 65535 bytes".into()))?;
                w.put_bits(len as u64, 16);
                for &b in nal {
                    w.put_bits(b as u64, 8);
                }
            }
        }
        Ok(w.into_bytes())
    }

    pub fn parse(data: &[u8]) -> Result<VvcConfigRecord, Mp4Error> {
        parse_record(data).map_err(|e| Mp4Error::Malformed(format!("vvcC: {e}")))
    }
}

fn write_ptl_record(w: &mut BitWriter, ptl: &ProfileTierLevel, num_sublayers: u8) -> Result<(), Mp4Error> {
    let n = ptl.constraint_info.len();
    if n == 0 || n > 63 {
        return Err(Mp4Error::Malformed(format!("constraint info of {n} bytes")));
    }
    if ptl.sublayer_level_idc.len() + 1 != num_sublayers as usize {
        return Err(Mp4Error::Malformed("sublayer level count does not match num_sublayers".into()));
    }
    w.put_bits(0, 2);
    w.put_bits(n as u64, 6);
    w.put_bits(ptl.profile_idc as u64, 7);
    w.put_bit(ptl.tier_flag);
    w.put_bits(ptl.level_idc as u64, 8);
    for &b in &ptl.constraint_info {
        w.put_bits(b as u64, 8);
    }
    let subs = usize::from(num_sublayers.saturating_sub(1));
    for i in (0..subs).rev() {
        w.put_bit(ptl.sublayer_level_idc[i].is_some());
    }
    if num_sublayers > 1 {
        for _ in num_sublayers..=8 {
            w.put_bit(false);
        }
    }
    for i in (0..subs).rev() {
        if let Some(l) = ptl.sublayer_level_idc[i] {
            w.put_bits(l as u64, 8);
        }
    }
    let count = u8::try_from(ptl.sub_profile_idc.len()).map_err(|_| Mp4Error::Malformed("too many sub profiles".into()))?;
    w.put_bits(count as u64, 8);
    for &p in &ptl.sub_profile_idc {
        w.put_bits(p as u64, 32);
    }
    Ok(())
}

fn read_ptl_record(r: &mut BitReader<'_>, num_sublayers: u8) -> Result<ProfileTierLevel, NalError> {
    r.skip_bits(2)?;
    let n = r.read_bits(6)? as usize;
    let profile_idc = r.read_bits(7)? as u8;
    let tier_flag = r.read_flag()?;
    let level_idc = r.read_bits(8)? as u8;
    let constraint_info = (0..n).map(|_| r.read_bits(8).map(|b| b as u8)).collect::<Result<_, _>>()?;
    let subs = usize::from(num_sublayers.saturating_sub(1));
    let mut present = vec![false; subs];
    for i in (0..subs).rev() {
        present[i] = r.read_flag()?;
    }
    if num_sublayers > 1 {
        r.skip_bits(9 - num_sublayers as usize)?;
    }
    let mut sublayer_level_idc = vec![None; subs];
    for i in (0..subs).rev() {
        if present[i] {
            sublayer_level_idc[i] = Some(r.read_bits(8)? as u8);
        }
    }
    let count = r.read_bits(8)?;
    let sub_profile_idc = (0..count).map(|_| r.read_bits(32)).collect::<Result<_, _>>()?;
    Ok(ProfileTierLevel { profile_idc, tier_flag, level_idc, constraint_info, sublayer_level_idc, sub_profile_idc })
}

fn parse_record(data: &[u8]) -> Result<VvcConfigRecord, NalError> {
    let mut r = BitReader::new(data);
    r.skip_bits(5)?;
    let length_size_minus_one = r.read_bits(2)? as u8;
    let ptl = if r.read_flag()? {
        let ols_idx = r.read_bits(9)? as u16;
        let num_sublayers = r.read_bits(3)? as u8;
        let constant_frame_rate = r.read_bits(2)? as u8;
        let chroma_format_idc = r.read_bits(2)? as u8;
        let bit_depth_minus8 = r.read_bits(3)? as u8;
        r.skip_bits(5)?;
        let native_ptl = read_ptl_record(&mut r, num_sublayers)?;
        Some(VvcPtlInfo {
            ols_idx,
            num_sublayers,
            constant_frame_rate,
            chroma_format_idc,
            bit_depth_minus8,
            native_ptl,
            max_picture_width: r.read_bits(16)? as u16,
            max_picture_height: r.read_bits(16)? as u16,
            avg_frame_rate: r.read_bits(16)? as u16,
        })
    } else {
        None
    };
    let num_arrays = r.read_bits(8)?;
    let mut arrays = Vec::with_capacity(num_arrays as usize);
    for _ in 0..num_arrays {
        let completeness = r.read_flag()?;
        r.skip_bits(2)?;
        let nal_unit_type = r.read_bits(5)? as u8;
        let count = if nal_unit_type == DCI_NUT || nal_unit_type == OPI_NUT { 1 } else { r.read_bits(16)? };
        let mut nalus = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let len = r.read_bits(16)? as usize;
            let nal = (0..len).map(|_| r.read_bits(8).map(|b| b as u8)).collect::<Result<Vec<u8>, _>>()?;
            nalus.push(nal);
        }
        arrays.push(NalArray { completeness, nal_unit_type, nalus });
    }
    Ok(VvcConfigRecord { length_size_minus_one, ptl, arrays })
}
