//! Partial sequence parameter set decoding.
//!
//! Only the leading part of the SPS is read: ids, chroma format, the
//! profile/tier/level structure, picture size, conformance window and bit
//! depth. Anything past `sps_bitdepth_minus8` is ignored.

use serde::Serialize;

use super::bits::BitReader;
use super::nal::{NalUnit, PPS_NUT, SPS_NUT, VPS_NUT};
use super::{remove_emulation_prevention_lenient, NalError};

/// Number of fixed-width bits in `general_constraints_info()` between
/// `gci_present_flag` and `gci_num_additional_bits`.
const GCI_FIXED_BITS: usize = 71;

/// `profile_tier_level()` as carried in the SPS and mirrored by the vvcC PTL record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProfileTierLevel {
    pub profile_idc: u8,
    pub tier_flag: bool,
    pub level_idc: u8,
    /// `ptl_frame_only_constraint_flag`, `ptl_multilayer_enabled_flag` and
    /// `general_constraints_info()` up to its byte alignment. The two flags are
    /// the top bits of the first byte.
    pub constraint_info: Vec<u8>,
    /// Indexed by sublayer; `None` when `ptl_sublayer_level_present_flag` is 0.
    pub sublayer_level_idc: Vec<Option<u8>>,
    pub sub_profile_idc: Vec<u32>,
}

impl ProfileTierLevel {
    pub fn frame_only_constraint(&self) -> bool {
        self.constraint_info.first().is_some_and(|b| b & 0x80 != 0)
    }

    pub fn multilayer_enabled(&self) -> bool {
        self.constraint_info.first().is_some_and(|b| b & 0x40 != 0)
    }

    fn read(r: &mut BitReader<'_>, max_sublayers_minus1: u8) -> Result<ProfileTierLevel, NalError> {
        let profile_idc = r.read_bits(7)? as u8;
        let tier_flag = r.read_flag()?;
        let level_idc = r.read_bits(8)? as u8;

        debug_assert!(r.is_byte_aligned());
        let start = r.position();
        r.skip_bits(2)?; // frame_only, multilayer
        if r.read_flag()? {
            r.skip_bits(GCI_FIXED_BITS)?;
            let additional = r.read_bits(8)? as usize;
            r.skip_bits(additional)?;
        }
        r.byte_align()?;
        let constraint_info = bits_slice(r, start);

        let n = usize::from(max_sublayers_minus1);
        let mut present = vec![false; n];
        for i in (0..n).rev() {
            present[i] = r.read_flag()?;
        }
        r.byte_align()?;
        let mut sublayer_level_idc = vec![None; n];
        for i in (0..n).rev() {
            if present[i] {
                sublayer_level_idc[i] = Some(r.read_bits(8)? as u8);
            }
        }
        let num_sub_profiles = r.read_bits(8)?;
        let sub_profile_idc = (0..num_sub_profiles).map(|_| r.read_bits(32)).collect::<Result<_, _>>()?;

        Ok(ProfileTierLevel {
            profile_idc,
            tier_flag,
            level_idc,
            constraint_info,
            sublayer_level_idc,
            sub_profile_idc,
        })
    }

    /// Level as a human readable number, e.g. 67 -> "4.1".
    pub fn level_name(&self) -> String {
        format!("{}.{}", self.level_idc / 16, (self.level_idc % 16) / 3)
    }
}

fn bits_slice(r: &BitReader<'_>, start_bit: usize) -> Vec<u8> {
    r.bytes()[start_bit / 8..r.position() / 8].to_vec()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConformanceWindow {
    pub left: u32,
    pub right: u32,
    pub top: u32,
    pub bottom: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpsSummary {
    pub sps_id: u8,
    pub vps_id: u8,
    pub max_sublayers_minus1: u8,
    pub chroma_format_idc: u8,
    pub log2_ctu_size: u8,
    pub ptl: Option<ProfileTierLevel>,
    pub gdr_enabled: bool,
    pub coded_width: u32,
    pub coded_height: u32,
    pub conformance_window: Option<ConformanceWindow>,
    /// Output width after conformance cropping.
    pub width_luma: u32,
    pub height_luma: u32,
    pub bit_depth: u8,
}

impl SpsSummary {
    pub fn profile_idc(&self) -> u8 {
        self.ptl.as_ref().map_or(0, |p| p.profile_idc)
    }

    pub fn level_idc(&self) -> u8 {
        self.ptl.as_ref().map_or(0, |p| p.level_idc)
    }

    pub fn tier(&self) -> bool {
        self.ptl.as_ref().is_some_and(|p| p.tier_flag)
    }
}

/// Decode the leading SPS fields from a de-emulated payload (header bytes excluded).
pub fn parse_sps_summary(rbsp: &[u8]) -> Result<SpsSummary, NalError> {
    let mut r = BitReader::new(rbsp);
    let sps_id = r.read_bits(4)? as u8;
    let vps_id = r.read_bits(4)? as u8;
    let max_sublayers_minus1 = r.read_bits(3)? as u8;
    if max_sublayers_minus1 > 6 {
        return Err(NalError::UnsupportedSyntax(format!(
            "sps_max_sublayers_minus1 = {max_sublayers_minus1}"
        )));
    }
    let chroma_format_idc = r.read_bits(2)? as u8;
    let log2_ctu_size = r.read_bits(2)? as u8 + 5;
    let ptl_present = r.read_flag()?;
    let ptl = if ptl_present { Some(ProfileTierLevel::read(&mut r, max_sublayers_minus1)?) } else { None };

    let gdr_enabled = r.read_flag()?;
    if r.read_flag()? {
        // sps_res_change_in_clvs_allowed_flag
        r.skip_bits(1)?;
    }
    let coded_width = r.read_ue()?;
    let coded_height = r.read_ue()?;
    if coded_width == 0 || coded_height == 0 {
        return Err(NalError::UnsupportedSyntax("zero picture dimension".into()));
    }
    let conformance_window = if r.read_flag()? {
        Some(ConformanceWindow {
            left: r.read_ue()?,
            right: r.read_ue()?,
            top: r.read_ue()?,
            bottom: r.read_ue()?,
        })
    } else {
        None
    };
    if r.read_flag()? {
        return Err(NalError::UnsupportedSyntax("subpicture layout is not modeled".into()));
    }
    let bitdepth_minus8 = r.read_ue()?;
    if bitdepth_minus8 > 2 {
        return Err(NalError::UnsupportedSyntax(format!(
            "bit depth {} outside Main 10",
            bitdepth_minus8 + 8
        )));
    }

    let (sub_w, sub_h) = match chroma_format_idc {
        1 => (2, 2),
        2 => (2, 1),
        _ => (1, 1),
    };
    let (width_luma, height_luma) = match &conformance_window {
        Some(w) => {
            let crop_w = sub_w * (w.left as u64 + w.right as u64);
            let crop_h = sub_h * (w.top as u64 + w.bottom as u64);
            if crop_w >= coded_width as u64 || crop_h >= coded_height as u64 {
                return Err(NalError::UnsupportedSyntax("conformance window exceeds picture".into()));
            }
            ((coded_width as u64 - crop_w) as u32, (coded_height as u64 - crop_h) as u32)
        }
        None => (coded_width, coded_height),
    };

    Ok(SpsSummary {
        sps_id,
        vps_id,
        max_sublayers_minus1,
        chroma_format_idc,
        log2_ctu_size,
        ptl,
        gdr_enabled,
        coded_width,
        coded_height,
        conformance_window,
        width_luma,
        height_luma,
        bit_depth: bitdepth_minus8 as u8 + 8,
    })
}

/// Parse the SPS summary straight from a NAL unit.
pub fn sps_from_nal(nal: &NalUnit) -> Result<SpsSummary, NalError> {
    if nal.nal_unit_type() != SPS_NUT {
        return Err(NalError::UnsupportedSyntax(format!("NAL type {} is not an SPS", nal.nal_unit_type())));
    }
    let (rbsp, _) = remove_emulation_prevention_lenient(&nal.ebsp);
    parse_sps_summary(&rbsp)
}

/// The id carried at the start of a VPS, SPS or PPS payload.
pub fn parameter_set_id(nal: &NalUnit) -> Option<u8> {
    let first = *nal.ebsp.first()?;
    match nal.nal_unit_type() {
        VPS_NUT | SPS_NUT => Some(first >> 4),
        PPS_NUT => Some(first >> 2),
        _ => None,
    }
}
