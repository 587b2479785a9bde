//! VVC NAL unit header and type tables.
//!
//! ```text
//! byte 0: forbidden_zero_bit(1) | nuh_reserved_zero_bit(1) | nuh_layer_id(6)
//! byte 1: nal_unit_type(5)      | nuh_temporal_id_plus1(3)
//! ```

use std::fmt;

use serde::Serialize;

pub const TRAIL_NUT: u8 = 0;
pub const STSA_NUT: u8 = 1;
pub const RADL_NUT: u8 = 2;
pub const RASL_NUT: u8 = 3;
pub const IDR_W_RADL: u8 = 7;
pub const IDR_N_LP: u8 = 8;
pub const CRA_NUT: u8 = 9;
pub const GDR_NUT: u8 = 10;
pub const OPI_NUT: u8 = 12;
pub const DCI_NUT: u8 = 13;
pub const VPS_NUT: u8 = 14;
pub const SPS_NUT: u8 = 15;
pub const PPS_NUT: u8 = 16;
pub const PREFIX_APS_NUT: u8 = 17;
pub const SUFFIX_APS_NUT: u8 = 18;
pub const PH_NUT: u8 = 19;
pub const AUD_NUT: u8 = 20;
pub const EOS_NUT: u8 = 21;
pub const EOB_NUT: u8 = 22;
pub const PREFIX_SEI_NUT: u8 = 23;
pub const SUFFIX_SEI_NUT: u8 = 24;
pub const FD_NUT: u8 = 25;

/// Coarse grouping of `nal_unit_type` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum NalCategory {
    Vcl,
    IrapVcl,
    Vps,
    Sps,
    Pps,
    Aps,
    PictureHeader,
    Aud,
    Sei,
    EosEob,
    Other,
}

impl NalCategory {
    pub fn of(nal_unit_type: u8) -> NalCategory {
        match nal_unit_type {
            IDR_W_RADL | IDR_N_LP | CRA_NUT => NalCategory::IrapVcl,
            0..=11 => NalCategory::Vcl,
            VPS_NUT => NalCategory::Vps,
            SPS_NUT => NalCategory::Sps,
            PPS_NUT => NalCategory::Pps,
            PREFIX_APS_NUT | SUFFIX_APS_NUT => NalCategory::Aps,
            PH_NUT => NalCategory::PictureHeader,
            AUD_NUT => NalCategory::Aud,
            PREFIX_SEI_NUT | SUFFIX_SEI_NUT => NalCategory::Sei,
            EOS_NUT | EOB_NUT => NalCategory::EosEob,
            _ => NalCategory::Other,
        }
    }

    pub fn is_vcl(self) -> bool {
        matches!(self, NalCategory::Vcl | NalCategory::IrapVcl)
    }

    pub fn name(self) -> &'static str {
        match self {
            NalCategory::Vcl => "VCL",
            NalCategory::IrapVcl => "IRAP-VCL",
            NalCategory::Vps => "VPS",
            NalCategory::Sps => "SPS",
            NalCategory::Pps => "PPS",
            NalCategory::Aps => "APS",
            NalCategory::PictureHeader => "PH",
            NalCategory::Aud => "AUD",
            NalCategory::Sei => "SEI",
            NalCategory::EosEob => "EOS/EOB",
            NalCategory::Other => "OTHER",
        }
    }
}

/// Short mnemonic for a `nal_unit_type`, as used in reports.
pub fn type_name(nal_unit_type: u8) -> &'static str {
    match nal_unit_type {
        TRAIL_NUT => "TRAIL",
        STSA_NUT => "STSA",
        RADL_NUT => "RADL",
        RASL_NUT => "RASL",
        4..=6 => "RSV_VCL",
        IDR_W_RADL => "IDR_W_RADL",
        IDR_N_LP => "IDR_N_LP",
        CRA_NUT => "CRA",
        GDR_NUT => "GDR",
        11 => "RSV_IRAP_11",
        OPI_NUT => "OPI",
        DCI_NUT => "DCI",
        VPS_NUT => "VPS",
        SPS_NUT => "SPS",
        PPS_NUT => "PPS",
        PREFIX_APS_NUT => "PREFIX_APS",
        SUFFIX_APS_NUT => "SUFFIX_APS",
        PH_NUT => "PH",
        AUD_NUT => "AUD",
        EOS_NUT => "EOS",
        EOB_NUT => "EOB",
        PREFIX_SEI_NUT => "PREFIX_SEI",
        SUFFIX_SEI_NUT => "SUFFIX_SEI",
        FD_NUT => "FD",
        26 | 27 => "RSV_NVCL",
        _ => "UNSPEC",
    }
}

/// IRAP here means IDR_W_RADL, IDR_N_LP or CRA. GDR is deliberately excluded.
pub fn is_irap(nal_unit_type: u8) -> bool {
    matches!(nal_unit_type, IDR_W_RADL | IDR_N_LP | CRA_NUT)
}

pub fn is_idr(nal_unit_type: u8) -> bool {
    matches!(nal_unit_type, IDR_W_RADL | IDR_N_LP)
}

pub fn is_parameter_set(nal_unit_type: u8) -> bool {
    matches!(nal_unit_type, VPS_NUT | SPS_NUT | PPS_NUT)
}

/// NAL types that close the preceding access unit's trailing side rather than open a new one.
pub fn is_suffix(nal_unit_type: u8) -> bool {
    matches!(nal_unit_type, SUFFIX_SEI_NUT | SUFFIX_APS_NUT | FD_NUT)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NalHeader {
    pub forbidden_zero_bit: bool,
    pub nuh_reserved_zero_bit: bool,
    pub nuh_layer_id: u8,
    pub nal_unit_type: u8,
    pub nuh_temporal_id_plus1: u8,
}

impl NalHeader {
    pub fn new(nal_unit_type: u8, nuh_layer_id: u8, temporal_id: u8) -> NalHeader {
        NalHeader {
            forbidden_zero_bit: false,
            nuh_reserved_zero_bit: false,
            nuh_layer_id: nuh_layer_id & 0x3f,
            nal_unit_type: nal_unit_type & 0x1f,
            nuh_temporal_id_plus1: (temporal_id + 1) & 0x07,
        }
    }

    pub fn parse(bytes: [u8; 2]) -> NalHeader {
        NalHeader {
            forbidden_zero_bit: bytes[0] & 0x80 != 0,
            nuh_reserved_zero_bit: bytes[0] & 0x40 != 0,
            nuh_layer_id: bytes[0] & 0x3f,
            nal_unit_type: bytes[1] >> 3,
            nuh_temporal_id_plus1: bytes[1] & 0x07,
        }
    }

    pub fn to_bytes(self) -> [u8; 2] {
        [
            (u8::from(self.forbidden_zero_bit) << 7)
                | (u8::from(self.nuh_reserved_zero_bit) << 6)
                | (self.nuh_layer_id & 0x3f),
            (self.nal_unit_type << 3) | (self.nuh_temporal_id_plus1 & 0x07),
        ]
    }

    pub fn category(self) -> NalCategory {
        NalCategory::of(self.nal_unit_type)
    }

    /// `TemporalId`; zero when `nuh_temporal_id_plus1` is (illegally) zero.
    pub fn temporal_id(self) -> u8 {
        self.nuh_temporal_id_plus1.saturating_sub(1)
    }

    /// Problems that lenient parsing tolerates and strict parsing rejects.
    pub fn violations(self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.forbidden_zero_bit {
            v.push("forbidden_zero_bit is set");
        }
        if self.nuh_reserved_zero_bit {
            v.push("nuh_reserved_zero_bit is set");
        }
        if self.nuh_temporal_id_plus1 == 0 {
            v.push("nuh_temporal_id_plus1 is zero");
        }
        v
    }
}

impl fmt::Display for NalHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}(layer={}, tid={})",
            type_name(self.nal_unit_type),
            self.nuh_layer_id,
            self.temporal_id()
        )
    }
}

/// One NAL unit as found in an Annex B stream.
///
/// `ebsp` is everything after the two header bytes up to the next separator,
/// emulation-prevention bytes intact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NalUnit {
    pub header: NalHeader,
    pub ebsp: Vec<u8>,
    /// Byte index of the start code (including its `zero_byte` when 4 bytes long).
    pub offset: usize,
    /// 3 or 4; zero for NALs that did not come from an Annex B stream.
    pub start_code_len: u8,
    /// Extra zero bytes in front of the start code, owned by this NAL's separator.
    pub leading_zeros: usize,
}

impl NalUnit {
    pub fn new(header: NalHeader, ebsp: Vec<u8>) -> NalUnit {
        NalUnit { header, ebsp, offset: 0, start_code_len: 4, leading_zeros: 0 }
    }

    /// Parse header and payload from a bare NAL (as carried in length-prefixed form).
    pub fn from_bytes(bytes: &[u8]) -> Option<NalUnit> {
        if bytes.len() < 2 {
            return None;
        }
        Some(NalUnit {
            header: NalHeader::parse([bytes[0], bytes[1]]),
            ebsp: bytes[2..].to_vec(),
            offset: 0,
            start_code_len: 0,
            leading_zeros: 0,
        })
    }

    pub fn nal_unit_type(&self) -> u8 {
        self.header.nal_unit_type
    }

    pub fn category(&self) -> NalCategory {
        self.header.category()
    }

    pub fn is_vcl(&self) -> bool {
        self.category().is_vcl()
    }

    /// Header plus payload, without any start code.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.ebsp.len());
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&self.ebsp);
        out
    }

    /// Size of header plus payload.
    pub fn size(&self) -> usize {
        2 + self.ebsp.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_bit_layout() {
        // 0x00 0x79: type = 0b01111 = 15, tid+1 = 0b001
        let h = NalHeader::parse([0x00, 0x79]);
        assert_eq!(h.nal_unit_type, SPS_NUT);
        assert_eq!(h.nuh_temporal_id_plus1, 1);
        assert_eq!(h.nuh_layer_id, 0);
        assert!(!h.forbidden_zero_bit);
        assert_eq!(h.to_bytes(), [0x00, 0x79]);

        let h = NalHeader::parse([0xC5, 0x43]);
        assert!(h.forbidden_zero_bit && h.nuh_reserved_zero_bit);
        assert_eq!(h.nuh_layer_id, 5);
        assert_eq!(h.nal_unit_type, 8);
        assert_eq!(h.nuh_temporal_id_plus1, 3);
        assert_eq!(h.violations().len(), 2);
    }

    #[test]
    fn header_roundtrip_all_values() {
        for b0 in 0..=255u8 {
            for b1 in 0..=255u8 {
                assert_eq!(NalHeader::parse([b0, b1]).to_bytes(), [b0, b1]);
            }
        }
    }

    #[test]
    fn category_is_total() {
        let cats: Vec<_> = (0..32u8).map(NalCategory::of).collect();
        assert_eq!(cats[7], NalCategory::IrapVcl);
        assert_eq!(cats[8], NalCategory::IrapVcl);
        assert_eq!(cats[9], NalCategory::IrapVcl);
        assert_eq!(cats[10], NalCategory::Vcl);
        assert_eq!(cats[15], NalCategory::Sps);
        assert_eq!(cats[20], NalCategory::Aud);
        assert_eq!(cats[24], NalCategory::Sei);
        assert_eq!(cats[31], NalCategory::Other);
        assert_eq!((0..32u8).filter(|&t| NalCategory::of(t).is_vcl()).count(), 12);
        assert!(!is_irap(GDR_NUT));
    }
}
