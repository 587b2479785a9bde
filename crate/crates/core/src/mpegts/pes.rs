//! PES packet headers with 90 kHz PTS/DTS.

use super::TsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PesHeader {
    pub stream_id: u8,
    /// 0 means unbounded.
    pub packet_length: u16,
    pub data_alignment: bool,
    pub pts: Option<u64>,
    pub dts: Option<u64>,
    /// Bytes from the start of the PES packet to its payload.
    pub header_len: usize,
}

fn put_timestamp(out: &mut Vec<u8>, prefix: u8, ts: u64) {
    let ts = ts & ((1 << 33) - 1);
    out.push(prefix << 4 | ((ts >> 30) as u8 & 0x07) << 1 | 1);
    out.extend_from_slice(&((((ts >> 15) & 0x7FFF) << 1 | 1) as u16).to_be_bytes());
    out.extend_from_slice(&(((ts & 0x7FFF) << 1 | 1) as u16).to_be_bytes());
}

fn get_timestamp(b: &[u8]) -> u64 {
    u64::from(b[0] >> 1 & 0x07) << 30
        | u64::from(u16::from_be_bytes([b[1], b[2]]) >> 1) << 15
        | u64::from(u16::from_be_bytes([b[3], b[4]]) >> 1)
}

/// A complete PES packet. DTS is written only when it differs from PTS.
/// `bounded` writes PES_packet_length when the packet fits 16 bits.
pub fn build_pes(stream_id: u8, pts: u64, dts: u64, payload: &[u8], bounded: bool) -> Vec<u8> {
    let with_dts = dts != pts;
    let header_data = if with_dts { 10 } else { 5 };
    let after_length = 3 + header_data + payload.len();
    let length = if bounded && after_length <= u16::MAX as usize { after_length as u16 } else { 0 };
    let mut out = Vec::with_capacity(9 + header_data + payload.len());
    out.extend_from_slice(&[0, 0, 1, stream_id]);
    out.extend_from_slice(&length.to_be_bytes());
    out.push(0x84); // '10', data_alignment_indicator
    out.push(if with_dts { 0xC0 } else { 0x80 });
    out.push(header_data as u8);
    put_timestamp(&mut out, if with_dts { 3 } else { 2 }, pts);
    if with_dts {
        put_timestamp(&mut out, 1, dts);
    }
    out.extend_from_slice(payload);
    out
}

pub fn parse_pes_header(b: &[u8]) -> Result<PesHeader, TsError> {
    if b.len() < 9 || b[..3] != [0, 0, 1] {
        return Err(TsError::Malformed("PES start code".into()));
    }
    let stream_id = b[3];
    let packet_length = u16::from_be_bytes([b[4], b[5]]);
    let flags = b[7];
    let header_len = 9 + b[8] as usize;
    if header_len > b.len() {
        return Err(TsError::Malformed("PES header length".into()));
    }
    let (mut pts, mut dts) = (None, None);
    if flags & 0x80 != 0 {
        if header_len < 14 {
            return Err(TsError::Malformed("PES PTS".into()));
        }
        pts = Some(get_timestamp(&b[9..14]));
        if flags & 0x40 != 0 {
            if header_len < 19 {
                return Err(TsError::Malformed("PES DTS".into()));
            }
            dts = Some(get_timestamp(&b[14..19]));
        }
    }
    Ok(PesHeader { stream_id, packet_length, data_alignment: b[6] & 0x04 != 0, pts, dts: dts.or(pts), header_len })
}
