//! Program association and program map sections.

use crc::{Crc, CRC_32_MPEG_2};

use super::packet::TsPacket;
use super::{stream_kind, TsError, TsProgram, TsStream};

const MPEG2: Crc<u32> = Crc::<u32>::new(&CRC_32_MPEG_2);

/// CRC-32 as used by PSI sections (poly 0x04C11DB7, init all ones, no reflection).
pub fn crc32_mpeg2(data: &[u8]) -> u32 {
    MPEG2.checksum(data)
}

// section_length is a 10-bit quantity capped at 1021 for PSI
const MAX_SECTION_LENGTH: usize = 1021;

fn finish_section(table_id: u8, id: u16, version: u8, body: &[u8]) -> Result<Vec<u8>, TsError> {
    let section_length = 5 + body.len() + 4;
    if section_length > MAX_SECTION_LENGTH {
        return Err(TsError::TooManyStreams);
    }
    let mut s = Vec::with_capacity(3 + section_length);
    s.push(table_id);
    // section_syntax_indicator, '0', reserved
    s.push(0xB0 | (section_length >> 8) as u8);
    s.push(section_length as u8);
    s.extend_from_slice(&id.to_be_bytes());
    s.push(0xC0 | (version & 0x1F) << 1 | 1);
    s.push(0); // section_number
    s.push(0); // last_section_number
    s.extend_from_slice(body);
    let crc = crc32_mpeg2(&s);
    s.extend_from_slice(&crc.to_be_bytes());
    Ok(s)
}

/// Build the PAT and PMT sections (without pointer field) for a program.
pub fn build_psi(program: &TsProgram, version: u8) -> Result<(Vec<u8>, Vec<u8>), TsError> {
    let mut pat = Vec::new();
    pat.extend_from_slice(&program.program_number.to_be_bytes());
    pat.extend_from_slice(&(0xE000 | program.pmt_pid).to_be_bytes());
    let pat = finish_section(0x00, 1, version, &pat)?;

    let mut pmt = Vec::new();
    pmt.extend_from_slice(&(0xE000 | program.pcr_pid).to_be_bytes());
    pmt.extend_from_slice(&0xF000u16.to_be_bytes()); // no program descriptors
    for s in &program.streams {
        pmt.push(s.stream_type);
        pmt.extend_from_slice(&(0xE000 | s.pid).to_be_bytes());
        pmt.extend_from_slice(&0xF000u16.to_be_bytes());
    }
    let pmt = finish_section(0x02, program.program_number, version, &pmt)?;
    Ok((pat, pmt))
}

/// Split a section over as many packets as needed, with a leading pointer field.
pub fn section_packets(pid: u16, section: &[u8], cc: &mut u8) -> Vec<TsPacket> {
    let mut data = Vec::with_capacity(section.len() + 1);
    data.push(0);
    data.extend_from_slice(section);
    let mut out = Vec::new();
    for (i, chunk) in data.chunks(184).enumerate() {
        let mut payload = chunk.to_vec();
        payload.resize(184, 0xFF);
        out.push(TsPacket { pid, payload_unit_start: i == 0, continuity_counter: *cc, adaptation: None, payload });
        *cc = (*cc + 1) & 0x0F;
    }
    out
}

/// Validate a complete section and return (table_id, table_id_extension, body).
pub(crate) fn check_section(section: &[u8], pid: u16) -> Result<(u8, u16, &[u8]), TsError> {
    if section.len() < 12 {
        return Err(TsError::Malformed("short PSI section".into()));
    }
    let len = (usize::from(section[1] & 0x0F) << 8 | usize::from(section[2])) + 3;
    if len > section.len() || len < 12 {
        return Err(TsError::Malformed("PSI section length".into()));
    }
    let section = &section[..len];
    if crc32_mpeg2(section) != 0 {
        return Err(TsError::CrcMismatch { pid });
    }
    let id = u16::from_be_bytes([section[3], section[4]]);
    Ok((section[0], id, &section[8..len - 4]))
}

/// Total length of the section starting at `data`, if its header is present.
pub(crate) fn section_len(data: &[u8]) -> Option<usize> {
    (data.len() >= 3).then(|| (usize::from(data[1] & 0x0F) << 8 | usize::from(data[2])) + 3)
}

/// Program entries `(program_number, pmt_pid)` of a PAT section.
pub fn parse_pat(section: &[u8]) -> Result<Vec<(u16, u16)>, TsError> {
    let (table_id, _, body) = check_section(section, 0)?;
    if table_id != 0 {
        return Err(TsError::Malformed(format!("table_id {table_id} on PID 0")));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| (u16::from_be_bytes([c[0], c[1]]), u16::from_be_bytes([c[2], c[3]]) & 0x1FFF))
        .collect())
}

pub fn parse_pmt(section: &[u8], pmt_pid: u16, vvc_stream_type: u8) -> Result<TsProgram, TsError> {
    let (table_id, program_number, body) = check_section(section, pmt_pid)?;
    if table_id != 2 || body.len() < 4 {
        return Err(TsError::Malformed("PMT section".into()));
    }
    let pcr_pid = u16::from_be_bytes([body[0], body[1]]) & 0x1FFF;
    let info_len = usize::from(u16::from_be_bytes([body[2], body[3]]) & 0x0FFF);
    let mut pos = 4 + info_len;
    let mut streams = Vec::new();
    while pos + 5 <= body.len() {
        let stream_type = body[pos];
        let pid = u16::from_be_bytes([body[pos + 1], body[pos + 2]]) & 0x1FFF;
        let es_info = usize::from(u16::from_be_bytes([body[pos + 3], body[pos + 4]]) & 0x0FFF);
        streams.push(TsStream { pid, stream_type, kind: stream_kind(stream_type, vvc_stream_type) });
        pos += 5 + es_info;
    }
    Ok(TsProgram { program_number, pmt_pid, pcr_pid, streams })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpegts::{StreamKind, VVC_STREAM_TYPE};

    // independent bit-serial CRC-32/MPEG-2
    fn crc_bitwise(data: &[u8]) -> u32 {
        let mut crc = 0xFFFF_FFFFu32;
        for &byte in data {
            for i in (0..8).rev() {
                let bit = (byte >> i) & 1 == 1;
                let top = crc & 0x8000_0000 != 0;
                crc <<= 1;
                if bit != top {
                    crc ^= 0x04C1_1DB7;
                }
            }
        }
        crc
    }

    #[test]
    fn crc_check_value() {
        assert_eq!(crc32_mpeg2(b"123456789"), 0x0376_E6E7);
        assert_eq!(crc_bitwise(b"123456789"), 0x0376_E6E7);
    }

    #[test]
    fn pat_single_program() {
        let p = TsProgram::standard(VVC_STREAM_TYPE, None);
        let (pat, _) = build_psi(&p, 0).unwrap();
        assert_eq!(parse_pat(&pat).unwrap(), vec![(1, 0x100)]);
        assert_eq!(crc_bitwise(&pat[..pat.len() - 4]).to_be_bytes(), pat[pat.len() - 4..]);
    }

    #[test]
    fn pmt_roundtrip() {
        let p = TsProgram::standard(VVC_STREAM_TYPE, Some(0x0F));
        let (_, pmt) = build_psi(&p, 3).unwrap();
        let back = parse_pmt(&pmt, 0x100, VVC_STREAM_TYPE).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.streams[1].kind, StreamKind::Audio);
        let mut bad = pmt.clone();
        bad[10] ^= 1;
        assert_eq!(parse_pmt(&bad, 0x100, VVC_STREAM_TYPE).unwrap_err(), TsError::CrcMismatch { pid: 0x100 });
    }

    #[test]
    fn too_many_streams() {
        let mut p = TsProgram::standard(VVC_STREAM_TYPE, None);
        for i in 0..250 {
            p.streams.push(TsStream { pid: 0x200 + i, stream_type: 6, kind: StreamKind::Other });
        }
        assert_eq!(build_psi(&p, 0).unwrap_err(), TsError::TooManyStreams);
        p.streams.truncate(100);
        let (_, pmt) = build_psi(&p, 0).unwrap();
        let mut cc = 0;
        let packets = section_packets(0x100, &pmt, &mut cc);
        assert_eq!(packets.len(), 3);
        assert_eq!(cc, 3);
    }
}
