//! Annex B start-code framing.

use super::nal::{NalHeader, NalUnit};
use super::{NalError, ParseMode};

/// Result of scanning a byte stream, including tolerated irregularities.
#[derive(Debug, Clone, Default)]
pub struct AnnexBScan {
    pub nals: Vec<NalUnit>,
    pub warnings: Vec<String>,
    /// Bytes in front of the first start code that were not zero padding.
    pub leading_garbage: usize,
}

/// Position of the next `00 00 01` at or after `from`.
fn find_start_code(data: &[u8], from: usize) -> Option<usize> {
    let mut i = from;
    while i + 2 < data.len() {
        // skip ahead on the third byte, which must be 0x01
        let b2 = data[i + 2];
        if b2 > 1 {
            i += 3;
            continue;
        }
        if b2 == 1 && data[i] == 0 && data[i + 1] == 0 {
            return Some(i);
        }
        i += 1;
    }
    None
}

/// Number of zero bytes directly before `end`, never reaching below `floor`.
fn zeros_before(data: &[u8], floor: usize, end: usize) -> usize {
    data[floor..end].iter().rev().take_while(|&&b| b == 0).count()
}

/// Split an Annex B byte stream into NAL units (lenient mode).
pub fn scan_annex_b(data: &[u8]) -> Result<Vec<NalUnit>, NalError> {
    scan_annex_b_with(data, ParseMode::Lenient).map(|s| s.nals)
}

pub fn scan_annex_b_with(data: &[u8], mode: ParseMode) -> Result<AnnexBScan, NalError> {
    let mut scan = AnnexBScan::default();
    if data.is_empty() {
        return Ok(scan);
    }
    let Some(first) = find_start_code(data, 0) else {
        return Err(NalError::NoStartCodeFound);
    };

    // separator of the first NAL: zeros in front of 00 00 01, the rest is garbage
    let zeros = zeros_before(data, 0, first);
    scan.leading_garbage = first - zeros;
    if scan.leading_garbage > 0 {
        scan.warnings.push(format!(
            "{} bytes of garbage before the first start code",
            scan.leading_garbage
        ));
    }
    let mut sc = first;
    let mut sep_zeros = zeros;

    loop {
        let zero_byte = usize::from(sep_zeros > 0);
        let offset = sc - zero_byte;
        let payload_start = sc + 3;
        let next = find_start_code(data, payload_start);
        let (payload_end, next_zeros) = match next {
            Some(q) => {
                let z = zeros_before(data, payload_start, q);
                (q - z, z)
            }
            None => (data.len(), 0),
        };
        if payload_end < payload_start + 2 {
            return Err(NalError::TruncatedNal { offset });
        }
        let header = NalHeader::parse([data[payload_start], data[payload_start + 1]]);
        for v in header.violations() {
            if mode == ParseMode::Strict && v.starts_with("forbidden") {
                return Err(NalError::ForbiddenBitSet { offset });
            }
            scan.warnings.push(format!("NAL at {offset}: {v}"));
        }
        scan.nals.push(NalUnit {
            header,
            ebsp: data[payload_start + 2..payload_end].to_vec(),
            offset,
            start_code_len: if zero_byte == 1 { 4 } else { 3 },
            leading_zeros: sep_zeros.saturating_sub(1),
        });
        match next {
            Some(q) => {
                sc = q;
                sep_zeros = next_zeros;
            }
            None => break,
        }
    }
    Ok(scan)
}

/// Re-emit NAL units using their recorded separators.
///
/// NALs without a recorded start code (for instance ones read from MP4) get a
/// 4-byte start code.
pub fn write_annex_b(nals: &[NalUnit]) -> Vec<u8> {
    let total: usize = nals.iter().map(|n| n.size() + 4 + n.leading_zeros).sum();
    let mut out = Vec::with_capacity(total);
    for nal in nals {
        out.resize(out.len() + nal.leading_zeros, 0);
        match nal.start_code_len {
            3 => out.extend_from_slice(&[0, 0, 1]),
            _ => out.extend_from_slice(&[0, 0, 0, 1]),
        }
        out.extend_from_slice(&nal.header.to_bytes());
        out.extend_from_slice(&nal.ebsp);
    }
    out
}
