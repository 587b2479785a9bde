//! Emulation prevention (`0x000003`) handling.

use super::NalError;

/// An irregularity found while stripping emulation prevention bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EbspIssue {
    pub position: usize,
    pub message: String,
}

/// Strip emulation prevention bytes, failing on the first malformed sequence.
pub fn remove_emulation_prevention(ebsp: &[u8]) -> Result<Vec<u8>, NalError> {
    let (rbsp, issues) = strip(ebsp);
    match issues.into_iter().next() {
        Some(issue) => Err(NalError::MalformedEbsp { position: issue.position, message: issue.message }),
        None => Ok(rbsp),
    }
}

/// Strip emulation prevention bytes, keeping malformed sequences verbatim and reporting them.
pub fn remove_emulation_prevention_lenient(ebsp: &[u8]) -> (Vec<u8>, Vec<EbspIssue>) {
    strip(ebsp)
}

fn strip(ebsp: &[u8]) -> (Vec<u8>, Vec<EbspIssue>) {
    let mut out = Vec::with_capacity(ebsp.len());
    let mut issues = Vec::new();
    let mut zeros = 0usize;
    let mut i = 0;
    while i < ebsp.len() {
        let b = ebsp[i];
        if zeros >= 2 && b == 0x03 {
            match ebsp.get(i + 1) {
                Some(&next) if next > 0x03 => {
                    issues.push(EbspIssue {
                        position: i,
                        message: format!("00 00 03 followed by 0x{next:02x}"),
                    });
                    out.push(b);
                    zeros = 0;
                }
                // dropped; the zero run restarts after the emulation byte
                _ => zeros = 0,
            }
            i += 1;
            continue;
        }
        if zeros >= 2 && b <= 0x02 {
            issues.push(EbspIssue {
                position: i,
                message: format!("raw 00 00 {b:02x} in payload"),
            });
        }
        out.push(b);
        zeros = if b == 0 { zeros + 1 } else { 0 };
        i += 1;
    }
    (out, issues)
}

/// Insert an emulation prevention byte wherever two zero bytes are followed by a byte ≤ 0x03.
pub fn insert_emulation_prevention(rbsp: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(rbsp.len() + rbsp.len() / 64 + 1);
    let mut zeros = 0usize;
    for &b in rbsp {
        if zeros >= 2 && b <= 0x03 {
            out.push(0x03);
            zeros = 0;
        }
        out.push(b);
        zeros = if b == 0 { zeros + 1 } else { 0 };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_without_zero_pairs() {
        assert_eq!(remove_emulation_prevention(&[0x41, 0x42, 0x43]).unwrap(), vec![0x41, 0x42, 0x43]);
        assert_eq!(insert_emulation_prevention(&[0xff]), vec![0xff]);
    }

    #[test]
    fn removal_examples() {
        assert_eq!(remove_emulation_prevention(&[0, 0, 3, 0]).unwrap(), vec![0, 0, 0]);
        assert_eq!(
            remove_emulation_prevention(&[0, 0, 3, 3, 0, 0, 3, 1]).unwrap(),
            vec![0, 0, 3, 0, 0, 1]
        );
        // trailing cabac_zero_word style 00 00 03
        assert_eq!(remove_emulation_prevention(&[0xaa, 0, 0, 3]).unwrap(), vec![0xaa, 0, 0]);
    }

    #[test]
    fn insertion_examples() {
        assert_eq!(insert_emulation_prevention(&[0, 0, 1]), vec![0, 0, 3, 1]);
        assert_eq!(insert_emulation_prevention(&[0, 0, 0, 0]), vec![0, 0, 3, 0, 0]);
        assert_eq!(insert_emulation_prevention(&[0, 0]), vec![0, 0]);
    }

    #[test]
    fn malformed_sequences() {
        let err = remove_emulation_prevention(&[0, 0, 3, 4]).unwrap_err();
        assert!(matches!(err, NalError::MalformedEbsp { position: 2, .. }));
        assert!(remove_emulation_prevention(&[0x11, 0, 0, 1]).is_err());
        assert!(remove_emulation_prevention(&[0, 0, 0]).is_err());

        let (rbsp, issues) = remove_emulation_prevention_lenient(&[0, 0, 3, 4, 0, 0, 2]);
        assert_eq!(rbsp, vec![0, 0, 3, 4, 0, 0, 2]);
        assert_eq!(issues.len(), 2);
    }
}
