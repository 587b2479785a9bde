//! Big-endian bit reader and writer with exp-Golomb support.

use super::NalError;

pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        BitReader { data, pos: 0 }
    }

    pub fn bytes(&self) -> &'a [u8] {
        self.data
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() * 8 - self.pos
    }

    pub fn is_byte_aligned(&self) -> bool {
        self.pos % 8 == 0
    }

    pub fn read_bit(&mut self) -> Result<bool, NalError> {
        if self.pos >= self.data.len() * 8 {
            return Err(NalError::BitstreamUnderflow { bit: self.pos });
        }
        let bit = self.data[self.pos / 8] >> (7 - self.pos % 8) & 1;
        self.pos += 1;
        Ok(bit == 1)
    }

    pub fn read_flag(&mut self) -> Result<bool, NalError> {
        self.read_bit()
    }

    /// u(n) for n ≤ 32.
    pub fn read_bits(&mut self, n: u32) -> Result<u32, NalError> {
        debug_assert!(n <= 32);
        if self.remaining() < n as usize {
            return Err(NalError::BitstreamUnderflow { bit: self.pos });
        }
        let mut v = 0u32;
        for _ in 0..n {
            v = (v << 1) | u32::from(self.read_bit()?);
        }
        Ok(v)
    }

    pub fn skip_bits(&mut self, n: usize) -> Result<(), NalError> {
        if self.remaining() < n {
            return Err(NalError::BitstreamUnderflow { bit: self.pos });
        }
        self.pos += n;
        Ok(())
    }

    pub fn byte_align(&mut self) -> Result<(), NalError> {
        let pad = (8 - self.pos % 8) % 8;
        self.skip_bits(pad)
    }

    /// ue(v)
    pub fn read_ue(&mut self) -> Result<u32, NalError> {
        let mut leading = 0u32;
        while !self.read_bit()? {
            leading += 1;
            if leading > 31 {
                return Err(NalError::UnsupportedSyntax("exp-Golomb code longer than 32 bits".into()));
            }
        }
        if leading == 0 {
            return Ok(0);
        }
        let suffix = self.read_bits(leading)? as u64;
        Ok(((1u64 << leading) - 1 + suffix) as u32)
    }

    /// se(v)
    pub fn read_se(&mut self) -> Result<i32, NalError> {
        let k = self.read_ue()? as i64;
        Ok(if k % 2 == 1 { ((k + 1) / 2) as i32 } else { -(k / 2) as i32 })
    }
}

/// MSB-first bit writer, used to build parameter set payloads.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_bit(&mut self, bit: bool) {
        if self.bits % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().expect("pushed") |= 0x80 >> (self.bits % 8);
        }
        self.bits += 1;
    }

    pub fn put_bits(&mut self, value: u64, n: u32) {
        for i in (0..n).rev() {
            self.put_bit(value >> i & 1 == 1);
        }
    }

    pub fn put_ue(&mut self, value: u32) {
        let v = value as u64 + 1;
        let len = 64 - v.leading_zeros();
        self.put_bits(0, len - 1);
        self.put_bits(v, len);
    }

    pub fn align_zero(&mut self) {
        while self.bits % 8 != 0 {
            self.put_bit(false);
        }
    }

    /// Append `rbsp_trailing_bits()` and return the payload.
    pub fn finish_rbsp(mut self) -> Vec<u8> {
        self.put_bit(true);
        self.align_zero();
        self.bytes
    }

    /// Bytes written so far; a partial last byte is zero padded.
    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn bit_len(&self) -> usize {
        self.bits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_golomb_first_values() {
        // 1 | 010 | 00100 | 011 -> 0, 1, 3, 2
        let data = [0b1010_0010, 0b0011_0000];
        let mut r = BitReader::new(&data);
        assert_eq!(r.read_ue().unwrap(), 0);
        assert_eq!(r.read_ue().unwrap(), 1);
        assert_eq!(r.read_ue().unwrap(), 3);
        assert_eq!(r.read_ue().unwrap(), 2);
    }

    #[test]
    fn signed_mapping() {
        // ue 1 -> +1, ue 2 -> -1 : bits 010 011
        let data = [0b0100_1100];
        let mut r = BitReader::new(&data);
        assert_eq!(r.read_se().unwrap(), 1);
        assert_eq!(r.read_se().unwrap(), -1);
    }

    #[test]
    fn fixed_width_and_underflow() {
        let data = [0xA5];
        let mut r = BitReader::new(&data);
        assert_eq!(r.read_bits(4).unwrap(), 0xA);
        assert!(!r.is_byte_aligned());
        assert_eq!(r.read_bits(4).unwrap(), 0x5);
        assert!(matches!(r.read_bit(), Err(NalError::BitstreamUnderflow { bit: 8 })));
        let mut r = BitReader::new(&[0x00]);
        assert!(r.read_ue().is_err());
    }
}
