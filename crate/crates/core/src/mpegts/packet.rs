use super::TsError;

pub const TS_PACKET_SIZE: usize = 188;
pub const NULL_PID: u16 = 0x1FFF;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Adaptation {
    pub discontinuity: bool,
    pub random_access: bool,
    /// 27 MHz clock value.
    pub pcr: Option<u64>,
}

impl Adaptation {
    fn min_len(&self) -> usize {
        // length byte + flags + optional PCR
        2 + if self.pcr.is_some() { 6 } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsPacket {
    pub pid: u16,
    pub payload_unit_start: bool,
    pub continuity_counter: u8,
    pub adaptation: Option<Adaptation>,
    pub payload: Vec<u8>,
}

impl TsPacket {
    pub fn null() -> TsPacket {
        TsPacket { pid: NULL_PID, payload_unit_start: false, continuity_counter: 0, adaptation: None, payload: vec![0xFF; 184] }
    }

    /// Bytes of payload that fit next to the given adaptation field.
    pub fn capacity(adaptation: Option<&Adaptation>) -> usize {
        184 - adaptation.map_or(0, Adaptation::min_len)
    }

    /// Encode to exactly 188 bytes, stuffing the adaptation field as needed.
    pub fn serialize(&self) -> [u8; TS_PACKET_SIZE] {
        let mut p = [0xFFu8; TS_PACKET_SIZE];
        assert!(self.pid <= NULL_PID, "PID out of range");
        let af_min = self.adaptation.as_ref().map_or(0, Adaptation::min_len);
        assert!(self.payload.len() + af_min <= 184, "payload does not fit");
        let has_payload = !self.payload.is_empty();
        let has_af = self.adaptation.is_some() || self.payload.len() < 184;
        p[0] = 0x47;
        p[1] = (self.payload_unit_start as u8) << 6 | (self.pid >> 8) as u8;
        p[2] = self.pid as u8;
        p[3] = (has_af as u8) << 5 | (has_payload as u8) << 4 | (self.continuity_counter & 0x0F);
        let mut pos = 4;
        if has_af {
            let af_len = 183 - self.payload.len();
            p[4] = af_len as u8;
            if af_len > 0 {
                let a = self.adaptation.clone().unwrap_or_default();
                p[5] = (a.discontinuity as u8) << 7 | (a.random_access as u8) << 6 | (a.pcr.is_some() as u8) << 4;
                if let Some(pcr) = a.pcr {
                    p[6..12].copy_from_slice(&encode_pcr(pcr));
                }
                // the remaining adaptation bytes are already 0xFF stuffing
            }
            pos = 5 + af_len;
        }
        p[pos..pos + self.payload.len()].copy_from_slice(&self.payload);
        p
    }

    pub fn parse(p: &[u8]) -> Result<TsPacket, TsError> {
        if p.len() != TS_PACKET_SIZE {
            return Err(TsError::Malformed(format!("packet of {} bytes", p.len())));
        }
        if p[0] != 0x47 {
            return Err(TsError::BadSync { offset: 0 });
        }
        let pid = u16::from(p[1] & 0x1F) << 8 | u16::from(p[2]);
        let afc = (p[3] >> 4) & 3;
        let mut pos = 4;
        let mut adaptation = None;
        if afc & 2 != 0 {
            let len = p[4] as usize;
            if len > 183 {
                return Err(TsError::Malformed(format!("adaptation field of {len} bytes")));
            }
            let mut a = Adaptation::default();
            if len > 0 {
                let flags = p[5];
                a.discontinuity = flags & 0x80 != 0;
                a.random_access = flags & 0x40 != 0;
                if flags & 0x10 != 0 {
                    if len < 7 {
                        return Err(TsError::Malformed("PCR flag in short adaptation field".into()));
                    }
                    a.pcr = Some(decode_pcr(&p[6..12]));
                }
            }
            adaptation = Some(a);
            pos = 5 + len;
        }
        let payload = if afc & 1 != 0 { p[pos..].to_vec() } else { Vec::new() };
        Ok(TsPacket {
            pid,
            payload_unit_start: p[1] & 0x40 != 0,
            continuity_counter: p[3] & 0x0F,
            adaptation,
            payload,
        })
    }
}

fn encode_pcr(pcr: u64) -> [u8; 6] {
    let base = (pcr / 300) & ((1 << 33) - 1);
    let ext = pcr % 300;
    [
        (base >> 25) as u8,
        (base >> 17) as u8,
        (base >> 9) as u8,
        (base >> 1) as u8,
        ((base & 1) << 7) as u8 | 0x7E | (ext >> 8) as u8,
        ext as u8,
    ]
}

fn decode_pcr(b: &[u8]) -> u64 {
    let base = u64::from(b[0]) << 25 | u64::from(b[1]) << 17 | u64::from(b[2]) << 9 | u64::from(b[3]) << 1 | u64::from(b[4] >> 7);
    let ext = u64::from(b[4] & 1) << 8 | u64::from(b[5]);
    base * 300 + ext
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_payload_packet() {
        let pkt = TsPacket { pid: 0x101, payload_unit_start: true, continuity_counter: 5, adaptation: None, payload: vec![0xAB; 184] };
        let b = pkt.serialize();
        assert_eq!(&b[..4], &[0x47, 0x41, 0x01, 0x15]);
        assert_eq!(TsPacket::parse(&b).unwrap(), pkt);
    }

    #[test]
    fn stuffing_and_pcr() {
        let a = Adaptation { random_access: true, pcr: Some(27_000_000 * 3 + 299), ..Default::default() };
        let pkt = TsPacket { pid: 0x101, payload_unit_start: false, continuity_counter: 15, adaptation: Some(a), payload: vec![1, 2, 3] };
        let b = pkt.serialize();
        assert_eq!(b.len(), 188);
        assert_eq!(b[4] as usize, 183 - 3);
        assert_eq!(&b[185..], &[1, 2, 3]);
        assert_eq!(TsPacket::parse(&b).unwrap(), pkt);
    }

    #[test]
    fn one_byte_adaptation_field() {
        let pkt = TsPacket { pid: 0x42, payload_unit_start: false, continuity_counter: 0, adaptation: None, payload: vec![7; 183] };
        let b = pkt.serialize();
        assert_eq!((b[3] >> 4, b[4]), (3, 0));
        let back = TsPacket::parse(&b).unwrap();
        assert_eq!(back.payload, pkt.payload);
    }

    #[test]
    fn pcr_only_and_null() {
        let pkt = TsPacket {
            pid: 0x101,
            payload_unit_start: false,
            continuity_counter: 3,
            adaptation: Some(Adaptation { pcr: Some(12345), ..Default::default() }),
            payload: vec![],
        };
        let b = pkt.serialize();
        assert_eq!(b[3] >> 4, 2);
        assert_eq!(TsPacket::parse(&b).unwrap().adaptation.unwrap().pcr, Some(12345));
        let n = TsPacket::null().serialize();
        assert_eq!(&n[..4], &[0x47, 0x1F, 0xFF, 0x10]);
    }
}
