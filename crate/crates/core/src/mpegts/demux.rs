//! Streaming transport stream demultiplexer.

use std::collections::{BTreeMap, HashMap};

use crate::nalio::{assemble_access_units, scan_annex_b_with, AuTiming, ElementaryStream, ParseMode};

use super::packet::{TsPacket, NULL_PID, TS_PACKET_SIZE};
use super::psi::{parse_pat, parse_pmt, section_len};
use super::{parse_pes_header, StreamKind, TsError, TsProgram, VVC_STREAM_TYPE};

/// Timing of one PES packet, with the offset of its payload in the stream data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PesInfo {
    pub offset: usize,
    pub len: usize,
    pub pts: Option<u64>,
    pub dts: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DemuxedStream {
    pub data: Vec<u8>,
    pub pes: Vec<PesInfo>,
}

/// A recoverable problem seen while demultiplexing.
#[derive(Debug, Clone, PartialEq)]
pub struct TsIssue {
    pub packet_index: u64,
    pub error: TsError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemuxOutput {
    /// Empty when no PAT/PMT was found.
    pub program: TsProgram,
    pub streams: BTreeMap<u16, DemuxedStream>,
    pub issues: Vec<TsIssue>,
    pub packets: u64,
    pub pcrs: Vec<(u64, u64)>,
}

impl DemuxOutput {
    pub fn video(&self) -> Option<&DemuxedStream> {
        self.streams.get(&self.program.video_pid()?)
    }

    pub fn continuity_errors(&self) -> impl Iterator<Item = &TsIssue> {
        self.issues.iter().filter(|i| matches!(i.error, TsError::ContinuityError { .. }))
    }
}

#[derive(Default)]
struct PidState {
    last_cc: Option<u8>,
    last_packet: Option<[u8; TS_PACKET_SIZE]>,
    buf: Vec<u8>,
}

/// Push-based demultiplexer accepting arbitrary chunk sizes.
pub struct TsDemuxer {
    mode: ParseMode,
    vvc_stream_type: u8,
    pending: Vec<u8>,
    consumed: u64,
    packet_index: u64,
    pmt_pid: Option<u16>,
    program: Option<TsProgram>,
    pids: HashMap<u16, PidState>,
    streams: BTreeMap<u16, DemuxedStream>,
    issues: Vec<TsIssue>,
    pcrs: Vec<(u64, u64)>,
}

impl TsDemuxer {
    pub fn new(mode: ParseMode, vvc_stream_type: u8) -> TsDemuxer {
        TsDemuxer {
            mode,
            vvc_stream_type,
            pending: Vec::new(),
            consumed: 0,
            packet_index: 0,
            pmt_pid: None,
            program: None,
            pids: HashMap::new(),
            streams: BTreeMap::new(),
            issues: Vec::new(),
            pcrs: Vec::new(),
        }
    }

    fn issue(&mut self, error: TsError) -> Result<(), TsError> {
        let hard = matches!(error, TsError::CrcMismatch { .. } | TsError::BadSync { .. }) && self.mode == ParseMode::Strict;
        if hard {
            return Err(error);
        }
        self.issues.push(TsIssue { packet_index: self.packet_index, error });
        Ok(())
    }

    pub fn push(&mut self, chunk: &[u8]) -> Result<(), TsError> {
        self.pending.extend_from_slice(chunk);
        let mut pos = 0;
        while self.pending.len() - pos >= TS_PACKET_SIZE {
            if self.pending[pos] != 0x47 {
                self.issue(TsError::BadSync { offset: self.consumed + pos as u64 })?;
                // resynchronise on a sync byte that has another one a packet later
                pos += 1;
                while pos < self.pending.len()
                    && !(self.pending[pos] == 0x47
                        && self.pending.get(pos + TS_PACKET_SIZE).map_or(true, |&b| b == 0x47))
                {
                    pos += 1;
                }
                continue;
            }
            let raw: [u8; TS_PACKET_SIZE] = self.pending[pos..pos + TS_PACKET_SIZE].try_into().expect("188");
            self.packet(&raw)?;
            self.packet_index += 1;
            pos += TS_PACKET_SIZE;
        }
        self.pending.drain(..pos);
        self.consumed += pos as u64;
        Ok(())
    }

    fn packet(&mut self, raw: &[u8; TS_PACKET_SIZE]) -> Result<(), TsError> {
        let pkt = match TsPacket::parse(raw) {
            Ok(p) => p,
            Err(e) => return self.issue(e),
        };
        if pkt.pid == NULL_PID {
            return Ok(());
        }
        if let Some(pcr) = pkt.adaptation.as_ref().and_then(|a| a.pcr) {
            self.pcrs.push((self.packet_index, pcr));
        }
        let discontinuity = pkt.adaptation.as_ref().is_some_and(|a| a.discontinuity);
        let state = self.pids.entry(pkt.pid).or_default();
        if !pkt.payload.is_empty() {
            if let Some(last) = state.last_cc {
                let expected = (last + 1) & 0x0F;
                if pkt.continuity_counter == last && state.last_packet.as_ref() == Some(raw) {
                    // duplicate packet
                    return Ok(());
                }
                if pkt.continuity_counter != expected && !discontinuity {
                    let e = TsError::ContinuityError {
                        pid: pkt.pid,
                        packet_index: self.packet_index,
                        expected,
                        found: pkt.continuity_counter,
                    };
                    self.issue(e)?;
                }
            }
            let state = self.pids.get_mut(&pkt.pid).expect("inserted");
            state.last_cc = Some(pkt.continuity_counter);
            state.last_packet = Some(*raw);
        }
        if pkt.pid == 0 || Some(pkt.pid) == self.pmt_pid {
            return self.psi_packet(&pkt);
        }
        if self.program.as_ref().is_some_and(|p| p.stream(pkt.pid).is_some()) {
            if pkt.payload_unit_start {
                self.flush_pes(pkt.pid)?;
            }
            let state = self.pids.get_mut(&pkt.pid).expect("inserted");
            if pkt.payload_unit_start || !state.buf.is_empty() {
                state.buf.extend_from_slice(&pkt.payload);
            }
        }
        Ok(())
    }

    fn psi_packet(&mut self, pkt: &TsPacket) -> Result<(), TsError> {
        let state = self.pids.get_mut(&pkt.pid).expect("inserted");
        if pkt.payload_unit_start {
            let Some(&pointer) = pkt.payload.first() else { return Ok(()) };
            state.buf.clear();
            state.buf.extend_from_slice(pkt.payload.get(1 + pointer as usize..).unwrap_or_default());
        } else if !state.buf.is_empty() {
            state.buf.extend_from_slice(&pkt.payload);
        }
        let Some(len) = section_len(&state.buf) else { return Ok(()) };
        if state.buf.len() < len {
            return Ok(());
        }
        let section = std::mem::take(&mut state.buf);
        let section = &section[..len];
        if pkt.pid == 0 {
            match parse_pat(section) {
                Ok(programs) => {
                    if let Some(&(_, pmt)) = programs.iter().find(|(n, _)| *n != 0) {
                        self.pmt_pid = Some(pmt);
                    }
                }
                Err(e) => self.issue(e)?,
            }
        } else {
            match parse_pmt(section, pkt.pid, self.vvc_stream_type) {
                Ok(p) => {
                    for s in &p.streams {
                        self.streams.entry(s.pid).or_default();
                    }
                    self.program = Some(p);
                }
                Err(e) => self.issue(e)?,
            }
        }
        Ok(())
    }

    fn flush_pes(&mut self, pid: u16) -> Result<(), TsError> {
        let Some(state) = self.pids.get_mut(&pid) else { return Ok(()) };
        if state.buf.is_empty() {
            return Ok(());
        }
        let buf = std::mem::take(&mut state.buf);
        let header = match parse_pes_header(&buf) {
            Ok(h) => h,
            Err(e) => return self.issue(e),
        };
        let mut payload = &buf[header.header_len..];
        if header.packet_length != 0 {
            let end = (6 + header.packet_length as usize).saturating_sub(header.header_len).min(payload.len());
            payload = &payload[..end];
        }
        let stream = self.streams.entry(pid).or_default();
        stream.pes.push(PesInfo { offset: stream.data.len(), len: payload.len(), pts: header.pts, dts: header.dts });
        stream.data.extend_from_slice(payload);
        Ok(())
    }

    /// Flush partial PES packets and return everything collected.
    pub fn finish(mut self) -> Result<DemuxOutput, TsError> {
        if !self.pending.is_empty() {
            let offset = self.consumed;
            self.issue(TsError::Malformed(format!("{} trailing bytes at {offset}", self.pending.len())))?;
        }
        let pids: Vec<u16> = self.streams.keys().copied().collect();
        for pid in pids {
            self.flush_pes(pid)?;
        }
        let program = self.program.unwrap_or(TsProgram { program_number: 0, pmt_pid: 0, pcr_pid: 0, streams: Vec::new() });
        Ok(DemuxOutput { program, streams: self.streams, issues: self.issues, packets: self.packet_index, pcrs: self.pcrs })
    }
}

/// Demultiplex a complete transport stream held in memory.
pub fn demux_ts(ts: &[u8], mode: ParseMode) -> Result<DemuxOutput, TsError> {
    let mut d = TsDemuxer::new(mode, VVC_STREAM_TYPE);
    d.push(ts)?;
    d.finish()
}

/// Rebuild the timed VVC elementary stream of a demultiplexed program.
///
/// Timing comes from the PES headers (90 kHz) when there is one PES per
/// access unit; otherwise `fallback_duration` ticks of 90 kHz per access unit
/// are assumed.
pub fn demux_to_elementary(out: &DemuxOutput, fallback_duration: u32) -> Result<ElementaryStream, TsError> {
    let pid = out.program.streams.iter().find(|s| s.kind == StreamKind::Vvc).map(|s| s.pid).ok_or(TsError::NoVvcStream)?;
    let stream = &out.streams[&pid];
    let nal_err = |e: crate::nalio::NalError| TsError::Malformed(format!("video elementary stream: {e}"));
    let scan = scan_annex_b_with(&stream.data, ParseMode::Lenient).map_err(nal_err)?;
    let mut aus = assemble_access_units(&scan.nals).map_err(nal_err)?;
    let dts: Vec<u64> = stream.pes.iter().filter_map(|p| p.dts).collect();
    let pts: Vec<u64> = stream.pes.iter().filter_map(|p| p.pts).collect();
    let timed = dts.len() == aus.len() && pts.len() == aus.len() && !aus.is_empty();
    let base = if timed { dts[0] } else { 0 };
    for (i, au) in aus.iter_mut().enumerate() {
        au.timing = Some(if timed {
            let duration = match dts.get(i + 1) {
                Some(&next) => next.saturating_sub(dts[i]) as u32,
                None if i > 0 => (dts[i] - dts[i - 1]) as u32,
                None => fallback_duration,
            };
            AuTiming { dts: dts[i] - base, pts: pts[i].saturating_sub(base), duration }
        } else {
            let t = i as u64 * fallback_duration as u64;
            AuTiming { dts: t, pts: t, duration: fallback_duration }
        });
    }
    Ok(ElementaryStream { timescale: 90_000, aus })
}
