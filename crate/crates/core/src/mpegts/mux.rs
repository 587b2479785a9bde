//! Transport stream multiplexer.
//!
//! In constant-bitrate mode packet `n` occupies the wire from
//! `n * 1504 / rate` seconds. A PES becomes eligible at its decode time and
//! must be completely sent by decode time plus the mux delay, which is also
//! the offset added to every PTS/DTS. PCR values follow the byte position.

use std::collections::{HashMap, VecDeque};

use crate::nalio::{write_annex_b, ElementaryStream};

use super::packet::{Adaptation, TsPacket, TS_PACKET_SIZE};
use super::psi::{build_psi, section_packets};
use super::{TsError, TsProgram, AAC_STREAM_TYPE, DEFAULT_AUDIO_PID, DEFAULT_VIDEO_PID, VVC_STREAM_TYPE};

const CLOCK: u128 = 27_000_000;
const PACKET_BITS: u128 = (TS_PACKET_SIZE * 8) as u128;
/// Offset of the byte holding the last PCR base bit within a packet.
const PCR_BYTE: u128 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMode {
    /// Constant bitrate in bits per second, padded with null packets.
    Cbr(u64),
    Vbr,
}

impl std::str::FromStr for RateMode {
    type Err = String;

    /// `vbr`, a plain number of bit/s, or a number with a `k`/`m` suffix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        if t == "vbr" {
            return Ok(RateMode::Vbr);
        }
        let (num, mult) = match t.chars().last() {
            Some('k') => (&t[..t.len() - 1], 1_000.0),
            Some('m') => (&t[..t.len() - 1], 1_000_000.0),
            _ => (t.as_str(), 1.0),
        };
        let v: f64 = num.parse().map_err(|_| format!("bad rate {s:?}"))?;
        let bps = (v * mult).round();
        if !(bps >= 1.0) {
            return Err(format!("bad rate {s:?}"));
        }
        Ok(RateMode::Cbr(bps as u64))
    }
}

#[derive(Debug, Clone)]
pub struct MuxConfig {
    pub rate: RateMode,
    pub vvc_stream_type: u8,
    /// Decoder delay: PTS/DTS offset and delivery deadline, in milliseconds.
    pub delay_ms: u32,
    /// Maximum PSI and PCR repetition interval.
    pub psi_interval_ms: u32,
}

impl Default for MuxConfig {
    fn default() -> Self {
        MuxConfig { rate: RateMode::Cbr(10_000_000), vvc_stream_type: VVC_STREAM_TYPE, delay_ms: 700, psi_interval_ms: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedFrame {
    pub pts: u64,
    pub data: Vec<u8>,
}

/// Pass-through audio: one PES per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsAudio {
    pub stream_type: u8,
    pub timescale: u32,
    pub frames: Vec<TimedFrame>,
}

impl TsAudio {
    pub fn aac(timescale: u32, frames: Vec<TimedFrame>) -> TsAudio {
        TsAudio { stream_type: AAC_STREAM_TYPE, timescale, frames }
    }
}

struct Pes {
    pid: u16,
    data: Vec<u8>,
    pos: usize,
    /// 27 MHz times.
    release: u64,
    deadline: u64,
    random_access: bool,
    seq: usize,
}

/// Pull-based multiplexer yielding one packet at a time.
pub struct TsMuxer {
    program: TsProgram,
    pat: Vec<u8>,
    pmt: Vec<u8>,
    rate: Option<u64>,
    pending: VecDeque<Pes>,
    active: Vec<Pes>,
    queue: VecDeque<TsPacket>,
    cc: HashMap<u16, u8>,
    slot: u64,
    total_slots: u64,
    interval_slots: u64,
    interval_27m: u64,
    last_psi: Option<u64>,
    last_pcr: Option<u64>,
    failed: bool,
}

fn to_27m(ticks: u64, timescale: u32) -> u64 {
    (ticks as u128 * CLOCK / timescale as u128) as u64
}

fn to_90k(ticks: u64, timescale: u32) -> u64 {
    (ticks as u128 * 90_000 / timescale as u128) as u64
}

impl TsMuxer {
    pub fn new(video: &ElementaryStream, audio: Option<&TsAudio>, cfg: &MuxConfig) -> Result<TsMuxer, TsError> {
        if !video.aus.first().is_some_and(|a| a.is_irap) {
            return Err(TsError::Malformed("stream must start with an IRAP access unit".into()));
        }
        if video.timescale == 0 || audio.is_some_and(|a| a.timescale == 0) {
            return Err(TsError::Malformed("zero timescale".into()));
        }
        let program = TsProgram::standard(cfg.vvc_stream_type, audio.map(|a| a.stream_type));
        let (pat, pmt) = build_psi(&program, 0)?;
        let delay_27m = cfg.delay_ms as u64 * 27_000;
        let delay_90k = cfg.delay_ms as u64 * 90;

        let mut pes = Vec::new();
        let mut last_dts = 0;
        for (i, au) in video.aus.iter().enumerate() {
            let t = video.timing(i);
            if t.dts < last_dts {
                return Err(TsError::Malformed(format!("decode time of access unit {i} goes backwards")));
            }
            last_dts = t.dts;
            let payload = write_annex_b(&au.nals);
            let data = super::build_pes(
                0xE0,
                to_90k(t.pts, video.timescale) + delay_90k,
                to_90k(t.dts, video.timescale) + delay_90k,
                &payload,
                false,
            );
            let release = to_27m(t.dts, video.timescale);
            pes.push(Pes {
                pid: DEFAULT_VIDEO_PID,
                data,
                pos: 0,
                release,
                deadline: release + delay_27m,
                random_access: au.is_irap,
                seq: 0,
            });
        }
        let mut end_27m = to_27m(video.duration_ticks(), video.timescale);
        if let Some(a) = audio {
            for f in &a.frames {
                let ts = to_90k(f.pts, a.timescale) + delay_90k;
                let release = to_27m(f.pts, a.timescale);
                pes.push(Pes {
                    pid: DEFAULT_AUDIO_PID,
                    data: super::build_pes(0xC0, ts, ts, &f.data, true),
                    pos: 0,
                    release,
                    deadline: release + delay_27m,
                    random_access: true,
                    seq: 0,
                });
            }
            if let (Some(last), Some(prev)) = (a.frames.last(), a.frames.iter().rev().nth(1)) {
                end_27m = end_27m.max(to_27m(2 * last.pts - prev.pts, a.timescale));
            }
        }
        pes.sort_by_key(|p| (p.release, p.pid));
        for (i, p) in pes.iter_mut().enumerate() {
            p.seq = i;
        }

        let interval_27m = cfg.psi_interval_ms as u64 * 27_000;
        let (rate, total_slots, interval_slots) = match cfg.rate {
            RateMode::Cbr(r) => {
                let r128 = r as u128;
                let total = (end_27m as u128 * r128 + PACKET_BITS * CLOCK / 2) / (PACKET_BITS * CLOCK);
                // packets per interval, with room for the PSI pair delaying a PCR
                let per = (cfg.psi_interval_ms as u128 * r128 / (PACKET_BITS * 1000)) as u64;
                (Some(r), total as u64, per.saturating_sub(2).max(1))
            }
            RateMode::Vbr => (None, 0, 0),
        };
        Ok(TsMuxer {
            program,
            pat,
            pmt,
            rate,
            pending: pes.into(),
            active: Vec::new(),
            queue: VecDeque::new(),
            cc: HashMap::new(),
            slot: 0,
            total_slots,
            interval_slots,
            interval_27m,
            last_psi: None,
            last_pcr: None,
            failed: false,
        })
    }

    pub fn program(&self) -> &TsProgram {
        &self.program
    }

    /// Number of packets a CBR stream is planned to have (it grows only when
    /// data is still pending at the end).
    pub fn planned_packets(&self) -> u64 {
        self.total_slots
    }

    fn next_cc(&mut self, pid: u16) -> u8 {
        let c = self.cc.entry(pid).or_insert(0);
        let v = *c;
        *c = (*c + 1) & 0x0F;
        v
    }

    fn queue_psi(&mut self) {
        let mut cc = *self.cc.get(&0).unwrap_or(&0);
        self.queue.extend(section_packets(0, &self.pat, &mut cc));
        self.cc.insert(0, cc);
        let pmt_pid = self.program.pmt_pid;
        let mut cc = *self.cc.get(&pmt_pid).unwrap_or(&0);
        self.queue.extend(section_packets(pmt_pid, &self.pmt, &mut cc));
        self.cc.insert(pmt_pid, cc);
    }

    fn slot_pcr(&self, slot: u64) -> u64 {
        let rate = self.rate.expect("cbr") as u128;
        ((slot as u128 * TS_PACKET_SIZE as u128 + PCR_BYTE) * 8 * CLOCK / rate) as u64
    }

    /// True when data released at `t` (27 MHz) may go into packet `slot`.
    fn released(&self, t: u64, slot: u64) -> bool {
        match self.rate {
            Some(r) => t as u128 * r as u128 <= slot as u128 * PACKET_BITS * CLOCK,
            None => true,
        }
    }

    fn activate(&mut self) {
        while let Some(p) = self.pending.front() {
            if !self.released(p.release, self.slot) {
                break;
            }
            let p = self.pending.pop_front().expect("front");
            self.active.push(p);
        }
    }

    /// Index into `active` of the PES to serve next (earliest deadline first).
    fn pick(&self) -> Option<usize> {
        self.active.iter().enumerate().min_by_key(|(_, p)| (p.deadline, p.seq)).map(|(i, _)| i)
    }

    fn data_packet(&mut self, idx: usize, pcr: Option<u64>) -> Result<TsPacket, TsError> {
        let first = self.active[idx].pos == 0;
        let random_access = first && self.active[idx].random_access;
        let adaptation = (pcr.is_some() || random_access).then(|| Adaptation { discontinuity: false, random_access, pcr });
        let cap = TsPacket::capacity(adaptation.as_ref());
        let pid = self.active[idx].pid;
        let cc = self.next_cc(pid);
        let p = &mut self.active[idx];
        let n = cap.min(p.data.len() - p.pos);
        let payload = p.data[p.pos..p.pos + n].to_vec();
        p.pos += n;
        if p.pos == p.data.len() {
            let done = self.active.remove(idx);
            if let Some(r) = self.rate {
                let end = (self.slot as u128 + 1) * PACKET_BITS * CLOCK;
                if end > done.deadline as u128 * r as u128 {
                    return Err(TsError::RateExceeded { timestamp_s: done.release as f64 / CLOCK as f64, rate_bps: r });
                }
            }
        }
        Ok(TsPacket { pid, payload_unit_start: first, continuity_counter: cc, adaptation, payload })
    }

    fn next_cbr(&mut self) -> Option<Result<TsPacket, TsError>> {
        self.activate();
        if self.pending.is_empty() && self.active.is_empty() && self.queue.is_empty() && self.slot >= self.total_slots {
            return None;
        }
        let n = self.slot;
        let interval = self.interval_slots;
        let due = |last: Option<u64>| last.map_or(true, |l| n - l >= interval);
        let pkt = if let Some(p) = self.queue.pop_front() {
            Ok(p)
        } else if due(self.last_pcr) && self.last_psi.is_some() {
            self.last_pcr = Some(n);
            let pcr = self.slot_pcr(n);
            let pcr_pid = self.program.pcr_pid;
            match self.pick() {
                Some(i) if self.active[i].pid == pcr_pid => self.data_packet(i, Some(pcr)),
                _ => Ok(TsPacket {
                    pid: pcr_pid,
                    payload_unit_start: false,
                    continuity_counter: *self.cc.get(&pcr_pid).unwrap_or(&0),
                    adaptation: Some(Adaptation { pcr: Some(pcr), ..Default::default() }),
                    payload: Vec::new(),
                }),
            }
        } else if due(self.last_psi) {
            self.last_psi = Some(n);
            self.queue_psi();
            Ok(self.queue.pop_front().expect("PSI queued"))
        } else if let Some(i) = self.pick() {
            self.data_packet(i, None)
        } else {
            Ok(TsPacket::null())
        };
        self.slot += 1;
        Some(pkt)
    }

    fn next_vbr(&mut self) -> Option<Result<TsPacket, TsError>> {
        if let Some(p) = self.queue.pop_front() {
            return Some(Ok(p));
        }
        self.activate();
        let i = self.pick()?;
        let now = self.active[i].release;
        let interval = self.interval_27m;
        if self.last_psi.map_or(true, |l| now.saturating_sub(l) >= interval) {
            self.last_psi = Some(now);
            self.queue_psi();
            return self.queue.pop_front().map(Ok);
        }
        let starts_pcr_pes = self.active[i].pos == 0 && self.active[i].pid == self.program.pcr_pid;
        let pcr = starts_pcr_pes.then_some(now);
        if pcr.is_some() {
            self.last_pcr = Some(now);
        }
        Some(self.data_packet(i, pcr))
    }
}

impl Iterator for TsMuxer {
    type Item = Result<[u8; TS_PACKET_SIZE], TsError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let r = if self.rate.is_some() { self.next_cbr() } else { self.next_vbr() }?;
        if r.is_err() {
            self.failed = true;
        }
        Some(r.map(|p| p.serialize()))
    }
}

/// Multiplex a video stream (and optional audio) into a single-program TS.
pub fn mux_ts(video: &ElementaryStream, audio: Option<&TsAudio>, cfg: &MuxConfig) -> Result<Vec<u8>, TsError> {
    let mux = TsMuxer::new(video, audio, cfg)?;
    let mut out = Vec::with_capacity(mux.planned_packets() as usize * TS_PACKET_SIZE);
    for p in mux {
        out.extend_from_slice(&p?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpegts::{TsPacket, NULL_PID};
    use crate::nalio::FrameRate;
    use crate::synth::{generate_annex_b, SynthConfig};

    fn es(frames: usize) -> ElementaryStream {
        let cfg = SynthConfig { frames, idr_period: 25, idr_bytes: 20_000, trail_bytes: 3_000, ..Default::default() };
        ElementaryStream::from_annex_b(&generate_annex_b(&cfg), FrameRate::new(25, 1)).unwrap()
    }

    fn is_null(p: &[u8]) -> bool {
        (u16::from(p[1] & 0x1F) << 8 | u16::from(p[2])) == NULL_PID
    }

    fn packets(ts: &[u8]) -> Vec<TsPacket> {
        ts.chunks(188).map(|c| TsPacket::parse(c).unwrap()).collect()
    }

    #[test]
    fn one_second_at_ten_megabit() {
        let ts = mux_ts(&es(25), None, &MuxConfig::default()).unwrap();
        assert_eq!(ts.len() % 188, 0);
        assert!((ts.len() as i64 - 1_250_000).abs() <= 188, "{}", ts.len());
    }

    #[test]
    fn continuity_and_pcr_spacing() {
        let cfg = MuxConfig { rate: RateMode::Cbr(2_000_000), ..Default::default() };
        let ts = mux_ts(&es(50), None, &cfg).unwrap();
        let pk = packets(&ts);
        let mut last_cc: HashMap<u16, u8> = HashMap::new();
        let mut last_pcr: Option<(usize, u64)> = None;
        let mut last_pat = None;
        for (i, p) in pk.iter().enumerate() {
            if p.pid != NULL_PID && !p.payload.is_empty() {
                if let Some(&c) = last_cc.get(&p.pid) {
                    assert_eq!(p.continuity_counter, (c + 1) & 15, "pid {} packet {i}", p.pid);
                }
                last_cc.insert(p.pid, p.continuity_counter);
            }
            if let Some(pcr) = p.adaptation.as_ref().and_then(|a| a.pcr) {
                if let Some((j, prev)) = last_pcr {
                    let expected = ((i - j) as u64 * 1504 * 27_000_000) / 2_000_000;
                    assert!((pcr - prev).abs_diff(expected) <= 500);
                    assert!(pcr - prev <= 2_700_000 + 500, "PCR gap at {i}");
                }
                last_pcr = Some((i, pcr));
            }
            if p.pid == 0 {
                if let Some(j) = last_pat {
                    assert!((i - j) as u64 * 1504 <= 200_000, "PAT gap at {i}");
                }
                last_pat = Some(i);
            }
        }
    }

    #[test]
    fn rate_exceeded_reports_timestamp() {
        let cfg = MuxConfig { rate: RateMode::Cbr(200_000), ..Default::default() };
        match mux_ts(&es(25), None, &cfg) {
            Err(TsError::RateExceeded { timestamp_s, rate_bps }) => {
                assert_eq!(rate_bps, 200_000);
                assert!(timestamp_s >= 0.0 && timestamp_s < 1.0);
            }
            other => panic!("expected RateExceeded, got {other:?}"),
        }
    }

    #[test]
    fn vbr_has_no_null_packets() {
        let cfg = MuxConfig { rate: RateMode::Vbr, ..Default::default() };
        let ts = mux_ts(&es(30), None, &cfg).unwrap();
        assert!(!ts.chunks(188).any(is_null));
        let pcrs: Vec<u64> = packets(&ts).iter().filter_map(|p| p.adaptation.as_ref().and_then(|a| a.pcr)).collect();
        assert_eq!(pcrs.len(), 30);
        assert!(pcrs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rate_parsing() {
        assert_eq!("10m".parse::<RateMode>().unwrap(), RateMode::Cbr(10_000_000));
        assert_eq!("2.5M".parse::<RateMode>().unwrap(), RateMode::Cbr(2_500_000));
        assert_eq!("vbr".parse::<RateMode>().unwrap(), RateMode::Vbr);
        assert!("fast".parse::<RateMode>().is_err());
    }
}
