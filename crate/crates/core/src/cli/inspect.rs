//! Stream inspection report.

use std::fmt::Write;

use serde::Serialize;

use crate::isobmff::extract_elementary_stream;
use crate::mpegts::{demux_to_elementary, demux_ts};
use crate::nalio::nal::type_name;
use crate::nalio::{
    assemble_access_units, probe_format, scan_annex_b_with, sps_from_nal, write_annex_b, ContainerKind,
    ElementaryStream, FrameRate, NalError, NalUnit, ParseMode, PROBE_LEN,
};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Depth {
    Summary,
    Deep,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NalRecord {
    pub offset: usize,
    pub size: usize,
    pub nal_unit_type: u8,
    pub type_name: &'static str,
    pub layer_id: u8,
    pub temporal_id: u8,
    pub category: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuRecord {
    pub index: usize,
    pub irap: bool,
    pub nal_count: usize,
    pub size: usize,
    pub dts: u64,
    pub pts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamSummary {
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub profile_idc: Option<u8>,
    pub tier: Option<&'static str>,
    pub level_idc: Option<u8>,
    pub bit_depth: Option<u8>,
    pub chroma_format_idc: Option<u8>,
    pub access_units: usize,
    pub nal_units: usize,
    pub irap_count: usize,
    /// Distance in access units between IRAPs when it is constant.
    pub irap_period: Option<usize>,
    pub timescale: u32,
    pub duration_ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InspectReport {
    pub container: String,
    pub summary: StreamSummary,
    pub access_units: Vec<AuRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nal_units: Option<Vec<NalRecord>>,
    pub warnings: Vec<String>,
}

/// Annex B bytes plus container timing, for any supported input.
fn annex_b_view(
    data: &[u8],
    kind: ContainerKind,
    rate: FrameRate,
    warnings: &mut Vec<String>,
) -> Result<(Vec<u8>, Option<ElementaryStream>), CliError> {
    Ok(match kind {
        ContainerKind::AnnexB | ContainerKind::Unknown => (data.to_vec(), None),
        ContainerKind::IsoBmff => {
            let x = extract_elementary_stream(data)?;
            let nals: Vec<NalUnit> = x.stream.nals().cloned().collect();
            (write_annex_b(&nals), Some(x.stream))
        }
        ContainerKind::Mpeg2Ts => {
            let out = demux_ts(data, ParseMode::Lenient)?;
            warnings.extend(out.issues.iter().map(|i| format!("packet {}: {}", i.packet_index, i.error)));
            let video = out.video().ok_or(crate::mpegts::TsError::NoVvcStream)?;
            let dur = (90_000u64 * rate.den as u64 / rate.num as u64) as u32;
            (video.data.clone(), Some(demux_to_elementary(&out, dur)?))
        }
    })
}

pub fn inspect(
    data: &[u8],
    format: Option<ContainerKind>,
    depth: Depth,
    mode: ParseMode,
    rate: FrameRate,
) -> Result<InspectReport, CliError> {
    if data.is_empty() {
        return Err(NalError::NoStartCodeFound.into());
    }
    let kind = format.unwrap_or_else(|| probe_format(&data[..data.len().min(PROBE_LEN)], data.len() as u64));
    let mut warnings = Vec::new();
    let (bytes, timed) = annex_b_view(data, kind, rate, &mut warnings)?;
    let scan = scan_annex_b_with(&bytes, mode)?;
    warnings.extend(scan.warnings);
    let aus = assemble_access_units(&scan.nals)?;
    let es = match timed {
        Some(t) if t.aus.len() == aus.len() => ElementaryStream { timescale: t.timescale, aus: t.aus },
        _ => ElementaryStream::with_frame_rate(aus, rate),
    };

    let sps = scan.nals.iter().find(|n| n.nal_unit_type() == crate::nalio::nal::SPS_NUT).map(sps_from_nal);
    let sps = match sps {
        Some(Ok(s)) => Some(s),
        Some(Err(e)) => {
            warnings.push(format!("SPS not understood: {e}"));
            None
        }
        None => None,
    };
    let irap: Vec<usize> = es.aus.iter().enumerate().filter(|(_, a)| a.is_irap).map(|(i, _)| i).collect();
    let gaps: Vec<usize> = irap.windows(2).map(|w| w[1] - w[0]).collect();
    let irap_period = gaps.first().copied().filter(|g| gaps.iter().all(|x| x == g));

    let summary = StreamSummary {
        width: sps.as_ref().map(|s| s.width_luma),
        height: sps.as_ref().map(|s| s.height_luma),
        profile_idc: sps.as_ref().and_then(|s| s.ptl.as_ref()).map(|p| p.profile_idc),
        tier: sps.as_ref().and_then(|s| s.ptl.as_ref()).map(|p| if p.tier_flag { "High" } else { "Main" }),
        level_idc: sps.as_ref().and_then(|s| s.ptl.as_ref()).map(|p| p.level_idc),
        bit_depth: sps.as_ref().map(|s| s.bit_depth),
        chroma_format_idc: sps.as_ref().map(|s| s.chroma_format_idc),
        access_units: es.aus.len(),
        nal_units: scan.nals.len(),
        irap_count: irap.len(),
        irap_period,
        timescale: es.timescale,
        duration_ticks: es.duration_ticks(),
    };
    let access_units = es
        .aus
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let t = es.timing(i);
            AuRecord { index: i, irap: a.is_irap, nal_count: a.nals.len(), size: a.payload_size(), dts: t.dts, pts: t.pts }
        })
        .collect();
    let nal_units = (depth == Depth::Deep).then(|| {
        scan.nals
            .iter()
            .map(|n| NalRecord {
                offset: n.offset,
                size: n.size(),
                nal_unit_type: n.nal_unit_type(),
                type_name: type_name(n.nal_unit_type()),
                layer_id: n.header.nuh_layer_id,
                temporal_id: n.header.temporal_id(),
                category: n.category().name(),
            })
            .collect()
    });
    Ok(InspectReport { container: kind.to_string(), summary, access_units, nal_units, warnings })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

impl InspectReport {
    pub fn to_text(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(out, "container:     {}", self.container);
        let _ = writeln!(out, "resolution:    {}x{}", opt(s.width), opt(s.height));
        let _ = writeln!(out, "profile:       {} tier {} level_idc {}", opt(s.profile_idc), opt(s.tier), opt(s.level_idc));
        let _ = writeln!(out, "bit depth:     {} chroma_format_idc {}", opt(s.bit_depth), opt(s.chroma_format_idc));
        let _ = writeln!(out, "access units:  {}", s.access_units);
        let _ = writeln!(out, "NAL units:     {}", s.nal_units);
        let _ = writeln!(out, "IRAP:          {} (period {})", s.irap_count, opt(s.irap_period));
        let _ = writeln!(
            out,
            "duration:      {} ticks @ {} Hz ({:.3} s)",
            s.duration_ticks,
            s.timescale,
            s.duration_ticks as f64 / s.timescale.max(1) as f64
        );
        out.push_str("\n   AU IRAP NALS     SIZE          DTS          PTS\n");
        for a in &self.access_units {
            let _ = writeln!(
                out,
                "{:>5} {:>4} {:>4} {:>8} {:>12} {:>12}",
                a.index,
                if a.irap { "*" } else { "" },
                a.nal_count,
                a.size,
                a.dts,
                a.pts
            );
        }
        if let Some(nals) = &self.nal_units {
            out.push_str("\n   OFFSET     SIZE TYPE NAME        LAYER TID CATEGORY\n");
            for n in nals {
                let _ = writeln!(
                    out,
                    "{:>9} {:>8} {:>4} {:<11} {:>5} {:>3} {}",
                    n.offset, n.size, n.nal_unit_type, n.type_name, n.layer_id, n.temporal_id, n.category
                );
            }
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}
