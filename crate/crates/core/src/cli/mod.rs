//! The `vvcsys` command line.
//!
//! Every command reads a file or `-` for standard input and writes a file or
//! `-` for standard output, so commands compose through pipes.

mod inspect;

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::dashhls::{load_elementary_stream, package_presentation, DashError, OutputKind, PackageOptions, Profile};
use crate::isobmff::{extract_annex_b, package_progressive, Mp4Error, SampleEntryKind};
use crate::mpegts::{demux_ts, mux_ts, MuxConfig, RateMode, TsError, TsMuxer, TsPacket, TS_PACKET_SIZE};
use crate::nalio::{probe_format, ContainerKind, FrameRate, NalError, ParseMode, PROBE_LEN};
use crate::serve::{http_serve, udp_emit, Clock, LiveSession, Origin, ServeError, SystemClock};
use crate::synth::{generate_annex_b, SynthConfig};

pub use inspect::{inspect, AuRecord, Depth, InspectReport, NalRecord, StreamSummary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Nal(#[from] NalError),
    #[error(transparent)]
    Mp4(#[from] Mp4Error),
    #[error(transparent)]
    Ts(#[from] TsError),
    #[error(transparent)]
    Dash(#[from] DashError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &str) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_owned(), source }
}

#[derive(Debug, Parser)]
#[command(name = "vvcsys", version, about = "VVC elementary stream, MP4, MPEG-2 TS, DASH and HLS toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input file, or `-` for standard input.
    pub input: String,
    /// Skip probing and read the input as annexb, mp4 or ts.
    #[arg(long)]
    pub format: Option<ContainerKind>,
    /// Frame rate for raw Annex B input, e.g. 25 or 30000/1001.
    #[arg(long, default_value = "25")]
    pub fps: FrameRate,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the detected container kind.
    Probe {
        input: String,
    },
    /// Report stream properties, access units and (deep) every NAL unit.
    Inspect {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "summary")]
        depth: Depth,
        #[arg(long, default_value = "text", value_parser = ["text", "json"])]
        output: String,
        /// Fail on recoverable irregularities instead of warning.
        #[arg(long)]
        strict: bool,
    },
    /// Wrap an elementary stream into a progressive MP4.
    Package {
        #[command(flatten)]
        input: InputArgs,
        #[arg(short, long, default_value = "-")]
        out: String,
        /// vvc1 (parameter sets in the sample entry) or vvc2 (also in-band).
        #[arg(long, default_value = "vvc1")]
        entry: SampleEntryKind,
    },
    /// Write the VVC track of an MP4 (or TS) as an Annex B stream.
    Extract {
        input: String,
        #[arg(short, long, default_value = "-")]
        out: String,
    },
    /// Multiplex into an MPEG-2 transport stream.
    MuxTs {
        #[command(flatten)]
        input: InputArgs,
        #[arg(short, long, default_value = "-")]
        out: String,
        /// Constant bit rate such as 10m, or vbr.
        #[arg(long, default_value = "10m")]
        rate: RateMode,
        /// PMT stream_type for VVC.
        #[arg(long, value_parser = parse_u8, default_value = "0x33")]
        stream_type: u8,
        #[arg(long, default_value_t = 700)]
        delay_ms: u32,
    },
    /// Recover the video elementary stream of a transport stream.
    DemuxTs {
        input: String,
        #[arg(short, long, default_value = "-")]
        out: String,
        #[arg(long)]
        strict: bool,
    },
    /// Package for DASH. `--out dir/vod.mpd:dual` also writes HLS playlists.
    Dash(PackageArgs),
    /// Package for HLS over fragmented MP4.
    Hls(PackageArgs),
    /// HTTP origin over a directory, or a live session from a stream.
    Serve(ServeArgs),
    /// Send a transport stream over UDP at a constant rate.
    Udp {
        #[command(flatten)]
        input: InputArgs,
        /// Destination host:port.
        #[arg(long, default_value = "127.0.0.1:1234")]
        dest: String,
        #[arg(long, default_value = "10m")]
        rate: RateMode,
    },
    /// Generate a synthetic VVC Annex B stream.
    Synth {
        #[arg(short, long, default_value = "-")]
        out: String,
        #[arg(long, default_value_t = 250)]
        frames: usize,
        #[arg(long, default_value_t = 50)]
        idr_period: usize,
        #[arg(long, default_value_t = 416)]
        width: u32,
        #[arg(long, default_value_t = 240)]
        height: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct PackageArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Manifest path; a `:dual` suffix adds the other manifest kind.
    #[arg(short, long)]
    pub out: String,
    /// Target segment duration in milliseconds.
    #[arg(long, default_value_t = 2000)]
    pub duration: u32,
    #[arg(long, default_value = "ondemand")]
    pub profile: Profile,
    /// Live profile: SegmentTimeline addressing.
    #[arg(long)]
    pub timeline: bool,
    #[arg(long)]
    pub dual: bool,
    #[arg(long, default_value = "vvc1")]
    pub entry: SampleEntryKind,
    /// Override the codecs string.
    #[arg(long)]
    pub codecs: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory to serve, or a stream to publish live.
    pub input: String,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long)]
    pub format: Option<ContainerKind>,
    #[arg(long, default_value = "25")]
    pub fps: FrameRate,
    #[arg(long, default_value_t = 2000)]
    pub duration: u32,
    /// Seconds segments are announced ahead of their end.
    #[arg(long, default_value_t = 0.0)]
    pub asto: f64,
    /// Restart the stream when it ends, with continuous timestamps.
    #[arg(long = "loop")]
    pub looping: bool,
    /// Use SegmentTemplate@duration instead of a SegmentTimeline.
    #[arg(long)]
    pub template: bool,
    #[arg(long, default_value = "live.mpd")]
    pub manifest: String,
    /// Stop after this many seconds instead of running until interrupted.
    #[arg(long)]
    pub run_for: Option<f64>,
}

fn parse_u8(s: &str) -> Result<u8, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u8::from_str_radix(h, 16),
        None => s.parse(),
    };
    r.map_err(|_| format!("invalid byte value {s:?}"))
}

/// Standard streams and clock used by a command run.
pub struct Io<'a> {
    pub stdin: &'a mut dyn Read,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
    pub clock: Arc<dyn Clock>,
}

impl Io<'_> {
    fn read(&mut self, path: &str) -> Result<Vec<u8>, CliError> {
        if path == "-" {
            let mut buf = Vec::new();
            self.stdin.read_to_end(&mut buf).map_err(io_err("<stdin>"))?;
            Ok(buf)
        } else {
            std::fs::read(path).map_err(io_err(path))
        }
    }

    fn write(&mut self, path: &str, data: &[u8]) -> Result<(), CliError> {
        if path == "-" {
            self.stdout.write_all(data).and_then(|_| self.stdout.flush()).map_err(io_err("<stdout>"))
        } else {
            if let Some(dir) = Path::new(path).parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(io_err(path))?;
            }
            std::fs::write(path, data).map_err(io_err(path))
        }
    }

    fn note(&mut self, msg: &str) {
        let _ = writeln!(self.stderr, "{msg}");
    }
}

fn probe(data: &[u8], format: Option<ContainerKind>) -> ContainerKind {
    format.unwrap_or_else(|| probe_format(&data[..data.len().min(PROBE_LEN)], data.len() as u64))
}

/// Run with the process's standard streams and the system clock.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let (stdin, stdout, stderr) = (std::io::stdin(), std::io::stdout(), std::io::stderr());
    let (mut i, mut o, mut e) = (stdin.lock(), stdout.lock(), stderr.lock());
    let mut io = Io { stdin: &mut i, stdout: &mut o, stderr: &mut e, clock: Arc::new(SystemClock) };
    run(args, &mut io)
}

/// Parse arguments and run one command. Returns the process exit code:
/// 0 on success, 2 when warnings were reported, 1 on error.
pub fn run<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(io.stderr, "{text}");
            } else {
                let _ = write!(io.stdout, "{text}");
            }
            return code;
        }
    };
    match execute(cli.command, io) {
        Ok(code) => code,
        Err(e) => {
            io.note(&format!("error: {e}"));
            1
        }
    }
}

fn warn_code(io: &mut Io<'_>, warnings: &[String]) -> i32 {
    for w in warnings {
        io.note(&format!("warning: {w}"));
    }
    if warnings.is_empty() {
        0
    } else {
        2
    }
}

fn execute(cmd: Command, io: &mut Io<'_>) -> Result<i32, CliError> {
    match cmd {
        Command::Probe { input } => {
            let data = io.read(&input)?;
            let kind = probe(&data, None);
            io.write("-", format!("{kind}\n").as_bytes())?;
            Ok(if kind == ContainerKind::Unknown { 1 } else { 0 })
        }
        Command::Inspect { input, depth, output, strict } => {
            let data = io.read(&input.input)?;
            let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
            let report = inspect(&data, input.format, depth, mode, input.fps)?;
            let text = if output == "json" {
                let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
                s.push('\n');
                s
            } else {
                report.to_text()
            };
            io.write("-", text.as_bytes())?;
            Ok(if report.warnings.is_empty() { 0 } else { 2 })
        }
        Command::Package { input, out, entry } => {
            let data = io.read(&input.input)?;
            let es = load_elementary_stream(&data, input.format, input.fps)?;
            let mp4 = package_progressive(&es, entry, None)?;
            io.write(&out, &mp4)?;
            Ok(0)
        }
        Command::Extract { input, out } => {
            let data = io.read(&input)?;
            let es = match probe(&data, None) {
                ContainerKind::IsoBmff => extract_annex_b(&data)?,
                ContainerKind::Mpeg2Ts => {
                    let d = demux_ts(&data, ParseMode::Lenient)?;
                    d.video().ok_or(TsError::NoVvcStream)?.data.clone()
                }
                ContainerKind::AnnexB => data,
                ContainerKind::Unknown => return Err(CliError::Usage("input is not MP4, TS or Annex B".into())),
            };
            io.write(&out, &es)?;
            Ok(0)
        }
        Command::MuxTs { input, out, rate, stream_type, delay_ms } => {
            let data = io.read(&input.input)?;
            let es = load_elementary_stream(&data, input.format, input.fps)?;
            let cfg = MuxConfig { rate, vvc_stream_type: stream_type, delay_ms, ..MuxConfig::default() };
            let ts = mux_ts(&es, None, &cfg)?;
            io.write(&out, &ts)?;
            Ok(0)
        }
        Command::DemuxTs { input, out, strict } => {
            let data = io.read(&input)?;
            let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
            let d = demux_ts(&data, mode)?;
            let video = d.video().ok_or(TsError::NoVvcStream)?;
            io.write(&out, &video.data)?;
            let warnings: Vec<String> = d.issues.iter().map(|i| format!("packet {}: {}", i.packet_index, i.error)).collect();
            Ok(warn_code(io, &warnings))
        }
        Command::Dash(args) => package_cmd(args, OutputKind::Dash, io),
        Command::Hls(args) => package_cmd(args, OutputKind::Hls, io),
        Command::Serve(args) => serve_cmd(args, io),
        Command::Udp { input, dest, rate } => {
            let data = io.read(&input.input)?;
            let RateMode::Cbr(bps) = rate else {
                return Err(CliError::Usage("udp needs a constant rate such as 10m".into()));
            };
            let stats = if probe(&data, input.format) == ContainerKind::Mpeg2Ts {
                if data.len() % TS_PACKET_SIZE != 0 {
                    return Err(CliError::Usage("transport stream length is not a multiple of 188".into()));
                }
                let packets = data.chunks(TS_PACKET_SIZE).map(|c| {
                    TsPacket::parse(c)?;
                    Ok(<[u8; TS_PACKET_SIZE]>::try_from(c).expect("188 bytes"))
                });
                udp_emit(packets, bps, &dest)?
            } else {
                let es = load_elementary_stream(&data, input.format, input.fps)?;
                let mux = TsMuxer::new(&es, None, &MuxConfig { rate, ..MuxConfig::default() })?;
                udp_emit(mux, bps, &dest)?
            };
            io.note(&format!(
                "sent {} datagrams, {} bytes in {:.3} s to {dest}",
                stats.datagrams,
                stats.bytes,
                stats.elapsed.as_secs_f64()
            ));
            Ok(0)
        }
        Command::Synth { out, frames, idr_period, width, height, seed } => {
            let cfg = SynthConfig { frames, idr_period, width, height, seed, ..SynthConfig::default() };
            io.write(&out, &generate_annex_b(&cfg))?;
            Ok(0)
        }
    }
}

fn package_cmd(args: PackageArgs, default: OutputKind, io: &mut Io<'_>) -> Result<i32, CliError> {
    let (path, dual) = match args.out.strip_suffix(":dual") {
        Some(p) => (p.to_owned(), true),
        None => (args.out.clone(), args.dual),
    };
    let path = PathBuf::from(path);
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CliError::Usage(format!("bad output path {:?}", args.out)))?
        .to_owned();
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let data = io.read(&args.input.input)?;
    let es = load_elementary_stream(&data, args.input.format, args.input.fps)?;
    let opts = PackageOptions {
        target_dur_ms: args.duration,
        profile: args.profile,
        timeline: args.timeline,
        output: if dual { OutputKind::Dual } else { default },
        kind: args.entry,
        name,
        codecs: args.codecs,
        live: None,
    };
    let report = package_presentation(&es, &opts)?;
    let paths = report.write_to(if dir.as_os_str().is_empty() { Path::new(".") } else { &dir })?;
    io.note(&format!("{} segments, {} files written to {}", report.plan.segments.len(), paths.len(), dir.display()));
    Ok(0)
}

fn serve_cmd(args: ServeArgs, io: &mut Io<'_>) -> Result<i32, CliError> {
    let input = Path::new(&args.input);
    let (origin, url) = if input.is_dir() {
        (Origin::new(Some(input.to_path_buf()), None, Arc::clone(&io.clock)), String::new())
    } else {
        let data = io.read(&args.input)?;
        let es = load_elementary_stream(&data, args.format, args.fps)?;
        let opts = PackageOptions {
            target_dur_ms: args.duration,
            profile: Profile::Live,
            timeline: !args.template,
            output: OutputKind::Dual,
            ..PackageOptions::default()
        };
        let report = package_presentation(&es, &opts)?;
        let mut session = LiveSession::new(&report, io.clock.now(), args.asto)
            .with_loop(args.looping)
            .with_timeline(!args.template);
        session.manifest_name = args.manifest.clone();
        (Origin::new(None, Some(Arc::new(session)), Arc::clone(&io.clock)), args.manifest.clone())
    };
    let handle = http_serve(origin, &args.addr)?;
    io.note(&format!("serving http://{}/{url}", handle.addr()));
    match args.run_for {
        Some(secs) => {
            std::thread::sleep(std::time::Duration::from_secs_f64(secs.max(0.0)));
            handle.shutdown();
        }
        None => handle.wait(),
    }
    Ok(0)
}
