//! HTTP/1.1 origin with byte-range support and per-request live manifests.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use tiny_http::{Header, Response, Server};

use super::{Clock, LiveSession, ServeError};

const WORKERS: usize = 4;

pub fn content_type(path: &str) -> &'static str {
    match path.rsplit_once('.').map(|(_, ext)| ext.to_ascii_lowercase()).as_deref() {
        Some("mpd") => "application/dash+xml",
        Some("m3u8") => "application/vnd.apple.mpegurl",
        Some("mp4") => "video/mp4",
        Some("m4s") => "video/iso.segment",
        Some("ts") => "video/mp2t",
        Some("vvc" | "266") => "video/vvc",
        _ => "application/octet-stream",
    }
}

/// Parse a single `bytes=` range against a body of `len` bytes.
/// `Some(Err(()))` means unsatisfiable; `None` means no usable range header.
pub fn parse_range(header: &str, len: u64) -> Option<Result<(u64, u64), ()>> {
    let spec = header.trim().strip_prefix("bytes=")?;
    if spec.contains(',') {
        return None;
    }
    let (a, b) = spec.split_once('-')?;
    let (a, b) = (a.trim(), b.trim());
    let range = if a.is_empty() {
        let n: u64 = b.parse().ok()?;
        if n == 0 || len == 0 {
            return Some(Err(()));
        }
        (len.saturating_sub(n), len - 1)
    } else {
        let start: u64 = a.parse().ok()?;
        let end = if b.is_empty() { len.saturating_sub(1) } else { b.parse::<u64>().ok()?.min(len.saturating_sub(1)) };
        if start >= len || end < start {
            return Some(Err(()));
        }
        (start, end)
    };
    Some(Ok(range))
}

fn percent_decode(s: &str) -> Option<String> {
    let b = s.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'%' {
            let hex = std::str::from_utf8(b.get(i + 1..i + 3)?).ok()?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(b[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

/// Relative path inside the served root, or `None` for anything that could escape it.
fn safe_relative(url: &str) -> Option<PathBuf> {
    let path = url.split(['?', '#']).next().unwrap_or("");
    let decoded = percent_decode(path)?;
    let mut out = PathBuf::new();
    for part in decoded.split('/').filter(|p| !p.is_empty() && *p != ".") {
        if part == ".." || part.contains(['\\', ':', '\0']) {
            return None;
        }
        out.push(part);
    }
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OriginResponse {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
    pub content_range: Option<String>,
}

impl OriginResponse {
    fn status(status: u16, msg: &str) -> OriginResponse {
        OriginResponse { status, content_type: "text/plain", body: msg.as_bytes().to_vec(), content_range: None }
    }
}

/// Request handling, independent of the socket layer.
pub struct Origin {
    /// Directory of static files; may be absent for a pure live session.
    pub root: Option<PathBuf>,
    pub session: Option<Arc<LiveSession>>,
    pub clock: Arc<dyn Clock>,
}

impl Origin {
    pub fn new(root: Option<PathBuf>, session: Option<Arc<LiveSession>>, clock: Arc<dyn Clock>) -> Origin {
        Origin { root, session, clock }
    }

    fn live(&self, name: &str) -> Option<Result<Vec<u8>, OriginResponse>> {
        let s = self.session.as_ref()?;
        let now = self.clock.now();
        let internal = |e: String| OriginResponse::status(500, &e);
        if name == s.manifest_name {
            return Some(s.mpd(now).map(String::into_bytes).map_err(|e| internal(e.to_string())));
        }
        if name == s.playlist_name() {
            return Some(Ok(s.multivariant_playlist().into_bytes()));
        }
        if name == s.media_playlist_name() {
            return Some(Ok(s.media_playlist(now).into_bytes()));
        }
        if name == crate::dashhls::INIT_NAME {
            return Some(Ok(s.init.clone()));
        }
        let k: u64 = name.strip_prefix("seg_")?.strip_suffix(".m4s")?.parse().ok()?;
        Some(match s.segment(k, now) {
            Ok(Some(data)) => Ok(data),
            Ok(None) => Err(OriginResponse::status(404, "segment not available")),
            Err(e) => Err(internal(e.to_string())),
        })
    }

    fn file(&self, rel: &Path) -> Result<Vec<u8>, OriginResponse> {
        let root = self.root.as_ref().ok_or_else(|| OriginResponse::status(404, "not found"))?;
        let p = root.join(rel);
        if !p.is_file() {
            return Err(OriginResponse::status(404, "not found"));
        }
        std::fs::read(&p).map_err(|e| OriginResponse::status(500, &e.to_string()))
    }

    pub fn handle(&self, method: &str, url: &str, range: Option<&str>) -> OriginResponse {
        if method != "GET" && method != "HEAD" {
            return OriginResponse::status(405, "method not allowed");
        }
        let Some(rel) = safe_relative(url) else { return OriginResponse::status(403, "forbidden") };
        let name = rel.to_string_lossy().replace('\\', "/");
        let body = match self.live(&name) {
            Some(r) => r,
            None => self.file(&rel),
        };
        let body = match body {
            Ok(b) => b,
            Err(resp) => return resp,
        };
        let ct = content_type(&name);
        let len = body.len() as u64;
        match range.and_then(|r| parse_range(r, len)) {
            None => OriginResponse { status: 200, content_type: ct, body, content_range: None },
            Some(Err(())) => OriginResponse {
                status: 416,
                content_type: "text/plain",
                body: Vec::new(),
                content_range: Some(format!("bytes */{len}")),
            },
            Some(Ok((a, b))) => OriginResponse {
                status: 206,
                content_type: ct,
                body: body[a as usize..=b as usize].to_vec(),
                content_range: Some(format!("bytes {a}-{b}/{len}")),
            },
        }
    }
}

/// A running server; stops when dropped.
pub struct OriginHandle {
    addr: SocketAddr,
    server: Arc<Server>,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl OriginHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Block until the server is stopped from another thread.
    pub fn wait(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_workers();
    }

    fn stop_workers(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for OriginHandle {
    fn drop(&mut self) {
        self.stop_workers();
    }
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("valid header")
}

fn serve_one(origin: &Origin, req: tiny_http::Request) {
    let range = req.headers().iter().find(|h| h.field.equiv("Range")).map(|h| h.value.as_str().to_owned());
    let method = req.method().as_str().to_owned();
    let resp = origin.handle(&method, req.url(), range.as_deref());
    let mut out = Response::from_data(if method == "HEAD" { Vec::new() } else { resp.body })
        .with_status_code(resp.status)
        .with_header(header("Content-Type", resp.content_type))
        .with_header(header("Accept-Ranges", "bytes"))
        .with_header(header("Access-Control-Allow-Origin", "*"));
    if let Some(cr) = resp.content_range {
        out = out.with_header(header("Content-Range", &cr));
    }
    if resp.content_type == "application/dash+xml" || resp.content_type.ends_with("mpegurl") {
        out = out.with_header(header("Cache-Control", "no-cache"));
    }
    let _ = req.respond(out);
}

/// Start serving `origin` on `bind_addr` (port 0 picks a free port).
pub fn http_serve(origin: Origin, bind_addr: &str) -> Result<OriginHandle, ServeError> {
    let bind_err = |reason: String| ServeError::Bind { addr: bind_addr.to_owned(), reason };
    let server = Arc::new(Server::http(bind_addr).map_err(|e| bind_err(e.to_string()))?);
    let addr = server.server_addr().to_ip().ok_or_else(|| bind_err("not an IP listener".into()))?;
    let origin = Arc::new(origin);
    let stop = Arc::new(AtomicBool::new(false));
    let workers = (0..WORKERS)
        .map(|_| {
            let (server, origin, stop) = (Arc::clone(&server), Arc::clone(&origin), Arc::clone(&stop));
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match server.recv() {
                        Ok(req) => serve_one(&origin, req),
                        Err(_) => break,
                    }
                }
            })
        })
        .collect();
    Ok(OriginHandle { addr, server, stop, workers })
}
