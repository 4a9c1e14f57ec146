//! HTTP service behind the boundary tuning UI.
//!
//! - `GET /api/syncmap`: the sync map file as stored.
//! - `POST /api/syncmap`: replaces it with the request body. Malformed
//!   documents get 400 with the JSON pointer of the problem, documents
//!   breaking an ordering rule get 422 with the offending entry id. The
//!   file is only rewritten (atomically) when the whole document is valid.
//! - `GET /api/audio`: the WAV file, honouring single `Range: bytes=` requests.
//! - `GET /`: the UI bundle from `--ui-dir`, or a placeholder page.

use std::fs;
use std::io;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use forge_core::alignment::{load_sync_map, save_sync_map, AlignmentError};
use forge_core::fsutil::write_atomic;
use serde_json::json;
use thiserror::Error;
use tiny_http::{Header, Method, Request, Response, Server};

/// Upper bound on an uploaded sync map.
const MAX_BODY_BYTES: u64 = 64 << 20;

const PLACEHOLDER_PAGE: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>forge tuner</title></head>
<body><p>No UI bundle configured. Start with <code>--ui-dir</code>, or use
<code>/api/syncmap</code> and <code>/api/audio</code> directly.</p></body></html>
";

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("cannot start tuner: {0}")]
    Bind(String),
    #[error("{} does not exist", .0.display())]
    MissingFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub content_type: &'static str,
    pub headers: Vec<(&'static str, String)>,
    pub body: Vec<u8>,
}

impl Reply {
    fn json(status: u16, value: serde_json::Value) -> Self {
        let mut body = serde_json::to_vec(&value).expect("json value serializes");
        body.push(b'\n');
        Reply {
            status,
            content_type: "application/json; charset=utf-8",
            headers: Vec::new(),
            body,
        }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Self::json(status, json!({ "error": message.into() }))
    }
}

pub struct Tuner {
    syncmap_path: PathBuf,
    audio_path: PathBuf,
    ui_dir: Option<PathBuf>,
    /// Serializes writers; readers see whole files thanks to atomic renames.
    write_lock: Mutex<()>,
}

impl Tuner {
    pub fn new(syncmap_path: PathBuf, audio_path: PathBuf, ui_dir: Option<PathBuf>) -> Result<Self, TunerError> {
        for p in [&syncmap_path, &audio_path].into_iter().chain(ui_dir.as_ref()) {
            if !p.exists() {
                return Err(TunerError::MissingFile(p.clone()));
            }
        }
        Ok(Tuner {
            syncmap_path,
            audio_path,
            ui_dir,
            write_lock: Mutex::new(()),
        })
    }

    /// Routes one request. `range` is the raw `Range` header, if any.
    pub fn handle(&self, method: &str, url: &str, range: Option<&str>, body: &[u8]) -> Reply {
        let path = url.split(['?', '#']).next().unwrap_or("/");
        match (method, path) {
            ("GET", "/api/syncmap") => match fs::read(&self.syncmap_path) {
                Ok(bytes) => Reply {
                    status: 200,
                    content_type: "application/json; charset=utf-8",
                    headers: Vec::new(),
                    body: bytes,
                },
                Err(e) => Reply::error(500, e.to_string()),
            },
            ("POST", "/api/syncmap") => self.save(body),
            ("GET", "/api/audio") => match fs::read(&self.audio_path) {
                Ok(bytes) => ranged(bytes, range),
                Err(e) => Reply::error(500, e.to_string()),
            },
            ("GET", _) if !path.starts_with("/api/") => self.static_file(path),
            (_, "/api/syncmap") | (_, "/api/audio") => Reply::error(405, format!("{method} not allowed")),
            _ => Reply::error(404, format!("no route for {path}")),
        }
    }

    fn save(&self, body: &[u8]) -> Reply {
        let map = match load_sync_map(body) {
            Ok(m) => m,
            Err(AlignmentError::SchemaError { pointer, message }) => {
                return Reply::json(400, json!({ "error": message, "pointer": pointer }))
            }
            Err(AlignmentError::InvariantViolation { entry_id, invariant }) => {
                return Reply::json(422, json!({ "error": invariant.to_string(), "entry_id": entry_id }))
            }
            Err(e) => return Reply::error(422, e.to_string()),
        };
        let canonical = save_sync_map(&map);
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        match write_atomic(&self.syncmap_path, &canonical) {
            Ok(()) => Reply {
                status: 200,
                content_type: "application/json; charset=utf-8",
                headers: Vec::new(),
                body: canonical,
            },
            Err(e) => Reply::error(500, e.to_string()),
        }
    }

    fn static_file(&self, path: &str) -> Reply {
        let Some(dir) = &self.ui_dir else {
            return if path == "/" || path == "/index.html" {
                Reply {
                    status: 200,
                    content_type: "text/html; charset=utf-8",
                    headers: Vec::new(),
                    body: PLACEHOLDER_PAGE.as_bytes().to_vec(),
                }
            } else {
                Reply::error(404, format!("no such file {path}"))
            };
        };
        let rel = path.trim_start_matches('/');
        let rel = if rel.is_empty() { "index.html" } else { rel };
        if rel.split('/').any(|c| c.is_empty() || c == "." || c == ".." || c.contains('\\')) {
            return Reply::error(404, format!("no such file {path}"));
        }
        match fs::read(dir.join(rel)) {
            Ok(body) => Reply {
                status: 200,
                content_type: content_type(Path::new(rel)),
                headers: Vec::new(),
                body,
            },
            Err(_) => Reply::error(404, format!("no such file {path}")),
        }
    }
}

fn content_type(p: &Path) -> &'static str {
    match p.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => "application/json; charset=utf-8",
        Some("svg") => "image/svg+xml",
        Some("wav") => "audio/wav",
        _ => "application/octet-stream",
    }
}

/// Parses a single `bytes=` range against a body of `len` bytes into an
/// inclusive span. `Ok(None)` means the header is absent or not a byte
/// range we understand, in which case the full body is served.
fn parse_range(header: Option<&str>, len: u64) -> Result<Option<(u64, u64)>, ()> {
    let Some(spec) = header.and_then(|h| h.trim().strip_prefix("bytes=")) else {
        return Ok(None);
    };
    if spec.contains(',') {
        return Ok(None);
    }
    let Some((a, b)) = spec.trim().split_once('-') else {
        return Ok(None);
    };
    let num = |s: &str| s.trim().parse::<u64>().ok();
    let span = match (a.trim().is_empty(), b.trim().is_empty()) {
        (false, true) => num(a).map(|s| (s, len.saturating_sub(1))),
        (false, false) => match (num(a), num(b)) {
            (Some(s), Some(e)) if s <= e => Some((s, e.min(len.saturating_sub(1)))),
            _ => return Ok(None),
        },
        (true, false) => match num(b) {
            Some(0) => return Err(()),
            Some(n) => Some((len.saturating_sub(n), len.saturating_sub(1))),
            None => return Ok(None),
        },
        (true, true) => return Ok(None),
    };
    match span {
        Some((s, _)) if s >= len => Err(()),
        other => Ok(other),
    }
}

fn ranged(bytes: Vec<u8>, range: Option<&str>) -> Reply {
    let len = bytes.len() as u64;
    match parse_range(range, len) {
        Ok(None) => Reply {
            status: 200,
            content_type: "audio/wav",
            headers: vec![("Accept-Ranges", "bytes".into())],
            body: bytes,
        },
        Ok(Some((s, e))) => Reply {
            status: 206,
            content_type: "audio/wav",
            headers: vec![
                ("Accept-Ranges", "bytes".into()),
                ("Content-Range", format!("bytes {s}-{e}/{len}")),
            ],
            body: bytes[s as usize..=e as usize].to_vec(),
        },
        Err(()) => Reply {
            status: 416,
            content_type: "text/plain; charset=utf-8",
            headers: vec![("Content-Range", format!("bytes */{len}"))],
            body: Vec::new(),
        },
    }
}

/// Binds the loopback interface. Port 0 picks a free port.
pub fn bind(port: u16) -> Result<Server, TunerError> {
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    Server::http(addr).map_err(|e| match e.downcast_ref::<io::Error>() {
        Some(io) if io.kind() == io::ErrorKind::AddrInUse => TunerError::PortInUse(port),
        _ => TunerError::Bind(e.to_string()),
    })
}

fn respond(tuner: &Tuner, mut req: Request) -> io::Result<()> {
    let method = match req.method() {
        Method::Get => "GET",
        Method::Post => "POST",
        Method::Put => "PUT",
        Method::Delete => "DELETE",
        Method::Head => "HEAD",
        _ => "OTHER",
    };
    let range = req
        .headers()
        .iter()
        .find(|h| h.field.equiv("Range"))
        .map(|h| h.value.to_string());
    let mut body = Vec::new();
    if method == "POST" {
        let too_big = req.body_length().is_some_and(|n| n as u64 > MAX_BODY_BYTES);
        if too_big {
            return req.respond(Response::from_string("request body too large").with_status_code(413));
        }
        io::Read::read_to_end(&mut io::Read::take(req.as_reader(), MAX_BODY_BYTES), &mut body)?;
    }
    let url = req.url().to_string();
    let reply = tuner.handle(method, &url, range.as_deref(), &body);
    log::info!("{method} {url} -> {}", reply.status);
    let mut resp = Response::from_data(reply.body).with_status_code(reply.status);
    let ct = Header::from_bytes("Content-Type", reply.content_type).expect("static header");
    resp.add_header(ct);
    for (k, v) in reply.headers {
        if let Ok(h) = Header::from_bytes(k, v.as_bytes()) {
            resp.add_header(h);
        }
    }
    req.respond(resp)
}

/// Serves requests until the server is unblocked or fails.
pub fn serve(server: &Server, tuner: &Tuner) {
    for req in server.incoming_requests() {
        if let Err(e) = respond(tuner, req) {
            log::warn!("tuner response failed: {e}");
        }
    }
}
