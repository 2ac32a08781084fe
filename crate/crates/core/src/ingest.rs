//! Line-delimited detection and gaze records: parsing, file replay and a live
//! TCP feed into the [`Ldm`].
//!
//! One JSON object per line. Exterior detections:
//!
//! ```text
//! {"t":1000,"src":"lidar0","kind":"det","class":"pedestrian","x":-4.5,"y":0.2,"z":-1.9,"conf":0.91}
//! ```
//!
//! Interior gaze events:
//!
//! ```text
//! {"t":1000,"src":"dms0","kind":"gaze","target":"right","conf":0.8}
//! ```
//!
//! `src` defaults to `lidar0` / `dms0`, `conf` to 1, and a detection may carry
//! an optional `track` id. Detection coordinates stay in the sensor frame.

use std::io::{self, BufRead, BufReader, ErrorKind, Read};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point3;
use crate::ldm::{Ldm, LdmError, Millis};
use crate::risk::GazeTarget;

pub const DEFAULT_DETECTION_SOURCE: &str = "lidar0";
pub const DEFAULT_GAZE_SOURCE: &str = "dms0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Pedestrian,
    Car,
    Other,
}

impl ObjectClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Pedestrian => "pedestrian",
            ObjectClass::Car => "car",
            ObjectClass::Other => "other",
        }
    }

    fn from_wire(s: &str) -> Self {
        match s {
            "pedestrian" => ObjectClass::Pedestrian,
            "car" => ObjectClass::Car,
            _ => ObjectClass::Other,
        }
    }
}

/// One detected object, position in the exterior sensor frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorDetection {
    pub timestamp: Millis,
    pub object_class: ObjectClass,
    pub position: Point3,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeEvent {
    pub timestamp: Millis,
    pub target: GazeTarget,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Percept {
    Detection(ExteriorDetection),
    Gaze(GazeEvent),
}

impl Percept {
    pub fn timestamp(&self) -> Millis {
        match self {
            Percept::Detection(d) => d.timestamp,
            Percept::Gaze(g) => g.timestamp,
        }
    }
}

/// A percept together with the id of the source that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcedPercept {
    pub source: String,
    pub percept: Percept,
}

impl SourcedPercept {
    pub fn detection(source: impl Into<String>, det: ExteriorDetection) -> Self {
        Self { source: source.into(), percept: Percept::Detection(det) }
    }

    pub fn gaze(source: impl Into<String>, gaze: GazeEvent) -> Self {
        Self { source: source.into(), percept: Percept::Gaze(gaze) }
    }

    pub fn timestamp(&self) -> Millis {
        self.percept.timestamp()
    }

    /// Serialize to the single-line wire format (no trailing newline).
    pub fn to_line(&self) -> String {
        let line = match &self.percept {
            Percept::Detection(d) => serde_json::to_string(&DetLine {
                t: d.timestamp,
                src: &self.source,
                kind: "det",
                class: d.object_class.as_str(),
                x: d.position.x,
                y: d.position.y,
                z: d.position.z,
                conf: d.confidence,
                track: d.track_id.as_deref(),
            }),
            Percept::Gaze(g) => serde_json::to_string(&GazeLine {
                t: g.timestamp,
                src: &self.source,
                kind: "gaze",
                target: g.target.as_str(),
                conf: g.confidence,
            }),
        };
        line.expect("wire records always serialize")
    }
}

#[derive(Serialize)]
struct DetLine<'a> {
    t: Millis,
    src: &'a str,
    kind: &'static str,
    class: &'static str,
    x: f64,
    y: f64,
    z: f64,
    conf: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    track: Option<&'a str>,
}

#[derive(Serialize)]
struct GazeLine<'a> {
    t: Millis,
    src: &'a str,
    kind: &'static str,
    target: &'static str,
    conf: f64,
}

#[derive(Deserialize)]
struct RawLine {
    t: Option<Millis>,
    src: Option<String>,
    kind: Option<String>,
    class: Option<String>,
    x: Option<f64>,
    y: Option<f64>,
    z: Option<f64>,
    conf: Option<f64>,
    target: Option<String>,
    track: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseErrorKind {
    #[error("malformed record: {0}")]
    Syntax(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("unknown record kind {0:?}")]
    UnknownKind(String),
    #[error("unknown gaze target {0:?}")]
    UnknownTarget(String),
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("timestamp must be positive")]
    ZeroTimestamp,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

/// Parse one wire record. `line_no` is only used for error reporting.
pub fn parse_line(text: &str, line_no: usize) -> Result<SourcedPercept, ParseError> {
    let err = |kind| ParseError { line: line_no, kind };
    let raw: RawLine = serde_json::from_str(text.trim()).map_err(|e| err(ParseErrorKind::Syntax(e.to_string())))?;
    let t = raw.t.ok_or_else(|| err(ParseErrorKind::MissingField("t")))?;
    if t == 0 {
        return Err(err(ParseErrorKind::ZeroTimestamp));
    }
    let conf = raw.conf.unwrap_or(1.0);
    if !(0.0..=1.0).contains(&conf) {
        return Err(err(ParseErrorKind::Confidence(conf)));
    }
    let kind = raw.kind.ok_or_else(|| err(ParseErrorKind::MissingField("kind")))?;
    match kind.as_str() {
        "det" => {
            let class = raw.class.ok_or_else(|| err(ParseErrorKind::MissingField("class")))?;
            let x = raw.x.ok_or_else(|| err(ParseErrorKind::MissingField("x")))?;
            let y = raw.y.ok_or_else(|| err(ParseErrorKind::MissingField("y")))?;
            let z = raw.z.ok_or_else(|| err(ParseErrorKind::MissingField("z")))?;
            Ok(SourcedPercept::detection(
                raw.src.unwrap_or_else(|| DEFAULT_DETECTION_SOURCE.to_string()),
                ExteriorDetection {
                    timestamp: t,
                    object_class: ObjectClass::from_wire(&class),
                    position: Point3::new(x, y, z),
                    confidence: conf,
                    track_id: raw.track,
                },
            ))
        }
        "gaze" => {
            let target = raw.target.ok_or_else(|| err(ParseErrorKind::MissingField("target")))?;
            let target = target.parse::<GazeTarget>().map_err(|_| err(ParseErrorKind::UnknownTarget(target)))?;
            Ok(SourcedPercept::gaze(
                raw.src.unwrap_or_else(|| DEFAULT_GAZE_SOURCE.to_string()),
                GazeEvent { timestamp: t, target, confidence: conf },
            ))
        }
        _ => Err(err(ParseErrorKind::UnknownKind(kind))),
    }
}

/// Parse every non-blank line; errors are collected rather than fatal.
pub fn parse_all(text: &str) -> (Vec<SourcedPercept>, Vec<ParseError>) {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line, i + 1) {
            Ok(p) => ok.push(p),
            Err(e) => bad.push(e),
        }
    }
    (ok, bad)
}

pub fn to_lines<'a>(records: impl IntoIterator<Item = &'a SourcedPercept>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{count} malformed line(s), first: {first}")]
    Parse { count: usize, first: ParseError },
    #[error(transparent)]
    Ldm(#[from] LdmError),
    #[error("speed factor must be positive, got {0}")]
    Speed(f64),
}

/// Pacing of a file replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplaySpeed {
    /// No delays at all.
    Fast,
    /// Recorded inter-record gaps are divided by this factor.
    Factor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    pub speed: ReplaySpeed,
    /// Skip malformed lines instead of failing the whole replay.
    pub lenient: bool,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self { speed: ReplaySpeed::Fast, lenient: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySummary {
    pub inserted: usize,
    pub rejected: Vec<ParseError>,
    /// Span between the first and last record timestamps.
    pub duration_ms: Millis,
}

pub fn replay(path: &Path, options: ReplayOptions, sink: &Ldm) -> Result<ReplaySummary, IngestError> {
    let text = std::fs::read_to_string(path)?;
    replay_str(&text, options, sink)
}

/// Insert the records of `text` in timestamp order (stable for equal stamps).
/// Without `lenient`, any malformed line aborts before anything is inserted.
pub fn replay_str(text: &str, options: ReplayOptions, sink: &Ldm) -> Result<ReplaySummary, IngestError> {
    if let ReplaySpeed::Factor(f) = options.speed {
        if !(f > 0.0) {
            return Err(IngestError::Speed(f));
        }
    }
    let (mut records, rejected) = parse_all(text);
    if !options.lenient {
        if let Some(first) = rejected.first() {
            return Err(IngestError::Parse { count: rejected.len(), first: first.clone() });
        }
    }
    records.sort_by_key(SourcedPercept::timestamp);

    let start = Instant::now();
    let first_t = records.first().map_or(0, SourcedPercept::timestamp);
    for r in &records {
        if let ReplaySpeed::Factor(f) = options.speed {
            if f.is_finite() {
                let due = Duration::from_secs_f64((r.timestamp() - first_t) as f64 / 1000.0 / f);
                if let Some(wait) = due.checked_sub(start.elapsed()) {
                    thread::sleep(wait);
                }
            }
        }
        sink.ingest(r)?;
    }
    let duration_ms = records.last().map_or(0, |r| r.timestamp() - first_t);
    if !rejected.is_empty() {
        log::warn!("replay skipped {} malformed line(s)", rejected.len());
    }
    Ok(ReplaySummary { inserted: records.len(), rejected, duration_ms })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ListenStats {
    pub connections: u64,
    pub inserted: u64,
    pub errors: u64,
}

#[derive(Default)]
struct Counters {
    connections: AtomicU64,
    inserted: AtomicU64,
    errors: AtomicU64,
}

impl Counters {
    fn snapshot(&self) -> ListenStats {
        ListenStats {
            connections: self.connections.load(Ordering::SeqCst),
            inserted: self.inserted.load(Ordering::SeqCst),
            errors: self.errors.load(Ordering::SeqCst),
        }
    }
}

/// Running TCP line source. Dropping the handle without [`join`](Self::join)
/// leaves the threads running until process exit.
pub struct ListenHandle {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    counters: Arc<Counters>,
    acceptor: JoinHandle<()>,
}

const POLL: Duration = Duration::from_millis(20);

impl ListenHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn stats(&self) -> ListenStats {
        self.counters.snapshot()
    }

    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    /// Stop accepting, wait for every connection thread and report totals.
    pub fn join(self) -> ListenStats {
        self.shutdown();
        let _ = self.acceptor.join();
        self.counters.snapshot()
    }
}

/// Accept line-delimited records on `endpoint`; each valid line is inserted
/// as it arrives. Bad lines bump the error counter and the connection stays up.
pub fn listen(endpoint: impl ToSocketAddrs, sink: Arc<Ldm>) -> Result<ListenHandle, IngestError> {
    let listener = TcpListener::bind(endpoint)?;
    listener.set_nonblocking(true)?;
    let local_addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let counters = Arc::new(Counters::default());

    let acceptor = {
        let stop = Arc::clone(&stop);
        let counters = Arc::clone(&counters);
        thread::spawn(move || {
            let mut workers = Vec::new();
            while !stop.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        log::debug!("ingest connection from {peer}");
                        counters.connections.fetch_add(1, Ordering::SeqCst);
                        let (stop, counters, sink) = (Arc::clone(&stop), Arc::clone(&counters), Arc::clone(&sink));
                        workers.push(thread::spawn(move || serve_connection(stream, &sink, &stop, &counters)));
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        thread::sleep(POLL);
                    }
                }
            }
            for w in workers {
                let _ = w.join();
            }
        })
    };
    Ok(ListenHandle { local_addr, stop, counters, acceptor })
}

fn serve_connection(stream: TcpStream, sink: &Ldm, stop: &AtomicBool, counters: &Counters) {
    if stream.set_nonblocking(false).is_err() || stream.set_read_timeout(Some(POLL)).is_err() {
        return;
    }
    let mut reader = BufReader::new(stream);
    let mut pending: Vec<u8> = Vec::new();
    let mut line_no = 0usize;
    let handle_line = |bytes: &[u8], line_no: usize| {
        if stop.load(Ordering::SeqCst) {
            return;
        }
        let text = String::from_utf8_lossy(bytes);
        if text.trim().is_empty() {
            return;
        }
        match parse_line(&text, line_no).map_err(|e| e.to_string()).and_then(|p| sink.ingest(&p).map_err(|e| e.to_string())) {
            Ok(()) => {
                counters.inserted.fetch_add(1, Ordering::SeqCst);
            }
            Err(e) => {
                log::warn!("ingest: {e}");
                counters.errors.fetch_add(1, Ordering::SeqCst);
            }
        }
    };
    loop {
        if stop.load(Ordering::SeqCst) {
            return;
        }
        let mut chunk = [0u8; 4096];
        match reader.read(&mut chunk) {
            Ok(0) => {
                if !pending.is_empty() {
                    line_no += 1;
                    handle_line(&pending, line_no);
                }
                return;
            }
            Ok(n) => {
                pending.extend_from_slice(&chunk[..n]);
                while let Some(pos) = pending.iter().position(|&b| b == b'\n') {
                    let line: Vec<u8> = pending.drain(..=pos).collect();
                    line_no += 1;
                    handle_line(&line[..line.len() - 1], line_no);
                }
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {}
            Err(e) => {
                log::warn!("ingest connection closed: {e}");
                return;
            }
        }
    }
}

/// Read newline-delimited records from any reader, e.g. stdin.
pub fn ingest_reader(reader: impl BufRead, sink: &Ldm) -> Result<ReplaySummary, IngestError> {
    let mut text = String::new();
    for line in reader.lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    replay_str(&text, ReplayOptions { speed: ReplaySpeed::Fast, lenient: true }, sink)
}
