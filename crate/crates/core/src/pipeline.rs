//! The assessment tick: join the newest gaze and detection set from the LDM,
//! place each pedestrian in a zone and score it.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::geometry::{distance_to_bumper, locate, sensor_to_assessment, GroundPoint, ZoneRef};
use crate::eval::{evaluate, read_truth, EvalError, EvaluationReport, TruthRow};
use crate::ingest::{replay, IngestError, ObjectClass, ReplayOptions, SourcedPercept};
use crate::ldm::{Ldm, LdmError, LdmLayer, Millis, QueryWindow};
use crate::risk::{assess, GazeTarget, RiskLevel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    #[serde(rename = "t")]
    pub timestamp: Millis,
    /// Track id when the detector provides one, else `#<index>` within the set.
    #[serde(rename = "ped")]
    pub pedestrian: String,
    pub x: f64,
    pub y: f64,
    pub zone: ZoneRef,
    pub distance: f64,
    pub ttc: f64,
    pub gaze_used: GazeTarget,
    pub risk: RiskLevel,
}

impl RiskAssessment {
    pub fn position(&self) -> GroundPoint {
        GroundPoint::new(self.x, self.y)
    }
}

/// Everything one tick produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickOutput {
    pub timestamp: Millis,
    pub gaze_used: GazeTarget,
    pub scene_max: RiskLevel,
    pub assessments: Vec<RiskAssessment>,
}

/// Score pedestrians already expressed in the assessment frame.
pub fn assess_positions(
    now: Millis,
    gaze: GazeTarget,
    pedestrians: impl IntoIterator<Item = (String, GroundPoint)>,
    config: &Config,
) -> TickOutput {
    let speed = config.risk.reverse_speed;
    let assessments: Vec<RiskAssessment> = pedestrians
        .into_iter()
        .map(|(pedestrian, p)| {
            let zone = locate(p, &config.layout);
            let distance = distance_to_bumper(p, &config.layout);
            RiskAssessment {
                timestamp: now,
                pedestrian,
                x: p.x,
                y: p.y,
                zone,
                distance,
                ttc: distance / speed,
                gaze_used: gaze,
                risk: assess(zone, gaze, &config.risk),
            }
        })
        .collect();
    let scene_max = assessments.iter().map(|a| a.risk).max().unwrap_or(RiskLevel::VeryLow);
    TickOutput { timestamp: now, gaze_used: gaze, scene_max, assessments }
}

/// One assessment pass at time `now`.
///
/// Gaze is the newest interior event within the gaze staleness (`Unknown`
/// when there is none). Detections come from the newest exterior set within
/// the detection staleness; only pedestrians are scored.
pub fn tick(ldm: &Ldm, now: Millis, config: &Config) -> TickOutput {
    let gaze = ldm
        .latest_any(LdmLayer::Interior, QueryWindow::new(now, config.staleness.gaze_ms))
        .and_then(|r| r.gaze().map(|g| g.target))
        .unwrap_or(GazeTarget::Unknown);
    let detections = ldm.latest_any(LdmLayer::DynamicExterior, QueryWindow::new(now, config.staleness.detection_ms));
    let pedestrians = detections
        .iter()
        .flat_map(|r| r.detections().unwrap_or_default().iter().enumerate())
        .filter(|(_, d)| d.object_class == ObjectClass::Pedestrian)
        .map(|(i, d)| {
            let id = d.track_id.clone().unwrap_or_else(|| format!("#{i}"));
            (id, sensor_to_assessment(d.position, &config.sensor).ground())
        });
    assess_positions(now, gaze, pedestrians, config)
}

#[derive(Debug, Error)]
pub enum AssessmentFileError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: assessment does not follow a frame header for t={t}")]
    Orphan { line: usize, t: Millis },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum OutputLine {
    Frame { t: Millis, gaze_used: GazeTarget, scene_max: RiskLevel, count: usize },
    Assessment(RiskAssessment),
}

/// Line-delimited output: a `frame` header per tick followed by one
/// `assessment` line per pedestrian.
pub fn write_ticks<'a>(ticks: impl IntoIterator<Item = &'a TickOutput>) -> String {
    let mut out = String::new();
    for tick in ticks {
        let header = OutputLine::Frame {
            t: tick.timestamp,
            gaze_used: tick.gaze_used,
            scene_max: tick.scene_max,
            count: tick.assessments.len(),
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&header).expect("frame serializes"));
        for a in &tick.assessments {
            let _ = writeln!(out, "{}", serde_json::to_string(&OutputLine::Assessment(a.clone())).expect("assessment serializes"));
        }
    }
    out
}

pub fn read_ticks(text: &str) -> Result<Vec<TickOutput>, AssessmentFileError> {
    let mut ticks: Vec<TickOutput> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parsed: OutputLine = serde_json::from_str(line)
            .map_err(|e| AssessmentFileError::Malformed { line: i + 1, message: e.to_string() })?;
        match parsed {
            OutputLine::Frame { t, gaze_used, scene_max, .. } => {
                ticks.push(TickOutput { timestamp: t, gaze_used, scene_max, assessments: Vec::new() })
            }
            OutputLine::Assessment(a) => match ticks.last_mut() {
                Some(tick) if tick.timestamp == a.timestamp => tick.assessments.push(a),
                _ => return Err(AssessmentFileError::Orphan { line: i + 1, t: a.timestamp }),
            },
        }
    }
    Ok(ticks)
}

pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const GAZE_FILE: &str = "gaze.jsonl";
pub const TRUTH_FILE: &str = "truth.jsonl";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Ingest { path: PathBuf, source: IngestError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Ldm(#[from] LdmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Assessments and their score for one dataset.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub ticks: Vec<TickOutput>,
    pub report: EvaluationReport,
}

fn tick_and_score(ldm: &Ldm, truth: &[TruthRow], config: &Config) -> Result<RunOutput, RunError> {
    let times: BTreeSet<Millis> = truth.iter().map(|r| r.t).collect();
    let ticks: Vec<TickOutput> = times.into_iter().map(|t| tick(ldm, t, config)).collect();
    let report = evaluate(&ticks, truth)?;
    Ok(RunOutput { ticks, report })
}

/// Ingest `percepts` into a fresh store, tick at every labeled frame
/// timestamp and score the result.
pub fn run_percepts(percepts: &[SourcedPercept], truth: &[TruthRow], config: &Config) -> Result<RunOutput, RunError> {
    let ldm = Ldm::new();
    let mut ordered: Vec<&SourcedPercept> = percepts.iter().collect();
    ordered.sort_by_key(|p| p.timestamp());
    for p in ordered {
        ldm.ingest(p)?;
    }
    tick_and_score(&ldm, truth, config)
}

/// [`run_percepts`] over a dataset directory holding the detection, gaze and
/// truth files.
pub fn run_replay(dir: &Path, config: &Config) -> Result<RunOutput, RunError> {
    let ldm = Ldm::new();
    for name in [DETECTIONS_FILE, GAZE_FILE] {
        let path = dir.join(name);
        replay(&path, ReplayOptions::default(), &ldm).map_err(|source| RunError::Ingest { path, source })?;
    }
    let path = dir.join(TRUTH_FILE);
    let text = std::fs::read_to_string(&path).map_err(|source| RunError::Io { path, source })?;
    let truth = read_truth(&text)?;
    tick_and_score(&ldm, &truth, config)
}
