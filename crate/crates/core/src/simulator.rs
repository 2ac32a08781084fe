//! Synthetic labeled datasets, detector noise and Monte Carlo replication of
//! the evaluation.
//!
//! A dataset is a sequence of scenes. Within a scene the scenario tag and the
//! pedestrians stay fixed (or the vehicle reverses past them) while the
//! driver looks at one mirror, optionally switching after random dwell times.
//! Ground truth is labeled with [`locate`] and [`assess`] from the same
//! positions that are written to the detection stream.

use std::fs;
use std::io;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::eval::{render_accuracy_table, AccuracyTable, DistributionReport, EvaluationReport, Scenario, TruthRow};
use crate::geometry::{
    assessment_to_sensor, boundary_clearance, locate, sensor_to_assessment, world_to_assessment, GroundPoint, Point3,
    VehiclePose,
};
use crate::ingest::{
    parse_all, to_lines, ExteriorDetection, GazeEvent, ObjectClass, Percept, SourcedPercept, DEFAULT_DETECTION_SOURCE,
    DEFAULT_GAZE_SOURCE,
};
use crate::ldm::Millis;
use crate::pipeline::{run_percepts, RunError, DETECTIONS_FILE, GAZE_FILE, TRUTH_FILE};
use crate::risk::{assess, GazeTarget, RiskLevel};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Height written for simulated pedestrian detections, roughly mid-body.
const PEDESTRIAN_Z: f64 = 0.9;
const MAX_PLACEMENT_ATTEMPTS: usize = 100_000;

/// Default share of frames per risk class 0..=3 when stratifying.
pub const STRATA: [f64; 4] = [0.29, 0.37, 0.26, 0.08];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario spec: {0}")]
    Spec(String),
    #[error("invalid noise model: {0}")]
    Noise(String),
    #[error("no admissible position for pedestrian {pedestrian} in scene {scene} after {MAX_PLACEMENT_ATTEMPTS} draws")]
    Placement { scene: usize, pedestrian: usize },
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

/// Axis-aligned placement region in the assessment frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Region {
    fn default() -> Self {
        Self { x_min: 0.2, x_max: 5.8, y_min: -4.0, y_max: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motion {
    #[default]
    Parked,
    /// Straight reverse at the configured reverse speed from the start of
    /// each scene; pedestrians stand still in the world.
    Reversing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GazeSchedule {
    /// Relative weights of left, center and right.
    pub weights: [f64; 3],
    /// Mean of the exponential dwell time; `None` holds one gaze per scene.
    pub mean_dwell_s: Option<f64>,
    /// Use this gaze throughout instead of sampling.
    pub fixed: Option<GazeTarget>,
}

impl Default for GazeSchedule {
    fn default() -> Self {
        Self { weights: [1.0; 3], mean_dwell_s: None, fixed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub frames: usize,
    pub frame_rate_hz: f64,
    pub frames_per_scene: usize,
    pub pedestrians: usize,
    pub region: Region,
    /// Minimum clearance from any zone boundary for sampled positions.
    pub boundary_margin: f64,
    /// Per-pedestrian positions used instead of sampling when non-empty.
    pub fixed_positions: Vec<GroundPoint>,
    pub gaze: GazeSchedule,
    pub motion: Motion,
    pub interior_fraction: f64,
    /// Draw the first pedestrian's risk class from [`STRATA`] and place it
    /// by rejection so the class balance follows those shares.
    pub stratify: bool,
    pub cars: usize,
    pub start_ms: Millis,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            frames: 1000,
            frame_rate_hz: 10.0,
            frames_per_scene: 20,
            pedestrians: 1,
            region: Region::default(),
            boundary_margin: 0.0,
            fixed_positions: Vec::new(),
            gaze: GazeSchedule::default(),
            motion: Motion::Parked,
            interior_fraction: 0.23,
            stratify: true,
            cars: 0,
            start_ms: 1000,
        }
    }
}

impl ScenarioSpec {
    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.frame_rate_hz
    }

    pub fn frame_time(&self, i: usize) -> Millis {
        self.start_ms + (i as f64 * 1000.0 / self.frame_rate_hz).round() as Millis
    }

    pub fn validate(&self, config: &Config) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Spec(m.to_string()));
        if self.frames == 0 {
            return bad("frames must be at least 1");
        }
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0 && self.frame_rate_hz <= 1000.0) {
            return bad("frame_rate_hz must lie in (0, 1000]");
        }
        if self.frames_per_scene == 0 {
            return bad("frames_per_scene must be at least 1");
        }
        if self.start_ms == 0 {
            return bad("start_ms must be positive");
        }
        let r = &self.region;
        let finite = [r.x_min, r.x_max, r.y_min, r.y_max].iter().all(|v| v.is_finite());
        if !finite || r.x_min <= 0.0 || r.x_min >= r.x_max || r.y_min >= r.y_max {
            return bad("region must be finite, non-empty and at positive x");
        }
        if r.x_max > config.layout.processing_max_x + self.boundary_margin {
            return bad("region extends past the processing range");
        }
        if !(self.boundary_margin.is_finite() && self.boundary_margin >= 0.0) {
            return bad("boundary_margin must be non-negative");
        }
        if !self.fixed_positions.is_empty() && self.fixed_positions.len() != self.pedestrians {
            return bad("fixed_positions must list one position per pedestrian");
        }
        if self.fixed_positions.iter().any(|p| !p.is_finite()) {
            return bad("fixed positions must be finite");
        }
        let w = &self.gaze.weights;
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return bad("gaze weights must be non-negative with a positive sum");
        }
        if let Some(d) = self.gaze.mean_dwell_s {
            if !(d.is_finite() && d > 0.0) {
                return bad("mean_dwell_s must be positive");
            }
        }
        if !(0.0..=1.0).contains(&self.interior_fraction) {
            return bad("interior_fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Detector imperfections applied on top of a noiseless dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Standard deviation of isotropic ground-plane position noise, meters.
    pub position_sigma: f64,
    pub detection_drop_rate: f64,
    /// Row-stochastic; rows are the true gaze (left, center, right).
    pub gaze_confusion: [[f64; 3]; 3],
    /// When set, [`NoiseModel::calibrate`] chooses `position_sigma` so the
    /// measured zone accuracy meets this value.
    pub zone_accuracy_target: Option<f64>,
    /// When set, calibration replaces `gaze_confusion` with a symmetric
    /// matrix of this diagonal.
    pub gaze_accuracy_target: Option<f64>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            position_sigma: 0.0,
            detection_drop_rate: 0.0,
            gaze_confusion: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            zone_accuracy_target: None,
            gaze_accuracy_target: None,
        }
    }
}

fn symmetric_confusion(accuracy: f64) -> [[f64; 3]; 3] {
    let off = (1.0 - accuracy) / 2.0;
    let mut m = [[off; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = accuracy;
    }
    m
}

impl NoiseModel {
    /// Targets for the component accuracies reported for the physical
    /// dataset: 0.92 zone, 0.73 gaze.
    pub fn reference_targets() -> Self {
        Self { zone_accuracy_target: Some(0.92), gaze_accuracy_target: Some(0.73), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Noise(m.to_string()));
        if !(self.position_sigma.is_finite() && self.position_sigma >= 0.0) {
            return bad("position_sigma must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.detection_drop_rate) {
            return bad("detection_drop_rate must lie in [0, 1]");
        }
        for row in &self.gaze_confusion {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("gaze_confusion rows must be probabilities summing to 1");
            }
        }
        for t in [self.zone_accuracy_target, self.gaze_accuracy_target].into_iter().flatten() {
            if !(0.0..=1.0).contains(&t) {
                return bad("accuracy targets must lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        let identity = NoiseModel::default().gaze_confusion;
        self.position_sigma == 0.0 && self.detection_drop_rate == 0.0 && self.gaze_confusion == identity
    }

    /// Resolve the calibration targets into concrete noise parameters.
    ///
    /// The gaze target maps directly onto the confusion diagonal. For the zone
    /// target, `position_sigma` is bisected against the zone accuracy that a
    /// full replay measures on a dataset of at least 2·10^4 frames generated
    /// from `spec` with `seed`; the same noise draws are reused for every
    /// candidate sigma.
    pub fn calibrate(&self, spec: &ScenarioSpec, config: &Config, seed: u64) -> Result<NoiseModel, SimError> {
        self.validate()?;
        let mut out = self.clone();
        if let Some(a) = self.gaze_accuracy_target {
            out.gaze_confusion = symmetric_confusion(a);
        }
        let Some(target) = self.zone_accuracy_target else {
            return Ok(out);
        };
        // zone errors depend only on where pedestrians stand, so a parked
        // calibration set places a fresh pedestrian every frame
        let frames_per_scene = if spec.motion == Motion::Parked { 1 } else { spec.frames_per_scene };
        let cal_spec = ScenarioSpec { seed, frames: spec.frames.max(20_000), frames_per_scene, ..spec.clone() };
        let clean = generate(&cal_spec, config)?;
        let noise_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
        let zone_accuracy = |sigma: f64| -> Result<f64, SimError> {
            let probe = NoiseModel { position_sigma: sigma, gaze_confusion: NoiseModel::default().gaze_confusion, ..out.clone() };
            let noisy = apply_noise(&clean, &probe, noise_seed);
            let run = run_percepts(&noisy.percepts(), &noisy.truth, config)?;
            Ok(run.report.zone_accuracy.unwrap_or(1.0))
        };
        let (mut lo, mut hi) = (0.0_f64, 4.0_f64);
        if zone_accuracy(lo)? <= target {
            out.position_sigma = lo;
            return Ok(out);
        }
        if zone_accuracy(hi)? >= target {
            out.position_sigma = hi;
            return Ok(out);
        }
        for _ in 0..24 {
            let mid = 0.5 * (lo + hi);
            if zone_accuracy(mid)? > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.position_sigma = 0.5 * (lo + hi);
        log::debug!("calibrated position sigma {:.4} m for zone accuracy {target}", out.position_sigma);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ScenarioSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    pub frames: usize,
    pub truth_rows: usize,
    pub detections: usize,
    pub gaze_events: usize,
}

/// Percept streams and labels of one generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub detections: Vec<SourcedPercept>,
    pub gaze: Vec<SourcedPercept>,
    pub truth: Vec<TruthRow>,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn percepts(&self) -> Vec<SourcedPercept> {
        self.detections.iter().chain(&self.gaze).cloned().collect()
    }

    fn refresh_counts(&mut self) {
        self.manifest.detections = self.detections.len();
        self.manifest.gaze_events = self.gaze.len();
        self.manifest.truth_rows = self.truth.len();
    }

    /// Write the detection, gaze and truth files plus the manifest into `dir`,
    /// creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<(), SimError> {
        let io_err = |path: &Path| {
            let path = path.display().to_string();
            move |source| SimError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        let files = [
            (DETECTIONS_FILE, to_lines(&self.detections)),
            (GAZE_FILE, to_lines(&self.gaze)),
            (TRUTH_FILE, crate::eval::write_truth(&self.truth)),
            (MANIFEST_FILE, manifest),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text).map_err(io_err(&path))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Dataset, SimError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| SimError::Io { path: path.display().to_string(), source })
        };
        let format = |name: &str, message: String| SimError::Format { path: dir.join(name).display().to_string(), message };
        let stream = |name: &str| -> Result<Vec<SourcedPercept>, SimError> {
            let (records, errors) = parse_all(&read(name)?);
            match errors.first() {
                Some(e) => Err(format(name, e.to_string())),
                None => Ok(records),
            }
        };
        let detections = stream(DETECTIONS_FILE)?;
        let gaze = stream(GAZE_FILE)?;
        let truth = crate::eval::read_truth(&read(TRUTH_FILE)?).map_err(|e| format(TRUTH_FILE, e.to_string()))?;
        let manifest = serde_json::from_str(&read(MANIFEST_FILE)?).map_err(|e| format(MANIFEST_FILE, e.to_string()))?;
        Ok(Dataset { detections, gaze, truth, manifest })
    }
}

fn sample_gaze(rng: &mut ChaCha8Rng, schedule: &GazeSchedule, weights: &WeightedIndex<f64>) -> GazeTarget {
    schedule.fixed.unwrap_or_else(|| GazeTarget::MIRRORS[weights.sample(rng)])
}

/// Position after the detection round trip through the sensor frame, so that
/// labels match what the pipeline reconstructs bit for bit.
fn as_detected(p: GroundPoint, config: &Config) -> (Point3, GroundPoint) {
    let sensor = assessment_to_sensor(Point3::new(p.x, p.y, PEDESTRIAN_Z), &config.sensor);
    (sensor, sensor_to_assessment(sensor, &config.sensor).ground())
}

fn sample_in(rng: &mut ChaCha8Rng, region: &Region) -> GroundPoint {
    GroundPoint::new(rng.random_range(region.x_min..region.x_max), rng.random_range(region.y_min..region.y_max))
}

fn risk_class(rng: &mut ChaCha8Rng) -> RiskLevel {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (code, share) in STRATA.iter().enumerate() {
        acc += share;
        if u < acc {
            return RiskLevel::from_class_code(code as u8).expect("class code in range");
        }
    }
    RiskLevel::VeryHigh
}

/// Generate a noiseless labeled dataset. Identical inputs give identical
/// datasets.
pub fn generate(spec: &ScenarioSpec, config: &Config) -> Result<Dataset, SimError> {
    spec.validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights = WeightedIndex::new(spec.gaze.weights).map_err(|e| SimError::Spec(e.to_string()))?;
    let dwell = spec.gaze.mean_dwell_s.map(|d| Exp::new(1.0 / d).expect("positive rate"));
    let speed = config.risk.reverse_speed;

    let mut detections = Vec::new();
    let mut gaze_events = Vec::new();
    let mut truth = Vec::new();

    let scenes = spec.frames.div_ceil(spec.frames_per_scene);
    for scene in 0..scenes {
        let first = scene * spec.frames_per_scene;
        let last = (first + spec.frames_per_scene).min(spec.frames);
        let scenario = if rng.random::<f64>() < spec.interior_fraction { Scenario::Interior } else { Scenario::Exterior };
        let mut gaze = sample_gaze(&mut rng, &spec.gaze, &weights);
        let target = (spec.stratify && spec.fixed_positions.is_empty()).then(|| risk_class(&mut rng));

        let mut pedestrians = Vec::with_capacity(spec.pedestrians);
        for k in 0..spec.pedestrians {
            let p = match spec.fixed_positions.get(k) {
                Some(p) => *p,
                None => {
                    let mut attempt = 0;
                    loop {
                        attempt += 1;
                        if attempt > MAX_PLACEMENT_ATTEMPTS {
                            return Err(SimError::Placement { scene, pedestrian: k });
                        }
                        let (_, p) = as_detected(sample_in(&mut rng, &spec.region), config);
                        if boundary_clearance(p, &config.layout) < spec.boundary_margin {
                            continue;
                        }
                        match target {
                            Some(t) if k == 0 && assess(locate(p, &config.layout), gaze, &config.risk) != t => continue,
                            _ => break p,
                        }
                    }
                }
            };
            pedestrians.push(p);
        }
        let cars: Vec<GroundPoint> = (0..spec.cars).map(|_| sample_in(&mut rng, &spec.region)).collect();

        let mut next_switch = dwell.map(|d| d.sample(&mut rng));
        for i in first..last {
            let t = spec.frame_time(i);
            let elapsed = (i - first) as f64 / spec.frame_rate_hz;
            if let (Some(d), Some(at)) = (dwell, next_switch.as_mut()) {
                while elapsed >= *at {
                    gaze = sample_gaze(&mut rng, &spec.gaze, &weights);
                    *at += d.sample(&mut rng);
                }
            }
            let pose = VehiclePose { x: -speed * elapsed, y: 0.0, heading: 0.0 };
            let place = |p: GroundPoint| match spec.motion {
                Motion::Parked => p,
                // world frame = vehicle frame at scene start, x forward
                Motion::Reversing => world_to_assessment(GroundPoint::new(-p.x, p.y), &pose),
            };
            for (k, p) in pedestrians.iter().enumerate() {
                let (sensor, p) = as_detected(place(*p), config);
                let id = format!("p{k}");
                let zone = locate(p, &config.layout);
                truth.push(TruthRow {
                    t,
                    ped: Some(id.clone()),
                    x: p.x,
                    y: p.y,
                    zone,
                    gaze,
                    risk: assess(zone, gaze, &config.risk),
                    scenario,
                });
                detections.push(SourcedPercept::detection(
                    DEFAULT_DETECTION_SOURCE,
                    ExteriorDetection {
                        timestamp: t,
                        object_class: ObjectClass::Pedestrian,
                        position: sensor,
                        confidence: 1.0,
                        track_id: Some(id),
                    },
                ));
            }
            for (k, c) in cars.iter().enumerate() {
                let (sensor, _) = as_detected(place(*c), config);
                detections.push(SourcedPercept::detection(
                    DEFAULT_DETECTION_SOURCE,
                    ExteriorDetection {
                        timestamp: t,
                        object_class: ObjectClass::Car,
                        position: sensor,
                        confidence: 1.0,
                        track_id: Some(format!("car{k}")),
                    },
                ));
            }
            gaze_events.push(SourcedPercept::gaze(
                DEFAULT_GAZE_SOURCE,
                GazeEvent { timestamp: t, target: gaze, confidence: 1.0 },
            ));
        }
    }

    let mut dataset = Dataset {
        detections,
        gaze: gaze_events,
        truth,
        manifest: Manifest {
            spec: spec.clone(),
            noise: None,
            noise_seed: None,
            frames: spec.frames,
            truth_rows: 0,
            detections: 0,
            gaze_events: 0,
        },
    };
    dataset.refresh_counts();
    Ok(dataset)
}

/// Jitter, drop and confuse the percepts of `dataset`; labels are untouched.
///
/// Every detection consumes the same three draws and every gaze event one,
/// whatever the noise parameters, so runs with one seed and different
/// magnitudes share their randomness.
pub fn apply_noise(dataset: &Dataset, noise: &NoiseModel, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut detections = Vec::with_capacity(dataset.detections.len());
    for d in &dataset.detections {
        let u: f64 = rng.random();
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        if u < noise.detection_drop_rate {
            continue;
        }
        let mut d = d.clone();
        if let Percept::Detection(det) = &mut d.percept {
            if noise.position_sigma > 0.0 {
                det.position.x += noise.position_sigma * zx;
                det.position.y += noise.position_sigma * zy;
            }
        }
        detections.push(d);
    }
    let gaze = dataset
        .gaze
        .iter()
        .map(|g| {
            let u: f64 = rng.random();
            let mut g = g.clone();
            if let Percept::Gaze(event) = &mut g.percept {
                if let Some(row) = event.target.mirror_index().map(|i| noise.gaze_confusion[i]) {
                    let mut acc = 0.0;
                    let mut pick = 2;
                    for (j, p) in row.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            pick = j;
                            break;
                        }
                    }
                    event.target = GazeTarget::MIRRORS[pick];
                }
            }
            g
        })
        .collect();
    let mut out = Dataset { detections, gaze, truth: dataset.truth.clone(), manifest: dataset.manifest.clone() };
    out.manifest.noise = Some(noise.clone());
    out.manifest.noise_seed = Some(seed);
    out.refresh_counts();
    out
}

pub fn distribution_report(dataset: &Dataset) -> DistributionReport {
    DistributionReport::from_truth(&dataset.truth)
}

/// Mean, sample standard deviation and normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_dev: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let std_dev = var.sqrt();
        let half = 1.96 * std_dev / n.sqrt();
        Summary {
            mean,
            std_dev,
            ci95_low: mean - half,
            ci95_high: mean + half,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn ci_width(&self) -> f64 {
        self.ci95_high - self.ci95_low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub trials: usize,
    pub frames_per_trial: usize,
    pub master_seed: u64,
    pub noise: NoiseModel,
    pub zone: Summary,
    pub gaze: Summary,
    pub end_to_end: Summary,
    /// Counts of all trials pooled.
    pub pooled: EvaluationReport,
}

impl MonteCarloReport {
    /// Per-metric statistics followed by the pooled accuracy table and the
    /// published reference rows.
    pub fn render(&self) -> String {
        let mut out = format!(
            "trials: {}  frames/trial: {}  seed: {}  position sigma: {:.4} m  drop rate: {}\n",
            self.trials, self.frames_per_trial, self.master_seed, self.noise.position_sigma, self.noise.detection_drop_rate
        );
        out.push_str("metric        mean    std     95% CI            min     max\n");
        for (name, s) in [("zone", &self.zone), ("gaze", &self.gaze), ("end-to-end", &self.end_to_end)] {
            out.push_str(&format!(
                "{name:<12} {:.4}  {:.4}  [{:.4}, {:.4}]  {:.4}  {:.4}\n",
                s.mean, s.std_dev, s.ci95_low, s.ci95_high, s.min, s.max
            ));
        }
        out.push('\n');
        out.push_str(&render_accuracy_table(&self.pooled.accuracy_table(), Some(&AccuracyTable::published_reference())));
        out
    }
}

/// Run `trials` independent generate, noise, replay and evaluate rounds.
/// Trial seeds derive from `spec.seed`; `noise` is used as given (calibrate it
/// first when it carries targets).
pub fn monte_carlo(spec: &ScenarioSpec, noise: &NoiseModel, trials: usize, config: &Config) -> Result<MonteCarloReport, SimError> {
    if trials == 0 {
        return Err(SimError::Spec("trials must be at least 1".into()));
    }
    spec.validate(config)?;
    noise.validate()?;
    let mut seeder = ChaCha8Rng::seed_from_u64(spec.seed);
    let seeds: Vec<(u64, u64)> = (0..trials).map(|_| (seeder.random(), seeder.random())).collect();
    let reports = seeds
        .par_iter()
        .map(|&(scene_seed, noise_seed)| {
            let clean = generate(&ScenarioSpec { seed: scene_seed, ..spec.clone() }, config)?;
            let noisy = apply_noise(&clean, noise, noise_seed);
            Ok(run_percepts(&noisy.percepts(), &noisy.truth, config)?.report)
        })
        .collect::<Result<Vec<EvaluationReport>, SimError>>()?;
    let metric = |f: fn(&EvaluationReport) -> Option<f64>| Summary::of(&reports.iter().map(|r| f(r).unwrap_or(0.0)).collect::<Vec<_>>());
    Ok(MonteCarloReport {
        trials,
        frames_per_trial: spec.frames,
        master_seed: spec.seed,
        noise: noise.clone(),
        zone: metric(|r| r.zone_accuracy),
        gaze: metric(|r| r.gaze_accuracy),
        end_to_end: metric(|r| r.risk_accuracy),
        pooled: EvaluationReport::merged(&reports),
    })
}
