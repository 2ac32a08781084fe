//! Scoring predicted assessments against labeled frames.
//!
//! Three accuracies are reported, each broken down by recording scenario and
//! true gaze: zone assignment ("Ped. detector"), gaze classification ("Gaze
//! detector") and the end-to-end risk level ("DRAS").

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::ZoneRef;
use crate::ldm::Millis;
use crate::pipeline::TickOutput;
use crate::risk::{GazeTarget, RiskLevel};

/// Recording condition a frame belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Interior,
    Exterior,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::Interior, Scenario::Exterior];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Scenario::Interior => "Interior",
            Scenario::Exterior => "Exterior",
        })
    }
}

/// Ground truth for one pedestrian in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub t: Millis,
    /// Track id; `None` means the frame is scored by its highest-risk assessment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ped: Option<String>,
    pub x: f64,
    pub y: f64,
    pub zone: ZoneRef,
    pub gaze: GazeTarget,
    pub risk: RiskLevel,
    pub scenario: Scenario,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error(
        "frame sets differ: {} truth frame(s) without prediction {:?}, {} predicted frame(s) without truth {:?}",
        missing_predictions.len(), missing_predictions, unexpected_predictions.len(), unexpected_predictions
    )]
    Alignment { missing_predictions: Vec<Millis>, unexpected_predictions: Vec<Millis> },
    #[error("truth line {line}: {message}")]
    Truth { line: usize, message: String },
}

/// Square count matrix, rows = truth, columns = prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self { labels, counts: vec![vec![0; n]; n] }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }

    /// Share of all counts lying off the diagonal.
    pub fn off_diagonal_mass(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| (total - self.trace()) as f64 / total as f64)
    }

    fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
    }
}

/// Correct/total counters for the three scored quantities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub rows: u64,
    pub zone_correct: u64,
    pub gaze_correct: u64,
    pub risk_correct: u64,
}

impl Tally {
    fn ratio(correct: u64, rows: u64) -> Option<f64> {
        (rows > 0).then(|| correct as f64 / rows as f64)
    }

    pub fn zone(&self) -> Option<f64> {
        Self::ratio(self.zone_correct, self.rows)
    }

    pub fn gaze(&self) -> Option<f64> {
        Self::ratio(self.gaze_correct, self.rows)
    }

    pub fn risk(&self) -> Option<f64> {
        Self::ratio(self.risk_correct, self.rows)
    }

    fn add(&mut self, other: &Tally) {
        self.rows += other.rows;
        self.zone_correct += other.zone_correct;
        self.gaze_correct += other.gaze_correct;
        self.risk_correct += other.risk_correct;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellTally {
    pub scenario: Scenario,
    pub gaze: GazeTarget,
    #[serde(flatten)]
    pub tally: Tally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub overall: Tally,
    pub zone_accuracy: Option<f64>,
    pub gaze_accuracy: Option<f64>,
    pub risk_accuracy: Option<f64>,
    /// One entry per (scenario, true gaze) pair, scenarios then gazes in order.
    pub cells: Vec<CellTally>,
    pub zone_confusion: ConfusionMatrix,
    pub gaze_confusion: ConfusionMatrix,
    pub risk_confusion: ConfusionMatrix,
    pub distribution: DistributionReport,
}

fn zone_labels() -> Vec<ZoneRef> {
    ZoneRef::all()
}

impl EvaluationReport {
    fn empty() -> Self {
        let mut cells = Vec::new();
        for scenario in Scenario::ALL {
            for gaze in GazeTarget::ALL {
                cells.push(CellTally { scenario, gaze, tally: Tally::default() });
            }
        }
        Self {
            overall: Tally::default(),
            zone_accuracy: None,
            gaze_accuracy: None,
            risk_accuracy: None,
            cells,
            zone_confusion: ConfusionMatrix::new(zone_labels().iter().map(ToString::to_string).collect()),
            gaze_confusion: ConfusionMatrix::new(GazeTarget::ALL.iter().map(ToString::to_string).collect()),
            risk_confusion: ConfusionMatrix::new(RiskLevel::ALL.iter().map(ToString::to_string).collect()),
            distribution: DistributionReport::default(),
        }
    }

    fn cell_mut(&mut self, scenario: Scenario, gaze: GazeTarget) -> &mut Tally {
        let i = scenario.index() * GazeTarget::ALL.len() + GazeTarget::ALL.iter().position(|g| *g == gaze).unwrap();
        &mut self.cells[i].tally
    }

    pub fn cell(&self, scenario: Scenario, gaze: GazeTarget) -> &Tally {
        &self
            .cells
            .iter()
            .find(|c| c.scenario == scenario && c.gaze == gaze)
            .expect("every cell exists")
            .tally
    }

    fn finish(mut self) -> Self {
        self.zone_accuracy = self.overall.zone();
        self.gaze_accuracy = self.overall.gaze();
        self.risk_accuracy = self.overall.risk();
        self
    }

    /// Pool the counts of several reports.
    pub fn merged<'a>(reports: impl IntoIterator<Item = &'a EvaluationReport>) -> Self {
        let mut out = Self::empty();
        for r in reports {
            out.overall.add(&r.overall);
            for (mine, theirs) in out.cells.iter_mut().zip(&r.cells) {
                mine.tally.add(&theirs.tally);
            }
            out.zone_confusion.merge(&r.zone_confusion);
            out.gaze_confusion.merge(&r.gaze_confusion);
            out.risk_confusion.merge(&r.risk_confusion);
            out.distribution.merge(&r.distribution);
        }
        out.finish()
    }

    pub fn accuracy_table(&self) -> AccuracyTable {
        let mut table = AccuracyTable::default();
        for (s, scenario) in Scenario::ALL.into_iter().enumerate() {
            for (g, gaze) in GazeTarget::MIRRORS.into_iter().enumerate() {
                let t = self.cell(scenario, gaze);
                let col = s * 3 + g;
                table.cells[0][col] = t.zone();
                table.cells[1][col] = t.gaze();
                table.cells[2][col] = t.risk();
            }
        }
        table.overall = [self.zone_accuracy, self.gaze_accuracy, self.risk_accuracy];
        table
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Score `predicted` ticks against `truth` rows. Both must cover exactly the
/// same frame timestamps.
pub fn evaluate(predicted: &[TickOutput], truth: &[TruthRow]) -> Result<EvaluationReport, EvalError> {
    let by_time: BTreeMap<Millis, &TickOutput> = predicted.iter().map(|t| (t.timestamp, t)).collect();
    let truth_times: BTreeSet<Millis> = truth.iter().map(|r| r.t).collect();
    let predicted_times: BTreeSet<Millis> = by_time.keys().copied().collect();
    if truth_times != predicted_times {
        return Err(EvalError::Alignment {
            missing_predictions: truth_times.difference(&predicted_times).copied().collect(),
            unexpected_predictions: predicted_times.difference(&truth_times).copied().collect(),
        });
    }

    let zones = zone_labels();
    let zone_index = |z: ZoneRef| zones.iter().position(|x| *x == z).expect("zone label exists");
    let gaze_index = |g: GazeTarget| GazeTarget::ALL.iter().position(|x| *x == g).unwrap();
    let risk_index = |r: RiskLevel| RiskLevel::ALL.iter().position(|x| *x == r).unwrap();

    let mut report = EvaluationReport::empty();
    report.distribution = DistributionReport::from_truth(truth);
    for row in truth {
        let tick = by_time[&row.t];
        let matched = match &row.ped {
            Some(id) => tick.assessments.iter().find(|a| &a.pedestrian == id),
            // first of the highest-risk assessments
            None => tick.assessments.iter().rev().max_by_key(|a| a.risk),
        };
        // an undetected pedestrian counts as placed outside every zone
        let (zone, risk) = matched.map_or((ZoneRef::Outside, RiskLevel::VeryLow), |a| (a.zone, a.risk));
        let gaze = tick.gaze_used;

        let tally = Tally {
            rows: 1,
            zone_correct: u64::from(zone == row.zone),
            gaze_correct: u64::from(gaze == row.gaze),
            risk_correct: u64::from(risk == row.risk),
        };
        report.overall.add(&tally);
        report.cell_mut(row.scenario, row.gaze).add(&tally);
        report.zone_confusion.add(zone_index(row.zone), zone_index(zone));
        report.gaze_confusion.add(gaze_index(row.gaze), gaze_index(gaze));
        report.risk_confusion.add(risk_index(row.risk), risk_index(risk));
    }
    Ok(report.finish())
}

pub fn read_truth(text: &str) -> Result<Vec<TruthRow>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Truth { line: i + 1, message: e.to_string() }))
        .collect()
}

pub fn write_truth(rows: &[TruthRow]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("truth serializes"));
        out.push('\n');
    }
    out
}

/// Accuracy figures in the layout of the published accuracy table: rows
/// zone / gaze / risk, columns interior left..right then exterior left..right.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AccuracyTable {
    pub cells: [[Option<f64>; 6]; 3],
    pub overall: [Option<f64>; 3],
}

impl AccuracyTable {
    /// Figures reported for the physical dataset, printed for comparison.
    pub fn published_reference() -> Self {
        let row = |v: [f64; 6]| v.map(Some);
        Self {
            cells: [
                row([0.77, 0.98, 0.99, 0.88, 0.95, 0.95]),
                row([0.55, 0.34, 1.0, 1.0, 1.0, 0.45]),
                row([0.87, 0.74, 0.99, 0.88, 0.99, 0.51]),
            ],
            overall: [Some(0.92), Some(0.73), Some(0.83)],
        }
    }
}

const ROW_NAMES: [&str; 3] = ["Ped. detector", "Gaze detector", "DRAS"];

fn fmt_acc(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

/// Plain-text table: scenario and gaze header rows, one row per detector.
/// A `reference` table, when given, is appended below a separator.
pub fn render_accuracy_table(table: &AccuracyTable, reference: Option<&AccuracyTable>) -> String {
    let mut out = String::new();
    let block = |cells: &[Option<f64>]| cells.iter().map(|c| format!("{:>6}", fmt_acc(*c))).collect::<Vec<_>>().join(" ");
    let gazes = ["left", "center", "right"].map(|g| format!("{g:>6}")).join(" ");
    let rule = format!("{:-<20}+{:-<22}+{:-<22}+{:-<6}", "", "", "", "");
    let _ = writeln!(out, "{:<20}|{:^22}|{:^22}|{:^6}", "Scenario", "Interior", "Exterior", "Acc");
    let _ = writeln!(out, "{:<20}| {gazes} | {gazes} |", "Driver gaze");
    let _ = writeln!(out, "{rule}");
    let rows = |out: &mut String, t: &AccuracyTable, suffix: &str| {
        for (i, name) in ROW_NAMES.iter().enumerate() {
            let label = format!("{name}{suffix}");
            let _ = writeln!(
                out,
                "{:<20}| {} | {} | {:>4}",
                label,
                block(&t.cells[i][..3]),
                block(&t.cells[i][3..]),
                fmt_acc(t.overall[i])
            );
        }
    };
    rows(&mut out, table, "");
    if let Some(reference) = reference {
        let _ = writeln!(out, "{rule}");
        rows(&mut out, reference, " (ref)");
    }
    crate::trim_lines(&out)
}

/// Labeled rows per risk class, true gaze and scenario. Rows whose risk has
/// no class code (very low) or whose gaze is unknown are only counted in
/// `excluded`, so the table cells plus `excluded` equal `total`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionReport {
    /// `counts[class][scenario * 3 + gaze]`.
    pub counts: [[u64; 6]; 4],
    pub excluded: u64,
    pub total: u64,
}

fn percent(part: u64, whole: u64) -> u64 {
    if whole == 0 {
        0
    } else {
        ((part as f64 / whole as f64) * 100.0).round() as u64
    }
}

impl DistributionReport {
    pub fn from_truth(rows: &[TruthRow]) -> Self {
        let mut out = Self::default();
        for r in rows {
            out.total += 1;
            match (r.risk.class_code(), r.gaze.mirror_index()) {
                (Some(class), Some(g)) => out.counts[class as usize][r.scenario.index() * 3 + g] += 1,
                _ => out.excluded += 1,
            }
        }
        out
    }

    pub fn tabulated(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn scenario_total(&self, scenario: Scenario) -> u64 {
        let s = scenario.index() * 3;
        self.counts.iter().map(|row| row[s..s + 3].iter().sum::<u64>()).sum()
    }

    /// Share of tabulated rows in a risk class, rounded to whole percent.
    pub fn row_percent(&self, class: usize) -> u64 {
        percent(self.row_total(class), self.tabulated())
    }

    pub fn scenario_percent(&self, scenario: Scenario) -> u64 {
        percent(self.scenario_total(scenario), self.tabulated())
    }

    fn merge(&mut self, other: &DistributionReport) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
        self.excluded += other.excluded;
        self.total += other.total;
    }

    /// Plain-text table: scenario and gaze header rows, one row per risk
    /// class with its share, scenario shares along the bottom.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let rule = format!("{:-<11}+{:-<22}+{:-<22}+{:-<10}", "", "", "", "");
        let gazes = ["left", "center", "right"].map(|g| format!("{g:>6}")).join(" ");
        let _ = writeln!(out, "{:<11}|{:^22}|{:^22}| Total (%)", "Scenario", "Interior", "Exterior");
        let _ = writeln!(out, "{:<11}| {gazes} | {gazes} |", "Gaze");
        let _ = writeln!(out, "{rule}");
        for class in 0..4 {
            let cells = |s: usize| self.counts[class][s * 3..s * 3 + 3].iter().map(|c| format!("{c:>6}")).collect::<Vec<_>>().join(" ");
            let _ = writeln!(
                out,
                "{:<11}| {} | {} | {:>8}",
                format!("risk {class}"),
                cells(0),
                cells(1),
                format!("{}%", self.row_percent(class))
            );
        }
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(
            out,
            "{:<11}|{:^22}|{:^22}|",
            "Total (%)",
            format!("{}%", self.scenario_percent(Scenario::Interior)),
            format!("{}%", self.scenario_percent(Scenario::Exterior))
        );
        let _ = writeln!(out, "rows: {} tabulated, {} excluded (very low risk or unknown gaze)", self.tabulated(), self.excluded);
        crate::trim_lines(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::geometry::{Column, GroundPoint};
    use crate::pipeline::assess_positions;

    fn truth_for(tick: &TickOutput, scenario: Scenario) -> Vec<TruthRow> {
        tick.assessments
            .iter()
            .map(|a| TruthRow {
                t: a.timestamp,
                ped: Some(a.pedestrian.clone()),
                x: a.x,
                y: a.y,
                zone: a.zone,
                gaze: tick.gaze_used,
                risk: a.risk,
                scenario,
            })
            .collect()
    }

    fn frames(n: u64) -> Vec<TickOutput> {
        let config = Config::default();
        (1..=n)
            .map(|i| {
                let gaze = GazeTarget::MIRRORS[(i % 3) as usize];
                let p = GroundPoint::new(0.3 + (i % 5) as f64 * 0.9, -3.0 + (i % 7) as f64);
                assess_positions(i * 100, gaze, [(format!("p{i}"), p)], &config)
            })
            .collect()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let ticks = frames(100);
        let truth: Vec<_> = ticks.iter().flat_map(|t| truth_for(t, Scenario::Exterior)).collect();
        let r = evaluate(&ticks, &truth).unwrap();
        assert_eq!(r.overall.rows, 100);
        assert_eq!((r.zone_accuracy, r.gaze_accuracy, r.risk_accuracy), (Some(1.0), Some(1.0), Some(1.0)));
        assert_eq!(r.risk_confusion.off_diagonal_mass(), Some(0.0));
    }

    #[test]
    fn wrong_gaze_in_c1_still_scores_risk() {
        let config = Config::default();
        let mut ticks = Vec::new();
        let mut truth = Vec::new();
        for i in 1..=30u64 {
            let true_gaze = GazeTarget::MIRRORS[(i % 3) as usize];
            let wrong = GazeTarget::MIRRORS[((i + 1) % 3) as usize];
            let p = GroundPoint::new(0.1 + (i % 8) as f64 * 0.1, 0.0);
            let honest = assess_positions(i, true_gaze, [("a".to_string(), p)], &config);
            truth.extend(truth_for(&honest, Scenario::Interior));
            ticks.push(assess_positions(i, wrong, [("a".to_string(), p)], &config));
        }
        assert!(truth.iter().all(|r| r.zone == ZoneRef::zone(Column::C, 1)));
        let r = evaluate(&ticks, &truth).unwrap();
        assert_eq!(r.risk_accuracy, Some(1.0));
        assert_eq!(r.gaze_accuracy, Some(0.0));
        assert_eq!(r.zone_accuracy, Some(1.0));
    }

    #[test]
    fn misaligned_frames_are_listed() {
        let ticks = frames(5);
        let mut truth: Vec<_> = ticks.iter().flat_map(|t| truth_for(t, Scenario::Exterior)).collect();
        truth[0].t = 42;
        let e = evaluate(&ticks, &truth).unwrap_err();
        assert_eq!(e, EvalError::Alignment { missing_predictions: vec![42], unexpected_predictions: vec![100] });
    }

    #[test]
    fn missing_pedestrian_counts_as_outside() {
        let config = Config::default();
        let tick = assess_positions(7, GazeTarget::Left, Vec::new(), &config);
        let truth = vec![TruthRow {
            t: 7,
            ped: Some("ghost".into()),
            x: 1.0,
            y: 0.0,
            zone: ZoneRef::zone(Column::C, 1),
            gaze: GazeTarget::Left,
            risk: RiskLevel::VeryHigh,
            scenario: Scenario::Exterior,
        }];
        let r = evaluate(&[tick], &truth).unwrap();
        assert_eq!(r.zone_accuracy, Some(0.0));
        assert_eq!(r.gaze_accuracy, Some(1.0));
        let outside = r.zone_confusion.labels.iter().position(|l| l == "OUT").unwrap();
        let c1 = r.zone_confusion.labels.iter().position(|l| l == "C1").unwrap();
        assert_eq!(r.zone_confusion.counts[c1][outside], 1);
    }

    #[test]
    fn untracked_truth_uses_scene_max() {
        let config = Config::default();
        let tick = assess_positions(
            9,
            GazeTarget::Center,
            [("x".to_string(), GroundPoint::new(3.5, 0.0)), ("y".to_string(), GroundPoint::new(1.5, 3.0))],
            &config,
        );
        let top = tick.assessments.iter().max_by_key(|a| a.risk).unwrap().clone();
        let truth = vec![TruthRow {
            t: 9,
            ped: None,
            x: top.x,
            y: top.y,
            zone: top.zone,
            gaze: GazeTarget::Center,
            risk: tick.scene_max,
            scenario: Scenario::Exterior,
        }];
        assert_eq!(evaluate(&[tick], &truth).unwrap().risk_accuracy, Some(1.0));
    }

    #[test]
    fn truth_lines_round_trip() {
        let ticks = frames(4);
        let truth: Vec<_> = ticks.iter().flat_map(|t| truth_for(t, Scenario::Interior)).collect();
        assert_eq!(read_truth(&write_truth(&truth)).unwrap(), truth);
        assert!(matches!(read_truth("{}"), Err(EvalError::Truth { line: 1, .. })));
    }

    #[test]
    fn merge_pools_counts() {
        let ticks = frames(10);
        let truth: Vec<_> = ticks.iter().flat_map(|t| truth_for(t, Scenario::Exterior)).collect();
        let r = evaluate(&ticks, &truth).unwrap();
        let m = EvaluationReport::merged([&r, &r]);
        assert_eq!(m.overall.rows, 20);
        assert_eq!(m.zone_confusion.total(), 20);
        assert_eq!(m.risk_accuracy, Some(1.0));
    }

    #[test]
    fn empty_report_renders_dashes() {
        let text = render_accuracy_table(&EvaluationReport::empty().finish().accuracy_table(), None);
        assert!(text.contains("     -"));
    }
}
