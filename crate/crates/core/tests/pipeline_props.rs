use dras_core::config::Config;
use dras_core::eval::{evaluate, ConfusionMatrix};
use dras_core::geometry::{locate, GroundPoint, ZoneRef};
use dras_core::pipeline::{assess_positions, run_percepts};
use dras_core::risk::{assess, GazeTarget, RiskLevel};
use dras_core::simulator::{generate, ScenarioSpec};
use proptest::prelude::*;

fn gaze() -> impl Strategy<Value = GazeTarget> {
    prop::sample::select(GazeTarget::ALL.to_vec())
}

fn pedestrians() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-3.0..6.0f64, -6.0..6.0f64), 0..6)
}

fn named(points: &[(f64, f64)]) -> Vec<(String, GroundPoint)> {
    points.iter().enumerate().map(|(i, &(x, y))| (format!("p{i}"), GroundPoint::new(x, y))).collect()
}

proptest! {
    #[test]
    fn c1_and_outside_ignore_gaze(points in pedestrians(), g1 in gaze(), g2 in gaze()) {
        let config = Config::default();
        let a = assess_positions(0, g1, named(&points), &config);
        let b = assess_positions(0, g2, named(&points), &config);
        for (x, y) in a.assessments.iter().zip(&b.assessments) {
            if x.zone == ZoneRef::Outside || x.zone.to_string() == "C1" {
                prop_assert_eq!(x.risk, y.risk);
            }
        }
    }

    #[test]
    fn scene_max_is_monotone_in_pedestrians(points in pedestrians(), extra in (-3.0..6.0f64, -6.0..6.0f64), g in gaze()) {
        let config = Config::default();
        let before = assess_positions(0, g, named(&points), &config);
        let mut more = points.clone();
        more.push(extra);
        let after = assess_positions(0, g, named(&more), &config);
        prop_assert!(after.scene_max >= before.scene_max);
        let expected = before.assessments.iter().map(|a| a.risk).max().unwrap_or(RiskLevel::VeryLow);
        prop_assert_eq!(before.scene_max, expected);
    }

    #[test]
    fn accuracy_is_one_minus_off_diagonal_mass(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)) {
        let mut m = ConfusionMatrix::new(["a", "b", "c", "d"].map(String::from).to_vec());
        for (t, p) in &pairs {
            m.add(*t, *p);
        }
        let acc = m.accuracy().unwrap();
        prop_assert!((acc - (1.0 - m.off_diagonal_mass().unwrap())).abs() < 1e-12);
        let hits = pairs.iter().filter(|(t, p)| t == p).count();
        prop_assert!((acc - hits as f64 / pairs.len() as f64).abs() < 1e-12);
    }
}

#[test]
fn unknown_gaze_scores_like_unaware_driver() {
    // with every gaze event removed the driver counts as unaware of every
    // column, so end-to-end accuracy is the share of rows whose truth already
    // equals the unaware level
    let config = Config::default();
    let spec = ScenarioSpec { seed: 5, frames: 800, ..ScenarioSpec::default() };
    let dataset = generate(&spec, &config).unwrap();
    let run = run_percepts(&dataset.detections, &dataset.truth, &config).unwrap();
    let expected = dataset
        .truth
        .iter()
        .filter(|r| assess(locate(GroundPoint::new(r.x, r.y), &config.layout), GazeTarget::Unknown, &config.risk) == r.risk)
        .count() as f64
        / dataset.truth.len() as f64;
    assert!(expected > 0.0 && expected < 1.0, "{expected}");
    assert_eq!(run.report.risk_accuracy, Some(expected));
    assert_eq!(run.report.zone_accuracy, Some(1.0));
    assert!(run.ticks.iter().all(|t| t.gaze_used == GazeTarget::Unknown));

    let again = evaluate(&run.ticks, &dataset.truth).unwrap();
    assert_eq!(again, run.report);
}
