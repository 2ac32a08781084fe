use dras_core::config::Config;
use dras_core::simulator::{monte_carlo, NoiseModel, ScenarioSpec, Summary};

#[test]
fn interval_width_follows_trial_count() {
    let config = Config::default();
    let spec = ScenarioSpec { seed: 11, frames: 200, ..ScenarioSpec::default() };
    let noise = NoiseModel { position_sigma: 0.15, ..NoiseModel::default() };
    let small = monte_carlo(&spec, &noise, 16, &config).unwrap();
    let large = monte_carlo(&spec, &noise, 64, &config).unwrap();

    for s in [&small.zone, &large.zone] {
        assert!(s.std_dev > 0.0);
    }
    let expected = |s: &Summary, n: f64| 2.0 * 1.96 * s.std_dev / n.sqrt();
    assert!((small.zone.ci_width() - expected(&small.zone, 16.0)).abs() < 1e-12);
    assert!((large.zone.ci_width() - expected(&large.zone, 64.0)).abs() < 1e-12);
    // four times the trials halves the interval, up to the spread estimate
    let ratio = large.zone.ci_width() / small.zone.ci_width();
    assert!((0.3..0.75).contains(&ratio), "ratio {ratio}");
}

#[test]
fn same_master_seed_same_report() {
    let config = Config::default();
    let spec = ScenarioSpec { seed: 3, frames: 100, ..ScenarioSpec::default() };
    let noise = NoiseModel { position_sigma: 0.1, detection_drop_rate: 0.05, ..NoiseModel::default() };
    let a = monte_carlo(&spec, &noise, 6, &config).unwrap();
    let b = monte_carlo(&spec, &noise, 6, &config).unwrap();
    assert_eq!(a.render(), b.render());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
