//! Sources that drive the stream: a paced dataset replay and a live ticker.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use dras_core::config::Config;
use dras_core::ingest::{Percept, ReplaySpeed, SourcedPercept};
use dras_core::ldm::{Ldm, LdmError, LdmLayer, Millis, QueryWindow};
use dras_core::pipeline::tick;

use crate::hub::StreamHub;

/// Feed `percepts` into `ldm` in timestamp order and publish one tick per
/// distinct detection timestamp, after every percept up to that time is in.
/// Returns the number of frames published.
pub async fn replay_into(
    percepts: Vec<SourcedPercept>,
    speed: ReplaySpeed,
    ldm: Arc<Ldm>,
    hub: Arc<StreamHub>,
    config: Arc<Config>,
) -> Result<usize, LdmError> {
    let mut percepts = percepts;
    percepts.sort_by_key(SourcedPercept::timestamp);
    let frame_times: BTreeSet<Millis> = percepts
        .iter()
        .filter(|p| matches!(p.percept, Percept::Detection(_)))
        .map(SourcedPercept::timestamp)
        .collect();

    let mut next = 0;
    let mut previous: Option<Millis> = None;
    let mut published = 0;
    for t in frame_times {
        while next < percepts.len() && percepts[next].timestamp() <= t {
            ldm.ingest(&percepts[next])?;
            next += 1;
        }
        match (speed, previous) {
            (ReplaySpeed::Factor(f), Some(prev)) if f.is_finite() && f > 0.0 => {
                tokio::time::sleep(Duration::from_secs_f64((t - prev) as f64 / 1000.0 / f)).await;
            }
            _ => tokio::task::yield_now().await,
        }
        if hub.publish(tick(&ldm, t, &config)) {
            published += 1;
        }
        previous = Some(t);
    }
    for p in &percepts[next..] {
        ldm.ingest(p)?;
    }
    Ok(published)
}

/// Poll `ldm` every `period` and publish a tick whenever a newer detection
/// set has arrived. Runs until the task is aborted.
pub async fn live_ticker(ldm: Arc<Ldm>, hub: Arc<StreamHub>, config: Arc<Config>, period: Duration) {
    let mut interval = tokio::time::interval(period);
    let mut last: Millis = hub.last().map_or(0, |f| f.timestamp);
    loop {
        interval.tick().await;
        let newest = ldm
            .latest_any(LdmLayer::DynamicExterior, QueryWindow::new(Millis::MAX, Millis::MAX))
            .map(|r| r.timestamp);
        if let Some(t) = newest.filter(|t| *t > last) {
            hub.publish(tick(&ldm, t, &config));
            last = t;
        }
    }
}
