//! Local Dynamic Map: a layered, time-indexed in-process store.
//!
//! The four classic layers (static map data up to dynamic road users) are
//! extended with an `Interior` layer holding driver-monitoring events. Each
//! layer keeps one ordered time index per source id. Records are immutable
//! once stored and handed out as `Arc`s.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ExteriorDetection, GazeEvent, Percept, SourcedPercept};

/// Milliseconds since the epoch.
pub type Millis = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LdmLayer {
    Static,
    QuasiStatic,
    SemiDynamic,
    DynamicExterior,
    Interior,
}

impl LdmLayer {
    pub const ALL: [LdmLayer; 5] = [
        LdmLayer::Static,
        LdmLayer::QuasiStatic,
        LdmLayer::SemiDynamic,
        LdmLayer::DynamicExterior,
        LdmLayer::Interior,
    ];

    /// Layers subject to [`Ldm::prune`].
    pub fn is_dynamic(self) -> bool {
        !matches!(self, LdmLayer::Static | LdmLayer::QuasiStatic)
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for LdmLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LdmLayer::Static => "static",
            LdmLayer::QuasiStatic => "quasi_static",
            LdmLayer::SemiDynamic => "semi_dynamic",
            LdmLayer::DynamicExterior => "dynamic_exterior",
            LdmLayer::Interior => "interior",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Detections { detections: Vec<ExteriorDetection> },
    Gaze(GazeEvent),
    /// Opaque map data; the store never looks inside.
    MapData { blob: String },
}

impl Payload {
    fn fits(&self, layer: LdmLayer) -> bool {
        match self {
            Payload::Detections { .. } => layer == LdmLayer::DynamicExterior,
            Payload::Gaze(_) => layer == LdmLayer::Interior,
            Payload::MapData { .. } => {
                matches!(layer, LdmLayer::Static | LdmLayer::QuasiStatic | LdmLayer::SemiDynamic)
            }
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Payload::Detections { .. } => "detections",
            Payload::Gaze(_) => "gaze",
            Payload::MapData { .. } => "map_data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdmRecord {
    pub layer: LdmLayer,
    pub source_id: String,
    pub timestamp: Millis,
    pub payload: Payload,
}

impl LdmRecord {
    pub fn new(layer: LdmLayer, source_id: impl Into<String>, timestamp: Millis, payload: Payload) -> Self {
        Self { layer, source_id: source_id.into(), timestamp, payload }
    }

    pub fn gaze(&self) -> Option<&GazeEvent> {
        match &self.payload {
            Payload::Gaze(g) => Some(g),
            _ => None,
        }
    }

    pub fn detections(&self) -> Option<&[ExteriorDetection]> {
        match &self.payload {
            Payload::Detections { detections } => Some(detections),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), LdmError> {
        if self.timestamp == 0 {
            return Err(LdmError::ZeroTimestamp);
        }
        if !self.payload.fits(self.layer) {
            return Err(LdmError::LayerMismatch { layer: self.layer, payload: self.payload.tag() });
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdmError {
    #[error("{payload} payload does not belong in the {layer} layer")]
    LayerMismatch { layer: LdmLayer, payload: &'static str },
    #[error("record timestamp must be positive")]
    ZeroTimestamp,
    #[error("empty range: t0 {t0} is after t1 {t1}")]
    InvertedRange { t0: Millis, t1: Millis },
    #[error("snapshot line {line}: {message}")]
    Snapshot { line: usize, message: String },
}

/// Usable records are at most `staleness` ms older than `at`, and not newer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryWindow {
    pub at: Millis,
    pub staleness: Millis,
}

impl QueryWindow {
    pub fn new(at: Millis, staleness: Millis) -> Self {
        Self { at, staleness }
    }

    fn oldest(&self) -> Millis {
        self.at.saturating_sub(self.staleness)
    }
}

type SourceIndex = BTreeMap<Millis, Arc<LdmRecord>>;
type LayerIndex = BTreeMap<String, SourceIndex>;

/// Thread-safe store. Writers take a layer's write lock for one insert only;
/// each query holds the read lock for its whole scan, so it sees one
/// consistent state of that layer.
#[derive(Debug, Default)]
pub struct Ldm {
    layers: [RwLock<LayerIndex>; 5],
}

impl Ldm {
    pub fn new() -> Self {
        Self::default()
    }

    fn layer(&self, layer: LdmLayer) -> &RwLock<LayerIndex> {
        &self.layers[layer.index()]
    }

    /// Store a record; an existing record with the same (layer, source,
    /// timestamp) is replaced.
    pub fn insert(&self, record: LdmRecord) -> Result<(), LdmError> {
        record.validate()?;
        let mut index = self.layer(record.layer).write();
        index
            .entry(record.source_id.clone())
            .or_default()
            .insert(record.timestamp, Arc::new(record));
        Ok(())
    }

    /// Add one detection to the set stored for (source, timestamp), creating
    /// the set if needed. An identical detection already in the set is not
    /// added twice.
    pub fn append_detection(&self, source_id: &str, detection: ExteriorDetection) -> Result<(), LdmError> {
        let t = detection.timestamp;
        if t == 0 {
            return Err(LdmError::ZeroTimestamp);
        }
        let mut index = self.layer(LdmLayer::DynamicExterior).write();
        let by_time = index.entry(source_id.to_string()).or_default();
        let mut detections = by_time
            .get(&t)
            .and_then(|r| r.detections())
            .map(<[_]>::to_vec)
            .unwrap_or_default();
        if detections.contains(&detection) {
            return Ok(());
        }
        detections.push(detection);
        let record = LdmRecord::new(LdmLayer::DynamicExterior, source_id, t, Payload::Detections { detections });
        by_time.insert(t, Arc::new(record));
        Ok(())
    }

    /// Route a parsed percept to its layer.
    pub fn ingest(&self, percept: &SourcedPercept) -> Result<(), LdmError> {
        match &percept.percept {
            Percept::Detection(d) => self.append_detection(&percept.source, d.clone()),
            Percept::Gaze(g) => self.insert(LdmRecord::new(
                LdmLayer::Interior,
                percept.source.clone(),
                g.timestamp,
                Payload::Gaze(g.clone()),
            )),
        }
    }

    pub fn latest(&self, layer: LdmLayer, source_id: &str, window: QueryWindow) -> Option<Arc<LdmRecord>> {
        let index = self.layer(layer).read();
        latest_in(index.get(source_id)?, window)
    }

    /// Newest record of the layer across every source; ties on timestamp go
    /// to the lexicographically smallest source id.
    pub fn latest_any(&self, layer: LdmLayer, window: QueryWindow) -> Option<Arc<LdmRecord>> {
        let index = self.layer(layer).read();
        let mut best: Option<Arc<LdmRecord>> = None;
        for by_time in index.values() {
            if let Some(r) = latest_in(by_time, window) {
                if best.as_ref().is_none_or(|b| r.timestamp > b.timestamp) {
                    best = Some(r);
                }
            }
        }
        best
    }

    /// Records with `t0 <= timestamp <= t1`, ascending by timestamp then source.
    pub fn range(&self, layer: LdmLayer, t0: Millis, t1: Millis) -> Result<Vec<Arc<LdmRecord>>, LdmError> {
        if t0 > t1 {
            return Err(LdmError::InvertedRange { t0, t1 });
        }
        let index = self.layer(layer).read();
        let mut out: Vec<Arc<LdmRecord>> = index
            .values()
            .flat_map(|by_time| by_time.range(t0..=t1).map(|(_, r)| Arc::clone(r)))
            .collect();
        // sources iterate in key order, so a stable sort by time keeps source order on ties
        out.sort_by_key(|r| r.timestamp);
        Ok(out)
    }

    /// Drop every dynamic-layer record older than `before`. Static and
    /// quasi-static data is kept.
    pub fn prune(&self, before: Millis) -> usize {
        let mut removed = 0;
        for layer in LdmLayer::ALL.into_iter().filter(|l| l.is_dynamic()) {
            let mut index = self.layer(layer).write();
            for by_time in index.values_mut() {
                let keep = by_time.split_off(&before);
                removed += by_time.len();
                *by_time = keep;
            }
            index.retain(|_, by_time| !by_time.is_empty());
        }
        removed
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.read().values().map(BTreeMap::len).sum::<usize>())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every record as one JSON line, ordered by layer, source, timestamp.
    pub fn export_snapshot(&self) -> String {
        let mut out = String::new();
        for layer in LdmLayer::ALL {
            let index = self.layer(layer).read();
            for r in index.values().flat_map(BTreeMap::values) {
                out.push_str(&serde_json::to_string(r.as_ref()).expect("records serialize"));
                out.push('\n');
            }
        }
        out
    }

    /// Load records produced by [`export_snapshot`](Self::export_snapshot).
    pub fn import_snapshot(&self, text: &str) -> Result<usize, LdmError> {
        let mut count = 0;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let record: LdmRecord = serde_json::from_str(line)
                .map_err(|e| LdmError::Snapshot { line: i + 1, message: e.to_string() })?;
            self.insert(record).map_err(|e| LdmError::Snapshot { line: i + 1, message: e.to_string() })?;
            count += 1;
        }
        Ok(count)
    }
}

fn latest_in(by_time: &SourceIndex, window: QueryWindow) -> Option<Arc<LdmRecord>> {
    by_time
        .range(window.oldest()..=window.at)
        .next_back()
        .map(|(_, r)| Arc::clone(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use crate::ingest::ObjectClass;
    use crate::risk::GazeTarget;

    fn gaze(t: Millis, target: GazeTarget) -> LdmRecord {
        LdmRecord::new(LdmLayer::Interior, "dms0", t, Payload::Gaze(GazeEvent { timestamp: t, target, confidence: 1.0 }))
    }

    fn det(t: Millis, x: f64) -> ExteriorDetection {
        ExteriorDetection {
            timestamp: t,
            object_class: ObjectClass::Pedestrian,
            position: Point3::new(x, 0.0, -1.0),
            confidence: 0.9,
            track_id: None,
        }
    }

    #[test]
    fn write_then_read() {
        let ldm = Ldm::new();
        ldm.insert(gaze(1000, GazeTarget::Left)).unwrap();
        let r = ldm.latest(LdmLayer::Interior, "dms0", QueryWindow::new(1000, 0)).unwrap();
        assert_eq!(r.gaze().unwrap().target, GazeTarget::Left);
    }

    #[test]
    fn rejects_layer_mismatch() {
        let ldm = Ldm::new();
        let bad = LdmRecord::new(LdmLayer::Interior, "lidar0", 5, Payload::Detections { detections: vec![det(5, 1.0)] });
        assert_eq!(ldm.insert(bad), Err(LdmError::LayerMismatch { layer: LdmLayer::Interior, payload: "detections" }));
        let bad = LdmRecord::new(LdmLayer::Static, "dms0", 5, Payload::Gaze(GazeEvent { timestamp: 5, target: GazeTarget::Left, confidence: 1.0 }));
        assert!(ldm.insert(bad).is_err());
        assert_eq!(ldm.insert(gaze(0, GazeTarget::Left)), Err(LdmError::ZeroTimestamp));
        assert!(ldm.is_empty());
    }

    #[test]
    fn same_key_overwrites() {
        let ldm = Ldm::new();
        ldm.insert(gaze(1000, GazeTarget::Left)).unwrap();
        ldm.insert(gaze(1000, GazeTarget::Right)).unwrap();
        assert_eq!(ldm.len(), 1);
        let r = ldm.latest(LdmLayer::Interior, "dms0", QueryWindow::new(1000, 10)).unwrap();
        assert_eq!(r.gaze().unwrap().target, GazeTarget::Right);
    }

    #[test]
    fn latest_respects_staleness() {
        let ldm = Ldm::new();
        for t in [900, 1000, 1100] {
            ldm.insert(gaze(t, GazeTarget::Center)).unwrap();
        }
        let at = |at, staleness| ldm.latest(LdmLayer::Interior, "dms0", QueryWindow::new(at, staleness)).map(|r| r.timestamp);
        assert_eq!(at(1050, 500), Some(1000));
        assert_eq!(at(1050, 10), None);
        assert_eq!(at(1100, 0), Some(1100));
        assert_eq!(at(899, 1000), None);
        assert_eq!(Ldm::new().latest(LdmLayer::Interior, "dms0", QueryWindow::new(1050, 500)), None);
    }

    #[test]
    fn latest_any_picks_newest_source() {
        let ldm = Ldm::new();
        ldm.append_detection("lidar_b", det(100, 1.0)).unwrap();
        ldm.append_detection("lidar_a", det(90, 2.0)).unwrap();
        let r = ldm.latest_any(LdmLayer::DynamicExterior, QueryWindow::new(100, 50)).unwrap();
        assert_eq!(r.source_id, "lidar_b");
        ldm.append_detection("lidar_a", det(100, 3.0)).unwrap();
        let r = ldm.latest_any(LdmLayer::DynamicExterior, QueryWindow::new(100, 50)).unwrap();
        assert_eq!(r.source_id, "lidar_a");
    }

    #[test]
    fn range_is_insertion_order_independent() {
        let records: Vec<LdmRecord> = (1..=5).map(|i| gaze(i * 100, GazeTarget::MIRRORS[i as usize % 3])).collect();
        let a = Ldm::new();
        let b = Ldm::new();
        for r in &records {
            a.insert(r.clone()).unwrap();
        }
        for r in records.iter().rev() {
            b.insert(r.clone()).unwrap();
        }
        let ra = a.range(LdmLayer::Interior, 150, 450).unwrap();
        let rb = b.range(LdmLayer::Interior, 150, 450).unwrap();
        assert_eq!(ra.iter().map(|r| r.timestamp).collect::<Vec<_>>(), vec![200, 300, 400]);
        assert_eq!(ra, rb);
        assert!(a.range(LdmLayer::Interior, 1, 50).unwrap().is_empty());
        assert_eq!(a.range(LdmLayer::Interior, 10, 5), Err(LdmError::InvertedRange { t0: 10, t1: 5 }));
    }

    #[test]
    fn prune_spares_static_layers() {
        let ldm = Ldm::new();
        assert_eq!(ldm.prune(1000), 0);
        ldm.insert(LdmRecord::new(LdmLayer::Static, "map", 1, Payload::MapData { blob: "lanes".into() })).unwrap();
        for t in [100, 500, 1000, 1500] {
            ldm.insert(gaze(t, GazeTarget::Left)).unwrap();
            ldm.append_detection("lidar0", det(t, 1.0)).unwrap();
        }
        assert_eq!(ldm.prune(1000), 4);
        assert!(ldm.range(LdmLayer::Interior, 0, 999).unwrap().is_empty());
        assert!(ldm.range(LdmLayer::DynamicExterior, 0, 999).unwrap().is_empty());
        assert_eq!(ldm.range(LdmLayer::Interior, 0, 2000).unwrap().len(), 2);
        assert_eq!(ldm.range(LdmLayer::Static, 0, 10).unwrap().len(), 1);
    }

    #[test]
    fn append_merges_and_dedups() {
        let ldm = Ldm::new();
        ldm.append_detection("lidar0", det(100, 1.0)).unwrap();
        ldm.append_detection("lidar0", det(100, 2.0)).unwrap();
        ldm.append_detection("lidar0", det(100, 2.0)).unwrap();
        let r = ldm.latest(LdmLayer::DynamicExterior, "lidar0", QueryWindow::new(100, 0)).unwrap();
        assert_eq!(r.detections().unwrap().len(), 2);
        assert_eq!(ldm.len(), 1);
    }

    #[test]
    fn snapshot_round_trip() {
        let ldm = Ldm::new();
        ldm.insert(LdmRecord::new(LdmLayer::QuasiStatic, "map", 3, Payload::MapData { blob: "sign".into() })).unwrap();
        ldm.insert(gaze(10, GazeTarget::Right)).unwrap();
        ldm.append_detection("lidar0", det(10, 4.25)).unwrap();
        let text = ldm.export_snapshot();
        let copy = Ldm::new();
        assert_eq!(copy.import_snapshot(&text).unwrap(), 3);
        assert_eq!(copy.export_snapshot(), text);
        assert!(matches!(copy.import_snapshot("{oops"), Err(LdmError::Snapshot { line: 1, .. })));
    }
}
