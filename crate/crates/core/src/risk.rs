//! Five-level risk scale, time to collision, and the driver-awareness
//! escalation rules.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Column, ZoneRef};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("reverse speed must be positive and finite, got {0} m/s")]
    Speed(f64),
    #[error("reaction time must be positive and finite, got {0} s")]
    ReactionTime(f64),
    #[error("distance must be non-negative, got {0} m")]
    Distance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLevel {
    VeryLow,
    Low,
    Moderate,
    High,
    VeryHigh,
}

impl RiskLevel {
    pub const ALL: [RiskLevel; 5] = [
        RiskLevel::VeryLow,
        RiskLevel::Low,
        RiskLevel::Moderate,
        RiskLevel::High,
        RiskLevel::VeryHigh,
    ];

    /// Dataset class code. `VeryLow` lies outside the zones and has none.
    pub fn class_code(self) -> Option<u8> {
        match self {
            RiskLevel::VeryLow => None,
            RiskLevel::Low => Some(0),
            RiskLevel::Moderate => Some(1),
            RiskLevel::High => Some(2),
            RiskLevel::VeryHigh => Some(3),
        }
    }

    pub fn from_class_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(RiskLevel::Low),
            1 => Some(RiskLevel::Moderate),
            2 => Some(RiskLevel::High),
            3 => Some(RiskLevel::VeryHigh),
            _ => None,
        }
    }

    /// Display colour name; hues are left to the renderer.
    pub fn color(self) -> &'static str {
        match self {
            RiskLevel::VeryLow => "gray",
            RiskLevel::Low => "green",
            RiskLevel::Moderate => "yellow",
            RiskLevel::High => "orange",
            RiskLevel::VeryHigh => "red",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLevel::VeryLow => "very_low",
            RiskLevel::Low => "low",
            RiskLevel::Moderate => "moderate",
            RiskLevel::High => "high",
            RiskLevel::VeryHigh => "very_high",
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown risk level {0:?}")]
pub struct RiskLevelParseError(pub String);

impl FromStr for RiskLevel {
    type Err = RiskLevelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RiskLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| RiskLevelParseError(s.to_string()))
    }
}

/// Which rear-view mirror the driver is looking at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GazeTarget {
    Left,
    Center,
    Right,
    /// No usable gaze (stale or absent stream).
    Unknown,
}

impl GazeTarget {
    pub const MIRRORS: [GazeTarget; 3] = [GazeTarget::Left, GazeTarget::Center, GazeTarget::Right];
    pub const ALL: [GazeTarget; 4] = [GazeTarget::Left, GazeTarget::Center, GazeTarget::Right, GazeTarget::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            GazeTarget::Left => "left",
            GazeTarget::Center => "center",
            GazeTarget::Right => "right",
            GazeTarget::Unknown => "unknown",
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            GazeTarget::Left => GazeTarget::Right,
            GazeTarget::Right => GazeTarget::Left,
            other => other,
        }
    }

    /// Index into a mirror-only table (`None` for `Unknown`).
    pub fn mirror_index(self) -> Option<usize> {
        match self {
            GazeTarget::Left => Some(0),
            GazeTarget::Center => Some(1),
            GazeTarget::Right => Some(2),
            GazeTarget::Unknown => None,
        }
    }
}

impl fmt::Display for GazeTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown gaze target {0:?} (expected left, center, right or unknown)")]
pub struct GazeParseError(pub String);

impl FromStr for GazeTarget {
    type Err = GazeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GazeTarget::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| GazeParseError(s.to_string()))
    }
}

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskParameters {
    /// Backing speed in m/s.
    pub reverse_speed: f64,
    /// Driver reaction time in seconds.
    pub reaction_time: f64,
    /// Base level of the lateral A-zones.
    pub a_zone_base: RiskLevel,
}

impl Default for RiskParameters {
    fn default() -> Self {
        Self {
            reverse_speed: kmh_to_mps(5.0),
            reaction_time: 1.5,
            a_zone_base: RiskLevel::Low,
        }
    }
}

impl RiskParameters {
    pub fn validate(&self) -> Result<(), RiskError> {
        if !(self.reverse_speed.is_finite() && self.reverse_speed > 0.0) {
            return Err(RiskError::Speed(self.reverse_speed));
        }
        if !(self.reaction_time.is_finite() && self.reaction_time > 0.0) {
            return Err(RiskError::ReactionTime(self.reaction_time));
        }
        Ok(())
    }
}

/// Time to collision with the vehicle closing at `speed`; the pedestrian's
/// own motion is ignored.
pub fn ttc(distance: f64, speed: f64) -> Result<f64, RiskError> {
    if !(speed.is_finite() && speed > 0.0) {
        return Err(RiskError::Speed(speed));
    }
    if distance.is_nan() || distance < 0.0 {
        return Err(RiskError::Distance(distance));
    }
    Ok(distance / speed)
}

/// Distance covered during the reaction time. Braking distance is not added
/// at parking speeds.
pub fn stopping_distance(params: &RiskParameters) -> f64 {
    params.reverse_speed * params.reaction_time
}

/// Risk from distance alone, i.e. with the driver watching the zone.
pub fn base_risk(zone: ZoneRef, params: &RiskParameters) -> RiskLevel {
    match zone {
        ZoneRef::Zone { column: Column::C, band: 1 } => RiskLevel::VeryHigh,
        ZoneRef::Zone { band: 1 | 2, .. } => RiskLevel::High,
        ZoneRef::Zone { band: 3, .. } => RiskLevel::Moderate,
        ZoneRef::Zone { .. } => RiskLevel::Low,
        ZoneRef::AZone(_) => params.a_zone_base,
        ZoneRef::Outside => RiskLevel::VeryLow,
    }
}

/// The driver is aware of a column only while looking at its mirror.
pub fn is_aware(column: Column, gaze: GazeTarget) -> bool {
    matches!(
        (column, gaze),
        (Column::L, GazeTarget::Left) | (Column::C, GazeTarget::Center) | (Column::R, GazeTarget::Right)
    )
}

/// Unawareness promotes High to VeryHigh and Moderate to High; nothing else moves.
pub fn escalate(base: RiskLevel, aware: bool) -> RiskLevel {
    if aware {
        return base;
    }
    match base {
        RiskLevel::High => RiskLevel::VeryHigh,
        RiskLevel::Moderate => RiskLevel::High,
        other => other,
    }
}

pub fn assess(zone: ZoneRef, gaze: GazeTarget, params: &RiskParameters) -> RiskLevel {
    match zone {
        ZoneRef::Zone { column: Column::C, band: 1 } => RiskLevel::VeryHigh,
        ZoneRef::Outside => RiskLevel::VeryLow,
        _ => {
            let aware = zone.column().is_some_and(|c| is_aware(c, gaze));
            escalate(base_risk(zone, params), aware)
        }
    }
}

/// Materialized (zone, aware) -> level table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RiskMatrix {
    entries: BTreeMap<(ZoneRef, bool), RiskLevel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub zone: ZoneRef,
    pub aware: bool,
    pub risk: RiskLevel,
}

/// Gaze that makes the driver aware of `column`.
fn gaze_for(column: Column) -> GazeTarget {
    match column {
        Column::L => GazeTarget::Left,
        Column::C => GazeTarget::Center,
        Column::R => GazeTarget::Right,
    }
}

impl RiskMatrix {
    pub fn get(&self, zone: ZoneRef, aware: bool) -> RiskLevel {
        self.entries[&(zone, aware)]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ZoneRef, bool, RiskLevel)> + '_ {
        self.entries.iter().map(|(&(z, a), &r)| (z, a, r))
    }

    /// Level per zone for a given gaze, in [`ZoneRef::all`] order.
    pub fn for_gaze(&self, gaze: GazeTarget) -> Vec<(ZoneRef, RiskLevel)> {
        ZoneRef::all()
            .into_iter()
            .map(|z| {
                let aware = z.column().is_some_and(|c| is_aware(c, gaze));
                (z, self.get(z, aware))
            })
            .collect()
    }

    pub fn records(&self) -> Vec<MatrixRecord> {
        ZoneRef::all()
            .into_iter()
            .flat_map(|zone| {
                [true, false].map(|aware| MatrixRecord { zone, aware, risk: self.get(zone, aware) })
            })
            .collect()
    }

    /// One JSON record per line.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&serde_json::to_string(&r).expect("matrix record serializes"));
            out.push('\n');
        }
        out
    }

    /// Aware/unaware table over every zone.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<6}| {:<10}| {:<10}", "zone", "aware", "unaware");
        let _ = writeln!(out, "{:-<6}+{:-<11}+{:-<11}", "", "", "");
        for z in ZoneRef::all() {
            let _ = writeln!(out, "{:<6}| {:<10}| {:<10}", z.to_string(), self.get(z, true), self.get(z, false));
        }
        crate::trim_lines(&out)
    }

    /// Band-by-column panel for one gaze, plus the A-zones and outside.
    pub fn render_gaze_panel(&self, gaze: GazeTarget) -> String {
        let levels: BTreeMap<ZoneRef, RiskLevel> = self.for_gaze(gaze).into_iter().collect();
        let mut out = String::new();
        let _ = writeln!(out, "gaze: {gaze}");
        let _ = writeln!(out, "{:<6}| {:<10}| {:<10}| {:<10}", "band", "L", "C", "R");
        let _ = writeln!(out, "{:-<6}+{:-<11}+{:-<11}+{:-<11}", "", "", "", "");
        for band in 1..=4u8 {
            let cells = Column::ALL.map(|c| levels[&ZoneRef::zone(c, band)]);
            let _ = writeln!(out, "{:<6}| {:<10}| {:<10}| {:<10}", band, cells[0], cells[1], cells[2]);
        }
        let _ = writeln!(out, "{:-<6}+{:-<11}+{:-<11}+{:-<11}", "", "", "", "");
        for z in [
            ZoneRef::AZone(crate::geometry::Side::Left),
            ZoneRef::AZone(crate::geometry::Side::Right),
            ZoneRef::Outside,
        ] {
            let _ = writeln!(out, "{:<6}| {}", z.to_string(), levels[&z]);
        }
        crate::trim_lines(&out)
    }
}

pub fn risk_matrix(params: &RiskParameters) -> RiskMatrix {
    let mut entries = BTreeMap::new();
    for zone in ZoneRef::all() {
        for aware in [true, false] {
            let level = match zone.column() {
                // realize each awareness state through a concrete gaze so the
                // table cannot drift from `assess`
                Some(column) => {
                    let gaze = if aware { gaze_for(column) } else { GazeTarget::Unknown };
                    assess(zone, gaze, params)
                }
                None => assess(zone, GazeTarget::Unknown, params),
            };
            entries.insert((zone, aware), level);
        }
    }
    RiskMatrix { entries }
}
