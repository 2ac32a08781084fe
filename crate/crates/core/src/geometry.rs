//! Vehicle-relative coordinate frames and the rear risk-zone partition.
//!
//! The assessment frame has its origin at the centre of the rear bumper
//! projected to the ground, `x` growing rearward (away from the vehicle) and
//! `y` growing toward the vehicle's left side. Everything in this module is a
//! pure function of an immutable [`ZoneLayout`].

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("bumper half width must be positive and finite, got {0}")]
    BumperWidth(f64),
    #[error("band edges must be positive and strictly increasing, got {0:?}")]
    BandEdges([f64; 4]),
    #[error("outermost band edge must be {expected} m, got {got}")]
    ZoneExtent { expected: f64, got: f64 },
    #[error("processing range {max_x} m is shorter than the zone extent {extent} m")]
    ProcessingRange { max_x: f64, extent: f64 },
    #[error("{0} division line is degenerate (needs two points with distinct x)")]
    DegenerateLine(&'static str),
    #[error("division lines cross or touch at x = {0} within the zone extent")]
    LinesIntersect(f64),
    #[error("A-zone #{0} is not a convex polygon with at least three finite vertices")]
    AZoneShape(usize),
    #[error("arc resolution must be at least 1")]
    ArcResolution,
}

/// Outermost band edge: the zone reaches this far from the bumper contour.
pub const ZONE_EXTENT_M: f64 = 4.0;

/// A point on the ground plane in the assessment frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
}

impl GroundPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Reflection across the vehicle centreline.
    pub fn mirrored(&self) -> Self {
        Self::new(self.x, -self.y)
    }
}

/// A 3D point. Used both in the sensor frame and in the assessment frame
/// (where `z` is height above ground).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn ground(&self) -> GroundPoint {
        GroundPoint::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Mounting of the exterior sensor relative to the bumper origin.
///
/// The sensor frame is the usual vehicle convention: `x` forward, `y` left,
/// `z` up, rotated by `yaw` about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorExtrinsics {
    /// Meters the sensor sits forward of the bumper origin.
    pub forward_offset: f64,
    /// Meters left of the vehicle centreline.
    pub lateral_offset: f64,
    /// Meters above ground.
    pub height: f64,
    /// Radians, sensor frame rotation about the vertical axis.
    pub yaw: f64,
}

impl Default for SensorExtrinsics {
    fn default() -> Self {
        // roof-mounted LiDAR roughly above the rear axle
        Self {
            forward_offset: 1.5,
            lateral_offset: 0.0,
            height: 1.9,
            yaw: 0.0,
        }
    }
}

impl SensorExtrinsics {
    pub fn is_valid(&self) -> bool {
        self.forward_offset.is_finite()
            && self.lateral_offset.is_finite()
            && self.yaw.is_finite()
            && self.height.is_finite()
            && self.height > 0.0
    }
}

/// Sensor frame point to assessment frame: yaw rotation, translation to the
/// bumper origin, then the forward axis is flipped so `x` points rearward.
pub fn sensor_to_assessment(p: Point3, ext: &SensorExtrinsics) -> Point3 {
    let (s, c) = ext.yaw.sin_cos();
    let forward = c * p.x - s * p.y + ext.forward_offset;
    let left = s * p.x + c * p.y + ext.lateral_offset;
    Point3::new(-forward, left, p.z + ext.height)
}

/// Inverse of [`sensor_to_assessment`].
pub fn assessment_to_sensor(p: Point3, ext: &SensorExtrinsics) -> Point3 {
    let (s, c) = ext.yaw.sin_cos();
    let forward = -p.x - ext.forward_offset;
    let left = p.y - ext.lateral_offset;
    Point3::new(c * forward + s * left, -s * forward + c * left, p.z - ext.height)
}

/// Where the bumper origin sits in some fixed world frame, with the heading
/// of the vehicle's forward axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehiclePose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Express a world ground point in the vehicle's assessment frame. The zones
/// travel with the vehicle, so only this relative position matters.
pub fn world_to_assessment(p: GroundPoint, pose: &VehiclePose) -> GroundPoint {
    let (s, c) = pose.heading.sin_cos();
    let dx = p.x - pose.x;
    let dy = p.y - pose.y;
    let forward = c * dx + s * dy;
    let left = -s * dx + c * dy;
    GroundPoint::new(-forward, left)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn mirrored(self) -> Self {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Mirror-visibility column of a sub-zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Column {
    L,
    C,
    R,
}

impl Column {
    pub const ALL: [Column; 3] = [Column::L, Column::C, Column::R];

    pub fn mirrored(self) -> Self {
        match self {
            Column::L => Column::R,
            Column::C => Column::C,
            Column::R => Column::L,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Column::L => 'L',
            Column::C => 'C',
            Column::R => 'R',
        }
    }
}

impl From<Side> for Column {
    fn from(side: Side) -> Self {
        match side {
            Side::Left => Column::L,
            Side::Right => Column::R,
        }
    }
}

/// Label of the region a point falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ZoneRef {
    Zone { column: Column, band: u8 },
    AZone(Side),
    Outside,
}

impl ZoneRef {
    pub const fn zone(column: Column, band: u8) -> Self {
        ZoneRef::Zone { column, band }
    }

    /// Every label a layout can produce, in a fixed order: columns L, C, R by
    /// band, then the A-zones, then `Outside`.
    pub fn all() -> Vec<ZoneRef> {
        let mut out: Vec<ZoneRef> = Column::ALL
            .iter()
            .flat_map(|&column| (1..=4).map(move |band| ZoneRef::zone(column, band)))
            .collect();
        out.push(ZoneRef::AZone(Side::Left));
        out.push(ZoneRef::AZone(Side::Right));
        out.push(ZoneRef::Outside);
        out
    }

    /// Column whose mirror covers this zone, if any.
    pub fn column(&self) -> Option<Column> {
        match *self {
            ZoneRef::Zone { column, .. } => Some(column),
            ZoneRef::AZone(side) => Some(side.into()),
            ZoneRef::Outside => None,
        }
    }

    pub fn band(&self) -> Option<u8> {
        match *self {
            ZoneRef::Zone { band, .. } => Some(band),
            _ => None,
        }
    }

    pub fn mirrored(&self) -> Self {
        match *self {
            ZoneRef::Zone { column, band } => ZoneRef::zone(column.mirrored(), band),
            ZoneRef::AZone(side) => ZoneRef::AZone(side.mirrored()),
            ZoneRef::Outside => ZoneRef::Outside,
        }
    }
}

impl fmt::Display for ZoneRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZoneRef::Zone { column, band } => f.pad(&format!("{}{}", column.letter(), band)),
            ZoneRef::AZone(Side::Left) => f.pad("AL"),
            ZoneRef::AZone(Side::Right) => f.pad("AR"),
            ZoneRef::Outside => f.pad("OUT"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown zone label {0:?}")]
pub struct ZoneLabelError(pub String);

impl FromStr for ZoneRef {
    type Err = ZoneLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ZoneLabelError(s.to_string());
        let upper = s.trim().to_ascii_uppercase();
        match upper.as_str() {
            "AL" => return Ok(ZoneRef::AZone(Side::Left)),
            "AR" => return Ok(ZoneRef::AZone(Side::Right)),
            "OUT" => return Ok(ZoneRef::Outside),
            _ => {}
        }
        let mut chars = upper.chars();
        let column = match chars.next() {
            Some('L') => Column::L,
            Some('C') => Column::C,
            Some('R') => Column::R,
            _ => return Err(err()),
        };
        let band: u8 = chars.as_str().parse().map_err(|_| err())?;
        if !(1..=4).contains(&band) {
            return Err(err());
        }
        Ok(ZoneRef::zone(column, band))
    }
}

impl Serialize for ZoneRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ZoneRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A division line given by two ground points. It is read as a function
/// `y(x)`, so the two points need distinct `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivisionLine {
    pub p0: GroundPoint,
    pub p1: GroundPoint,
}

impl DivisionLine {
    pub const fn new(p0: GroundPoint, p1: GroundPoint) -> Self {
        Self { p0, p1 }
    }

    pub fn y_at(&self, x: f64) -> f64 {
        let slope = (self.p1.y - self.p0.y) / (self.p1.x - self.p0.x);
        self.p0.y + slope * (x - self.p0.x)
    }

    fn is_usable(&self) -> bool {
        self.p0.is_finite() && self.p1.is_finite() && self.p0.x != self.p1.x
    }

    pub fn mirrored(&self) -> Self {
        Self::new(self.p0.mirrored(), self.p1.mirrored())
    }
}

/// Convex lateral zone along one rear flank of the vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AZone {
    pub side: Side,
    pub vertices: Vec<GroundPoint>,
}

impl AZone {
    /// Closed containment test: points on an edge are inside.
    pub fn contains(&self, p: GroundPoint) -> bool {
        let n = self.vertices.len();
        let (mut pos, mut neg) = (false, false);
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
            if cross.is_nan() {
                return false;
            }
            pos |= cross > 0.0;
            neg |= cross < 0.0;
            if pos && neg {
                return false;
            }
        }
        true
    }

    fn is_convex(&self) -> bool {
        let v = &self.vertices;
        let n = v.len();
        if n < 3 || v.iter().any(|p| !p.is_finite()) {
            return false;
        }
        let mut sign = 0.0_f64;
        for i in 0..n {
            let a = v[i];
            let b = v[(i + 1) % n];
            let c = v[(i + 2) % n];
            let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
            if cross == 0.0 {
                continue;
            }
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
        sign != 0.0
    }

    /// Rectangle along a flank, `length` forward from the bumper plane and
    /// `width` outward from the body side, with its outer-rear corner cut.
    pub fn chamfered_flank(side: Side, bumper_half_width: f64, length: f64, width: f64, chamfer: f64) -> Self {
        let inner = bumper_half_width;
        let outer = bumper_half_width + width;
        let left = [
            GroundPoint::new(0.0, inner),
            GroundPoint::new(0.0, outer - chamfer),
            GroundPoint::new(-chamfer, outer),
            GroundPoint::new(-length, outer),
            GroundPoint::new(-length, inner),
        ];
        let vertices = match side {
            Side::Left => left.to_vec(),
            Side::Right => left.iter().rev().map(GroundPoint::mirrored).collect(),
        };
        Self { side, vertices }
    }
}

/// Partition of the area behind the vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZoneLayout {
    /// Half the length of the rear-bumper segment.
    pub bumper_half_width: f64,
    /// Outer edge of each distance band, measured from the bumper contour.
    pub band_edges: [f64; 4],
    pub left_line: DivisionLine,
    pub right_line: DivisionLine,
    pub a_zones: Vec<AZone>,
    pub a_zones_enabled: bool,
    /// Detections at or beyond this `x` are not processed.
    pub processing_max_x: f64,
}

impl Default for ZoneLayout {
    fn default() -> Self {
        let hw = 0.875;
        let left_line = DivisionLine::new(GroundPoint::new(0.0, hw), GroundPoint::new(4.0, 2.0));
        Self {
            bumper_half_width: hw,
            band_edges: [1.0, 2.0, 3.0, 4.0],
            left_line,
            right_line: left_line.mirrored(),
            a_zones: vec![
                AZone::chamfered_flank(Side::Left, hw, 2.0, 1.0, 0.5),
                AZone::chamfered_flank(Side::Right, hw, 2.0, 1.0, 0.5),
            ],
            a_zones_enabled: true,
            processing_max_x: 6.0,
        }
    }
}

impl ZoneLayout {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let hw = self.bumper_half_width;
        if !(hw.is_finite() && hw > 0.0) {
            return Err(LayoutError::BumperWidth(hw));
        }
        let edges = self.band_edges;
        let increasing = edges[0] > 0.0 && edges.windows(2).all(|w| w[0] < w[1]);
        if !increasing || edges.iter().any(|e| !e.is_finite()) {
            return Err(LayoutError::BandEdges(edges));
        }
        if edges[3] != ZONE_EXTENT_M {
            return Err(LayoutError::ZoneExtent { expected: ZONE_EXTENT_M, got: edges[3] });
        }
        if !(self.processing_max_x >= edges[3]) {
            return Err(LayoutError::ProcessingRange { max_x: self.processing_max_x, extent: edges[3] });
        }
        if !self.left_line.is_usable() {
            return Err(LayoutError::DegenerateLine("left"));
        }
        if !self.right_line.is_usable() {
            return Err(LayoutError::DegenerateLine("right"));
        }
        // the gap between two lines is affine in x, so checking both ends suffices
        for x in [0.0, edges[3]] {
            if self.left_line.y_at(x) <= self.right_line.y_at(x) {
                return Err(LayoutError::LinesIntersect(x));
            }
        }
        if let Some(i) = self.a_zones.iter().position(|z| !z.is_convex()) {
            return Err(LayoutError::AZoneShape(i));
        }
        Ok(())
    }

    pub fn extent(&self) -> f64 {
        self.band_edges[3]
    }

    /// True when the layout is its own reflection across the centreline.
    pub fn is_symmetric(&self) -> bool {
        let lines = self.left_line.mirrored() == self.right_line
            || self.left_line.mirrored() == DivisionLine::new(self.right_line.p1, self.right_line.p0);
        let zones = self.a_zones.iter().all(|z| {
            let mut mirrored: Vec<_> = z.vertices.iter().map(GroundPoint::mirrored).collect();
            mirrored.reverse();
            self.a_zones
                .iter()
                .any(|o| o.side == z.side.mirrored() && same_cycle(&o.vertices, &mirrored))
        });
        lines && zones
    }
}

fn same_cycle(a: &[GroundPoint], b: &[GroundPoint]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let n = a.len();
    (0..n).any(|shift| (0..n).all(|i| a[i] == b[(i + shift) % n]))
}

/// Euclidean distance from `p` to the bumper segment `{x = 0, |y| <= half width}`.
pub fn distance_to_bumper(p: GroundPoint, layout: &ZoneLayout) -> f64 {
    let lateral = (p.y.abs() - layout.bumper_half_width).max(0.0);
    p.x.hypot(lateral)
}

/// Points exactly on a division line belong to the centre column.
pub fn classify_column(p: GroundPoint, layout: &ZoneLayout) -> Column {
    if p.y > layout.left_line.y_at(p.x) {
        Column::L
    } else if p.y < layout.right_line.y_at(p.x) {
        Column::R
    } else {
        Column::C
    }
}

/// Band `k` covers distances in `(edge[k-1], edge[k]]`, with distance 0 in
/// band 1. `None` beyond the outermost edge.
pub fn classify_band(distance: f64, layout: &ZoneLayout) -> Option<u8> {
    layout
        .band_edges
        .iter()
        .position(|&edge| distance <= edge)
        .map(|i| i as u8 + 1)
}

pub fn locate(p: GroundPoint, layout: &ZoneLayout) -> ZoneRef {
    if layout.a_zones_enabled {
        if let Some(z) = layout.a_zones.iter().find(|z| z.contains(p)) {
            return ZoneRef::AZone(z.side);
        }
    }
    if !(p.x > 0.0 && p.x < layout.processing_max_x) {
        return ZoneRef::Outside;
    }
    match classify_band(distance_to_bumper(p, layout), layout) {
        Some(band) => ZoneRef::zone(classify_column(p, layout), band),
        None => ZoneRef::Outside,
    }
}

fn segment_distance(p: GroundPoint, a: GroundPoint, b: GroundPoint) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p.x - a.x - t * dx).hypot(p.y - a.y - t * dy)
}

/// Lower bound on the distance from `p` to any boundary used by [`locate`]:
/// band edges, division lines, the `x = 0` and processing-range cut-offs and
/// enabled A-zone edges.
pub fn boundary_clearance(p: GroundPoint, layout: &ZoneLayout) -> f64 {
    let d = distance_to_bumper(p, layout);
    let mut clearance = layout.band_edges.iter().map(|e| (d - e).abs()).fold(f64::INFINITY, f64::min);
    clearance = clearance.min(p.x.abs()).min((p.x - layout.processing_max_x).abs());
    for line in [&layout.left_line, &layout.right_line] {
        let (dx, dy) = (line.p1.x - line.p0.x, line.p1.y - line.p0.y);
        let cross = dx * (p.y - line.p0.y) - dy * (p.x - line.p0.x);
        clearance = clearance.min(cross.abs() / dx.hypot(dy));
    }
    if layout.a_zones_enabled {
        for z in &layout.a_zones {
            let n = z.vertices.len();
            for i in 0..n {
                clearance = clearance.min(segment_distance(p, z.vertices[i], z.vertices[(i + 1) % n]));
            }
        }
    }
    clearance
}

/// A closed polygon (implicit closing edge) approximating one sub-zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonePolygon {
    pub zone: ZoneRef,
    pub vertices: Vec<GroundPoint>,
}

/// Polygon approximation of every sub-zone. Band boundaries are offsets of
/// the bumper segment: straight behind it, circular arcs around its corners,
/// each quarter arc split into `arc_resolution` chords whose vertices lie on
/// the exact boundary.
pub fn zone_polygons(layout: &ZoneLayout, arc_resolution: usize) -> Result<Vec<ZonePolygon>, LayoutError> {
    if arc_resolution == 0 {
        return Err(LayoutError::ArcResolution);
    }
    layout.validate()?;

    let left = layout.left_line;
    let right = layout.right_line;
    let mut out = Vec::with_capacity(14);
    for column in Column::ALL {
        let mut inner = 0.0;
        for (i, &outer) in layout.band_edges.iter().enumerate() {
            let mut poly = band_ring(layout.bumper_half_width, inner, outer, arc_resolution);
            poly = match column {
                Column::L => clip(&poly, |p| p.y - left.y_at(p.x)),
                Column::R => clip(&poly, |p| right.y_at(p.x) - p.y),
                Column::C => {
                    let upper = clip(&poly, |p| left.y_at(p.x) - p.y);
                    clip(&upper, |p| p.y - right.y_at(p.x))
                }
            };
            out.push(ZonePolygon { zone: ZoneRef::zone(column, i as u8 + 1), vertices: poly });
            inner = outer;
        }
    }
    if layout.a_zones_enabled {
        out.extend(layout.a_zones.iter().map(|z| ZonePolygon {
            zone: ZoneRef::AZone(z.side),
            vertices: z.vertices.clone(),
        }));
    }
    Ok(out)
}

/// Offset curve at `radius` from the bumper segment on the `x >= 0` side,
/// running from the left end `(0, hw + r)` to the right end `(0, -hw - r)`.
fn offset_curve(half_width: f64, radius: f64, arc_resolution: usize) -> Vec<GroundPoint> {
    let n = arc_resolution;
    let mut pts = Vec::with_capacity(2 * n + 2);
    for i in 0..=n {
        let a = FRAC_PI_2 * (1.0 - i as f64 / n as f64);
        pts.push(GroundPoint::new(radius * a.cos(), half_width + radius * a.sin()));
    }
    for i in 0..=n {
        let a = -FRAC_PI_2 * (i as f64 / n as f64);
        pts.push(GroundPoint::new(radius * a.cos(), -half_width + radius * a.sin()));
    }
    // exact endpoints; cos(pi/2) is not exactly zero
    pts[0].x = 0.0;
    let last = pts.len() - 1;
    pts[last].x = 0.0;
    pts.dedup();
    pts
}

fn band_ring(half_width: f64, inner: f64, outer: f64, arc_resolution: usize) -> Vec<GroundPoint> {
    let mut ring = offset_curve(half_width, outer, arc_resolution);
    ring.extend(offset_curve(half_width, inner, arc_resolution).into_iter().rev());
    ring.dedup();
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

/// Sutherland-Hodgman clip of `poly` to the half-plane `f(p) >= 0`, `f` affine.
fn clip(poly: &[GroundPoint], f: impl Fn(GroundPoint) -> f64) -> Vec<GroundPoint> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let prev = poly[(i + n - 1) % n];
        let cur = poly[i];
        let (fp, fc) = (f(prev), f(cur));
        if fc >= 0.0 {
            if fp < 0.0 {
                out.push(crossing(prev, cur, fp, fc));
            }
            out.push(cur);
        } else if fp >= 0.0 {
            out.push(crossing(prev, cur, fp, fc));
        }
    }
    out.dedup();
    if out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

fn crossing(a: GroundPoint, b: GroundPoint, fa: f64, fb: f64) -> GroundPoint {
    let t = fa / (fa - fb);
    GroundPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ZoneLayout {
        ZoneLayout::default()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn sensor_transform_examples() {
        let ext = SensorExtrinsics::default();
        let p = sensor_to_assessment(Point3::new(-4.5, 0.2, -1.9), &ext);
        assert!(close(p.x, 3.0, 1e-12) && close(p.y, 0.2, 1e-12) && close(p.z, 0.0, 1e-12), "{p:?}");
        assert_eq!(sensor_to_assessment(Point3::new(-1.5, 0.0, 0.0), &ext), Point3::new(0.0, 0.0, 1.9));
        assert_eq!(sensor_to_assessment(Point3::new(0.0, 0.0, 0.0), &ext), Point3::new(-1.5, 0.0, 1.9));
    }

    #[test]
    fn sensor_transform_with_yaw_and_lateral_offset() {
        // sensor turned 90 degrees left: its x axis points along vehicle +y
        let ext = SensorExtrinsics { forward_offset: 1.0, lateral_offset: 0.3, height: 1.0, yaw: FRAC_PI_2 };
        let p = sensor_to_assessment(Point3::new(2.0, 0.0, 0.0), &ext);
        assert!(close(p.x, -1.0, 1e-12) && close(p.y, 2.3, 1e-12), "{p:?}");
        let back = assessment_to_sensor(p, &ext);
        assert!(close(back.x, 2.0, 1e-12) && close(back.y, 0.0, 1e-12) && close(back.z, 0.0, 1e-12));
    }

    #[test]
    fn bumper_distance_examples() {
        let l = layout();
        assert_eq!(distance_to_bumper(GroundPoint::new(2.0, 0.0), &l), 2.0);
        assert_eq!(distance_to_bumper(GroundPoint::new(0.0, 0.875), &l), 0.0);
        let d = distance_to_bumper(GroundPoint::new(3.0, 2.875), &l);
        assert!(close(d, 13f64.sqrt(), 1e-12));
        assert!(close(d, 3.606, 5e-4));
    }

    #[test]
    fn column_examples() {
        let l = layout();
        assert_eq!(classify_column(GroundPoint::new(2.0, 2.0), &l), Column::L);
        assert_eq!(classify_column(GroundPoint::new(2.0, 0.0), &l), Column::C);
        assert_eq!(classify_column(GroundPoint::new(2.0, -2.0), &l), Column::R);
        // on the line: centre
        assert_eq!(classify_column(GroundPoint::new(2.0, 1.4375), &l), Column::C);
        assert_eq!(classify_column(GroundPoint::new(2.0, -1.4375), &l), Column::C);
    }

    #[test]
    fn band_examples() {
        let l = layout();
        assert_eq!(classify_band(0.0, &l), Some(1));
        assert_eq!(classify_band(0.5, &l), Some(1));
        assert_eq!(classify_band(2.9, &l), Some(3));
        assert_eq!(classify_band(4.5, &l), None);
        assert_eq!(classify_band(2.0, &l), Some(2));
        assert_eq!(classify_band(4.0, &l), Some(4));
    }

    #[test]
    fn locate_examples() {
        let l = layout();
        assert_eq!(locate(GroundPoint::new(1.5, 0.0), &l), ZoneRef::zone(Column::C, 2));
        assert_eq!(locate(GroundPoint::new(-0.5, 0.0), &l), ZoneRef::Outside);
        assert_eq!(locate(GroundPoint::new(2.9, 0.0), &l), ZoneRef::zone(Column::C, 3));
        assert_eq!(locate(GroundPoint::new(0.0, 0.0), &l), ZoneRef::Outside);
        assert_eq!(locate(GroundPoint::new(5.0, 0.0), &l), ZoneRef::Outside);
        assert_eq!(locate(GroundPoint::new(f64::NAN, 0.0), &l), ZoneRef::Outside);
    }

    #[test]
    fn a_zones_sit_along_the_flanks() {
        let mut l = layout();
        assert_eq!(locate(GroundPoint::new(-1.0, 1.4), &l), ZoneRef::AZone(Side::Left));
        assert_eq!(locate(GroundPoint::new(-1.0, -1.4), &l), ZoneRef::AZone(Side::Right));
        // chamfered corner is cut away
        assert_eq!(locate(GroundPoint::new(-0.1, 1.8), &l), ZoneRef::Outside);
        // forward of the A-zone
        assert_eq!(locate(GroundPoint::new(-2.5, 1.4), &l), ZoneRef::Outside);
        l.a_zones_enabled = false;
        assert_eq!(locate(GroundPoint::new(-1.0, 1.4), &l), ZoneRef::Outside);
    }

    #[test]
    fn default_layout_is_valid_and_symmetric() {
        let l = layout();
        l.validate().unwrap();
        assert!(l.is_symmetric());
    }

    #[test]
    fn invalid_layouts_rejected() {
        let mut l = layout();
        l.band_edges = [1.0, 3.0, 2.0, 4.0];
        assert!(matches!(l.validate(), Err(LayoutError::BandEdges(_))));

        let mut l = layout();
        l.band_edges = [1.0, 2.0, 3.0, 5.0];
        assert!(matches!(l.validate(), Err(LayoutError::ZoneExtent { .. })));

        let mut l = layout();
        l.processing_max_x = 3.0;
        assert!(matches!(l.validate(), Err(LayoutError::ProcessingRange { .. })));

        let mut l = layout();
        l.left_line = DivisionLine::new(GroundPoint::new(0.0, 0.5), GroundPoint::new(4.0, -2.0));
        assert!(matches!(l.validate(), Err(LayoutError::LinesIntersect(_))));
        assert!(zone_polygons(&l, 8).is_err());

        let mut l = layout();
        l.right_line = DivisionLine::new(GroundPoint::new(1.0, 0.0), GroundPoint::new(1.0, -2.0));
        assert_eq!(l.validate(), Err(LayoutError::DegenerateLine("right")));

        let mut l = layout();
        l.a_zones[1].vertices.truncate(2);
        assert_eq!(l.validate(), Err(LayoutError::AZoneShape(1)));
    }

    #[test]
    fn zone_labels_round_trip() {
        for z in ZoneRef::all() {
            assert_eq!(z.to_string().parse::<ZoneRef>().unwrap(), z);
        }
        assert_eq!("c3".parse::<ZoneRef>().unwrap(), ZoneRef::zone(Column::C, 3));
        assert!("C5".parse::<ZoneRef>().is_err());
        assert!("X1".parse::<ZoneRef>().is_err());
    }

    #[test]
    fn polygon_count() {
        let polys = zone_polygons(&layout(), 8).unwrap();
        assert_eq!(polys.len(), 14);
        let mut l = layout();
        l.a_zones_enabled = false;
        assert_eq!(zone_polygons(&l, 8).unwrap().len(), 12);
        assert_eq!(zone_polygons(&l, 0), Err(LayoutError::ArcResolution));
    }

    #[test]
    fn world_frame_follows_vehicle() {
        let pose = VehiclePose { x: 10.0, y: 5.0, heading: 0.0 };
        let p = world_to_assessment(GroundPoint::new(7.0, 5.5), &pose);
        assert!(close(p.x, 3.0, 1e-12) && close(p.y, 0.5, 1e-12));
        // heading pi: vehicle faces -x, so a point at larger world x is behind it
        let pose = VehiclePose { x: 0.0, y: 0.0, heading: std::f64::consts::PI };
        let p = world_to_assessment(GroundPoint::new(2.0, 1.0), &pose);
        assert!(close(p.x, 2.0, 1e-12) && close(p.y, -1.0, 1e-12));
    }
}
