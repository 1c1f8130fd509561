//! Spatial statistics between objects, camera-relative placement, analytic
//! settling and relation labelling.
//!
//! Scene coordinates are y-up. [`pairwise_geometry`] follows the survey
//! convention where `z` is vertical; map scene positions with
//! [`Position::to_survey`] before calling it. Angles cross the API in
//! degrees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Relation;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Swaps y and z so the scene's up axis becomes the survey `z`.
    pub fn to_survey(self) -> Position {
        Position::new(self.x, self.z, self.y)
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = (other.x - self.x, other.y - self.y, other.z - self.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Distance `d` (m), plunge `p` in [-90, 90] and azimuth `a` in [0, 360).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryTriple {
    pub d: f64,
    pub p: f64,
    pub a: f64,
}

fn normalize_degrees(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Distance, plunge and azimuth from `p1` to `p2` with `z` vertical.
///
/// The azimuth uses the full-quadrant arctangent of `dy / dx`. For a purely
/// vertical pair it is 0 by convention.
pub fn pairwise_geometry(p1: Position, p2: Position) -> Result<GeometryTriple> {
    let (dx, dy, dz) = (p2.x - p1.x, p2.y - p1.y, p2.z - p1.z);
    let d = (dx * dx + dy * dy + dz * dz).sqrt();
    if d == 0.0 {
        return Err(Error::DegeneratePair);
    }
    let p = (dz / d).clamp(-1.0, 1.0).asin().to_degrees();
    let a = normalize_degrees(dy.atan2(dx).to_degrees());
    Ok(GeometryTriple { d, p, a })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub x_c: f64,
    pub y_c: f64,
    pub z_c: f64,
    /// Look direction in the ground plane, degrees from +x toward +z.
    pub theta_c: f64,
    /// Floor height.
    pub y_0: f64,
}

impl CameraConfig {
    pub fn new(x_c: f64, y_c: f64, z_c: f64, theta_c: f64, y_0: f64) -> Self {
        Self {
            x_c,
            y_c,
            z_c,
            theta_c: normalize_degrees(theta_c),
            y_0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementRequest {
    /// Horizontal distance from the camera (m).
    pub r: f64,
    /// Object direction, degrees.
    pub theta: f64,
    /// Initial height of the object's reference point above the floor.
    pub h: f64,
}

/// Default bound on |theta - theta_c|.
pub const MAX_PLACEMENT_OFFSET_DEG: f64 = 30.0;

/// Signed angular difference `a - b` wrapped into (-180, 180].
pub fn angle_offset(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Places an object at distance `r` and direction `theta` from the camera,
/// `h` above the floor.
pub fn place_object(camera: &CameraConfig, req: &PlacementRequest) -> Result<Position> {
    place_object_within(camera, req, MAX_PLACEMENT_OFFSET_DEG)
}

pub fn place_object_within(
    camera: &CameraConfig,
    req: &PlacementRequest,
    max_offset_deg: f64,
) -> Result<Position> {
    if !(req.r > 0.0) || !req.r.is_finite() {
        return Err(Error::Domain(format!("placement distance must be positive, got {}", req.r)));
    }
    if !(req.h >= 0.0) || !req.h.is_finite() {
        return Err(Error::Domain(format!("drop height must be non-negative, got {}", req.h)));
    }
    let off = angle_offset(req.theta, camera.theta_c);
    if off.abs() > max_offset_deg + 1e-9 {
        return Err(Error::Domain(format!(
            "direction {} is {off:.2}° from the view axis (limit {max_offset_deg}°)",
            req.theta
        )));
    }
    let t = req.theta.to_radians();
    Ok(Position::new(
        camera.x_c + req.r * t.cos(),
        camera.y_0 + req.h,
        camera.z_c + req.r * t.sin(),
    ))
}

/// Axis-aligned rectangle in the ground (x, z) plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Footprint {
    pub fn around(center: Position, extents: [f64; 3]) -> Self {
        Self {
            x_min: center.x - extents[0] / 2.0,
            x_max: center.x + extents[0] / 2.0,
            z_min: center.z - extents[2] / 2.0,
            z_max: center.z + extents[2] / 2.0,
        }
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.z_min..=self.z_max).contains(&z)
    }

    pub fn intersects(&self, other: &Footprint, margin: f64) -> bool {
        self.x_min < other.x_max + margin
            && other.x_min < self.x_max + margin
            && self.z_min < other.z_max + margin
            && other.z_min < self.z_max + margin
    }
}

/// A horizontal surface objects can rest on. `footprint == None` is unbounded (the floor).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub height: f64,
    pub footprint: Option<Footprint>,
}

impl Support {
    pub fn floor(y_0: f64) -> Self {
        Self {
            height: y_0,
            footprint: None,
        }
    }

    pub fn top_of(center: Position, extents: [f64; 3]) -> Self {
        Self {
            height: center.y + extents[1] / 2.0,
            footprint: Some(Footprint::around(center, extents)),
        }
    }

    fn holds(&self, x: f64, z: f64) -> bool {
        self.footprint.map_or(true, |f| f.contains(x, z))
    }
}

const SETTLE_EPS: f64 = 1e-9;

/// Drops a box with center `position` straight down onto the highest support
/// that lies under its (x, z) center and at or below its bottom face.
pub fn settle(position: Position, extents: [f64; 3], supports: &[Support]) -> Result<Position> {
    let bottom = position.y - extents[1] / 2.0;
    let rest = supports
        .iter()
        .filter(|s| s.holds(position.x, position.z) && s.height <= bottom + SETTLE_EPS)
        .map(|s| s.height)
        .fold(None, |best: Option<f64>, h| Some(best.map_or(h, |b| b.max(h))));
    match rest {
        Some(h) => Ok(Position::new(position.x, h + extents[1] / 2.0, position.z)),
        None => Err(Error::FallsOutside {
            x: position.x,
            z: position.z,
        }),
    }
}

/// Settles several boxes, lowest first, each settled top becoming a support
/// for the ones after it. The result is in input order.
pub fn settle_all(objects: &[(Position, [f64; 3])], base: &[Support]) -> Result<Vec<Position>> {
    let mut order: Vec<usize> = (0..objects.len()).collect();
    let bottom = |i: usize| objects[i].0.y - objects[i].1[1] / 2.0;
    order.sort_by(|&a, &b| bottom(a).total_cmp(&bottom(b)).then(a.cmp(&b)));

    let mut supports = base.to_vec();
    let mut out = vec![Position::new(0.0, 0.0, 0.0); objects.len()];
    for i in order {
        let (pos, ext) = objects[i];
        let settled = settle(pos, ext, &supports)?;
        supports.push(Support::top_of(settled, ext));
        out[i] = settled;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    /// Single-linkage distance threshold (m).
    pub threshold: f64,
    /// |plunge| at or above which a pair is vertical (degrees).
    pub plunge_cutoff: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            threshold: 1.5,
            plunge_cutoff: 45.0,
        }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage cluster labels (smallest member index as representative).
pub fn single_linkage(points: &[Position], threshold: f64) -> Vec<usize> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if points[i].distance(&points[j]) <= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Relation of `subject` with respect to `object` as seen from a camera
/// looking along `camera_yaw_deg`. Returns `None` for coincident points.
pub fn relate(subject: Position, object: Position, camera_yaw_deg: f64, plunge_cutoff: f64) -> Option<Relation> {
    let g = pairwise_geometry(object.to_survey(), subject.to_survey()).ok()?;
    if g.p >= plunge_cutoff {
        return Some(Relation::OnTopOf);
    }
    if g.p <= -plunge_cutoff {
        return Some(Relation::Under);
    }
    let rel = (g.a - camera_yaw_deg).to_radians();
    let (lateral, depth) = (rel.sin(), rel.cos());
    Some(if lateral < 0.0 {
        Relation::LeftOf
    } else if lateral > 0.0 {
        Relation::RightOf
    } else if depth < 0.0 {
        Relation::InFrontOf
    } else {
        Relation::Behind
    })
}

/// Clusters objects by single linkage and labels every ordered pair inside a
/// cluster. Each unordered pair is labelled once and emitted with its
/// inverse, so the output is closed under relation inversion.
pub fn cluster_and_relate(
    objects: &[(u32, Position)],
    camera_yaw_deg: f64,
    cfg: &ClusterConfig,
) -> Vec<(u32, Relation, u32)> {
    let points: Vec<Position> = objects.iter().map(|(_, p)| *p).collect();
    let labels = single_linkage(&points, cfg.threshold);
    let mut out = Vec::new();
    for i in 0..objects.len() {
        for j in i + 1..objects.len() {
            if labels[i] != labels[j] {
                continue;
            }
            let (a, pa) = objects[i];
            let (b, pb) = objects[j];
            if let Some(rel) = relate(pa, pb, camera_yaw_deg, cfg.plunge_cutoff) {
                out.push((a, rel, b));
                out.push((b, rel.inverse(), a));
            }
        }
    }
    out
}
