//! Scenario data model: floors, portals, signs and named points, plus the
//! coarse visibility queries used before rendering.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{self, Segment, Vec2};
use crate::perception::CameraPose;

/// Offset from a sign's center along its normal used as the sight-line
/// target, so wall-mounted signs are not hidden by the wall they hang on.
pub const SIGN_FACE_OFFSET: f64 = 0.05;

/// How far inside an obstacle a wall-mounted sign's center may sit.
pub const WALL_MOUNT_TOLERANCE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignId(pub u32);

impl fmt::Display for SignId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Floor {
    pub id: String,
    /// Counterclockwise outline of the walkable hall.
    pub outline: Vec<Vec2>,
    #[serde(default)]
    pub obstacles: Vec<Vec<Vec2>>,
    #[serde(default)]
    pub elevation: f64,
}

impl Floor {
    /// Every wall edge: the outline followed by all obstacle edges.
    pub fn wall_segments(&self) -> Vec<Segment> {
        let mut walls: Vec<Segment> = geometry::polygon_edges(&self.outline).collect();
        for obs in &self.obstacles {
            walls.extend(geometry::polygon_edges(obs));
        }
        walls
    }

    /// Inside the outline (boundary included) and not strictly inside an obstacle.
    pub fn is_walkable(&self, p: Vec2) -> bool {
        geometry::contains_closed(&self.outline, p)
            && !self.obstacles.iter().any(|o| geometry::contains_strict(o, p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortalKind {
    Stairs,
    Escalator,
    Elevator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portal {
    pub id: String,
    pub floor_a: String,
    pub point_a: Vec2,
    pub floor_b: String,
    pub point_b: Vec2,
    pub traversal_time: f64,
    pub kind: PortalKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Signage,
    Schedule,
    Infrastructure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignAction {
    AtTarget,
    DirectTo(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignEntry {
    pub label: String,
    pub action: SignAction,
}

/// A vertical rectangle hung in the hall. Its face points along `normal`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sign {
    pub id: SignId,
    pub floor: String,
    /// `[x, y, z]` with `z` measured above the floor.
    pub center: [f64; 3],
    pub normal: Vec2,
    pub width: f64,
    pub height: f64,
    pub face_color: [f64; 3],
    pub object_class: ObjectClass,
    #[serde(default)]
    pub entries: Vec<SignEntry>,
}

impl Sign {
    pub fn center_xy(&self) -> Vec2 {
        Vec2::new(self.center[0], self.center[1])
    }

    pub fn center_z(&self) -> f64 {
        self.center[2]
    }

    /// Horizontal unit vector along the sign's width.
    pub fn tangent(&self) -> Vec2 {
        self.normal.perp()
    }

    pub fn face_point(&self) -> Vec2 {
        self.center_xy() + self.normal * SIGN_FACE_OFFSET
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPoint {
    pub id: String,
    pub floor: String,
    pub position: Vec2,
    /// Initial facing for agents spawned here, degrees counterclockwise from +x.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub floor: String,
    pub position: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemanticModel {
    pub relevance: BTreeMap<ObjectClass, f64>,
    pub background_relevance: f64,
}

impl Default for SemanticModel {
    fn default() -> Self {
        let relevance = BTreeMap::from([
            (ObjectClass::Signage, 1.0),
            (ObjectClass::Schedule, 0.8),
            (ObjectClass::Infrastructure, 0.6),
        ]);
        SemanticModel {
            relevance,
            background_relevance: 0.05,
        }
    }
}

impl SemanticModel {
    pub fn relevance_of(&self, class: ObjectClass) -> f64 {
        self.relevance
            .get(&class)
            .copied()
            .unwrap_or_else(|| SemanticModel::default().relevance[&class])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub floors: Vec<Floor>,
    #[serde(default)]
    pub portals: Vec<Portal>,
    #[serde(default)]
    pub signs: Vec<Sign>,
    #[serde(default)]
    pub base_points: Vec<NamedPoint>,
    #[serde(default)]
    pub goal_points: Vec<NamedPoint>,
    #[serde(default)]
    pub semantic_model: SemanticModel,
}

/// One problem found while validating a scenario, located by a JSON-like path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl Environment {
    pub fn floor(&self, id: &str) -> Option<&Floor> {
        self.floors.iter().find(|f| f.id == id)
    }

    pub fn sign(&self, id: SignId) -> Option<&Sign> {
        self.signs.iter().find(|s| s.id == id)
    }

    pub fn goal_point(&self, id: &str) -> Option<&NamedPoint> {
        self.goal_points.iter().find(|g| g.id == id)
    }

    pub fn remove_sign(&mut self, id: SignId) -> Option<Sign> {
        let idx = self.signs.iter().position(|s| s.id == id)?;
        Some(self.signs.remove(idx))
    }

    /// True iff segment `pq` stays inside the outline of `floor` and never
    /// enters the interior of an obstacle. Grazing a boundary is allowed.
    pub fn line_of_sight(&self, floor: &str, p: Vec2, q: Vec2) -> bool {
        match self.floor(floor) {
            Some(f) => floor_line_of_sight(f, p, q),
            None => false,
        }
    }

    /// Signs that could appear in the view from `pose`: same floor, within
    /// `max_distance` of the eye, in front of the image plane, facing the
    /// camera and not hidden behind walls or obstacles.
    pub fn candidate_signs(&self, pose: &CameraPose, max_distance: f64) -> Vec<SignId> {
        let Some(floor) = self.floor(&pose.floor) else {
            return Vec::new();
        };
        self.signs
            .iter()
            .filter(|s| s.floor == pose.floor)
            .filter(|s| {
                let view = s.center_xy() - pose.position;
                let dz = s.center_z() - pose.eye_height;
                let dist = (view.length_squared() + dz * dz).sqrt();
                dist <= max_distance
                    && view.dot(pose.heading) > 0.0
                    && s.normal.dot(view) < 0.0
                    && floor_line_of_sight(floor, pose.position, s.face_point())
            })
            .map(|s| s.id)
            .collect()
    }

    /// Checks every structural invariant; an empty list means the model is valid.
    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        let mut push = |path: String, message: String| issues.push(Issue { path, message });

        if self.floors.is_empty() {
            push("floors".into(), "at least one floor is required".into());
        }
        let mut floor_ids = HashSet::new();
        for (i, f) in self.floors.iter().enumerate() {
            let path = format!("floors[{i}] ({})", f.id);
            if !floor_ids.insert(f.id.as_str()) {
                push(path.clone(), format!("duplicate floor id '{}'", f.id));
            }
            if f.outline.len() < 3 || !geometry::is_simple(&f.outline) {
                push(format!("{path}.outline"), "outline must be a simple polygon".into());
            } else if geometry::signed_area(&f.outline) <= 0.0 {
                push(format!("{path}.outline"), "outline must be counterclockwise".into());
            }
            for (j, obs) in f.obstacles.iter().enumerate() {
                let opath = format!("{path}.obstacles[{j}]");
                if obs.len() < 3 || !geometry::is_simple(obs) {
                    push(opath, "obstacle must be a simple polygon".into());
                } else if !obs.iter().all(|&v| geometry::contains_closed(&f.outline, v)) {
                    push(opath, "obstacle extends outside the floor outline".into());
                }
            }
        }

        let mut named_ids = HashSet::new();
        for (list, points) in [("base_points", &self.base_points), ("goal_points", &self.goal_points)] {
            for (i, p) in points.iter().enumerate() {
                let path = format!("{list}[{i}] ({})", p.id);
                if !named_ids.insert(p.id.as_str()) {
                    push(path.clone(), format!("duplicate point id '{}'", p.id));
                }
                match self.floor(&p.floor) {
                    None => push(path, format!("unknown floor '{}'", p.floor)),
                    Some(f) if !f.is_walkable(p.position) => {
                        push(path, "point is outside the walkable region".into())
                    }
                    Some(_) => {}
                }
            }
        }
        if self.base_points.is_empty() {
            push("base_points".into(), "at least one base point is required for exploration".into());
        }

        let mut portal_ids = HashSet::new();
        for (i, p) in self.portals.iter().enumerate() {
            let path = format!("portals[{i}] ({})", p.id);
            if !portal_ids.insert(p.id.as_str()) {
                push(path.clone(), format!("duplicate portal id '{}'", p.id));
            }
            if !(p.traversal_time > 0.0) {
                push(path.clone(), "traversal_time must be positive".into());
            }
            for (fid, pt, end) in [(&p.floor_a, p.point_a, "a"), (&p.floor_b, p.point_b, "b")] {
                match self.floor(fid) {
                    None => push(format!("{path}.floor_{end}"), format!("unknown floor '{fid}'")),
                    Some(f) if !f.is_walkable(pt) => push(
                        format!("{path}.point_{end}"),
                        "portal endpoint is outside the walkable region".into(),
                    ),
                    Some(_) => {}
                }
            }
        }

        let mut sign_ids = HashSet::new();
        for (i, s) in self.signs.iter().enumerate() {
            let path = format!("signs[{i}] (id {})", s.id);
            if s.id.0 == 0 || s.id.0 > u16::MAX as u32 {
                push(path.clone(), "sign id must be in 1..=65535 (0 marks background)".into());
            }
            if !sign_ids.insert(s.id) {
                push(path.clone(), format!("duplicate sign id {}", s.id));
            }
            if !(s.width > 0.0 && s.height > 0.0) {
                push(path.clone(), "width and height must be positive".into());
            }
            if (s.normal.length() - 1.0).abs() > 1e-6 {
                push(format!("{path}.normal"), "normal must have unit length".into());
            }
            if s.face_color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                push(format!("{path}.face_color"), "color channels must lie in [0, 1]".into());
            }
            match self.floor(&s.floor) {
                None => push(path.clone(), format!("unknown floor '{}'", s.floor)),
                Some(f) => {
                    let c = s.center_xy();
                    let mounted = geometry::contains_closed(&f.outline, c)
                        && f.obstacles.iter().all(|o| {
                            !geometry::contains_strict(o, c)
                                || geometry::distance_to_boundary(o, c) <= WALL_MOUNT_TOLERANCE
                        });
                    if !mounted {
                        push(path.clone(), "sign is neither in the walkable region nor on a wall".into());
                    }
                }
            }
            for (j, e) in s.entries.iter().enumerate() {
                if let SignAction::DirectTo(goal) = &e.action {
                    if self.goal_point(goal).is_none() {
                        push(
                            format!("{path}.entries[{j}]"),
                            format!("sign {} directs to unknown goal point '{goal}'", s.id),
                        );
                    }
                }
            }
        }

        let sm = &self.semantic_model;
        if sm.relevance.values().chain([&sm.background_relevance]).any(|v| !(0.0..=1.0).contains(v)) {
            push("semantic_model".into(), "relevance values must lie in [0, 1]".into());
        }
        issues
    }
}

pub(crate) fn floor_line_of_sight(floor: &Floor, p: Vec2, q: Vec2) -> bool {
    if !geometry::contains_closed(&floor.outline, p) || !geometry::contains_closed(&floor.outline, q) {
        return false;
    }
    if floor.obstacles.iter().any(|o| geometry::contains_strict(o, p) || geometry::contains_strict(o, q)) {
        return false;
    }
    if p.distance(q) <= geometry::EPS {
        return true;
    }
    let mut ts = vec![0.0, 1.0];
    for poly in std::iter::once(&floor.outline).chain(floor.obstacles.iter()) {
        for e in geometry::polygon_edges(poly) {
            geometry::segment_crossings(p, q, e.a, e.b, &mut ts);
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    ts.windows(2).all(|w| {
        let m = p + (q - p) * (0.5 * (w[0] + w[1]));
        geometry::contains_closed(&floor.outline, m)
            && !floor.obstacles.iter().any(|o| geometry::contains_strict(o, m))
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Vec2> {
        vec![
            Vec2::new(x0, y0),
            Vec2::new(x1, y0),
            Vec2::new(x1, y1),
            Vec2::new(x0, y1),
        ]
    }

    pub fn sign(id: u32, x: f64, y: f64, z: f64, normal: Vec2) -> Sign {
        Sign {
            id: SignId(id),
            floor: "F0".into(),
            center: [x, y, z],
            normal,
            width: 1.0,
            height: 0.5,
            face_color: [0.9, 0.1, 0.1],
            object_class: ObjectClass::Signage,
            entries: vec![],
        }
    }

    /// A 20 m x 20 m room with one base point in the middle.
    pub fn room() -> Environment {
        Environment {
            floors: vec![Floor {
                id: "F0".into(),
                outline: rect(0.0, 0.0, 20.0, 20.0),
                obstacles: vec![],
                elevation: 0.0,
            }],
            portals: vec![],
            signs: vec![],
            base_points: vec![NamedPoint {
                id: "bp".into(),
                floor: "F0".into(),
                position: Vec2::new(10.0, 10.0),
                heading_deg: None,
            }],
            goal_points: vec![],
            semantic_model: SemanticModel::default(),
        }
    }
}
