//! Planar geometry shared by the floor model, the planner and the renderer.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

pub const EPS: f64 = 1e-9;

/// A point or vector in floor coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle_deg(deg: f64) -> Self {
        let r = deg.to_radians();
        Vec2::new(r.cos(), r.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn length(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).length()
    }

    /// Unit vector in the same direction, or `None` for (near) zero vectors.
    pub fn try_normalize(self) -> Option<Vec2> {
        let l = self.length();
        (l > 1e-12).then(|| self / l)
    }

    /// Counterclockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle_rad: f64) -> Vec2 {
        let (s, c) = angle_rad.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Segment { a, b }
    }

    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let ab = self.b - self.a;
        let len2 = ab.length_squared();
        if len2 <= 0.0 {
            return self.a;
        }
        let t = ((p - self.a).dot(ab) / len2).clamp(0.0, 1.0);
        self.a + ab * t
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        self.closest_point(p).distance(p)
    }
}

/// Parameters `t` along `p→q` where the segment meets segment `a→b`.
/// Collinear overlaps report both overlap endpoints.
pub fn segment_crossings(p: Vec2, q: Vec2, a: Vec2, b: Vec2, out: &mut Vec<f64>) {
    let r = q - p;
    let s = b - a;
    let denom = r.cross(s);
    let ap = a - p;
    let scale = r.length() * s.length();
    if scale <= 0.0 {
        return;
    }
    if denom.abs() > 1e-12 * scale {
        let t = ap.cross(s) / denom;
        let u = ap.cross(r) / denom;
        if (-EPS..=1.0 + EPS).contains(&t) && (-EPS..=1.0 + EPS).contains(&u) {
            out.push(t.clamp(0.0, 1.0));
        }
    } else if ap.cross(r).abs() <= 1e-12 * scale.max(ap.length() * r.length()) {
        let rr = r.length_squared();
        let t0 = ap.dot(r) / rr;
        let t1 = (b - p).dot(r) / rr;
        for t in [t0, t1] {
            if (0.0..=1.0).contains(&t) {
                out.push(t);
            }
        }
    }
}

pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += poly[i].cross(poly[(i + 1) % n]);
    }
    0.5 * acc
}

pub fn polygon_edges(poly: &[Vec2]) -> impl Iterator<Item = Segment> + '_ {
    let n = poly.len();
    (0..n).map(move |i| Segment::new(poly[i], poly[(i + 1) % n]))
}

pub fn distance_to_boundary(poly: &[Vec2], p: Vec2) -> f64 {
    polygon_edges(poly)
        .map(|e| e.distance_to(p))
        .fold(f64::INFINITY, f64::min)
}

/// Even-odd containment test; points on the boundary give an arbitrary answer.
fn crossing_test(poly: &[Vec2], p: Vec2) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi.y > p.y) != (pj.y > p.y) {
            let x = pj.x + (p.y - pj.y) * (pi.x - pj.x) / (pi.y - pj.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Inside or on the boundary (within `EPS`).
pub fn contains_closed(poly: &[Vec2], p: Vec2) -> bool {
    if poly.len() < 3 {
        return false;
    }
    distance_to_boundary(poly, p) <= 1e-7 || crossing_test(poly, p)
}

/// Strictly inside, farther than `EPS` from the boundary.
pub fn contains_strict(poly: &[Vec2], p: Vec2) -> bool {
    if poly.len() < 3 {
        return false;
    }
    distance_to_boundary(poly, p) > 1e-7 && crossing_test(poly, p)
}

/// True if no two non-adjacent edges touch and no adjacent edges overlap.
pub fn is_simple(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let edges: Vec<Segment> = polygon_edges(poly).collect();
    if edges.iter().any(|e| e.a.distance(e.b) <= EPS) {
        return false;
    }
    let mut hits = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            hits.clear();
            segment_crossings(edges[i].a, edges[i].b, edges[j].a, edges[j].b, &mut hits);
            if adjacent {
                // only the shared vertex may touch
                let shared_t = if j == i + 1 { 1.0 } else { 0.0 };
                if hits.iter().any(|t| (t - shared_t).abs() > 1e-9) {
                    return false;
                }
            } else if !hits.is_empty() {
                return false;
            }
        }
    }
    true
}

/// Area of the intersection between `poly` and an axis-aligned rectangle.
pub fn clipped_area(poly: &[Vec2], min: Vec2, max: Vec2) -> f64 {
    let mut cur: Vec<Vec2> = poly.to_vec();
    // (axis, bound, keep_greater)
    let planes = [(0, min.x, true), (0, max.x, false), (1, min.y, true), (1, max.y, false)];
    for (axis, bound, greater) in planes {
        if cur.is_empty() {
            break;
        }
        let coord = |v: Vec2| if axis == 0 { v.x } else { v.y };
        let inside = |v: Vec2| if greater { coord(v) >= bound } else { coord(v) <= bound };
        let mut next = Vec::with_capacity(cur.len() + 4);
        for i in 0..cur.len() {
            let a = cur[i];
            let b = cur[(i + 1) % cur.len()];
            let (ia, ib) = (inside(a), inside(b));
            if ia {
                next.push(a);
            }
            if ia != ib {
                let t = (bound - coord(a)) / (coord(b) - coord(a));
                next.push(a + (b - a) * t);
            }
        }
        cur = next;
    }
    if cur.len() < 3 {
        0.0
    } else {
        signed_area(&cur).abs()
    }
}

pub fn bounding_box(poly: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in poly {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Distance along the ray `origin + t * dir` (`dir` need not be unit) to the
/// segment, in units of `t`.
pub fn ray_segment_hit(origin: Vec2, dir: Vec2, seg: &Segment) -> Option<f64> {
    let s = seg.b - seg.a;
    let denom = dir.cross(s);
    if denom.abs() < 1e-15 {
        return None;
    }
    let ao = seg.a - origin;
    let t = ao.cross(s) / denom;
    let u = ao.cross(dir) / denom;
    (t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u)).then_some(t)
}
