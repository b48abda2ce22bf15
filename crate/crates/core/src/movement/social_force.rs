//! Helbing–Molnár social force locomotion.

use serde::{Deserialize, Serialize};

use crate::geometry::{segment_crossings, Segment, Vec2};

/// Walls farther than this contribute nothing (force < 0.01% of U0/R).
pub const WALL_CUTOFF: f64 = 2.0;
/// Pedestrians farther than this are ignored.
pub const PEDESTRIAN_CUTOFF: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SocialForceParams {
    pub desired_speed: f64,
    pub relaxation_time: f64,
    pub pedestrian_strength: f64,
    pub pedestrian_range: f64,
    pub wall_strength: f64,
    pub wall_range: f64,
    pub anisotropy: f64,
    /// Half-angle in degrees.
    pub fov_half_angle: f64,
    pub step_lookahead: f64,
    pub body_radius: f64,
    pub max_speed: f64,
}

impl Default for SocialForceParams {
    fn default() -> Self {
        SocialForceParams {
            desired_speed: 1.34,
            relaxation_time: 0.5,
            pedestrian_strength: 2.1,
            pedestrian_range: 0.3,
            wall_strength: 10.0,
            wall_range: 0.2,
            anisotropy: 0.5,
            fov_half_angle: 100.0,
            step_lookahead: 2.0,
            body_radius: 0.25,
            max_speed: 1.3 * 1.34,
        }
    }
}

impl SocialForceParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("desired_speed", self.desired_speed),
            ("relaxation_time", self.relaxation_time),
            ("pedestrian_strength", self.pedestrian_strength),
            ("pedestrian_range", self.pedestrian_range),
            ("wall_strength", self.wall_strength),
            ("wall_range", self.wall_range),
            ("anisotropy", self.anisotropy),
            ("fov_half_angle", self.fov_half_angle),
            ("step_lookahead", self.step_lookahead),
            ("body_radius", self.body_radius),
            ("max_speed", self.max_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("social_force.{name} must be positive, got {v}"));
            }
        }
        if self.anisotropy > 1.0 {
            return Err(format!("social_force.anisotropy must be at most 1, got {}", self.anisotropy));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Body {
    pub position: Vec2,
    pub velocity: Vec2,
}

/// Repulsion exerted on a pedestrian at relative position `d` (from the
/// neighbor) by a neighbor moving with velocity `v_beta`.
pub fn pedestrian_repulsion(d: Vec2, v_beta: Vec2, p: &SocialForceParams) -> Vec2 {
    let y = v_beta * p.step_lookahead;
    let s1 = d.length();
    let s2 = (d - y).length();
    let two_b_sq = (s1 + s2).powi(2) - y.length_squared();
    let b = 0.5 * two_b_sq.max(0.0).sqrt();
    if s1 < 1e-12 || s2 < 1e-12 || b < 1e-9 {
        // degenerate ellipse: push straight away
        let dir = d.try_normalize().unwrap_or(Vec2::new(1.0, 0.0));
        return dir * (p.pedestrian_strength / p.pedestrian_range);
    }
    let grad_b = (d / s1 + (d - y) / s2) * ((s1 + s2) / (4.0 * b));
    grad_b * (p.pedestrian_strength / p.pedestrian_range * (-b / p.pedestrian_range).exp())
}

pub fn wall_repulsion(pos: Vec2, wall: &Segment, p: &SocialForceParams) -> Vec2 {
    let away = pos - wall.closest_point(pos);
    let w = away.length();
    if w > WALL_CUTOFF || w < 1e-12 {
        return Vec2::ZERO;
    }
    away / w * (p.wall_strength / p.wall_range * (-w / p.wall_range).exp())
}

/// Total acceleration on `body` heading for `waypoint`.
pub fn acceleration(body: &Body, neighbors: &[Body], walls: &[Segment], waypoint: Vec2, p: &SocialForceParams) -> Vec2 {
    let e = (waypoint - body.position).try_normalize().unwrap_or(Vec2::ZERO);
    let mut a = (e * p.desired_speed - body.velocity) / p.relaxation_time;
    let cos_phi = p.fov_half_angle.to_radians().cos();
    for n in neighbors {
        let d = body.position - n.position;
        let dist = d.length();
        if dist > PEDESTRIAN_CUTOFF || dist < 1e-12 && n.velocity == body.velocity {
            continue;
        }
        let f = pedestrian_repulsion(d, n.velocity, p);
        let ahead = (-d).try_normalize().map_or(true, |to_n| e.dot(to_n) >= cos_phi);
        a += if ahead { f } else { f * p.anisotropy };
    }
    for w in walls {
        a += wall_repulsion(body.position, w, p);
    }
    a
}

fn crosses_wall(from: Vec2, to: Vec2, walls: &[Segment], scratch: &mut Vec<f64>) -> bool {
    walls.iter().any(|w| {
        scratch.clear();
        segment_crossings(from, to, w.a, w.b, scratch);
        !scratch.is_empty()
    })
}

/// Pushes `pos` out to `radius` from every wall; `None` if that fails.
fn resolve_penetration(mut pos: Vec2, walls: &[Segment], radius: f64) -> Option<Vec2> {
    for _ in 0..4 {
        let mut moved = false;
        for w in walls {
            let c = w.closest_point(pos);
            let d = pos.distance(c);
            if d < radius {
                let n = (pos - c).try_normalize()?;
                pos = c + n * (radius + 1e-9);
                moved = true;
            }
        }
        if !moved {
            return Some(pos);
        }
    }
    walls.iter().all(|w| w.distance_to(pos) >= radius - 1e-6).then_some(pos)
}

/// One explicit Euler step: velocity first, then position with the new
/// velocity. The body never ends closer than its radius to a wall; a move
/// that would slides along the wall tangent or, failing that, stays put.
pub fn social_force_step(body: &Body, neighbors: &[Body], walls: &[Segment], waypoint: Vec2, p: &SocialForceParams, dt: f64) -> Body {
    let a = acceleration(body, neighbors, walls, waypoint, p);
    let mut v = body.velocity + a * dt;
    let speed = v.length();
    if speed > p.max_speed {
        v = v * (p.max_speed / speed);
    }
    let mut scratch = Vec::new();
    let target = body.position + v * dt;
    if !crosses_wall(body.position, target, walls, &mut scratch) {
        if let Some(pos) = resolve_penetration(target, walls, p.body_radius) {
            if !crosses_wall(body.position, pos, walls, &mut scratch) {
                let v = (pos - body.position) / dt;
                let v = if v.length() > p.max_speed { v * (p.max_speed / v.length()) } else { v };
                return Body { position: pos, velocity: v };
            }
        }
    }
    // slide: drop the velocity component into the nearest wall
    let nearest = walls
        .iter()
        .min_by(|a, b| a.distance_to(body.position).total_cmp(&b.distance_to(body.position)));
    if let Some(w) = nearest {
        if let Some(t) = (w.b - w.a).try_normalize() {
            let slid = t * v.dot(t);
            let pos = body.position + slid * dt;
            if !crosses_wall(body.position, pos, walls, &mut scratch)
                && walls.iter().all(|s| s.distance_to(pos) >= p.body_radius - 1e-6)
            {
                return Body { position: pos, velocity: slid };
            }
        }
    }
    Body {
        position: body.position,
        velocity: Vec2::ZERO,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: SocialForceParams = SocialForceParams {
        desired_speed: 1.34,
        relaxation_time: 0.5,
        pedestrian_strength: 2.1,
        pedestrian_range: 0.3,
        wall_strength: 10.0,
        wall_range: 0.2,
        anisotropy: 0.5,
        fov_half_angle: 100.0,
        step_lookahead: 2.0,
        body_radius: 0.25,
        max_speed: 1.742,
    };

    #[test]
    fn defaults_match_constant() {
        let d = SocialForceParams::default();
        assert!((d.max_speed - P.max_speed).abs() < 1e-12);
        assert!(d.validate().is_ok());
    }

    #[test]
    fn cruising_has_no_acceleration() {
        let b = Body {
            position: Vec2::ZERO,
            velocity: Vec2::new(1.34, 0.0),
        };
        assert!(acceleration(&b, &[], &[], Vec2::new(10.0, 0.0), &P).length() < 1e-12);
    }

    #[test]
    fn initial_acceleration_from_rest() {
        let b = Body::default();
        let a = acceleration(&b, &[], &[], Vec2::new(0.0, 10.0), &P);
        assert!((a.length() - 2.68).abs() < 1e-12);
    }

    #[test]
    fn pedestrian_gradient_matches_finite_difference() {
        let v = Vec2::new(-0.8, 0.3);
        for d in [Vec2::new(1.0, 0.2), Vec2::new(-0.4, 0.7), Vec2::new(0.3, -1.5)] {
            let pot = |d: Vec2| {
                let y = v * P.step_lookahead;
                let b = 0.5 * ((d.length() + (d - y).length()).powi(2) - y.length_squared()).sqrt();
                P.pedestrian_strength * (-b / P.pedestrian_range).exp()
            };
            let h = 1e-6;
            let num = Vec2::new(
                -(pot(d + Vec2::new(h, 0.0)) - pot(d - Vec2::new(h, 0.0))) / (2.0 * h),
                -(pot(d + Vec2::new(0.0, h)) - pot(d - Vec2::new(0.0, h))) / (2.0 * h),
            );
            let f = pedestrian_repulsion(d, v, &P);
            assert!((f - num).length() < 1e-6, "{f:?} vs {num:?}");
        }
    }

    #[test]
    fn wall_push_points_away() {
        let w = Segment::new(Vec2::new(-5.0, 0.0), Vec2::new(5.0, 0.0));
        let f = wall_repulsion(Vec2::new(0.0, 0.4), &w, &P);
        assert!(f.x.abs() < 1e-12);
        assert!((f.y - 50.0 * (-2.0f64).exp()).abs() < 1e-9);
        assert_eq!(wall_repulsion(Vec2::new(0.0, 3.0), &w, &P), Vec2::ZERO);
    }

    #[test]
    fn never_passes_through_wall() {
        let walls = [Segment::new(Vec2::new(1.0, -5.0), Vec2::new(1.0, 5.0))];
        let mut b = Body {
            position: Vec2::new(0.0, 0.0),
            velocity: Vec2::new(1.7, 0.0),
        };
        for _ in 0..400 {
            b = social_force_step(&b, &[], &walls, Vec2::new(5.0, 0.3), &P, 0.05);
            assert!(b.position.x < 1.0 - P.body_radius + 1e-6);
        }
    }
}
