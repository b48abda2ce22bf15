//! Synthetic first-person view: a pinhole color raster plus a per-pixel
//! sign id mask with depth.

use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Sign, SignId};
use crate::geometry::{self, Vec2};

/// Horizontal slack (m) allowing a sign hung flush on a wall to win the
/// depth test against that wall.
const WALL_FLUSH_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub floor: String,
    pub position: Vec2,
    pub eye_height: f64,
    /// Unit direction of travel; pitch is always zero.
    pub heading: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub horizontal_fov: f64,
    pub raster_width: usize,
    pub raster_height: usize,
    pub max_view_distance: f64,
    pub eye_height: f64,
    pub wall_color: [f64; 3],
    pub floor_color: [f64; 3],
    /// Amplitude of the deterministic per-pixel background noise.
    pub noise_amplitude: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            horizontal_fov: 90.0,
            raster_width: 160,
            raster_height: 120,
            max_view_distance: 60.0,
            eye_height: 1.6,
            wall_color: [0.5; 3],
            floor_color: [0.35; 3],
            noise_amplitude: 0.0,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < 180.0) {
            return Err("horizontal_fov must lie in (0, 180) degrees".into());
        }
        if self.raster_width < 16 || self.raster_height < 16 {
            return Err("raster dimensions must be at least 16 pixels".into());
        }
        if !(self.max_view_distance > 0.0 && self.eye_height > 0.0) {
            return Err("max_view_distance and eye_height must be positive".into());
        }
        Ok(())
    }

    pub fn tan_half_h(&self) -> f64 {
        (self.horizontal_fov.to_radians() * 0.5).tan()
    }

    pub fn tan_half_v(&self) -> f64 {
        self.tan_half_h() * self.raster_height as f64 / self.raster_width as f64
    }

    /// Normalized device x in [-1, 1] of the center of column `x`.
    pub fn ndc_x(&self, x: usize) -> f64 {
        (x as f64 + 0.5) / self.raster_width as f64 * 2.0 - 1.0
    }

    /// Normalized device y in [-1, 1] of the center of row `y`; +1 is the top.
    pub fn ndc_y(&self, y: usize) -> f64 {
        1.0 - (y as f64 + 0.5) / self.raster_height as f64 * 2.0
    }

    pub fn pixel_count(&self) -> usize {
        self.raster_width * self.raster_height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewRaster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl ViewRaster {
    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        ViewRaster {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: [f64; 3]) {
        self.pixels[y * self.width + x] = c;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignMask {
    pub width: usize,
    pub height: usize,
    /// Sign id per pixel, 0 for background.
    pub ids: Vec<u32>,
    /// Distance from the eye to the surface seen at each pixel.
    pub depth: Vec<f64>,
}

impl SignMask {
    pub fn id_at(&self, x: usize, y: usize) -> Option<SignId> {
        match self.ids[y * self.width + x] {
            0 => None,
            id => Some(SignId(id)),
        }
    }

    pub fn count(&self, id: SignId) -> usize {
        self.ids.iter().filter(|&&v| v == id.0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown sign id {0}")]
pub struct UnknownSign(pub SignId);

/// Camera basis: forward and right on the floor plane, up is +z.
fn basis(pose: &CameraPose) -> (Vec2, Vec2) {
    let f = pose.heading;
    (f, Vec2::new(f.y, -f.x))
}

/// Projects a world point (floor x, y and height z) to continuous pixel
/// coordinates. `None` when the point is on or behind the image plane.
pub fn project_point(pose: &CameraPose, cfg: &CameraConfig, p: Vec2, z: f64) -> Option<(f64, f64)> {
    let (f, r) = basis(pose);
    let rel = p - pose.position;
    let depth = rel.dot(f);
    if depth <= 0.0 {
        return None;
    }
    let ndc_x = rel.dot(r) / depth / cfg.tan_half_h();
    let ndc_y = (z - pose.eye_height) / depth / cfg.tan_half_v();
    let px = (ndc_x + 1.0) * 0.5 * cfg.raster_width as f64;
    let py = (1.0 - ndc_y) * 0.5 * cfg.raster_height as f64;
    Some((px, py))
}

fn noise(x: usize, y: usize) -> f64 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 31;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 29;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

struct ColumnHit {
    t: f64,
    sign: usize,
}

/// Renders the view from `pose`. Background surfaces are flat walls and
/// floor; candidate signs are ray-cast with a depth test against each other
/// and against the wall seen in the same column.
pub fn render_view(env: &Environment, pose: &CameraPose, cfg: &CameraConfig) -> (ViewRaster, SignMask) {
    let (w, h) = (cfg.raster_width, cfg.raster_height);
    let mut raster = ViewRaster::filled(w, h, cfg.wall_color);
    let mut mask = SignMask {
        width: w,
        height: h,
        ids: vec![0; w * h],
        depth: vec![f64::INFINITY; w * h],
    };
    let Some(floor) = env.floor(&pose.floor) else {
        return (raster, mask);
    };
    let degenerate = !floor.is_walkable(pose.position);
    let walls = floor.wall_segments();
    let signs: Vec<&Sign> = if degenerate {
        Vec::new()
    } else {
        env.candidate_signs(pose, cfg.max_view_distance)
            .into_iter()
            .filter_map(|id| env.sign(id))
            .collect()
    };

    let (fwd, right) = basis(pose);
    let tan_h = cfg.tan_half_h();
    let tan_v = cfg.tan_half_v();
    let eye = pose.position;
    let mut hits: Vec<ColumnHit> = Vec::with_capacity(signs.len());

    for x in 0..w {
        let dir_h = fwd + right * (cfg.ndc_x(x) * tan_h);
        let dir_h_len = dir_h.length();
        let t_wall = if degenerate {
            0.0
        } else {
            walls
                .iter()
                .filter_map(|s| geometry::ray_segment_hit(eye, dir_h, s))
                .filter(|&t| t > 1e-12)
                .fold(f64::INFINITY, f64::min)
        };

        hits.clear();
        for (si, s) in signs.iter().enumerate() {
            let denom = s.normal.dot(dir_h);
            if denom >= 0.0 {
                continue;
            }
            let t = s.normal.dot(s.center_xy() - eye) / denom;
            if t <= 0.0 || t > t_wall + WALL_FLUSH_TOLERANCE / dir_h_len {
                continue;
            }
            let along = s.tangent().dot(eye + dir_h * t - s.center_xy());
            if along.abs() <= 0.5 * s.width {
                hits.push(ColumnHit { t, sign: si });
            }
        }
        hits.sort_by(|a, b| a.t.total_cmp(&b.t));

        for y in 0..h {
            let dz = cfg.ndc_y(y) * tan_v;
            let ray_len = (dir_h_len * dir_h_len + dz * dz).sqrt();
            let idx = y * w + x;
            let winner = hits.iter().find(|hit| {
                let s = signs[hit.sign];
                let z = pose.eye_height + dz * hit.t;
                z >= 0.0 && (z - s.center_z()).abs() <= 0.5 * s.height && hit.t * ray_len <= cfg.max_view_distance
            });
            if let Some(hit) = winner {
                let s = signs[hit.sign];
                raster.pixels[idx] = s.face_color;
                mask.ids[idx] = s.id.0;
                mask.depth[idx] = hit.t * ray_len;
                continue;
            }
            let t_floor = if dz < 0.0 { pose.eye_height / -dz } else { f64::INFINITY };
            let (mut color, t_bg) = if t_floor < t_wall {
                (cfg.floor_color, t_floor)
            } else {
                (cfg.wall_color, t_wall)
            };
            if cfg.noise_amplitude > 0.0 {
                let n = cfg.noise_amplitude * (noise(x, y) - 0.5);
                for c in &mut color {
                    *c = (*c + n).clamp(0.0, 1.0);
                }
            }
            raster.pixels[idx] = color;
            mask.depth[idx] = t_bg * ray_len;
        }
    }
    (raster, mask)
}

/// Number of mask pixels showing `sign` from `pose`.
pub fn projected_pixel_count(
    env: &Environment,
    pose: &CameraPose,
    cfg: &CameraConfig,
    sign: SignId,
) -> Result<usize, UnknownSign> {
    if env.sign(sign).is_none() {
        return Err(UnknownSign(sign));
    }
    Ok(render_view(env, pose, cfg).1.count(sign))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::fixtures::{rect, room, sign};

    fn pose(x: f64, y: f64, heading: Vec2) -> CameraPose {
        CameraPose {
            floor: "F0".into(),
            position: Vec2::new(x, y),
            eye_height: 1.6,
            heading,
        }
    }

    fn east() -> Vec2 {
        Vec2::new(1.0, 0.0)
    }

    #[test]
    fn on_axis_sign_hits_center_pixel() {
        let mut env = room();
        env.signs.push(sign(7, 7.0, 10.0, 1.6, Vec2::new(-1.0, 0.0)));
        let cfg = CameraConfig::default();
        let (raster, mask) = render_view(&env, &pose(2.0, 10.0, east()), &cfg);
        assert_eq!(mask.id_at(80, 60), Some(SignId(7)));
        assert_eq!(mask.id_at(79, 59), Some(SignId(7)));
        assert_eq!(raster.get(80, 60), [0.9, 0.1, 0.1]);
        assert!((mask.depth[60 * 160 + 80] - 5.0).abs() < 0.01);
    }

    #[test]
    fn sign_behind_agent_is_invisible() {
        let mut env = room();
        env.signs.push(sign(7, 7.0, 10.0, 1.6, Vec2::new(-1.0, 0.0)));
        let (_, mask) = render_view(&env, &pose(12.0, 10.0, east()), &CameraConfig::default());
        assert!(mask.ids.iter().all(|&i| i == 0));
    }

    #[test]
    fn near_sign_hides_far_sign() {
        let mut env = room();
        let mut near = sign(1, 6.0, 10.0, 1.6, Vec2::new(-1.0, 0.0));
        near.width = 2.0;
        near.height = 1.0;
        env.signs.push(near);
        env.signs.push(sign(2, 12.0, 10.0, 1.6, Vec2::new(-1.0, 0.0)));
        let cfg = CameraConfig::default();
        let p = pose(2.0, 10.0, east());
        assert!(projected_pixel_count(&env, &p, &cfg, SignId(1)).unwrap() > 0);
        assert_eq!(projected_pixel_count(&env, &p, &cfg, SignId(2)).unwrap(), 0);
        assert_eq!(projected_pixel_count(&env, &p, &cfg, SignId(9)), Err(UnknownSign(SignId(9))));
    }

    #[test]
    fn obstacle_occludes_and_fov_limits() {
        let mut env = room();
        env.signs.push(sign(3, 12.0, 10.0, 1.6, Vec2::new(-1.0, 0.0)));
        let cfg = CameraConfig::default();
        // sign 90 degrees to the left of the heading
        let side = pose(12.0, 5.0, east());
        assert_eq!(projected_pixel_count(&env, &side, &cfg, SignId(3)).unwrap(), 0);
        env.floors[0].obstacles.push(rect(7.0, 9.0, 8.0, 11.0));
        let p = pose(2.0, 10.0, east());
        assert_eq!(projected_pixel_count(&env, &p, &cfg, SignId(3)).unwrap(), 0);
    }

    #[test]
    fn degenerate_pose_is_all_background() {
        let mut env = room();
        env.floors[0].obstacles.push(rect(1.0, 9.0, 3.0, 11.0));
        env.signs.push(sign(3, 12.0, 10.0, 1.6, Vec2::new(-1.0, 0.0)));
        let (_, mask) = render_view(&env, &pose(2.0, 10.0, east()), &CameraConfig::default());
        assert!(mask.ids.iter().all(|&i| i == 0));
    }

    #[test]
    fn sign_pixels_carry_face_color() {
        let mut env = room();
        let mut a = sign(1, 8.0, 9.0, 2.2, Vec2::new(-1.0, 0.0));
        a.face_color = [0.1, 0.2, 0.9];
        env.signs.push(a);
        env.signs.push(sign(2, 9.0, 11.0, 2.6, Vec2::new(-1.0, 0.0)));
        let cfg = CameraConfig {
            noise_amplitude: 0.3,
            ..CameraConfig::default()
        };
        let (raster, mask) = render_view(&env, &pose(2.0, 10.0, east()), &cfg);
        let mut seen = 0;
        for (i, &id) in mask.ids.iter().enumerate() {
            if id != 0 {
                seen += 1;
                assert_eq!(raster.pixels[i], env.sign(SignId(id)).unwrap().face_color);
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn wall_mounted_sign_beats_its_wall() {
        let mut env = room();
        env.signs.push(sign(4, 19.99, 10.0, 2.0, Vec2::new(-1.0, 0.0)));
        let cfg = CameraConfig::default();
        assert!(projected_pixel_count(&env, &pose(5.0, 10.0, east()), &cfg, SignId(4)).unwrap() > 0);
    }
}
