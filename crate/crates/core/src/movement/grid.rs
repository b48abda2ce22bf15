use crate::environment::Floor;
use crate::geometry::{self, Vec2};

/// Occupancy grid over a floor's bounding box. Planning nodes are the cell
/// corners; coordinates passed to the `*_grid` methods are in cell units
/// with the origin at the lower-left corner of cell (0, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct NavGrid {
    pub floor: String,
    pub cell_size: f64,
    pub origin: Vec2,
    pub width: usize,
    pub height: usize,
    pub blocked: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("cell size must be positive")]
    BadCellSize,
    #[error("floor '{0}' has a degenerate outline")]
    DegenerateOutline(String),
}

const LINE_EPS: f64 = 1e-9;

fn is_integral(v: f64) -> bool {
    (v - v.round()).abs() < LINE_EPS
}

/// Builds the grid: a cell is blocked iff its interior overlaps an obstacle
/// or leaves the floor outline.
pub fn build_nav_grid(floor: &Floor, cell_size: f64) -> Result<NavGrid, GridError> {
    if !(cell_size > 0.0) {
        return Err(GridError::BadCellSize);
    }
    if floor.outline.len() < 3 || geometry::signed_area(&floor.outline).abs() <= 1e-12 {
        return Err(GridError::DegenerateOutline(floor.id.clone()));
    }
    let (lo, hi) = geometry::bounding_box(&floor.outline);
    let width = (((hi.x - lo.x) / cell_size) - 1e-9).ceil().max(1.0) as usize;
    let height = (((hi.y - lo.y) / cell_size) - 1e-9).ceil().max(1.0) as usize;
    let cell_area = cell_size * cell_size;
    let tol = 1e-9 * cell_area;
    let boxes: Vec<(Vec2, Vec2)> = floor.obstacles.iter().map(|o| geometry::bounding_box(o)).collect();

    let mut blocked = vec![false; width * height];
    for cy in 0..height {
        for cx in 0..width {
            let min = lo + Vec2::new(cx as f64, cy as f64) * cell_size;
            let max = min + Vec2::new(cell_size, cell_size);
            let outside = cell_area - geometry::clipped_area(&floor.outline, min, max) > tol;
            let hit = || {
                floor.obstacles.iter().zip(&boxes).any(|(o, (olo, ohi))| {
                    olo.x < max.x && ohi.x > min.x && olo.y < max.y && ohi.y > min.y && geometry::clipped_area(o, min, max) > tol
                })
            };
            blocked[cy * width + cx] = outside || hit();
        }
    }
    Ok(NavGrid {
        floor: floor.id.clone(),
        cell_size,
        origin: lo,
        width,
        height,
        blocked,
    })
}

impl NavGrid {
    /// Out-of-range cells count as blocked.
    pub fn is_blocked(&self, cx: isize, cy: isize) -> bool {
        if cx < 0 || cy < 0 || cx >= self.width as isize || cy >= self.height as isize {
            return true;
        }
        self.blocked[cy as usize * self.width + cx as usize]
    }

    pub fn blocked_count(&self) -> usize {
        self.blocked.iter().filter(|&&b| b).count()
    }

    pub fn to_grid(&self, p: Vec2) -> Vec2 {
        (p - self.origin) / self.cell_size
    }

    pub fn to_world(&self, g: Vec2) -> Vec2 {
        self.origin + g * self.cell_size
    }

    /// Cell containing a world point, clamped into the grid.
    pub fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let g = self.to_grid(p);
        let cx = (g.x.floor().max(0.0) as usize).min(self.width - 1);
        let cy = (g.y.floor().max(0.0) as usize).min(self.height - 1);
        (cx, cy)
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> Vec2 {
        self.to_world(Vec2::new(cx as f64 + 0.5, cy as f64 + 0.5))
    }

    /// A corner where exactly two diagonally opposite cells are blocked:
    /// free space pinches to a single point there.
    pub fn is_pinch(&self, vx: isize, vy: isize) -> bool {
        let sw = self.is_blocked(vx - 1, vy - 1);
        let se = self.is_blocked(vx, vy - 1);
        let nw = self.is_blocked(vx - 1, vy);
        let ne = self.is_blocked(vx, vy);
        (sw && ne && !se && !nw) || (se && nw && !sw && !ne)
    }

    /// Corners usable as planning nodes.
    pub fn vertex_usable(&self, vx: isize, vy: isize) -> bool {
        if vx < 0 || vy < 0 || vx > self.width as isize || vy > self.height as isize {
            return false;
        }
        let any_free = (-1..=0).any(|dx| (-1..=0).any(|dy| !self.is_blocked(vx + dx, vy + dy)));
        any_free && !self.is_pinch(vx, vy)
    }

    /// Supercover line of sight between two cells, measured between their
    /// centers.
    pub fn grid_line_of_sight(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        let c = |(x, y): (usize, usize)| Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
        self.segment_clear_grid(c(a), c(b))
    }

    /// True iff the segment (grid coordinates) never enters a blocked cell,
    /// never runs along an edge shared by two blocked cells and never
    /// squeezes through a pinch corner. Touching a blocked cell's boundary
    /// is allowed.
    pub fn segment_clear_grid(&self, p: Vec2, q: Vec2) -> bool {
        let (w, h) = (self.width as f64, self.height as f64);
        let inside = |v: Vec2| v.x >= -LINE_EPS && v.y >= -LINE_EPS && v.x <= w + LINE_EPS && v.y <= h + LINE_EPS;
        if !inside(p) || !inside(q) {
            return false;
        }
        for v in [p, q] {
            if is_integral(v.x) && is_integral(v.y) && self.is_pinch(v.x.round() as isize, v.y.round() as isize) {
                return false;
            }
        }
        let d = q - p;
        if d.x.abs() < LINE_EPS && d.y.abs() < LINE_EPS {
            return self.point_free(p);
        }
        if d.y.abs() < LINE_EPS && is_integral(p.y) {
            return self.along_line(p.x, q.x, p.y.round() as isize, true);
        }
        if d.x.abs() < LINE_EPS && is_integral(p.x) {
            return self.along_line(p.y, q.y, p.x.round() as isize, false);
        }

        // next vertical (x = kx) and horizontal (y = ky) grid lines to cross
        let first_line = |from: f64, delta: f64| {
            if delta > 0.0 {
                (from + LINE_EPS).ceil()
            } else {
                (from - LINE_EPS).floor()
            }
        };
        let param = |k: f64, from: f64, delta: f64| {
            if delta.abs() < LINE_EPS {
                f64::INFINITY
            } else {
                (k - from) / delta
            }
        };
        let mut kx = first_line(p.x, d.x);
        let mut ky = first_line(p.y, d.y);
        let mut t_prev = 0.0;
        loop {
            let tx = param(kx, p.x, d.x);
            let ty = param(ky, p.y, d.y);
            let t_next = tx.min(ty).min(1.0);
            if t_next - t_prev > 1e-12 {
                let m = p + d * (0.5 * (t_prev + t_next));
                if self.is_blocked(m.x.floor() as isize, m.y.floor() as isize) {
                    return false;
                }
            }
            if t_next >= 1.0 - 1e-12 {
                return true;
            }
            let hit_x = (tx - t_next).abs() < 1e-12;
            let hit_y = (ty - t_next).abs() < 1e-12;
            if hit_x && hit_y && self.is_pinch(kx as isize, ky as isize) {
                return false;
            }
            if hit_x {
                kx += d.x.signum();
            }
            if hit_y {
                ky += d.y.signum();
            }
            t_prev = t_next;
        }
    }

    /// Segment lying on grid line `line` (y = line if `horizontal`), spanning
    /// `a..b` along it.
    fn along_line(&self, a: f64, b: f64, line: isize, horizontal: bool) -> bool {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let cell = |along: isize, side: isize| {
            if horizontal {
                self.is_blocked(along, line + side)
            } else {
                self.is_blocked(line + side, along)
            }
        };
        let mut k = lo.floor() as isize;
        while (k as f64) < hi - LINE_EPS {
            let seg_lo = (k as f64).max(lo);
            let seg_hi = ((k + 1) as f64).min(hi);
            if seg_hi - seg_lo > LINE_EPS && cell(k, -1) && cell(k, 0) {
                return false;
            }
            k += 1;
        }
        let mut v = (lo - LINE_EPS).ceil() as isize;
        while (v as f64) <= hi + LINE_EPS {
            let pinch = if horizontal { self.is_pinch(v, line) } else { self.is_pinch(line, v) };
            if pinch {
                return false;
            }
            v += 1;
        }
        true
    }

    fn point_free(&self, p: Vec2) -> bool {
        let cx = p.x.floor() as isize;
        let cy = p.y.floor() as isize;
        !self.is_blocked(cx, cy)
            || (is_integral(p.x) && !self.is_blocked(cx - 1, cy))
            || (is_integral(p.y) && !self.is_blocked(cx, cy - 1))
    }

    /// World-coordinate segment check.
    pub fn segment_clear(&self, p: Vec2, q: Vec2) -> bool {
        self.segment_clear_grid(self.to_grid(p), self.to_grid(q))
    }

    /// Nearest free cell center within `max_dist` of `p` (p's own cell if free).
    pub fn snap_to_free(&self, p: Vec2, max_dist: f64) -> Option<Vec2> {
        let (cx, cy) = self.cell_of(p);
        if !self.blocked[cy * self.width + cx] && self.to_grid(p).x >= 0.0 && self.to_grid(p).y >= 0.0 {
            return Some(p);
        }
        let reach = (max_dist / self.cell_size).ceil() as isize + 1;
        let mut best: Option<(f64, Vec2)> = None;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (x, y) = (cx as isize + dx, cy as isize + dy);
                if self.is_blocked(x, y) {
                    continue;
                }
                let c = self.cell_center(x as usize, y as usize);
                let dist = c.distance(p);
                if dist <= max_dist && best.is_none_or(|(bd, _)| dist < bd) {
                    best = Some((dist, c));
                }
            }
        }
        best.map(|(_, c)| c)
    }
}
