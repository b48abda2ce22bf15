//! Shared fixtures and independent reference implementations.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;
use wayfind::scenario::{parse_scenario, Scenario};

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> serde_json::Value {
    json!([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
}

/// One 20x10 room with `n` signs per category for target label "Gate":
/// ids 1..=n are at the target, n+1..=2n point to a goal, the rest are
/// unrelated.
pub fn decision_scenario(n: u32) -> Scenario {
    let mut signs = Vec::new();
    for id in 1..=3 * n {
        let entries = match (id - 1) / n {
            0 => json!([{ "label": "Gate", "action": "at_target" }]),
            1 => json!([{ "label": "Gate", "action": { "direct_to": "gp_gate" } }]),
            _ => json!([{ "label": "Cafe", "action": "at_target" }]),
        };
        signs.push(json!({
            "id": id, "floor": "F0", "center": [0.05, 1.0 + id as f64 * 0.5, 2.2], "normal": [1.0, 0.0],
            "width": 0.4, "height": 0.4, "face_color": [0.2, 0.3, 0.8], "object_class": "signage",
            "entries": entries,
        }));
    }
    let doc = json!({
        "floors": [{ "id": "F0", "elevation": 0.0, "outline": rect(0.0, 0.0, 20.0, 10.0), "obstacles": [] }],
        "signs": signs,
        "goal_points": [{ "id": "gp_gate", "floor": "F0", "position": [15.0, 5.0] }],
        "base_points": [{ "id": "b0", "floor": "F0", "position": [10.0, 5.0] }],
        "task": { "legs": [{
            "start": { "id": "s", "floor": "F0", "position": [2.0, 5.0], "heading_deg": 0.0 },
            "target_label": "Gate",
            "target_point": { "floor": "F0", "position": [18.0, 5.0] },
        }]},
    });
    parse_scenario(&doc.to_string()).expect("fixture scenario is valid")
}

/// Path plus file bytes of every regular file below `root`.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Visibility-graph shortest paths on unit-cell occupancy grids
// ---------------------------------------------------------------------------

/// Occupancy grid padded with a one-cell blocked frame, so every segment
/// leaving the grid crosses a blocked interior.
pub struct Occupancy {
    w: i64,
    h: i64,
    cells: Vec<bool>,
}

impl Occupancy {
    pub fn new(width: usize, height: usize, blocked: &[bool]) -> Self {
        let (w, h) = (width as i64, height as i64);
        let mut cells = vec![true; ((w + 2) * (h + 2)) as usize];
        for y in 0..h {
            for x in 0..w {
                cells[((y + 1) * (w + 2) + x + 1) as usize] = blocked[(y * w + x) as usize];
            }
        }
        Occupancy { w, h, cells }
    }

    pub fn blocked(&self, x: i64, y: i64) -> bool {
        if x < -1 || y < -1 || x > self.w || y > self.h {
            return true;
        }
        self.cells[((y + 1) * (self.w + 2) + x + 1) as usize]
    }

    /// Corner (vx, vy) where free space narrows to a point.
    fn pinch(&self, vx: i64, vy: i64) -> bool {
        let sw = self.blocked(vx - 1, vy - 1);
        let se = self.blocked(vx, vy - 1);
        let nw = self.blocked(vx - 1, vy);
        let ne = self.blocked(vx, vy);
        (sw && ne && !se && !nw) || (se && nw && !sw && !ne)
    }

    /// Parameter interval of segment p->q inside the closed unit square at
    /// cell (cx, cy) (Liang-Barsky).
    fn clip(p: (f64, f64), q: (f64, f64), cx: i64, cy: i64) -> Option<(f64, f64)> {
        let (dx, dy) = (q.0 - p.0, q.1 - p.1);
        let mut t0: f64 = 0.0;
        let mut t1: f64 = 1.0;
        let checks = [
            (-dx, p.0 - cx as f64),
            (dx, (cx + 1) as f64 - p.0),
            (-dy, p.1 - cy as f64),
            (dy, (cy + 1) as f64 - p.1),
        ];
        for (pk, qk) in checks {
            if pk.abs() < 1e-15 {
                if qk < -1e-12 {
                    return None;
                }
            } else {
                let r = qk / pk;
                if pk < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        (t1 - t0 > 1e-12).then_some((t0, t1))
    }

    /// Segment avoids every blocked open square, every edge shared by two
    /// blocked squares and every pinch corner.
    pub fn visible(&self, p: (f64, f64), q: (f64, f64)) -> bool {
        let at = |t: f64| (p.0 + (q.0 - p.0) * t, p.1 + (q.1 - p.1) * t);
        let (x0, x1) = (p.0.min(q.0).floor() as i64 - 1, p.0.max(q.0).ceil() as i64);
        let (y0, y1) = (p.1.min(q.1).floor() as i64 - 1, p.1.max(q.1).ceil() as i64);
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                if !self.blocked(cx, cy) {
                    continue;
                }
                if let Some((t0, t1)) = Self::clip(p, q, cx, cy) {
                    let m = at(0.5 * (t0 + t1));
                    let inside = |v: f64, c: i64| v > c as f64 + 1e-9 && v < (c + 1) as f64 - 1e-9;
                    if inside(m.0, cx) && inside(m.1, cy) {
                        return false;
                    }
                    // chord on the square's boundary: blocked if the square
                    // across that edge is blocked too
                    let on = |v: f64, k: i64| (v - k as f64).abs() < 1e-9;
                    let across = if on(m.0, cx) {
                        Some((cx - 1, cy))
                    } else if on(m.0, cx + 1) {
                        Some((cx + 1, cy))
                    } else if on(m.1, cy) {
                        Some((cx, cy - 1))
                    } else if on(m.1, cy + 1) {
                        Some((cx, cy + 1))
                    } else {
                        None
                    };
                    if across.is_some_and(|(ax, ay)| self.blocked(ax, ay)) {
                        return false;
                    }
                }
            }
        }
        for vy in y0..=y1 + 1 {
            for vx in x0..=x1 + 1 {
                if self.pinch(vx, vy) && point_on_segment((vx as f64, vy as f64), p, q) {
                    return false;
                }
            }
        }
        true
    }

    /// Exact Euclidean shortest path length between two free points by
    /// Dijkstra over the visibility graph of blocked-cell corners.
    pub fn shortest(&self, s: (f64, f64), g: (f64, f64)) -> Option<f64> {
        let mut nodes = vec![s, g];
        for vy in 0..=self.h {
            for vx in 0..=self.w {
                let around = [(vx - 1, vy - 1), (vx, vy - 1), (vx - 1, vy), (vx, vy)];
                let n_blocked = around.iter().filter(|&&(x, y)| self.blocked(x, y)).count();
                // only convex obstacle corners can be bends of a shortest path
                if n_blocked == 1 {
                    nodes.push((vx as f64, vy as f64));
                }
            }
        }
        let n = nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[0] = 0.0;
        loop {
            let u = (0..n).filter(|&i| !done[i] && dist[i].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]))?;
            if u == 1 {
                return Some(dist[1]);
            }
            done[u] = true;
            for v in 0..n {
                if done[v] {
                    continue;
                }
                let d = dist[u] + ((nodes[u].0 - nodes[v].0).powi(2) + (nodes[u].1 - nodes[v].1).powi(2)).sqrt();
                if d < dist[v] && self.visible(nodes[u], nodes[v]) {
                    dist[v] = d;
                }
            }
        }
    }
}

fn point_on_segment(v: (f64, f64), p: (f64, f64), q: (f64, f64)) -> bool {
    let (dx, dy) = (q.0 - p.0, q.1 - p.1);
    let cross = (v.0 - p.0) * dy - (v.1 - p.1) * dx;
    let len = (dx * dx + dy * dy).sqrt();
    if len < 1e-12 {
        return (v.0 - p.0).abs() < 1e-9 && (v.1 - p.1).abs() < 1e-9;
    }
    if (cross / len).abs() > 1e-9 {
        return false;
    }
    let t = ((v.0 - p.0) * dx + (v.1 - p.1) * dy) / (len * len);
    (-1e-12..=1.0 + 1e-12).contains(&t)
}

// ---------------------------------------------------------------------------
// Histogram-rarity saliency, written out directly
// ---------------------------------------------------------------------------

const BINS: usize = 32;

pub struct Img {
    pub w: usize,
    pub h: usize,
    pub v: Vec<f64>,
}

fn channel(c: [f64; 3], k: usize) -> f64 {
    match k {
        0 => (c[0] + c[1] + c[2]) / 3.0,
        1 => c[0] - c[1],
        _ => c[2] - 0.5 * (c[0] + c[1]),
    }
}

fn bin_of(v: f64, k: usize) -> usize {
    let (lo, hi) = if k == 0 { (0.0, 1.0) } else { (-1.0, 1.0) };
    let b = ((v - lo) / (hi - lo) * BINS as f64).floor();
    (b.max(0.0) as usize).min(BINS - 1)
}

/// 5x5 binomial blur with clamped borders, sampled at even pixels.
pub fn reduce(img: &Img) -> Img {
    let k = [1.0, 4.0, 6.0, 4.0, 1.0];
    let (nw, nh) = (img.w.div_ceil(2), img.h.div_ceil(2));
    let mut v = vec![0.0; nw * nh];
    for y in 0..nh {
        for x in 0..nw {
            let mut acc = 0.0;
            for j in 0..5 {
                for i in 0..5 {
                    let sx = (2 * x as i64 + i as i64 - 2).clamp(0, img.w as i64 - 1) as usize;
                    let sy = (2 * y as i64 + j as i64 - 2).clamp(0, img.h as i64 - 1) as usize;
                    acc += k[i] * k[j] * img.v[sy * img.w + sx];
                }
            }
            v[y * nw + x] = acc / 256.0;
        }
    }
    Img { w: nw, h: nh, v }
}

/// Bilinear upsampling with aligned pixel centers and clamped borders.
pub fn enlarge(img: &Img, w: usize, h: usize) -> Img {
    let sample = |i: usize, n: usize, src: usize| {
        let f = (((i as f64 + 0.5) * src as f64 / n as f64) - 0.5).max(0.0);
        let i0 = (f.floor() as usize).min(src - 1);
        (i0, (i0 + 1).min(src - 1), f - f.floor())
    };
    let mut v = vec![0.0; w * h];
    for y in 0..h {
        let (y0, y1, ty) = sample(y, h, img.h);
        for x in 0..w {
            let (x0, x1, tx) = sample(x, w, img.w);
            let at = |xx: usize, yy: usize| img.v[yy * img.w + xx];
            v[y * w + x] = (1.0 - ty) * ((1.0 - tx) * at(x0, y0) + tx * at(x1, y0)) + ty * ((1.0 - tx) * at(x0, y1) + tx * at(x1, y1));
        }
    }
    Img { w, h, v }
}

/// Self-information per pixel, scaled to max 1; flat maps become 1/32.
pub fn rarity_map(img: &Img, k: usize) -> Img {
    let mut hist = [0.0; BINS];
    for &x in &img.v {
        hist[bin_of(x, k)] += 1.0;
    }
    let n = img.v.len() as f64;
    let info: Vec<f64> = img.v.iter().map(|&x| -(hist[bin_of(x, k)] / n).ln()).collect();
    let hi = info.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = info.iter().copied().fold(f64::INFINITY, f64::min);
    let v = if hi - lo <= 1e-12 || hi <= 0.0 {
        vec![1.0 / BINS as f64; info.len()]
    } else {
        info.iter().map(|x| x / hi).collect()
    };
    Img { w: img.w, h: img.h, v }
}

/// Mean of 3 channels x 3 pyramid levels, then scaled to max 1.
pub fn saliency_oracle(w: usize, h: usize, pixels: &[[f64; 3]]) -> Vec<f64> {
    let mut acc = vec![0.0; w * h];
    for k in 0..3 {
        let mut level = Img { w, h, v: pixels.iter().map(|&c| channel(c, k)).collect() };
        for l in 0..3 {
            if l > 0 {
                level = reduce(&level);
            }
            let up = enlarge(&rarity_map(&level, k), w, h);
            for (a, x) in acc.iter_mut().zip(&up.v) {
                *a += x / 9.0;
            }
        }
    }
    let hi = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = acc.iter().copied().fold(f64::INFINITY, f64::min);
    if hi - lo > 1e-12 {
        acc.iter_mut().for_each(|a| *a /= hi);
    }
    acc
}
