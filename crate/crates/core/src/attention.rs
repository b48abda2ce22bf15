//! Task-based visual attention: frustum, bottom-up saliency and semantic
//! relevance channels fused by a weighted geometric mean, then summed per
//! sign and squashed to a recognition probability.

use serde::{Deserialize, Serialize};

use crate::environment::{Environment, SemanticModel, SignId};
use crate::perception::{CameraConfig, SignMask, ViewRaster};

/// Scalar field over the raster, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl AttentionMap {
    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        AttentionMap {
            width,
            height,
            values: vec![v; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Scales so the maximum is 1; all-zero maps stay zero.
    pub fn normalize_max(&mut self) {
        let m = self.max();
        if m > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= m);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerticalOrigin {
    Top,
    Bottom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrustumParams {
    pub gaussian_mu: f64,
    pub gaussian_sigma: f64,
    pub beta_alpha: f64,
    pub beta_beta: f64,
    pub vertical_origin: VerticalOrigin,
}

impl Default for FrustumParams {
    fn default() -> Self {
        FrustumParams {
            gaussian_mu: 0.0,
            gaussian_sigma: 7.0,
            beta_alpha: 3.0,
            beta_beta: 12.0,
            vertical_origin: VerticalOrigin::Top,
        }
    }
}

impl FrustumParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gaussian_sigma > 0.0 && self.beta_alpha > 0.0 && self.beta_beta > 0.0) {
            return Err("frustum sigma, alpha and beta must be positive".into());
        }
        Ok(())
    }

    /// Gaussian over horizontal eccentricity (degrees), peak 1.
    pub fn horizontal_factor(&self, theta_deg: f64) -> f64 {
        let z = (theta_deg - self.gaussian_mu) / self.gaussian_sigma;
        (-0.5 * z * z).exp()
    }

    /// Beta density over the normalized vertical coordinate, divided by its
    /// value at the mode. For shapes without an interior mode the caller
    /// normalizes by the sampled maximum instead.
    pub fn vertical_factor(&self, y_hat: f64) -> f64 {
        let (a, b) = (self.beta_alpha, self.beta_beta);
        if a > 1.0 && b > 1.0 {
            let mode = (a - 1.0) / (a + b - 2.0);
            (a - 1.0) * (y_hat / mode).ln() + (b - 1.0) * ((1.0 - y_hat) / (1.0 - mode)).ln()
        } else {
            (a - 1.0) * y_hat.ln() + (b - 1.0) * (1.0 - y_hat).ln()
        }
        .exp()
    }

    pub fn beta_mode(&self) -> Option<f64> {
        let (a, b) = (self.beta_alpha, self.beta_beta);
        (a > 1.0 && b > 1.0).then(|| (a - 1.0) / (a + b - 2.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionWeights {
    pub w_sal: f64,
    pub w_sem: f64,
    pub w_fru: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            w_sal: 1.0,
            w_sem: 1.0,
            w_fru: 1.0,
        }
    }
}

impl FusionWeights {
    pub fn validate(&self) -> Result<(), String> {
        let ws = [self.w_sal, self.w_sem, self.w_fru];
        if ws.iter().any(|w| !(*w >= 0.0)) || ws.iter().sum::<f64>() <= 0.0 {
            return Err("fusion weights must be nonnegative with a positive sum".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("attention maps differ in size: {0}x{1} vs {2}x{3}")]
pub struct DimensionMismatch(pub usize, pub usize, pub usize, pub usize);

/// Horizontal eccentricity in degrees of column `x` under the pinhole model.
pub fn column_eccentricity(cfg: &CameraConfig, x: usize) -> f64 {
    (cfg.ndc_x(x) * cfg.tan_half_h()).atan().to_degrees()
}

/// Normalized vertical coordinate of row `y`, measured from the chosen origin.
pub fn row_coordinate(height: usize, y: usize, origin: VerticalOrigin) -> f64 {
    let from_top = (y as f64 + 0.5) / height as f64;
    match origin {
        VerticalOrigin::Top => from_top,
        VerticalOrigin::Bottom => 1.0 - from_top,
    }
}

pub fn frustum_map(cfg: &CameraConfig, params: &FrustumParams) -> AttentionMap {
    let (w, h) = (cfg.raster_width, cfg.raster_height);
    let cols: Vec<f64> = (0..w)
        .map(|x| params.horizontal_factor(column_eccentricity(cfg, x)))
        .collect();
    let mut rows: Vec<f64> = (0..h)
        .map(|y| params.vertical_factor(row_coordinate(h, y, params.vertical_origin)))
        .collect();
    if params.beta_mode().is_none() {
        let m = rows.iter().copied().fold(0.0, f64::max);
        if m > 0.0 && m.is_finite() {
            rows.iter_mut().for_each(|r| *r /= m);
        }
    }
    let mut map = AttentionMap::filled(w, h, 0.0);
    for (y, ry) in rows.iter().enumerate() {
        for (x, cx) in cols.iter().enumerate() {
            map.values[y * w + x] = (cx * ry).min(1.0);
        }
    }
    map
}

pub const SALIENCY_BINS: usize = 32;
pub const SALIENCY_LEVELS: usize = 3;
/// Value of a channel-level map in which no pixel is rarer than another.
pub const UNIFORM_FLOOR: f64 = 1.0 / SALIENCY_BINS as f64;

/// Opponent color channel used by the rarity saliency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Luminance,
    RedGreen,
    BlueYellow,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Luminance, Channel::RedGreen, Channel::BlueYellow];

    pub fn value(self, c: [f64; 3]) -> f64 {
        match self {
            Channel::Luminance => (c[0] + c[1] + c[2]) / 3.0,
            Channel::RedGreen => c[0] - c[1],
            Channel::BlueYellow => c[2] - 0.5 * (c[0] + c[1]),
        }
    }

    /// Theoretical value range for colors in [0, 1]^3.
    pub fn range(self) -> (f64, f64) {
        match self {
            Channel::Luminance => (0.0, 1.0),
            Channel::RedGreen | Channel::BlueYellow => (-1.0, 1.0),
        }
    }

    pub fn bin(self, v: f64) -> usize {
        let (lo, hi) = self.range();
        bin_with(v, lo, SALIENCY_BINS as f64 / (hi - lo))
    }
}

fn bin_with(v: f64, lo: f64, scale: f64) -> usize {
    // truncation equals floor on the clamped non-negative value
    (((v - lo) * scale).max(0.0) as usize).min(SALIENCY_BINS - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Plane {
    /// Separable [1 4 6 4 1]/16 blur followed by 2x decimation.
    pub fn pyr_down(&self) -> Plane {
        const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let (w, h) = (self.width, self.height);
        let (nw, nh) = (w.div_ceil(2).max(1), h.div_ceil(2).max(1));
        let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
        // horizontal pass, kept only at the even columns that survive decimation
        let mut tmp = vec![0.0; nw * h];
        for y in 0..h {
            let row = &self.values[y * w..(y + 1) * w];
            for x in 0..nw {
                let c = 2 * x as isize;
                let mut acc = 0.0;
                for (i, k) in K.iter().enumerate() {
                    acc += k * row[clamp(c + i as isize - 2, w)];
                }
                tmp[y * nw + x] = acc;
            }
        }
        let mut out = vec![0.0; nw * nh];
        for y in 0..nh {
            let c = 2 * y as isize;
            for (i, k) in K.iter().enumerate() {
                let src = clamp(c + i as isize - 2, h) * nw;
                for x in 0..nw {
                    out[y * nw + x] += k * tmp[src + x];
                }
            }
        }
        Plane {
            width: nw,
            height: nh,
            values: out,
        }
    }

    /// Bilinear resampling with pixel centers aligned.
    pub fn resize(&self, w: usize, h: usize) -> Plane {
        if w == self.width && h == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / w as f64;
        let sy = self.height as f64 / h as f64;
        let taps = |n: usize, src: usize, scale: f64| -> Vec<(usize, usize, f64)> {
            (0..n)
                .map(|i| {
                    let f = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
                    let i0 = (f.floor() as usize).min(src - 1);
                    (i0, (i0 + 1).min(src - 1), f - f.floor())
                })
                .collect()
        };
        let xs = taps(w, self.width, sx);
        let ys = taps(h, self.height, sy);
        let mut out = Vec::with_capacity(w * h);
        for &(y0, y1, ty) in &ys {
            let r0 = &self.values[y0 * self.width..(y0 + 1) * self.width];
            let r1 = &self.values[y1 * self.width..(y1 + 1) * self.width];
            for &(x0, x1, tx) in &xs {
                let top = r0[x0] * (1.0 - tx) + r0[x1] * tx;
                let bot = r1[x0] * (1.0 - tx) + r1[x1] * tx;
                out.push(top * (1.0 - ty) + bot * ty);
            }
        }
        Plane {
            width: w,
            height: h,
            values: out,
        }
    }
}

/// Self-information of each pixel's bin under the plane's own histogram.
pub fn rarity(plane: &Plane, channel: Channel) -> Plane {
    let (lo, hi) = channel.range();
    let scale = SALIENCY_BINS as f64 / (hi - lo);
    let mut hist = [0usize; SALIENCY_BINS];
    let bins: Vec<u8> = plane.values.iter().map(|&v| bin_with(v, lo, scale) as u8).collect();
    for &b in &bins {
        hist[b as usize] += 1;
    }
    let n = bins.len() as f64;
    let info = hist.map(|c| if c == 0 { 0.0 } else { -(c as f64 / n).ln() });
    Plane {
        width: plane.width,
        height: plane.height,
        values: bins.iter().map(|&b| info[b as usize]).collect(),
    }
}

/// Max-normalizes a rarity plane; a plane with no variation becomes the
/// uniform floor.
pub fn normalize_rarity(mut p: Plane) -> Plane {
    let (lo, hi) = p
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi - lo <= 1e-12 || hi <= 0.0 {
        p.values.iter_mut().for_each(|v| *v = UNIFORM_FLOOR);
    } else {
        p.values.iter_mut().for_each(|v| *v /= hi);
    }
    p
}

/// `normalize_rarity(rarity(plane, channel))` computed on the bin table.
fn normalized_rarity(plane: &Plane, channel: Channel) -> Plane {
    let (lo, hi) = channel.range();
    let scale = SALIENCY_BINS as f64 / (hi - lo);
    let mut hist = [0usize; SALIENCY_BINS];
    let bins: Vec<u8> = plane.values.iter().map(|&v| bin_with(v, lo, scale) as u8).collect();
    for &b in &bins {
        hist[b as usize] += 1;
    }
    let n = bins.len() as f64;
    let mut info = hist.map(|c| if c == 0 { 0.0 } else { -(c as f64 / n).ln() });
    let (lo, hi) = hist
        .iter()
        .zip(&info)
        .filter(|e| *e.0 > 0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| (lo.min(v), hi.max(v)));
    if hi - lo <= 1e-12 || hi <= 0.0 {
        info = [UNIFORM_FLOOR; SALIENCY_BINS];
    } else {
        info.iter_mut().for_each(|v| *v /= hi);
    }
    Plane {
        width: plane.width,
        height: plane.height,
        values: bins.iter().map(|&b| info[b as usize]).collect(),
    }
}

/// The nine normalized channel-level rarity maps at their pyramid resolution,
/// ordered channel-major.
pub fn rarity_layers(raster: &ViewRaster) -> Vec<(Channel, usize, Plane)> {
    let mut layers = Vec::with_capacity(Channel::ALL.len() * SALIENCY_LEVELS);
    for ch in Channel::ALL {
        let mut level = Plane {
            width: raster.width,
            height: raster.height,
            values: raster.pixels.iter().map(|&c| ch.value(c)).collect(),
        };
        for l in 0..SALIENCY_LEVELS {
            if l > 0 {
                level = level.pyr_down();
            }
            layers.push((ch, l, normalized_rarity(&level, ch)));
        }
    }
    layers
}

/// Bottom-up rarity saliency: mean of the upsampled channel-level maps.
pub fn saliency_map(raster: &ViewRaster) -> AttentionMap {
    let (w, h) = (raster.width, raster.height);
    let layers = rarity_layers(raster);
    // resampling is linear, so channels are summed per level before upsampling
    let mut acc = vec![0.0; w * h];
    for l in 0..SALIENCY_LEVELS {
        let mut level: Option<Plane> = None;
        for (_, _, p) in layers.iter().filter(|e| e.1 == l) {
            match level.as_mut() {
                None => level = Some(p.clone()),
                Some(sum) => sum.values.iter_mut().zip(&p.values).for_each(|(a, v)| *a += v),
            }
        }
        let Some(level) = level else { continue };
        let up = if level.width == w && level.height == h { level } else { level.resize(w, h) };
        acc.iter_mut().zip(&up.values).for_each(|(a, v)| *a += v);
    }
    let k = layers.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    let mut map = AttentionMap { width: w, height: h, values: acc };
    let (lo, hi) = map
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi - lo > 1e-12 {
        map.normalize_max();
    }
    map
}

pub fn semantic_map(mask: &SignMask, env: &Environment) -> AttentionMap {
    semantic_map_with(mask, env, &env.semantic_model)
}

pub fn semantic_map_with(mask: &SignMask, env: &Environment, model: &SemanticModel) -> AttentionMap {
    let mut lookup: Vec<(u32, f64)> = env
        .signs
        .iter()
        .map(|s| (s.id.0, model.relevance_of(s.object_class)))
        .collect();
    lookup.sort_by_key(|e| e.0);
    let values = mask
        .ids
        .iter()
        .map(|&id| match id {
            0 => model.background_relevance,
            id => lookup
                .binary_search_by_key(&id, |e| e.0)
                .map(|i| lookup[i].1)
                .unwrap_or(model.background_relevance),
        })
        .collect();
    AttentionMap {
        width: mask.width,
        height: mask.height,
        values,
    }
}

/// Weighted geometric mean of one pixel's channel values.
pub fn weighted_geometric_mean(sal: f64, sem: f64, fru: f64, w: &FusionWeights) -> f64 {
    if w.w_sal == w.w_sem && w.w_sem == w.w_fru && w.w_sal > 0.0 {
        let p = sal * sem * fru;
        if p > 0.0 || sal <= 0.0 || sem <= 0.0 || fru <= 0.0 {
            return p.max(0.0).cbrt();
        }
    }
    let total = w.w_sal + w.w_sem + w.w_fru;
    let mut log_sum = 0.0;
    for (v, wt) in [(sal, w.w_sal), (sem, w.w_sem), (fru, w.w_fru)] {
        if wt == 0.0 {
            continue;
        }
        if v <= 0.0 {
            return 0.0;
        }
        log_sum += wt * v.ln();
    }
    (log_sum / total).exp()
}

/// Pixelwise weighted geometric mean without frame renormalization.
pub fn fuse_attention_raw(
    sal: &AttentionMap,
    sem: &AttentionMap,
    fru: &AttentionMap,
    w: &FusionWeights,
) -> Result<AttentionMap, DimensionMismatch> {
    for other in [sem, fru] {
        if (other.width, other.height) != (sal.width, sal.height) {
            return Err(DimensionMismatch(sal.width, sal.height, other.width, other.height));
        }
    }
    let values = sal
        .values
        .iter()
        .zip(&sem.values)
        .zip(&fru.values)
        .map(|((&a, &b), &c)| weighted_geometric_mean(a, b, c, w))
        .collect();
    Ok(AttentionMap {
        width: sal.width,
        height: sal.height,
        values,
    })
}

/// Fused attention rescaled so the frame maximum is 1.
pub fn fuse_attention(
    sal: &AttentionMap,
    sem: &AttentionMap,
    fru: &AttentionMap,
    w: &FusionWeights,
) -> Result<AttentionMap, DimensionMismatch> {
    let mut map = fuse_attention_raw(sal, sem, fru, w)?;
    map.normalize_max();
    Ok(map)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignScore {
    pub sign: SignId,
    pub raw_sum: f64,
    pub attention: f64,
}

/// Default saturation constant: one percent of the frame's pixel count.
pub fn default_kappa(cfg: &CameraConfig) -> f64 {
    0.01 * cfg.pixel_count() as f64
}

pub fn saturate(raw_sum: f64, kappa: f64) -> f64 {
    1.0 - (-raw_sum / kappa).exp()
}

/// Per-sign attention sums, sorted by descending attention (ties by id).
/// Signs absent from the mask are omitted.
pub fn score_signs(fused: &AttentionMap, mask: &SignMask, kappa: f64) -> Vec<SignScore> {
    let mut sums: Vec<(u32, f64)> = Vec::new();
    for (&id, &v) in mask.ids.iter().zip(&fused.values) {
        if id == 0 {
            continue;
        }
        match sums.iter_mut().find(|e| e.0 == id) {
            Some(e) => e.1 += v,
            None => sums.push((id, v)),
        }
    }
    let mut scores: Vec<SignScore> = sums
        .into_iter()
        .map(|(id, raw)| SignScore {
            sign: SignId(id),
            raw_sum: raw,
            attention: saturate(raw, kappa),
        })
        .collect();
    scores.sort_by(|a, b| b.attention.total_cmp(&a.attention).then(a.sign.cmp(&b.sign)));
    scores
}

/// All channel maps of one perception, kept together for debug dumps.
#[derive(Debug, Clone)]
pub struct AttentionFrame {
    pub saliency: AttentionMap,
    pub semantic: AttentionMap,
    pub frustum: AttentionMap,
    pub fused: AttentionMap,
    pub scores: Vec<SignScore>,
}

pub fn attend(
    env: &Environment,
    raster: &ViewRaster,
    mask: &SignMask,
    frustum: &AttentionMap,
    weights: &FusionWeights,
    kappa: f64,
) -> AttentionFrame {
    let saliency = saliency_map(raster);
    let semantic = semantic_map(mask, env);
    let fused = fuse_attention(&saliency, &semantic, frustum, weights).expect("maps share the raster size");
    let scores = score_signs(&fused, mask, kappa);
    AttentionFrame {
        saliency,
        semantic,
        frustum: frustum.clone(),
        fused,
        scores,
    }
}
