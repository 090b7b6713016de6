//! Stochastic augmentation applied before normalization; inputs and
//! outputs live in [0,1].
//!
//! Each transform is gated by its own Bernoulli draw and the draw order is
//! fixed (transpose, h-flip, v-flip, shift, rotate, zoom, brightness,
//! contrast, saturation, hue, CLAHE, noise, motion/median/Gaussian blur),
//! so a seed fully determines the output. Axis-aligned geometric ops are
//! index permutations and therefore exact; shift/rotate/zoom compose into
//! a single bilinear resample. Geometric ops move the bounding box through
//! the same map.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::Sample;
use crate::geometry::BoundingBox;
use crate::rng::{rng_from_seed, Rng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const SHIFT_RANGE: f64 = 0.15;
pub const ROTATE_RANGE_DEG: f64 = 90.0;
pub const ZOOM_RANGE: (f64, f64) = (0.85, 1.15);
pub const FACTOR_RANGE: (f64, f64) = (0.85, 1.15);
pub const NOISE_SIGMA: f64 = 0.02;
pub const CLAHE_TILES: usize = 8;
pub const CLAHE_CLIP: f64 = 2.0;
/// Smallest box side kept after geometric clipping.
const MIN_BOX_SIDE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentConfig {
    pub geometric_p: f64,
    pub photometric_p: f64,
    /// Gate for CLAHE, noise, and each blur.
    pub special_p: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { geometric_p: 0.5, photometric_p: 0.3, special_p: 0.1 }
    }
}

impl AugmentConfig {
    pub const OFF: AugmentConfig =
        AugmentConfig { geometric_p: 0.0, photometric_p: 0.0, special_p: 0.0 };

    pub fn valid(&self) -> bool {
        [self.geometric_p, self.photometric_p, self.special_p]
            .iter()
            .all(|p| (0.0..=1.0).contains(p))
    }
}

fn unpack<T: Scalar>(image: &Tensor<T>) -> (usize, usize, usize, Vec<f64>) {
    let shape = image.shape();
    assert_eq!(shape.len(), 3, "augment expects [C,H,W], got {shape:?}");
    let data = image.data().iter().map(|&v| v.to_f64()).collect();
    (shape[0], shape[1], shape[2], data)
}

fn pack<T: Scalar>(c: usize, h: usize, w: usize, data: Vec<f64>) -> Tensor<T> {
    let data = data.into_iter().map(T::from_f64).collect();
    Tensor::from_vec(vec![c, h, w], data).expect("augmented pixels are finite")
}

// --- exact index-permutation geometry ---

pub fn transpose<T: Scalar>(image: &Tensor<T>) -> Tensor<T> {
    let shape = image.shape().to_vec();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let src = image.data();
    let mut out = vec![T::zero(); src.len()];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[(ch * w + x) * h + y] = src[(ch * h + y) * w + x];
            }
        }
    }
    drop(src);
    Tensor::from_vec(vec![c, w, h], out).expect("permutation preserves finiteness")
}

pub fn transpose_box(b: &BoundingBox) -> BoundingBox {
    BoundingBox { x_min: b.y_min, y_min: b.x_min, x_max: b.y_max, y_max: b.x_max }
}

pub fn flip_horizontal<T: Scalar>(image: &Tensor<T>) -> Tensor<T> {
    let shape = image.shape().to_vec();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let src = image.data();
    let mut out = vec![T::zero(); src.len()];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[(ch * h + y) * w + (w - 1 - x)] = src[(ch * h + y) * w + x];
            }
        }
    }
    drop(src);
    Tensor::from_vec(shape, out).expect("permutation preserves finiteness")
}

pub fn flip_horizontal_box(b: &BoundingBox, width: f64) -> BoundingBox {
    BoundingBox { x_min: width - b.x_max, y_min: b.y_min, x_max: width - b.x_min, y_max: b.y_max }
}

pub fn flip_vertical<T: Scalar>(image: &Tensor<T>) -> Tensor<T> {
    let shape = image.shape().to_vec();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let src = image.data();
    let mut out = vec![T::zero(); src.len()];
    for ch in 0..c {
        for y in 0..h {
            let a = (ch * h + y) * w;
            let d = (ch * h + (h - 1 - y)) * w;
            out[d..d + w].copy_from_slice(&src[a..a + w]);
        }
    }
    drop(src);
    Tensor::from_vec(shape, out).expect("permutation preserves finiteness")
}

pub fn flip_vertical_box(b: &BoundingBox, height: f64) -> BoundingBox {
    BoundingBox { x_min: b.x_min, y_min: height - b.y_max, x_max: b.x_max, y_max: height - b.y_min }
}

/// Quarter-turn rotations, `turns` steps clockwise; lossless.
pub fn rotate_quarter<T: Scalar>(image: &Tensor<T>, turns: u32) -> Tensor<T> {
    let shape = image.shape().to_vec();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let src = image.data();
    let turns = turns % 4;
    let (oh, ow) = if turns % 2 == 1 { (w, h) } else { (h, w) };
    let mut out = vec![T::zero(); src.len()];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let (sy, sx) = match turns {
                    0 => (y, x),
                    1 => (h - 1 - x, y),
                    2 => (h - 1 - y, w - 1 - x),
                    _ => (x, w - 1 - y),
                };
                out[(ch * oh + y) * ow + x] = src[(ch * h + sy) * w + sx];
            }
        }
    }
    drop(src);
    Tensor::from_vec(vec![c, oh, ow], out).expect("permutation preserves finiteness")
}

pub fn rotate_quarter_box(b: &BoundingBox, height: f64, width: f64, turns: u32) -> BoundingBox {
    match turns % 4 {
        0 => *b,
        1 => BoundingBox {
            x_min: height - b.y_max,
            y_min: b.x_min,
            x_max: height - b.y_min,
            y_max: b.x_max,
        },
        2 => BoundingBox {
            x_min: width - b.x_max,
            y_min: height - b.y_max,
            x_max: width - b.x_min,
            y_max: height - b.y_min,
        },
        _ => BoundingBox {
            x_min: b.y_min,
            y_min: width - b.x_max,
            x_max: b.y_max,
            y_max: width - b.x_min,
        },
    }
}

// --- continuous geometry: one combined affine resample ---

#[derive(Debug, Clone, Copy)]
pub struct AffineParams {
    /// Degrees, positive turns the content counterclockwise on screen.
    pub rotate_deg: f64,
    /// Horizontal shift as a fraction of width.
    pub shift_x: f64,
    /// Vertical shift as a fraction of height.
    pub shift_y: f64,
    /// Magnification about the image center.
    pub zoom: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams =
        AffineParams { rotate_deg: 0.0, shift_x: 0.0, shift_y: 0.0, zoom: 1.0 };
}

/// Resample through the inverse map with bilinear weights; out-of-frame
/// reads produce zero. Frame size is preserved.
pub fn affine<T: Scalar>(image: &Tensor<T>, p: &AffineParams) -> Tensor<T> {
    let (c, h, w, src) = unpack(image);
    let theta = p.rotate_deg.to_radians();
    let (sin_t, cos_t) = theta.sin_cos();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (tx, ty) = (p.shift_x * w as f64, p.shift_y * h as f64);
    let mut out = vec![0.0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            // inverse map of F(q) = c + t + z*R*(q - c)
            let dx = (x as f64 + 0.5 - cx - tx) / p.zoom;
            let dy = (y as f64 + 0.5 - cy - ty) / p.zoom;
            let sx = cx + (dx * cos_t - dy * sin_t) - 0.5;
            let sy = cy + (dx * sin_t + dy * cos_t) - 0.5;
            if sx <= -1.0 || sy <= -1.0 || sx >= w as f64 || sy >= h as f64 {
                continue;
            }
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            for ch in 0..c {
                let at = |yy: f64, xx: f64| -> f64 {
                    if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
                        0.0
                    } else {
                        src[(ch * h + yy as usize) * w + xx as usize]
                    }
                };
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1.0) * fx;
                let bot = at(y0 + 1.0, x0) * (1.0 - fx) + at(y0 + 1.0, x0 + 1.0) * fx;
                out[(ch * h + y) * w + x] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    pack(c, h, w, out)
}

/// Forward-map the box corners, take their hull, clip to the frame. A box
/// crushed by clipping is replaced by a minimum box around its center.
pub fn affine_box(b: &BoundingBox, height: f64, width: f64, p: &AffineParams) -> BoundingBox {
    let theta = p.rotate_deg.to_radians();
    let (sin_t, cos_t) = theta.sin_cos();
    let (cx, cy) = (width / 2.0, height / 2.0);
    let (tx, ty) = (p.shift_x * width, p.shift_y * height);
    let fwd = |x: f64, y: f64| -> (f64, f64) {
        let dx = x - cx;
        let dy = y - cy;
        (
            cx + tx + p.zoom * (dx * cos_t + dy * sin_t),
            cy + ty + p.zoom * (-dx * sin_t + dy * cos_t),
        )
    };
    let corners = [
        fwd(b.x_min, b.y_min),
        fwd(b.x_max, b.y_min),
        fwd(b.x_min, b.y_max),
        fwd(b.x_max, b.y_max),
    ];
    let mut x_min = f64::INFINITY;
    let mut y_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (x, y) in corners {
        x_min = x_min.min(x);
        y_min = y_min.min(y);
        x_max = x_max.max(x);
        y_max = y_max.max(y);
    }
    x_min = x_min.clamp(0.0, width);
    x_max = x_max.clamp(0.0, width);
    y_min = y_min.clamp(0.0, height);
    y_max = y_max.clamp(0.0, height);
    if x_max - x_min < MIN_BOX_SIDE || y_max - y_min < MIN_BOX_SIDE {
        let half = MIN_BOX_SIDE / 2.0;
        let mx = ((x_min + x_max) / 2.0).clamp(half, width - half);
        let my = ((y_min + y_max) / 2.0).clamp(half, height - half);
        return BoundingBox { x_min: mx - half, y_min: my - half, x_max: mx + half, y_max: my + half };
    }
    BoundingBox { x_min, y_min, x_max, y_max }
}

/// Rotation that takes the lossless permutation path on exact multiples
/// of 90 degrees and the bilinear path otherwise.
pub fn rotate<T: Scalar>(
    image: &Tensor<T>,
    b: &BoundingBox,
    degrees: f64,
) -> (Tensor<T>, BoundingBox) {
    let quarters = degrees / 90.0;
    if quarters.fract() == 0.0 && quarters.abs() <= 4.0 {
        // positive degrees are counterclockwise -> clockwise quarter turns
        let turns = ((4 - quarters as i32 % 4) % 4) as u32;
        let shape = image.shape();
        let (h, w) = (shape[1] as f64, shape[2] as f64);
        (rotate_quarter(image, turns), rotate_quarter_box(b, h, w, turns))
    } else {
        let p = AffineParams { rotate_deg: degrees, ..AffineParams::IDENTITY };
        let shape = image.shape();
        let (h, w) = (shape[1] as f64, shape[2] as f64);
        (affine(image, &p), affine_box(b, h, w, &p))
    }
}

// --- photometric ---

pub fn brightness<T: Scalar>(image: &Tensor<T>, factor: f64) -> Tensor<T> {
    let (c, h, w, mut v) = unpack(image);
    for x in &mut v {
        *x = (*x * factor).clamp(0.0, 1.0);
    }
    pack(c, h, w, v)
}

/// Scales deviation from the luma-weighted global mean.
pub fn contrast<T: Scalar>(image: &Tensor<T>, factor: f64) -> Tensor<T> {
    let (c, h, w, mut v) = unpack(image);
    assert_eq!(c, 3, "contrast expects RGB");
    let n = h * w;
    let mut mean = 0.0;
    for i in 0..n {
        mean += 0.299 * v[i] + 0.587 * v[n + i] + 0.114 * v[2 * n + i];
    }
    mean /= n as f64;
    for x in &mut v {
        *x = (mean + (*x - mean) * factor).clamp(0.0, 1.0);
    }
    pack(c, h, w, v)
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let v = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = v - min;
    let s = if v > 0.0 { delta / v } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if v == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if v == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    (h, s, v)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as i64 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn map_hsv<T: Scalar>(image: &Tensor<T>, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) -> Tensor<T> {
    let (c, h, w, mut v) = unpack(image);
    assert_eq!(c, 3, "HSV ops expect RGB");
    let n = h * w;
    for i in 0..n {
        let (hh, ss, vv) = rgb_to_hsv(v[i], v[n + i], v[2 * n + i]);
        let (hh, ss, vv) = f(hh, ss, vv);
        let (r, g, b) = hsv_to_rgb(hh, ss.clamp(0.0, 1.0), vv.clamp(0.0, 1.0));
        v[i] = r;
        v[n + i] = g;
        v[2 * n + i] = b;
    }
    pack(c, h, w, v)
}

pub fn saturation<T: Scalar>(image: &Tensor<T>, factor: f64) -> Tensor<T> {
    map_hsv(image, |h, s, v| (h, s * factor, v))
}

/// Multiplies the hue channel, wrapping modulo 1.
pub fn hue<T: Scalar>(image: &Tensor<T>, factor: f64) -> Tensor<T> {
    map_hsv(image, |h, s, v| ((h * factor).rem_euclid(1.0), s, v))
}

/// Contrast-limited adaptive histogram equalization of the HSV value
/// channel: 8x8 tiles, clip limit 2.0, bilinear interpolation between
/// neighboring tile mappings.
pub fn clahe<T: Scalar>(image: &Tensor<T>) -> Tensor<T> {
    let (c, h, w, mut v) = unpack(image);
    assert_eq!(c, 3, "CLAHE expects RGB");
    let n = h * w;
    let tiles_y = CLAHE_TILES.min(h);
    let tiles_x = CLAHE_TILES.min(w);
    let th = h as f64 / tiles_y as f64;
    let tw = w as f64 / tiles_x as f64;

    let mut value = vec![0.0f64; n];
    let mut bin = vec![0usize; n];
    for i in 0..n {
        value[i] = v[i].max(v[n + i]).max(v[2 * n + i]);
        bin[i] = ((value[i].clamp(0.0, 1.0) * 255.0).round()) as usize;
    }

    // per-tile clipped histogram -> cdf lookup
    let mut luts = vec![[0.0f64; 256]; tiles_y * tiles_x];
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            let y0 = (ty as f64 * th) as usize;
            let y1 = (((ty + 1) as f64 * th) as usize).min(h).max(y0 + 1);
            let x0 = (tx as f64 * tw) as usize;
            let x1 = (((tx + 1) as f64 * tw) as usize).min(w).max(x0 + 1);
            let mut hist = [0.0f64; 256];
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bin[y * w + x]] += 1.0;
                }
            }
            let limit = CLAHE_CLIP * count / 256.0;
            let mut excess = 0.0;
            for hb in hist.iter_mut() {
                if *hb > limit {
                    excess += *hb - limit;
                    *hb = limit;
                }
            }
            let bump = excess / 256.0;
            let lut = &mut luts[ty * tiles_x + tx];
            let mut acc = 0.0;
            for b in 0..256 {
                acc += hist[b] + bump;
                lut[b] = acc / count;
            }
        }
    }

    for y in 0..h {
        let gy = (y as f64 + 0.5) / th - 0.5;
        let ty0 = gy.floor().clamp(0.0, (tiles_y - 1) as f64) as usize;
        let ty1 = (ty0 + 1).min(tiles_y - 1);
        let fy = (gy - ty0 as f64).clamp(0.0, 1.0);
        for x in 0..w {
            let gx = (x as f64 + 0.5) / tw - 0.5;
            let tx0 = gx.floor().clamp(0.0, (tiles_x - 1) as f64) as usize;
            let tx1 = (tx0 + 1).min(tiles_x - 1);
            let fx = (gx - tx0 as f64).clamp(0.0, 1.0);
            let b = bin[y * w + x];
            let top = luts[ty0 * tiles_x + tx0][b] * (1.0 - fx) + luts[ty0 * tiles_x + tx1][b] * fx;
            let bot = luts[ty1 * tiles_x + tx0][b] * (1.0 - fx) + luts[ty1 * tiles_x + tx1][b] * fx;
            let v_new = (top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0);
            let i = y * w + x;
            let v_old = value[i];
            if v_old > 1e-12 {
                let scale = v_new / v_old;
                v[i] = (v[i] * scale).clamp(0.0, 1.0);
                v[n + i] = (v[n + i] * scale).clamp(0.0, 1.0);
                v[2 * n + i] = (v[2 * n + i] * scale).clamp(0.0, 1.0);
            } else {
                v[i] = v_new;
                v[n + i] = v_new;
                v[2 * n + i] = v_new;
            }
        }
    }
    pack(c, h, w, v)
}

pub fn gaussian_noise<T: Scalar>(image: &Tensor<T>, sigma: f64, rng: &mut Rng) -> Tensor<T> {
    let (c, h, w, mut v) = unpack(image);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    for x in &mut v {
        *x = (*x + normal.sample(rng)).clamp(0.0, 1.0);
    }
    pack(c, h, w, v)
}

fn convolve_replicate<T: Scalar>(
    image: &Tensor<T>,
    taps: &[(i64, i64, f64)], // (dy, dx, weight)
) -> Tensor<T> {
    let (c, h, w, src) = unpack(image);
    let mut out = vec![0.0f64; src.len()];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for &(dy, dx, wt) in taps {
                    let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    acc += wt * src[(ch * h + sy) * w + sx];
                }
                out[(ch * h + y) * w + x] = acc.clamp(0.0, 1.0);
            }
        }
    }
    pack(c, h, w, out)
}

pub const MOTION_DIRECTIONS: [(i64, i64); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

/// Length-3 line average along one of four directions.
pub fn motion_blur<T: Scalar>(image: &Tensor<T>, direction: (i64, i64)) -> Tensor<T> {
    let (dy, dx) = direction;
    let third = 1.0 / 3.0;
    convolve_replicate(image, &[(-dy, -dx, third), (0, 0, third), (dy, dx, third)])
}

pub fn gaussian_blur<T: Scalar>(image: &Tensor<T>) -> Tensor<T> {
    let mut taps = Vec::with_capacity(9);
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let wy = if dy == 0 { 0.5 } else { 0.25 };
            let wx = if dx == 0 { 0.5 } else { 0.25 };
            taps.push((dy, dx, wy * wx));
        }
    }
    convolve_replicate(image, &taps)
}

pub fn median_blur<T: Scalar>(image: &Tensor<T>) -> Tensor<T> {
    let (c, h, w, src) = unpack(image);
    let mut out = vec![0.0f64; src.len()];
    let mut window = [0.0f64; 9];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut k = 0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                        let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        window[k] = src[(ch * h + sy) * w + sx];
                        k += 1;
                    }
                }
                window.sort_unstable_by(|a, b| a.partial_cmp(b).expect("pixels are finite"));
                out[(ch * h + y) * w + x] = window[4];
            }
        }
    }
    pack(c, h, w, out)
}

// --- gated pipeline ---

pub fn augment<T: Scalar>(sample: &Sample<T>, seed: u64) -> Sample<T> {
    augment_with(sample, &AugmentConfig::default(), seed)
}

pub fn augment_with<T: Scalar>(sample: &Sample<T>, config: &AugmentConfig, seed: u64) -> Sample<T> {
    debug_assert!(config.valid(), "augment probabilities out of range: {config:?}");
    let mut rng = rng_from_seed(seed);
    let gate = |rng: &mut Rng, p: f64| rng.random::<f64>() < p;
    let mut image = sample.image.clone();
    let mut bbox = sample.bbox;

    let g = config.geometric_p;
    if gate(&mut rng, g) {
        bbox = transpose_box(&bbox);
        image = transpose(&image);
    }
    let dims = |img: &Tensor<T>| (img.shape()[1] as f64, img.shape()[2] as f64);
    if gate(&mut rng, g) {
        let (_, w) = dims(&image);
        bbox = flip_horizontal_box(&bbox, w);
        image = flip_horizontal(&image);
    }
    if gate(&mut rng, g) {
        let (h, _) = dims(&image);
        bbox = flip_vertical_box(&bbox, h);
        image = flip_vertical(&image);
    }
    let mut params = AffineParams::IDENTITY;
    let mut any_affine = false;
    if gate(&mut rng, g) {
        params.shift_x = rng.random_range(-SHIFT_RANGE..SHIFT_RANGE);
        params.shift_y = rng.random_range(-SHIFT_RANGE..SHIFT_RANGE);
        any_affine = true;
    }
    if gate(&mut rng, g) {
        params.rotate_deg = rng.random_range(-ROTATE_RANGE_DEG..ROTATE_RANGE_DEG);
        any_affine = true;
    }
    if gate(&mut rng, g) {
        params.zoom = rng.random_range(ZOOM_RANGE.0..ZOOM_RANGE.1);
        any_affine = true;
    }
    if any_affine {
        let (h, w) = dims(&image);
        bbox = affine_box(&bbox, h, w, &params);
        image = affine(&image, &params);
    }

    let p = config.photometric_p;
    let factor = |rng: &mut Rng| rng.random_range(FACTOR_RANGE.0..FACTOR_RANGE.1);
    if gate(&mut rng, p) {
        let f = factor(&mut rng);
        image = brightness(&image, f);
    }
    if gate(&mut rng, p) {
        let f = factor(&mut rng);
        image = contrast(&image, f);
    }
    if gate(&mut rng, p) {
        let f = factor(&mut rng);
        image = saturation(&image, f);
    }
    if gate(&mut rng, p) {
        let f = factor(&mut rng);
        image = hue(&image, f);
    }

    let s = config.special_p;
    if gate(&mut rng, s) {
        image = clahe(&image);
    }
    if gate(&mut rng, s) {
        image = gaussian_noise(&image, NOISE_SIGMA, &mut rng);
    }
    if gate(&mut rng, s) {
        let dir = MOTION_DIRECTIONS[rng.random_range(0..MOTION_DIRECTIONS.len())];
        image = motion_blur(&image, dir);
    }
    if gate(&mut rng, s) {
        image = median_blur(&image);
    }
    if gate(&mut rng, s) {
        image = gaussian_blur(&image);
    }

    Sample {
        id: sample.id.clone(),
        image,
        label: sample.label,
        bbox,
        has_artifact: sample.has_artifact,
    }
}
