//! Synthetic lesion-image generator with controllable label leakage.
//!
//! Every image is a smooth skin-toned background with one elliptical
//! lesion. Label 1 lesions are darker, larger-variance, and have an
//! irregular border; label 0 lesions are smoother and rounder. Spurious
//! artifacts (ruler ticks, ink dots, a corner vignette) are injected with
//! presence correlated to the label by `artifact_correlation`, so a model
//! free to look anywhere can cheat on correlated data and fails on
//! uncorrelated data.
//!
//! Determinism: sample i draws from an independent stream seeded by
//! (seed, 1, i); label assignment uses stream (seed, 0). Pixels are
//! quantized to bytes before the in-memory tensor is built, so generated
//! samples equal their written-then-loaded counterparts exactly.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{netpbm, Annotation, Sample, ANNOTATIONS_FILE, GEN_CONFIG_FILE, IMAGES_DIR};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Ruler,
    InkDot,
    CornerVignette,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 3] =
        [ArtifactKind::Ruler, ArtifactKind::InkDot, ArtifactKind::CornerVignette];
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GenConfig {
    pub n_samples: usize,
    pub image_side: usize,
    pub melanoma_fraction: f64,
    /// Probability that artifact presence copies the label; otherwise
    /// presence is an independent fair coin.
    pub artifact_correlation: f64,
    pub artifact_kinds: Vec<ArtifactKind>,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_samples: 100,
            image_side: 64,
            melanoma_fraction: 0.3,
            artifact_correlation: 0.9,
            artifact_kinds: ArtifactKind::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        if self.image_side < 32 {
            return Err(Error::Config(format!(
                "image_side must be at least 32, got {}",
                self.image_side
            )));
        }
        if !(self.melanoma_fraction > 0.0 && self.melanoma_fraction < 1.0) {
            return Err(Error::Config(format!(
                "melanoma_fraction must lie in (0,1), got {}",
                self.melanoma_fraction
            )));
        }
        if self.melanoma_fraction * (self.n_samples as f64) < 1.0 {
            return Err(Error::Config(format!(
                "melanoma_fraction {} of {} samples yields no positives",
                self.melanoma_fraction, self.n_samples
            )));
        }
        if !(0.0..=1.0).contains(&self.artifact_correlation) {
            return Err(Error::Config(format!(
                "artifact_correlation must lie in [0,1], got {}",
                self.artifact_correlation
            )));
        }
        if self.artifact_kinds.is_empty() {
            return Err(Error::Config("artifact_kinds must not be empty".into()));
        }
        Ok(())
    }
}

/// Largest-remainder split of n into positive/negative counts.
fn positive_count(n: usize, fraction: f64) -> usize {
    let pos_exact = n as f64 * fraction;
    let neg_exact = n as f64 * (1.0 - fraction);
    let pos = pos_exact.floor() as usize;
    let neg = neg_exact.floor() as usize;
    if pos + neg == n {
        pos
    } else {
        // one leftover seat; ties go to the positive class
        let rp = pos_exact - pos as f64;
        let rn = neg_exact - neg as f64;
        if rp >= rn {
            pos + 1
        } else {
            pos
        }
    }
}

/// Deterministic shuffled label vector for the whole dataset.
pub fn plan_labels(config: &GenConfig) -> Vec<u8> {
    let n_pos = positive_count(config.n_samples, config.melanoma_fraction);
    let mut labels = vec![0u8; config.n_samples];
    for l in labels.iter_mut().take(n_pos) {
        *l = 1;
    }
    let mut rng = rng_from_seed(derive_seed(config.seed, &[0]));
    labels.shuffle(&mut rng);
    labels
}

struct Field {
    side: usize,
    // planar r, g, b
    data: Vec<f64>,
}

impl Field {
    fn new(side: usize) -> Field {
        Field { side, data: vec![0.0; 3 * side * side] }
    }

    fn px(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.side + y) * self.side + x]
    }
}

fn render_background(rng: &mut Rng, field: &mut Field) {
    let s = field.side as f64;
    let base = [
        0.80 + rng.random_range(-0.06..0.06),
        0.58 + rng.random_range(-0.06..0.06),
        0.46 + rng.random_range(-0.06..0.06),
    ];
    let gx: f64 = rng.random_range(-0.06..0.06);
    let gy: f64 = rng.random_range(-0.06..0.06);
    let freq = rng.random_range(1.0..3.0);
    let phase = rng.random_range(0.0..2.0 * PI);
    let chan_amp = [
        0.015 * rng.random_range(0.5..1.0),
        0.015 * rng.random_range(0.5..1.0),
        0.015 * rng.random_range(0.5..1.0),
    ];
    for y in 0..field.side {
        for x in 0..field.side {
            let u = x as f64 / s - 0.5;
            let v = y as f64 / s - 0.5;
            let ripple = (2.0 * PI * freq * (u + 0.7 * v) + phase).sin();
            for c in 0..3 {
                *field.px(c, y, x) = base[c] + gx * u + gy * v + chan_amp[c] * ripple;
            }
        }
    }
}

struct Lesion {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos_t: f64,
    sin_t: f64,
    border: [(f64, f64); 4], // (amplitude, phase) per harmonic k=2..5
    edge_width: f64,
    color: [f64; 3],
    chroma_sigma: f64,
    chromatic: bool,
}

fn sample_lesion(rng: &mut Rng, side: usize, label: u8) -> Lesion {
    let s = side as f64;
    let cx = rng.random_range(0.34..0.66) * s;
    let cy = rng.random_range(0.34..0.66) * s;
    // The lesion cue (darker, more chromatic, more irregular interior) is
    // fully learnable, but a planted artifact at correlation 0.9 is the
    // faster shortcut: a high-contrast, fixed-vocabulary mark versus a color
    // shift that per-sample jitter partly masks. A classifier free to use
    // either will lean on the artifact and pay for it when the correlation
    // is broken at test time, which is the failure mode the benchmark
    // exists to expose.
    let (rx, aspect, amp, edge_width, base, jitter, chroma_sigma): (f64, f64, f64, f64, [f64; 3], f64, f64) = if label == 1 {
        (
            rng.random_range(0.11..0.18) * s,
            rng.random_range(0.70..1.40),
            0.13,
            0.08,
            [0.34, 0.21, 0.15],
            0.07,
            0.09,
        )
    } else {
        (
            rng.random_range(0.11..0.18) * s,
            rng.random_range(0.80..1.22),
            0.045,
            0.19,
            [0.52, 0.35, 0.27],
            0.07,
            0.035,
        )
    };
    let ry = (rx * aspect).clamp(0.06 * s, 0.22 * s);
    let theta = rng.random_range(0.0..PI);
    let border = [
        (amp * rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI)),
        (amp * rng.random_range(-1.0..1.0) / 1.5, rng.random_range(0.0..2.0 * PI)),
        (amp * rng.random_range(-1.0..1.0) / 2.0, rng.random_range(0.0..2.0 * PI)),
        (amp * rng.random_range(-1.0..1.0) / 2.5, rng.random_range(0.0..2.0 * PI)),
    ];
    let color = [
        (base[0] + rng.random_range(-jitter..jitter)).clamp(0.02, 0.95),
        (base[1] + rng.random_range(-jitter..jitter)).clamp(0.02, 0.95),
        (base[2] + rng.random_range(-jitter..jitter)).clamp(0.02, 0.95),
    ];
    Lesion {
        cx,
        cy,
        rx,
        ry,
        cos_t: theta.cos(),
        sin_t: theta.sin(),
        border,
        edge_width,
        color,
        chroma_sigma,
        chromatic: label == 1,
    }
}

impl Lesion {
    fn boundary_multiplier(&self, phi: f64) -> f64 {
        let mut m = 1.0;
        for (k, &(a, p)) in self.border.iter().enumerate() {
            m += a * ((k as f64 + 2.0) * phi + p).sin();
        }
        m.clamp(0.55, 1.45)
    }

    /// Signed coverage in [0,1] of pixel center (x,y).
    fn alpha(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (dx * self.cos_t + dy * self.sin_t) / self.rx;
        let v = (-dx * self.sin_t + dy * self.cos_t) / self.ry;
        let rn = (u * u + v * v).sqrt();
        let phi = v.atan2(u);
        ((self.boundary_multiplier(phi) - rn) / self.edge_width).clamp(0.0, 1.0)
    }
}

/// Blend the lesion onto the field and return its tight pixel box.
fn render_lesion(rng: &mut Rng, field: &mut Field, lesion: &Lesion) -> BoundingBox {
    let side = field.side;
    let (mut x0, mut y0, mut x1, mut y1) = (side, side, 0usize, 0usize);
    for y in 0..side {
        for x in 0..side {
            let a = lesion.alpha(x as f64 + 0.5, y as f64 + 0.5);
            if a <= 0.0 {
                continue;
            }
            let noise: [f64; 3] = if lesion.chromatic {
                [
                    rng.random_range(-1.0..1.0) * lesion.chroma_sigma,
                    rng.random_range(-1.0..1.0) * lesion.chroma_sigma,
                    rng.random_range(-1.0..1.0) * lesion.chroma_sigma,
                ]
            } else {
                let shared = rng.random_range(-1.0..1.0) * lesion.chroma_sigma;
                [shared, shared, shared]
            };
            for c in 0..3 {
                let lesion_val = lesion.color[c] + noise[c];
                let p = field.px(c, y, x);
                *p = *p * (1.0 - a) + lesion_val * a;
            }
            if a > 0.5 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    debug_assert!(x0 <= x1 && y0 <= y1, "lesion rendered no solid pixel");
    BoundingBox {
        x_min: x0 as f64,
        y_min: y0 as f64,
        x_max: (x1 + 1) as f64,
        y_max: (y1 + 1) as f64,
    }
}

fn render_ruler(rng: &mut Rng, field: &mut Field) {
    let side = field.side;
    let s = side as f64;
    let edge: u8 = rng.random_range(0..4);
    let offset = (rng.random_range(0.05..0.12) * s) as usize;
    let start = (rng.random_range(0.05..0.15) * s) as usize;
    let n_ticks: usize = rng.random_range(8..14);
    let spacing = ((0.8 * s) as usize / n_ticks).max(2);
    let tick_len = ((rng.random_range(0.06..0.10) * s) as usize).max(3);
    let thickness = (side / 48).max(2);
    let shade = rng.random_range(0.04..0.14);
    for t in 0..n_ticks {
        let along = start + t * spacing;
        if along >= side {
            break;
        }
        for l in 0..tick_len {
            for w in 0..thickness {
                // (row, col) by edge: ticks grow inward, run along the edge
                let (y, x) = match edge {
                    0 => (offset + l, along + w),            // top
                    1 => (side - 1 - offset - l, along + w), // bottom
                    2 => (along + w, offset + l),            // left
                    _ => (along + w, side - 1 - offset - l), // right
                };
                if y < side && x < side {
                    for c in 0..3 {
                        *field.px(c, y, x) = shade;
                    }
                }
            }
        }
    }
}

fn render_ink_dots(rng: &mut Rng, field: &mut Field) {
    let side = field.side;
    let s = side as f64;
    let count: usize = rng.random_range(3..7);
    for _ in 0..count {
        let cx = rng.random_range(0.1..0.9) * s;
        let cy = rng.random_range(0.1..0.9) * s;
        let r = (rng.random_range(0.03..0.06) * s).max(2.0);
        let color = [
            0.08 + rng.random_range(-0.03..0.03),
            0.05 + rng.random_range(-0.03..0.03),
            0.18 + rng.random_range(-0.03..0.03),
        ];
        let y_lo = ((cy - r - 1.0).floor().max(0.0)) as usize;
        let y_hi = ((cy + r + 1.0).ceil().min(s)) as usize;
        let x_lo = ((cx - r - 1.0).floor().max(0.0)) as usize;
        let x_hi = ((cx + r + 1.0).ceil().min(s)) as usize;
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
                let a = (r - d + 0.5).clamp(0.0, 1.0);
                if a > 0.0 {
                    for c in 0..3 {
                        let p = field.px(c, y, x);
                        *p = *p * (1.0 - a) + color[c] * a;
                    }
                }
            }
        }
    }
}

fn render_corner_vignette(rng: &mut Rng, field: &mut Field) {
    let side = field.side;
    let s = side as f64;
    let corner: u8 = rng.random_range(0..4);
    let radius = rng.random_range(0.40..0.60) * s;
    let strength = rng.random_range(0.45..0.70);
    let (cx, cy) = match corner {
        0 => (0.0, 0.0),
        1 => (s, 0.0),
        2 => (0.0, s),
        _ => (s, s),
    };
    for y in 0..side {
        for x in 0..side {
            let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
            let m = 1.0 - strength * (1.0 - d / radius).max(0.0);
            if m < 1.0 {
                for c in 0..3 {
                    *field.px(c, y, x) *= m;
                }
            }
        }
    }
}

/// Render sample `index` to quantized RGB bytes plus its annotation.
fn generate_one(config: &GenConfig, index: usize, label: u8) -> (Vec<u8>, Annotation) {
    let mut rng = rng_from_seed(derive_seed(config.seed, &[1, index as u64]));
    let side = config.image_side;
    let mut field = Field::new(side);
    render_background(&mut rng, &mut field);
    let lesion = sample_lesion(&mut rng, side, label);
    let bbox = render_lesion(&mut rng, &mut field, &lesion);

    let has_artifact = if rng.random::<f64>() < config.artifact_correlation {
        label == 1
    } else {
        rng.random::<f64>() < 0.5
    };
    if has_artifact {
        let kind = config.artifact_kinds[rng.random_range(0..config.artifact_kinds.len())];
        match kind {
            ArtifactKind::Ruler => render_ruler(&mut rng, &mut field),
            ArtifactKind::InkDot => render_ink_dots(&mut rng, &mut field),
            ArtifactKind::CornerVignette => render_corner_vignette(&mut rng, &mut field),
        }
    }

    let mut rgb = vec![0u8; side * side * 3];
    for y in 0..side {
        for x in 0..side {
            for c in 0..3 {
                rgb[(y * side + x) * 3 + c] =
                    netpbm::quantize(field.data[(c * side + y) * side + x]);
            }
        }
    }
    let ann = Annotation { id: format!("s{index:05}"), label, bbox, has_artifact };
    (rgb, ann)
}

fn bytes_to_sample<T: Scalar>(rgb: &[u8], side: usize, ann: &Annotation) -> Sample<T> {
    let mut data = vec![T::zero(); 3 * side * side];
    for (i, px) in rgb.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * side * side + i] = T::from_f64(px[c] as f64 / 255.0);
        }
    }
    Sample {
        id: ann.id.clone(),
        image: Tensor::from_vec(vec![3, side, side], data).expect("quantized pixels are finite"),
        label: ann.label,
        bbox: ann.bbox,
        has_artifact: ann.has_artifact,
    }
}

/// Generate the whole dataset in memory.
pub fn generate_dataset<T: Scalar>(config: &GenConfig) -> Result<Vec<Sample<T>>> {
    config.validate()?;
    let labels = plan_labels(config);
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let (rgb, ann) = generate_one(config, i, label);
            bytes_to_sample(&rgb, config.image_side, &ann)
        })
        .collect())
}

/// Generate and write `images/`, `annotations.csv`, `gen_config.json`.
pub fn write_dataset(config: &GenConfig, dir: &Path) -> Result<()> {
    config.validate()?;
    let images = dir.join(IMAGES_DIR);
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let labels = plan_labels(config);
    let mut annotations = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        let (rgb, ann) = generate_one(config, i, label);
        netpbm::save_ppm_bytes(
            &rgb,
            config.image_side,
            config.image_side,
            &images.join(format!("{}.ppm", ann.id)),
        )?;
        annotations.push(ann);
    }
    write_annotations(&annotations, &dir.join(ANNOTATIONS_FILE))?;
    let json = serde_json::to_string_pretty(config)?;
    let path = dir.join(GEN_CONFIG_FILE);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

use super::write_annotations;

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, rho: f64, seed: u64) -> GenConfig {
        GenConfig {
            n_samples: n,
            image_side: 32,
            melanoma_fraction: 0.3,
            artifact_correlation: rho,
            seed,
            ..GenConfig::default()
        }
    }

    #[test]
    fn largest_remainder_counts() {
        assert_eq!(positive_count(100, 0.1), 10);
        assert_eq!(positive_count(10, 0.25), 3); // 2.5 rounds to the larger remainder tie -> pos
        assert_eq!(positive_count(3, 0.5), 2); // tie goes positive
        assert_eq!(positive_count(7, 0.3), 2); // 2.1 vs 4.9 -> leftover to neg
    }

    #[test]
    fn label_plan_matches_fraction_exactly() {
        let cfg = GenConfig { n_samples: 100, melanoma_fraction: 0.1, ..small(100, 0.5, 3) };
        let labels = plan_labels(&cfg);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 10);
    }

    #[test]
    fn full_correlation_copies_label() {
        let samples = generate_dataset::<f32>(&small(40, 1.0, 7)).unwrap();
        for s in &samples {
            assert_eq!(s.has_artifact, s.label == 1, "sample {}", s.id);
        }
    }

    #[test]
    fn zero_correlation_is_independent() {
        // chi-square with 1 dof at alpha=0.01: reject iff > 6.635
        let cfg = small(2000, 0.0, 11);
        let labels = plan_labels(&cfg);
        let mut table = [[0.0f64; 2]; 2];
        for (i, &label) in labels.iter().enumerate() {
            let (_, ann) = generate_one(&cfg, i, label);
            table[label as usize][ann.has_artifact as usize] += 1.0;
        }
        let n: f64 = 2000.0;
        let mut chi2 = 0.0;
        for l in 0..2 {
            for a in 0..2 {
                let row: f64 = table[l][0] + table[l][1];
                let col: f64 = table[0][a] + table[1][a];
                let expected = row * col / n;
                chi2 += (table[l][a] - expected).powi(2) / expected;
            }
        }
        assert!(chi2 < 6.635, "chi-square {chi2} rejects independence");
    }

    #[test]
    fn boxes_are_tight_and_inside() {
        let samples = generate_dataset::<f32>(&small(30, 0.5, 5)).unwrap();
        for s in &samples {
            s.validate().unwrap();
            let b = &s.bbox;
            assert!(b.width() >= 4.0 && b.height() >= 4.0, "{}: degenerate {b:?}", s.id);
            assert!(b.width() < 32.0 && b.height() < 32.0, "{}: box fills frame {b:?}", s.id);
        }
    }

    #[test]
    fn melanoma_lesions_are_darker_inside_the_box() {
        let samples = generate_dataset::<f64>(&small(60, 0.0, 13)).unwrap();
        let mean_inside = |s: &Sample<f64>| {
            let d = s.image.data();
            let (h, w) = (s.height(), s.width());
            let (mut acc, mut cnt) = (0.0, 0.0);
            for y in s.bbox.y_min as usize..s.bbox.y_max as usize {
                for x in s.bbox.x_min as usize..s.bbox.x_max as usize {
                    for c in 0..3 {
                        acc += d[(c * h + y) * w + x];
                    }
                    cnt += 3.0;
                }
            }
            acc / cnt
        };
        let mel: Vec<f64> =
            samples.iter().filter(|s| s.label == 1).map(mean_inside).collect();
        let ben: Vec<f64> =
            samples.iter().filter(|s| s.label == 0).map(mean_inside).collect();
        let m = mel.iter().sum::<f64>() / mel.len() as f64;
        let b = ben.iter().sum::<f64>() / ben.len() as f64;
        // Population gap, with slack for the box area the lesion does not
        // cover and for per-sample jitter.
        assert!(m + 0.05 < b, "melanoma {m} not darker than benign {b}");
    }

    #[test]
    fn written_dataset_is_reproducible_and_loads_back() {
        use sha2::{Digest, Sha256};
        let cfg = small(6, 0.9, 21);
        let hash_dir = |dir: &Path| {
            let mut entries: Vec<_> = walk(dir);
            entries.sort();
            let mut h = Sha256::new();
            for e in entries {
                h.update(e.strip_prefix(dir.to_str().unwrap()).unwrap().as_bytes());
                h.update(fs::read(&e).unwrap());
            }
            h.finalize()
        };
        fn walk(dir: &Path) -> Vec<String> {
            let mut out = Vec::new();
            for entry in fs::read_dir(dir).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    out.extend(walk(&p));
                } else {
                    out.push(p.to_str().unwrap().to_string());
                }
            }
            out
        }
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_dataset(&cfg, d1.path()).unwrap();
        write_dataset(&cfg, d2.path()).unwrap();
        assert_eq!(hash_dir(d1.path()), hash_dir(d2.path()));

        // disk roundtrip equals the in-memory dataset exactly
        let loaded: Vec<Sample<f32>> = super::super::load_dataset(d1.path()).unwrap();
        let direct: Vec<Sample<f32>> = generate_dataset(&cfg).unwrap();
        assert_eq!(loaded.len(), direct.len());
        for (a, b) in loaded.iter().zip(direct.iter()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.label, b.label);
            assert_eq!(a.has_artifact, b.has_artifact);
            assert_eq!(a.bbox, b.bbox);
            assert_eq!(a.image.to_vec(), b.image.to_vec());
        }
    }

    #[test]
    fn config_validation_rejects_bad_inputs() {
        assert!(small(0, 0.5, 1).validate().is_err());
        assert!(GenConfig { image_side: 16, ..small(10, 0.5, 1) }.validate().is_err());
        assert!(GenConfig { melanoma_fraction: 0.0, ..small(10, 0.5, 1) }.validate().is_err());
        // 0.05 * 10 = 0.5 positives -> error
        assert!(GenConfig { melanoma_fraction: 0.05, ..small(10, 0.5, 1) }.validate().is_err());
        assert!(GenConfig { artifact_correlation: 1.5, ..small(10, 0.5, 1) }.validate().is_err());
        assert!(GenConfig { artifact_kinds: vec![], ..small(10, 0.5, 1) }.validate().is_err());
    }
}
