//! Attention, classification, and composite losses.
//!
//! Each loss exists twice: a plain `f64` function for evaluation and
//! reporting, and a graph-connected version used during training. The two
//! compute the same quantity; only the graph version participates in
//! backpropagation.

use crate::error::{Error, Result};
use crate::geometry::{EllipseMask, NormalizedCam};
use crate::scalar::Scalar;
use crate::tensor::{GradGraph, Tensor};

/// Which denominator the overlap loss uses.
///
/// `Literal` divides by the plain sum of both maps. `Standard` (default)
/// subtracts the intersection so the ratio is a true soft-Jaccard index
/// and a perfect binary overlap reaches loss 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JaccardVariant {
    #[default]
    Standard,
    Literal,
}

impl std::str::FromStr for JaccardVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(JaccardVariant::Standard),
            "literal" => Ok(JaccardVariant::Literal),
            other => Err(Error::Config(format!(
                "unknown jaccard variant {other:?} (expected standard or literal)"
            ))),
        }
    }
}

impl std::fmt::Display for JaccardVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            JaccardVariant::Standard => "standard",
            JaccardVariant::Literal => "literal",
        })
    }
}

/// Shared knobs of the composite objective.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    /// Mixing weight of the attention term; 0.66 is the tuned default.
    /// Interior values are the normal operating regime, the endpoints are
    /// reachable for ablation runs (0 disables attention entirely).
    pub lambda: f64,
    pub variant: JaccardVariant,
    /// Additive smoothing in numerator and denominator of the overlap ratio.
    pub smoothing: f64,
    /// Positive-class weight of the classification loss.
    pub pos_weight: f64,
    /// Aggregate the overlap ratio per image and average, instead of one
    /// ratio over the pooled batch pixels.
    pub per_image_mean: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.66,
            variant: JaccardVariant::Standard,
            smoothing: 1.0,
            pos_weight: 1.0,
            per_image_mean: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0,1], got {}", self.lambda)));
        }
        if !(self.smoothing > 0.0) {
            return Err(Error::Config(format!("smoothing must be positive, got {}", self.smoothing)));
        }
        if !(self.pos_weight > 0.0) || !self.pos_weight.is_finite() {
            return Err(Error::Config(format!("pos_weight must be positive, got {}", self.pos_weight)));
        }
        Ok(())
    }
}

/// One batch's loss values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBundle {
    pub l_a: f64,
    pub l_c: f64,
    pub l_t: f64,
}

impl LossBundle {
    pub fn new(l_c: f64, l_a: f64, lambda: f64) -> Self {
        LossBundle { l_a, l_c, l_t: composite_loss(l_c, l_a, lambda) }
    }
}

/// `(1 - lambda) * l_c + lambda * l_a`. Callers guarantee `lambda` in [0,1].
pub fn composite_loss(l_c: f64, l_a: f64, lambda: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&lambda));
    (1.0 - lambda) * l_c + lambda * l_a
}

fn jaccard_ratio_to_loss(inter: f64, sum_cam: f64, sum_mask: f64, cfg: &LossConfig) -> f64 {
    let s = cfg.smoothing;
    let den = match cfg.variant {
        JaccardVariant::Literal => sum_cam + sum_mask + s,
        JaccardVariant::Standard => sum_cam + sum_mask - inter + s,
    };
    1.0 - (inter + s) / den
}

/// Overlap penalty between normalized CAMs and binary lesion masks.
/// Pixel sums pool over the whole batch unless `per_image_mean` is set.
pub fn attention_loss(
    cams: &[NormalizedCam],
    masks: &[EllipseMask],
    config: &LossConfig,
) -> Result<f64> {
    config.validate()?;
    if cams.len() != masks.len() {
        return Err(Error::dimension(
            "attention_loss",
            format!("{} cams vs {} masks", cams.len(), masks.len()),
        ));
    }
    if cams.is_empty() {
        return Err(Error::parameter("attention_loss", "empty batch"));
    }
    let mut per_image = Vec::with_capacity(cams.len());
    let (mut inter, mut sum_cam, mut sum_mask) = (0.0, 0.0, 0.0);
    for (i, (cam, mask)) in cams.iter().zip(masks.iter()).enumerate() {
        if cam.rows() != mask.rows() || cam.cols() != mask.cols() {
            return Err(Error::dimension(
                "attention_loss",
                format!(
                    "pair {i}: cam {}x{} vs mask {}x{}",
                    cam.rows(),
                    cam.cols(),
                    mask.rows(),
                    mask.cols()
                ),
            ));
        }
        let (mut pi, mut pc, mut pm) = (0.0, 0.0, 0.0);
        for (&c, &m) in cam.values().iter().zip(mask.values().iter()) {
            pc += c;
            if m == 1 {
                pi += c;
                pm += 1.0;
            }
        }
        per_image.push(jaccard_ratio_to_loss(pi, pc, pm, config));
        inter += pi;
        sum_cam += pc;
        sum_mask += pm;
    }
    if config.per_image_mean {
        Ok(per_image.iter().sum::<f64>() / per_image.len() as f64)
    } else {
        Ok(jaccard_ratio_to_loss(inter, sum_cam, sum_mask, config))
    }
}

/// Weighted binary cross entropy: mean over samples of
/// `-[pos_weight*y*ln(s) + (1-y)*ln(1-s)]`. Scores must lie strictly
/// inside (0,1); clamp upstream.
pub fn classification_loss(scores: &[f64], labels: &[u8], pos_weight: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dimension(
            "classification_loss",
            format!("{} scores vs {} labels", scores.len(), labels.len()),
        ));
    }
    if scores.is_empty() {
        return Err(Error::parameter("classification_loss", "empty batch"));
    }
    if !(pos_weight > 0.0) {
        return Err(Error::parameter("classification_loss", "pos_weight must be positive"));
    }
    let mut total = 0.0;
    for (i, (&s, &y)) in scores.iter().zip(labels.iter()).enumerate() {
        if y > 1 {
            return Err(Error::parameter(
                "classification_loss",
                format!("label {y} at index {i} is not binary"),
            ));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Numeric(format!(
                "classification_loss: score {s} at index {i} outside (0,1)"
            )));
        }
        total += if y == 1 { pos_weight * s.ln() } else { (1.0 - s).ln() };
    }
    Ok(-total / scores.len() as f64)
}

/// In-graph CAM normalization over `[N,H,W]`: negatives clamp to zero and
/// each image divides by its own maximum, which is detached (no gradient
/// flows through the divisor). Images whose maximum is not positive come
/// out all zero.
pub fn normalize_cam_graph<T: Scalar>(g: &GradGraph<T>, cams: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = cams.shape();
    if shape.len() != 3 {
        return Err(Error::dimension(
            "normalize_cam_graph",
            format!("expected [N,H,W], got {shape:?}"),
        ));
    }
    let rect = g.relu(cams)?;
    let n = shape[0];
    let plane = shape[1] * shape[2];
    let coeffs: Vec<T> = {
        let data = rect.data();
        (0..n)
            .map(|i| {
                let mut max = T::zero();
                for &v in &data[i * plane..(i + 1) * plane] {
                    if v > max {
                        max = v;
                    }
                }
                if max > T::zero() {
                    T::one() / max
                } else {
                    T::zero()
                }
            })
            .collect()
    };
    g.scale_per_image(&rect, &coeffs)
}

fn masks_to_tensor<T: Scalar>(masks: &[EllipseMask], h: usize, w: usize) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(masks.len() * h * w);
    for (i, m) in masks.iter().enumerate() {
        if m.rows() != h || m.cols() != w {
            return Err(Error::dimension(
                "attention_loss",
                format!("mask {i} is {}x{} but cams are {h}x{w}", m.rows(), m.cols()),
            ));
        }
        data.extend(m.values().iter().map(|&v| T::from_f64(v as f64)));
    }
    Tensor::from_vec(vec![masks.len(), h, w], data)
}

/// Graph-connected attention loss; same value as [`attention_loss`].
/// `cams` is `[N,H,W]` already normalized (see [`normalize_cam_graph`]).
pub fn attention_loss_graph<T: Scalar>(
    g: &GradGraph<T>,
    cams: &Tensor<T>,
    masks: &[EllipseMask],
    config: &LossConfig,
) -> Result<Tensor<T>> {
    config.validate()?;
    let shape = cams.shape().to_vec();
    if shape.len() != 3 {
        return Err(Error::dimension(
            "attention_loss",
            format!("expected cams [N,H,W], got {shape:?}"),
        ));
    }
    let (n, h, w) = (shape[0], shape[1], shape[2]);
    if masks.len() != n {
        return Err(Error::dimension(
            "attention_loss",
            format!("{n} cams vs {} masks", masks.len()),
        ));
    }
    if n == 0 {
        return Err(Error::parameter("attention_loss", "empty batch"));
    }
    let mask_t = masks_to_tensor::<T>(masks, h, w)?;
    let s = T::from_f64(config.smoothing);
    let prod = g.mul_const_elems(cams, &mask_t)?;

    if config.per_image_mean {
        let inter = g.sum_per_image(&prod)?;
        let sum_cam = g.sum_per_image(cams)?;
        let mask_sums: Vec<T> = masks
            .iter()
            .map(|m| T::from_f64(m.values().iter().map(|&v| v as usize).sum::<usize>() as f64) + s)
            .collect();
        let num = g.affine(&inter, T::one(), s)?;
        let base = g.add(&sum_cam, &Tensor::from_vec(vec![n], mask_sums)?)?;
        let den = match config.variant {
            JaccardVariant::Literal => base,
            JaccardVariant::Standard => g.sub(&base, &inter)?,
        };
        let ratio = g.div(&num, &den)?;
        let losses = g.affine(&ratio, -T::one(), T::one())?;
        let total = g.sum_all(&losses)?;
        g.affine(&total, T::one() / T::from_f64(n as f64), T::zero())
    } else {
        let inter = g.sum_all(&prod)?;
        let sum_cam = g.sum_all(cams)?;
        let sum_mask: usize = masks
            .iter()
            .map(|m| m.values().iter().map(|&v| v as usize).sum::<usize>())
            .sum();
        let sum_mask = T::from_f64(sum_mask as f64);
        let num = g.affine(&inter, T::one(), s)?;
        let base = g.affine(&sum_cam, T::one(), sum_mask + s)?;
        let den = match config.variant {
            JaccardVariant::Literal => base,
            JaccardVariant::Standard => g.sub(&base, &inter)?,
        };
        let ratio = g.div_scalars(&num, &den)?;
        g.affine(&ratio, -T::one(), T::one())
    }
}

/// Graph-connected weighted BCE over scores `[N]` or `[N,1]`. Scores are
/// clamped to `[1e-7, 1-1e-7]` before the logs.
pub fn classification_loss_graph<T: Scalar>(
    g: &GradGraph<T>,
    scores: &Tensor<T>,
    labels: &[u8],
    pos_weight: f64,
) -> Result<Tensor<T>> {
    let n = scores.len();
    if n != labels.len() {
        return Err(Error::dimension(
            "classification_loss",
            format!("{n} scores vs {} labels", labels.len()),
        ));
    }
    if n == 0 {
        return Err(Error::parameter("classification_loss", "empty batch"));
    }
    if !(pos_weight > 0.0) {
        return Err(Error::parameter("classification_loss", "pos_weight must be positive"));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::parameter("classification_loss", format!("label {bad} is not binary")));
    }
    let lo = T::from_f64(1e-7);
    let hi = T::one() - lo;
    let shape = scores.shape().to_vec();
    let clamped = g.clamp(scores, lo, hi)?;
    let ln_s = g.ln(&clamped)?;
    let one_minus = g.affine(&clamped, -T::one(), T::one())?;
    let ln_1s = g.ln(&one_minus)?;
    let w = T::from_f64(pos_weight);
    let pos_coeff: Vec<T> =
        labels.iter().map(|&y| if y == 1 { w } else { T::zero() }).collect();
    let neg_coeff: Vec<T> =
        labels.iter().map(|&y| if y == 1 { T::zero() } else { T::one() }).collect();
    let pos_term = g.mul_const_elems(&ln_s, &Tensor::from_vec(shape.clone(), pos_coeff)?)?;
    let neg_term = g.mul_const_elems(&ln_1s, &Tensor::from_vec(shape, neg_coeff)?)?;
    let sum = g.sum_all(&g.add(&pos_term, &neg_term)?)?;
    g.affine(&sum, -T::one() / T::from_f64(n as f64), T::zero())
}

/// Graph-connected composite `(1-lambda)*l_c + lambda*l_a`.
pub fn composite_loss_graph<T: Scalar>(
    g: &GradGraph<T>,
    l_c: &Tensor<T>,
    l_a: &Tensor<T>,
    lambda: f64,
) -> Result<Tensor<T>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda must lie in [0,1], got {lambda}")));
    }
    let lam = T::from_f64(lambda);
    let c_part = g.affine(l_c, T::one() - lam, T::zero())?;
    let a_part = g.affine(l_a, lam, T::zero())?;
    g.add(&c_part, &a_part)
}
