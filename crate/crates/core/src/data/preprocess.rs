//! Deterministic preprocessing: pad to square, bilinear resize to the
//! network input side, per-channel normalization. Boxes ride along through
//! the same coordinate changes.

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHANNEL_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const CHANNEL_STD: [f64; 3] = [0.229, 0.224, 0.225];

fn chw(image: &Tensor<impl Scalar>, op: &'static str) -> Result<(usize, usize, usize)> {
    let shape = image.shape();
    if shape.len() != 3 {
        return Err(Error::dimension(op, format!("expected [C,H,W] image, got {shape:?}")));
    }
    Ok((shape[0], shape[1], shape[2]))
}

/// Zero-pad to side = max(H, W); centered, extra row/column at bottom/right.
/// Returns the padded image and the (left, top) offsets applied.
pub fn pad_to_square<T: Scalar>(image: &Tensor<T>) -> Result<(Tensor<T>, usize, usize)> {
    let (c, h, w) = chw(image, "pad_to_square")?;
    let side = h.max(w);
    let top = (side - h) / 2;
    let left = (side - w) / 2;
    if side == h && side == w {
        return Ok((image.clone(), 0, 0));
    }
    let src = image.data();
    let mut out = vec![T::zero(); c * side * side];
    for ch in 0..c {
        for y in 0..h {
            let src_row = (ch * h + y) * w;
            let dst_row = (ch * side + y + top) * side + left;
            out[dst_row..dst_row + w].copy_from_slice(&src[src_row..src_row + w]);
        }
    }
    Ok((Tensor::from_vec(vec![c, side, side], out)?, left, top))
}

/// Bilinear resample with half-pixel center alignment. Exact identity when
/// the output size equals the input size.
pub fn resize_bilinear<T: Scalar>(
    image: &Tensor<T>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<T>> {
    let (c, h, w) = chw(image, "resize_bilinear")?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::parameter("resize_bilinear", "output size must be positive"));
    }
    let src = image.data();
    let mut out = vec![T::zero(); c * out_h * out_w];
    let sy_scale = h as f64 / out_h as f64;
    let sx_scale = w as f64 / out_w as f64;
    for y in 0..out_h {
        let sy = ((y as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for x in 0..out_w {
            let sx = ((x as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            for ch in 0..c {
                let at = |yy: usize, xx: usize| src[(ch * h + yy) * w + xx].to_f64();
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out[(ch * out_h + y) * out_w + x] = T::from_f64(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Tensor::from_vec(vec![c, out_h, out_w], out)
}

/// (x - mean_c) / std_c per channel.
pub fn normalize_channels<T: Scalar>(image: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = chw(image, "normalize_channels")?;
    if c != 3 {
        return Err(Error::dimension("normalize_channels", format!("expected 3 channels, got {c}")));
    }
    let src = image.data();
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..3 {
        let mean = T::from_f64(CHANNEL_MEAN[ch]);
        let inv_std = T::from_f64(1.0 / CHANNEL_STD[ch]);
        for &v in &src[ch * h * w..(ch + 1) * h * w] {
            out.push((v - mean) * inv_std);
        }
    }
    Tensor::from_vec(vec![3, h, w], out)
}

/// Map a source-image box through padding and resize to target coordinates.
pub fn map_box(
    bbox: &BoundingBox,
    pad_left: usize,
    pad_top: usize,
    padded_side: usize,
    target_side: usize,
) -> Result<BoundingBox> {
    let scale = target_side as f64 / padded_side as f64;
    let out = BoundingBox {
        x_min: (bbox.x_min + pad_left as f64) * scale,
        y_min: (bbox.y_min + pad_top as f64) * scale,
        x_max: (bbox.x_max + pad_left as f64) * scale,
        y_max: (bbox.y_max + pad_top as f64) * scale,
    };
    out.validate_in_frame(target_side as f64, target_side as f64)?;
    Ok(out)
}

/// Full pipeline: pad, resize to `target_side`, normalize; box follows.
pub fn preprocess<T: Scalar>(
    image: &Tensor<T>,
    bbox: &BoundingBox,
    target_side: usize,
) -> Result<(Tensor<T>, BoundingBox)> {
    let (padded, left, top) = pad_to_square(image)?;
    let side = padded.shape()[1];
    let resized = if side == target_side {
        padded
    } else {
        resize_bilinear(&padded, target_side, target_side)?
    };
    let mapped = map_box(bbox, left, top, side, target_side)?;
    Ok((normalize_channels(&resized)?, mapped))
}
