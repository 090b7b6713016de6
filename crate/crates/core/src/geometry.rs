//! Bounding boxes, elliptical lesion masks, CAM normalization.
//!
//! Coordinates are real-valued pixels in the source image frame with the
//! origin at the top-left corner; a WxH image spans [0,W]x[0,H]. Raster
//! ops use the pixel-center convention: cell (r,c) of an RxC grid sits at
//! x = (c+0.5)*W/C, y = (r+0.5)*H/R.

use crate::error::{Error, Result};

/// Axis-aligned lesion bounding box. `x_min < x_max`, `y_min < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BoundingBox { x_min, y_min, x_max, y_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.x_min, self.y_min, self.x_max, self.y_max];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry(format!("box has non-finite coordinate: {self:?}")));
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(Error::Geometry(format!("degenerate box: {self:?}")));
        }
        Ok(())
    }

    /// Valid and fully inside a frame of the given size.
    pub fn validate_in_frame(&self, frame_w: f64, frame_h: f64) -> Result<()> {
        self.validate()?;
        if self.x_min < 0.0 || self.y_min < 0.0 || self.x_max > frame_w || self.y_max > frame_h {
            return Err(Error::Geometry(format!(
                "box {self:?} outside {frame_w}x{frame_h} frame"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    /// Intersection over union with another box.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let iy = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    fn intersects_frame(&self, image_w: f64, image_h: f64) -> bool {
        self.x_max > 0.0 && self.y_max > 0.0 && self.x_min < image_w && self.y_min < image_h
    }
}

/// Binary lesion mask rasterized from an extended box.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipseMask {
    values: Vec<u8>,
    rows: usize,
    cols: usize,
    source_box: BoundingBox,
}

impl EllipseMask {
    /// Wrap precomputed 0/1 values (e.g. a hand-built mask in tests).
    pub fn from_binary(
        rows: usize,
        cols: usize,
        values: Vec<u8>,
        source_box: BoundingBox,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::Geometry(format!(
                "{} values do not fill a {rows}x{cols} mask",
                values.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::Geometry("mask values must be 0 or 1".into()));
        }
        Ok(EllipseMask { values, rows, cols, source_box })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn source_box(&self) -> &BoundingBox {
        &self.source_box
    }

    /// Row-major 0/1 values.
    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.values[r * self.cols + c]
    }

    /// Share of pixels set to 1.
    pub fn fraction_ones(&self) -> f64 {
        let ones: usize = self.values.iter().map(|&v| v as usize).sum();
        ones as f64 / self.values.len() as f64
    }
}

/// CAM rescaled into [0,1]; all zeros when nothing activates.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCam {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl NormalizedCam {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }
}

/// Grow `b` to 1.2x its area about its center (each side scaled by
/// sqrt(1.2)), then clip to the image frame.
pub fn extend_bbox(b: &BoundingBox, image_w: f64, image_h: f64) -> Result<BoundingBox> {
    b.validate()?;
    let factor = 1.2f64.sqrt();
    let (cx, cy) = b.center();
    let hw = b.width() / 2.0 * factor;
    let hh = b.height() / 2.0 * factor;
    let out = BoundingBox {
        x_min: (cx - hw).max(0.0),
        y_min: (cy - hh).max(0.0),
        x_max: (cx + hw).min(image_w),
        y_max: (cy + hh).min(image_h),
    };
    out.validate()?;
    Ok(out)
}

/// Rasterize the ellipse inscribed in `b` onto an RxC grid spanning the
/// whole image frame. A cell is 1 iff its center lies inside the ellipse.
/// If the ellipse is so small that it covers no cell center but the box
/// still intersects the frame, the cell nearest the ellipse center is set.
pub fn rasterize_ellipse(
    b: &BoundingBox,
    rows: usize,
    cols: usize,
    image_w: f64,
    image_h: f64,
) -> Result<EllipseMask> {
    b.validate()?;
    if rows == 0 || cols == 0 {
        return Err(Error::Geometry("raster resolution must be at least 1x1".into()));
    }
    let (cx, cy) = b.center();
    let a = b.width() / 2.0;
    let bb = b.height() / 2.0;
    let mut values = vec![0u8; rows * cols];
    let mut any = false;
    for r in 0..rows {
        let y = (r as f64 + 0.5) * image_h / rows as f64;
        let dy = (y - cy) / bb;
        let dy2 = dy * dy;
        if dy2 > 1.0 {
            continue;
        }
        let row = &mut values[r * cols..(r + 1) * cols];
        for (c, cell) in row.iter_mut().enumerate() {
            let x = (c as f64 + 0.5) * image_w / cols as f64;
            let dx = (x - cx) / a;
            if dx * dx + dy2 <= 1.0 {
                *cell = 1;
                any = true;
            }
        }
    }
    if !any && b.intersects_frame(image_w, image_h) {
        let r = ((cy.clamp(0.0, image_h) / image_h * rows as f64 - 0.5).round() as isize)
            .clamp(0, rows as isize - 1) as usize;
        let c = ((cx.clamp(0.0, image_w) / image_w * cols as f64 - 0.5).round() as isize)
            .clamp(0, cols as isize - 1) as usize;
        values[r * cols + c] = 1;
    }
    Ok(EllipseMask { values, rows, cols, source_box: *b })
}

/// Nearest-neighbor resample with pixel-center alignment; stays binary.
pub fn resize_mask(mask: &EllipseMask, rows: usize, cols: usize) -> Result<EllipseMask> {
    if rows == 0 || cols == 0 {
        return Err(Error::Geometry("mask target resolution must be at least 1x1".into()));
    }
    if rows == mask.rows && cols == mask.cols {
        return Ok(mask.clone());
    }
    let mut values = vec![0u8; rows * cols];
    for r in 0..rows {
        let sr = (((r as f64 + 0.5) * mask.rows as f64 / rows as f64) as usize).min(mask.rows - 1);
        for c in 0..cols {
            let sc =
                (((c as f64 + 0.5) * mask.cols as f64 / cols as f64) as usize).min(mask.cols - 1);
            values[r * cols + c] = mask.values[sr * mask.cols + sc];
        }
    }
    Ok(EllipseMask { values, rows, cols, source_box: mask.source_box })
}

/// Clamp negatives to zero, then divide by the maximum. A map whose
/// maximum is not positive normalizes to all zeros.
pub fn normalize_cam(values: &[f64], rows: usize, cols: usize) -> Result<NormalizedCam> {
    if values.len() != rows * cols {
        return Err(Error::dimension(
            "normalize_cam",
            format!("{} values do not fill {rows}x{cols}", values.len()),
        ));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("normalize_cam: NaN in CAM".into()));
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let out = if max <= 0.0 {
        vec![0.0; values.len()]
    } else {
        values.iter().map(|&v| if v < 0.0 { 0.0 } else { v / max }).collect()
    };
    Ok(NormalizedCam { values: out, rows, cols })
}
