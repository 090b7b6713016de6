//! CAM heatmap export: grayscale PGM maps and RGB overlay PPMs.

use crate::data::netpbm::{quantize, save_pgm_bytes, save_ppm_bytes};
use crate::data::preprocess::{pad_to_square, preprocess, resize_bilinear};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::geometry::{extend_bbox, normalize_cam, BoundingBox, NormalizedCam};
use crate::network::CamNet;
use crate::scalar::Scalar;
use crate::tensor::{GradGraph, Tensor};
use std::path::Path;

/// Bilinear upsample with half-pixel centers, renormalized so the peak
/// is exactly 1 again. Interpolated samples can only fall short of the
/// source peak, and the export contract wants a 255 max byte whenever
/// the CAM carries any mass.
pub fn upsample_cam(cam: &NormalizedCam, rows: usize, cols: usize) -> Result<NormalizedCam> {
    if rows == 0 || cols == 0 {
        return Err(Error::parameter("upsample_cam", "target grid must be non-empty"));
    }
    let (sr, sc) = (cam.rows(), cam.cols());
    let src = cam.values();
    let (ry, rx) = (sr as f64 / rows as f64, sc as f64 / cols as f64);
    let mut out = vec![0.0; rows * cols];
    for y in 0..rows {
        let sy = ((y as f64 + 0.5) * ry - 0.5).clamp(0.0, (sr - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sr - 1);
        let fy = sy - y0 as f64;
        for x in 0..cols {
            let sx = ((x as f64 + 0.5) * rx - 0.5).clamp(0.0, (sc - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(sc - 1);
            let fx = sx - x0 as f64;
            let top = src[y0 * sc + x0] * (1.0 - fx) + src[y0 * sc + x1] * fx;
            let bot = src[y1 * sc + x0] * (1.0 - fx) + src[y1 * sc + x1] * fx;
            out[y * cols + x] = top * (1.0 - fy) + bot * fy;
        }
    }
    normalize_cam(&out, rows, cols)
}

/// Row-major quantization to bytes at the map's native resolution.
pub fn cam_bytes(cam: &NormalizedCam) -> Vec<u8> {
    cam.values().iter().map(|&v| quantize(v)).collect()
}

pub fn write_heatmap_pgm(heat: &NormalizedCam, path: &Path) -> Result<()> {
    save_pgm_bytes(&cam_bytes(heat), heat.cols(), heat.rows(), path)
}

/// Everything needed to draw one sample's CAM visualization.
pub struct CamVisual<T: Scalar> {
    /// CAM upsampled to input resolution, peak renormalized to 1.
    pub heat: NormalizedCam,
    /// The image at input resolution without channel normalization,
    /// `[3,S,S]` in [0,1]; the overlay base.
    pub display: Tensor<T>,
    /// Extended lesion box in input coordinates.
    pub bbox: BoundingBox,
}

/// Deterministic single-sample inference producing the heatmap, the
/// display image and the extended box, all in the network's input frame.
pub fn render_sample<T: Scalar>(net: &CamNet<T>, sample: &Sample<T>) -> Result<CamVisual<T>> {
    let side = net.input_side();
    let (normalized, mapped) = preprocess(&sample.image, &sample.bbox, side)?;
    let batch = Tensor::from_vec(vec![1, 3, side, side], normalized.to_vec())?;
    let g = GradGraph::inference();
    let (_scores, features) = net.forward(&g, &batch, false, 0)?;
    let cams = net.compute_cam(&features)?;
    let native = normalize_cam(cams[0].values(), cams[0].rows(), cams[0].cols())?;
    let heat = upsample_cam(&native, side, side)?;
    let (padded, _left, _top) = pad_to_square(&sample.image)?;
    let display = resize_bilinear(&padded, side, side)?;
    let bbox = extend_bbox(&mapped, side as f64, side as f64)?;
    Ok(CamVisual { heat, display, bbox })
}

/// 50% blend of the display image with the CAM riding the red channel,
/// plus the extended box as a 1-pixel green outline.
pub fn write_overlay_ppm<T: Scalar>(visual: &CamVisual<T>, path: &Path) -> Result<()> {
    let (h, w) = (visual.heat.rows(), visual.heat.cols());
    let shape = visual.display.shape();
    if shape != [3, h, w] {
        return Err(Error::dimension(
            "write_overlay_ppm",
            format!("display {shape:?} does not match heatmap {h}x{w}"),
        ));
    }
    let data = visual.display.data();
    let heat = visual.heat.values();
    let plane = h * w;
    let mut rgb = vec![0u8; plane * 3];
    for i in 0..plane {
        let r = 0.5 * data[i].to_f64() + 0.5 * heat[i];
        let g = 0.5 * data[plane + i].to_f64();
        let b = 0.5 * data[2 * plane + i].to_f64();
        rgb[3 * i] = quantize(r);
        rgb[3 * i + 1] = quantize(g);
        rgb[3 * i + 2] = quantize(b);
    }
    draw_outline(&mut rgb, w, h, &visual.bbox);
    save_ppm_bytes(&rgb, w, h, path)
}

/// Perimeter of the pixel rectangle covered by the box, clipped to the
/// frame.
fn draw_outline(rgb: &mut [u8], w: usize, h: usize, b: &BoundingBox) {
    let x0 = (b.x_min.floor().max(0.0) as usize).min(w - 1);
    let y0 = (b.y_min.floor().max(0.0) as usize).min(h - 1);
    let x1 = ((b.x_max.ceil().max(1.0) as usize) - 1).min(w - 1);
    let y1 = ((b.y_max.ceil().max(1.0) as usize) - 1).min(h - 1);
    let mut set = |x: usize, y: usize| {
        let i = 3 * (y * w + x);
        rgb[i] = 0;
        rgb[i + 1] = 255;
        rgb[i + 2] = 0;
    };
    for x in x0..=x1 {
        set(x, y0);
        set(x, y1);
    }
    for y in y0..=y1 {
        set(x0, y);
        set(x1, y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::netpbm::{load_pgm, parse_ppm_bytes};
    use crate::network::NetworkConfig;

    #[test]
    fn quantization_oracle_at_native_resolution() {
        let cam = normalize_cam(&[0.0, 1.0, 0.5, 0.25], 2, 2).unwrap();
        assert_eq!(cam_bytes(&cam), vec![0, 255, 128, 64]);
    }

    #[test]
    fn all_zero_cam_exports_all_zero_bytes() {
        let cam = normalize_cam(&[0.0; 4], 2, 2).unwrap();
        let up = upsample_cam(&cam, 8, 8).unwrap();
        assert!(cam_bytes(&up).iter().all(|&b| b == 0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.pgm");
        write_heatmap_pgm(&up, &path).unwrap();
        let (w, h, bytes) = load_pgm(&path).unwrap();
        assert_eq!((w, h), (8, 8));
        assert!(bytes.iter().all(|&b| b == 0));
    }

    #[test]
    fn nonzero_cam_always_peaks_at_255() {
        // The interior peak falls between upsampled sample points, so
        // without renormalization the max byte would land below 255.
        let cam = normalize_cam(&[0.1, 0.2, 0.1, 0.2, 1.0, 0.2, 0.1, 0.2, 0.1], 3, 3).unwrap();
        let up = upsample_cam(&cam, 64, 64).unwrap();
        assert_eq!(*cam_bytes(&up).iter().max().unwrap(), 255);
    }

    #[test]
    fn upsample_keeps_constant_maps_constant() {
        let cam = normalize_cam(&[1.0; 4], 2, 2).unwrap();
        let up = upsample_cam(&cam, 10, 10).unwrap();
        assert!(up.values().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn same_size_upsample_is_identity() {
        let values = [0.0, 0.25, 0.75, 1.0, 0.5, 0.125];
        let cam = normalize_cam(&values, 2, 3).unwrap();
        let up = upsample_cam(&cam, 2, 3).unwrap();
        assert_eq!(up.values(), cam.values());
    }

    #[test]
    fn overlay_blends_at_half_opacity_and_outlines_the_box() {
        let display = Tensor::<f64>::from_vec(vec![3, 8, 8], vec![0.2; 3 * 64]).unwrap();
        let heat = normalize_cam(&[0.0; 64], 8, 8).unwrap();
        let bbox = BoundingBox::new(2.0, 2.0, 6.0, 6.0).unwrap();
        let visual = CamVisual { heat, display, bbox };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("overlay.ppm");
        write_overlay_ppm(&visual, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let (w, h, rgb) = parse_ppm_bytes(&bytes, &path).unwrap();
        assert_eq!((w, h), (8, 8));
        let px = |x: usize, y: usize| {
            let i = 3 * (y * 8 + x);
            (rgb[i], rgb[i + 1], rgb[i + 2])
        };
        // 0.5 * 0.2 = 0.1 -> 25.5 -> rounds away from zero to 26
        assert_eq!(px(0, 0), (26, 26, 26));
        assert_eq!(px(4, 4), (26, 26, 26)); // interior, not on the outline
        assert_eq!(px(2, 2), (0, 255, 0)); // top-left corner of the box
        assert_eq!(px(5, 5), (0, 255, 0)); // bottom-right corner pixel
        assert_eq!(px(3, 5), (0, 255, 0)); // bottom edge
        assert_eq!(px(3, 3), (26, 26, 26)); // inside the outline ring
    }

    #[test]
    fn render_sample_produces_input_resolution_artifacts() {
        let network = NetworkConfig { input_side: 16, conv_channels: vec![4, 6], dropout_p: 0.0 };
        let net = CamNet::<f64>::build(&network, 8).unwrap();
        let n = 3 * 16 * 16;
        let image = Tensor::from_vec(
            vec![3, 16, 16],
            (0..n).map(|i| (i % 53) as f64 / 52.0).collect(),
        )
        .unwrap();
        let sample = Sample {
            id: "probe".into(),
            image,
            label: 1,
            bbox: BoundingBox::new(4.0, 4.0, 12.0, 12.0).unwrap(),
            has_artifact: false,
        };
        let visual = render_sample(&net, &sample).unwrap();
        assert_eq!((visual.heat.rows(), visual.heat.cols()), (16, 16));
        assert_eq!(visual.display.shape(), &[3, 16, 16]);
        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("cam.pgm");
        let ppm = dir.path().join("cam.ppm");
        write_heatmap_pgm(&visual.heat, &pgm).unwrap();
        write_overlay_ppm(&visual, &ppm).unwrap();
        let (w, h, bytes) = load_pgm(&pgm).unwrap();
        assert_eq!((w, h), (16, 16));
        // Renormalized upsampling pins the peak at 255 for any live CAM.
        if bytes.iter().any(|&b| b > 0) {
            assert_eq!(*bytes.iter().max().unwrap(), 255);
        }
    }
}
