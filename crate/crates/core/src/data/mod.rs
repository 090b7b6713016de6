//! Dataset plumbing: synthetic generation, file IO, preprocessing,
//! augmentation, stratified folds.
//!
//! On-disk dataset layout:
//! ```text
//! <dir>/images/<id>.ppm      binary P6, maxval 255
//! <dir>/annotations.csv      id,label,x_min,y_min,x_max,y_max,has_artifact
//! <dir>/gen_config.json      generator provenance
//! ```

pub mod augment;
pub mod folds;
pub mod netpbm;
pub mod preprocess;
pub mod synth;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One labeled image: the dataset unit.
#[derive(Debug, Clone)]
pub struct Sample<T: Scalar> {
    pub id: String,
    /// Planar `[3,H,W]`, values in [0,1].
    pub image: Tensor<T>,
    /// 0 benign, 1 melanoma.
    pub label: u8,
    /// Lesion ground truth in source-image pixel coordinates.
    pub bbox: BoundingBox,
    pub has_artifact: bool,
}

impl<T: Scalar> Sample<T> {
    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        let (h, w) = (self.height() as f64, self.width() as f64);
        if self.bbox.x_min < 0.0 || self.bbox.y_min < 0.0 || self.bbox.x_max > w || self.bbox.y_max > h
        {
            return Err(Error::Geometry(format!(
                "sample {}: box {:?} outside {w}x{h} image",
                self.id, self.bbox
            )));
        }
        if self.label > 1 {
            return Err(Error::parameter("sample", format!("label {} is not binary", self.label)));
        }
        Ok(())
    }
}

/// One annotations.csv row.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub id: String,
    pub label: u8,
    pub bbox: BoundingBox,
    pub has_artifact: bool,
}

pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const GEN_CONFIG_FILE: &str = "gen_config.json";
pub const IMAGES_DIR: &str = "images";

/// Serialize annotations in the canonical column order. Floats print in
/// Rust's shortest-roundtrip form so rewriting is byte-stable.
pub fn write_annotations(records: &[Annotation], path: &Path) -> Result<()> {
    let mut out = String::from("id,label,x_min,y_min,x_max,y_max,has_artifact\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.id, r.label, r.bbox.x_min, r.bbox.y_min, r.bbox.x_max, r.bbox.y_max,
            if r.has_artifact { 1 } else { 0 }
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn parse_field<V: std::str::FromStr>(
    field: &str,
    what: &str,
    path: &Path,
    offset: usize,
) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    field.trim().parse().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        offset,
        detail: format!("bad {what} {field:?}: {e}"),
    })
}

/// Read annotations.csv. The trailing has_artifact column is optional so
/// hand-written 6-column files for real data also load (artifact defaults
/// to false there).
pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut offset = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line_start = offset;
        offset += line.len() + 1;
        if lineno == 0 {
            if !line.starts_with("id,label,x_min") {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    offset: 0,
                    detail: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 && fields.len() != 7 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                offset: line_start,
                detail: format!("line {}: expected 6 or 7 fields, got {}", lineno + 1, fields.len()),
            });
        }
        let label: u8 = parse_field(fields[1], "label", path, line_start)?;
        if label > 1 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                offset: line_start,
                detail: format!("line {}: label {label} is not binary", lineno + 1),
            });
        }
        let coords: Vec<f64> = fields[2..6]
            .iter()
            .map(|f| parse_field(f, "coordinate", path, line_start))
            .collect::<Result<_>>()?;
        let bbox = BoundingBox::new(coords[0], coords[1], coords[2], coords[3])?;
        let has_artifact = if fields.len() == 7 {
            match fields[6].trim() {
                "0" | "false" => false,
                "1" | "true" => true,
                other => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        offset: line_start,
                        detail: format!("line {}: bad has_artifact {other:?}", lineno + 1),
                    })
                }
            }
        } else {
            false
        };
        records.push(Annotation { id: fields[0].trim().to_string(), label, bbox, has_artifact });
    }
    Ok(records)
}

/// Load a dataset directory into memory, annotation order preserved.
pub fn load_dataset<T: Scalar>(dir: &Path) -> Result<Vec<Sample<T>>> {
    let records = read_annotations(&dir.join(ANNOTATIONS_FILE))?;
    if records.is_empty() {
        return Err(Error::Contract(format!("dataset {} has no annotations", dir.display())));
    }
    let images = dir.join(IMAGES_DIR);
    let mut samples = Vec::with_capacity(records.len());
    for r in records {
        let image = netpbm::load_ppm::<T>(&images.join(format!("{}.ppm", r.id)))?;
        let sample = Sample {
            id: r.id,
            image,
            label: r.label,
            bbox: r.bbox,
            has_artifact: r.has_artifact,
        };
        sample.validate()?;
        samples.push(sample);
    }
    Ok(samples)
}
