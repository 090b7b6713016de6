//! Binary netpbm IO: P6 (PPM, RGB) and P5 (PGM, gray), maxval 255.
//!
//! Loading maps byte b to b/255; saving maps v to round(clamp(v,0,1)*255)
//! with halves away from zero, so save -> load -> save is byte-identical.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn err(&self, detail: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_path_buf(), offset: self.pos, detail: detail.into() }
    }

    /// Skips whitespace and `#` comments (comments run to end of line).
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn ascii_unsigned(&mut self, what: &str) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err(format!("expected ASCII decimal {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("digits are UTF-8")
            .parse::<usize>()
            .map_err(|e| self.err(format!("bad {what}: {e}")))
    }
}

fn parse_header<'a>(bytes: &'a [u8], path: &'a Path, magic: &str) -> Result<(usize, usize, usize)> {
    let mut cur = Cursor { bytes, pos: 0, path };
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        return Err(cur.err(format!("bad magic, expected {magic}")));
    }
    cur.pos = 2;
    let w = cur.ascii_unsigned("width")?;
    let h = cur.ascii_unsigned("height")?;
    let maxval = cur.ascii_unsigned("maxval")?;
    if maxval != 255 {
        return Err(cur.err(format!("unsupported maxval {maxval}, expected 255")));
    }
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(cur.err("expected single whitespace after maxval"));
    }
    cur.pos += 1;
    if w == 0 || h == 0 {
        return Err(cur.err("zero image dimension"));
    }
    Ok((w, h, cur.pos))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn payload<'a>(bytes: &'a [u8], path: &Path, start: usize, expected: usize) -> Result<&'a [u8]> {
    let got = bytes.len() - start;
    if got < expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: bytes.len(),
            detail: format!("payload truncated: expected {expected} bytes, found {got}"),
        });
    }
    if got > expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: start + expected,
            detail: format!("{} trailing bytes after payload", got - expected),
        });
    }
    Ok(&bytes[start..start + expected])
}

/// Parse in-memory P6 bytes into interleaved RGB plus dimensions.
pub fn parse_ppm_bytes(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let (w, h, start) = parse_header(bytes, path, "P6")?;
    let raw = payload(bytes, path, start, w * h * 3)?;
    Ok((w, h, raw.to_vec()))
}

/// Load a P6 PPM as a planar `[3,H,W]` tensor with values in [0,1].
pub fn load_ppm<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let bytes = read_file(path)?;
    let (w, h, raw) = parse_ppm_bytes(&bytes, path)?;
    let mut data = vec![T::zero(); 3 * h * w];
    for (i, px) in raw.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = T::from_f64(px[c] as f64 / 255.0);
        }
    }
    Tensor::from_vec(vec![3, h, w], data)
}

/// Load a P5 PGM as row-major bytes plus dimensions.
pub fn load_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = read_file(path)?;
    let (w, h, start) = parse_header(&bytes, path, "P5")?;
    let raw = payload(&bytes, path, start, w * h)?;
    Ok((w, h, raw.to_vec()))
}

/// Quantize a unit-interval value to a byte, halves away from zero.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write interleaved RGB bytes as P6.
pub fn save_ppm_bytes(rgb: &[u8], w: usize, h: usize, path: &Path) -> Result<()> {
    if rgb.len() != w * h * 3 {
        return Err(Error::dimension(
            "save_ppm",
            format!("{} bytes do not fill {w}x{h} RGB", rgb.len()),
        ));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write gray bytes as P5.
pub fn save_pgm_bytes(gray: &[u8], w: usize, h: usize, path: &Path) -> Result<()> {
    if gray.len() != w * h {
        return Err(Error::dimension(
            "save_pgm",
            format!("{} bytes do not fill {w}x{h}", gray.len()),
        ));
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Quantize a planar `[3,H,W]` tensor and write it as P6.
pub fn save_ppm<T: Scalar>(img: &Tensor<T>, path: &Path) -> Result<()> {
    let s = img.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::dimension(
            "save_ppm",
            format!("expected [3,H,W], got {s:?}"),
        ));
    }
    let (h, w) = (s[1], s[2]);
    let d = img.data();
    let mut rgb = vec![0u8; w * h * 3];
    for i in 0..h * w {
        for c in 0..3 {
            rgb[i * 3 + c] = quantize(d[c * h * w + i].to_f64());
        }
    }
    save_ppm_bytes(&rgb, w, h, path)
}
