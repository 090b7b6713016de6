//! Floating-point element trait for the tensor engine.
//!
//! Tests and oracles run in `f64`; training may run in `f32` behind the
//! `precision` config switch. Everything generic over [`Scalar`] is
//! monomorphized for both.

use std::fmt::{Debug, Display};

/// Element type of tensors: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float + Debug + Display + Default + Send + Sync + 'static
{
    /// 32 or 64; recorded in checkpoints so payloads round-trip bit-exactly.
    const PRECISION: u8;
    /// Payload width in bytes of one element.
    const BYTE_WIDTH: usize;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// Append the little-endian IEEE-754 encoding of `self`.
    fn write_le(self, out: &mut Vec<u8>);
    /// Decode one element from little-endian bytes (`bytes.len() == BYTE_WIDTH`).
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const PRECISION: u8 = 32;
    const BYTE_WIDTH: usize = 4;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes per f32"))
    }
}

impl Scalar for f64 {
    const PRECISION: u8 = 64;
    const BYTE_WIDTH: usize = 8;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes per f64"))
    }
}
