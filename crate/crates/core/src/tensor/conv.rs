//! 2-D cross-correlation with stride and zero padding.

use super::matmul::{matmul_abt_acc, matmul_acc, matmul_atb_acc};
use super::{with_out_grad, GradGraph, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Geometry of one conv2d call, shared by forward and backward.
#[derive(Clone, Copy)]
struct ConvDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    ho: usize,
    wo: usize,
}

impl ConvDims {
    fn cols_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_sites(&self) -> usize {
        self.ho * self.wo
    }
}

/// Unfold one image `[C,H,W]` into `[C*kh*kw, Ho*Wo]` patch columns.
fn im2col<T: Scalar>(img: &[T], d: &ConvDims, cols: &mut [T]) {
    debug_assert_eq!(cols.len(), d.cols_rows() * d.out_sites());
    let mut row = 0;
    for c in 0..d.c {
        let chan = &img[c * d.h * d.w..(c + 1) * d.h * d.w];
        for u in 0..d.kh {
            for v in 0..d.kw {
                let out_row = &mut cols[row * d.out_sites()..(row + 1) * d.out_sites()];
                let mut site = 0;
                for oy in 0..d.ho {
                    let iy = (oy * d.stride + u) as isize - d.padding as isize;
                    if iy < 0 || iy >= d.h as isize {
                        for slot in &mut out_row[site..site + d.wo] {
                            *slot = T::zero();
                        }
                        site += d.wo;
                        continue;
                    }
                    let base = iy as usize * d.w;
                    for ox in 0..d.wo {
                        let ix = (ox * d.stride + v) as isize - d.padding as isize;
                        out_row[site] = if ix < 0 || ix >= d.w as isize {
                            T::zero()
                        } else {
                            chan[base + ix as usize]
                        };
                        site += 1;
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-add patch columns back onto one image (adjoint of [`im2col`]).
fn col2im_acc<T: Scalar>(cols: &[T], d: &ConvDims, img: &mut [T]) {
    let mut row = 0;
    for c in 0..d.c {
        let chan = &mut img[c * d.h * d.w..(c + 1) * d.h * d.w];
        for u in 0..d.kh {
            for v in 0..d.kw {
                let col_row = &cols[row * d.out_sites()..(row + 1) * d.out_sites()];
                let mut site = 0;
                for oy in 0..d.ho {
                    let iy = (oy * d.stride + u) as isize - d.padding as isize;
                    if iy < 0 || iy >= d.h as isize {
                        site += d.wo;
                        continue;
                    }
                    let base = iy as usize * d.w;
                    for ox in 0..d.wo {
                        let ix = (ox * d.stride + v) as isize - d.padding as isize;
                        if ix >= 0 && ix < d.w as isize {
                            let idx = base + ix as usize;
                            chan[idx] = chan[idx] + col_row[site];
                        }
                        site += 1;
                    }
                }
                row += 1;
            }
        }
    }
}

impl<T: Scalar> GradGraph<T> {
    /// Cross-correlation of `input [N,C,H,W]` with `kernel [K,C,kh,kw]`
    /// plus `bias [K]`, differentiable in all three tensors.
    ///
    /// Output spatial size is `floor((H + 2*padding - kh)/stride) + 1`
    /// (same for width).
    pub fn conv2d(
        &self,
        input: &Tensor<T>,
        kernel: &Tensor<T>,
        bias: &Tensor<T>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<T>> {
        if stride == 0 {
            return Err(Error::parameter("conv2d", "stride must be positive"));
        }
        let ishape = input.shape();
        let kshape = kernel.shape();
        if ishape.len() != 4 {
            return Err(Error::dimension(
                "conv2d",
                format!("input must be [N,C,H,W], got {ishape:?}"),
            ));
        }
        if kshape.len() != 4 {
            return Err(Error::dimension(
                "conv2d",
                format!("kernel must be [K,C,kh,kw], got {kshape:?}"),
            ));
        }
        let (n, c, h, w) = (ishape[0], ishape[1], ishape[2], ishape[3]);
        let (k, kc, kh, kw) = (kshape[0], kshape[1], kshape[2], kshape[3]);
        if kc != c {
            return Err(Error::dimension(
                "conv2d",
                format!("input channel axis is {c} but kernel channel axis is {kc}"),
            ));
        }
        if bias.shape() != [k] {
            return Err(Error::dimension(
                "conv2d",
                format!("bias must be [{k}], got {:?}", bias.shape()),
            ));
        }
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(Error::dimension(
                "conv2d",
                format!(
                    "kernel {kh}x{kw} exceeds padded input {}x{}",
                    h + 2 * padding,
                    w + 2 * padding
                ),
            ));
        }
        let d = ConvDims {
            n,
            c,
            h,
            w,
            k,
            kh,
            kw,
            stride,
            padding,
            ho: (h + 2 * padding - kh) / stride + 1,
            wo: (w + 2 * padding - kw) / stride + 1,
        };

        let mut out = vec![T::zero(); n * k * d.out_sites()];
        {
            let in_data = input.data();
            let k_data = kernel.data();
            let b_data = bias.data();
            let mut cols = vec![T::zero(); d.cols_rows() * d.out_sites()];
            for img in 0..n {
                im2col(&in_data[img * c * h * w..(img + 1) * c * h * w], &d, &mut cols);
                let out_img = &mut out[img * k * d.out_sites()..(img + 1) * k * d.out_sites()];
                matmul_acc(&k_data, &cols, out_img, k, d.cols_rows(), d.out_sites());
                for ch in 0..k {
                    let b = b_data[ch];
                    for o in &mut out_img[ch * d.out_sites()..(ch + 1) * d.out_sites()] {
                        *o = *o + b;
                    }
                }
            }
        }

        let tracked = input.requires_grad() || kernel.requires_grad() || bias.requires_grad();
        let out = self.output("conv2d", vec![n, k, d.ho, d.wo], out, tracked)?;

        if self.is_recording() && tracked {
            let input = input.clone();
            let kernel = kernel.clone();
            let bias = bias.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    conv2d_backward(&input, &kernel, &bias, go, &d);
                });
            });
        }
        Ok(out)
    }
}

fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    go: &[T],
    d: &ConvDims,
) {
    let sites = d.out_sites();
    if bias.requires_grad() {
        bias.accumulate_grad(|gb| {
            for img in 0..d.n {
                let go_img = &go[img * d.k * sites..(img + 1) * d.k * sites];
                for ch in 0..d.k {
                    let mut s = T::zero();
                    for &g in &go_img[ch * sites..(ch + 1) * sites] {
                        s = s + g;
                    }
                    gb[ch] = gb[ch] + s;
                }
            }
        });
    }

    let rows = d.cols_rows();
    if kernel.requires_grad() {
        let in_data = input.data();
        let mut cols = vec![T::zero(); rows * sites];
        kernel.accumulate_grad(|gk| {
            for img in 0..d.n {
                im2col(
                    &in_data[img * d.c * d.h * d.w..(img + 1) * d.c * d.h * d.w],
                    d,
                    &mut cols,
                );
                let go_img = &go[img * d.k * sites..(img + 1) * d.k * sites];
                // gK[k, rows] += GO[k, sites] * cols[rows, sites]^T
                matmul_abt_acc(go_img, &cols, gk, d.k, sites, rows);
            }
        });
    }

    if input.requires_grad() {
        let k_data = kernel.data();
        let mut gcols = vec![T::zero(); rows * sites];
        input.accumulate_grad(|gi| {
            for img in 0..d.n {
                for slot in gcols.iter_mut() {
                    *slot = T::zero();
                }
                let go_img = &go[img * d.k * sites..(img + 1) * d.k * sites];
                // gCols[rows, sites] += K[k, rows]^T * GO[k, sites]
                matmul_atb_acc(&k_data, go_img, &mut gcols, rows, d.k, sites);
                col2im_acc(
                    &gcols,
                    d,
                    &mut gi[img * d.c * d.h * d.w..(img + 1) * d.c * d.h * d.w],
                );
            }
        });
    }
}
