//! Spatial pooling.

use super::{with_out_grad, GradGraph, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

impl<T: Scalar> GradGraph<T> {
    /// 2x2 max pooling with stride 2 over `[N,C,H,W]`. Trailing rows or
    /// columns that do not fill a window are dropped. On ties the gradient
    /// routes to the first maximal cell in row-major order.
    pub fn maxpool2(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        if s.len() != 4 {
            return Err(Error::dimension(
                "maxpool2",
                format!("input must be [N,C,H,W], got {s:?}"),
            ));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (ho, wo) = (h / 2, w / 2);
        if ho == 0 || wo == 0 {
            return Err(Error::dimension(
                "maxpool2",
                format!("spatial size {h}x{w} is too small for a 2x2 window"),
            ));
        }
        let planes = n * c;
        let mut out = vec![T::zero(); planes * ho * wo];
        let mut argmax = vec![0usize; planes * ho * wo];
        {
            let xd = x.data();
            for p in 0..planes {
                let src = &xd[p * h * w..(p + 1) * h * w];
                for oy in 0..ho {
                    for ox in 0..wo {
                        let base = (oy * 2) * w + ox * 2;
                        let cand = [base, base + 1, base + w, base + w + 1];
                        let mut best = cand[0];
                        for &i in &cand[1..] {
                            if src[i] > src[best] {
                                best = i;
                            }
                        }
                        out[(p * ho + oy) * wo + ox] = src[best];
                        argmax[(p * ho + oy) * wo + ox] = p * h * w + best;
                    }
                }
            }
        }
        let out = self.output("maxpool2", vec![n, c, ho, wo], out, x.requires_grad())?;
        if self.is_recording() && x.requires_grad() {
            let x = x.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    x.accumulate_grad(|gx| {
                        for (i, &src_idx) in argmax.iter().enumerate() {
                            gx[src_idx] = gx[src_idx] + go[i];
                        }
                    });
                });
            });
        }
        Ok(out)
    }

    /// Mean over the spatial axes: `[N,C,H,W] -> [N,C]`.
    pub fn global_avg_pool(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        if s.len() != 4 {
            return Err(Error::dimension(
                "global_avg_pool",
                format!("input must be [N,C,H,W], got {s:?}"),
            ));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let plane = h * w;
        let inv = T::one() / T::from_f64(plane as f64);
        let mut out = vec![T::zero(); n * c];
        {
            let xd = x.data();
            for (p, o) in out.iter_mut().enumerate() {
                let mut acc = T::zero();
                for &v in &xd[p * plane..(p + 1) * plane] {
                    acc = acc + v;
                }
                *o = acc * inv;
            }
        }
        let out = self.output("global_avg_pool", vec![n, c], out, x.requires_grad())?;
        if self.is_recording() && x.requires_grad() {
            let x = x.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    x.accumulate_grad(|gx| {
                        for (p, &d) in go.iter().enumerate() {
                            let spread = d * inv;
                            for g in &mut gx[p * plane..(p + 1) * plane] {
                                *g = *g + spread;
                            }
                        }
                    });
                });
            });
        }
        Ok(out)
    }
}
