//! Reductions and the two structured contractions the model head needs.

use super::{with_out_grad, GradGraph, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

impl<T: Scalar> GradGraph<T> {
    /// Sum of every element, returned as a rank-0 tensor.
    pub fn sum_all(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut s = T::zero();
        for &v in x.data().iter() {
            s = s + v;
        }
        let out = self.output("sum_all", vec![], vec![s], x.requires_grad())?;
        if self.is_recording() && x.requires_grad() {
            let x = x.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    let d = go[0];
                    x.accumulate_grad(|gx| {
                        for g in gx.iter_mut() {
                            *g = *g + d;
                        }
                    });
                });
            });
        }
        Ok(out)
    }

    /// Sum over all axes but the leading one: `[N, ...] -> [N]`.
    pub fn sum_per_image(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = x.shape();
        if shape.is_empty() {
            return Err(Error::dimension("sum_per_image", "input must have a leading axis"));
        }
        let n = shape[0];
        let per = x.len() / n.max(1);
        let mut sums = vec![T::zero(); n];
        {
            let xd = x.data();
            for (img, s) in sums.iter_mut().enumerate() {
                let mut acc = T::zero();
                for &v in &xd[img * per..(img + 1) * per] {
                    acc = acc + v;
                }
                *s = acc;
            }
        }
        let out = self.output("sum_per_image", vec![n], sums, x.requires_grad())?;
        if self.is_recording() && x.requires_grad() {
            let x = x.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    x.accumulate_grad(|gx| {
                        for (img, &d) in go.iter().enumerate() {
                            for g in &mut gx[img * per..(img + 1) * per] {
                                *g = *g + d;
                            }
                        }
                    });
                });
            });
        }
        Ok(out)
    }

    /// Ratio of two rank-0 tensors.
    pub fn div_scalars(&self, num: &Tensor<T>, den: &Tensor<T>) -> Result<Tensor<T>> {
        if num.len() != 1 || den.len() != 1 {
            return Err(Error::dimension("div_scalars", "both operands must be rank-0"));
        }
        let d = den.item();
        if d == T::zero() {
            return Err(Error::Numeric("div_scalars: denominator is zero".into()));
        }
        let q = num.item() / d;
        let tracked = num.requires_grad() || den.requires_grad();
        let out = self.output("div_scalars", vec![], vec![q], tracked)?;
        if self.is_recording() && tracked {
            let num = num.clone();
            let den = den.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    let g = go[0];
                    let dv = den.item();
                    if num.requires_grad() {
                        num.accumulate_grad(|gn| gn[0] = gn[0] + g / dv);
                    }
                    if den.requires_grad() {
                        let nv = num.item();
                        den.accumulate_grad(|gd| gd[0] = gd[0] - g * nv / (dv * dv));
                    }
                });
            });
        }
        Ok(out)
    }

    /// Contract the channel axis of `features [N,K,H,W]` with `weights [K]`:
    /// `out[n,y,x] = sum_k weights[k] * features[n,k,y,x]`.
    pub fn channel_weighted_sum(
        &self,
        features: &Tensor<T>,
        weights: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let fs = features.shape();
        if fs.len() != 4 {
            return Err(Error::dimension(
                "channel_weighted_sum",
                format!("features must be [N,K,H,W], got {fs:?}"),
            ));
        }
        let (n, k, h, w) = (fs[0], fs[1], fs[2], fs[3]);
        // a [1,K] FC weight row works unchanged: accumulation is flat-indexed
        if weights.shape() != [k] && weights.shape() != [1, k] {
            return Err(Error::dimension(
                "channel_weighted_sum",
                format!("weights must be [{k}] or [1,{k}], got {:?}", weights.shape()),
            ));
        }
        let plane = h * w;
        let mut out = vec![T::zero(); n * plane];
        {
            let fd = features.data();
            let wd = weights.data();
            for img in 0..n {
                let out_img = &mut out[img * plane..(img + 1) * plane];
                for ch in 0..k {
                    let wk = wd[ch];
                    let f_plane = &fd[(img * k + ch) * plane..(img * k + ch + 1) * plane];
                    for (o, &f) in out_img.iter_mut().zip(f_plane.iter()) {
                        *o = *o + wk * f;
                    }
                }
            }
        }
        let tracked = features.requires_grad() || weights.requires_grad();
        let out = self.output("channel_weighted_sum", vec![n, h, w], out, tracked)?;
        if self.is_recording() && tracked {
            let features = features.clone();
            let weights = weights.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    if features.requires_grad() {
                        let wd = weights.data();
                        features.accumulate_grad(|gf| {
                            for img in 0..n {
                                let go_img = &go[img * plane..(img + 1) * plane];
                                for ch in 0..k {
                                    let wk = wd[ch];
                                    let g_plane = &mut gf
                                        [(img * k + ch) * plane..(img * k + ch + 1) * plane];
                                    for (g, &d) in g_plane.iter_mut().zip(go_img.iter()) {
                                        *g = *g + wk * d;
                                    }
                                }
                            }
                        });
                    }
                    if weights.requires_grad() {
                        let fd = features.data();
                        weights.accumulate_grad(|gw| {
                            for img in 0..n {
                                let go_img = &go[img * plane..(img + 1) * plane];
                                for ch in 0..k {
                                    let f_plane =
                                        &fd[(img * k + ch) * plane..(img * k + ch + 1) * plane];
                                    let mut s = T::zero();
                                    for (&f, &d) in f_plane.iter().zip(go_img.iter()) {
                                        s = s + f * d;
                                    }
                                    gw[ch] = gw[ch] + s;
                                }
                            }
                        });
                    }
                });
            });
        }
        Ok(out)
    }

    /// Multiply every element of image `n` (leading axis) by the constant
    /// `coeffs[n]`. Coefficients never receive gradient; this is how a
    /// stop-gradient through a per-image normalizer is expressed.
    pub fn scale_per_image(&self, x: &Tensor<T>, coeffs: &[T]) -> Result<Tensor<T>> {
        let shape = x.shape();
        if shape.is_empty() || shape[0] != coeffs.len() {
            return Err(Error::dimension(
                "scale_per_image",
                format!("leading axis of {shape:?} must match {} coefficients", coeffs.len()),
            ));
        }
        let per = x.len() / shape[0].max(1);
        let mut data = x.to_vec();
        for (img, &c) in coeffs.iter().enumerate() {
            for v in &mut data[img * per..(img + 1) * per] {
                *v = *v * c;
            }
        }
        let out = self.output("scale_per_image", shape.to_vec(), data, x.requires_grad())?;
        if self.is_recording() && x.requires_grad() {
            let x = x.clone();
            let coeffs = coeffs.to_vec();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    x.accumulate_grad(|gx| {
                        for (img, &c) in coeffs.iter().enumerate() {
                            let lo = img * per;
                            for i in lo..lo + per {
                                gx[i] = gx[i] + go[i] * c;
                            }
                        }
                    });
                });
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_all_broadcasts_unit_gradient() {
        let g = GradGraph::recording();
        let x = Tensor::param(vec![2, 3], vec![1.0f64; 6]).unwrap();
        let s = g.sum_all(&x).unwrap();
        assert_eq!(s.item(), 6.0);
        g.backward(&s).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn div_scalars_quotient_rule() {
        let g = GradGraph::recording();
        let a = Tensor::param(vec![], vec![6.0f64]).unwrap();
        let b = Tensor::param(vec![], vec![3.0f64]).unwrap();
        let q = g.div_scalars(&a, &b).unwrap();
        assert_eq!(q.item(), 2.0);
        g.backward(&q).unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0 / 3.0]);
        assert_eq!(b.grad().unwrap(), vec![-6.0 / 9.0]);
    }

    #[test]
    fn channel_weighted_sum_matches_manual_contraction() {
        let g = GradGraph::recording();
        // 1 image, 2 channels of 2x2
        let f = Tensor::param(vec![1, 2, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0]).unwrap();
        let w = Tensor::param(vec![2], vec![0.5f64, 2.0]).unwrap();
        let m = g.channel_weighted_sum(&f, &w).unwrap();
        assert_eq!(m.shape(), &[1, 2, 2]);
        assert_eq!(m.to_vec(), vec![20.5, 41.0, 61.5, 82.0]);
        let s = g.sum_all(&m).unwrap();
        g.backward(&s).unwrap();
        assert_eq!(w.grad().unwrap(), vec![10.0, 100.0]);
        assert_eq!(f.grad().unwrap(), vec![0.5; 4].into_iter().chain(vec![2.0; 4]).collect::<Vec<_>>());
    }

    #[test]
    fn scale_per_image_applies_constant_per_leading_index() {
        let g = GradGraph::recording();
        let x = Tensor::param(vec![2, 3], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = g.scale_per_image(&x, &[2.0, 0.0]).unwrap();
        assert_eq!(y.to_vec(), vec![2.0, 4.0, 6.0, 0.0, 0.0, 0.0]);
        let s = g.sum_all(&y).unwrap();
        g.backward(&s).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0, 2.0, 0.0, 0.0, 0.0]);
    }
}
