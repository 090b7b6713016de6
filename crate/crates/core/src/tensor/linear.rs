//! Fully connected layer.

use super::matmul::{matmul_abt_acc, matmul_acc, matmul_atb_acc};
use super::{with_out_grad, GradGraph, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

impl<T: Scalar> GradGraph<T> {
    /// `x [N,D] * weight [O,D]^T + bias [O] -> [N,O]`.
    pub fn linear(&self, x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let xs = x.shape();
        let ws = weight.shape();
        if xs.len() != 2 || ws.len() != 2 {
            return Err(Error::dimension(
                "linear",
                format!("expected x [N,D] and weight [O,D], got {xs:?} and {ws:?}"),
            ));
        }
        let (n, d) = (xs[0], xs[1]);
        let (o, wd) = (ws[0], ws[1]);
        if wd != d {
            return Err(Error::dimension(
                "linear",
                format!("x feature axis is {d} but weight expects {wd}"),
            ));
        }
        if bias.shape() != [o] {
            return Err(Error::dimension(
                "linear",
                format!("bias must be [{o}], got {:?}", bias.shape()),
            ));
        }
        let mut out = vec![T::zero(); n * o];
        {
            let xd = x.data();
            let wdta = weight.data();
            let bd = bias.data();
            matmul_abt_acc(&xd, &wdta, &mut out, n, d, o);
            for row in out.chunks_mut(o) {
                for (v, &b) in row.iter_mut().zip(bd.iter()) {
                    *v = *v + b;
                }
            }
        }
        let tracked = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
        let out = self.output("linear", vec![n, o], out, tracked)?;
        if self.is_recording() && tracked {
            let x = x.clone();
            let weight = weight.clone();
            let bias = bias.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    if bias.requires_grad() {
                        bias.accumulate_grad(|gb| {
                            for row in go.chunks(o) {
                                for (g, &v) in gb.iter_mut().zip(row.iter()) {
                                    *g = *g + v;
                                }
                            }
                        });
                    }
                    if weight.requires_grad() {
                        let xd = x.data();
                        weight.accumulate_grad(|gw| {
                            // gW[O,D] += GO[N,O]^T * X[N,D]
                            matmul_atb_acc(go, &xd, gw, o, n, d);
                        });
                    }
                    if x.requires_grad() {
                        let wdta = weight.data();
                        x.accumulate_grad(|gx| {
                            // gX[N,D] += GO[N,O] * W[O,D]
                            matmul_acc(go, &wdta, gx, n, o, d);
                        });
                    }
                });
            });
        }
        Ok(out)
    }
}
