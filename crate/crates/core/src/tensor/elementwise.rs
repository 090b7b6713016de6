//! Pointwise differentiable ops.

use super::{with_out_grad, GradGraph, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dimension(
            op,
            format!("shapes {:?} and {:?} differ", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

impl<T: Scalar> GradGraph<T> {
    /// `max(x, 0)` elementwise. Gradient at exactly zero is zero.
    pub fn relu(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let data: Vec<T> = x.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let out = self.output("relu", x.shape().to_vec(), data, x.requires_grad())?;
        if self.is_recording() && x.requires_grad() {
            let x = x.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    let xd = x.data();
                    x.accumulate_grad(|gx| {
                        for i in 0..gx.len() {
                            if xd[i] > T::zero() {
                                gx[i] = gx[i] + go[i];
                            }
                        }
                    });
                });
            });
        }
        Ok(out)
    }

    /// Numerically stable logistic `1/(1+exp(-x))`, evaluated without
    /// overflowing exp for large |x|.
    pub fn sigmoid(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let data: Vec<T> = x
            .data()
            .iter()
            .map(|&v| {
                if v >= T::zero() {
                    let e = (-v).exp();
                    T::one() / (T::one() + e)
                } else {
                    let e = v.exp();
                    e / (T::one() + e)
                }
            })
            .collect();
        let out = self.output("sigmoid", x.shape().to_vec(), data, x.requires_grad())?;
        if self.is_recording() && x.requires_grad() {
            let x = x.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    let s = out_h.data();
                    x.accumulate_grad(|gx| {
                        for i in 0..gx.len() {
                            gx[i] = gx[i] + go[i] * s[i] * (T::one() - s[i]);
                        }
                    });
                });
            });
        }
        Ok(out)
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("add", a, b)?;
        let data: Vec<T> = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x + y).collect();
        let tracked = a.requires_grad() || b.requires_grad();
        let out = self.output("add", a.shape().to_vec(), data, tracked)?;
        if self.is_recording() && tracked {
            let a = a.clone();
            let b = b.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    if a.requires_grad() {
                        a.accumulate_grad(|ga| {
                            for (g, &d) in ga.iter_mut().zip(go.iter()) {
                                *g = *g + d;
                            }
                        });
                    }
                    if b.requires_grad() {
                        b.accumulate_grad(|gb| {
                            for (g, &d) in gb.iter_mut().zip(go.iter()) {
                                *g = *g + d;
                            }
                        });
                    }
                });
            });
        }
        Ok(out)
    }

    /// Elementwise difference `a - b`.
    pub fn sub(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("sub", a, b)?;
        let data: Vec<T> = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x - y).collect();
        let tracked = a.requires_grad() || b.requires_grad();
        let out = self.output("sub", a.shape().to_vec(), data, tracked)?;
        if self.is_recording() && tracked {
            let a = a.clone();
            let b = b.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    if a.requires_grad() {
                        a.accumulate_grad(|ga| {
                            for (g, &d) in ga.iter_mut().zip(go.iter()) {
                                *g = *g + d;
                            }
                        });
                    }
                    if b.requires_grad() {
                        b.accumulate_grad(|gb| {
                            for (g, &d) in gb.iter_mut().zip(go.iter()) {
                                *g = *g - d;
                            }
                        });
                    }
                });
            });
        }
        Ok(out)
    }

    /// Elementwise (Hadamard) product of two same-shape tensors.
    pub fn mul(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("mul", a, b)?;
        let data: Vec<T> = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x * y).collect();
        let tracked = a.requires_grad() || b.requires_grad();
        let out = self.output("mul", a.shape().to_vec(), data, tracked)?;
        if self.is_recording() && tracked {
            let a = a.clone();
            let b = b.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    if a.requires_grad() {
                        let bd = b.data();
                        a.accumulate_grad(|ga| {
                            for i in 0..ga.len() {
                                ga[i] = ga[i] + go[i] * bd[i];
                            }
                        });
                    }
                    if b.requires_grad() {
                        let ad = a.data();
                        b.accumulate_grad(|gb| {
                            for i in 0..gb.len() {
                                gb[i] = gb[i] + go[i] * ad[i];
                            }
                        });
                    }
                });
            });
        }
        Ok(out)
    }

    /// Elementwise quotient `a / b`. Every divisor must be nonzero.
    pub fn div(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("div", a, b)?;
        if b.data().iter().any(|&v| v == T::zero()) {
            return Err(Error::Numeric("div: zero divisor".into()));
        }
        let data: Vec<T> = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x / y).collect();
        let tracked = a.requires_grad() || b.requires_grad();
        let out = self.output("div", a.shape().to_vec(), data, tracked)?;
        if self.is_recording() && tracked {
            let a = a.clone();
            let b = b.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    let bd = b.data();
                    if a.requires_grad() {
                        a.accumulate_grad(|ga| {
                            for i in 0..ga.len() {
                                ga[i] = ga[i] + go[i] / bd[i];
                            }
                        });
                    }
                    if b.requires_grad() {
                        let ad = a.data();
                        b.accumulate_grad(|gb| {
                            for i in 0..gb.len() {
                                gb[i] = gb[i] - go[i] * ad[i] / (bd[i] * bd[i]);
                            }
                        });
                    }
                });
            });
        }
        Ok(out)
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&self, x: &Tensor<T>, scale: T, shift: T) -> Result<Tensor<T>> {
        let data: Vec<T> = x.data().iter().map(|&v| scale * v + shift).collect();
        let out = self.output("affine", x.shape().to_vec(), data, x.requires_grad())?;
        if self.is_recording() && x.requires_grad() {
            let x = x.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    x.accumulate_grad(|gx| {
                        for (g, &d) in gx.iter_mut().zip(go.iter()) {
                            *g = *g + scale * d;
                        }
                    });
                });
            });
        }
        Ok(out)
    }

    /// Elementwise product with an untracked coefficient tensor; the
    /// coefficients are treated as constants even if `coeff` is a parameter.
    pub fn mul_const_elems(&self, x: &Tensor<T>, coeff: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("mul_const_elems", x, coeff)?;
        let data: Vec<T> = x.data().iter().zip(coeff.data().iter()).map(|(&a, &c)| a * c).collect();
        let out = self.output("mul_const_elems", x.shape().to_vec(), data, x.requires_grad())?;
        if self.is_recording() && x.requires_grad() {
            let x = x.clone();
            let coeff = coeff.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    let cd = coeff.data();
                    x.accumulate_grad(|gx| {
                        for i in 0..gx.len() {
                            gx[i] = gx[i] + go[i] * cd[i];
                        }
                    });
                });
            });
        }
        Ok(out)
    }

    /// Clamp into `[lo, hi]`. Gradient is passed through strictly inside
    /// the interval and zeroed where the clamp is active.
    pub fn clamp(&self, x: &Tensor<T>, lo: T, hi: T) -> Result<Tensor<T>> {
        if !(lo < hi) {
            return Err(Error::parameter("clamp", "lower bound must be below upper bound"));
        }
        let data: Vec<T> = x
            .data()
            .iter()
            .map(|&v| if v < lo { lo } else if v > hi { hi } else { v })
            .collect();
        let out = self.output("clamp", x.shape().to_vec(), data, x.requires_grad())?;
        if self.is_recording() && x.requires_grad() {
            let x = x.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    let xd = x.data();
                    x.accumulate_grad(|gx| {
                        for i in 0..gx.len() {
                            if xd[i] > lo && xd[i] < hi {
                                gx[i] = gx[i] + go[i];
                            }
                        }
                    });
                });
            });
        }
        Ok(out)
    }

    /// Natural logarithm. Inputs must be strictly positive.
    pub fn ln(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.data().iter().any(|&v| v <= T::zero()) {
            return Err(Error::parameter("ln", "inputs must be strictly positive"));
        }
        let data: Vec<T> = x.data().iter().map(|&v| v.ln()).collect();
        let out = self.output("ln", x.shape().to_vec(), data, x.requires_grad())?;
        if self.is_recording() && x.requires_grad() {
            let x = x.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    let xd = x.data();
                    x.accumulate_grad(|gx| {
                        for i in 0..gx.len() {
                            gx[i] = gx[i] + go[i] / xd[i];
                        }
                    });
                });
            });
        }
        Ok(out)
    }
}
