//! Inverted dropout.

use super::{with_out_grad, GradGraph, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use rand::Rng as _;

impl<T: Scalar> GradGraph<T> {
    /// Zero each element with probability `p` and rescale survivors by
    /// `1/(1-p)` so activations keep their expectation. The caller owns the
    /// RNG; an inference pass simply skips the call.
    pub fn dropout(&self, x: &Tensor<T>, p: f64, rng: &mut Rng) -> Result<Tensor<T>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::parameter("dropout", "rate must lie in [0, 1)"));
        }
        if p == 0.0 {
            return Ok(x.clone());
        }
        let scale = T::from_f64(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..x.len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { scale })
            .collect();
        let data: Vec<T> = x.data().iter().zip(mask.iter()).map(|(&v, &m)| v * m).collect();
        let out = self.output("dropout", x.shape().to_vec(), data, x.requires_grad())?;
        if self.is_recording() && x.requires_grad() {
            let x = x.clone();
            let out_h = out.clone();
            self.push(move || {
                with_out_grad(&out_h, |go| {
                    x.accumulate_grad(|gx| {
                        for i in 0..gx.len() {
                            gx[i] = gx[i] + go[i] * mask[i];
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
    use crate::rng::rng_from_seed;

    #[test]
    fn zero_rate_is_identity() {
        let g = GradGraph::recording();
        let x = Tensor::from_vec(vec![3], vec![1.0f64, 2.0, 3.0]).unwrap();
        let mut rng = rng_from_seed(7);
        let y = g.dropout(&x, 0.0, &mut rng).unwrap();
        assert!(y.same_storage(&x));
    }

    #[test]
    fn survivors_are_rescaled_and_grad_uses_same_mask() {
        let g = GradGraph::recording();
        let x = Tensor::param(vec![64], vec![1.0f64; 64]).unwrap();
        let mut rng = rng_from_seed(42);
        let y = g.dropout(&x, 0.5, &mut rng).unwrap();
        let yd = y.to_vec();
        assert!(yd.iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(yd.iter().any(|&v| v == 0.0));
        assert!(yd.iter().any(|&v| v == 2.0));
        g.backward(&g.sum_all(&y).unwrap()).unwrap();
        let gx = x.grad().unwrap();
        for (gv, yv) in gx.iter().zip(yd.iter()) {
            assert_eq!(*gv, *yv);
        }
    }

    #[test]
    fn same_seed_same_mask() {
        let make = || {
            let g = GradGraph::<f64>::recording();
            let x = Tensor::from_vec(vec![32], vec![1.0f64; 32]).unwrap();
            let mut rng = rng_from_seed(9);
            g.dropout(&x, 0.3, &mut rng).unwrap().to_vec()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn rejects_rate_of_one() {
        let g = GradGraph::<f64>::recording();
        let x = Tensor::zeros(vec![2]);
        let mut rng = rng_from_seed(1);
        assert!(g.dropout(&x, 1.0, &mut rng).is_err());
    }
}
