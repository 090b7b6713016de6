//! Central finite differences against every analytic gradient.
//!
//! Each case builds a scalar loss from one op (plus `mul`/`sum_all` to make
//! the loss quadratic), backpropagates, then perturbs every parameter
//! element by +-h and compares the measured slope. f64 end to end; h is
//! large enough that roundoff stays two orders below the tolerance.

use lesionattn::rng::{rng_from_seed, Rng};
use lesionattn::tensor::{GradGraph, Tensor};
use rand::Rng as _;

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn rand_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Checks d(loss)/d(param) for every element of every parameter.
fn check(name: &str, params: &[Tensor<f64>], loss_fn: impl Fn(&GradGraph<f64>) -> Tensor<f64>) {
    for p in params {
        p.zero_grad();
    }
    let graph = GradGraph::recording();
    let loss = loss_fn(&graph);
    graph.backward(&loss).unwrap();
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();

    let eval = |_: ()| loss_fn(&GradGraph::inference()).item();
    for (pi, p) in params.iter().enumerate() {
        let base = p.to_vec();
        for ei in 0..base.len() {
            let mut bumped = base.clone();
            bumped[ei] = base[ei] + H;
            p.set_data(&bumped).unwrap();
            let up = eval(());
            bumped[ei] = base[ei] - H;
            p.set_data(&bumped).unwrap();
            let down = eval(());
            p.set_data(&base).unwrap();
            let numeric = (up - down) / (2.0 * H);
            let got = analytic[pi][ei];
            assert!(
                (got - numeric).abs() <= TOL * (1.0 + numeric.abs()),
                "{name}: param {pi} elem {ei}: analytic {got} vs numeric {numeric}"
            );
        }
    }
}

/// loss = sum(y * y), a strictly curved functional of the op output.
fn quad(graph: &GradGraph<f64>, y: &Tensor<f64>) -> Tensor<f64> {
    let sq = graph.mul(y, y).unwrap();
    graph.sum_all(&sq).unwrap()
}

#[test]
fn relu_gradient() {
    let mut rng = rng_from_seed(101);
    // keep inputs away from the kink at zero
    let vals: Vec<f64> = rand_vec(&mut rng, 24, 0.1, 2.0)
        .into_iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { v } else { -v })
        .collect();
    let x = Tensor::param(vec![24], vals).unwrap();
    check("relu", &[x.clone()], |g| {
        let y = g.relu(&x).unwrap();
        quad(g, &y)
    });
}

#[test]
fn sigmoid_gradient() {
    let mut rng = rng_from_seed(102);
    let x = Tensor::param(vec![16], rand_vec(&mut rng, 16, -4.0, 4.0)).unwrap();
    check("sigmoid", &[x.clone()], |g| {
        let y = g.sigmoid(&x).unwrap();
        quad(g, &y)
    });
}

#[test]
fn add_sub_mul_gradients() {
    let mut rng = rng_from_seed(103);
    let a = Tensor::param(vec![12], rand_vec(&mut rng, 12, -2.0, 2.0)).unwrap();
    let b = Tensor::param(vec![12], rand_vec(&mut rng, 12, -2.0, 2.0)).unwrap();
    check("add", &[a.clone(), b.clone()], |g| {
        let y = g.add(&a, &b).unwrap();
        quad(g, &y)
    });
    check("sub", &[a.clone(), b.clone()], |g| {
        let y = g.sub(&a, &b).unwrap();
        quad(g, &y)
    });
    check("mul", &[a.clone(), b.clone()], |g| {
        let y = g.mul(&a, &b).unwrap();
        quad(g, &y)
    });
}

#[test]
fn affine_and_clamp_gradients() {
    let mut rng = rng_from_seed(104);
    let x = Tensor::param(vec![10], rand_vec(&mut rng, 10, -0.8, 0.8)).unwrap();
    check("affine", &[x.clone()], |g| {
        let y = g.affine(&x, 1.7, -0.3).unwrap();
        quad(g, &y)
    });
    // bounds far outside the data so no element sits on the kink
    check("clamp", &[x.clone()], |g| {
        let y = g.clamp(&x, -1.0, 1.0).unwrap();
        quad(g, &y)
    });
}

#[test]
fn ln_gradient() {
    let mut rng = rng_from_seed(105);
    let x = Tensor::param(vec![9], rand_vec(&mut rng, 9, 0.2, 3.0)).unwrap();
    check("ln", &[x.clone()], |g| {
        let y = g.ln(&x).unwrap();
        quad(g, &y)
    });
}

#[test]
fn mul_const_elems_gradient() {
    let mut rng = rng_from_seed(106);
    let x = Tensor::param(vec![8], rand_vec(&mut rng, 8, -1.0, 1.0)).unwrap();
    let c = Tensor::from_vec(vec![8], rand_vec(&mut rng, 8, -2.0, 2.0)).unwrap();
    check("mul_const_elems", &[x.clone()], |g| {
        let y = g.mul_const_elems(&x, &c).unwrap();
        quad(g, &y)
    });
}

#[test]
fn linear_gradient() {
    let mut rng = rng_from_seed(107);
    let x = Tensor::param(vec![3, 5], rand_vec(&mut rng, 15, -1.0, 1.0)).unwrap();
    let w = Tensor::param(vec![4, 5], rand_vec(&mut rng, 20, -1.0, 1.0)).unwrap();
    let b = Tensor::param(vec![4], rand_vec(&mut rng, 4, -0.5, 0.5)).unwrap();
    check("linear", &[x.clone(), w.clone(), b.clone()], |g| {
        let y = g.linear(&x, &w, &b).unwrap();
        quad(g, &y)
    });
}

#[test]
fn conv2d_gradient_stride_one() {
    let mut rng = rng_from_seed(108);
    let x = Tensor::param(vec![2, 3, 5, 5], rand_vec(&mut rng, 150, -1.0, 1.0)).unwrap();
    let k = Tensor::param(vec![4, 3, 3, 3], rand_vec(&mut rng, 108, -0.5, 0.5)).unwrap();
    let b = Tensor::param(vec![4], rand_vec(&mut rng, 4, -0.2, 0.2)).unwrap();
    check("conv2d s1 p1", &[x.clone(), k.clone(), b.clone()], |g| {
        let y = g.conv2d(&x, &k, &b, 1, 1).unwrap();
        quad(g, &y)
    });
}

#[test]
fn conv2d_gradient_stride_two_no_padding() {
    let mut rng = rng_from_seed(109);
    let x = Tensor::param(vec![1, 2, 6, 7], rand_vec(&mut rng, 84, -1.0, 1.0)).unwrap();
    let k = Tensor::param(vec![3, 2, 2, 2], rand_vec(&mut rng, 24, -0.5, 0.5)).unwrap();
    let b = Tensor::param(vec![3], rand_vec(&mut rng, 3, -0.2, 0.2)).unwrap();
    check("conv2d s2 p0", &[x.clone(), k.clone(), b.clone()], |g| {
        let y = g.conv2d(&x, &k, &b, 2, 0).unwrap();
        quad(g, &y)
    });
}

#[test]
fn maxpool_gradient() {
    // hand-spaced values so no pooling window has a tie and no pair is
    // within H of swapping order under perturbation
    let vals: Vec<f64> = (0..32).map(|i| (i as f64) * 0.37 - 5.0).collect();
    let x = Tensor::param(vec![1, 2, 4, 4], vals).unwrap();
    check("maxpool2", &[x.clone()], |g| {
        let y = g.maxpool2(&x).unwrap();
        quad(g, &y)
    });
}

#[test]
fn global_avg_pool_gradient() {
    let mut rng = rng_from_seed(110);
    let x = Tensor::param(vec![2, 3, 4, 4], rand_vec(&mut rng, 96, -1.0, 1.0)).unwrap();
    check("global_avg_pool", &[x.clone()], |g| {
        let y = g.global_avg_pool(&x).unwrap();
        quad(g, &y)
    });
}

#[test]
fn div_scalars_gradient() {
    let a = Tensor::param(vec![], vec![1.7f64]).unwrap();
    let b = Tensor::param(vec![], vec![0.9f64]).unwrap();
    check("div_scalars", &[a.clone(), b.clone()], |g| {
        let q = g.div_scalars(&a, &b).unwrap();
        quad(g, &q)
    });
}

#[test]
fn channel_weighted_sum_gradient() {
    let mut rng = rng_from_seed(111);
    let f = Tensor::param(vec![2, 3, 4, 4], rand_vec(&mut rng, 96, -1.0, 1.0)).unwrap();
    let w = Tensor::param(vec![3], rand_vec(&mut rng, 3, -1.0, 1.0)).unwrap();
    check("channel_weighted_sum", &[f.clone(), w.clone()], |g| {
        let y = g.channel_weighted_sum(&f, &w).unwrap();
        quad(g, &y)
    });
}

#[test]
fn scale_per_image_gradient() {
    let mut rng = rng_from_seed(112);
    let x = Tensor::param(vec![3, 4], rand_vec(&mut rng, 12, -1.0, 1.0)).unwrap();
    check("scale_per_image", &[x.clone()], |g| {
        let y = g.scale_per_image(&x, &[0.5, -1.25, 2.0]).unwrap();
        quad(g, &y)
    });
}

#[test]
fn div_elementwise_gradient() {
    let mut rng = rng_from_seed(115);
    let a = Tensor::param(vec![10], rand_vec(&mut rng, 10, -2.0, 2.0)).unwrap();
    let b = Tensor::param(vec![10], rand_vec(&mut rng, 10, 0.5, 3.0)).unwrap();
    check("div", &[a.clone(), b.clone()], |g| {
        let y = g.div(&a, &b).unwrap();
        quad(g, &y)
    });
}

#[test]
fn sum_per_image_gradient() {
    let mut rng = rng_from_seed(116);
    let x = Tensor::param(vec![3, 2, 4], rand_vec(&mut rng, 24, -1.0, 1.0)).unwrap();
    check("sum_per_image", &[x.clone()], |g| {
        let y = g.sum_per_image(&x).unwrap();
        quad(g, &y)
    });
}

#[test]
fn dropout_gradient_with_frozen_mask() {
    let mut rng = rng_from_seed(113);
    let x = Tensor::param(vec![20], rand_vec(&mut rng, 20, -1.0, 1.0)).unwrap();
    // reseeding per evaluation keeps the mask identical across the
    // perturbed forward passes
    check("dropout", &[x.clone()], |g| {
        let mut mask_rng = rng_from_seed(4242);
        let y = g.dropout(&x, 0.4, &mut mask_rng).unwrap();
        quad(g, &y)
    });
}

#[test]
fn bce_gradient() {
    let mut rng = rng_from_seed(117);
    // logits, so the sigmoid+clamp+log chain is exercised end to end
    let logits = Tensor::param(vec![6, 1], rand_vec(&mut rng, 6, -2.5, 2.5)).unwrap();
    let labels = [1u8, 0, 1, 1, 0, 0];
    check("bce", &[logits.clone()], |g| {
        let s = g.sigmoid(&logits).unwrap();
        lesionattn::loss::classification_loss_graph(g, &s, &labels, 3.0).unwrap()
    });
}

#[test]
fn attention_loss_gradient_through_detached_normalization() {
    use lesionattn::geometry::{BoundingBox, EllipseMask};
    use lesionattn::loss::{JaccardVariant, LossConfig};

    let mut rng = rng_from_seed(118);
    let raw = Tensor::param(vec![2, 4, 4], rand_vec(&mut rng, 32, -1.0, 2.0)).unwrap();
    let masks: Vec<EllipseMask> = (0..2)
        .map(|i| {
            let vals: Vec<u8> = (0..16).map(|j| ((i + j) % 3 == 0) as u8).collect();
            EllipseMask::from_binary(4, 4, vals, BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap())
                .unwrap()
        })
        .collect();

    // The divisor is a stop-gradient, so the function being differentiated
    // holds the per-image max fixed; freeze it once here so the numeric
    // slope measures the same function the analytic gradient defines.
    let coeffs: Vec<f64> = {
        let d = raw.to_vec();
        (0..2)
            .map(|i| {
                let m = d[i * 16..(i + 1) * 16].iter().cloned().fold(0.0, f64::max);
                if m > 0.0 {
                    1.0 / m
                } else {
                    0.0
                }
            })
            .collect()
    };
    for (variant, per_image) in [
        (JaccardVariant::Standard, false),
        (JaccardVariant::Literal, false),
        (JaccardVariant::Standard, true),
    ] {
        let config = LossConfig { variant, per_image_mean: per_image, ..Default::default() };
        check("attention loss", &[raw.clone()], |g| {
            let rect = g.relu(&raw).unwrap();
            let norm = g.scale_per_image(&rect, &coeffs).unwrap();
            lesionattn::loss::attention_loss_graph(g, &norm, &masks, &config).unwrap()
        });
    }
}

#[test]
fn composite_loss_gradient() {
    let a = Tensor::param(vec![], vec![0.8f64]).unwrap();
    let c = Tensor::param(vec![], vec![0.3f64]).unwrap();
    check("composite", &[a.clone(), c.clone()], |g| {
        lesionattn::loss::composite_loss_graph(g, &c, &a, 0.66).unwrap()
    });
}

#[test]
fn deep_composition_gradient() {
    // conv -> relu -> pool -> gap -> linear -> sigmoid, the exact shape of
    // the real model, checked end to end through one scalar.
    let mut rng = rng_from_seed(114);
    let x = Tensor::param(vec![2, 2, 8, 8], rand_vec(&mut rng, 256, -1.0, 1.0)).unwrap();
    let k = Tensor::param(vec![3, 2, 3, 3], rand_vec(&mut rng, 54, -0.4, 0.4)).unwrap();
    let kb = Tensor::param(vec![3], rand_vec(&mut rng, 3, -0.1, 0.1)).unwrap();
    let w = Tensor::param(vec![1, 3], rand_vec(&mut rng, 3, -1.0, 1.0)).unwrap();
    let b = Tensor::param(vec![1], rand_vec(&mut rng, 1, -0.1, 0.1)).unwrap();
    let params = [x.clone(), k.clone(), kb.clone(), w.clone(), b.clone()];
    check("deep composition", &params, |g| {
        let c = g.conv2d(&x, &k, &kb, 1, 1).unwrap();
        let r = g.relu(&c).unwrap();
        let p = g.maxpool2(&r).unwrap();
        let gap = g.global_avg_pool(&p).unwrap();
        let logit = g.linear(&gap, &w, &b).unwrap();
        let s = g.sigmoid(&logit).unwrap();
        quad(g, &s)
    });
}
