//! The CAM-compatible classifier: conv blocks -> last feature map ->
//! global average pool -> dropout -> FC -> sigmoid.
//!
//! The head is a single melanoma logit, so its FC weight row is exactly
//! the per-channel CAM weight vector: CAM(x,y) = sum_k w_k f_k(x,y) over
//! the post-activation features of the last block. The spatial mean of
//! the CAM therefore equals the logit minus the head bias; tests hold
//! that identity to 1e-10.

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::Scalar;
use crate::tensor::{GradGraph, Tensor};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NetworkConfig {
    pub input_side: usize,
    /// Output channels per conv block; every block is 3x3, pad 1,
    /// ReLU, then a 2x2 max pool.
    pub conv_channels: Vec<usize>,
    pub dropout_p: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { input_side: 64, conv_channels: vec![8, 16, 32, 64], dropout_p: 0.5 }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conv_channels.is_empty() {
            return Err(Error::Config("need at least one conv block".into()));
        }
        if self.conv_channels.iter().any(|&c| c == 0) {
            return Err(Error::Config("conv channel counts must be positive".into()));
        }
        let divisor = 1usize
            .checked_shl(self.conv_channels.len() as u32)
            .ok_or_else(|| Error::Config("too many conv blocks".into()))?;
        if self.input_side == 0 || self.input_side % divisor != 0 {
            return Err(Error::Config(format!(
                "input_side {} is not divisible by 2^{} pools",
                self.input_side,
                self.conv_channels.len()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p must lie in [0,1), got {}",
                self.dropout_p
            )));
        }
        Ok(())
    }

    pub fn feature_side(&self) -> usize {
        self.input_side >> self.conv_channels.len()
    }
}

#[derive(Debug, Clone)]
pub struct ConvBlock<T: Scalar> {
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
    pub pool: bool,
}

#[derive(Debug, Clone)]
pub struct CamNet<T: Scalar> {
    pub blocks: Vec<ConvBlock<T>>,
    /// FC weight row [1,K]: the CAM channel weights.
    pub head_weight: Tensor<T>,
    pub head_bias: Tensor<T>,
    pub dropout_p: f64,
    pub input_side: usize,
    pub feature_side: usize,
    pub feature_channels: usize,
}

/// One image's class activation map at feature resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct CamMap {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl CamMap {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// The melanoma logit: the only output of the binary head.
    pub fn class_index(&self) -> usize {
        0
    }
}

/// Uniform init with variance `gain / fan_in`. ReLU layers use gain 2 (He);
/// the sigmoid head uses gain 1/3 so initial logits stay near zero.
fn uniform_fan_in<T: Scalar>(
    shape: Vec<usize>,
    fan_in: usize,
    gain: f64,
    rng: &mut crate::rng::Rng,
) -> Result<Tensor<T>> {
    use rand::Rng as _;
    let bound = (3.0 * gain / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<T> =
        (0..n).map(|_| T::from_f64(rng.random_range(-bound..bound))).collect();
    Tensor::param(shape, data)
}

impl<T: Scalar> CamNet<T> {
    /// Seed-deterministic initialization: He-scaled uniform kernels, zero
    /// biases. He scaling keeps activation magnitudes roughly constant
    /// through the ReLU stack, which plain SGD needs to make progress at
    /// desk-scale learning rates.
    pub fn build(config: &NetworkConfig, seed: u64) -> Result<CamNet<T>> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(config.conv_channels.len());
        let mut in_ch = 3usize;
        for (i, &out_ch) in config.conv_channels.iter().enumerate() {
            let mut rng = rng_from_seed(derive_seed(seed, &[2, i as u64]));
            let kernel = uniform_fan_in(vec![out_ch, in_ch, 3, 3], in_ch * 9, 2.0, &mut rng)?;
            let bias = Tensor::param(vec![out_ch], vec![T::zero(); out_ch])?;
            blocks.push(ConvBlock { kernel, bias, pool: true });
            in_ch = out_ch;
        }
        let k = in_ch;
        let mut rng = rng_from_seed(derive_seed(seed, &[3]));
        let head_weight = uniform_fan_in(vec![1, k], k, 1.0 / 3.0, &mut rng)?;
        let head_bias = Tensor::param(vec![1], vec![T::zero()])?;
        Ok(CamNet {
            blocks,
            head_weight,
            head_bias,
            dropout_p: config.dropout_p,
            input_side: config.input_side,
            feature_side: config.feature_side(),
            feature_channels: k,
        })
    }

    pub fn input_side(&self) -> usize {
        self.input_side
    }

    pub fn feature_side(&self) -> usize {
        self.feature_side
    }

    /// All trainable tensors in a fixed order: per block kernel then
    /// bias, then head weight, then head bias.
    pub fn parameters(&self) -> Vec<Tensor<T>> {
        let mut params = Vec::with_capacity(self.blocks.len() * 2 + 2);
        for b in &self.blocks {
            params.push(b.kernel.clone());
            params.push(b.bias.clone());
        }
        params.push(self.head_weight.clone());
        params.push(self.head_bias.clone());
        params
    }

    /// Scores `[N,1]` in (0,1) and the retained last-block features
    /// `[N,K,F,F]`. Dropout runs only when `training`, seeded by
    /// `dropout_seed`.
    pub fn forward(
        &self,
        g: &GradGraph<T>,
        batch: &Tensor<T>,
        training: bool,
        dropout_seed: u64,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let shape = batch.shape();
        if shape.len() != 4 || shape[1] != 3 {
            return Err(Error::dimension(
                "forward",
                format!("expected batch [N,3,S,S], got {shape:?}"),
            ));
        }
        if shape[2] != self.input_side || shape[3] != self.input_side {
            return Err(Error::dimension(
                "forward",
                format!("network expects {0}x{0} input, got {1}x{2}", self.input_side, shape[2], shape[3]),
            ));
        }
        let mut x = batch.clone();
        for block in &self.blocks {
            x = g.conv2d(&x, &block.kernel, &block.bias, 1, 1)?;
            x = g.relu(&x)?;
            if block.pool {
                x = g.maxpool2(&x)?;
            }
        }
        let features = x;
        let pooled = g.global_avg_pool(&features)?;
        let dropped = if training && self.dropout_p > 0.0 {
            let mut rng = rng_from_seed(dropout_seed);
            g.dropout(&pooled, self.dropout_p, &mut rng)?
        } else {
            pooled
        };
        let logits = g.linear(&dropped, &self.head_weight, &self.head_bias)?;
        let scores = g.sigmoid(&logits)?;
        Ok((scores, features))
    }

    /// Graph-connected CAM `[N,F,F]`; the attention loss differentiates
    /// through this into both the features and the head weights.
    pub fn cam_graph(&self, g: &GradGraph<T>, features: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_features(features)?;
        g.channel_weighted_sum(features, &self.head_weight)
    }

    /// Detached per-image CAMs for evaluation and export.
    pub fn compute_cam(&self, features: &Tensor<T>) -> Result<Vec<CamMap>> {
        self.check_features(features)?;
        let g = GradGraph::inference();
        let cams = g.channel_weighted_sum(features, &self.head_weight)?;
        let shape = cams.shape().to_vec();
        let (n, h, w) = (shape[0], shape[1], shape[2]);
        let data = cams.data();
        Ok((0..n)
            .map(|i| CamMap {
                values: data[i * h * w..(i + 1) * h * w].iter().map(|&v| v.to_f64()).collect(),
                rows: h,
                cols: w,
            })
            .collect())
    }

    fn check_features(&self, features: &Tensor<T>) -> Result<()> {
        let shape = features.shape();
        if shape.len() != 4 || shape[1] != self.feature_channels {
            return Err(Error::dimension(
                "compute_cam",
                format!(
                    "expected features [N,{},F,F], got {shape:?}",
                    self.feature_channels
                ),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rasterize_ellipse, resize_mask, BoundingBox};
    use crate::loss::{attention_loss_graph, normalize_cam_graph, LossConfig};
    use rand::Rng as _;

    fn tiny_config() -> NetworkConfig {
        NetworkConfig { input_side: 8, conv_channels: vec![2, 2], dropout_p: 0.0 }
    }

    fn random_batch(n: usize, side: usize, seed: u64) -> Tensor<f64> {
        let mut rng = rng_from_seed(seed);
        let data: Vec<f64> =
            (0..n * 3 * side * side).map(|_| rng.random_range(0.0..1.0)).collect();
        Tensor::from_vec(vec![n, 3, side, side], data).unwrap()
    }

    #[test]
    fn default_geometry_is_four_halvings() {
        let net = CamNet::<f64>::build(&NetworkConfig::default(), 1).unwrap();
        assert_eq!(net.feature_side, 4);
        assert_eq!(net.feature_channels, 64);
        let g = GradGraph::inference();
        let (scores, features) = net.forward(&g, &random_batch(2, 64, 7), false, 0).unwrap();
        assert_eq!(scores.shape(), &[2, 1]);
        assert_eq!(features.shape(), &[2, 64, 4, 4]);
        let sv = scores.to_vec();
        assert!(sv.iter().all(|&s| s > 0.0 && s < 1.0));
    }

    #[test]
    fn indivisible_input_side_is_rejected() {
        let cfg = NetworkConfig { input_side: 60, ..NetworkConfig::default() };
        assert!(matches!(CamNet::<f64>::build(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_builds_identical_weights() {
        let a = CamNet::<f32>::build(&NetworkConfig::default(), 5).unwrap();
        let b = CamNet::<f32>::build(&NetworkConfig::default(), 5).unwrap();
        for (pa, pb) in a.parameters().iter().zip(b.parameters().iter()) {
            assert_eq!(pa.to_vec(), pb.to_vec());
        }
        let c = CamNet::<f32>::build(&NetworkConfig::default(), 6).unwrap();
        assert_ne!(a.head_weight.to_vec(), c.head_weight.to_vec());
    }

    #[test]
    fn zero_head_scores_exactly_half() {
        let net = CamNet::<f64>::build(&tiny_config(), 3).unwrap();
        net.head_weight.set_data(&vec![0.0; net.feature_channels]).unwrap();
        let g = GradGraph::inference();
        let (scores, _) = net.forward(&g, &random_batch(3, 8, 11), false, 0).unwrap();
        assert_eq!(scores.to_vec(), vec![0.5; 3]);
    }

    #[test]
    fn inference_is_deterministic_and_dropout_is_seeded() {
        let cfg = NetworkConfig { dropout_p: 0.5, ..tiny_config() };
        let net = CamNet::<f64>::build(&cfg, 4).unwrap();
        let batch = random_batch(2, 8, 13);
        let g = GradGraph::inference();
        let (s1, _) = net.forward(&g, &batch, false, 0).unwrap();
        let (s2, _) = net.forward(&g, &batch, false, 99).unwrap();
        assert_eq!(s1.to_vec(), s2.to_vec());
        let (t1, _) = net.forward(&g, &batch, true, 42).unwrap();
        let (t2, _) = net.forward(&g, &batch, true, 42).unwrap();
        assert_eq!(t1.to_vec(), t2.to_vec());
        let (t3, _) = net.forward(&g, &batch, true, 43).unwrap();
        assert_ne!(t1.to_vec(), t3.to_vec());
    }

    #[test]
    fn wrong_spatial_size_is_a_dimension_error() {
        let net = CamNet::<f64>::build(&tiny_config(), 3).unwrap();
        let g = GradGraph::inference();
        let bad = random_batch(1, 16, 1);
        assert!(matches!(net.forward(&g, &bad, false, 0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn cam_matches_hand_weighted_sum() {
        let net = CamNet::<f64>::build(&tiny_config(), 9).unwrap();
        net.head_weight.set_data(&[1.0, 2.0]).unwrap();
        let features = Tensor::from_vec(
            vec![1, 2, 2, 2],
            vec![1.0, 2.0, 3.0, 4.0, 0.0, 1.0, 1.0, 0.0],
        )
        .unwrap();
        let cams = net.compute_cam(&features).unwrap();
        assert_eq!(cams.len(), 1);
        assert_eq!(cams[0].values(), &[1.0, 4.0, 5.0, 4.0]);
        assert_eq!((cams[0].rows(), cams[0].cols()), (2, 2));
        assert_eq!(cams[0].class_index(), 0);

        net.head_weight.set_data(&[0.0, 0.0]).unwrap();
        assert!(net.compute_cam(&features).unwrap()[0].values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cam_is_linear_in_head_weights() {
        let net = CamNet::<f64>::build(&tiny_config(), 21).unwrap();
        let g = GradGraph::inference();
        let (_, features) = net.forward(&g, &random_batch(2, 8, 22), false, 0).unwrap();
        let w1 = [0.3, -0.7];
        let w2 = [-1.1, 0.4];
        let cam_with = |w: &[f64]| {
            net.head_weight.set_data(w).unwrap();
            net.compute_cam(&features).unwrap()
        };
        let c1 = cam_with(&w1);
        let c2 = cam_with(&w2);
        let sum = cam_with(&[w1[0] + w2[0], w1[1] + w2[1]]);
        for i in 0..c1.len() {
            for j in 0..c1[i].values().len() {
                let lhs = c1[i].values()[j] + c2[i].values()[j];
                assert!((lhs - sum[i].values()[j]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn gap_of_cam_equals_logit_minus_bias() {
        let net = CamNet::<f64>::build(&NetworkConfig::default(), 17).unwrap();
        net.head_bias.set_data(&[0.37]).unwrap();
        let g = GradGraph::inference();
        let batch = random_batch(2, 64, 23);
        let (scores, features) = net.forward(&g, &batch, false, 0).unwrap();
        let cams = net.compute_cam(&features).unwrap();
        for (i, cam) in cams.iter().enumerate() {
            let mean: f64 =
                cam.values().iter().sum::<f64>() / cam.values().len() as f64;
            let s = scores.to_vec()[i];
            let logit = (s / (1.0 - s)).ln();
            assert!(
                (mean - (logit - 0.37)).abs() <= 1e-10,
                "image {i}: CAM mean {mean} vs logit-bias {}",
                logit - 0.37
            );
        }
    }

    #[test]
    fn attention_gradient_reaches_the_first_conv_kernel() {
        let net = CamNet::<f64>::build(&tiny_config(), 31).unwrap();
        let batch = random_batch(1, 8, 33);
        let bbox = BoundingBox::new(1.5, 2.0, 6.0, 6.5).unwrap();
        let mask =
            resize_mask(&rasterize_ellipse(&bbox, 8, 8, 8.0, 8.0).unwrap(), 2, 2).unwrap();
        let config = LossConfig::default();

        // The normalization divisor is a stop-gradient, so finite
        // differences must measure the function with the divisor frozen
        // at the base point; normalize_cam_graph computes the same value
        // and gradient there.
        let coeffs: Vec<f64> = {
            let g = GradGraph::inference();
            let (_, features) = net.forward(&g, &batch, false, 0).unwrap();
            let cam = net.cam_graph(&g, &features).unwrap();
            let rect = g.relu(&cam).unwrap();
            let plane = rect.len();
            let max = rect.data()[..plane].iter().cloned().fold(0.0f64, f64::max);
            vec![if max > 0.0 { 1.0 / max } else { 0.0 }]
        };

        let loss_in = |g: &GradGraph<f64>| {
            let (_, features) = net.forward(g, &batch, false, 0).unwrap();
            let cam = net.cam_graph(g, &features).unwrap();
            let rect = g.relu(&cam).unwrap();
            let norm = g.scale_per_image(&rect, &coeffs).unwrap();
            attention_loss_graph(g, &norm, std::slice::from_ref(&mask), &config).unwrap()
        };

        let g = GradGraph::recording();
        let loss = loss_in(&g);
        let kernel = net.blocks[0].kernel.clone();
        kernel.zero_grad();
        g.backward(&loss).unwrap();
        let analytic = kernel.grad().expect("kernel gradient present");
        assert!(analytic.iter().any(|&g| g.abs() > 1e-9), "attention signal never reached block 0");

        // the live normalization yields the same gradient at the base point
        {
            let g2 = GradGraph::recording();
            let (_, features) = net.forward(&g2, &batch, false, 0).unwrap();
            let cam = net.cam_graph(&g2, &features).unwrap();
            let norm = normalize_cam_graph(&g2, &cam).unwrap();
            let loss2 = attention_loss_graph(&g2, &norm, std::slice::from_ref(&mask), &config)
                .unwrap();
            kernel.zero_grad();
            g2.backward(&loss2).unwrap();
            let live = kernel.grad().unwrap();
            for (a, b) in analytic.iter().zip(live.iter()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }

        // central differences on a few kernel entries
        let h = 1e-5;
        let base = kernel.to_vec();
        for &idx in &[0usize, 7, base.len() - 1] {
            let mut bumped = base.clone();
            bumped[idx] = base[idx] + h;
            kernel.set_data(&bumped).unwrap();
            let up = loss_in(&GradGraph::inference()).item();
            bumped[idx] = base[idx] - h;
            kernel.set_data(&bumped).unwrap();
            let down = loss_in(&GradGraph::inference()).item();
            kernel.set_data(&base).unwrap();
            let numeric = (up - down) / (2.0 * h);
            assert!(
                (analytic[idx] - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()),
                "kernel[{idx}]: analytic {} vs numeric {numeric}",
                analytic[idx]
            );
        }
    }
}
