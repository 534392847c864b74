//! Loss terms over a sequence of reconstructions: flow-warp inversion
//! consistency, pixel MSE and a multi-scale feature (perceptual) loss. Every
//! term returns its value together with the gradient image for each output.
//!
//! All `‖·‖` distances are per-frame mean squared errors.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{estimate_flow, warp, warp_adjoint, FlowParams, WarpPlan};
use crate::scalar::Scalar;
use crate::tensor::{FlowField, ImageTensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_icc: f64,
    pub lambda_c: f64,
    pub lambda_p: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_icc: 1.0,
            lambda_c: 1.0,
            lambda_p: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_icc", self.lambda_icc),
            ("lambda_c", self.lambda_c),
            ("lambda_p", self.lambda_p),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Value of each term plus the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport<T> {
    pub total: T,
    pub icc: T,
    pub pixel: T,
    pub perceptual: T,
}

/// Per-output gradient images, one per frame.
pub type FrameGrads<T> = Vec<ImageTensor<T>>;

/// Flows for every ordered frame pair `(from, to)`, with
/// `warp(frames[from], flow) ≈ frames[to]`.
#[derive(Clone, Debug, Default)]
pub struct FlowTable<T> {
    flows: BTreeMap<(usize, usize), FlowField<T>>,
}

impl<T: Scalar> FlowTable<T> {
    pub fn get(&self, from: usize, to: usize) -> Option<&FlowField<T>> {
        self.flows.get(&(from, to))
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &FlowField<T>)> {
        self.flows.iter()
    }

    pub fn insert(&mut self, from: usize, to: usize, flow: FlowField<T>) {
        self.flows.insert((from, to), flow);
    }

    fn require(&self, from: usize, to: usize) -> Result<&FlowField<T>> {
        self.get(from, to).ok_or_else(|| {
            Error::invalid(format!("flow table has no entry for pair ({from}, {to})"))
        })
    }
}

fn check_frames<T: Scalar>(inputs: &[ImageTensor<T>], outputs: &[ImageTensor<T>]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::invalid("no frames"));
    }
    if inputs.len() != outputs.len() {
        return Err(Error::shape(format!(
            "{} inputs vs {} outputs",
            inputs.len(),
            outputs.len()
        )));
    }
    for (i, o) in inputs.iter().zip(outputs) {
        i.check_same_shape(o, "input/output frame")?;
        inputs[0].check_same_shape(i, "frame sequence")?;
    }
    Ok(())
}

/// Estimates flows for all `T·(T−1)` ordered pairs. Pairs are independent
/// and computed in parallel; the table is keyed, so order does not matter.
pub fn precompute_flows<T: Scalar>(
    frames: &[ImageTensor<T>],
    params: &FlowParams,
) -> Result<FlowTable<T>> {
    if frames.len() < 2 {
        return Err(Error::invalid(format!(
            "flow table needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    for f in frames {
        frames[0].check_same_shape(f, "frame sequence")?;
    }
    let pairs: Vec<(usize, usize)> = (0..frames.len())
        .flat_map(|a| {
            (0..frames.len())
                .filter(move |&b| b != a)
                .map(move |b| (a, b))
        })
        .collect();
    let flows = pairs
        .par_iter()
        .map(|&(a, b)| estimate_flow(&frames[a], &frames[b], params).map(|f| ((a, b), f)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(FlowTable { flows })
}

fn mse_and_grad<T: Scalar>(
    output: &ImageTensor<T>,
    target: &ImageTensor<T>,
) -> (T, ImageTensor<T>) {
    let n = T::from_usize(output.len()).unwrap();
    let two_over_n = T::lit(2.0) / n;
    let mut grad = output.clone();
    let mut sum = T::zero();
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - t;
        sum = sum + d * d;
        *g = d * two_over_n;
    }
    (sum / n, grad)
}

fn zero_grads<T: Scalar>(like: &[ImageTensor<T>]) -> FrameGrads<T> {
    like.iter()
        .map(|o| {
            let (h, w, c) = o.shape();
            ImageTensor::zeros(h, w, c)
        })
        .collect()
}

/// The `(base, flow)` residual terms of the consistency loss, in accumulation
/// order: for every base `b` and offset `k ≠ 0`, the forward term warps frame
/// `b` by `f_{b⇒b+k}` and the backward term warps frame `b+k` by `f_{b+k⇒b}`.
fn icc_terms(frames: usize) -> Vec<(usize, usize, usize)> {
    let mut terms = Vec::new();
    for b in 0..frames {
        for c in 0..frames {
            if c == b {
                continue;
            }
            terms.push((b, b, c));
            terms.push((c, c, b));
        }
    }
    terms
}

/// Inversion consistency loss. Warped inputs are constants; gradients reach
/// the outputs only through [`warp_adjoint`].
pub fn loss_icc<T: Scalar>(
    inputs: &[ImageTensor<T>],
    outputs: &[ImageTensor<T>],
    flows: &FlowTable<T>,
) -> Result<(T, FrameGrads<T>)> {
    check_frames(inputs, outputs)?;
    let mut grads = zero_grads(outputs);
    let mut total = T::zero();
    for (frame, from, to) in icc_terms(inputs.len()) {
        let flow = flows.require(from, to)?;
        let warped_in = warp(&inputs[frame], flow)?;
        let warped_out = warp(&outputs[frame], flow)?;
        let (v, g) = mse_and_grad(&warped_out, &warped_in);
        total = total + v;
        grads[frame].add_scaled(T::one(), &warp_adjoint(&g, flow)?)?;
    }
    Ok((total, grads))
}

/// Sum over frames of per-frame MSE.
pub fn loss_pixel<T: Scalar>(
    inputs: &[ImageTensor<T>],
    outputs: &[ImageTensor<T>],
) -> Result<(T, FrameGrads<T>)> {
    check_frames(inputs, outputs)?;
    let mut total = T::zero();
    let grads = inputs
        .iter()
        .zip(outputs)
        .map(|(i, o)| {
            let (v, g) = mse_and_grad(o, i);
            total = total + v;
            g
        })
        .collect();
    Ok((total, grads))
}

/// Number of filters in every feature stage.
pub const FEATURE_FILTERS: usize = 8;
/// Downsampling factor applied before each stage's filter bank.
pub const FEATURE_FACTORS: [usize; 4] = [1, 1, 4, 8];

#[derive(Clone, Debug)]
struct FeatureStage<T> {
    factor: usize,
    in_channels: usize,
    /// `[filter][ky][kx][in_channel]`
    kernels: Vec<T>,
}

/// Pre-activation and post-ReLU responses of one stage.
#[derive(Clone, Debug)]
pub struct FeatureMap<T> {
    pre: ImageTensor<T>,
    post: ImageTensor<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn activations(&self) -> &ImageTensor<T> {
        &self.post
    }

    /// Convolution responses before the ReLU.
    pub fn pre_activations(&self) -> &ImageTensor<T> {
        &self.pre
    }
}

impl<T: Scalar> FeatureStage<T> {
    /// Copies the replicate-padded 3×3 neighbourhood of `(x, y)` into
    /// `patch` in `[ky][kx][c]` order.
    fn gather(src: &[T], w: usize, h: usize, ch: usize, x: usize, y: usize, patch: &mut [T]) {
        let mut j = 0;
        for sy in neighbours(y, h) {
            for sx in neighbours(x, w) {
                patch[j..j + ch].copy_from_slice(&src[(sy * w + sx) * ch..][..ch]);
                j += ch;
            }
        }
    }

    fn forward(&self, image: &ImageTensor<T>) -> Result<FeatureMap<T>> {
        let x = image.downsample(self.factor)?;
        let (h, w, ch) = x.shape();
        let src = x.data();
        let taps = 9 * ch;
        let mut patch = vec![T::zero(); taps];
        let mut pre = vec![T::zero(); h * w * FEATURE_FILTERS];
        for y in 0..h {
            for xx in 0..w {
                Self::gather(src, w, h, ch, xx, y, &mut patch);
                let out = &mut pre[(y * w + xx) * FEATURE_FILTERS..][..FEATURE_FILTERS];
                for (acc, kernel) in out.iter_mut().zip(self.kernels.chunks_exact(taps)) {
                    *acc = kernel
                        .iter()
                        .zip(&patch)
                        .fold(T::zero(), |a, (&k, &v)| a + k * v);
                }
            }
        }
        let pre = ImageTensor::new(h, w, FEATURE_FILTERS, pre)?;
        let post = pre.map(|v| v.max(T::zero()));
        Ok(FeatureMap { pre, post })
    }

    /// Pulls a gradient on the post-ReLU features back to the stage input.
    fn backward(&self, map: &FeatureMap<T>, upstream: &ImageTensor<T>) -> ImageTensor<T> {
        let (h, w, _) = map.pre.shape();
        let ch = self.in_channels;
        let taps = 9 * ch;
        let (pre, up) = (map.pre.data(), upstream.data());
        let mut patch = vec![T::zero(); taps];
        let mut gx = vec![T::zero(); h * w * ch];
        for y in 0..h {
            for xx in 0..w {
                let base = (y * w + xx) * FEATURE_FILTERS;
                patch.fill(T::zero());
                let mut active = false;
                for (f, kernel) in self.kernels.chunks_exact(taps).enumerate() {
                    if pre[base + f] <= T::zero() {
                        continue;
                    }
                    active = true;
                    let g = up[base + f];
                    for (p, &k) in patch.iter_mut().zip(kernel) {
                        *p = *p + k * g;
                    }
                }
                if !active {
                    continue;
                }
                let mut j = 0;
                for sy in neighbours(y, h) {
                    for sx in neighbours(xx, w) {
                        let dst = &mut gx[(sy * w + sx) * ch..][..ch];
                        for (d, &p) in dst.iter_mut().zip(&patch[j..j + ch]) {
                            *d = *d + p;
                        }
                        j += ch;
                    }
                }
            }
        }
        ImageTensor::new(h, w, ch, gx)
            .expect("feature gradient shape")
            .downsample_adjoint(self.factor)
    }
}

/// Draws filters in `[filter][in_channel][ky][kx]` order and stores them as
/// `[filter][ky][kx][in_channel]`.
fn draw_kernels<T: Scalar>(rng: &mut ChaCha8Rng, channels: usize, scale: f64) -> Vec<T> {
    let drawn: Vec<f64> = (0..FEATURE_FILTERS * channels * 9)
        .map(|_| StandardNormal.sample(&mut *rng))
        .collect();
    let mut kernels = vec![T::zero(); drawn.len()];
    for f in 0..FEATURE_FILTERS {
        for c in 0..channels {
            for t in 0..9 {
                kernels[(f * 9 + t) * channels + c] =
                    T::lit(drawn[(f * channels + c) * 9 + t] * scale);
            }
        }
    }
    kernels
}

/// Replicate-padded neighbour indices `[i−1, i, i+1]`.
#[inline]
fn neighbours(i: usize, size: usize) -> [usize; 3] {
    [clamp_index(i, 0, size), i, clamp_index(i, 2, size)]
}

#[inline]
fn clamp_index(center: usize, tap: usize, size: usize) -> usize {
    (center + tap).saturating_sub(1).min(size - 1)
}

/// Fixed random multi-scale feature bank standing in for a pretrained
/// perceptual network: four stages of `downsample → 3×3 conv (8 filters) →
/// ReLU`, applied to the image independently.
#[derive(Clone, Debug)]
pub struct FeatureExtractor<T> {
    seed: u64,
    channels: usize,
    stages: Vec<FeatureStage<T>>,
}

impl<T: Scalar> FeatureExtractor<T> {
    pub fn new(channels: usize, seed: u64) -> Self {
        assert!(channels >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / ((9 * channels) as f64).sqrt();
        let stages = FEATURE_FACTORS
            .iter()
            .map(|&factor| FeatureStage {
                factor,
                in_channels: channels,
                kernels: draw_kernels(&mut rng, channels, scale),
            })
            .collect();
        Self {
            seed,
            channels,
            stages,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn check_image(&self, image: &ImageTensor<T>) -> Result<()> {
        let (h, w, c) = image.shape();
        let coarsest = *FEATURE_FACTORS.iter().max().unwrap();
        if c != self.channels {
            return Err(Error::shape(format!(
                "feature extractor built for {} channels, image has {c}",
                self.channels
            )));
        }
        if h % coarsest != 0 || w % coarsest != 0 {
            return Err(Error::shape(format!(
                "feature extractor needs dimensions divisible by {coarsest}, got {h}x{w}"
            )));
        }
        Ok(())
    }

    pub fn features(&self, image: &ImageTensor<T>) -> Result<Vec<FeatureMap<T>>> {
        self.check_image(image)?;
        self.stages.iter().map(|s| s.forward(image)).collect()
    }

    /// `(1/4)·Σ_stages mse(features(output), target)` and its gradient with
    /// respect to `output`.
    pub fn loss_against(
        &self,
        output: &ImageTensor<T>,
        target: &[FeatureMap<T>],
    ) -> Result<(T, ImageTensor<T>)> {
        let maps = self.features(output)?;
        let inv_stages = T::one() / T::from_usize(self.stages.len()).unwrap();
        let (h, w, c) = output.shape();
        let mut grad = ImageTensor::zeros(h, w, c);
        let mut total = T::zero();
        for ((stage, map), t) in self.stages.iter().zip(&maps).zip(target) {
            let (v, mut g) = mse_and_grad(&map.post, &t.post);
            total = total + v * inv_stages;
            g.scale(inv_stages);
            grad.add_scaled(T::one(), &stage.backward(map, &g))?;
        }
        Ok((total, grad))
    }
}

/// Multi-scale feature loss summed over frames.
pub fn loss_perceptual<T: Scalar>(
    inputs: &[ImageTensor<T>],
    outputs: &[ImageTensor<T>],
    fx: &FeatureExtractor<T>,
) -> Result<(T, FrameGrads<T>)> {
    check_frames(inputs, outputs)?;
    let mut total = T::zero();
    let mut grads = Vec::with_capacity(outputs.len());
    for (i, o) in inputs.iter().zip(outputs) {
        let target = fx.features(i)?;
        let (v, g) = fx.loss_against(o, &target)?;
        total = total + v;
        grads.push(g);
    }
    Ok((total, grads))
}

/// Weighted sum of the three terms. Terms with zero weight are skipped and
/// reported as 0.
pub fn total_loss<T: Scalar>(
    inputs: &[ImageTensor<T>],
    outputs: &[ImageTensor<T>],
    flows: &FlowTable<T>,
    fx: &FeatureExtractor<T>,
    weights: &LossWeights,
) -> Result<(LossReport<T>, FrameGrads<T>)> {
    Objective::new(inputs.to_vec(), flows.clone(), fx.clone(), weights.clone())?.evaluate(outputs)
}

/// Loss evaluator with the input-side quantities (warped inputs, input
/// features) cached, for repeated evaluation inside an optimizer loop.
#[derive(Clone, Debug)]
pub struct Objective<T> {
    inputs: Vec<ImageTensor<T>>,
    fx: FeatureExtractor<T>,
    weights: LossWeights,
    warped_inputs: Vec<ImageTensor<T>>,
    plans: Vec<WarpPlan<T>>,
    input_features: Vec<Vec<FeatureMap<T>>>,
}

impl<T: Scalar> Objective<T> {
    pub fn new(
        inputs: Vec<ImageTensor<T>>,
        flows: FlowTable<T>,
        fx: FeatureExtractor<T>,
        weights: LossWeights,
    ) -> Result<Self> {
        weights.validate()?;
        check_frames(&inputs, &inputs)?;
        let (plans, warped_inputs) = if weights.lambda_icc > 0.0 && inputs.len() > 1 {
            let plans = icc_terms(inputs.len())
                .into_iter()
                .map(|(frame, from, to)| {
                    let flow = flows.require(from, to)?;
                    warp(&inputs[frame], flow)?;
                    Ok(WarpPlan::new(flow))
                })
                .collect::<Result<Vec<_>>>()?;
            let warped = icc_terms(inputs.len())
                .into_iter()
                .zip(&plans)
                .map(|((frame, _, _), plan)| plan.apply(&inputs[frame]))
                .collect();
            (plans, warped)
        } else {
            (Vec::new(), Vec::new())
        };
        let input_features = if weights.lambda_p > 0.0 {
            inputs
                .iter()
                .map(|i| fx.features(i))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self {
            inputs,
            fx,
            weights,
            warped_inputs,
            plans,
            input_features,
        })
    }

    pub fn inputs(&self) -> &[ImageTensor<T>] {
        &self.inputs
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn evaluate(&self, outputs: &[ImageTensor<T>]) -> Result<(LossReport<T>, FrameGrads<T>)> {
        check_frames(&self.inputs, outputs)?;
        let (l_icc, l_c, l_p) = (
            T::lit(self.weights.lambda_icc),
            T::lit(self.weights.lambda_c),
            T::lit(self.weights.lambda_p),
        );
        let mut report = LossReport::default();
        let mut grads = zero_grads(outputs);

        if !self.warped_inputs.is_empty() {
            let terms = icc_terms(outputs.len());
            for (((frame, _, _), warped_in), plan) in
                terms.into_iter().zip(&self.warped_inputs).zip(&self.plans)
            {
                let warped_out = plan.apply(&outputs[frame]);
                let (v, mut g) = mse_and_grad(&warped_out, warped_in);
                report.icc = report.icc + v;
                g.scale(l_icc);
                grads[frame].add_scaled(T::one(), &plan.adjoint(&g))?;
            }
        }

        if self.weights.lambda_c > 0.0 {
            for ((o, i), grad) in outputs.iter().zip(&self.inputs).zip(grads.iter_mut()) {
                let (v, g) = mse_and_grad(o, i);
                report.pixel = report.pixel + v;
                grad.add_scaled(l_c, &g)?;
            }
        }

        if !self.input_features.is_empty() {
            for ((o, target), grad) in outputs
                .iter()
                .zip(&self.input_features)
                .zip(grads.iter_mut())
            {
                let (v, g) = self.fx.loss_against(o, target)?;
                report.perceptual = report.perceptual + v;
                grad.add_scaled(l_p, &g)?;
            }
        }

        report.total = l_icc * report.icc + l_c * report.pixel + l_p * report.perceptual;
        Ok((report, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(n: usize, h: usize, w: usize) -> Vec<ImageTensor<f64>> {
        (0..n)
            .map(|k| {
                ImageTensor::from_fn(h, w, 1, |x, y, _| {
                    (0.3 * (x as f64 - k as f64 * 0.5)).sin() * (0.25 * y as f64).cos() * 0.8
                })
            })
            .collect()
    }

    #[test]
    fn icc_term_count_for_two_frames() {
        assert_eq!(icc_terms(2).len(), 4);
        assert_eq!(icc_terms(5).len(), 40);
    }

    #[test]
    fn flow_table_sizes() {
        let f = frames(2, 8, 8);
        assert_eq!(
            precompute_flows(&f, &FlowParams::default()).unwrap().len(),
            2
        );
        let f = frames(5, 8, 8);
        assert_eq!(
            precompute_flows(&f, &FlowParams::default()).unwrap().len(),
            20
        );
        assert!(precompute_flows(&f[..1], &FlowParams::default()).is_err());
        let mut bad = frames(3, 8, 8);
        bad[1] = ImageTensor::zeros(8, 4, 1);
        assert!(precompute_flows(&bad, &FlowParams::default()).is_err());
    }

    #[test]
    fn duplicate_frames_have_zero_flows() {
        let f = vec![frames(1, 16, 16)[0].clone(); 3];
        let table = precompute_flows(&f, &FlowParams::default()).unwrap();
        for (_, flow) in table.iter() {
            assert!(flow.u().iter().chain(flow.v()).all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn perfect_reconstruction_is_zero_everywhere() {
        let f = frames(3, 8, 8);
        let table = precompute_flows(&f, &FlowParams::default()).unwrap();
        let fx = FeatureExtractor::new(1, 3);
        let (icc, g) = loss_icc(&f, &f, &table).unwrap();
        assert_eq!(icc, 0.0);
        assert!(g.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
        assert_eq!(loss_pixel(&f, &f).unwrap().0, 0.0);
        assert_eq!(loss_perceptual(&f, &f, &fx).unwrap().0, 0.0);
        let (rep, _) = total_loss(&f, &f, &table, &fx, &LossWeights::default()).unwrap();
        assert_eq!(rep.total, 0.0);
    }

    #[test]
    fn missing_flow_pair_is_an_error() {
        let f = frames(3, 8, 8);
        let mut table = FlowTable::default();
        table.insert(0, 1, FlowField::zeros(8, 8));
        assert!(loss_icc(&f, &f, &table).is_err());
    }

    #[test]
    fn pixel_loss_arithmetic() {
        let a = ImageTensor::<f64>::zeros(32, 32, 1);
        let mut b = a.clone();
        b.set(3, 4, 0, 0.5);
        let (v, g) = loss_pixel(&[a], &[b]).unwrap();
        assert_eq!(v, 0.25 / 1024.0);
        assert_eq!(g[0].get(3, 4, 0), 2.0 * 0.5 / 1024.0);
    }

    #[test]
    fn pixel_loss_matches_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mk = |rng: &mut ChaCha8Rng| {
            ImageTensor::from_fn(4, 5, 2, |_, _, _| rng.random_range(-1.0f64..1.0))
        };
        let ins: Vec<_> = (0..3).map(|_| mk(&mut rng)).collect();
        let outs: Vec<_> = (0..3).map(|_| mk(&mut rng)).collect();
        let mut expected = 0.0;
        for (i, o) in ins.iter().zip(&outs) {
            let mut s = 0.0;
            for k in 0..i.len() {
                s += (o.data()[k] - i.data()[k]).powi(2);
            }
            expected += s / 40.0;
        }
        let (v, _) = loss_pixel(&ins, &outs).unwrap();
        assert!((v - expected).abs() < 1e-14);
        assert!(loss_pixel(&ins, &outs[..2]).is_err());
    }

    #[test]
    fn extractor_deterministic_and_shape_checked() {
        let f = frames(2, 16, 16);
        let g = frames(2, 16, 16)
            .into_iter()
            .map(|i| i.map(|v| v * 0.5))
            .collect::<Vec<_>>();
        let a = loss_perceptual(&f, &g, &FeatureExtractor::new(1, 5))
            .unwrap()
            .0;
        let b = loss_perceptual(&f, &g, &FeatureExtractor::new(1, 5))
            .unwrap()
            .0;
        assert_eq!(a, b);
        assert!(a > 0.0);
        let odd = vec![ImageTensor::<f64>::zeros(12, 12, 1)];
        assert!(loss_perceptual(&odd, &odd, &FeatureExtractor::new(1, 5)).is_err());
    }

    #[test]
    fn weight_masking_and_decomposition() {
        let f = frames(3, 8, 8);
        let o: Vec<_> = f.iter().map(|i| i.map(|v| 0.9 * v + 0.05)).collect();
        let table = precompute_flows(&f, &FlowParams::default()).unwrap();
        let fx = FeatureExtractor::new(1, 3);
        let only_pixel = LossWeights {
            lambda_icc: 0.0,
            lambda_c: 1.0,
            lambda_p: 0.0,
        };
        let (rep, _) = total_loss(&f, &o, &table, &fx, &only_pixel).unwrap();
        assert_eq!(rep.total, loss_pixel(&f, &o).unwrap().0);

        let w = LossWeights {
            lambda_icc: 0.7,
            lambda_c: 1.3,
            lambda_p: 2.0,
        };
        let (rep, _) = total_loss(&f, &o, &table, &fx, &w).unwrap();
        let recomposed = 0.7 * rep.icc + 1.3 * rep.pixel + 2.0 * rep.perceptual;
        assert!((rep.total - recomposed).abs() <= 1e-12 * rep.total.abs());
        assert_eq!(rep.icc, loss_icc(&f, &o, &table).unwrap().0);
        assert!(LossWeights {
            lambda_c: -1.0,
            ..LossWeights::default()
        }
        .validate()
        .is_err());
    }
}
