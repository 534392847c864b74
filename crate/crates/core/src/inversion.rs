//! Joint inversion of a frame sequence.
//!
//! With mutually accessible codes (MAC) the optimisation variables are a base
//! code `w1` and per-step directions `n_1..n_{T-1}`; frame `b` (0-based) is
//! rendered from `w1 + n_1 + … + n_b`. Without MAC every frame owns an
//! independent code. The inversion consistency (ICC) term can be switched off
//! independently, which gives the four ablation variants.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::{adam_step_in_place, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::formats;
use crate::generator::{ForwardTrace, Generator, LatentCode, SemanticDirection};
use crate::objective::{
    precompute_flows, FeatureExtractor, FlowTable, LossReport, LossWeights, Objective,
};
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// MAC and ICC.
    Full,
    /// Independent codes, ICC kept.
    NoMac,
    /// MAC only.
    NoIcc,
    /// Independent codes, no ICC: plain per-image optimisation.
    Baseline,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoMac,
        Variant::NoIcc,
        Variant::Baseline,
    ];

    pub fn uses_mac(self) -> bool {
        matches!(self, Variant::Full | Variant::NoIcc)
    }

    pub fn uses_icc(self) -> bool {
        matches!(self, Variant::Full | Variant::NoMac)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMac => "no_mac",
            Variant::NoIcc => "no_icc",
            Variant::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionConfig {
    pub variant: Variant,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub flow: FlowParams,
    /// Seed for the mean-latent initialisation draws.
    pub init_seed: u64,
    /// Number of prior samples averaged for the initial code.
    pub mean_samples: usize,
    pub feature_seed: u64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            flow: FlowParams::default(),
            init_seed: 0,
            mean_samples: 10_000,
            feature_seed: 1,
        }
    }
}

impl InversionConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.adam.steps = steps;
        self
    }

    /// Loss weights after the variant mask and the single-frame rule.
    pub fn effective_weights(&self, frames: usize) -> LossWeights {
        let mut w = self.weights.clone();
        if !self.variant.uses_icc() || frames < 2 {
            w.lambda_icc = 0.0;
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.adam.validate()?;
        self.flow.validate()?;
        if self.mean_samples == 0 {
            return Err(Error::invalid("mean_samples must be >= 1"));
        }
        Ok(())
    }
}

/// `w1` plus the first `k` directions, summed in index order.
pub fn compose_codes<T: Scalar>(
    w1: &LatentCode<T>,
    dirs: &[SemanticDirection<T>],
    k: usize,
) -> Result<LatentCode<T>> {
    if k > dirs.len() {
        return Err(Error::invalid(format!(
            "K = {k} exceeds {} directions",
            dirs.len()
        )));
    }
    let mut acc = w1.0.clone();
    for d in &dirs[..k] {
        if d.dim() != acc.len() {
            return Err(Error::shape(format!(
                "direction dim {} vs code dim {}",
                d.dim(),
                acc.len()
            )));
        }
        for (a, &v) in acc.iter_mut().zip(&d.0) {
            *a = *a + v;
        }
    }
    Ok(LatentCode(acc))
}

/// Flat optimisation vector plus its interpretation.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub mac: bool,
    pub dim: usize,
    /// MAC: `w1 ‖ n_1 ‖ … ‖ n_{T-1}`; otherwise `w_0 ‖ … ‖ w_{T-1}`.
    pub values: Vec<T>,
}

impl<T: Scalar> Params<T> {
    pub fn from_mac(w1: &LatentCode<T>, dirs: &[SemanticDirection<T>]) -> Self {
        let mut values = w1.0.clone();
        for d in dirs {
            values.extend_from_slice(&d.0);
        }
        Self {
            mac: true,
            dim: w1.dim(),
            values,
        }
    }

    pub fn from_codes(codes: &[LatentCode<T>]) -> Self {
        let dim = codes.first().map_or(0, |c| c.dim());
        Self {
            mac: false,
            dim,
            values: codes.iter().flat_map(|c| c.0.iter().copied()).collect(),
        }
    }

    pub fn frames(&self) -> usize {
        self.values.len() / self.dim
    }

    fn block(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn w1(&self) -> LatentCode<T> {
        LatentCode(self.block(0).to_vec())
    }

    pub fn directions(&self) -> Vec<SemanticDirection<T>> {
        if !self.mac {
            return Vec::new();
        }
        (1..self.frames())
            .map(|i| SemanticDirection(self.block(i).to_vec()))
            .collect()
    }

    pub fn codes(&self) -> Vec<LatentCode<T>> {
        if self.mac {
            let w1 = self.w1();
            let dirs = self.directions();
            (0..self.frames())
                .map(|k| compose_codes(&w1, &dirs, k).expect("consistent blocks"))
                .collect()
        } else {
            (0..self.frames())
                .map(|i| LatentCode(self.block(i).to_vec()))
                .collect()
        }
    }

    /// Maps per-frame code gradients to parameter gradients.
    pub fn chain(&self, code_grads: &[Vec<T>]) -> Vec<T> {
        if !self.mac {
            return code_grads.iter().flat_map(|g| g.iter().copied()).collect();
        }
        // direction k influences frames k..T-1: suffix sums, w1 gets the total
        let t = code_grads.len();
        let mut out = vec![T::zero(); t * self.dim];
        let mut suffix = vec![T::zero(); self.dim];
        for b in (0..t).rev() {
            for (s, &g) in suffix.iter_mut().zip(&code_grads[b]) {
                *s = *s + g;
            }
            out[b * self.dim..(b + 1) * self.dim].copy_from_slice(&suffix);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct InversionResult<T> {
    pub variant: Variant,
    pub w1: LatentCode<T>,
    pub directions: Vec<SemanticDirection<T>>,
    pub per_frame_codes: Vec<LatentCode<T>>,
    pub reconstructions: Vec<ImageTensor<T>>,
    /// Loss at the parameters entering each step.
    pub loss_trace: Vec<LossReport<T>>,
}

/// An input sequence bound to a generator and configuration; evaluates the
/// objective and its gradient at arbitrary parameters.
pub struct InversionProblem<'g, T> {
    generator: &'g Generator<T>,
    config: InversionConfig,
    objective: Objective<T>,
}

impl<'g, T: Scalar> InversionProblem<'g, T> {
    pub fn new(
        images: &[ImageTensor<T>],
        generator: &'g Generator<T>,
        config: &InversionConfig,
    ) -> Result<Self> {
        config.validate()?;
        if images.is_empty() {
            return Err(Error::invalid("no input frames"));
        }
        let shape = generator.output_shape();
        for (i, img) in images.iter().enumerate() {
            if img.shape() != shape {
                return Err(Error::shape(format!(
                    "frame {i} has shape {:?}, generator produces {shape:?}",
                    img.shape()
                )));
            }
        }
        let weights = config.effective_weights(images.len());
        let flows = if weights.lambda_icc > 0.0 {
            precompute_flows(images, &config.flow)?
        } else {
            FlowTable::default()
        };
        let fx = FeatureExtractor::new(shape.2, config.feature_seed);
        let objective = Objective::new(images.to_vec(), flows, fx, weights)?;
        Ok(Self {
            generator,
            config: config.clone(),
            objective,
        })
    }

    pub fn frames(&self) -> usize {
        self.objective.inputs().len()
    }

    pub fn config(&self) -> &InversionConfig {
        &self.config
    }

    /// Mean latent for `w1` (or every code without MAC), zero directions.
    pub fn initial_params(&self) -> Params<T> {
        let mean = self
            .generator
            .mean_latent(self.config.mean_samples, self.config.init_seed);
        let t = self.frames();
        if self.config.variant.uses_mac() {
            let dirs = vec![SemanticDirection::zeros(mean.dim()); t - 1];
            Params::from_mac(&mean, &dirs)
        } else {
            Params::from_codes(&vec![mean; t])
        }
    }

    fn render(&self, codes: &[LatentCode<T>]) -> Result<Vec<ForwardTrace<T>>> {
        codes
            .par_iter()
            .map(|c| self.generator.forward(c))
            .collect()
    }

    /// Objective value and gradient with respect to `params.values`.
    pub fn evaluate(&self, params: &Params<T>) -> Result<(LossReport<T>, Vec<T>)> {
        self.check_params(params)?;
        let codes = params.codes();
        let traces = self.render(&codes)?;
        let outputs: Vec<_> = traces
            .iter()
            .map(|t| self.generator.trace_image(t))
            .collect();
        let (report, image_grads) = self.objective.evaluate(&outputs)?;
        let code_grads = traces
            .par_iter()
            .zip(&image_grads)
            .map(|(t, g)| self.generator.backward(t, g))
            .collect::<Result<Vec<_>>>()?;
        Ok((report, params.chain(&code_grads)))
    }

    fn check_params(&self, params: &Params<T>) -> Result<()> {
        if params.dim != self.generator.latent_dim()
            || params.values.len() != params.dim * self.frames()
        {
            return Err(Error::shape(format!(
                "parameter vector of {} values (dim {}) does not fit {} frames of dim {}",
                params.values.len(),
                params.dim,
                self.frames(),
                self.generator.latent_dim()
            )));
        }
        Ok(())
    }

    /// Runs `config.adam.steps` Adam iterations from `params`.
    pub fn optimize(&self, mut params: Params<T>) -> Result<InversionResult<T>> {
        self.check_params(&params)?;
        let mut state = AdamState::new(params.values.len());
        let mut trace = Vec::with_capacity(self.config.adam.steps);
        for step in 0..self.config.adam.steps {
            let (report, grad) = self.evaluate(&params)?;
            if !report.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("loss at step {step}")));
            }
            trace.push(report);
            adam_step_in_place(&mut params.values, &grad, &mut state, &self.config.adam)?;
        }
        self.finish(params, trace)
    }

    fn finish(
        &self,
        params: Params<T>,
        loss_trace: Vec<LossReport<T>>,
    ) -> Result<InversionResult<T>> {
        let per_frame_codes = params.codes();
        let reconstructions = per_frame_codes
            .iter()
            .map(|c| self.generator.generate(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(InversionResult {
            variant: self.config.variant,
            w1: params.w1(),
            directions: params.directions(),
            per_frame_codes,
            reconstructions,
            loss_trace,
        })
    }
}

/// Inverts `images` from the default initialisation.
pub fn invert_sequence<T: Scalar>(
    images: &[ImageTensor<T>],
    generator: &Generator<T>,
    config: &InversionConfig,
) -> Result<InversionResult<T>> {
    let problem = InversionProblem::new(images, generator, config)?;
    let init = problem.initial_params();
    problem.optimize(init)
}

/// Writes a result bundle: latent files, reconstructions with previews, the
/// loss trace and a manifest.
pub fn write_bundle<T: Scalar>(
    result: &InversionResult<T>,
    dir: impl AsRef<Path>,
    manifest: &serde_json::Value,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    formats::write_latent(dir.join("w1.lat"), &result.w1)?;
    for (k, d) in result.directions.iter().enumerate() {
        formats::write_direction(dir.join(format!("dir_{}.lat", k + 1)), d)?;
    }
    for (b, (code, img)) in result
        .per_frame_codes
        .iter()
        .zip(&result.reconstructions)
        .enumerate()
    {
        formats::write_latent(dir.join(format!("code_{b}.lat")), code)?;
        formats::write_tnsr(dir.join(format!("recon_{b}.tnsr")), img)?;
        formats::write_ppm(dir.join(format!("recon_{b}.ppm")), img)?;
    }
    let mut csv = String::from("step,total,icc,pixel,perceptual\n");
    for (i, r) in result.loss_trace.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{}\n",
            r.total.as_f64(),
            r.icc.as_f64(),
            r.pixel.as_f64(),
            r.perceptual.as_f64()
        ));
    }
    std::fs::write(dir.join("trace.csv"), csv)?;
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(manifest)? + "\n",
    )?;
    Ok(())
}

/// Reads `w1.lat` and `dir_<k>.lat` back from a bundle directory.
pub fn read_bundle_directions<T: Scalar>(
    dir: impl AsRef<Path>,
) -> Result<(LatentCode<T>, Vec<SemanticDirection<T>>)> {
    let dir = dir.as_ref();
    let w1 = formats::read_latent(dir.join("w1.lat"))?;
    let mut dirs = Vec::new();
    loop {
        let p = dir.join(format!("dir_{}.lat", dirs.len() + 1));
        if !p.exists() {
            break;
        }
        dirs.push(formats::read_direction(p)?);
    }
    Ok((w1, dirs))
}

/// Timed wrapper used by the evaluation harness.
pub(crate) fn invert_timed<T: Scalar>(
    images: &[ImageTensor<T>],
    generator: &Generator<T>,
    config: &InversionConfig,
) -> Result<(InversionResult<T>, f64)> {
    let start = Instant::now();
    let r = invert_sequence(images, generator, config)?;
    Ok((r, start.elapsed().as_secs_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::GeneratorSpec;

    fn tiny() -> Generator<f64> {
        Generator::build(&GeneratorSpec {
            latent_dim: 4,
            hidden_dims: vec![8],
            height: 8,
            width: 8,
            channels: 1,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn compose_examples() {
        let w1 = LatentCode(vec![1.0, 0.0]);
        let dirs = vec![
            SemanticDirection(vec![0.0, 1.0]),
            SemanticDirection(vec![2.0, 0.0]),
        ];
        assert_eq!(compose_codes(&w1, &dirs, 0).unwrap(), w1);
        assert_eq!(compose_codes(&w1, &dirs, 2).unwrap().0, vec![3.0, 1.0]);
        let zeros = vec![SemanticDirection::zeros(2); 3];
        for k in 0..=3 {
            assert_eq!(compose_codes(&w1, &zeros, k).unwrap(), w1);
        }
        assert!(compose_codes(&w1, &dirs, 3).is_err());
        assert!(compose_codes(&w1, &[SemanticDirection(vec![1.0])], 1).is_err());
    }

    #[test]
    fn chain_sums_suffixes() {
        let p = Params::from_mac(
            &LatentCode(vec![0.0]),
            &[SemanticDirection(vec![0.0]), SemanticDirection(vec![0.0])],
        );
        let g = p.chain(&[vec![1.0], vec![10.0], vec![100.0]]);
        assert_eq!(g, vec![111.0, 110.0, 100.0]);
        let q = Params::from_codes(&[LatentCode(vec![0.0]), LatentCode(vec![0.0])]);
        assert_eq!(q.chain(&[vec![1.0], vec![2.0]]), vec![1.0, 2.0]);
    }

    #[test]
    fn variant_flags_and_parsing() {
        assert!(Variant::Full.uses_mac() && Variant::Full.uses_icc());
        assert!(!Variant::Baseline.uses_mac() && !Variant::Baseline.uses_icc());
        assert_eq!("no_icc".parse::<Variant>().unwrap(), Variant::NoIcc);
        assert!("nope".parse::<Variant>().is_err());
        let cfg = InversionConfig::default().with_variant(Variant::NoIcc);
        assert_eq!(cfg.effective_weights(5).lambda_icc, 0.0);
        assert_eq!(
            InversionConfig::default().effective_weights(1).lambda_icc,
            0.0
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = tiny();
        let cfg = InversionConfig::default().with_steps(1);
        assert!(invert_sequence::<f64>(&[], &g, &cfg).is_err());
        assert!(invert_sequence(&[ImageTensor::zeros(4, 4, 1)], &g, &cfg).is_err());
    }

    #[test]
    fn single_frame_baseline_runs_without_icc() {
        let g = tiny();
        let target = g.generate(&LatentCode(vec![0.5, -0.3, 0.2, 0.8])).unwrap();
        let cfg = InversionConfig::default()
            .with_variant(Variant::Baseline)
            .with_steps(50);
        let r = invert_sequence(&[target], &g, &cfg).unwrap();
        assert_eq!(r.loss_trace.len(), 50);
        assert!(r.loss_trace.iter().all(|l| l.icc == 0.0));
        assert!(r.loss_trace.last().unwrap().total < r.loss_trace[0].total);
        assert!(r.directions.is_empty());
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        // all weights zero: gradient vanishes and Adam must not move
        let g = tiny();
        let frames: Vec<_> = (0..2).map(|_| ImageTensor::zeros(8, 8, 1)).collect();
        let mut cfg = InversionConfig::default().with_steps(20);
        cfg.weights = LossWeights {
            lambda_icc: 0.0,
            lambda_c: 0.0,
            lambda_p: 0.0,
        };
        let problem = InversionProblem::new(&frames, &g, &cfg).unwrap();
        let init = problem.initial_params();
        let r = problem.optimize(init.clone()).unwrap();
        assert_eq!(Params::from_mac(&r.w1, &r.directions), init);
    }
}
