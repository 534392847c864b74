//! Synthetic ground-truth sequences and the evaluation harness.
//!
//! Each sequence starts from a prior draw `w1`, moves along one unit
//! direction with per-step scales, and carries a held-out edit along a
//! second, orthogonal direction whose ground-truth result is rendered too.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::editing::{edit, EditSpec};
use crate::error::{Error, Result};
use crate::formats;
use crate::generator::{
    sample_latent, unit_gaussian, Generator, GeneratorSpec, LatentCode, SemanticDirection,
};
use crate::inversion::{invert_timed, InversionConfig, Params, Variant};
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

/// Bound on any single edit scale and on the cumulative offset of a sequence.
pub const ALPHA_RANGE: f64 = 3.0;
/// PSNR reported for identical images when a finite number is required.
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Clone, Debug)]
pub struct SyntheticSequence<T> {
    pub gt_w1: LatentCode<T>,
    pub gt_direction: SemanticDirection<T>,
    /// Per-step scales; frame `K` sits at `gt_w1 + (α_1 + … + α_K)·n`.
    pub alphas: Vec<T>,
    pub frames: Vec<ImageTensor<T>>,
    pub heldout: EditSpec<T>,
    pub heldout_image: ImageTensor<T>,
}

impl<T: Scalar> SyntheticSequence<T> {
    /// Ground-truth latent code of frame `k`.
    pub fn gt_code(&self, k: usize) -> LatentCode<T> {
        let offset: T = self.alphas[..k].iter().copied().sum();
        LatentCode(
            self.gt_w1
                .0
                .iter()
                .zip(&self.gt_direction.0)
                .map(|(&w, &n)| w + offset * n)
                .collect(),
        )
    }

    pub fn gt_codes(&self) -> Vec<LatentCode<T>> {
        (0..=self.alphas.len()).map(|k| self.gt_code(k)).collect()
    }

    /// Ground truth expressed as optimiser parameters (`w1`, `α_k·n`).
    pub fn gt_params(&self, mac: bool) -> Params<T> {
        if mac {
            let dirs: Vec<_> = self
                .alphas
                .iter()
                .map(|&a| SemanticDirection(self.gt_direction.0.iter().map(|&n| a * n).collect()))
                .collect();
            Params::from_mac(&self.gt_w1, &dirs)
        } else {
            Params::from_codes(&self.gt_codes())
        }
    }
}

/// Uniform per-step scales, shrunk when needed so every prefix sum stays in
/// `[-ALPHA_RANGE, ALPHA_RANGE]`.
fn draw_alphas(steps: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut alphas: Vec<f64> = (0..steps)
        .map(|_| rng.random_range(-ALPHA_RANGE..=ALPHA_RANGE))
        .collect();
    let mut acc = 0.0f64;
    let mut peak = 0.0f64;
    for a in &alphas {
        acc += a;
        peak = peak.max(acc.abs());
    }
    if peak > ALPHA_RANGE {
        let s = ALPHA_RANGE / peak;
        for a in &mut alphas {
            *a *= s;
        }
    }
    alphas
}

fn orthogonal_unit<T: Scalar>(
    against: &SemanticDirection<T>,
    rng: &mut impl Rng,
) -> SemanticDirection<T> {
    loop {
        let mut v = unit_gaussian::<T>(against.dim(), rng).0;
        let proj: T = v.iter().zip(&against.0).map(|(&a, &b)| a * b).sum();
        for (x, &n) in v.iter_mut().zip(&against.0) {
            *x = *x - proj * n;
        }
        let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm > T::lit(1e-6) {
            return SemanticDirection(v.into_iter().map(|x| x / norm).collect());
        }
    }
}

/// Generates `count` sequences of `frames` images. Sequence `i` draws from
/// its own ChaCha stream, so the dataset is a pure function of the
/// generator and `seed`.
pub fn synth_dataset<T: Scalar>(
    generator: &Generator<T>,
    count: usize,
    frames: usize,
    seed: u64,
) -> Result<Vec<SyntheticSequence<T>>> {
    if count == 0 {
        return Err(Error::invalid("dataset needs at least one sequence"));
    }
    if frames < 2 {
        return Err(Error::invalid(format!(
            "sequences need T >= 2 frames, got T={frames}"
        )));
    }
    let d = generator.latent_dim();
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let gt_w1 = sample_latent::<T>(d, &mut rng);
            let gt_direction = unit_gaussian::<T>(d, &mut rng);
            let alphas: Vec<T> = draw_alphas(frames - 1, &mut rng)
                .into_iter()
                .map(T::lit)
                .collect();
            let heldout_dir = orthogonal_unit(&gt_direction, &mut rng);
            let heldout_alpha = T::lit(rng.random_range(-ALPHA_RANGE..=ALPHA_RANGE));
            let mut seq = SyntheticSequence {
                gt_w1,
                gt_direction,
                alphas,
                frames: Vec::new(),
                heldout: EditSpec {
                    direction: heldout_dir,
                    alpha: heldout_alpha,
                },
                heldout_image: ImageTensor::zeros(1, 1, 1),
            };
            seq.frames = seq
                .gt_codes()
                .iter()
                .map(|c| generator.generate(c))
                .collect::<Result<_>>()?;
            seq.heldout_image = generator.generate(&edit(&seq.gt_w1, &seq.heldout)?)?;
            Ok(seq)
        })
        .collect()
}

pub fn metric_mse<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<T> {
    a.check_same_shape(b, "metric_mse")?;
    let sum: T = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / T::from_usize(a.len()).unwrap())
}

/// `10·log10(range² / MSE)`; `+∞` for identical images.
pub fn metric_psnr<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>, range: T) -> Result<T> {
    let mse = metric_mse(a, b)?;
    if mse == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::lit(10.0) * (range * range / mse).log10())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub seq: usize,
    pub variant: Variant,
    /// Mean over frames of reconstruction MSE.
    pub recon_mse: f64,
    /// Mean over frames of the L2 distance to the ground-truth code.
    pub latent_err: f64,
    /// MSE of the held-out edit applied to the recovered first-frame code.
    pub edit_mse: f64,
    pub runtime_s: f64,
    /// Objective at the first and last optimizer step (not written to CSV).
    #[serde(skip)]
    pub initial_loss: f64,
    #[serde(skip)]
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantSummary {
    pub variant: Variant,
    pub sequences: usize,
    pub recon_mse: f64,
    pub latent_err: f64,
    pub edit_mse: f64,
    pub runtime_s: f64,
}

fn evaluate_one<T: Scalar>(
    seq_index: usize,
    seq: &SyntheticSequence<T>,
    generator: &Generator<T>,
    config: &InversionConfig,
) -> Result<EvalRecord> {
    let (result, runtime_s) = invert_timed(&seq.frames, generator, config)?;
    let t = seq.frames.len();
    let mut recon = 0.0;
    let mut latent = 0.0;
    for (k, (img, code)) in result
        .reconstructions
        .iter()
        .zip(&result.per_frame_codes)
        .enumerate()
    {
        recon += metric_mse(img, &seq.frames[k])?.as_f64();
        let gt = seq.gt_code(k);
        latent += code
            .0
            .iter()
            .zip(&gt.0)
            .map(|(&a, &b)| (a - b).as_f64().powi(2))
            .sum::<f64>()
            .sqrt();
    }
    let edited = generator.generate(&edit(&result.per_frame_codes[0], &seq.heldout)?)?;
    Ok(EvalRecord {
        seq: seq_index,
        variant: config.variant,
        recon_mse: recon / t as f64,
        latent_err: latent / t as f64,
        edit_mse: metric_mse(&edited, &seq.heldout_image)?.as_f64(),
        runtime_s,
        initial_loss: result
            .loss_trace
            .first()
            .map_or(f64::NAN, |r| r.total.as_f64()),
        final_loss: result
            .loss_trace
            .last()
            .map_or(f64::NAN, |r| r.total.as_f64()),
    })
}

/// Inverts every sequence under every configuration. Sequences run in
/// parallel on the current rayon pool; records come back ordered by
/// sequence, then by configuration.
pub fn evaluate<T: Scalar>(
    dataset: &[SyntheticSequence<T>],
    generator: &Generator<T>,
    variants: &[InversionConfig],
) -> Result<Vec<EvalRecord>> {
    if dataset.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let per_seq = dataset
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            variants
                .iter()
                .map(|cfg| evaluate_one(i, seq, generator, cfg))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_seq.into_iter().flatten().collect())
}

/// Per-variant means, in order of first appearance.
pub fn summarize(records: &[EvalRecord]) -> Vec<VariantSummary> {
    let mut order: Vec<Variant> = Vec::new();
    for r in records {
        if !order.contains(&r.variant) {
            order.push(r.variant);
        }
    }
    order
        .into_iter()
        .map(|variant| {
            let rs: Vec<_> = records.iter().filter(|r| r.variant == variant).collect();
            let n = rs.len() as f64;
            let mean = |f: fn(&EvalRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            VariantSummary {
                variant,
                sequences: rs.len(),
                recon_mse: mean(|r| r.recon_mse),
                latent_err: mean(|r| r.latent_err),
                edit_mse: mean(|r| r.edit_mse),
                runtime_s: mean(|r| r.runtime_s),
            }
        })
        .collect()
}

pub const EVAL_CSV_HEADER: &str = "seq,variant,recon_mse,latent_err,edit_mse,runtime_s";

pub fn eval_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from(EVAL_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.seq, r.variant, r.recon_mse, r.latent_err, r.edit_mse, r.runtime_s
        ));
    }
    out
}

/// Contents of `gt.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub frames: usize,
    pub w1: Vec<f64>,
    pub direction: Vec<f64>,
    pub alphas: Vec<f64>,
    pub heldout_direction: Vec<f64>,
    pub heldout_alpha: f64,
}

/// Contents of the dataset-level `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub generator: GeneratorSpec,
    pub seed: u64,
    pub count: usize,
    pub frames: usize,
}

fn to_f64s<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_f64s<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

/// Writes `<dir>/manifest.json` and `<dir>/<i>/{frame_<b>.tnsr, frame_<b>.ppm, heldout.tnsr, gt.json}`.
pub fn write_dataset<T: Scalar>(
    dir: impl AsRef<Path>,
    manifest: &DatasetManifest,
    dataset: &[SyntheticSequence<T>],
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(manifest)? + "\n",
    )?;
    for (i, seq) in dataset.iter().enumerate() {
        let sd = dir.join(i.to_string());
        fs::create_dir_all(&sd)?;
        for (b, f) in seq.frames.iter().enumerate() {
            formats::write_tnsr(sd.join(format!("frame_{b}.tnsr")), f)?;
            formats::write_ppm(sd.join(format!("frame_{b}.ppm")), f)?;
        }
        formats::write_tnsr(sd.join("heldout.tnsr"), &seq.heldout_image)?;
        let gt = GroundTruth {
            frames: seq.frames.len(),
            w1: to_f64s(&seq.gt_w1.0),
            direction: to_f64s(&seq.gt_direction.0),
            alphas: to_f64s(&seq.alphas),
            heldout_direction: to_f64s(&seq.heldout.direction.0),
            heldout_alpha: seq.heldout.alpha.as_f64(),
        };
        fs::write(
            sd.join("gt.json"),
            serde_json::to_string_pretty(&gt)? + "\n",
        )?;
    }
    Ok(())
}

/// Loads a dataset written by [`write_dataset`].
pub fn read_dataset<T: Scalar>(
    dir: impl AsRef<Path>,
) -> Result<(DatasetManifest, Vec<SyntheticSequence<T>>)> {
    let dir = dir.as_ref();
    let manifest: DatasetManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    let mut seqs = Vec::with_capacity(manifest.count);
    for i in 0..manifest.count {
        let sd = dir.join(i.to_string());
        let gt: GroundTruth = serde_json::from_slice(&fs::read(sd.join("gt.json"))?)?;
        if gt.alphas.len() + 1 != gt.frames {
            return Err(Error::invalid(format!(
                "sequence {i}: {} alphas for {} frames",
                gt.alphas.len(),
                gt.frames
            )));
        }
        let frames = (0..gt.frames)
            .map(|b| formats::read_tnsr(sd.join(format!("frame_{b}.tnsr"))))
            .collect::<Result<Vec<_>>>()?;
        seqs.push(SyntheticSequence {
            gt_w1: LatentCode(from_f64s(&gt.w1)),
            gt_direction: SemanticDirection(from_f64s(&gt.direction)),
            alphas: from_f64s(&gt.alphas),
            frames,
            heldout: EditSpec {
                direction: SemanticDirection(from_f64s(&gt.heldout_direction)),
                alpha: T::lit(gt.heldout_alpha),
            },
            heldout_image: formats::read_tnsr(sd.join("heldout.tnsr"))?,
        });
    }
    Ok((manifest, seqs))
}
