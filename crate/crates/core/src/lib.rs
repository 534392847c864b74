//! Joint latent inversion of consecutive images.
//!
//! A sequence of frames is inverted into a base latent code plus per-step
//! latent directions, so every frame's code is reachable from the others by
//! a linear edit. Reconstructions are additionally tied to their inputs
//! through optical-flow warps between frames. A small fixed tanh MLP serves
//! as the generator, and a synthetic ground-truth harness measures
//! reconstruction and editability.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases below fix it to `f64`, which the optimizer is meant to run in.

pub mod adam;
pub mod config;
pub mod dataset;
pub mod editing;
mod error;
pub mod flow;
pub mod formats;
pub mod generator;
pub mod inversion;
pub mod objective;
mod scalar;
pub mod tensor;

pub use adam::{adam_step, adam_step_in_place, AdamConfig, AdamState};
pub use config::{RunConfig, Seeds};
pub use dataset::{
    eval_csv, evaluate, metric_mse, metric_psnr, read_dataset, summarize, synth_dataset,
    write_dataset, DatasetManifest, EvalRecord, GroundTruth, SyntheticSequence, VariantSummary,
};
pub use editing::{edit, morph, transfer, EditSpec};
pub use error::{Error, Result};
pub use flow::{estimate_flow, warp, warp_adjoint, FlowParams};
pub use generator::{
    mean_latent, random_direction, Generator, GeneratorSpec, LatentCode, SemanticDirection,
};
pub use inversion::{
    compose_codes, invert_sequence, read_bundle_directions, write_bundle, InversionConfig,
    InversionProblem, InversionResult, Params, Variant,
};
pub use objective::{
    loss_icc, loss_perceptual, loss_pixel, precompute_flows, total_loss, FeatureExtractor,
    FlowTable, LossReport, LossWeights, Objective,
};
pub use scalar::Scalar;
pub use tensor::{FlowField, ImageTensor};

pub type Image = ImageTensor<f64>;
pub type Flow = FlowField<f64>;
pub type Latent = LatentCode<f64>;
pub type Direction = SemanticDirection<f64>;
pub type ToyGenerator = Generator<f64>;
pub type Sequence = SyntheticSequence<f64>;
pub type Inversion = InversionResult<f64>;
pub type Report = LossReport<f64>;

pub type Image32 = ImageTensor<f32>;
pub type Flow32 = FlowField<f32>;
pub type ToyGenerator32 = Generator<f32>;
