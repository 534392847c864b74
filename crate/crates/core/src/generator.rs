//! Fixed-weight tanh MLP used as the image generator, with reverse-mode
//! gradients of image-space losses with respect to the latent code.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

/// A point in latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode<T>(pub Vec<T>);

/// A latent-space displacement. Any scale factor is folded into the vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticDirection<T>(pub Vec<T>);

macro_rules! vector_newtype {
    ($name:ident) => {
        impl<T: Scalar> $name<T> {
            pub fn zeros(dim: usize) -> Self {
                Self(vec![T::zero(); dim])
            }

            #[inline]
            pub fn dim(&self) -> usize {
                self.0.len()
            }

            #[inline]
            pub fn as_slice(&self) -> &[T] {
                &self.0
            }

            pub fn norm(&self) -> T {
                self.0.iter().map(|&v| v * v).sum::<T>().sqrt()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }
        }

        impl<T> From<Vec<T>> for $name<T> {
            fn from(v: Vec<T>) -> Self {
                Self(v)
            }
        }
    };
}

vector_newtype!(LatentCode);
vector_newtype!(SemanticDirection);

/// Shape and seed of a [`Generator`]. Activations are tanh on every layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub latent_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            hidden_dims: vec![64, 256],
            height: 32,
            width: 32,
            channels: 1,
            seed: 42,
        }
    }
}

impl GeneratorSpec {
    pub fn output_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::invalid("generator dimensions must be >= 1"));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("hidden layer sizes must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Dense<T> {
    inputs: usize,
    outputs: usize,
    /// `outputs × inputs`, row-major.
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    fn forward(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, &b)| (b + dot(row, x)).tanh()),
        );
    }
}

/// Dot product with four interleaved partial sums (fixed order, so results
/// stay reproducible while the loop vectorizes).
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail = ac
        .remainder()
        .iter()
        .zip(bc.remainder())
        .fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (ca, cb) in ac.zip(bc) {
        for i in 0..4 {
            lanes[i] = lanes[i] + ca[i] * cb[i];
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Deterministic fully connected tanh network `latent → hidden… → H·W·C`.
#[derive(Clone, Debug)]
pub struct Generator<T> {
    spec: GeneratorSpec,
    layers: Vec<Dense<T>>,
}

/// Activations recorded by a forward pass, consumed by
/// [`Generator::backward`].
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    input: Vec<T>,
    activations: Vec<Vec<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().expect("at least one layer")
    }
}

impl<T: Scalar> Generator<T> {
    /// Draws weights from a seeded Gaussian scaled by `1/sqrt(fan_in)`;
    /// biases start (and stay) at zero.
    pub fn build(spec: &GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut sizes = vec![spec.latent_dim];
        sizes.extend(&spec.hidden_dims);
        sizes.push(spec.output_len());
        let layers = sizes
            .windows(2)
            .map(|pair| {
                let (inputs, outputs) = (pair[0], pair[1]);
                let scale = 1.0 / (inputs as f64).sqrt();
                let weights = (0..inputs * outputs)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        T::lit(z * scale)
                    })
                    .collect();
                Dense {
                    inputs,
                    outputs,
                    weights,
                    bias: vec![T::zero(); outputs],
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.latent_dim
    }

    /// `(height, width, channels)` of generated images.
    pub fn output_shape(&self) -> (usize, usize, usize) {
        (self.spec.height, self.spec.width, self.spec.channels)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_latent(&self, w: &[T]) -> Result<()> {
        if w.len() != self.spec.latent_dim {
            return Err(Error::shape(format!(
                "latent has dimension {}, generator expects {}",
                w.len(),
                self.spec.latent_dim
            )));
        }
        Ok(())
    }

    pub fn forward(&self, w: &LatentCode<T>) -> Result<ForwardTrace<T>> {
        self.check_latent(&w.0)?;
        let mut activations: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward(activations.last().unwrap_or(&w.0), &mut out);
            activations.push(out);
        }
        Ok(ForwardTrace {
            input: w.0.clone(),
            activations,
        })
    }

    pub fn trace_image(&self, trace: &ForwardTrace<T>) -> ImageTensor<T> {
        let (h, w, c) = self.output_shape();
        ImageTensor::new(h, w, c, trace.output().to_vec()).expect("generator output shape")
    }

    /// Synthesizes the image for latent code `w`.
    pub fn generate(&self, w: &LatentCode<T>) -> Result<ImageTensor<T>> {
        let trace = self.forward(w)?;
        Ok(self.trace_image(&trace))
    }

    /// Vector–Jacobian product `(∂G/∂w)ᵀ · upstream` given a recorded trace.
    pub fn backward(&self, trace: &ForwardTrace<T>, upstream: &ImageTensor<T>) -> Result<Vec<T>> {
        let (h, w, c) = self.output_shape();
        if upstream.shape() != (h, w, c) {
            return Err(Error::shape(format!(
                "upstream {:?} vs generator output {:?}",
                upstream.shape(),
                (h, w, c)
            )));
        }
        let mut grad: Vec<T> = upstream.data().to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            // through tanh: d tanh(z) = 1 - tanh(z)^2
            for (g, &a) in grad.iter_mut().zip(&trace.activations[i]) {
                *g = *g * (T::one() - a * a);
            }
            let mut prev = vec![T::zero(); layer.inputs];
            for (row, &g) in layer.weights.chunks_exact(layer.inputs).zip(&grad) {
                if g == T::zero() {
                    continue;
                }
                for (p, &wt) in prev.iter_mut().zip(row) {
                    *p = *p + wt * g;
                }
            }
            grad = prev;
        }
        debug_assert_eq!(grad.len(), trace.input.len());
        Ok(grad)
    }

    /// Gradient of `dot(upstream, G(w))` with respect to `w`.
    pub fn generate_grad(&self, w: &LatentCode<T>, upstream: &ImageTensor<T>) -> Result<Vec<T>> {
        let trace = self.forward(w)?;
        self.backward(&trace, upstream)
    }

    /// Empirical mean of `samples` standard-normal latent draws.
    pub fn mean_latent(&self, samples: usize, seed: u64) -> LatentCode<T> {
        mean_latent(self.spec.latent_dim, samples, seed)
    }
}

/// Empirical mean of `samples` seeded draws from the standard normal prior.
pub fn mean_latent<T: Scalar>(dim: usize, samples: usize, seed: u64) -> LatentCode<T> {
    let samples = samples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0f64; dim];
    for _ in 0..samples {
        for a in &mut acc {
            let z: f64 = StandardNormal.sample(&mut rng);
            *a += z;
        }
    }
    LatentCode(
        acc.into_iter()
            .map(|a| T::lit(a / samples as f64))
            .collect(),
    )
}

/// One seeded draw from the standard normal prior.
pub fn sample_latent<T: Scalar>(dim: usize, rng: &mut impl rand::Rng) -> LatentCode<T> {
    LatentCode(
        (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(z)
            })
            .collect(),
    )
}

/// Unit-norm seeded Gaussian direction.
pub fn random_direction<T: Scalar>(dim: usize, seed: u64) -> SemanticDirection<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    unit_gaussian(dim, &mut rng)
}

pub(crate) fn unit_gaussian<T: Scalar>(
    dim: usize,
    rng: &mut impl rand::Rng,
) -> SemanticDirection<T> {
    assert!(dim >= 1);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return SemanticDirection(v.into_iter().map(|x| T::lit(x / n)).collect());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> GeneratorSpec {
        GeneratorSpec {
            latent_dim: 8,
            hidden_dims: vec![32],
            height: 16,
            width: 16,
            channels: 1,
            seed: 7,
        }
    }

    #[test]
    fn seeded_build_is_bitwise_deterministic() {
        let a = Generator::<f64>::build(&small_spec()).unwrap();
        let b = Generator::<f64>::build(&small_spec()).unwrap();
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(la.weights, lb.weights);
        }
    }

    #[test]
    fn parameter_count_matches_arithmetic() {
        let g = Generator::<f64>::build(&small_spec()).unwrap();
        // direct count over the layer buffers
        let counted: usize = g
            .layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum();
        assert_eq!(counted, 8 * 32 + 32 + 32 * 256 + 256);
        assert_eq!(g.parameter_count(), 8736);
    }

    #[test]
    fn no_hidden_layers_is_single_affine() {
        let spec = GeneratorSpec {
            hidden_dims: vec![],
            ..small_spec()
        };
        let g = Generator::<f64>::build(&spec).unwrap();
        assert_eq!(g.layers.len(), 1);
        assert_eq!(g.parameter_count(), 8 * 256 + 256);
    }

    #[test]
    fn zero_dims_rejected() {
        let spec = GeneratorSpec {
            hidden_dims: vec![0],
            ..small_spec()
        };
        assert!(Generator::<f64>::build(&spec).is_err());
        let spec = GeneratorSpec {
            latent_dim: 0,
            ..small_spec()
        };
        assert!(Generator::<f64>::build(&spec).is_err());
    }

    #[test]
    fn generate_pure_bounded_and_zero_at_origin() {
        let g = Generator::<f64>::build(&GeneratorSpec::default()).unwrap();
        let w = random_direction::<f64>(16, 1);
        let w = LatentCode(w.0.iter().map(|v| v * 3.0).collect());
        let a = g.generate(&w).unwrap();
        let b = g.generate(&w).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() < 1.0));
        let zero = g.generate(&LatentCode::zeros(16)).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_errors() {
        let g = Generator::<f64>::build(&small_spec()).unwrap();
        assert!(g.generate(&LatentCode::zeros(3)).is_err());
        let up = ImageTensor::zeros(8, 8, 1);
        assert!(g.generate_grad(&LatentCode::zeros(8), &up).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let g = Generator::<f64>::build(&small_spec()).unwrap();
        let w = LatentCode(random_direction::<f64>(8, 3).0);
        let grad = g.generate_grad(&w, &ImageTensor::zeros(16, 16, 1)).unwrap();
        assert!(grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_latent_single_sample_is_draw() {
        let m = mean_latent::<f64>(5, 1, 99);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let d = sample_latent::<f64>(5, &mut rng);
        assert_eq!(m, d);
        assert_eq!(mean_latent::<f64>(5, 10, 3), mean_latent::<f64>(5, 10, 3));
    }

    #[test]
    fn mean_latent_converges_to_zero() {
        let m = mean_latent::<f64>(16, 10_000, 2024);
        assert!(m.0.iter().all(|v| v.abs() < 0.05), "{m:?}");
    }

    #[test]
    fn random_direction_unit_and_seeded() {
        let a = random_direction::<f64>(16, 5);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a, random_direction::<f64>(16, 5));
    }

    #[test]
    fn random_directions_rarely_align() {
        let mut below = 0;
        for s in 0..100u64 {
            let a = random_direction::<f64>(16, 2 * s);
            let b = random_direction::<f64>(16, 2 * s + 1);
            let cos: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
            assert!(cos.abs() < 0.99);
            if cos.abs() < 0.9 {
                below += 1;
            }
        }
        assert!(below >= 95, "{below}");
    }
}
