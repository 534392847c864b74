#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqinv::*;

pub fn generator(latent_dim: usize, hidden: &[usize], size: usize, seed: u64) -> ToyGenerator {
    ToyGenerator::build(&GeneratorSpec {
        latent_dim,
        hidden_dims: hidden.to_vec(),
        height: size,
        width: size,
        channels: 1,
        seed,
    })
    .unwrap()
}

/// Smooth texture: a sum of random Gaussian blobs squashed by tanh, shifted
/// right by `dx` pixels.
pub fn blob_texture(size: usize, seed: u64, dx: f64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = size as f64;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..40)
        .map(|_| {
            (
                rng.random_range(-8.0..span + 8.0),
                rng.random_range(-8.0..span + 8.0),
                rng.random_range(3.0..6.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    Image::from_fn(size, size, 1, |x, y, _| {
        let s: f64 = blobs
            .iter()
            .map(|&(cx, cy, sigma, a)| {
                let r2 = (x as f64 - cx - dx).powi(2) + (y as f64 - cy).powi(2);
                a * (-r2 / (2.0 * sigma * sigma)).exp()
            })
            .sum();
        s.tanh()
    })
}

pub fn random_image(h: usize, w: usize, c: usize, rng: &mut impl Rng) -> Image {
    Image::from_fn(h, w, c, |_, _, _| rng.random_range(-1.0..1.0))
}

/// Central differences of `f` at `x`.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest componentwise `|a − n| / max(|a|, |n|, floor)`, where `floor` is
/// `1e-6` of the largest numeric component so that entries that are zero up
/// to rounding do not dominate.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-6 * scale).max(f64::MIN_POSITIVE);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Parameters displaced from `base` by uniform noise of half-width `spread`.
pub fn jitter(base: &Params<f64>, spread: f64, rng: &mut impl Rng) -> Params<f64> {
    let mut p = base.clone();
    for v in &mut p.values {
        *v += rng.random_range(-spread..spread);
    }
    p
}
