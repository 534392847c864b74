mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqinv::*;

#[test]
fn generator_vjp_matches_finite_differences() {
    let g = generator(6, &[16, 24], 8, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..3 {
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let up = random_image(8, 8, 1, &mut rng);
        let analytic = g.generate_grad(&LatentCode(w.clone()), &up).unwrap();
        let numeric = numeric_gradient(
            |x| {
                g.generate(&LatentCode(x.to_vec()))
                    .unwrap()
                    .dot(&up)
                    .unwrap()
            },
            &w,
            1e-5,
        );
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-6, "relative error {err}");
    }
}

fn sequence(g: &ToyGenerator, frames: usize, seed: u64) -> Vec<Image> {
    synth_dataset(g, 1, frames, seed).unwrap().remove(0).frames
}

fn outputs_from(values: &[f64], shape: (usize, usize, usize), frames: usize) -> Vec<Image> {
    let n = shape.0 * shape.1 * shape.2;
    (0..frames)
        .map(|b| {
            Image::new(
                shape.0,
                shape.1,
                shape.2,
                values[b * n..(b + 1) * n].to_vec(),
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn icc_gradient_matches_finite_differences() {
    let g = generator(4, &[16], 8, 5);
    let inputs = sequence(&g, 3, 1);
    let flows = precompute_flows(&inputs, &FlowParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let outputs: Vec<Image> = inputs
        .iter()
        .map(|i| i.map(|v| v + rng.random_range(-0.3..0.3)))
        .collect();
    let (_, grads) = loss_icc(&inputs, &outputs, &flows).unwrap();
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();
    let flat: Vec<f64> = outputs.iter().flat_map(|o| o.data().to_vec()).collect();
    let numeric = numeric_gradient(
        |x| {
            loss_icc(&inputs, &outputs_from(x, (8, 8, 1), 3), &flows)
                .unwrap()
                .0
        },
        &flat,
        1e-5,
    );
    let err = max_relative_error(&analytic, &numeric);
    assert!(err < 1e-5, "relative error {err}");
}

#[test]
fn perceptual_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let fx = FeatureExtractor::<f64>::new(2, 9);
    let inputs = vec![
        random_image(16, 8, 2, &mut rng),
        random_image(16, 8, 2, &mut rng),
    ];
    let outputs = vec![
        random_image(16, 8, 2, &mut rng),
        random_image(16, 8, 2, &mut rng),
    ];
    let (_, grads) = loss_perceptual(&inputs, &outputs, &fx).unwrap();
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();
    let flat: Vec<f64> = outputs.iter().flat_map(|o| o.data().to_vec()).collect();
    let numeric = numeric_gradient(
        |x| {
            loss_perceptual(&inputs, &outputs_from(x, (16, 8, 2), 2), &fx)
                .unwrap()
                .0
        },
        &flat,
        1e-6,
    );
    let err = max_relative_error(&analytic, &numeric);
    assert!(err < 1e-4, "relative error {err}");
}

fn chain_check(variant: Variant, seed: u64) -> f64 {
    let g = generator(5, &[12], 16, 11);
    let inputs = sequence(&g, 3, seed);
    let cfg = InversionConfig::default().with_variant(variant);
    let problem = InversionProblem::new(&inputs, &g, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = jitter(&problem.initial_params(), 0.5, &mut rng);
    let (_, analytic) = problem.evaluate(&params).unwrap();
    let numeric = numeric_gradient(
        |x| {
            let mut p = params.clone();
            p.values.copy_from_slice(x);
            problem.evaluate(&p).unwrap().0.total
        },
        &params.values,
        1e-5,
    );
    max_relative_error(&analytic, &numeric)
}

#[test]
fn full_chain_gradient_every_variant() {
    for (i, v) in Variant::ALL.into_iter().enumerate() {
        let err = chain_check(v, i as u64);
        assert!(err < 1e-4, "{v}: relative error {err}");
    }
}

#[test]
fn base_code_gradient_is_sum_of_frame_gradients() {
    let g = generator(5, &[12], 16, 11);
    let inputs = sequence(&g, 4, 7);
    let cfg = InversionConfig::default();
    let problem = InversionProblem::new(&inputs, &g, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mac = jitter(&problem.initial_params(), 0.5, &mut rng);
    let (_, grad) = problem.evaluate(&mac).unwrap();

    // same point expressed as independent codes
    let indep = Params::from_codes(&mac.codes());
    let free =
        InversionProblem::new(&inputs, &g, &cfg.clone().with_variant(Variant::NoMac)).unwrap();
    let (_, code_grads) = free.evaluate(&indep).unwrap();
    let d = 5;
    for i in 0..d {
        let total: f64 = (0..4).map(|b| code_grads[b * d + i]).sum();
        assert!((grad[i] - total).abs() <= 1e-12 * total.abs().max(1.0));
        // direction k collects frames k..T-1
        for k in 1..4 {
            let suffix: f64 = (k..4).map(|b| code_grads[b * d + i]).sum();
            assert!((grad[k * d + i] - suffix).abs() <= 1e-12 * suffix.abs().max(1.0));
        }
    }
}
