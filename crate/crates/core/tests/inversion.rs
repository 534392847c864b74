mod common;

use seqinv::*;

fn setup(frames: usize) -> (ToyGenerator, Sequence) {
    let g = common::generator(6, &[16, 32], 8, 21);
    let seq = synth_dataset(&g, 1, frames, 4).unwrap().remove(0);
    (g, seq)
}

fn quick(variant: Variant) -> InversionConfig {
    let mut cfg = InversionConfig::default()
        .with_variant(variant)
        .with_steps(40);
    cfg.mean_samples = 500;
    cfg
}

#[test]
fn mac_codes_are_exact_prefix_sums() {
    let (g, seq) = setup(4);
    let r = invert_sequence(&seq.frames, &g, &quick(Variant::Full)).unwrap();
    assert_eq!(r.directions.len(), 3);
    for (k, code) in r.per_frame_codes.iter().enumerate() {
        assert_eq!(code, &compose_codes(&r.w1, &r.directions, k).unwrap());
        assert_eq!(r.reconstructions[k], g.generate(code).unwrap());
    }
}

#[test]
fn inversion_is_deterministic() {
    let (g, seq) = setup(3);
    let a = invert_sequence(&seq.frames, &g, &quick(Variant::Full)).unwrap();
    let b = invert_sequence(&seq.frames, &g, &quick(Variant::Full)).unwrap();
    assert_eq!(a.per_frame_codes, b.per_frame_codes);
    assert_eq!(a.loss_trace, b.loss_trace);
}

#[test]
fn variants_mask_terms_and_parameterisation() {
    let (g, seq) = setup(3);
    for v in Variant::ALL {
        let r = invert_sequence(&seq.frames, &g, &quick(v)).unwrap();
        assert_eq!(r.variant, v);
        assert_eq!(r.loss_trace.len(), 40);
        assert_eq!(r.per_frame_codes.len(), 3);
        if v.uses_icc() {
            assert!(r.loss_trace[0].icc > 0.0);
        } else {
            assert!(r.loss_trace.iter().all(|l| l.icc == 0.0));
        }
        assert_eq!(r.directions.len(), if v.uses_mac() { 2 } else { 0 });
    }
}

#[test]
fn without_icc_the_flow_term_never_moves_parameters() {
    // no_icc with λ_icc = 5 must match no_icc with λ_icc = 1 exactly
    let (g, seq) = setup(3);
    let mut heavy = quick(Variant::NoIcc);
    heavy.weights.lambda_icc = 5.0;
    let a = invert_sequence(&seq.frames, &g, &heavy).unwrap();
    let b = invert_sequence(&seq.frames, &g, &quick(Variant::NoIcc)).unwrap();
    assert_eq!(a.per_frame_codes, b.per_frame_codes);
}

#[test]
fn zero_icc_weight_matches_baseline_objective() {
    // full with λ_icc = 0 optimises the same objective as no_icc
    let (g, seq) = setup(3);
    let mut cfg = quick(Variant::Full);
    cfg.weights.lambda_icc = 0.0;
    let a = invert_sequence(&seq.frames, &g, &cfg).unwrap();
    let b = invert_sequence(&seq.frames, &g, &quick(Variant::NoIcc)).unwrap();
    assert_eq!(a.per_frame_codes, b.per_frame_codes);
}

#[test]
fn ground_truth_parameters_have_zero_loss() {
    let (g, seq) = setup(5);
    for v in Variant::ALL {
        let problem = InversionProblem::new(&seq.frames, &g, &quick(v)).unwrap();
        let (report, _) = problem.evaluate(&seq.gt_params(v.uses_mac())).unwrap();
        assert!(report.total < 1e-10, "{v}: {}", report.total);
    }
}

#[test]
fn loss_decreases() {
    let (g, seq) = setup(3);
    let r = invert_sequence(&seq.frames, &g, &quick(Variant::Full).with_steps(200)).unwrap();
    assert!(r.loss_trace.last().unwrap().total < r.loss_trace[0].total);
}

#[test]
fn non_finite_loss_is_reported() {
    let (g, seq) = setup(2);
    let problem = InversionProblem::new(&seq.frames, &g, &quick(Variant::Full)).unwrap();
    let mut p = problem.initial_params();
    p.values[0] = f64::NAN;
    assert!(matches!(problem.optimize(p), Err(Error::NonFinite(_))));
}

#[test]
fn bundle_roundtrip_and_transfer() {
    let (g, seq) = setup(3);
    let r = invert_sequence(&seq.frames, &g, &quick(Variant::Full)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&r, dir.path(), &serde_json::json!({"variant": "full"})).unwrap();
    let (w1, dirs) = read_bundle_directions::<f64>(dir.path()).unwrap();
    assert_eq!(w1, r.w1);
    assert_eq!(dirs, r.directions);
    assert_eq!(transfer(&dirs, &w1, 1.0).unwrap(), r.per_frame_codes);
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("step,total,icc,pixel,perceptual\n"));
    assert_eq!(trace.lines().count(), 41);
    for b in 0..3 {
        let img: Image = formats::read_tnsr(dir.path().join(format!("recon_{b}.tnsr"))).unwrap();
        assert_eq!(img, r.reconstructions[b]);
        assert!(dir.path().join(format!("recon_{b}.ppm")).exists());
    }
}
