use std::fs;
use std::path::{Path, PathBuf};

use seqinv::formats::{
    read_direction, read_latent, read_tnsr, write_flo, write_latent, write_ppm, write_tnsr,
};
use seqinv::{
    edit as edit_code, estimate_flow, eval_csv, evaluate, invert_sequence, morph as morph_codes,
    read_bundle_directions, read_dataset, summarize, synth_dataset, transfer as transfer_codes,
    warp, write_bundle, write_dataset, DatasetManifest, EditSpec, Error, Image, RunConfig,
    ToyGenerator, Variant,
};

/// Message plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Invalid(_) => 2,
            Error::NonFinite(_) => 4,
            _ => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn with_path(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    }
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text =
        fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn generator(cfg: &RunConfig) -> Result<ToyGenerator, Failure> {
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(ToyGenerator::build(&cfg.generator)?)
}

fn save_image(path: &Path, img: &Image) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(Error::from)?;
    }
    write_tnsr(path, img)?;
    write_ppm(path.with_extension("ppm"), img)?;
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let g = generator(cfg)?;
    let ds = synth_dataset(&g, cfg.sequences, cfg.frames, cfg.seeds.dataset)?;
    let manifest = DatasetManifest {
        generator: cfg.generator.clone(),
        seed: cfg.seeds.dataset,
        count: cfg.sequences,
        frames: cfg.frames,
    };
    write_dataset(out, &manifest, &ds)?;
    println!(
        "wrote {} sequences of {} frames to {}",
        cfg.sequences,
        cfg.frames,
        out.display()
    );
    Ok(())
}

pub fn invert(cfg: &RunConfig, frames: &[PathBuf], out: &Path) -> Result<(), Failure> {
    let g = generator(cfg)?;
    let images = frames
        .iter()
        .map(|p| read_tnsr::<f64>(p).map_err(with_path(p)))
        .collect::<Result<Vec<_>, _>>()?;
    let result = invert_sequence(&images, &g, &cfg.inversion())?;
    let manifest = serde_json::json!({
        "variant": cfg.variant,
        "frames": images.len(),
        "seeds": cfg.seeds,
        "config": cfg,
    });
    write_bundle(&result, out, &manifest)?;
    let first = result.loss_trace.first().map_or(f64::NAN, |r| r.total);
    let last = result.loss_trace.last().map_or(f64::NAN, |r| r.total);
    println!(
        "{} variant, {} frames, {} steps: loss {first:.6e} -> {last:.6e}; bundle in {}",
        cfg.variant,
        images.len(),
        result.loss_trace.len(),
        out.display()
    );
    Ok(())
}

pub fn edit(
    cfg: &RunConfig,
    latent: &Path,
    direction: &Path,
    alpha: f64,
    out: &Path,
) -> Result<(), Failure> {
    let g = generator(cfg)?;
    let w = read_latent(latent).map_err(with_path(latent))?;
    let n = read_direction(direction).map_err(with_path(direction))?;
    let code = edit_code(
        &w,
        &EditSpec {
            direction: n,
            alpha,
        },
    )?;
    save_image(out, &g.generate(&code)?)
}

pub fn morph(cfg: &RunConfig, a: &Path, b: &Path, steps: usize, out: &Path) -> Result<(), Failure> {
    if steps < 2 {
        return Err(Failure::usage("morph needs --steps >= 2"));
    }
    let g = generator(cfg)?;
    let wa = read_latent(a).map_err(with_path(a))?;
    let wb = read_latent(b).map_err(with_path(b))?;
    for i in 0..steps {
        let t = i as f64 / (steps - 1) as f64;
        let code = morph_codes(&wa, &wb, t)?;
        save_image(&out.join(format!("morph_{i}.tnsr")), &g.generate(&code)?)?;
    }
    Ok(())
}

pub fn transfer(cfg: &RunConfig, bundle: &Path, target: &Path, out: &Path) -> Result<(), Failure> {
    let g = generator(cfg)?;
    let (_, dirs) = read_bundle_directions::<f64>(bundle).map_err(with_path(bundle))?;
    if dirs.is_empty() {
        return Err(Failure {
            code: 3,
            message: format!(
                "{}: bundle has no directions (was it inverted without MAC?)",
                bundle.display()
            ),
        });
    }
    let w = read_latent(target).map_err(with_path(target))?;
    for (k, code) in transfer_codes(&dirs, &w, cfg.transfer_scale)?
        .iter()
        .enumerate()
    {
        save_image(&out.join(format!("transfer_{k}.tnsr")), &g.generate(code)?)?;
        write_latent(out.join(format!("code_{k}.lat")), code)?;
    }
    Ok(())
}

pub fn eval(
    cfg: &RunConfig,
    dataset: &Path,
    variants: &[String],
    out: &Path,
) -> Result<(), Failure> {
    let variants = variants
        .iter()
        .map(|s| s.trim().parse::<Variant>())
        .collect::<Result<Vec<_>, _>>()?;
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let (manifest, ds) = read_dataset::<f64>(dataset).map_err(with_path(dataset))?;
    let g = ToyGenerator::build(&manifest.generator)?;
    let configs: Vec<_> = variants
        .iter()
        .map(|&v| {
            let mut c = cfg.inversion();
            c.variant = v;
            c
        })
        .collect();
    let records = if configs.is_empty() {
        Vec::new()
    } else {
        evaluate(&ds, &g, &configs)?
    };
    fs::create_dir_all(out).map_err(Error::from)?;
    fs::write(out.join("eval.csv"), eval_csv(&records)).map_err(Error::from)?;
    for s in summarize(&records) {
        println!(
            "{:<9} n={} recon_mse={:.4e} latent_err={:.4} edit_mse={:.4e} runtime_s={:.2}",
            s.variant.as_str(),
            s.sequences,
            s.recon_mse,
            s.latent_err,
            s.edit_mse,
            s.runtime_s
        );
    }
    Ok(())
}

pub fn flow(cfg: &RunConfig, a: &Path, b: &Path, out: &Path) -> Result<(), Failure> {
    cfg.flow
        .validate()
        .map_err(|e| Failure::usage(e.to_string()))?;
    let ia = read_tnsr::<f64>(a).map_err(with_path(a))?;
    let ib = read_tnsr::<f64>(b).map_err(with_path(b))?;
    let f = estimate_flow(&ia, &ib, &cfg.flow)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(Error::from)?;
    }
    write_flo(out, &f)?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("flow");
    save_image(
        &out.with_file_name(format!("{stem}_warped.tnsr")),
        &warp(&ia, &f)?,
    )
}
