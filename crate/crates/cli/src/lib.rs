//! Command-line front end for `seqinv`. [`execute`] runs one invocation
//! in-process and returns its exit code.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use commands::Failure;

/// Consecutive-frame latent inversion against the built-in toy generator.
#[derive(Parser, Debug)]
#[command(name = "seqinv", version)]
struct Cli {
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (1 gives bitwise-reproducible runs).
    #[arg(long, global = true, env = "SEQINV_THREADS", value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Optimizer and loss overrides shared by `invert` and `eval`.
#[derive(Args, Debug, Clone)]
struct Tuning {
    /// Adam steps.
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    /// Weight of the flow-warp consistency term.
    #[arg(long = "lambda-icc", default_value_t = 1.0)]
    lambda_icc: f64,
    /// Weight of the pixel term.
    #[arg(long = "lambda-c", default_value_t = 1.0)]
    lambda_c: f64,
    /// Weight of the feature term.
    #[arg(long = "lambda-p", default_value_t = 1.0)]
    lambda_p: f64,
    /// Seed for the mean-latent initialisation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
#[group(multiple = false)]
struct VariantFlags {
    /// Independent per-frame codes instead of a base code plus directions.
    #[arg(long = "no-mac")]
    no_mac: bool,
    /// Drop the flow-warp consistency term.
    #[arg(long = "no-icc")]
    no_icc: bool,
    /// Neither constraint: plain per-image optimisation.
    #[arg(long)]
    baseline: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset with ground-truth latents.
    Synth {
        /// Dataset directory (created if missing).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Number of sequences.
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Frames per sequence (T).
        #[arg(long, default_value_t = 5)]
        frames: usize,
        /// Dataset seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Invert a sequence of TNSR frames into a result bundle.
    Invert {
        /// Input frames in temporal order.
        #[arg(required = true, value_name = "FRAME")]
        frames: Vec<PathBuf>,
        /// Result bundle directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        variant: VariantFlags,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Render `w + alpha * direction`.
    Edit {
        latent: PathBuf,
        direction: PathBuf,
        #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
        alpha: f64,
        /// Output TNSR path; a PPM preview is written alongside.
        #[arg(short, long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Render a linear interpolation between two latent codes.
    Morph {
        a: PathBuf,
        b: PathBuf,
        /// Number of images, endpoints included.
        #[arg(long, default_value_t = 5)]
        steps: usize,
        /// Directory for morph_<i>.tnsr/.ppm.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Replay a result bundle's directions on another latent code.
    Transfer {
        bundle: PathBuf,
        target: PathBuf,
        /// Multiplier applied to every direction.
        #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
        scale: f64,
        /// Directory for transfer_<k>.tnsr/.ppm and code_<k>.lat.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Invert every dataset sequence under each variant and write eval.csv.
    Eval {
        dataset: PathBuf,
        /// Comma-separated subset of full,no_mac,no_icc,baseline.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "full,no_mac,no_icc,baseline"
        )]
        variants: Vec<String>,
        /// Directory receiving eval.csv.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Estimate optical flow so that warp(a, flow) matches b.
    Flow {
        a: PathBuf,
        b: PathBuf,
        /// Output .flo path; the warped preview goes next to it.
        #[arg(short, long, value_name = "FILE")]
        out: PathBuf,
    },
}

/// True when `id` was typed on the command line (as opposed to defaulted).
fn given(m: &ArgMatches, id: &str) -> bool {
    matches!(m.value_source(id), Some(ValueSource::CommandLine))
}

fn run(cli: Cli, sub: &ArgMatches) -> Result<(), Failure> {
    let mut cfg = commands::load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth {
            out,
            count,
            frames,
            seed,
        } => {
            if given(sub, "count") {
                cfg.sequences = count;
            }
            if given(sub, "frames") {
                cfg.frames = frames;
            }
            if given(sub, "seed") {
                cfg.seeds.dataset = seed;
            }
            commands::synth(&cfg, &out)
        }
        Command::Invert {
            frames,
            out,
            variant,
            tuning,
        } => {
            apply_tuning(&mut cfg, &tuning, sub);
            if variant.baseline {
                cfg.variant = seqinv::Variant::Baseline;
            } else if variant.no_mac {
                cfg.variant = seqinv::Variant::NoMac;
            } else if variant.no_icc {
                cfg.variant = seqinv::Variant::NoIcc;
            }
            commands::invert(&cfg, &frames, &out)
        }
        Command::Edit {
            latent,
            direction,
            alpha,
            out,
        } => commands::edit(&cfg, &latent, &direction, alpha, &out),
        Command::Morph { a, b, steps, out } => commands::morph(&cfg, &a, &b, steps, &out),
        Command::Transfer {
            bundle,
            target,
            scale,
            out,
        } => {
            if given(sub, "scale") {
                cfg.transfer_scale = scale;
            }
            commands::transfer(&cfg, &bundle, &target, &out)
        }
        Command::Eval {
            dataset,
            variants,
            out,
            tuning,
        } => {
            apply_tuning(&mut cfg, &tuning, sub);
            commands::eval(&cfg, &dataset, &variants, &out)
        }
        Command::Flow { a, b, out } => commands::flow(&cfg, &a, &b, &out),
    }
}

fn apply_tuning(cfg: &mut seqinv::RunConfig, t: &Tuning, m: &ArgMatches) {
    if given(m, "steps") {
        cfg.adam.steps = t.steps;
    }
    if given(m, "lr") {
        cfg.adam.lr = t.lr;
    }
    if given(m, "lambda_icc") {
        cfg.weights.lambda_icc = t.lambda_icc;
    }
    if given(m, "lambda_c") {
        cfg.weights.lambda_c = t.lambda_c;
    }
    if given(m, "lambda_p") {
        cfg.weights.lambda_p = t.lambda_p;
    }
    if given(m, "seed") {
        cfg.seeds.init = t.seed;
    }
}

/// Parses `args` (program name first) and runs the command on a thread pool
/// of the requested size. Returns the process exit code.
pub fn execute<I, A>(args: I) -> u8
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return 2;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 2;
        }
    };
    let sub = matches
        .subcommand()
        .map(|(_, m)| m.clone())
        .expect("subcommand is required");
    match pool.install(|| run(cli, &sub)) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
