//! Command-line interface: `phantom | inject | preprocess | train | infer |
//! eval | report`, all operating on a shared run directory.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, bad config, missing
//! inputs), 2 runtime error.

use crate::config::RunConfig;
use crate::error::Error;
use crate::pipeline::{
    stage_eval, stage_infer, stage_inject, stage_phantom, stage_preprocess, stage_report,
    stage_train,
};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "strega",
    about = "Segmentation-regularised unsupervised anomaly detection",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonOpts {
    /// config file (line-oriented `key = value`, '#' comments)
    #[arg(long)]
    config: Option<PathBuf>,
    /// run directory for inputs and outputs
    #[arg(long, default_value = "runs/default")]
    out: PathBuf,
    /// master seed; overrides the config file
    #[arg(long)]
    seed: Option<u64>,
    /// working image side (power of two)
    #[arg(long)]
    side: Option<usize>,
    /// training epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// training batch size
    #[arg(long)]
    batch: Option<usize>,
    /// learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// loss weights as `kl,vae,ce`
    #[arg(long)]
    weights: Option<String>,
    /// structuring element side (odd)
    #[arg(long)]
    se_size: Option<usize>,
    /// minimum connected-component area kept
    #[arg(long)]
    area_threshold: Option<usize>,
    /// case or phantom count for the generating stages
    #[arg(long)]
    n: Option<usize>,
    /// comma-separated injector kinds
    #[arg(long)]
    kinds: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// generate anomaly-free phantom volumes
    Phantom(CommonOpts),
    /// build the synthetic anomaly test suite
    Inject(CommonOpts),
    /// build the segmentation-regularised training dataset
    Preprocess(CommonOpts),
    /// train the context-encoding VAE on the stored dataset
    Train(CommonOpts),
    /// run anomaly detection over the stored suite
    Infer(CommonOpts),
    /// score stored predictions against ground truth
    Eval(CommonOpts),
    /// aggregate evaluation records into the summary report
    Report(CommonOpts),
}

fn resolve_config(opts: &CommonOpts) -> crate::error::Result<RunConfig> {
    let mut cfg = match &opts.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(side) = opts.side {
        cfg.side = side;
    }
    if let Some(epochs) = opts.epochs {
        cfg.epochs = epochs;
    }
    if let Some(batch) = opts.batch {
        cfg.batch = batch;
    }
    if let Some(lr) = opts.lr {
        cfg.lr = lr;
    }
    if let Some(weights) = &opts.weights {
        let parts: Vec<&str> = weights.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "--weights expects 'kl,vae,ce', got '{weights}'"
            )));
        }
        cfg.w_kl = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad kl weight '{}'", parts[0])))?;
        cfg.w_vae = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad vae weight '{}'", parts[1])))?;
        cfg.w_ce = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad ce weight '{}'", parts[2])))?;
    }
    if let Some(se) = opts.se_size {
        cfg.se_size = se;
    }
    if let Some(thr) = opts.area_threshold {
        cfg.area_threshold = thr;
    }
    if let Some(n) = opts.n {
        cfg.n_cases = n;
    }
    if let Some(kinds) = &opts.kinds {
        cfg.kinds = kinds.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// 1 for validation problems the caller can fix, 2 for runtime failures.
fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Invalid(_) => 1,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 1,
        _ => 2,
    }
}

/// Run the CLI on an argument vector (first element is the program name).
/// Returns the process exit code instead of exiting, so tests can drive it.
pub fn cli_run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes; anything else is usage
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    eprintln!("{e}");
                    1
                }
            };
        }
    };

    let (opts, run): (
        &CommonOpts,
        fn(&RunConfig, &std::path::Path, usize) -> crate::error::Result<()>,
    ) = match &cli.command {
        Command::Phantom(o) => (o, |cfg, out, n| stage_phantom(cfg, out, n)),
        Command::Inject(o) => (o, |cfg, out, _| stage_inject(cfg, out)),
        Command::Preprocess(o) => (o, |cfg, out, _| stage_preprocess(cfg, out)),
        Command::Train(o) => (o, |cfg, out, _| stage_train(cfg, out)),
        Command::Infer(o) => (o, |cfg, out, _| stage_infer(cfg, out)),
        Command::Eval(o) => (o, |cfg, out, _| stage_eval(cfg, out)),
        Command::Report(o) => (o, |cfg, out, _| {
            let text = stage_report(cfg, out)?;
            println!("{text}");
            Ok(())
        }),
    };

    let cfg = match resolve_config(opts) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let n = opts.n.unwrap_or(4);
    match run(&cfg, &opts.out, n) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
