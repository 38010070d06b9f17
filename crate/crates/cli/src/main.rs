//! Command-line entry points: data generation, finetuning, sampling, and
//! evaluation.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "disentune",
    about = "Identity-preserving disentangled finetuning on a synthetic benchmark",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the benchmark grid, write images + manifest, train and cache
    /// the probe classifiers.
    GenData {
        /// Run configuration file (key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finetune one subject and write a checkpoint plus step log.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Subject id within the benchmark inventory.
        #[arg(long)]
        subject: usize,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Override the weak-denoising weight (ablations).
        #[arg(long)]
        lambda2: Option<f64>,
        /// Override the contrastive weight (ablations).
        #[arg(long)]
        lambda3: Option<f64>,
        /// Drop the mask adapter and use a frozen projection instead.
        #[arg(long, default_value_t = false)]
        no_adapter: bool,
    },
    /// Generate images from a checkpoint under a prompt, optionally mixing
    /// in a reference image's visual embedding.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        prompt: String,
        /// Reference image (P6) whose identity-irrelevant embedding is
        /// mixed into the condition.
        #[arg(long, name = "ref")]
        reference: Option<PathBuf>,
        /// Mixing weight for the reference embedding.
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        /// Number of images to generate.
        #[arg(long, default_value_t = 4)]
        n: usize,
        /// Sampling seed; defaults to the checkpoint's run seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint: metrics, generation probes, eta sweep, or
    /// the ablation table.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_parser = ["metrics", "probes", "sweep", "ablate"])]
        suite: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successful exits; anything else is
            // a usage error
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };

    let result = match cli.command {
        Command::GenData { config, out } => commands::gen_data(&config, out.as_deref()),
        Command::Train { config, subject, out, lambda2, lambda3, no_adapter } => {
            commands::train(&config, subject, &out, lambda2, lambda3, no_adapter)
        }
        Command::Sample { ckpt, prompt, reference, eta, n, seed, out } => commands::sample(
            &ckpt,
            &prompt,
            reference.as_deref(),
            eta,
            n,
            seed,
            &out,
        ),
        Command::Eval { ckpt, suite, out } => commands::eval(&ckpt, &suite, &out),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CmdError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::CmdError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
