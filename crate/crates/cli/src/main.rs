use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use scn_cli::{
    cmd_eval, cmd_fuse_demo, cmd_gen, cmd_gradcheck, cmd_predict_grid, cmd_train, RunConfig,
};

/// Multi-channel 3D-cube successive convolution network for convective
/// storm nowcasting.
#[derive(Parser)]
#[command(name = "scn", version)]
struct Cli {
    /// Run configuration (`key = value` lines); defaults apply without it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic storm events.
    Gen,
    /// Train on held-out events or by k-fold cross-validation.
    Train,
    /// Score a trained model on the evaluation events.
    Eval,
    /// Forecast grid and overlay for one event at one issue time.
    PredictGrid {
        #[arg(long)]
        event: String,
        /// Issue time as a Unix timestamp.
        #[arg(long)]
        issue_time: u64,
    },
    /// Check backpropagation against finite differences.
    Gradcheck,
    /// Check fused convolution exactness and report its savings.
    FuseDemo,
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    let mut stdout = std::io::stdout();
    match cli.command {
        Command::Gen => cmd_gen(&cfg, &mut stdout),
        Command::Train => cmd_train(&cfg, &mut stdout),
        Command::Eval => cmd_eval(&cfg, &mut stdout),
        Command::PredictGrid { event, issue_time } => {
            cmd_predict_grid(&cfg, &event, issue_time, &mut stdout)
        }
        Command::Gradcheck => cmd_gradcheck(&cfg, &mut stdout),
        Command::FuseDemo => cmd_fuse_demo(&cfg, &mut stdout),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
