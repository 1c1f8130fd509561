use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use synthvqa::pipeline::{self, Command, PipelineConfig};
use synthvqa::{Error, Exec};

/// Synthetic VQA data generation, feature swapping, alignment and toy
/// training from one config file.
#[derive(Parser, Debug)]
#[command(name = "synthvqa", version)]
struct Cli {
    /// TOML pipeline config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output root; each command writes one subdirectory of it.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads; 1 runs everything sequentially, 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Sample, place, render and verify scenes.
    Generate,
    /// Emit question-answer triplets for generated scenes.
    Qa,
    /// Simulate region features for scenes, or ingest a feature directory.
    Features,
    /// Build the pseudo-label dictionary of a feature store.
    Dict,
    /// Apply feature swapping offline to a real feature store.
    Swap,
    /// Report MMD and a permutation test between two feature stores.
    Mmd,
    /// Train the toy VQA model.
    Train,
    /// Evaluate a trained model.
    Eval,
    /// Run the multi-seed method comparison and emit the results table.
    Experiment,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Generate => Command::Generate,
            Cmd::Qa => Command::Qa,
            Cmd::Features => Command::Features,
            Cmd::Dict => Command::Dict,
            Cmd::Swap => Command::Swap,
            Cmd::Mmd => Command::Mmd,
            Cmd::Train => Command::Train,
            Cmd::Eval => Command::Eval,
            Cmd::Experiment => Command::Experiment,
        }
    }
}

fn fail(command: Command, e: &Error) -> ExitCode {
    let record = serde_json::json!({
        "command": command.as_str(),
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
    });
    eprintln!("{record}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = Command::from(cli.command);

    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    };
    let mut cfg = match cfg {
        Ok(c) => c,
        Err(e) => return fail(command, &e),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let exec = if cli.jobs == 1 { Exec::Sequential } else { Exec::Parallel };
    info!("{} with {} job(s)", command.as_str(), cli.jobs);

    match synthvqa::exec::with_jobs(cli.jobs, || pipeline::run(command, &cfg, &cli.out, exec)) {
        Ok(outcome) => {
            if command == Command::Experiment {
                let table = outcome.dir.join("results.txt");
                if let Ok(text) = std::fs::read_to_string(&table) {
                    print!("{text}");
                }
            }
            println!("{}", serde_json::to_string(&outcome).expect("outcome serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(command, &e),
    }
}
