use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ibsc::cli::{run_stage, Stage};
use ibsc::config::PipelineConfig;
use ibsc::eval::ClassifierKind;
use ibsc::Error;

#[derive(Parser)]
#[command(name = "ibsc", version, about = "Zero-shot learning by splicing seen-class features into unseen-class samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    keep_fraction: Option<f64>,

    /// Number of source classes per unseen class.
    #[arg(long, global = true)]
    k: Option<usize>,

    /// nearest_centroid or linear_ovr.
    #[arg(long, global = true)]
    classifier: Option<ClassifierKind>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic dataset.
    Synth,
    /// Learn the attribute/feature relation matrix.
    Relation,
    /// Build source plans and splice samples for the unseen classes.
    Construct,
    /// Score and filter constructed samples.
    Screen,
    /// Train on constructed samples and report accuracy.
    Eval,
    /// Compare against the baseline constructions.
    Compare,
    /// Run every stage in order.
    Pipeline,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Stage {
        match c {
            Command::Synth => Stage::Synth,
            Command::Relation => Stage::Relation,
            Command::Construct => Stage::Construct,
            Command::Screen => Stage::Screen,
            Command::Eval => Stage::Eval,
            Command::Compare => Stage::Compare,
            Command::Pipeline => Stage::Pipeline,
        }
    }
}

fn report_error(kind: &str, message: &str, code: u8) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn run(cli: &Cli) -> Result<String, Error> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.params.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(f) = cli.keep_fraction {
        cfg.params.keep_fraction = f;
    }
    if let Some(k) = cli.k {
        cfg.params.k = k;
    }
    if let Some(c) = cli.classifier {
        cfg.params.classifier = c;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    run_stage(cli.command.into(), &cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            return report_error("usage", first.trim_start_matches("error: "), 1);
        }
    };
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => report_error(e.kind(), &e.to_string(), e.exit_code() as u8),
    }
}
