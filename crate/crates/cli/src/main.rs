//! `elical`: synthesize, validate, annotate, build targets, score
//! baselines, train probes, evaluate and sweep.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error,
//! 3 remote judge failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use elical_core::baselines::BaselineMethod;
use elical_core::judge::AnnotatePasses;
use elical_core::probe::Mode;

use commands::{CmdResult, Ctx};

#[derive(Parser, Debug)]
#[command(
    name = "elical",
    version,
    about = "Confidence elicitation and calibration pipeline",
    after_help = "Any config key can be overridden with --section.key VALUE, e.g. --train.learning_rate 1e-3."
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for inputs and outputs (overrides paths.work_dir).
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Pass {
    Consistency,
    Correctness,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic benchmark with its ground-truth sidecar.
    Synth,
    /// Check a question file against its inferred manifest.
    Validate {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Judge consistency and correctness of every response.
    Annotate {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Passes to run (default: both).
        #[arg(long, value_enum, value_delimiter = ',')]
        passes: Vec<Pass>,
    },
    /// Build self-consistency and accuracy targets from annotations.
    Targets,
    /// Score training-free baselines.
    Baseline {
        /// Methods to score (default: baseline.methods from the config).
        #[arg(long = "method", value_delimiter = ',', value_parser = parse_method)]
        methods: Vec<BaselineMethod>,
    },
    /// Train a probe in one of the three modes.
    Train {
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        /// Correctness-labeled questions for Stage 2 (default: all labeled).
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a probe checkpoint or a baseline score file on the evaluation split.
    Eval {
        #[arg(long, conflicts_with = "scores")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train and score every (budget, mode, seed) cell.
    Sweep,
    /// Summarize a sweep CSV as a markdown table.
    Report,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("unknown mode `{s}` (expected eli_only, cal_only or elical)"))
}

fn parse_method(s: &str) -> Result<BaselineMethod, String> {
    BaselineMethod::parse(s).ok_or_else(|| {
        let names: Vec<&str> = BaselineMethod::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method `{s}` (expected one of {})", names.join(", "))
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth => "synth",
        Command::Validate { .. } => "validate",
        Command::Annotate { .. } => "annotate",
        Command::Targets => "targets",
        Command::Baseline { .. } => "baseline",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Sweep => "sweep",
        Command::Report => "report",
    }
}

fn dispatch(cli: Cli, overrides: &[(String, String)]) -> CmdResult {
    let config = config::load(cli.config.as_deref(), overrides, cli.work_dir.as_deref())?;
    let ctx = Ctx {
        config,
        command: command_name(&cli.command),
    };
    match cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::Validate { input } => commands::validate(&ctx, input),
        Command::Annotate { input, passes } => {
            let passes = if passes.is_empty() {
                AnnotatePasses::default()
            } else {
                AnnotatePasses {
                    consistency: passes.contains(&Pass::Consistency),
                    correctness: passes.contains(&Pass::Correctness),
                }
            };
            commands::annotate(&ctx, input, passes)
        }
        Command::Targets => commands::targets(&ctx),
        Command::Baseline { methods } => commands::baseline(&ctx, methods),
        Command::Train { mode, budget, output } => commands::train(&ctx, mode, budget, output),
        Command::Eval {
            checkpoint,
            scores,
            output,
        } => commands::eval(&ctx, checkpoint, scores, output),
        Command::Sweep => commands::sweep(&ctx),
        Command::Report => commands::report(&ctx),
    }
}

fn main() -> ExitCode {
    let (argv, overrides) = match config::extract_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
