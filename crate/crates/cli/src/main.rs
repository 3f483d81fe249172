//! `fairtone` — skin tone annotation and bias-unlearning experiments.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, bad config keys),
//! 2 runtime failure (I/O, bad data, diverged training).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use fairtone_core::unlearn::Method;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation: flags, config keys, unparsable values.
    Usage(String),
    /// The run itself failed: I/O, bad data, diverged training.
    Runtime(String),
}

#[derive(Parser)]
#[command(
    name = "fairtone",
    version,
    about = "Skin tone labelling for lesion images and bias unlearning at desk scale",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label every image in a CSV manifest with its estimated skin tone
    #[command(after_help = config::ANNOTATE_KEYS_HELP)]
    Annotate(AnnotateArgs),
    /// Print the Fitzpatrick distribution of an annotation CSV
    Report(ReportArgs),
    /// Score automated labels against human labels from the manifest
    Agree(AgreeArgs),
    /// Generate a synthetic biased dataset and write it as CSV
    #[command(after_help = config::SYNTH_KEYS_HELP)]
    Synth(SynthArgs),
    /// Generate data, train one method, and evaluate bias removal
    #[command(after_help = TRAIN_AFTER_HELP)]
    Train(TrainArgs),
    /// Re-evaluate a saved model checkpoint
    #[command(after_help = TRAIN_AFTER_HELP)]
    Eval(EvalArgs),
    /// Check analytic gradients against central finite differences
    Gradcheck(GradcheckArgs),
}

// train and eval share the training/probe key table plus the spec keys
const TRAIN_AFTER_HELP: &str = concat!(
    "Spec file: see `fairtone synth --help` for the dataset keys.\n\n",
    "Config file keys (key = value; flags override file values):\n",
    "  method                  baseline | lntl | tabe | clgr  (default baseline)\n",
    "  learning_rate           SGD step size                  (default 0.01)\n",
    "  momentum                heavy-ball momentum [0, 1)     (default 0)\n",
    "  gr_lambda               gradient-reversal scale        (default 1)\n",
    "  reg_mu                  entropy regulariser weight     (default 0.01)\n",
    "  epochs                  training epochs                (default 100)\n",
    "  batch_size              minibatch size                 (default 32)\n",
    "  seed                    run seed (init + shuffling)    (default 0)\n",
    "  hidden_dim              extractor hidden width         (default 16)\n",
    "  feature_dim             feature embedding width K      (default 8)\n",
    "  head_depth              fc layers per head, 1 or 2     (default 1)\n",
    "  probe_epochs            bias-probe epochs              (default 100)\n",
    "  probe_learning_rate     bias-probe step size           (default 0.1)\n",
    "  probe_momentum          bias-probe momentum            (default 0.9)\n",
    "  probe_batch_size        bias-probe minibatch           (default 32)\n",
    "  probe_holdout_fraction  probe holdout split (0, 1)     (default 0.3)\n",
    "The probe seed always equals the run seed.",
);

#[derive(Args)]
struct AnnotateArgs {
    /// CSV manifest (image_id,path[,human_fitzpatrick,diagnosis])
    #[arg(long)]
    manifest: PathBuf,
    /// Optional key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output annotation CSV path
    #[arg(long)]
    out: PathBuf,
    /// Distribution report JSON path (default: <out>.report.json)
    #[arg(long)]
    report: Option<PathBuf>,
    /// Worker threads (overrides the config file)
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Annotation CSV produced by `annotate`
    #[arg(long)]
    annotations: PathBuf,
    /// Also write the report JSON here
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct AgreeArgs {
    /// Annotation CSV produced by `annotate`
    #[arg(long)]
    annotations: PathBuf,
    /// Manifest with `human_fitzpatrick` labels
    #[arg(long)]
    manifest: PathBuf,
    /// A prediction counts as correct within this distance
    #[arg(long, default_value_t = 1)]
    tolerance: u8,
}

#[derive(Args)]
struct SynthArgs {
    /// Optional key = value spec file
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: current directory)
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training method
    #[arg(long)]
    method: Method,
    /// Optional synthetic dataset spec file
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Optional key = value training config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the training seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the epoch count
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory (default: current directory)
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// model.json written by `train`
    #[arg(long)]
    model: PathBuf,
    /// Optional spec file; defaults to the spec stored in the checkpoint
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Optional training config file (probe_* keys apply)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the evaluation report JSON here
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-example scores CSV here
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Model and batch seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Maximum tolerated relative error
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Annotate(args) => {
            let config = config::annotate_config(&args.config, args.workers)?;
            commands::cmd_annotate(&args.manifest, &config, &args.out, args.report.as_deref())
        }
        Command::Report(args) => commands::cmd_report(&args.annotations, args.json.as_deref()),
        Command::Agree(args) => cmd_agree_checked(&args),
        Command::Synth(args) => {
            let spec = config::synth_spec(&args.spec, args.seed)?;
            commands::cmd_synth(&spec, &commands::out_dir_or_default(&args.out_dir))
        }
        Command::Train(args) => {
            let spec = config::synth_spec(&args.spec, None)?;
            let (train, probe) =
                config::train_config(&args.config, Some(args.method), args.seed, args.epochs)?;
            commands::cmd_train(&spec, &train, &probe, &commands::out_dir_or_default(&args.out_dir))
        }
        Command::Eval(args) => {
            let spec = match &args.spec {
                Some(_) => Some(config::synth_spec(&args.spec, None)?),
                None => None,
            };
            let (_, probe) = config::train_config(&args.config, None, None, None)?;
            commands::cmd_eval(
                &args.model,
                spec.as_ref(),
                &probe,
                args.out.as_deref(),
                args.scores.as_deref(),
            )
        }
        Command::Gradcheck(args) => commands::cmd_gradcheck(args.seed, args.tolerance),
    }
}

fn cmd_agree_checked(args: &AgreeArgs) -> Result<(), CliError> {
    if args.tolerance > 5 {
        return Err(CliError::Usage(format!(
            "tolerance must be in 0..=5, got {}",
            args.tolerance
        )));
    }
    commands::cmd_agree(&args.annotations, &args.manifest, args.tolerance)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // clap renders its own message (help goes to stdout, errors to
            // stderr)
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
