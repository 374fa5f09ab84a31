//! `jestcap`: batch frontend for corpus statistics, caption-generator
//! training and evaluation, curation, and humour-classifier training.

mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jestcap::KernelSpec;

#[derive(Parser, Debug)]
#[command(name = "jestcap", version, about = "Humorous image-caption toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Captions-per-image, grammar-pattern and emotion statistics.
    Stats(StatsArgs),
    /// Train the toy caption generator under a position-loss kernel.
    Train(TrainArgs),
    /// Generate captions from a checkpoint and score them.
    Eval(EvalArgs),
    /// Train and score one model per kernel and seed; print a trend table.
    Sweep(SweepArgs),
    /// Run a filter pipeline over a manifest.
    Curate(CurateArgs),
    /// Train the humour classifier against sampled negatives.
    TrainClassifier(ClassifierArgs),
    /// Write the built-in synthetic corpus and its context vectors.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Svg,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Tab-separated `token<TAB>TAG` lexicon; the bundled demo lexicon if absent.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Tag subset for grammar patterns, e.g. NOUN,VERB. Repeatable.
    #[arg(long = "subset", default_values = ["NOUN,VERB", "NOUN,VERB,ADJ"])]
    pub subsets: Vec<String>,
    #[arg(long, default_value = "keyword-lexicon")]
    pub emotion: String,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub contexts: PathBuf,
    /// `<variant>:<param>` or `none`.
    #[arg(long, default_value = "sigmoid:6.0")]
    pub kernel: KernelSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 32)]
    pub embed: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Manifest whose vocabulary the checkpoint was trained on.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub contexts: PathBuf,
    /// Image embedding table; required with --classifier.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    /// Dimension of the hashed caption embedding.
    #[arg(long, default_value_t = 64)]
    pub text_dim: usize,
    /// Captions generated per image; 1 means greedy decoding.
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 16)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Output report file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub contexts: PathBuf,
    /// Sigmoid alphas to compare.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8")]
    pub alpha_sweep: Vec<f64>,
    /// Add a `none` (plain likelihood) row.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 120)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Output table file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CurateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// TOML filter specification.
    #[arg(long)]
    pub filters: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ClassifierArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Image embedding table.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Caption embedding table keyed by caption text; hashed embeddings if absent.
    #[arg(long)]
    pub text_embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub text_dim: usize,
    /// TOML negative-sampling spec; cross-image swaps only if absent.
    #[arg(long)]
    pub sampling: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub contexts: usize,
    #[arg(long, default_value_t = 4)]
    pub templates: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Stats(a) => commands::stats(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Curate(a) => commands::curate(&a),
        Command::TrainClassifier(a) => commands::train_classifier(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
