//! `abbrexp`: build vocabularies and examples, train, evaluate and expand.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 gradient check
//! above tolerance.

mod commands;
mod config;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "abbrexp",
    version,
    about = "Abbreviation tag prediction and expansion"
)]
struct Cli {
    /// File of key=value lines supplying defaults for any flag
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct Lexicon {
    /// Morphological dictionary (form, lemma, tag per line)
    #[arg(long, value_name = "FILE")]
    pub dict: PathBuf,
    /// Abbreviation table (abbreviation, base form per line)
    #[arg(long, value_name = "FILE")]
    pub abbrevs: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct Vocabs {
    #[arg(long, value_name = "FILE")]
    pub input_vocab: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub output_vocab: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic corpus, dictionary and abbreviation table
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Build the input and output tag vocabularies from a corpus
    #[command(args_override_self = true)]
    Vocab(VocabArgs),
    /// Write the training examples found in a corpus
    #[command(args_override_self = true)]
    Gen(GenArgs),
    /// Train a model on a corpus
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Evaluate a trained model on a corpus
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Fit the most-frequent-tag baseline
    #[command(args_override_self = true)]
    Baseline(BaselineArgs),
    /// Compare analytic gradients with finite differences
    #[command(args_override_self = true)]
    Gradcheck(GradcheckArgs),
    /// Expand the marked abbreviation of each sentence
    #[command(args_override_self = true)]
    Expand(ExpandArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory for corpus.txt, dict.tsv and abbrevs.tsv
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub sentences: usize,
    /// Overrides the grammar's seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grammar spec; the bundled default when absent
    #[arg(long, value_name = "FILE")]
    pub grammar: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VocabArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub lexicon: Lexicon,
    #[command(flatten)]
    pub vocabs: Vocabs,
    #[arg(long, default_value_t = abbrexp::corpus::DEFAULT_MAX_LEN)]
    pub max_len: usize,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub lexicon: Lexicon,
    #[command(flatten)]
    pub vocabs: Vocabs,
    #[arg(long, default_value_t = abbrexp::corpus::DEFAULT_MAX_LEN)]
    pub max_len: usize,
    /// Examples file to write
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub lexicon: Lexicon,
    #[command(flatten)]
    pub vocabs: Vocabs,
    /// Model file to write; the history goes to <model>.history.tsv
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = abbrexp::corpus::DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.1)]
    pub valid_fraction: f64,
    /// Stop after this many epochs without validation improvement
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub embedding_dim: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// LSTM units per direction
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 128)]
    pub fc_units: usize,
    /// Run on one thread
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub lexicon: Lexicon,
    #[command(flatten)]
    pub vocabs: Vocabs,
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, default_value_t = abbrexp::corpus::DEFAULT_MAX_LEN)]
    pub max_len: usize,
    /// Machine-readable report to write
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also score this baseline file on the same examples
    #[arg(long, value_name = "FILE")]
    pub baseline: Option<PathBuf>,
    /// Attribute value sets for the error analysis
    #[arg(long, value_name = "FILE")]
    pub schema: Option<PathBuf>,
    /// Fail on sentences with unknown tags instead of skipping them
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    /// Training corpus the modes are counted on
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub lexicon: Lexicon,
    #[command(flatten)]
    pub vocabs: Vocabs,
    #[arg(long, default_value_t = abbrexp::corpus::DEFAULT_MAX_LEN)]
    pub max_len: usize,
    /// Baseline file to write
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Corpus to score the fitted baseline on
    #[arg(long, value_name = "FILE")]
    pub eval_corpus: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub schema: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Randomized configurations checked after the fixed tiny one
    #[arg(long, default_value_t = 5)]
    pub configs: usize,
}

#[derive(Args, Debug)]
pub struct ExpandArgs {
    /// Sentences in vertical format, each with one token tagged <MASK> or brev
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub lexicon: Lexicon,
    #[command(flatten)]
    pub vocabs: Vocabs,
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Output file; standard output when absent
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Input or usage problems detected before any work starts.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Gradient check above tolerance.
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

fn main() -> ExitCode {
    let cmd = Cli::command();
    let args = match config::merge(std::env::args_os().collect(), &cmd) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Cmd::Synth(a) => commands::synth(&a),
        Cmd::Vocab(a) => commands::vocab(&a),
        Cmd::Gen(a) => commands::gen(&a),
        Cmd::Train(a) => commands::train(&a),
        Cmd::Eval(a) => commands::eval(&a),
        Cmd::Baseline(a) => commands::baseline(&a),
        Cmd::Gradcheck(a) => commands::gradcheck(&a),
        Cmd::Expand(a) => commands::expand(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<NumericFailure>().is_some() {
                ExitCode::from(3)
            } else if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
