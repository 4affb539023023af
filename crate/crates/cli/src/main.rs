//! `nahgec`: vocabulary building, training, decoding, language-model
//! reranking and scoring for grammatical error correction.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit statuses.
const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "nahgec", version, about = "Nested-attention hybrid grammatical error correction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by commands that resolve a training configuration.
/// Flags beat `--set`, which beats the file, which beats defaults.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// `key=value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// baseline, hybrid or nested
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Word-level beam width
    #[arg(long)]
    beam: Option<usize>,
    /// Character-level beam width
    #[arg(long)]
    char_beam: Option<usize>,
    /// Any other configuration key, as KEY=VALUE; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build word and character vocabularies (and optionally a correction
    /// lexicon) from a tab-separated parallel corpus
    BuildVocab {
        #[arg(long)]
        train: PathBuf,
        /// Vocabulary JSON to write
        #[arg(long)]
        out: PathBuf,
        /// Also write a word-correction lexicon here
        #[arg(long)]
        lexicon_out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train a model, writing checkpoints into a directory
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// Checkpoint directory
        #[arg(long)]
        out: PathBuf,
        /// Validation parallel corpus
        #[arg(long)]
        valid: Option<PathBuf>,
        /// Development M2 file; picks the final model by F0.5
        #[arg(long)]
        dev_m2: Option<PathBuf>,
        /// Continue from this checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Correct one tokenized sentence per line
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Corrected sentences
        #[arg(long)]
        out: PathBuf,
        /// Write `index ||| tokens ||| nn_logprob` candidates here
        #[arg(long)]
        nbest_out: Option<PathBuf>,
        /// Candidates per sentence in the n-best file
        #[arg(long, default_value_t = 1)]
        nbest: usize,
        /// Correction lexicon for unknown-word replacement
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train a modified Kneser-Ney language model on tokenized text
    TrainLm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        order: usize,
        /// Also export ARPA text here
        #[arg(long)]
        arpa: Option<PathBuf>,
    },
    /// Rerank an n-best list with a language model
    Rerank {
        #[arg(long)]
        nbest: PathBuf,
        #[arg(long)]
        lm: PathBuf,
        /// Best candidate per sentence
        #[arg(long)]
        out: PathBuf,
        /// Interpolation weight; tuned on --gold when omitted
        #[arg(long)]
        lambda: Option<f64>,
        /// Development M2 file for tuning the weight
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Comma-separated weights to try
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Score corrected output against M2 gold edits
    Score {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Also write the report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Break scores down by OOV segment and edit size
    Analyze {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Vocabulary deciding which source words are OOV
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, value_enum, default_value_t = Segment::All)]
        segment: Segment,
        #[arg(long, value_enum, default_value_t = Portion::All)]
        portion: Portion,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Segment {
    All,
    Oov,
    NonOov,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Portion {
    All,
    Small,
    Large,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use nahgec::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::Numeric(_)) => EXIT_NUMERIC,
        Some(Error::Config(_) | Error::Invalid(_)) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
