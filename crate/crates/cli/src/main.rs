mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use vocabsel::select::Strategy;

/// Dynamic target-vocabulary selection for neural machine translation.
#[derive(Debug, Parser)]
#[command(name = "vocabsel", version)]
pub struct Cli {
    /// `key = value` file supplying defaults for any flag of the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for counting, EM, phrase extraction, SVM training and sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct BitextArgs {
    /// Source side, one sentence per line.
    #[arg(long)]
    pub src: PathBuf,
    /// Target side, line-aligned with the source.
    #[arg(long)]
    pub tgt: PathBuf,
    #[arg(long)]
    pub src_vocab: PathBuf,
    #[arg(long)]
    pub tgt_vocab: PathBuf,
    /// Drop pairs with a side longer than this many tokens.
    #[arg(long)]
    pub max_sentence_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    #[arg(long)]
    pub src_vocab: PathBuf,
    #[arg(long)]
    pub tgt_vocab: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StatisticArg {
    Joint,
    Pmi,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Auto,
    Exact,
    Subspace,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Reconstruction,
    Euclidean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionArg {
    /// Source generates target.
    Forward,
    /// Target generates source.
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LinkSource {
    Symmetrized,
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CalibrationArg {
    Recall,
    Frequency,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic parallel corpus.
    Synth {
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        /// Distinct source content words.
        #[arg(long, default_value_t = 2_000)]
        vocab: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        src_out: PathBuf,
        #[arg(long)]
        tgt_out: PathBuf,
    },
    /// Shuffle a parallel corpus with a seed and hold out a fraction of it.
    Split {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output prefix; writes PREFIX.train.{src,tgt} and PREFIX.dev.{src,tgt}.
        #[arg(long)]
        prefix: PathBuf,
    },
    /// Build a frequency-ranked vocabulary from one side of a corpus.
    BuildVocab {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        max_size: usize,
        #[arg(long, default_value = "<unk>")]
        unk: String,
    },
    /// Count sentence-level co-occurrences and optionally write shortlists.
    CountCooccur {
        #[command(flatten)]
        bitext: BitextArgs,
        /// Binary table, input of train-pca.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Human-readable table.
        #[arg(long)]
        tsv: Option<PathBuf>,
        /// Top-k shortlist TSV for the cooccur or pmi strategy.
        #[arg(long)]
        shortlist: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = StatisticArg::Joint)]
        statistic: StatisticArg,
        #[arg(long, default_value_t = 50)]
        k: usize,
        /// Minimum target count for a PMI candidate.
        #[arg(long, default_value_t = 10)]
        pmi_floor: u64,
    },
    /// Factorize the Hellinger-transformed co-occurrence table.
    TrainPca {
        #[arg(long)]
        table: PathBuf,
        #[command(flatten)]
        vocabs: VocabArgs,
        #[arg(long, default_value_t = 1024)]
        dim: usize,
        #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
        solver: SolverArg,
        /// Subspace-iteration budget.
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Binary embedding.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Embedding vectors as TSV.
        #[arg(long)]
        tsv: Option<PathBuf>,
        #[arg(long)]
        shortlist: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long, value_enum, default_value_t = MetricArg::Reconstruction)]
        metric: MetricArg,
    },
    /// Train one direction of the word-alignment model.
    TrainAlign {
        #[command(flatten)]
        bitext: BitextArgs,
        #[arg(long, value_enum, default_value_t = DirectionArg::Forward)]
        direction: DirectionArg,
        #[arg(long, default_value_t = 5)]
        iterations: usize,
        /// Diagonal tension.
        #[arg(long, default_value_t = 4.0)]
        lambda: f64,
        /// Null-alignment probability.
        #[arg(long, default_value_t = 0.08)]
        p0: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Decode Viterbi alignments with a trained model, in Pharaoh format.
    AlignViterbi {
        #[command(flatten)]
        bitext: BitextArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Merge forward and reverse alignments with grow-diag-final-and.
    Symmetrize {
        #[command(flatten)]
        bitext: BitextArgs,
        #[arg(long)]
        forward: PathBuf,
        #[arg(long)]
        reverse: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Top-k aligned-translation shortlist TSV for the word_align strategy.
        #[arg(long)]
        shortlist: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Alignments whose links are counted for the shortlist.
        #[arg(long, value_enum, default_value_t = LinkSource::Symmetrized)]
        shortlist_from: LinkSource,
    },
    /// Extract consistent phrase pairs from symmetrized alignments.
    ExtractPhrases {
        #[command(flatten)]
        bitext: BitextArgs,
        #[arg(long)]
        alignment: PathBuf,
        #[arg(long, default_value_t = 5)]
        max_len: usize,
        #[arg(long, default_value_t = 1)]
        min_count: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train one linear classifier per target word.
    TrainSvm {
        #[command(flatten)]
        bitext: BitextArgs,
        #[arg(long, default_value_t = 1e-4)]
        reg: f64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        /// Negatives sampled per positive.
        #[arg(long, default_value_t = 10.0)]
        neg_ratio: f64,
        #[arg(long, default_value_t = 5)]
        min_positive: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Set classifier thresholds on a validation bitext.
    CalibrateSvm {
        #[command(flatten)]
        bitext: BitextArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = CalibrationArg::Recall)]
        mode: CalibrationArg,
        /// Target recall, or firing-rate multiplier in frequency mode.
        #[arg(long, default_value_t = 0.9)]
        value: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write the selected target vocabulary for each batch of input sentences.
    Select {
        #[command(flatten)]
        selector: SelectorArgs,
        #[command(flatten)]
        vocabs: VocabArgs,
        /// Source sentences.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        batch_size: usize,
        /// Target references; adds their known tokens to each selection.
        #[arg(long)]
        references: Option<PathBuf>,
        /// Defaults to standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Coverage and average vocabulary size of one selector on a test bitext.
    BenchCoverage {
        #[command(flatten)]
        bitext: BitextArgs,
        #[command(flatten)]
        selector: SelectorArgs,
        #[arg(long, default_value_t = 1)]
        batch_size: usize,
        /// CSV report, standard output by default.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Coverage over a grid of strategies, k, common words and batch sizes.
    Sweep {
        #[command(flatten)]
        bitext: BitextArgs,
        /// `strategy=path`, repeatable.
        #[arg(long = "resource", value_parser = parse_resource, required = true)]
        resources: Vec<(Strategy, PathBuf)>,
        #[arg(long, value_delimiter = ',', default_value = "10,20,50,100")]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        common: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,32")]
        batch_size: Vec<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Time output-layer scoring over vocabulary subsets of several sizes.
    BenchSpeed {
        #[arg(long, default_value_t = 100_000)]
        vocab_size: usize,
        #[arg(long, default_value_t = 512)]
        dim: usize,
        #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,5000,10000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SelectorArgs {
    #[arg(long)]
    pub strategy: Strategy,
    /// Shortlist TSV, phrase-table TSV or binary SVM ensemble.
    #[arg(long)]
    pub resource: PathBuf,
    /// Shortlist length, or target phrases per source phrase for `phrase`.
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    /// Most frequent target words always included.
    #[arg(long, default_value_t = 0)]
    pub common: usize,
}

fn parse_resource(s: &str) -> std::result::Result<(Strategy, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected strategy=path")?;
    let strategy = name.parse::<Strategy>().map_err(|e| e.to_string())?;
    Ok((strategy, PathBuf::from(path)))
}

fn parse_cli(args: Vec<OsString>) -> Result<std::result::Result<Cli, clap::Error>> {
    let cmd = Cli::command();
    let args = config::merge(args, &cmd)?;
    Ok(cmd.try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m)))
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<vocabsel::Error>())
        .map_or("error", |e| e.kind())
}

fn main() -> ExitCode {
    let parsed = match parse_cli(std::env::args_os().collect()) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error[{}]: {e:#}", error_kind(&e));
            return ExitCode::from(2);
        }
    };
    let cli = match parsed {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                e.exit();
            }
            // Clap messages span several lines; the first one names the problem.
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or_default();
            eprintln!("error[invalid_parameter]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let level = if cli.quiet {
        log::LevelFilter::Warn
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .parse_default_env()
        .init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e:#}", error_kind(&e));
            ExitCode::FAILURE
        }
    }
}
