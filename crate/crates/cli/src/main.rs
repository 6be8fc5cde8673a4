//! `cascade`: every pipeline stage of cascaded pivot translation as a
//! subcommand.

mod bundle;
mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cascade",
    version,
    about = "Cascaded pivot translation with differentiable interfaces"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Rerun into a directory that already holds this run.
    #[arg(long, global = true)]
    pub force: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    TwoPass,
    Integrated,
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    ErrorProp,
    DataSize,
    Init,
    Length,
}

#[derive(Debug, Args)]
pub struct TrainData {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub trg: PathBuf,
    #[arg(long)]
    pub dev_src: Option<PathBuf>,
    #[arg(long, requires = "dev_src")]
    pub dev_ref: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic pivot translation task.
    GenData {
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build one vocabulary over text files.
    BuildVocab {
        #[arg(long = "input", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train an autoregressive model.
    PretrainAr {
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        src_vocab: PathBuf,
        /// Defaults to the source vocabulary.
        #[arg(long)]
        trg_vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train a non-autoregressive model with a length head.
    PretrainNat {
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        src_vocab: PathBuf,
        #[arg(long)]
        trg_vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble an integrated model from two pre-trained directories.
    Concat {
        #[arg(long)]
        s2p: PathBuf,
        #[arg(long)]
        p2t: PathBuf,
        /// states, states-no-encoder or posteriors.
        #[arg(long)]
        interface: Option<String>,
        /// Groups taken from the checkpoints, e.g. `s2p,p2t` or `none`.
        #[arg(long)]
        init: Option<String>,
        /// Pivot length policy.
        #[arg(long)]
        length: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune an integrated model on src→trg data.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: TrainData,
        /// Fixed pivots for an autoregressive first stage.
        #[arg(long)]
        pivots: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate a file.
    Translate {
        #[arg(long, value_enum, default_value_t = Mode::Single)]
        mode: Mode,
        /// Model directory (the first stage in two-pass mode).
        #[arg(long)]
        model: PathBuf,
        /// Second stage for two-pass mode.
        #[arg(long)]
        p2t: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        beam: Option<usize>,
        /// Pivot length policy of a non-autoregressive stage.
        #[arg(long)]
        length: Option<String>,
        /// References whose lengths the target-oracle policy uses.
        #[arg(long)]
        refs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode pivots for every source line once.
    SyntheticPivots {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sequence-level distillation corpus from an autoregressive teacher.
    Distill {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus BLEU of a hypothesis file.
    Score {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Character noise over a file.
    Noise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error-propagation or fine-tuning studies.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        #[arg(long)]
        s2p: PathBuf,
        #[arg(long)]
        p2t: PathBuf,
        /// Source side (test set for error-prop, training data otherwise).
        #[arg(long)]
        src: PathBuf,
        /// Pivot references (error-prop).
        #[arg(long)]
        piv: Option<PathBuf>,
        /// Target side.
        #[arg(long)]
        trg: PathBuf,
        #[arg(long)]
        dev_src: Option<PathBuf>,
        #[arg(long)]
        dev_ref: Option<PathBuf>,
        #[arg(long)]
        pivots: Option<PathBuf>,
        /// Noise levels, comma separated.
        #[arg(long, default_value = "0,0.05,0.1,0.2")]
        noise: String,
        #[arg(long, default_value_t = 10)]
        oracle_n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn init_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("CASCADE_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| format!("CASCADE_THREADS = '{v}' is not a thread count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.common.verbose);
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
