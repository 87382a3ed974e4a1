mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mtlab::MtlabError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "mtlab", version, about = "Multi-talker transducer laboratory")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// JSON run configuration; missing keys take the toy preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's model/training seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for every artifact of the command.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for training.
    #[arg(long, global = true, env = "MTLAB_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
    Tune,
}

impl From<SplitArg> for mtlab::simdata::Split {
    fn from(s: SplitArg) -> Self {
        use mtlab::simdata::Split;
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
            SplitArg::Tune => Split::Tune,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write dataset manifests (JSON lines) for evaluation splits.
    GenData {
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [SplitArg::Dev, SplitArg::Test, SplitArg::Tune])]
        split: Vec<SplitArg>,
        #[arg(long, default_value_t = 200)]
        count: usize,
    },
    /// Train one system; `--resume` continues from `last.ckpt` in `--out`.
    Train {
        #[arg(long)]
        resume: bool,
    },
    /// Decode a dataset file with a trained model.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Greedy search instead of beam search.
        #[arg(long)]
        greedy: bool,
        #[arg(long, default_value_t = 16)]
        beam: usize,
        /// External LM weight β (0 disables the LM).
        #[arg(long, default_value_t = 0.0)]
        lm_weight: f64,
        /// Internal LM weight γ.
        #[arg(long, default_value_t = 0.0)]
        ilm_weight: f64,
        /// Sentences of synthetic text to train the bigram LM on.
        #[arg(long, default_value_t = 5000)]
        lm_sentences: usize,
    },
    /// Score decode outputs; each `--decode` is `LABEL=PATH`.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, required = true)]
        decode: Vec<String>,
    },
    /// Finite-difference gradient check of every training loss.
    Gradcheck,
    /// Randomized checks against brute-force references.
    OracleCheck {
        #[arg(long, default_value_t = 500)]
        cases: usize,
    },
    /// cpWER for beams 1, 2, 4, 8, 16; each `--model` is `LABEL=PATH`.
    SweepBeam {
        #[arg(long, required = true)]
        model: Vec<String>,
        #[arg(long)]
        data: PathBuf,
    },
}

/// Failures the caller can fix by changing its inputs exit with 1, the
/// rest with 2.
fn exit_code(e: &MtlabError) -> u8 {
    match e {
        MtlabError::Config(_)
        | MtlabError::Parse(_)
        | MtlabError::Label(_)
        | MtlabError::Checkpoint(_)
        | MtlabError::Unsupported(_)
        | MtlabError::Json(_)
        | MtlabError::DelayBelowOffset { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(&cli) {
        Ok(commands::Outcome::Ok) => ExitCode::SUCCESS,
        Ok(commands::Outcome::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
