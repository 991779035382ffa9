//! `antispoof`: batch front end for the countermeasure toolkit.
//!
//! Exit codes: 0 on success, 1 on any runtime failure (one line on stderr,
//! `error: <kind>: <message>`), 2 on usage errors.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use antispoof::config::Task;
use antispoof::protocol::Subset;
use antispoof::silence::{InterventionMode, TrimMode};
use antispoof::FeatureKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "antispoof", version, about = "Spoofing countermeasure experiments", arg_required_else_help = true)]
pub struct Cli {
    /// Worker threads for per-utterance work (0 = one per core). Results do
    /// not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Print every config key with its default and exit.
    #[arg(long)]
    pub dump_config: bool,

    /// Task used by --dump-config.
    #[arg(long, default_value = "LA", requires = "dump_config")]
    pub task: Task,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Args, Debug, Clone)]
pub struct ProtocolArgs {
    /// Protocol file (speaker utterance [environment] attack key).
    #[arg(long)]
    pub protocol: PathBuf,
    /// Partition manifest written by `partition`; restricts to --subset.
    #[arg(long, requires = "subset")]
    pub partition: Option<PathBuf>,
    /// train_tr, train_discarded, dev_es, dev_lr or dev_discarded.
    #[arg(long, requires = "partition")]
    pub subset: Option<Subset>,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArg {
    /// Experiment config (INI). Path keys may be overridden by ANTISPOOF_*
    /// environment variables.
    #[arg(long, alias = "pipeline")]
    pub config: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct AsvArgs {
    #[arg(long)]
    pub asv_p_miss: Option<f64>,
    #[arg(long)]
    pub asv_p_fa: Option<f64>,
    #[arg(long)]
    pub asv_p_miss_spoof: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Split train/dev protocols into train_tr, dev_es and dev_lr.
    Partition {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract features for every configured front end.
    Extract {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        protocol: ProtocolArgs,
        /// Overrides [paths] audio_root.
        #[arg(long)]
        audio_root: Option<PathBuf>,
        /// Only this configured front end.
        #[arg(long)]
        kind: Option<FeatureKind>,
        /// Trim silence before extraction.
        #[arg(long)]
        trim: Option<TrimMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the bonafide and spoof GMMs.
    TrainGmm {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        protocol: ProtocolArgs,
        /// Feature list written by `extract`.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a UBM on pooled frames of both classes.
    TrainUbm {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a total variability matrix.
    TrainTv {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[arg(long)]
        ubm: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract i-vectors as 1 × R feature files plus a feature list.
    ExtractIvectors {
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[arg(long)]
        tv: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a linear SVM on utterance-level vectors (i-vectors, LTAS).
    /// Repeated --features lists are concatenated per utterance in order.
    TrainSvm {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[arg(long, required = true)]
        features: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a protocol with GMMs (one frame-level feature list) or an SVM
    /// (utterance-level lists, in training order).
    Score {
        #[command(flatten)]
        protocol: ProtocolArgs,
        /// Directory holding bonafide.gmm and spoof.gmm.
        #[arg(long, conflicts_with = "svm")]
        gmm: Option<PathBuf>,
        #[arg(long, required_unless_present = "gmm")]
        svm: Option<PathBuf>,
        #[arg(long, required = true)]
        features: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train logistic-regression fusion weights.
    FuseTrain {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        protocol: ProtocolArgs,
        /// ID=score_file, repeatable.
        #[arg(long = "input", value_parser = parse_input, required = true)]
        inputs: Vec<(String, PathBuf)>,
        /// Named ensemble (E1, E2, E3) selecting a subset of the inputs.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply fusion weights.
    FuseApply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "input", value_parser = parse_input, required = true)]
        inputs: Vec<(String, PathBuf)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// EER and min t-DCF of a score file.
    Evaluate {
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[arg(long)]
        scores: PathBuf,
        /// Cost model source; the --asv-* flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        asv: AsvArgs,
        /// Write the full t-DCF threshold sweep as CSV.
        #[arg(long)]
        sweep_csv: Option<PathBuf>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class leading/trailing digital-silence statistics.
    AuditSilence {
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[arg(long)]
        audio_root: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Warn when class trailing medians differ by more than this factor.
        #[arg(long)]
        warn_ratio: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write silence-trimmed copies of the protocol's audio.
    Trim {
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[arg(long)]
        audio_root: PathBuf,
        #[arg(long, default_value = "trailing")]
        mode: TrimMode,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Baseline vs. silence-trimmed train and/or test.
    Intervene {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        mode: InterventionMode,
        /// Overrides [paths] train_protocol.
        #[arg(long)]
        train_protocol: Option<PathBuf>,
        /// Overrides [paths] dev_protocol.
        #[arg(long)]
        test_protocol: Option<PathBuf>,
        #[arg(long)]
        audio_root: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a two-class corpus differing only in trailing silence.
    SynthCorpus {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        per_class: usize,
        /// Extra trailing zeros on every spoof utterance.
        #[arg(long, default_value_t = 8000)]
        spoof_extra_trailing: usize,
        /// No silence at all, for a control corpus.
        #[arg(long)]
        silence_free: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_input(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((id, path)) if !id.is_empty() && !path.is_empty() => Ok((id.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected ID=PATH, got '{s}'")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if cli.dump_config {
        print!("{}", antispoof::config::ExperimentConfig::default_ini(cli.task));
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        use clap::CommandFactory;
        let _ = Cli::command().print_help();
        return ExitCode::from(2);
    };
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: runtime: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::run(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
