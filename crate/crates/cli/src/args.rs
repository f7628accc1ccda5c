use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "d2t", version, about = "Modular RDF-to-text generation")]
pub struct Cli {
    /// Global random seed [env: D2T_SEED; default 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML config file, or a manifest.json from an earlier run
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log more (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert WebNLG XML or JSONL into the interchange file
    Import(ImportArgs),
    /// Write per-stage train/dev/test datasets
    Extract(ExtractArgs),
    /// Train majority tables, realization rules or neural models
    Train(TrainArgs),
    /// Generate texts for a corpus split
    Run(RunArgs),
    /// Score a run against corpus references
    Eval(EvalArgs),
    /// Evaluate every deterministic baseline
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Import(_) => "import",
            Command::Extract(_) => "extract",
            Command::Train(_) => "train",
            Command::Run(_) => "run",
            Command::Eval(_) => "eval",
            Command::Report(_) => "report",
        }
    }
}

macro_rules! value_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
        pub enum $name {
            $(
                #[value(name = $text)]
                #[serde(rename = $text)]
                $variant,
            )+
        }
    };
}

value_enum!(TaskArg { Ordering => "ordering", Structuring => "structuring", Lex => "lex", Reg => "reg", E2e => "e2e", Realization => "realization" });
value_enum!(ExtractTask { Ordering => "ordering", Structuring => "structuring", Lex => "lex", Reg => "reg", E2e => "e2e" });
value_enum!(EngineArg { Random => "random", Majority => "majority", Neural => "neural" });
value_enum!(TrainEngine { Majority => "majority", Neural => "neural" });
value_enum!(RegArg { OnlyNames => "onlynames", Neural => "neural" });
value_enum!(ArchArg { Gru => "gru", Transformer => "transformer" });
value_enum!(Profile { Desk => "desk", Paper => "paper" });
value_enum!(Mode { Pipeline => "pipeline", E2e => "e2e" });
value_enum!(StageArg { Ordering => "ordering", Structuring => "structuring", Lex => "lex", Reg => "reg" });
value_enum!(SplitArg { Train => "train", Dev => "dev", Test => "test" });
value_enum!(Metric { Bleu => "bleu", Accuracy => "accuracy" });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportArgs {
    /// Directory of WebNLG XML files
    #[arg(long, value_name = "DIR", conflicts_with = "jsonl")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xml: Option<PathBuf>,
    /// JSONL file or directory of JSONL files
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jsonl: Option<PathBuf>,
    /// Interchange file to write
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractArgs {
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<ExtractTask>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskArg>,
    /// [default: neural; realization always extracts rules]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engine: Option<TrainEngine>,
    /// [default: gru]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arch: Option<ArchArg>,
    /// [default: desk]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,
    /// One model per seed [default: the global seed]
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    /// Subword merges; 0 disables [default: profile value for lex and e2e, 0 otherwise]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bpe_merges: Option<usize>,
    /// Minimum pair count for a merge [default: profile value]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bpe_threshold: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_updates: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    /// REG training epochs
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct RunArgs {
    /// [default: pipeline]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    /// [default: majority]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ordering: Option<EngineArg>,
    /// [default: majority]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structuring: Option<EngineArg>,
    /// [default: majority]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lex: Option<EngineArg>,
    /// [default: onlynames]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg: Option<RegArg>,
    /// Inject gold values for every stage up to this one
    #[arg(long, value_enum, value_name = "STAGE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_upto: Option<StageArg>,
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// [default: test]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitArg>,
    /// Directory written by `train --engine majority`; tables are otherwise
    /// built from the corpus train split
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tables: Option<PathBuf>,
    /// Checkpoints for neural ordering (repeat to ensemble)
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ordering_model: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub structuring_model: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub lex_model: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg_model: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub e2e_model: Vec<PathBuf>,
    /// Beam size for neural decoders
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beam: Option<usize>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalArgs {
    /// [default: bleu]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    /// Run directory (or its run.jsonl)
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<PathBuf>,
    /// Corpus holding the references
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refs: Option<PathBuf>,
    /// Directory for report.json and report.txt
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportArgs {
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Seeds of the random baselines [default: 1,2,3,4,5]
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}
