use std::path::PathBuf;

use caise_model::{AblationMode, GateMode};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "caise", version, about = "Conversational image search and editing: data, training, evaluation and serving")]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// TOML config file with optional [model] and [service] tables (default: $CAISE_CONFIG).
    #[arg(long, global = true, env = "CAISE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Disable data-parallel execution.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Render a synthetic corpus (manifest plus PNG files) into a directory.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Validate a corpus manifest and write its search index.
    IngestCorpus {
        #[arg(long)]
        manifest: PathBuf,
        /// Index output path (default: index.json next to the manifest).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        feature_dim: usize,
    },
    /// Generate dialogues and write train/val/test JSONL splits.
    SynthData(SynthDataArgs),
    /// Train one model per seed; writes checkpoints and reports.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint, or a predictions file, against dialogue data.
    Eval {
        /// Dialogue JSONL with the ground truth.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, conflicts_with = "preds", required_unless_present = "preds")]
        checkpoint: Option<PathBuf>,
        /// One bracketed command per instance, in order; `-` for no prediction.
        #[arg(long)]
        preds: Option<PathBuf>,
        /// Write the checkpoint's predictions in the same format.
        #[arg(long, requires = "checkpoint")]
        write_preds: Option<PathBuf>,
    },
    /// Train and test all six input ablations and print a comparison table.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Also train the generator-only model.
        #[arg(long)]
        with_base: bool,
        /// Write the full results as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Central-difference gradient check of the full loss on a tiny model.
    Gradcheck {
        #[arg(long, value_delimiter = ',', default_values_t = [2020u64, 2021, 2022])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 3)]
        instances: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Apply one bracketed command to a PNG image.
    Exec {
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        cmd: String,
        #[arg(long)]
        out: PathBuf,
        /// Corpus manifest, needed for search commands.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Scripted proposer JSON, used when no checkpoint is given.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Dataset statistics for dialogue JSONL files.
    Stats {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SynthDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Corpus manifest to draw images from (default: a synthetic corpus).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 300)]
    pub dialogues: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 2020)]
    pub split_seed: u64,
    #[arg(long, default_value_t = 1)]
    pub corpus_seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub corpus_size: usize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory with train.jsonl, val.jsonl and optionally test.jsonl
    /// (default: the built-in synthetic benchmark).
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    Full,
    Micro,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub ablation: Option<AblationMode>,
    #[arg(long, value_parser = parse_gate)]
    pub gate: Option<GateMode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub embed: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

fn parse_gate(s: &str) -> Result<GateMode, String> {
    match s {
        "adaptive" => Ok(GateMode::Adaptive),
        "generator-only" => Ok(GateMode::GeneratorOnly),
        _ => Err(format!("unknown gate mode `{s}` (adaptive, generator-only)")),
    }
}
