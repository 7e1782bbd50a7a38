mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phd_core::data::Format;
use phd_core::downstream::Metric;
use phd_core::gnn::Readout;
use phd_core::phd::Direction;

#[derive(Debug, Parser)]
#[command(name = "phd", version, about = "Half-graph discrimination pre-training for graph encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pre-train an encoder and write a checkpoint, a log CSV and a manifest.
    Pretrain(PretrainArgs),
    /// Write per-graph embeddings from a checkpoint as CSV.
    Embed(EmbedArgs),
    /// Cross-validated linear probe over an embedding CSV.
    Probe(ProbeArgs),
    /// Supervised fine-tuning of a pre-trained encoder with a linear head.
    Finetune(FinetuneArgs),
    /// Generate a synthetic dataset as JSON lines.
    GenSynth(GenSynthArgs),
    /// Print dataset statistics.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// TU dataset directory or JSON-lines file.
    #[arg(long)]
    data: PathBuf,
    /// Defaults to `tu` for directories and `jsonl` otherwise.
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Uni,
    Bi,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Uni => Direction::Unidirectional,
            DirectionArg::Bi => Direction::Bidirectional,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReadoutArg {
    Collection,
    Mean,
}

impl From<ReadoutArg> for Readout {
    fn from(r: ReadoutArg) -> Self {
        match r {
            ReadoutArg::Collection => Readout::Collection,
            ReadoutArg::Mean => Readout::Mean,
        }
    }
}

#[derive(Debug, Args)]
struct PretrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = DirectionArg::Uni)]
    direction: DirectionArg,
    /// Weight of the attribute-masking loss; 0 disables it.
    #[arg(long, default_value_t = 0.0)]
    mask_lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Also save the checkpoint every this many epochs; 0 saves only at the end.
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    /// Per-epoch log; defaults to `<out>.log.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, value_enum, default_value_t = ReadoutArg::Mean)]
    readout: ReadoutArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Take labels from the dataset given by `--data`, or from the CSV label
    /// column when no dataset is given.
    #[arg(long, conflicts_with = "labels")]
    labels_from_data: bool,
    #[arg(long, requires = "labels_from_data")]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    format: Option<Format>,
    /// File with one integer class label per line, in row order.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; defaults to `<embeddings>.probe.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    ckpt: PathBuf,
    /// Lines of `<graph_index> <train|valid|test>`.
    #[arg(long)]
    split: PathBuf,
    #[arg(long, default_value = "auc")]
    metric: Metric,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, value_enum, default_value_t = ReadoutArg::Mean)]
    readout: ReadoutArg,
    /// Train only the head.
    #[arg(long)]
    freeze_encoder: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; defaults to `<ckpt>.finetune.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenSynthArgs {
    /// Preset name (`two-family`) or a JSON spec file.
    #[arg(long)]
    spec: String,
    /// Graphs per family for the preset.
    #[arg(long, default_value_t = 100)]
    per_family: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[command(flatten)]
    data: DataArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Pretrain(a) => commands::pretrain(a),
        Command::Embed(a) => commands::embed(a),
        Command::Probe(a) => commands::probe(a),
        Command::Finetune(a) => commands::finetune(a),
        Command::GenSynth(a) => commands::gen_synth(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
