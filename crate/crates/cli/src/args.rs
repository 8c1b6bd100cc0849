use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "c2g",
    version,
    about = "Compress segmented-cell tables into grids and train compact CNNs on them"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override any config key, e.g. `--set train.batch_size=8`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Global seed; every stage derives its own seed from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: u16,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Positive class enriched in the channel-0-high phenotype.
    Planted,
    /// Both classes drawn from the same distribution.
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchitectureName {
    Deeplnino,
    Deepcnet,
}

#[derive(Debug, Args)]
pub struct CsvArgs {
    /// Column holding x in µm.
    #[arg(long, value_name = "NAME")]
    pub x_column: Option<String>,
    /// Column holding y in µm.
    #[arg(long, value_name = "NAME")]
    pub y_column: Option<String>,
    /// Property columns in channel order (comma separated).
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub properties: Option<Vec<String>>,
    /// Skip invalid rows instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the grid spacing for a batch of object tables.
    EstimateGrid {
        /// Object CSV files or directories of them (each with a JSON sidecar).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        csv: CsvArgs,
        /// Round the spacing to whole µm.
        #[arg(long)]
        round: bool,
        #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
        report: ReportFormat,
    },
    /// Compress object tables into grid images.
    Compress {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output directory for `.c2g` files.
        #[arg(short, long)]
        out: PathBuf,
        /// Fixed grid spacing in µm.
        #[arg(long = "d", value_name = "UM", conflicts_with = "auto")]
        d_um: Option<f64>,
        /// Estimate the spacing from the batch.
        #[arg(long)]
        auto: bool,
        /// Round an estimated spacing to whole µm.
        #[arg(long)]
        round: bool,
        /// Also write a multi-channel TIFF next to each container.
        #[arg(long)]
        tiff: bool,
        #[command(flatten)]
        csv: CsvArgs,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        report: ReportFormat,
    },
    /// Apply the augmentation pipeline to grid images.
    Augment {
        /// `.c2g` files or directories of them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        /// Augmented copies per input.
        #[arg(long, default_value_t = 1)]
        copies: usize,
        /// Write before/after PNG previews here.
        #[arg(long, value_name = "DIR")]
        preview: Option<PathBuf>,
        /// Channels shown as red, green and blue in previews.
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0usize, 1, 2])]
        channels: Vec<usize>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        report: ReportFormat,
    },
    /// Generate synthetic object tables with a planted class signal.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        /// Images per class.
        #[arg(long)]
        per_class: Option<usize>,
        /// Built-in task, used when the config has no `synth.spec`.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
    /// Train repeated runs on labelled grid images.
    Train {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output directory for checkpoints and the JSON report.
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        architecture: Option<ArchitectureName>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Disable augmentation during training.
        #[arg(long)]
        no_augment: bool,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        report: ReportFormat,
    },
    /// Evaluate a checkpoint on labelled grid images.
    Eval {
        #[arg(short, long)]
        model: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
        report: ReportFormat,
    },
    /// Dump first-layer weights and flag strongly weighted filters.
    InspectWeights {
        #[arg(short, long)]
        model: PathBuf,
        #[arg(long)]
        threshold: Option<f32>,
        /// Write the weight matrix as CSV (filters × channels).
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
        /// Write a PNG heatmap.
        #[arg(long, value_name = "FILE")]
        heatmap: Option<PathBuf>,
        /// Heatmap cell size in pixels.
        #[arg(long, default_value_t = 16)]
        cell: u32,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::EstimateGrid { .. } => "estimate-grid",
            Self::Compress { .. } => "compress",
            Self::Augment { .. } => "augment",
            Self::Synth { .. } => "synth",
            Self::Train { .. } => "train",
            Self::Eval { .. } => "eval",
            Self::InspectWeights { .. } => "inspect-weights",
        }
    }
}
