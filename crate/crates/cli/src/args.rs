use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "eog", version, about = "Edge-oriented document graphs for document-level relation extraction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a PubTator file into the document format and build a vocabulary.
    Prepare(PrepareArgs),
    /// Train a model; writes a run directory named by the config hash.
    Train(TrainArgs),
    /// Score a checkpoint on a split and print the metrics table.
    Evaluate(EvaluateArgs),
    /// Graph statistics, distance breakdown and ablation sweeps.
    Analyze {
        #[command(subcommand)]
        command: AnalyzeCommand,
    },
    /// Finite-difference gradient checks of every layer on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Edge counts per family before and after inference.
    GraphDump(GraphDumpArgs),
    /// Inter-sentence F1 by sentence distance.
    Distance(DistanceArgs),
    /// Train and score every point of a grid file.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// PubTator input.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for documents.jsonl, vocab.txt and stats.tsv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Keep mentions without a KB id.
    #[arg(long)]
    pub keep_ungrounded: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training documents (documents.jsonl from `prepare`).
    #[arg(long)]
    pub train: PathBuf,
    /// Development documents for early stopping.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Word vectors in text format.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Pairs to leave out: `doc_id<TAB>head<TAB>tail` per line.
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    /// Parent of the run directory.
    #[arg(long, default_value = "runs")]
    pub runs_dir: PathBuf,
    /// Stop once dev F1 reaches this value.
    #[arg(long)]
    pub target_f1: Option<f64>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    /// Write metrics.tsv and predictions.jsonl here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GraphDumpArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Write one JSON record per node pair here.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    /// Write distance.tsv and distance.jsonl here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Used for early stopping and, without --test, for scoring.
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// One grid point per line of space-separated key=value overrides.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    pub runs_dir: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
}

macro_rules! config_flags {
    ($($key:ident),* $(,)?) => {
        /// Training configuration: a key=value file, then per-key flags.
        #[derive(Debug, Default, Args)]
        pub struct ConfigArgs {
            /// Flat key=value configuration file.
            #[arg(long)]
            pub config: Option<PathBuf>,
            $(
                #[arg(long, alias = stringify!($key), value_name = "VALUE", help_heading = "Configuration")]
                pub $key: Option<String>,
            )*
        }

        impl ConfigArgs {
            /// Flag overrides as (key, value), in key order.
            pub fn overrides(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$key {
                        out.push((stringify!($key), v.as_str()));
                    }
                )*
                out
            }

            #[cfg(test)]
            pub fn keys() -> &'static [&'static str] {
                &[$(stringify!($key)),*]
            }
        }
    };
}

config_flags!(
    batch_size,
    learning_rate,
    gradient_clipping,
    early_stop_patience,
    regularization,
    dropout_word,
    dropout_classification,
    word_dim,
    node_type_dim,
    distance_dim,
    edge_dim,
    hidden_dim,
    beta,
    inference_iterations,
    variant,
    edges,
    node_types,
    mm_context,
    distances,
    seed,
    max_epochs,
    head_type,
    tail_type,
    freeze_words,
    exclude_in_training,
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_cover_every_config_key() {
        assert_eq!(ConfigArgs::keys(), eog::config::KEYS);
    }

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
