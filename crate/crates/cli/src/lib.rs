//! Command implementations behind the `sliq` binary.
//!
//! Every command takes long-form flags and an optional `--config` JSON file.
//! Values come from the built-in defaults, then the file, then the flags.
//! The fully resolved record is written next to the outputs so a run can be
//! replayed from its output directory.

pub mod commands;
pub mod config;
pub mod output;

use clap::{Parser, Subcommand};

pub use commands::run;
pub use config::{ClassifyArgs, GenSynthArgs, PvmArgs, RankArgs, TrainArgs};

#[derive(Debug, Parser)]
#[command(name = "sliq", version, about = "Train and evaluate quantum similarity networks on a statevector simulator")]
pub struct Cli {
    /// Worker threads for batch and evaluation parallelism (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its manifest.
    GenSynth(GenSynthArgs),
    /// Train a model on a manifest's training split.
    Train(TrainArgs),
    /// Spearman ranking of model distances against color-histogram distances.
    EvalRank(RankArgs),
    /// Cluster embeddings with a Gaussian mixture and score the best label matching.
    EvalClassify(ClassifyArgs),
    /// Cross-slot anchor discrepancy over random pairs.
    EvalPvm(PvmArgs),
}
