//! Command-line interface definition.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ipwf",
    version,
    about = "IP-based website fingerprinting toolkit",
    after_help = "Exit codes: 0 success, 1 input validation failure, 2 runtime error."
)]
pub struct Cli {
    /// Worker threads for matching and sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Simulator seed override (simulate and sweep only).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Suppress progress diagnostics on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Naive,
    Basic,
    Bucketed,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Domains,
    Ips,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build IP fingerprints from observations and the mapping store.
    BuildFingerprints {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        mappings: PathBuf,
        /// Batch to resolve domain-IP mappings at.
        #[arg(long)]
        batch: u32,
        #[arg(long)]
        out: PathBuf,
    },

    /// Compute per-domain and per-IP entropy tables.
    Entropy {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        mappings: PathBuf,
        #[arg(long)]
        batch: u32,
        #[arg(long)]
        out: PathBuf,
    },

    /// Match traces against a fingerprint database.
    Match {
        #[arg(long)]
        fingerprints: PathBuf,
        #[arg(long)]
        entropy: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Ad/tracker IP list, one address per line (required for --mode auto).
        #[arg(long)]
        blocklist: Option<PathBuf>,
        /// Seconds since the previous visit; positive values enable
        /// cache-aware matching (basic mode only).
        #[arg(long, default_value_t = 0)]
        revisit_elapsed: i64,
        /// Cache index CSV from `cache-analyze` (required when
        /// --revisit-elapsed is positive).
        #[arg(long)]
        cache_index: Option<PathBuf>,
        /// Candidates kept per match row.
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long)]
        out: PathBuf,
    },

    /// Per-website difference degrees across batches.
    Stability {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Mapping store (required for --kind ips).
        #[arg(long)]
        mappings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },

    /// Accuracy of an aged fingerprint database against labeled traces.
    AgedAccuracy {
        #[arg(long)]
        fingerprints: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        entropy: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Batch the traces were captured at; defaults to the database's
        /// build batch (age 0).
        #[arg(long)]
        trace_batch: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },

    /// Derive the per-(website, ip) cache freshness index.
    CacheAnalyze {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        mappings: PathBuf,
        #[arg(long)]
        batch: u32,
        #[arg(long)]
        out: PathBuf,
    },

    /// Classify mapping longevity into dynamic/static/intermediate.
    ClassifyMappings {
        #[arg(long)]
        mappings: PathBuf,
        #[arg(long)]
        total_batches: u32,
        #[arg(long)]
        out: PathBuf,
    },

    /// Generate a synthetic corpus with ground truth.
    Simulate {
        /// Corpus configuration (sim.json).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },

    /// Run an accuracy sweep over a parameter grid.
    Sweep {
        /// Grid configuration (grid.json).
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
    },

    /// Summarize a match file: accuracy, tie rate, candidate-set CDF.
    Report {
        #[arg(long)]
        matches: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}
