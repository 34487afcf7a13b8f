//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid domain name {0:?}: must be non-empty")]
    InvalidDomain(String),

    #[error("invalid IP address {value:?} for domain {domain}")]
    InvalidIp { domain: String, value: String },

    #[error("snapshot for {0} has an empty IP set")]
    EmptyIpSet(String),

    #[error("batch {got} is lower than the last ingested batch {last}; ingestion batches must be non-decreasing")]
    BatchOrder { got: u32, last: u32 },

    #[error("mapping {domain} -> {ip} was observed at batch {batch}, outside the study window of {total_batches} batches")]
    BatchOutOfRange {
        domain: String,
        ip: String,
        batch: u32,
        total_batches: u32,
    },

    #[error("mapping record for {domain} -> {ip} has no observed batches")]
    EmptyBatches { domain: String, ip: String },

    #[error("live resolution is disabled; enable network access to resolve {0}")]
    NetworkDisabled(String),

    #[error("failed to resolve {domain}: {source}")]
    ResolutionFailed {
        domain: String,
        #[source]
        source: std::io::Error,
    },

    #[error("primary domain {domain} has no mapping at batch {batch}; fingerprint is unusable")]
    PrimaryUnresolved { domain: String, batch: u32 },

    #[error("cannot merge fingerprints for different websites: {0} vs {1}")]
    MixedWebsites(String, String),

    #[error("cannot merge an empty list of fingerprints")]
    EmptyMerge,

    #[error("domain count {count} for {domain} is outside 1..={total} websites")]
    CountOutOfRange {
        domain: String,
        count: u64,
        total: u64,
    },

    #[error("trace {0} has no events")]
    EmptyTrace(String),

    #[error("trace {trace} events are not time-ordered at index {index}")]
    UnorderedTrace { trace: String, index: usize },

    #[error("blocklist must contain at least one IP")]
    EmptyBlocklist,

    #[error("difference degree of two empty sets is undefined")]
    EmptySets,

    #[error("no labeled traces to compute accuracy over")]
    NoLabeledTraces,

    #[error("malformed cache directive value for {token:?}: {value:?}")]
    CacheDirective { token: String, value: String },

    #[error("freshness value {0} is not -1, 0, or a positive number of seconds")]
    InvalidFreshness(i64),

    #[error("infeasible simulator config: {0}")]
    InfeasibleConfig(String),

    #[error("{path}:{line}: {source}")]
    Jsonl {
        path: PathBuf,
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: invalid JSON: {message}")]
    JsonSyntax {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("{message}")]
    InvalidRecord { message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Attach file/line context to an error produced while decoding one line.
    pub fn at_line(self, path: &std::path::Path, line: usize) -> Error {
        Error::Jsonl {
            path: path.to_path_buf(),
            line,
            source: Box::new(self),
        }
    }
}
