//! IP-based website fingerprinting for encrypted-DNS web traffic.
//!
//! When DNS and the TLS SNI field are encrypted, destination IP addresses are
//! the only name-like signal left on the wire. This crate builds per-website
//! IP fingerprints from browse observations and domain→IP mapping snapshots,
//! matches observed destination-IP traces against them with entropy-weighted
//! scoring, quantifies fingerprint drift over time, models HTTP-cache and
//! ad-blocking effects, and ships a deterministic synthetic-corpus simulator
//! that provides ground truth for every accuracy experiment.

pub mod cache;
pub mod domain;
pub mod entropy;
pub mod error;
pub mod fingerprint;
pub mod formats;
pub mod mapping_store;
pub mod matcher;
pub mod simulator;
pub mod stability;

pub use domain::{Domain, WebsiteId};
pub use error::{Error, Result};
