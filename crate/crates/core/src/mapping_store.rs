//! Time-ranged domain→IP mapping store built from repeated DNS snapshots.
//!
//! The store is filled batch by batch (one batch per crawl epoch), answers
//! point-in-time lookups for the fingerprint builder, schedules re-resolution
//! under a rate limit, and classifies how long each mapping stayed alive.
//!
//! Concurrency: ingestion is single-writer (`&mut self`); once filled, a
//! `&MappingStore` is an immutable value that any number of reader threads
//! may share.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};

/// Minimum gap between two resolutions of the same domain: three hours.
pub const DEFAULT_RESOLUTION_INTERVAL_S: i64 = 10_800;

/// One DNS resolution result: the answer set for a domain at a point in time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsSnapshot {
    pub domain: Domain,
    pub ips: BTreeSet<IpAddr>,
    /// UTC seconds.
    pub resolved_at: i64,
}

impl DnsSnapshot {
    pub fn new(domain: Domain, ips: BTreeSet<IpAddr>, resolved_at: i64) -> Result<Self> {
        if ips.is_empty() {
            return Err(Error::EmptyIpSet(domain.to_string()));
        }
        Ok(DnsSnapshot {
            domain,
            ips,
            resolved_at,
        })
    }

    /// Build a snapshot from textual IPs, rejecting any malformed address.
    pub fn from_text(domain: &str, ips: &[&str], resolved_at: i64) -> Result<Self> {
        let domain = Domain::new(domain)?;
        let mut set = BTreeSet::new();
        for raw in ips {
            let ip: IpAddr = raw.parse().map_err(|_| Error::InvalidIp {
                domain: domain.to_string(),
                value: raw.to_string(),
            })?;
            set.insert(ip);
        }
        DnsSnapshot::new(domain, set, resolved_at)
    }
}

/// One (domain, ip) pair and the batches in which it was observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingRecord {
    pub domain: Domain,
    pub ip: IpAddr,
    pub observed_batches: BTreeSet<u32>,
}

impl MappingRecord {
    pub fn new(domain: Domain, ip: IpAddr, observed_batches: BTreeSet<u32>) -> Result<Self> {
        if observed_batches.is_empty() {
            return Err(Error::EmptyBatches {
                domain: domain.to_string(),
                ip: ip.to_string(),
            });
        }
        Ok(MappingRecord {
            domain,
            ip,
            observed_batches,
        })
    }

    pub fn first_seen_batch(&self) -> u32 {
        *self.observed_batches.iter().next().expect("non-empty")
    }

    pub fn last_seen_batch(&self) -> u32 {
        *self.observed_batches.iter().next_back().expect("non-empty")
    }
}

/// How long a mapping lived relative to the study window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LongevityClass {
    /// Observations fit inside a window of at most three consecutive batches.
    Dynamic,
    /// Observed in every batch of the study window.
    Static,
    /// Everything in between.
    Intermediate,
}

impl LongevityClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            LongevityClass::Dynamic => "dynamic",
            LongevityClass::Static => "static",
            LongevityClass::Intermediate => "intermediate",
        }
    }
}

/// Classify a mapping's longevity given the total number of batches.
///
/// Static takes precedence when the study window itself is three batches or
/// shorter, keeping the two classes mutually exclusive.
pub fn classify_longevity(record: &MappingRecord, total_batches: u32) -> Result<LongevityClass> {
    let last = record.last_seen_batch();
    if last >= total_batches {
        return Err(Error::BatchOutOfRange {
            domain: record.domain.to_string(),
            ip: record.ip.to_string(),
            batch: last,
            total_batches,
        });
    }
    if record.observed_batches.len() as u32 == total_batches {
        return Ok(LongevityClass::Static);
    }
    if last - record.first_seen_batch() <= 2 {
        return Ok(LongevityClass::Dynamic);
    }
    Ok(LongevityClass::Intermediate)
}

/// The store: all mapping records plus per-domain resolution bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MappingStore {
    records: BTreeMap<(Domain, IpAddr), MappingRecord>,
    last_resolved: BTreeMap<Domain, i64>,
    last_batch: Option<u32>,
}

impl MappingStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one snapshot under a batch index. Returns how many (domain, ip)
    /// pairs were seen for the first time.
    ///
    /// Batch indices must be non-decreasing over a pipeline run; snapshots
    /// within the same batch may arrive in any order.
    pub fn ingest_snapshot(&mut self, snapshot: &DnsSnapshot, batch_id: u32) -> Result<usize> {
        if let Some(last) = self.last_batch {
            if batch_id < last {
                return Err(Error::BatchOrder {
                    got: batch_id,
                    last,
                });
            }
        }
        self.last_batch = Some(batch_id);

        let mut new_pairs = 0;
        for &ip in &snapshot.ips {
            let key = (snapshot.domain.clone(), ip);
            match self.records.get_mut(&key) {
                Some(record) => {
                    record.observed_batches.insert(batch_id);
                }
                None => {
                    let record = MappingRecord {
                        domain: snapshot.domain.clone(),
                        ip,
                        observed_batches: BTreeSet::from([batch_id]),
                    };
                    self.records.insert(key, record);
                    new_pairs += 1;
                }
            }
        }

        let entry = self
            .last_resolved
            .entry(snapshot.domain.clone())
            .or_insert(snapshot.resolved_at);
        *entry = (*entry).max(snapshot.resolved_at);

        Ok(new_pairs)
    }

    /// Whether a domain should be re-resolved now. True when the domain was
    /// never resolved or the last resolution is at least `min_interval_s` old.
    pub fn due_for_resolution(&self, domain: &Domain, now: i64, min_interval_s: i64) -> bool {
        match self.last_resolved.get(domain) {
            None => true,
            Some(&last) => now - last >= min_interval_s,
        }
    }

    /// All IPs the domain mapped to at the given batch; empty when unknown.
    pub fn ips_of(&self, domain: &Domain, batch_id: u32) -> BTreeSet<IpAddr> {
        self.records
            .range((domain.clone(), IpAddr::from([0u8; 4]))..)
            .take_while(|((d, _), _)| d == domain)
            .filter(|(_, r)| r.observed_batches.contains(&batch_id))
            .map(|((_, ip), _)| *ip)
            .collect()
    }

    /// Iterate records in (domain, ip) order.
    pub fn records(&self) -> impl Iterator<Item = &MappingRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Rebuild a store from records, e.g. loaded from `mappings.jsonl`.
    /// Resolution timestamps are not part of the persisted form, so every
    /// domain starts out due for resolution.
    pub fn from_records(records: Vec<MappingRecord>) -> Self {
        let mut store = MappingStore::new();
        for record in records {
            let last = record.last_seen_batch();
            store.last_batch = Some(store.last_batch.map_or(last, |b| b.max(last)));
            store
                .records
                .insert((record.domain.clone(), record.ip), record);
        }
        store
    }
}

/// Resolve a domain through the system resolver, A and AAAA answers combined.
///
/// Gated behind `network_enabled` so offline pipelines fail fast instead of
/// blocking on the network; the scheduler treats failures as data, not as a
/// reason to stop.
pub fn resolve_live(domain: &Domain, network_enabled: bool) -> Result<DnsSnapshot> {
    use std::net::ToSocketAddrs;
    use std::time::{SystemTime, UNIX_EPOCH};

    if !network_enabled {
        return Err(Error::NetworkDisabled(domain.to_string()));
    }
    let addrs = (domain.as_str(), 443u16)
        .to_socket_addrs()
        .map_err(|e| Error::ResolutionFailed {
            domain: domain.to_string(),
            source: e,
        })?;
    let ips: BTreeSet<IpAddr> = addrs.map(|a| a.ip()).collect();
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0);
    DnsSnapshot::new(domain.clone(), ips, now).map_err(|_| Error::ResolutionFailed {
        domain: domain.to_string(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "resolver returned no addresses"),
    })
}
