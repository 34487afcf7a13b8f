//! Trace matching: identify the visited website from a destination-IP trace.
//!
//! Every mode first pools the fingerprints whose primary IPs contain the
//! trace's first destination IP; only pool members are ever scored. Basic
//! matching sums per-IP entropy over the intersection of the remaining trace
//! IPs with a candidate's flat secondary set. Bucketed matching first splits
//! the remaining connections into three time clusters with deterministic
//! 1-D k-means and intersects cluster-by-bucket. Ties are broken toward the
//! lexicographically smallest website id and flagged.
//!
//! The fingerprint database and entropy table are immutable once built;
//! matching is pure per trace and embarrassingly parallel.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::collections::HashSet;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::cache::CacheIndex;
use crate::domain::WebsiteId;
use crate::entropy::EntropyTable;
use crate::error::{Error, Result};
use crate::fingerprint::IpFingerprint;

/// Time-ordered destination IPs of one page visit. The first event is the
/// primary connection `ip0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub trace_id: String,
    pub events: Vec<TraceEvent>,
    pub truth: Option<WebsiteId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub t_ms: i64,
    pub dst_ip: IpAddr,
}

impl Trace {
    pub fn new(trace_id: String, events: Vec<TraceEvent>, truth: Option<WebsiteId>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::EmptyTrace(trace_id));
        }
        for (index, pair) in events.windows(2).enumerate() {
            if pair[1].t_ms < pair[0].t_ms {
                return Err(Error::UnorderedTrace {
                    trace: trace_id,
                    index: index + 1,
                });
            }
        }
        Ok(Trace {
            trace_id,
            events,
            truth,
        })
    }

    /// The primary connection's destination.
    pub fn primary_ip(&self) -> IpAddr {
        self.events[0].dst_ip
    }

    /// Everything after the primary connection.
    pub fn secondary_events(&self) -> &[TraceEvent] {
        &self.events[1..]
    }

    /// Distinct destination IPs of the secondary connections.
    pub fn distinct_secondary_ips(&self) -> BTreeSet<IpAddr> {
        self.secondary_events().iter().map(|e| e.dst_ip).collect()
    }
}

/// Matching mode used to produce a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    #[serde(rename = "naive")]
    NaivePrimary,
    Basic,
    Bucketed,
}

impl MatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::NaivePrimary => "naive",
            MatchMode::Basic => "basic",
            MatchMode::Bucketed => "bucketed",
        }
    }
}

/// One scored pool member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub website_id: WebsiteId,
    pub score_bits: f64,
}

/// Outcome of matching one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub trace_id: String,
    pub mode: MatchMode,
    pub prediction: Option<WebsiteId>,
    /// Score of the predicted candidate; 0 when there is none.
    pub score_bits: f64,
    /// All pool members, sorted by descending score then ascending id.
    pub candidates: Vec<Candidate>,
    /// True when the top two scores are equal.
    pub tie: bool,
    /// Trace IPs that matched a fingerprint but had no entropy value; they
    /// scored 0. Diagnostic only.
    pub unknown_entropy_ips: usize,
}

/// Fingerprint database with a primary-IP pooling index.
#[derive(Debug, Clone, Default)]
pub struct FingerprintDb {
    fingerprints: Vec<IpFingerprint>,
    by_primary_ip: HashMap<IpAddr, Vec<usize>>,
}

impl FingerprintDb {
    pub fn new(fingerprints: Vec<IpFingerprint>) -> Self {
        let mut by_primary_ip: HashMap<IpAddr, Vec<usize>> = HashMap::new();
        for (index, fp) in fingerprints.iter().enumerate() {
            for &ip in &fp.primary_ips {
                by_primary_ip.entry(ip).or_default().push(index);
            }
        }
        FingerprintDb {
            fingerprints,
            by_primary_ip,
        }
    }

    pub fn fingerprints(&self) -> &[IpFingerprint] {
        &self.fingerprints
    }

    pub fn len(&self) -> usize {
        self.fingerprints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fingerprints.is_empty()
    }

    /// Pool of fingerprints whose primary part contains `ip0`.
    pub fn pool(&self, ip0: IpAddr) -> impl Iterator<Item = &IpFingerprint> {
        self.by_primary_ip
            .get(&ip0)
            .into_iter()
            .flatten()
            .map(move |&index| &self.fingerprints[index])
    }
}

fn finish(
    trace: &Trace,
    mode: MatchMode,
    mut candidates: Vec<Candidate>,
    unknown_entropy_ips: usize,
    predict_on_ambiguity: bool,
) -> MatchResult {
    candidates.sort_by(|a, b| {
        b.score_bits
            .total_cmp(&a.score_bits)
            .then_with(|| a.website_id.cmp(&b.website_id))
    });
    let tie = candidates.len() >= 2 && candidates[0].score_bits == candidates[1].score_bits;
    let prediction = match candidates.first() {
        Some(top) if predict_on_ambiguity || candidates.len() == 1 => {
            Some(top.website_id.clone())
        }
        _ => None,
    };
    let score_bits = match &prediction {
        Some(_) => candidates[0].score_bits,
        None => 0.0,
    };
    MatchResult {
        trace_id: trace.trace_id.clone(),
        mode,
        prediction,
        score_bits,
        candidates,
        tie,
        unknown_entropy_ips,
    }
}

/// Naive primary-domain matching: the pool alone is the answer. A prediction
/// is made only when the primary IP identifies exactly one website.
pub fn match_naive_primary(trace: &Trace, db: &FingerprintDb) -> MatchResult {
    let candidates = db
        .pool(trace.primary_ip())
        .map(|fp| Candidate {
            website_id: fp.website_id.clone(),
            score_bits: 0.0,
        })
        .collect();
    finish(trace, MatchMode::NaivePrimary, candidates, 0, false)
}

fn score_flat(
    trace_ips: &BTreeSet<IpAddr>,
    fp: &IpFingerprint,
    entropy: &EntropyTable,
    excluded: Option<&HashSet<IpAddr>>,
    unknown: &mut usize,
) -> f64 {
    let mut score = 0.0;
    for ip in trace_ips {
        if let Some(excluded) = excluded {
            if excluded.contains(ip) {
                continue;
            }
        }
        if fp.contains_secondary(ip) {
            match entropy.ip_bits(ip) {
                Some(bits) => score += bits,
                None => *unknown += 1,
            }
        }
    }
    score
}

/// Basic entropy-weighted matching over the flat secondary sets.
pub fn match_basic(trace: &Trace, db: &FingerprintDb, entropy: &EntropyTable) -> MatchResult {
    let trace_ips = trace.distinct_secondary_ips();
    let mut unknown = 0;
    let candidates = db
        .pool(trace.primary_ip())
        .map(|fp| Candidate {
            website_id: fp.website_id.clone(),
            score_bits: score_flat(&trace_ips, fp, entropy, None, &mut unknown),
        })
        .collect();
    finish(trace, MatchMode::Basic, candidates, unknown, true)
}

/// Deterministic 1-D k-means over secondary connection times, k = 3.
///
/// Centroids start at the 1/6, 3/6, and 5/6 quantiles of the timestamps and
/// Lloyd iterations run until assignments stabilize or 100 iterations pass.
/// Points equidistant to two centroids go to the lower-index one; a cluster
/// that empties keeps its previous centroid. Returned labels are cluster
/// indices reordered so that 0 is the earliest centroid.
pub fn cluster_times(times: &[i64]) -> Vec<usize> {
    const K: usize = 3;
    const MAX_ITERATIONS: usize = 100;

    if times.is_empty() {
        return Vec::new();
    }

    let mut sorted: Vec<f64> = times.iter().map(|&t| t as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| -> f64 {
        let pos = q * (sorted.len() - 1) as f64;
        let low = pos.floor() as usize;
        let high = pos.ceil() as usize;
        let weight = pos - low as f64;
        sorted[low] * (1.0 - weight) + sorted[high] * weight
    };
    let mut centroids = [quantile(1.0 / 6.0), quantile(3.0 / 6.0), quantile(5.0 / 6.0)];

    let mut labels = vec![0usize; times.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (label, &t) in labels.iter_mut().zip(times) {
            let mut best = 0usize;
            let mut best_distance = f64::INFINITY;
            for (index, &centroid) in centroids.iter().enumerate() {
                let distance = (t as f64 - centroid).abs();
                if distance < best_distance {
                    best_distance = distance;
                    best = index;
                }
            }
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }

        let mut sums = [0.0f64; K];
        let mut counts = [0usize; K];
        for (&label, &t) in labels.iter().zip(times) {
            sums[label] += t as f64;
            counts[label] += 1;
        }
        for index in 0..K {
            if counts[index] > 0 {
                centroids[index] = sums[index] / counts[index] as f64;
            }
        }
    }

    // Relabel so that cluster 0 has the earliest centroid.
    let mut order: [usize; K] = [0, 1, 2];
    order.sort_by(|&a, &b| centroids[a].total_cmp(&centroids[b]).then(a.cmp(&b)));
    let mut rank = [0usize; K];
    for (position, &cluster) in order.iter().enumerate() {
        rank[cluster] = position;
    }
    labels.iter().map(|&l| rank[l]).collect()
}

fn trace_clusters(trace: &Trace) -> [BTreeSet<IpAddr>; 3] {
    let events = trace.secondary_events();
    let times: Vec<i64> = events.iter().map(|e| e.t_ms).collect();
    let labels = cluster_times(&times);
    let mut clusters: [BTreeSet<IpAddr>; 3] = Default::default();
    for (event, label) in events.iter().zip(labels) {
        clusters[label].insert(event.dst_ip);
    }
    clusters
}

/// Enhanced matching: cluster the secondary connections by time and
/// intersect each cluster with the fingerprint bucket of the same rank.
/// An IP scores at most once per bucket.
pub fn match_bucketed(trace: &Trace, db: &FingerprintDb, entropy: &EntropyTable) -> MatchResult {
    let clusters = trace_clusters(trace);
    let mut unknown = 0;
    let candidates = db
        .pool(trace.primary_ip())
        .map(|fp| {
            let mut score = 0.0;
            for (cluster, bucket) in clusters.iter().zip(fp.bucket_ips.iter()) {
                for ip in cluster {
                    if bucket.contains(ip) {
                        match entropy.ip_bits(ip) {
                            Some(bits) => score += bits,
                            None => unknown += 1,
                        }
                    }
                }
            }
            Candidate {
                website_id: fp.website_id.clone(),
                score_bits: score,
            }
        })
        .collect();
    finish(trace, MatchMode::Bucketed, candidates, unknown, true)
}

/// Cache-aware basic matching for revisits.
///
/// Per candidate, secondary IPs whose resources would all still be served
/// from the local cache after `revisit_elapsed_s` seconds are excluded from
/// scoring; IPs hosting an uncachable, always-revalidate, or already-stale
/// resource still force a connection and remain. IPs missing from the index
/// are kept. `revisit_elapsed_s = 0` models a first visit: nothing is
/// cached, so the result is identical to [`match_basic`].
pub fn match_cache_aware(
    trace: &Trace,
    db: &FingerprintDb,
    entropy: &EntropyTable,
    revisit_elapsed_s: i64,
    cache_index: &CacheIndex,
) -> MatchResult {
    if revisit_elapsed_s <= 0 {
        return match_basic(trace, db, entropy);
    }
    let trace_ips = trace.distinct_secondary_ips();
    let mut unknown = 0;
    let candidates = db
        .pool(trace.primary_ip())
        .map(|fp| {
            let excluded: HashSet<IpAddr> = fp
                .secondary_ips()
                .into_iter()
                .filter(|ip| {
                    cache_index
                        .freshness(&fp.website_id, ip)
                        .is_some_and(|f| !f.forces_connection(revisit_elapsed_s))
                })
                .collect();
            Candidate {
                website_id: fp.website_id.clone(),
                score_bits: score_flat(&trace_ips, fp, entropy, Some(&excluded), &mut unknown),
            }
        })
        .collect();
    finish(trace, MatchMode::Basic, candidates, unknown, true)
}

/// IPs of known ad/tracker hosts, e.g. from a FireHOL-style list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blocklist {
    ips: HashSet<IpAddr>,
}

impl Blocklist {
    pub fn new(ips: impl IntoIterator<Item = IpAddr>) -> Result<Self> {
        let ips: HashSet<IpAddr> = ips.into_iter().collect();
        if ips.is_empty() {
            return Err(Error::EmptyBlocklist);
        }
        Ok(Blocklist { ips })
    }

    pub fn contains(&self, ip: &IpAddr) -> bool {
        self.ips.contains(ip)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdBlockDecision {
    AssumeBlocking,
    AssumeNotBlocking,
}

/// Outcome of probing one trace against the blocklist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdBlockVerdict {
    pub blocked_ip_hits: usize,
    pub decision: AdBlockDecision,
}

impl AdBlockVerdict {
    /// Mode the adversary should use given this verdict: bucketed matching
    /// relies on load-order structure that ad blocking destroys, so blocking
    /// clients are matched with the basic mode.
    pub fn preferred_mode(&self) -> MatchMode {
        match self.decision {
            AdBlockDecision::AssumeBlocking => MatchMode::Basic,
            AdBlockDecision::AssumeNotBlocking => MatchMode::Bucketed,
        }
    }
}

/// Count connections to blocklisted IPs and decide whether the client is
/// blocking ads. With the default threshold of 0, any hit at all means the
/// client is not blocking.
pub fn detect_adblock(trace: &Trace, blocklist: &Blocklist) -> AdBlockVerdict {
    detect_adblock_with_threshold(trace, blocklist, 0)
}

pub fn detect_adblock_with_threshold(
    trace: &Trace,
    blocklist: &Blocklist,
    max_hits_while_blocking: usize,
) -> AdBlockVerdict {
    let distinct: BTreeSet<IpAddr> = trace.events.iter().map(|e| e.dst_ip).collect();
    let hits = distinct.iter().filter(|ip| blocklist.contains(ip)).count();
    let decision = if hits <= max_hits_while_blocking {
        AdBlockDecision::AssumeBlocking
    } else {
        AdBlockDecision::AssumeNotBlocking
    };
    AdBlockVerdict {
        blocked_ip_hits: hits,
        decision,
    }
}

/// Auto mode: pick basic or bucketed matching per trace via the blocklist.
pub fn match_auto(
    trace: &Trace,
    db: &FingerprintDb,
    entropy: &EntropyTable,
    blocklist: &Blocklist,
) -> MatchResult {
    match detect_adblock(trace, blocklist).preferred_mode() {
        MatchMode::Basic => match_basic(trace, db, entropy),
        _ => match_bucketed(trace, db, entropy),
    }
}
