//! Fingerprint drift over time: the difference degree between two
//! observations of a website, the stable/unstable split, and matcher
//! accuracy with aged fingerprints.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::WebsiteId;
use crate::entropy::EntropyTable;
use crate::error::{Error, Result};
use crate::matcher::{self, FingerprintDb, MatchMode, Trace};

/// Websites with a difference degree below this value over a ten-day
/// horizon are considered stable.
pub const DEFAULT_STABILITY_THRESHOLD: f64 = 0.2;

/// Ten days expressed in 2.5-day crawl batches.
pub const DEFAULT_STABILITY_HORIZON_BATCHES: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Domains,
    Ips,
}

/// Drift of one website's contacted set between two batches.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceReport {
    pub website_id: WebsiteId,
    pub t0_batch: u32,
    pub t1_batch: u32,
    pub degree: f64,
    pub set_kind: SetKind,
}

/// Fraction of elements that changed between the two sets:
/// `|union - intersection| / |union|`, i.e. the Jaccard distance.
/// 0 means the sets are equal; 1 means they are disjoint.
pub fn difference_degree<T: Ord>(set_t0: &BTreeSet<T>, set_t1: &BTreeSet<T>) -> Result<f64> {
    let union = set_t0.union(set_t1).count();
    if union == 0 {
        return Err(Error::EmptySets);
    }
    let intersection = set_t0.intersection(set_t1).count();
    Ok((union - intersection) as f64 / union as f64)
}

/// Partition websites into stable and unstable groups. A website is stable
/// when every one of its reports stays strictly below the threshold.
pub fn split_stable_unstable(
    reports: &[DifferenceReport],
    threshold: f64,
) -> (BTreeSet<WebsiteId>, BTreeSet<WebsiteId>) {
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for report in reports {
        let entry = worst.entry(&report.website_id).or_insert(0.0);
        *entry = entry.max(report.degree);
    }
    let mut stable = BTreeSet::new();
    let mut unstable = BTreeSet::new();
    for (website, degree) in worst {
        if degree < threshold {
            stable.insert(website.to_string());
        } else {
            unstable.insert(website.to_string());
        }
    }
    (stable, unstable)
}

/// Streaming tally of match outcomes against ground truth. A match counts
/// as correct only when the prediction equals the truth and is not tied:
/// an ambiguous top score identifies nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct AccuracyCounter {
    labeled: u64,
    correct: u64,
}

impl AccuracyCounter {
    pub fn observe(&mut self, result: &crate::matcher::MatchResult, truth: &str) {
        self.labeled += 1;
        if !result.tie && result.prediction.as_deref() == Some(truth) {
            self.correct += 1;
        }
    }

    pub fn labeled(&self) -> u64 {
        self.labeled
    }

    pub fn accuracy(&self) -> Result<f64> {
        if self.labeled == 0 {
            return Err(Error::NoLabeledTraces);
        }
        Ok(self.correct as f64 / self.labeled as f64)
    }
}

/// Fraction of labeled traces identified correctly by the given mode when
/// matched against a (possibly older) fingerprint database.
pub fn aged_accuracy(
    db: &FingerprintDb,
    entropy: &EntropyTable,
    traces: &[Trace],
    mode: MatchMode,
) -> Result<f64> {
    let mut counter = AccuracyCounter::default();
    for trace in traces {
        let Some(truth) = &trace.truth else { continue };
        let result = match mode {
            MatchMode::NaivePrimary => matcher::match_naive_primary(trace, db),
            MatchMode::Basic => matcher::match_basic(trace, db, entropy),
            MatchMode::Bucketed => matcher::match_bucketed(trace, db, entropy),
        };
        counter.observe(&result, truth);
    }
    counter.accuracy()
}
