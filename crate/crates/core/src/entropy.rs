//! Information content of domains and IPs over a website corpus.
//!
//! A domain contacted by `c` of `N` corpus websites contributes
//! `-log2(c / N)` bits when observed. An IP inherits the entropy of the
//! corpus domains hosted on it: the value itself for a single domain, the
//! arithmetic mean for co-hosted domains. Domains hosted on an IP but absent
//! from the corpus are excluded from the average.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::net::IpAddr;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::fingerprint::BrowseObservation;
use crate::mapping_store::MappingStore;

/// Per-domain and per-IP information content in bits.
///
/// `total_websites` is the corpus size the table was computed over; it is 0
/// for tables reloaded from CSV, where only the bits survive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntropyTable {
    pub total_websites: u64,
    pub domain_bits: BTreeMap<Domain, f64>,
    pub ip_bits: BTreeMap<IpAddr, f64>,
}

impl EntropyTable {
    /// Compute the full table for a corpus of observations at one batch.
    pub fn build(
        observations: &[BrowseObservation],
        store: &MappingStore,
        batch_id: u32,
    ) -> Result<EntropyTable> {
        let (counts, total) = domain_website_counts(observations);
        let domain_bits = domain_entropy(&counts, total)?;
        let ip_bits = ip_entropy(store, batch_id, &domain_bits);
        Ok(EntropyTable {
            total_websites: total,
            domain_bits,
            ip_bits,
        })
    }

    pub fn from_maps(domain_bits: BTreeMap<Domain, f64>, ip_bits: BTreeMap<IpAddr, f64>) -> Self {
        EntropyTable {
            total_websites: 0,
            domain_bits,
            ip_bits,
        }
    }

    /// Bits contributed by one IP, if the corpus knows it.
    pub fn ip_bits(&self, ip: &IpAddr) -> Option<f64> {
        self.ip_bits.get(ip).copied()
    }
}

/// Count, for every domain, how many distinct websites contact it. The
/// primary domain counts as contacted. Returns the counts and the number of
/// distinct websites.
pub fn domain_website_counts(
    observations: &[BrowseObservation],
) -> (BTreeMap<Domain, u64>, u64) {
    let mut counts: BTreeMap<Domain, u64> = BTreeMap::new();
    let mut websites = BTreeSet::new();
    for obs in observations {
        if !websites.insert(obs.website_id.clone()) {
            continue;
        }
        let mut domains: BTreeSet<&Domain> = obs.requests.iter().map(|r| &r.domain).collect();
        domains.insert(&obs.primary_domain);
        for domain in domains {
            *counts.entry(domain.clone()).or_insert(0) += 1;
        }
    }
    (counts, websites.len() as u64)
}

/// `bits(d) = -log2(c_d / N)` for every domain.
pub fn domain_entropy(
    domain_to_website_count: &BTreeMap<Domain, u64>,
    total_websites: u64,
) -> Result<BTreeMap<Domain, f64>> {
    let mut bits = BTreeMap::new();
    for (domain, &count) in domain_to_website_count {
        if count == 0 || count > total_websites {
            return Err(Error::CountOutOfRange {
                domain: domain.to_string(),
                count,
                total: total_websites,
            });
        }
        bits.insert(
            domain.clone(),
            -((count as f64) / (total_websites as f64)).log2(),
        );
    }
    Ok(bits)
}

/// Average the entropy of corpus domains hosted on each IP at one batch.
/// IPs hosting no corpus domain are absent from the result.
pub fn ip_entropy(
    store: &MappingStore,
    batch_id: u32,
    domain_bits: &BTreeMap<Domain, f64>,
) -> BTreeMap<IpAddr, f64> {
    let mut sums: BTreeMap<IpAddr, (f64, u64)> = BTreeMap::new();
    for record in store.records() {
        if !record.observed_batches.contains(&batch_id) {
            continue;
        }
        if let Some(&bits) = domain_bits.get(&record.domain) {
            let entry = sums.entry(record.ip).or_insert((0.0, 0));
            entry.0 += bits;
            entry.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(ip, (sum, n))| (ip, sum / n as f64))
        .collect()
}
