//! Fingerprint construction: domain-based fingerprints from browse
//! observations, and the IP-based form derived through the mapping store.
//!
//! A fingerprint has a primary part (IPs of the address-bar domain) and a
//! secondary part. The basic form keeps one flat secondary IP set; the
//! enhanced form splits secondary connections into three buckets aligned
//! with the rendering path (domLoading, domContentLoaded, domComplete).
//! All construction functions are pure over immutable inputs and safe to
//! run in parallel per website.

use std::collections::BTreeSet;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::cache::CachePolicy;
use crate::domain::{Domain, WebsiteId};
use crate::error::{Error, Result};
use crate::mapping_store::MappingStore;

/// Rendering-path bucket of one secondary request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Loading,
    ContentLoaded,
    Complete,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::Loading, Bucket::ContentLoaded, Bucket::Complete];

    pub fn index(self) -> usize {
        match self {
            Bucket::Loading => 0,
            Bucket::ContentLoaded => 1,
            Bucket::Complete => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Bucket> {
        Bucket::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Loading => "loading",
            Bucket::ContentLoaded => "contentloaded",
            Bucket::Complete => "complete",
        }
    }
}

/// One secondary resource request recorded while rendering a website.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub domain: Domain,
    pub bucket: Bucket,
    pub t_offset_ms: u32,
    pub cache: CachePolicy,
}

/// Everything observed while rendering one website once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrowseObservation {
    pub website_id: WebsiteId,
    pub batch_id: u32,
    pub primary_domain: Domain,
    pub requests: Vec<Request>,
}

/// Domain-based fingerprint: the primary domain plus three bucketed sets of
/// secondary domains. A domain may appear in more than one bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainFingerprint {
    pub website_id: WebsiteId,
    pub primary: Domain,
    pub buckets: [BTreeSet<Domain>; 3],
}

impl DomainFingerprint {
    /// Union of the three buckets.
    pub fn flat_secondary(&self) -> BTreeSet<Domain> {
        let mut flat = BTreeSet::new();
        for bucket in &self.buckets {
            flat.extend(bucket.iter().cloned());
        }
        flat
    }
}

/// IP-based fingerprint. `secondary_ips()` (the basic form) is always the
/// union of the three bucket sets, so the two forms cannot drift apart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpFingerprint {
    pub website_id: WebsiteId,
    pub primary_ips: BTreeSet<IpAddr>,
    pub bucket_ips: [BTreeSet<IpAddr>; 3],
    pub built_at_batch: u32,
}

impl IpFingerprint {
    /// Flat secondary IP set of the basic fingerprint form.
    pub fn secondary_ips(&self) -> BTreeSet<IpAddr> {
        let mut flat = BTreeSet::new();
        for bucket in &self.bucket_ips {
            flat.extend(bucket.iter().copied());
        }
        flat
    }

    /// Membership test against the flat secondary set, without materializing
    /// the union.
    pub fn contains_secondary(&self, ip: &IpAddr) -> bool {
        self.bucket_ips.iter().any(|bucket| bucket.contains(ip))
    }
}

/// An IP fingerprint plus the secondary domains the store could not resolve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedFingerprint {
    pub fingerprint: IpFingerprint,
    pub unresolved: BTreeSet<Domain>,
}

/// Build the domain-based fingerprint of one observation.
///
/// Each request's domain enters the bucket matching its label; duplicate
/// (domain, bucket) pairs collapse. Requests to the primary domain itself
/// are dropped: their IPs already live in the primary part and would add no
/// discriminating power.
pub fn build_domain_fingerprint(obs: &BrowseObservation) -> DomainFingerprint {
    let mut buckets: [BTreeSet<Domain>; 3] = Default::default();
    for request in &obs.requests {
        if request.domain == obs.primary_domain {
            continue;
        }
        buckets[request.bucket.index()].insert(request.domain.clone());
    }
    DomainFingerprint {
        website_id: obs.website_id.clone(),
        primary: obs.primary_domain.clone(),
        buckets,
    }
}

/// Resolve a domain fingerprint to its IP form using the store at one batch.
///
/// Secondary domains unknown at that batch contribute nothing and are
/// reported in the `unresolved` side list. An unresolved primary domain is
/// fatal: candidate pooling keys on primary IPs.
pub fn resolve_fingerprint(
    df: &DomainFingerprint,
    store: &MappingStore,
    batch_id: u32,
) -> Result<ResolvedFingerprint> {
    let primary_ips = store.ips_of(&df.primary, batch_id);
    if primary_ips.is_empty() {
        return Err(Error::PrimaryUnresolved {
            domain: df.primary.to_string(),
            batch: batch_id,
        });
    }

    let mut bucket_ips: [BTreeSet<IpAddr>; 3] = Default::default();
    let mut unresolved = BTreeSet::new();
    for (bucket, out) in df.buckets.iter().zip(bucket_ips.iter_mut()) {
        for domain in bucket {
            let ips = store.ips_of(domain, batch_id);
            if ips.is_empty() {
                unresolved.insert(domain.clone());
            } else {
                out.extend(ips);
            }
        }
    }

    Ok(ResolvedFingerprint {
        fingerprint: IpFingerprint {
            website_id: df.website_id.clone(),
            primary_ips,
            bucket_ips,
            built_at_batch: batch_id,
        },
        unresolved,
    })
}

/// Merge fingerprints of one website across resolution batches by
/// element-wise set union; `built_at_batch` becomes the maximum.
pub fn merge_batches(fps: &[IpFingerprint]) -> Result<IpFingerprint> {
    let first = fps.first().ok_or(Error::EmptyMerge)?;
    let mut merged = first.clone();
    for fp in &fps[1..] {
        if fp.website_id != merged.website_id {
            return Err(Error::MixedWebsites(
                merged.website_id.clone(),
                fp.website_id.clone(),
            ));
        }
        merged.primary_ips.extend(fp.primary_ips.iter().copied());
        for (into, from) in merged.bucket_ips.iter_mut().zip(fp.bucket_ips.iter()) {
            into.extend(from.iter().copied());
        }
        merged.built_at_batch = merged.built_at_batch.max(fp.built_at_batch);
    }
    Ok(merged)
}
