//! HTTP cache metadata analysis: per-resource freshness timelines and the
//! per-(website, ip) cache index used by cache-aware matching.
//!
//! A freshness timeline is the number of seconds a cached resource may be
//! served locally without contacting its origin. The sentinel `-1` marks
//! uncachable resources, `0` marks cacheable resources that must always be
//! revalidated; both force a network connection on revisit.

use std::collections::BTreeMap;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::domain::WebsiteId;
use crate::error::{Error, Result};
use crate::fingerprint::BrowseObservation;
use crate::mapping_store::MappingStore;

/// Parsed cache metadata of one HTTP response.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CachePolicy {
    /// Lowercased `token` or `token=value` pairs, original order preserved.
    pub directives: Vec<(String, Option<String>)>,
    /// `Expires` header, UTC seconds.
    pub expires_at: Option<i64>,
    /// `Date` header, UTC seconds.
    pub response_date: Option<i64>,
}

impl CachePolicy {
    /// Parse a `Cache-Control` header value. Tokens are lowercased; values
    /// are kept verbatim and interpreted by [`freshness_timeline`].
    pub fn parse(cache_control: &str, expires_at: Option<i64>, response_date: Option<i64>) -> Self {
        let directives = cache_control
            .split(',')
            .map(str::trim)
            .filter(|part| !part.is_empty())
            .map(|part| match part.split_once('=') {
                Some((token, value)) => (
                    token.trim().to_ascii_lowercase(),
                    Some(value.trim().trim_matches('"').to_string()),
                ),
                None => (part.to_ascii_lowercase(), None),
            })
            .collect();
        CachePolicy {
            directives,
            expires_at,
            response_date,
        }
    }

    /// Canonical textual form, `token=value` pairs joined by `", "`.
    pub fn render(&self) -> String {
        self.directives
            .iter()
            .map(|(token, value)| match value {
                Some(v) => format!("{token}={v}"),
                None => token.clone(),
            })
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn has(&self, token: &str) -> bool {
        self.directives.iter().any(|(t, _)| t == token)
    }

    fn seconds_of(&self, token: &str) -> Result<Option<u64>> {
        for (t, value) in &self.directives {
            if t == token {
                let raw = value.as_deref().unwrap_or("");
                let parsed = raw.parse::<u64>().map_err(|_| Error::CacheDirective {
                    token: token.to_string(),
                    value: raw.to_string(),
                })?;
                return Ok(Some(parsed));
            }
        }
        Ok(None)
    }
}

/// Freshness timeline of one resource: `-1`, `0`, or positive seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum FreshnessClass {
    /// `-1`: must be downloaded again from the origin on every visit.
    Uncachable,
    /// `0`: cacheable but always revalidated with the origin.
    AlwaysRevalidate,
    /// Positive seconds the resource may be served from the local cache.
    FreshFor(u64),
}

impl FreshnessClass {
    pub fn as_seconds(self) -> i64 {
        match self {
            FreshnessClass::Uncachable => -1,
            FreshnessClass::AlwaysRevalidate => 0,
            FreshnessClass::FreshFor(s) => s as i64,
        }
    }

    /// Whether a revisit after `elapsed_s` seconds still reaches the network
    /// for at least one resource with this timeline. `elapsed_s = 0` means a
    /// first visit, which always connects.
    pub fn forces_connection(self, elapsed_s: i64) -> bool {
        match self {
            FreshnessClass::Uncachable | FreshnessClass::AlwaysRevalidate => true,
            FreshnessClass::FreshFor(s) => elapsed_s <= 0 || (s as i64) <= elapsed_s,
        }
    }
}

impl TryFrom<i64> for FreshnessClass {
    type Error = Error;

    fn try_from(value: i64) -> Result<Self> {
        match value {
            -1 => Ok(FreshnessClass::Uncachable),
            0 => Ok(FreshnessClass::AlwaysRevalidate),
            s if s > 0 => Ok(FreshnessClass::FreshFor(s as u64)),
            other => Err(Error::InvalidFreshness(other)),
        }
    }
}

impl From<FreshnessClass> for i64 {
    fn from(f: FreshnessClass) -> i64 {
        f.as_seconds()
    }
}

/// Compute the freshness timeline of one resource from its cache policy.
///
/// Directive precedence follows standard HTTP caching semantics:
/// `no-store` > `no-cache` > `s-maxage` > `max-age` > `Expires`-`Date`.
/// Responses without any explicit lifetime fall back to `0` so the resource
/// stays observable on revisit.
pub fn freshness_timeline(policy: &CachePolicy) -> Result<FreshnessClass> {
    if policy.has("no-store") {
        return Ok(FreshnessClass::Uncachable);
    }
    if policy.has("no-cache") {
        return Ok(FreshnessClass::AlwaysRevalidate);
    }
    let lifetime = match policy.seconds_of("s-maxage")? {
        Some(s) => Some(s),
        None => policy.seconds_of("max-age")?,
    };
    if let Some(s) = lifetime {
        return Ok(if s == 0 {
            FreshnessClass::AlwaysRevalidate
        } else {
            FreshnessClass::FreshFor(s)
        });
    }
    if let (Some(expires), Some(date)) = (policy.expires_at, policy.response_date) {
        if expires > date {
            return Ok(FreshnessClass::FreshFor((expires - date) as u64));
        }
    }
    Ok(FreshnessClass::AlwaysRevalidate)
}

/// Minimum freshness timeline per (website, ip): the resource most likely to
/// force a network connection dominates the whole IP.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CacheIndex {
    entries: BTreeMap<(WebsiteId, IpAddr), FreshnessClass>,
}

impl CacheIndex {
    pub fn freshness(&self, website: &str, ip: &IpAddr) -> Option<FreshnessClass> {
        self.entries.get(&(website.to_string(), *ip)).copied()
    }

    pub fn insert_min(&mut self, website: WebsiteId, ip: IpAddr, freshness: FreshnessClass) {
        self.entries
            .entry((website, ip))
            .and_modify(|current| *current = (*current).min(freshness))
            .or_insert(freshness);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(WebsiteId, IpAddr), &FreshnessClass)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_entries(
        entries: impl IntoIterator<Item = (WebsiteId, IpAddr, FreshnessClass)>,
    ) -> Self {
        let mut index = CacheIndex::default();
        for (website, ip, freshness) in entries {
            index.insert_min(website, ip, freshness);
        }
        index
    }
}

/// Build the cache index from browse observations, resolving each request's
/// domain through the mapping store at the observation's batch. Requests
/// whose domain is unknown at that batch contribute nothing.
pub fn build_cache_index(
    observations: &[BrowseObservation],
    store: &MappingStore,
) -> Result<CacheIndex> {
    let mut index = CacheIndex::default();
    for obs in observations {
        for request in &obs.requests {
            let freshness = freshness_timeline(&request.cache)?;
            for ip in store.ips_of(&request.domain, obs.batch_id) {
                index.insert_min(obs.website_id.clone(), ip, freshness);
            }
        }
    }
    Ok(index)
}
