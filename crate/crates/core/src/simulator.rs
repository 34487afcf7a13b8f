//! Synthetic corpus generator: websites, domain-IP mapping histories, and
//! labeled network traces for desk-scale accuracy experiments.
//!
//! Everything is a pure function of `(config, seed)`. Randomness comes from
//! ChaCha8, a named stream cipher with documented portable output, and each
//! website, host, and trace draws from its own ChaCha stream, so per-site
//! generation can run in any order (or in parallel) without changing a byte
//! of output. Churn decisions compare one uniform draw per host and batch
//! against the configured rate, which makes churned-domain sets nested
//! across rates for a fixed seed.
//!
//! The synthetic web is laid out as follows: every site gets a primary
//! domain, a number of site-unique secondary domains, and a subset of a
//! small pool of shared service domains (the analytics/font/CDN ecosystem
//! every real site pulls from). Each domain lives on one host; co-location
//! groups sites onto a shared primary host. A host's IP changes only when
//! churn re-rolls it, and re-rolled IPs are fresh addresses never seen in
//! earlier batches.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::net::{IpAddr, Ipv4Addr};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{self, CacheIndex, CachePolicy};
use crate::domain::{Domain, WebsiteId};
use crate::entropy::EntropyTable;
use crate::error::{Error, Result};
use crate::fingerprint::{build_domain_fingerprint, resolve_fingerprint, Bucket, BrowseObservation, Request};
use crate::mapping_store::{DnsSnapshot, MappingStore};
use crate::matcher::{FingerprintDb, MatchMode, Trace, TraceEvent};
use crate::stability;

/// Bucket timing windows in milliseconds: Loading, ContentLoaded, Complete.
pub const BUCKET_WINDOWS_MS: [(u32, u32); 3] = [(0, 100), (300, 400), (800, 900)];

/// Offset added to request times in traces so the primary connection at
/// t = 0 stays first even under maximum jitter.
const TRACE_TIME_BASE_MS: i64 = 100;

/// Seconds per crawl batch (2.5 days).
const BATCH_SECONDS: i64 = 216_000;

const SITE_STREAM_BASE: u64 = 1 << 32;
const HOST_STREAM_BASE: u64 = 2 << 32;
const TRACE_STREAM_BASE: u64 = 3 << 32;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Number of site-unique secondary domains per site, drawn uniformly from
/// `[mean - spread, mean + spread]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecondaryCountSpec {
    pub mean: u32,
    #[serde(default)]
    pub spread: u32,
}

/// Cache-policy mix of generated resources. Fractions are absolute over all
/// resources: `1 - cacheable_fraction` become uncachable (`no-store`),
/// `revalidate_fraction` become always-revalidate (`no-cache`), the rest get
/// a positive `max-age` drawn from `fresh_seconds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreshnessMix {
    pub cacheable_fraction: f64,
    pub revalidate_fraction: f64,
    pub fresh_seconds: Vec<u32>,
}

impl Default for FreshnessMix {
    fn default() -> Self {
        FreshnessMix {
            cacheable_fraction: 0.861,
            revalidate_fraction: 0.219,
            fresh_seconds: vec![300, 3_600, 86_400, 2_592_000, 31_536_000],
        }
    }
}

fn default_co_located_fraction() -> f64 {
    1.0
}

/// Full description of one synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_websites: u32,
    pub secondary_domains_per_site: SecondaryCountSpec,
    /// Size of the shared service-domain pool.
    #[serde(default)]
    pub shared_service_domains: u32,
    /// Per-domain probability that a site includes shared domain k. Empty
    /// means 0.5 for every shared domain.
    #[serde(default)]
    pub shared_inclusion_probs: Vec<f64>,
    /// Sites per primary host within the co-located part of the corpus.
    pub co_location_degree: u32,
    /// Fraction of sites subject to co-location grouping; the rest get a
    /// host of their own.
    #[serde(default = "default_co_located_fraction")]
    pub co_located_fraction: f64,
    /// Per-batch probability that a secondary or shared host re-rolls its IP.
    pub churn_rate_per_batch: f64,
    /// Per-batch probability that a primary host re-rolls its IP.
    #[serde(default)]
    pub primary_churn_rate_per_batch: f64,
    pub n_batches: u32,
    #[serde(default)]
    pub freshness_mix: FreshnessMix,
    /// The first k shared domains form the ad/tracker set an ad blocker
    /// removes.
    #[serde(default)]
    pub adblock_removal_count: u32,
    pub rng_seed: u64,
}

impl CorpusConfig {
    /// A small corpus shaped like a real crawl: 14 secondary domains per
    /// site on average, and a shared-service pool whose inclusion
    /// probabilities mirror the most common analytics and font domains.
    pub fn default_corpus(n_websites: u32, rng_seed: u64) -> Self {
        CorpusConfig {
            n_websites,
            secondary_domains_per_site: SecondaryCountSpec { mean: 14, spread: 4 },
            shared_service_domains: 10,
            shared_inclusion_probs: vec![0.55, 0.49, 0.49, 0.37, 0.35, 0.31, 0.25, 0.25, 0.24, 0.16],
            co_location_degree: 1,
            co_located_fraction: 1.0,
            churn_rate_per_batch: 0.0,
            primary_churn_rate_per_batch: 0.0,
            n_batches: 4,
            freshness_mix: FreshnessMix::default(),
            adblock_removal_count: 4,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Err(Error::InfeasibleConfig(message));
        if self.n_websites == 0 {
            return fail("n_websites must be positive".into());
        }
        if self.n_websites > 99_999 {
            return fail("n_websites exceeds the 99,999-site naming space".into());
        }
        if self.co_location_degree == 0 {
            return fail("co_location_degree must be at least 1".into());
        }
        if self.co_location_degree > self.n_websites {
            return fail(format!(
                "co_location_degree {} demands more co-hosted domains than the {} websites that exist",
                self.co_location_degree, self.n_websites
            ));
        }
        if self.n_batches == 0 || self.n_batches > 63 {
            return fail("n_batches must be in 1..=63".into());
        }
        let mean = self.secondary_domains_per_site.mean;
        let spread = self.secondary_domains_per_site.spread;
        if spread > mean {
            return fail("secondary domain spread exceeds the mean".into());
        }
        if mean + spread > 99 {
            return fail("secondary domains per site exceed the 99-domain naming space".into());
        }
        for &p in &self.shared_inclusion_probs {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("shared inclusion probability {p} outside [0, 1]"));
            }
        }
        if !self.shared_inclusion_probs.is_empty()
            && self.shared_inclusion_probs.len() != self.shared_service_domains as usize
        {
            return fail(format!(
                "{} shared inclusion probabilities for {} shared domains",
                self.shared_inclusion_probs.len(),
                self.shared_service_domains
            ));
        }
        if self.adblock_removal_count > self.shared_service_domains {
            return fail("adblock removal set larger than the shared domain pool".into());
        }
        for (name, rate) in [
            ("co_located_fraction", self.co_located_fraction),
            ("churn_rate_per_batch", self.churn_rate_per_batch),
            ("primary_churn_rate_per_batch", self.primary_churn_rate_per_batch),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return fail(format!("{name} {rate} outside [0, 1]"));
            }
        }
        let mix = &self.freshness_mix;
        if !(0.0..=1.0).contains(&mix.cacheable_fraction)
            || !(0.0..=1.0).contains(&mix.revalidate_fraction)
            || mix.revalidate_fraction > mix.cacheable_fraction
        {
            return fail("freshness mix fractions must satisfy 0 <= revalidate <= cacheable <= 1".into());
        }
        if mix.cacheable_fraction > mix.revalidate_fraction && mix.fresh_seconds.is_empty() {
            return fail("freshness mix needs fresh_seconds values for its positive class".into());
        }
        if mix.fresh_seconds.iter().any(|&s| s == 0) {
            return fail("fresh_seconds values must be positive".into());
        }
        Ok(())
    }

    fn shared_prob(&self, k: usize) -> f64 {
        self.shared_inclusion_probs.get(k).copied().unwrap_or(0.5)
    }
}

/// Knobs for trace generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceOptions {
    /// Seconds since the previous visit; 0 models a first visit. Positive
    /// values suppress connections to IPs whose cached resources are all
    /// still fresh.
    pub revisit_elapsed_s: i64,
    /// Drop connections of the ad/tracker domain set, like a blocking
    /// browser would.
    pub adblock: bool,
    /// Uniform timing jitter in `[-jitter_ms, +jitter_ms]` per connection.
    pub jitter_ms: u32,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            revisit_elapsed_s: 0,
            adblock: false,
            jitter_ms: 10,
        }
    }
}

/// A generated corpus: the ground truth every experiment measures against.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    site_ids: Vec<WebsiteId>,
    primary_domains: Vec<Domain>,
    site_requests: Vec<Vec<Request>>,
    /// Generation-time domain→IP table per batch.
    batch_mappings: Vec<BTreeMap<Domain, IpAddr>>,
    adblock_domains: BTreeSet<Domain>,
    /// Tallies of generated resource classes: uncachable, always-revalidate,
    /// positive freshness.
    freshness_class_counts: [u64; 3],
}

fn host_ip(host: u32, generation: u32) -> IpAddr {
    // 64 IP slots per host, base 11.0.0.0; one slot per churn generation.
    IpAddr::V4(Ipv4Addr::from(0x0B00_0000u32 + host * 64 + generation))
}

pub fn generate_corpus(config: &CorpusConfig) -> Result<Corpus> {
    config.validate()?;
    let n = config.n_websites as usize;
    let seed = config.rng_seed;

    let site_ids: Vec<WebsiteId> = (0..n).map(|w| format!("site{w:05}")).collect();
    let primary_domains: Vec<Domain> = (0..n)
        .map(|w| Domain::new(&format!("site{w:05}.example")))
        .collect::<Result<_>>()?;
    let shared_domains: Vec<Domain> = (0..config.shared_service_domains)
        .map(|k| Domain::new(&format!("shared{k:03}.svc.example")))
        .collect::<Result<_>>()?;
    let adblock_domains: BTreeSet<Domain> = shared_domains
        .iter()
        .take(config.adblock_removal_count as usize)
        .cloned()
        .collect();

    // Primary host layout: the first `n_co` sites share hosts in groups of
    // `co_location_degree`, the rest stand alone.
    let n_co = (n as f64 * config.co_located_fraction).floor() as usize;
    let degree = config.co_location_degree as usize;
    let n_groups = n_co.div_ceil(degree);
    let primary_host = |w: usize| -> u32 {
        if w < n_co {
            (w / degree) as u32
        } else {
            (n_groups + (w - n_co)) as u32
        }
    };
    let n_primary_hosts = (n_groups + (n - n_co)) as u32;

    // Per-site content, each site on its own RNG stream.
    let mut site_requests: Vec<Vec<Request>> = Vec::with_capacity(n);
    let mut freshness_class_counts = [0u64; 3];
    let mut unique_host_offsets: Vec<u32> = Vec::with_capacity(n);
    let mut total_unique: u32 = 0;
    let spec = config.secondary_domains_per_site;
    let mix = &config.freshness_mix;
    let uncachable_fraction = 1.0 - mix.cacheable_fraction;
    for w in 0..n {
        let mut rng = stream(seed, SITE_STREAM_BASE + w as u64);
        let count = rng.gen_range(spec.mean - spec.spread..=spec.mean + spec.spread);
        let mut domains: Vec<Domain> = (0..count)
            .map(|j| Domain::new(&format!("cdn{j:02}.site{w:05}.example")))
            .collect::<Result<_>>()?;
        for (k, shared) in shared_domains.iter().enumerate() {
            if rng.gen_bool(config.shared_prob(k)) {
                domains.push(shared.clone());
            }
        }

        let mut requests = Vec::with_capacity(domains.len());
        for (position, domain) in domains.into_iter().enumerate() {
            let bucket = Bucket::from_index(position % 3).expect("index < 3");
            let (window_start, window_end) = BUCKET_WINDOWS_MS[bucket.index()];
            let t_offset_ms = rng.gen_range(window_start..window_end);
            let class_draw: f64 = rng.gen();
            let cc = if class_draw < uncachable_fraction {
                freshness_class_counts[0] += 1;
                "no-store".to_string()
            } else if class_draw < uncachable_fraction + mix.revalidate_fraction {
                freshness_class_counts[1] += 1;
                "no-cache".to_string()
            } else {
                freshness_class_counts[2] += 1;
                let lifetime = mix.fresh_seconds[rng.gen_range(0..mix.fresh_seconds.len())];
                format!("max-age={lifetime}")
            };
            requests.push(Request {
                domain,
                bucket,
                t_offset_ms,
                cache: CachePolicy::parse(&cc, None, None),
            });
        }
        unique_host_offsets.push(total_unique);
        total_unique += count;
        site_requests.push(requests);
    }

    // Host of every domain. Unique secondaries follow the primaries, shared
    // domains come last. Unique secondaries occupy the request-list prefix,
    // so the request index doubles as the per-site unique index.
    let shared_host_base = n_primary_hosts + total_unique;
    let mut domain_hosts: BTreeMap<Domain, u32> = BTreeMap::new();
    for w in 0..n {
        domain_hosts.insert(primary_domains[w].clone(), primary_host(w));
        for (j, request) in site_requests[w].iter().enumerate() {
            if request.domain.as_str().starts_with("cdn") {
                domain_hosts.insert(
                    request.domain.clone(),
                    n_primary_hosts + unique_host_offsets[w] + j as u32,
                );
            }
        }
    }
    for (k, shared) in shared_domains.iter().enumerate() {
        domain_hosts.insert(shared.clone(), shared_host_base + k as u32);
    }
    let n_hosts = shared_host_base + shared_domains.len() as u32;
    if u64::from(n_hosts) * 64 + 0x0B00_0000 > u64::from(u32::MAX) {
        return Err(Error::InfeasibleConfig(format!(
            "{n_hosts} hosts exceed the synthetic IPv4 allocation space"
        )));
    }

    // Churn generations per host per batch: one uniform draw per batch, so
    // churned sets are nested across rates for a fixed seed.
    let batches = config.n_batches as usize;
    let mut host_generation: Vec<Vec<u32>> = Vec::with_capacity(n_hosts as usize);
    for host in 0..n_hosts {
        let rate = if host < n_primary_hosts {
            config.primary_churn_rate_per_batch
        } else {
            config.churn_rate_per_batch
        };
        let mut rng = stream(seed, HOST_STREAM_BASE + u64::from(host));
        let mut generations = Vec::with_capacity(batches);
        let mut generation = 0u32;
        generations.push(generation);
        for _ in 1..batches {
            if rng.gen::<f64>() < rate {
                generation += 1;
            }
            generations.push(generation);
        }
        host_generation.push(generations);
    }

    let batch_mappings: Vec<BTreeMap<Domain, IpAddr>> = (0..batches)
        .map(|b| {
            domain_hosts
                .iter()
                .map(|(domain, &host)| {
                    (domain.clone(), host_ip(host, host_generation[host as usize][b]))
                })
                .collect()
        })
        .collect();

    Ok(Corpus {
        config: config.clone(),
        site_ids,
        primary_domains,
        site_requests,
        batch_mappings,
        adblock_domains,
        freshness_class_counts,
    })
}

impl Corpus {
    pub fn n_websites(&self) -> usize {
        self.site_ids.len()
    }

    pub fn n_batches(&self) -> u32 {
        self.batch_mappings.len() as u32
    }

    pub fn site_ids(&self) -> &[WebsiteId] {
        &self.site_ids
    }

    pub fn adblock_domains(&self) -> &BTreeSet<Domain> {
        &self.adblock_domains
    }

    /// Generated resource-class tallies: uncachable, always-revalidate,
    /// positive freshness.
    pub fn freshness_class_counts(&self) -> [u64; 3] {
        self.freshness_class_counts
    }

    fn check_batch(&self, batch: u32) -> Result<()> {
        if batch >= self.n_batches() {
            return Err(Error::InfeasibleConfig(format!(
                "batch {batch} outside the generated range 0..{}",
                self.n_batches()
            )));
        }
        Ok(())
    }

    /// The generation-time domain→IP table of one batch.
    pub fn mapping_at(&self, batch: u32) -> Result<&BTreeMap<Domain, IpAddr>> {
        self.check_batch(batch)?;
        Ok(&self.batch_mappings[batch as usize])
    }

    /// One observation per site at the given batch. Site content is static;
    /// only the batch id changes across batches.
    pub fn observations_at(&self, batch: u32) -> Result<Vec<BrowseObservation>> {
        self.check_batch(batch)?;
        Ok(self
            .site_ids
            .iter()
            .zip(&self.primary_domains)
            .zip(&self.site_requests)
            .map(|((site, primary), requests)| BrowseObservation {
                website_id: site.clone(),
                batch_id: batch,
                primary_domain: primary.clone(),
                requests: requests.clone(),
            })
            .collect())
    }

    pub fn all_observations(&self) -> Vec<BrowseObservation> {
        (0..self.n_batches())
            .flat_map(|b| self.observations_at(b).expect("batch in range"))
            .collect()
    }

    /// Snapshots of every batch, `(snapshot, batch)` pairs in batch order.
    pub fn snapshots(&self) -> Vec<(DnsSnapshot, u32)> {
        let mut out = Vec::new();
        for (b, mapping) in self.batch_mappings.iter().enumerate() {
            let resolved_at = b as i64 * BATCH_SECONDS;
            for (domain, &ip) in mapping {
                let snapshot =
                    DnsSnapshot::new(domain.clone(), BTreeSet::from([ip]), resolved_at)
                        .expect("single IP");
                out.push((snapshot, b as u32));
            }
        }
        out
    }

    /// Mapping store over all batches.
    pub fn store(&self) -> MappingStore {
        let mut store = MappingStore::new();
        for (snapshot, batch) in self.snapshots() {
            store
                .ingest_snapshot(&snapshot, batch)
                .expect("snapshots are batch-ordered and well-formed");
        }
        store
    }

    /// IPs of the ad/tracker domain set at one batch, e.g. to stand in for
    /// an external blocklist.
    pub fn adblock_ips(&self, batch: u32) -> Result<BTreeSet<IpAddr>> {
        let mapping = self.mapping_at(batch)?;
        Ok(self
            .adblock_domains
            .iter()
            .filter_map(|d| mapping.get(d).copied())
            .collect())
    }

    /// Per-(website, ip) minimum freshness at one batch, from the
    /// generation-time mapping.
    pub fn cache_index_at(&self, batch: u32) -> Result<CacheIndex> {
        let mapping = self.mapping_at(batch)?;
        let mut index = CacheIndex::default();
        for (site, requests) in self.site_ids.iter().zip(&self.site_requests) {
            for request in requests {
                let freshness = cache::freshness_timeline(&request.cache)?;
                let ip = mapping[&request.domain];
                index.insert_min(site.clone(), ip, freshness);
            }
        }
        Ok(index)
    }
}

/// Generate one labeled trace per website at one batch.
pub fn generate_traces(
    corpus: &Corpus,
    batch: u32,
    options: &TraceOptions,
) -> Result<Vec<Trace>> {
    if options.jitter_ms >= TRACE_TIME_BASE_MS as u32 {
        return Err(Error::InfeasibleConfig(format!(
            "jitter {} ms would reorder the primary connection",
            options.jitter_ms
        )));
    }
    let mapping = corpus.mapping_at(batch)?;
    let cache_index = if options.revisit_elapsed_s > 0 {
        Some(corpus.cache_index_at(batch)?)
    } else {
        None
    };

    let mut traces = Vec::with_capacity(corpus.n_websites());
    for (w, site) in corpus.site_ids.iter().enumerate() {
        let mut rng = stream(
            corpus.config.rng_seed,
            TRACE_STREAM_BASE | (u64::from(batch) << 24) | w as u64,
        );
        let primary_ip = mapping[&corpus.primary_domains[w]];
        let mut events = vec![TraceEvent {
            t_ms: 0,
            dst_ip: primary_ip,
        }];
        for request in &corpus.site_requests[w] {
            if options.adblock && corpus.adblock_domains.contains(&request.domain) {
                continue;
            }
            let dst_ip = mapping[&request.domain];
            if let Some(index) = &cache_index {
                let stays_cached = index
                    .freshness(site, &dst_ip)
                    .is_some_and(|f| !f.forces_connection(options.revisit_elapsed_s));
                if stays_cached {
                    continue;
                }
            }
            let jitter = if options.jitter_ms > 0 {
                let j = i64::from(options.jitter_ms);
                rng.gen_range(-j..=j)
            } else {
                0
            };
            events.push(TraceEvent {
                t_ms: TRACE_TIME_BASE_MS + i64::from(request.t_offset_ms) + jitter,
                dst_ip,
            });
        }
        events[1..].sort_by(|a, b| a.t_ms.cmp(&b.t_ms).then_with(|| a.dst_ip.cmp(&b.dst_ip)));
        traces.push(Trace::new(
            format!("b{batch:02}-w{w:05}"),
            events,
            Some(site.clone()),
        )?);
    }
    Ok(traces)
}

/// What the adversary holds after crawling at one batch: the fingerprint
/// database and the entropy table.
#[derive(Debug, Clone)]
pub struct AttackerView {
    pub db: FingerprintDb,
    pub entropy: EntropyTable,
    pub store: MappingStore,
}

pub fn build_attacker_view(corpus: &Corpus, batch: u32) -> Result<AttackerView> {
    let store = corpus.store();
    let observations = corpus.observations_at(batch)?;
    let entropy = EntropyTable::build(&observations, &store, batch)?;
    let fingerprints = observations
        .iter()
        .map(|obs| {
            resolve_fingerprint(&build_domain_fingerprint(obs), &store, batch)
                .map(|resolved| resolved.fingerprint)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackerView {
        db: FingerprintDb::new(fingerprints),
        entropy,
        store,
    })
}

/// Generate, build at `build_batch`, trace at `trace_batch`, match, score.
pub fn run_accuracy(
    corpus: &Corpus,
    build_batch: u32,
    trace_batch: u32,
    mode: MatchMode,
    options: &TraceOptions,
) -> Result<f64> {
    let view = build_attacker_view(corpus, build_batch)?;
    let traces = generate_traces(corpus, trace_batch, options)?;
    stability::aged_accuracy(&view.db, &view.entropy, &traces, mode)
}

fn default_build_batch() -> u32 {
    0
}

/// Parameter grid for accuracy sweeps: the cartesian product of churn rates
/// and co-location degrees, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub base: CorpusConfig,
    #[serde(default)]
    pub churn_rates: Vec<f64>,
    #[serde(default)]
    pub co_location_degrees: Vec<u32>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_build_batch")]
    pub build_batch: u32,
    /// Defaults to the last generated batch.
    #[serde(default)]
    pub trace_batch: Option<u32>,
    #[serde(default)]
    pub trace_options: TraceOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub churn_rate: f64,
    pub co_location_degree: u32,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub n_seeds: u32,
}

pub fn sweep(grid: &SweepGrid, mode: MatchMode) -> Result<Vec<SweepRow>> {
    if grid.base.n_websites == 0 {
        return Err(Error::InfeasibleConfig("n_websites must be positive".into()));
    }
    let churn_rates = if grid.churn_rates.is_empty() {
        vec![grid.base.churn_rate_per_batch]
    } else {
        grid.churn_rates.clone()
    };
    let degrees = if grid.co_location_degrees.is_empty() {
        vec![grid.base.co_location_degree]
    } else {
        grid.co_location_degrees.clone()
    };
    let seeds = if grid.seeds.is_empty() {
        vec![grid.base.rng_seed]
    } else {
        grid.seeds.clone()
    };

    let mut rows = Vec::new();
    for &churn in &churn_rates {
        for &degree in &degrees {
            let mut accuracies = Vec::with_capacity(seeds.len());
            for &seed in &seeds {
                let mut config = grid.base.clone();
                config.churn_rate_per_batch = churn;
                config.co_location_degree = degree;
                config.rng_seed = seed;
                let corpus = generate_corpus(&config)?;
                let trace_batch = grid.trace_batch.unwrap_or(config.n_batches - 1);
                accuracies.push(run_accuracy(
                    &corpus,
                    grid.build_batch,
                    trace_batch,
                    mode,
                    &grid.trace_options,
                )?);
            }
            let n = accuracies.len() as f64;
            rows.push(SweepRow {
                churn_rate: churn,
                co_location_degree: degree,
                mean_accuracy: accuracies.iter().sum::<f64>() / n,
                min_accuracy: accuracies.iter().copied().fold(f64::INFINITY, f64::min),
                max_accuracy: accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                n_seeds: accuracies.len() as u32,
            });
        }
    }
    Ok(rows)
}

/// Contents of a `sim.json` file: the corpus plus trace options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    #[serde(flatten)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub trace_options: TraceOptions,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher;

    fn tiny_config(seed: u64) -> CorpusConfig {
        CorpusConfig {
            n_websites: 8,
            secondary_domains_per_site: SecondaryCountSpec { mean: 4, spread: 1 },
            shared_service_domains: 3,
            shared_inclusion_probs: vec![0.6, 0.4, 0.2],
            co_location_degree: 1,
            co_located_fraction: 1.0,
            churn_rate_per_batch: 0.0,
            primary_churn_rate_per_batch: 0.0,
            n_batches: 3,
            freshness_mix: FreshnessMix::default(),
            adblock_removal_count: 2,
            rng_seed: seed,
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_corpus(&tiny_config(7)).unwrap();
        let b = generate_corpus(&tiny_config(7)).unwrap();
        assert_eq!(a, b);
        let ta = generate_traces(&a, 1, &TraceOptions::default()).unwrap();
        let tb = generate_traces(&b, 1, &TraceOptions::default()).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_corpus(&tiny_config(7)).unwrap();
        let b = generate_corpus(&tiny_config(8)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn unique_primaries_when_not_co_located() {
        let corpus = generate_corpus(&tiny_config(7)).unwrap();
        let mapping = corpus.mapping_at(0).unwrap();
        let primary_ips: BTreeSet<IpAddr> = corpus
            .primary_domains
            .iter()
            .map(|d| mapping[d])
            .collect();
        assert_eq!(primary_ips.len(), corpus.n_websites());
    }

    #[test]
    fn co_location_groups_share_primary_ips() {
        let mut config = tiny_config(7);
        config.co_location_degree = 4;
        let corpus = generate_corpus(&config).unwrap();
        let mapping = corpus.mapping_at(0).unwrap();
        let primary_ips: BTreeSet<IpAddr> = corpus
            .primary_domains
            .iter()
            .map(|d| mapping[d])
            .collect();
        assert_eq!(primary_ips.len(), 2); // 8 sites in groups of 4
    }

    #[test]
    fn trace_ips_come_from_the_truth_mapping() {
        let corpus = generate_corpus(&tiny_config(3)).unwrap();
        let mapping = corpus.mapping_at(2).unwrap();
        let legal: BTreeSet<IpAddr> = mapping.values().copied().collect();
        for trace in generate_traces(&corpus, 2, &TraceOptions::default()).unwrap() {
            for event in &trace.events {
                assert!(legal.contains(&event.dst_ip), "phantom IP in trace");
            }
        }
    }

    #[test]
    fn zero_jitter_traces_mirror_fingerprints_exactly() {
        let corpus = generate_corpus(&tiny_config(5)).unwrap();
        let view = build_attacker_view(&corpus, 0).unwrap();
        let options = TraceOptions {
            jitter_ms: 0,
            ..TraceOptions::default()
        };
        let traces = generate_traces(&corpus, 0, &options).unwrap();
        for (trace, fp) in traces.iter().zip(view.db.fingerprints()) {
            assert_eq!(trace.truth.as_deref(), Some(fp.website_id.as_str()));
            let trace_ips: BTreeSet<IpAddr> = trace.events.iter().map(|e| e.dst_ip).collect();
            let mut fp_ips = fp.secondary_ips();
            fp_ips.extend(fp.primary_ips.iter().copied());
            assert_eq!(trace_ips, fp_ips);
        }
    }

    #[test]
    fn adblock_traces_have_no_ad_ips() {
        let corpus = generate_corpus(&tiny_config(11)).unwrap();
        let ad_ips = corpus.adblock_ips(0).unwrap();
        assert!(!ad_ips.is_empty());
        let options = TraceOptions {
            adblock: true,
            ..TraceOptions::default()
        };
        // Set-difference oracle: no generated event may hit an ad IP.
        for trace in generate_traces(&corpus, 0, &options).unwrap() {
            for event in &trace.events {
                assert!(!ad_ips.contains(&event.dst_ip));
            }
        }
    }

    #[test]
    fn long_revisit_keeps_only_connection_forcing_ips() {
        let corpus = generate_corpus(&tiny_config(13)).unwrap();
        let elapsed = 2 * 31_536_000; // beyond every generated lifetime
        let options = TraceOptions {
            revisit_elapsed_s: elapsed,
            jitter_ms: 0,
            adblock: false,
        };
        let index = corpus.cache_index_at(0).unwrap();
        let mapping = corpus.mapping_at(0).unwrap();
        let traces = generate_traces(&corpus, 0, &options).unwrap();
        for (w, trace) in traces.iter().enumerate() {
            let site = &corpus.site_ids[w];
            let expected: BTreeSet<IpAddr> = corpus.site_requests[w]
                .iter()
                .map(|r| mapping[&r.domain])
                .filter(|ip| {
                    index
                        .freshness(site, ip)
                        .map(|f| f.forces_connection(elapsed))
                        .unwrap_or(true)
                })
                .collect();
            let got: BTreeSet<IpAddr> = trace
                .secondary_events()
                .iter()
                .map(|e| e.dst_ip)
                .collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn identical_shared_only_sites_tie() {
        let mut config = tiny_config(17);
        config.n_websites = 2;
        config.co_location_degree = 2;
        config.secondary_domains_per_site = SecondaryCountSpec { mean: 0, spread: 0 };
        config.shared_service_domains = 3;
        config.shared_inclusion_probs = vec![1.0, 1.0, 1.0];
        let corpus = generate_corpus(&config).unwrap();
        let view = build_attacker_view(&corpus, 0).unwrap();
        let traces = generate_traces(&corpus, 0, &TraceOptions::default()).unwrap();
        for trace in &traces {
            let result = matcher::match_basic(trace, &view.db, &view.entropy);
            assert!(result.tie, "indistinguishable sites must tie");
        }
    }

    #[test]
    fn closed_loop_accuracy_is_perfect_without_churn() {
        let corpus = generate_corpus(&tiny_config(23)).unwrap();
        let options = TraceOptions {
            jitter_ms: 0,
            ..TraceOptions::default()
        };
        for mode in [MatchMode::NaivePrimary, MatchMode::Basic, MatchMode::Bucketed] {
            let accuracy = run_accuracy(&corpus, 0, 0, mode, &options).unwrap();
            assert_eq!(accuracy, 1.0, "mode {mode:?}");
        }
    }

    #[test]
    fn generated_buckets_are_recovered_by_clustering() {
        let corpus = generate_corpus(&tiny_config(29)).unwrap();
        let options = TraceOptions {
            jitter_ms: 0,
            ..TraceOptions::default()
        };
        let mapping = corpus.mapping_at(0).unwrap();
        for (w, trace) in generate_traces(&corpus, 0, &options)
            .unwrap()
            .iter()
            .enumerate()
        {
            let ip_bucket: BTreeMap<IpAddr, usize> = corpus.site_requests[w]
                .iter()
                .map(|r| (mapping[&r.domain], r.bucket.index()))
                .collect();
            let events = trace.secondary_events();
            let times: Vec<i64> = events.iter().map(|e| e.t_ms).collect();
            let labels = matcher::cluster_times(&times);
            for (event, label) in events.iter().zip(labels) {
                assert_eq!(label, ip_bucket[&event.dst_ip]);
            }
        }
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let mut config = tiny_config(1);
        config.n_websites = 0;
        assert!(generate_corpus(&config).is_err());

        let mut config = tiny_config(1);
        config.co_location_degree = 100; // more co-hosted domains than exist
        assert!(generate_corpus(&config).is_err());

        let mut config = tiny_config(1);
        config.shared_inclusion_probs = vec![0.5];
        assert!(generate_corpus(&config).is_err());

        let mut config = tiny_config(1);
        config.churn_rate_per_batch = 1.5;
        assert!(generate_corpus(&config).is_err());
    }

    #[test]
    fn sweep_rejects_zero_website_grids() {
        let mut base = tiny_config(1);
        base.n_websites = 0;
        let grid = SweepGrid {
            base,
            churn_rates: vec![0.0],
            co_location_degrees: vec![],
            seeds: vec![1],
            build_batch: 0,
            trace_batch: None,
            trace_options: TraceOptions::default(),
        };
        assert!(sweep(&grid, MatchMode::Basic).is_err());
    }

    #[test]
    fn churned_ips_are_fresh_addresses() {
        let mut config = tiny_config(31);
        config.churn_rate_per_batch = 1.0;
        let corpus = generate_corpus(&config).unwrap();
        let first: BTreeSet<IpAddr> = corpus.mapping_at(0).unwrap().values().copied().collect();
        let later = corpus.mapping_at(2).unwrap();
        for (domain, ip) in later {
            if domain.as_str().starts_with("site") {
                continue; // primaries are static in this config
            }
            assert!(!first.contains(ip), "{domain} kept a churned IP");
        }
    }

    #[test]
    fn freshness_tallies_match_reclassified_policies() {
        let corpus = generate_corpus(&tiny_config(37)).unwrap();
        let mut recount = [0u64; 3];
        for requests in &corpus.site_requests {
            for request in requests {
                match cache::freshness_timeline(&request.cache).unwrap() {
                    cache::FreshnessClass::Uncachable => recount[0] += 1,
                    cache::FreshnessClass::AlwaysRevalidate => recount[1] += 1,
                    cache::FreshnessClass::FreshFor(_) => recount[2] += 1,
                }
            }
        }
        assert_eq!(recount, corpus.freshness_class_counts());
    }
}
