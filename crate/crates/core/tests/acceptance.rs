//! Acceptance suite: one test per release criterion. Each test prints a
//! `criterion N (<name>): PASS` line (visible with `--nocapture`) and
//! enforces its own wall-clock budget.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::net::{IpAddr, Ipv4Addr};
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ipwf_core::cache::{
    build_cache_index, freshness_timeline, CacheIndex, CachePolicy, FreshnessClass,
};
use ipwf_core::domain::Domain;
use ipwf_core::entropy::{domain_entropy, EntropyTable};
use ipwf_core::fingerprint::IpFingerprint;
use ipwf_core::formats;
use ipwf_core::matcher::{
    cluster_times, match_basic, match_bucketed, match_cache_aware, FingerprintDb, MatchMode,
    MatchResult, Trace, TraceEvent,
};
use ipwf_core::simulator::{
    build_attacker_view, generate_corpus, generate_traces, run_accuracy, sweep, CorpusConfig,
    FreshnessMix, SecondaryCountSpec, SweepGrid, TraceOptions,
};
use ipwf_core::stability::difference_degree;

fn finish(criterion: &str, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    assert!(
        elapsed < budget,
        "criterion {criterion} took {elapsed:?}, budget {budget:?}"
    );
    println!("criterion {criterion}: PASS ({elapsed:?})");
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_01_entropy_fidelity() {
    let started = Instant::now();
    const N: u64 = 208_191;
    // Published per-domain website counts and entropy values of the ten
    // lowest-entropy domains.
    let table: &[(&str, u64, f64)] = &[
        ("www.google-analytics.com", 114_000, 0.87),
        ("fonts.gstatic.com", 102_000, 1.03),
        ("fonts.googleapis.com", 102_000, 1.04),
        ("www.google.com", 76_000, 1.44),
        ("stats.g.doubleclick.net", 72_000, 1.53),
        ("www.googletagmanager.com", 64_000, 1.71),
        ("www.facebook.com", 53_000, 1.97),
        ("connect.facebook.net", 53_000, 1.98),
        ("googleads.g.doubleclick.net", 49_000, 2.09),
        ("ajax.googleapis.com", 34_000, 2.62),
    ];
    let counts: BTreeMap<Domain, u64> = table
        .iter()
        .map(|(name, count, _)| (Domain::new(name).unwrap(), *count))
        .collect();
    let bits = domain_entropy(&counts, N).unwrap();
    for (name, _, expected) in table {
        let got = bits[&Domain::new(name).unwrap()];
        assert!(
            (got - expected).abs() <= 0.02,
            "{name}: got {got}, expected {expected} +/- 0.02"
        );
    }
    finish("1 (entropy fidelity)", started, Duration::from_secs(1));
}

#[test]
fn criterion_02_unique_domain_entropy() {
    let started = Instant::now();
    let counts: BTreeMap<Domain, u64> =
        BTreeMap::from([(Domain::new("unique.example").unwrap(), 1)]);
    let bits = domain_entropy(&counts, 208_191).unwrap();
    let got = bits[&Domain::new("unique.example").unwrap()];
    assert!((got - 17.67).abs() <= 0.05, "got {got}");
    finish("2 (unique-domain entropy)", started, Duration::from_secs(1));
}

// ---------------------------------------------------------------------------

fn random_set(rng: &mut ChaCha8Rng) -> BTreeSet<u32> {
    let size = rng.gen_range(0..=50);
    (0..size).map(|_| rng.gen_range(0..120)).collect()
}

#[test]
fn criterion_03_difference_degree_metric_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0d1f);
    let mut checked = 0u32;
    while checked < 10_000 {
        let a = random_set(&mut rng);
        let b = random_set(&mut rng);
        let c = random_set(&mut rng);
        if a.is_empty() && b.is_empty() {
            continue;
        }
        checked += 1;

        let dab = difference_degree(&a, &b).unwrap();
        assert!((0.0..=1.0).contains(&dab));
        assert_eq!(dab, difference_degree(&b, &a).unwrap(), "symmetry");
        assert_eq!(dab == 0.0, a == b, "identity of indiscernibles");
        // Exact value check against integer set counts.
        let union = a.union(&b).count() as u64;
        let inter = a.intersection(&b).count() as u64;
        assert_eq!(dab, (union - inter) as f64 / union as f64);

        // Triangle inequality, cleared of denominators in exact integers.
        if (a.is_empty() && c.is_empty()) || (b.is_empty() && c.is_empty()) {
            continue;
        }
        let parts = |x: &BTreeSet<u32>, y: &BTreeSet<u32>| {
            let u = x.union(y).count() as u128;
            let i = x.intersection(y).count() as u128;
            (u - i, u)
        };
        let (nab, uab) = parts(&a, &b);
        let (nbc, ubc) = parts(&b, &c);
        let (nac, uac) = parts(&a, &c);
        assert!(
            nac * uab * ubc <= nab * uac * ubc + nbc * uac * uab,
            "triangle violated for {a:?} {b:?} {c:?}"
        );
    }
    finish(
        "3 (difference-degree metric suite)",
        started,
        Duration::from_secs(5),
    );
}

// ---------------------------------------------------------------------------
// Independent brute-force scorer: scans every fingerprint, rebuilds flat
// sets, and recomputes scores, argmax, and ties from first principles.

struct OracleOutcome {
    prediction: Option<String>,
    tie: bool,
    scores: Vec<(String, f64)>,
}

fn oracle_match(
    trace: &Trace,
    fingerprints: &[IpFingerprint],
    entropy: &EntropyTable,
    bucketed: bool,
) -> OracleOutcome {
    let ip0 = trace.events[0].dst_ip;
    let tail = &trace.events[1..];

    // Cluster the tail by connection time when running the bucketed mode.
    let labels = if bucketed {
        cluster_times(&tail.iter().map(|e| e.t_ms).collect::<Vec<_>>())
    } else {
        Vec::new()
    };

    let mut scores: Vec<(String, f64)> = Vec::new();
    for fp in fingerprints {
        if !fp.primary_ips.contains(&ip0) {
            continue; // never score non-candidates
        }
        let score = if bucketed {
            let mut per_bucket: [BTreeSet<IpAddr>; 3] = Default::default();
            for (event, &label) in tail.iter().zip(&labels) {
                per_bucket[label].insert(event.dst_ip);
            }
            let mut total = 0.0;
            for (cluster, bucket) in per_bucket.iter().zip(&fp.bucket_ips) {
                for ip in cluster.intersection(bucket) {
                    total += entropy.ip_bits.get(ip).copied().unwrap_or(0.0);
                }
            }
            total
        } else {
            let distinct: BTreeSet<IpAddr> = tail.iter().map(|e| e.dst_ip).collect();
            let flat: BTreeSet<IpAddr> = fp.bucket_ips.iter().flatten().copied().collect();
            distinct
                .intersection(&flat)
                .map(|ip| entropy.ip_bits.get(ip).copied().unwrap_or(0.0))
                .sum()
        };
        scores.push((fp.website_id.clone(), score));
    }

    let mut best: Option<(&str, f64)> = None;
    let mut tie = false;
    for (site, score) in &scores {
        match best {
            None => best = Some((site, *score)),
            Some((best_site, best_score)) => {
                if *score > best_score
                    || (*score == best_score && site.as_str() < best_site)
                {
                    tie = *score == best_score;
                    best = Some((site, *score));
                } else if *score == best_score {
                    tie = true;
                }
            }
        }
    }
    OracleOutcome {
        prediction: best.map(|(site, _)| site.to_string()),
        tie,
        scores,
    }
}

fn assert_matches_oracle(result: &MatchResult, oracle: &OracleOutcome) {
    assert_eq!(result.prediction, oracle.prediction, "{}", result.trace_id);
    assert_eq!(result.tie, oracle.tie, "{}", result.trace_id);
    let mut got: Vec<(String, f64)> = result
        .candidates
        .iter()
        .map(|c| (c.website_id.clone(), c.score_bits))
        .collect();
    let mut expected = oracle.scores.clone();
    got.sort_by(|a, b| a.0.cmp(&b.0));
    expected.sort_by(|a, b| a.0.cmp(&b.0));
    assert_eq!(got, expected, "{}", result.trace_id);
}

#[test]
fn criterion_04_oracle_equivalence() {
    let started = Instant::now();
    let mut meta = ChaCha8Rng::seed_from_u64(0x04ac1e);
    for run in 0..100u32 {
        let n_websites = if run % 10 == 9 {
            meta.gen_range(300..=1_000)
        } else {
            meta.gen_range(20..=150)
        };
        let mean = meta.gen_range(2..=18u32);
        let spread = meta.gen_range(0..=mean.min(2));
        let shared = meta.gen_range(0..=8u32);
        let config = CorpusConfig {
            n_websites,
            secondary_domains_per_site: SecondaryCountSpec { mean, spread },
            shared_service_domains: shared,
            shared_inclusion_probs: vec![],
            co_location_degree: [1, 2, 5][meta.gen_range(0..3)],
            co_located_fraction: [0.0, 0.5, 1.0][meta.gen_range(0..3)],
            churn_rate_per_batch: if meta.gen_bool(0.5) { 0.0 } else { 0.3 },
            primary_churn_rate_per_batch: 0.0,
            n_batches: 2,
            freshness_mix: FreshnessMix::default(),
            adblock_removal_count: 0,
            rng_seed: meta.gen(),
        };
        let corpus = generate_corpus(&config).unwrap();
        let view = build_attacker_view(&corpus, 0).unwrap();
        let options = TraceOptions {
            jitter_ms: if meta.gen_bool(0.5) { 0 } else { 30 },
            ..TraceOptions::default()
        };
        let traces = generate_traces(&corpus, 1, &options).unwrap();
        for trace in &traces {
            let basic = match_basic(trace, &view.db, &view.entropy);
            assert_matches_oracle(
                &basic,
                &oracle_match(trace, view.db.fingerprints(), &view.entropy, false),
            );
            let bucketed = match_bucketed(trace, &view.db, &view.entropy);
            assert_matches_oracle(
                &bucketed,
                &oracle_match(trace, view.db.fingerprints(), &view.entropy, true),
            );
        }
    }
    finish("4 (oracle equivalence)", started, Duration::from_secs(120));
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_05_closed_loop_accuracy() {
    let started = Instant::now();
    let config = CorpusConfig {
        n_websites: 500,
        secondary_domains_per_site: SecondaryCountSpec { mean: 6, spread: 2 },
        shared_service_domains: 0,
        shared_inclusion_probs: vec![],
        co_location_degree: 1,
        co_located_fraction: 1.0,
        churn_rate_per_batch: 0.0,
        primary_churn_rate_per_batch: 0.0,
        n_batches: 1,
        freshness_mix: FreshnessMix::default(),
        adblock_removal_count: 0,
        rng_seed: 5,
    };
    let corpus = generate_corpus(&config).unwrap();
    let options = TraceOptions {
        jitter_ms: 0,
        ..TraceOptions::default()
    };
    for mode in [MatchMode::NaivePrimary, MatchMode::Basic, MatchMode::Bucketed] {
        let accuracy = run_accuracy(&corpus, 0, 0, mode, &options).unwrap();
        assert_eq!(accuracy, 1.0, "mode {mode:?}");
    }

    // Constructed bucket-separable two-site corpus: identical primary and
    // secondary IP sets, opposite bucket placement.
    let ip = |s: &str| s.parse::<IpAddr>().unwrap();
    let fingerprint = |site: &str, first: &str, second: &str| IpFingerprint {
        website_id: site.to_string(),
        primary_ips: BTreeSet::from([ip("9.9.9.9")]),
        bucket_ips: [
            BTreeSet::from([ip(first)]),
            BTreeSet::from([ip(second)]),
            BTreeSet::new(),
        ],
        built_at_batch: 0,
    };
    let db = FingerprintDb::new(vec![
        fingerprint("siteA", "10.0.0.1", "10.0.0.2"),
        fingerprint("siteB", "10.0.0.2", "10.0.0.1"),
    ]);
    let entropy = EntropyTable::from_maps(
        BTreeMap::new(),
        BTreeMap::from([(ip("10.0.0.1"), 2.0), (ip("10.0.0.2"), 2.0)]),
    );
    let visits = [
        ("siteA", "10.0.0.1", "10.0.0.2"),
        ("siteB", "10.0.0.2", "10.0.0.1"),
    ];
    for (truth, loading_ip, later_ip) in visits {
        let trace = Trace::new(
            format!("visit-{truth}"),
            vec![
                TraceEvent { t_ms: 0, dst_ip: ip("9.9.9.9") },
                TraceEvent { t_ms: 50, dst_ip: ip(loading_ip) },
                TraceEvent { t_ms: 350, dst_ip: ip(later_ip) },
            ],
            Some(truth.to_string()),
        )
        .unwrap();
        let basic = match_basic(&trace, &db, &entropy);
        assert!(basic.tie, "basic mode must tie on this corpus");
        let bucketed = match_bucketed(&trace, &db, &entropy);
        assert!(!bucketed.tie);
        assert_eq!(bucketed.prediction.as_deref(), Some(truth));
    }
    finish("5 (closed-loop accuracy)", started, Duration::from_secs(30));
}

#[test]
fn criterion_06_aging_monotonicity() {
    let started = Instant::now();
    let base = CorpusConfig {
        n_websites: 60,
        secondary_domains_per_site: SecondaryCountSpec { mean: 5, spread: 1 },
        shared_service_domains: 4,
        shared_inclusion_probs: vec![0.6, 0.5, 0.4, 0.3],
        co_location_degree: 3,
        co_located_fraction: 1.0,
        churn_rate_per_batch: 0.0,
        primary_churn_rate_per_batch: 0.0,
        n_batches: 2,
        freshness_mix: FreshnessMix::default(),
        adblock_removal_count: 0,
        rng_seed: 0,
    };
    let grid = SweepGrid {
        base,
        churn_rates: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        co_location_degrees: vec![],
        seeds: (1..=30).collect(),
        build_batch: 0,
        trace_batch: None,
        trace_options: TraceOptions::default(),
    };
    let rows = sweep(&grid, MatchMode::Basic).unwrap();
    assert_eq!(rows.len(), 5);
    for pair in rows.windows(2) {
        assert!(
            pair[0].mean_accuracy >= pair[1].mean_accuracy,
            "accuracy rose from churn {} ({}) to churn {} ({})",
            pair[0].churn_rate,
            pair[0].mean_accuracy,
            pair[1].churn_rate,
            pair[1].mean_accuracy
        );
    }
    // The sweep has to show actual decay, not a flat line.
    assert!(rows[0].mean_accuracy > rows[4].mean_accuracy);
    finish("6 (aging monotonicity)", started, Duration::from_secs(300));
}

#[test]
fn criterion_07_primary_ip_persistence() {
    let started = Instant::now();
    let mut config = CorpusConfig {
        n_websites: 500,
        secondary_domains_per_site: SecondaryCountSpec { mean: 5, spread: 1 },
        shared_service_domains: 0,
        shared_inclusion_probs: vec![],
        co_location_degree: 1,
        co_located_fraction: 1.0,
        churn_rate_per_batch: 1.0, // every secondary mapping re-rolls
        primary_churn_rate_per_batch: 0.0,
        n_batches: 2,
        freshness_mix: FreshnessMix::default(),
        adblock_removal_count: 0,
        rng_seed: 7,
    };
    let corpus = generate_corpus(&config).unwrap();
    let options = TraceOptions::default();
    let basic = run_accuracy(&corpus, 0, 1, MatchMode::Basic, &options).unwrap();
    assert_eq!(
        basic, 1.0,
        "unique static primaries must carry the attack through full secondary churn"
    );

    // Half the corpus co-hosted in pairs: basic matching may not do worse
    // than naive primary matching.
    config.co_location_degree = 2;
    config.co_located_fraction = 0.5;
    let corpus = generate_corpus(&config).unwrap();
    let basic = run_accuracy(&corpus, 0, 1, MatchMode::Basic, &options).unwrap();
    let naive = run_accuracy(&corpus, 0, 1, MatchMode::NaivePrimary, &options).unwrap();
    assert!(
        basic >= naive,
        "basic {basic} fell below naive {naive} under full secondary churn"
    );
    finish("7 (primary-IP persistence)", started, Duration::from_secs(60));
}

#[test]
fn criterion_08_kmeans_bucket_recovery() {
    let started = Instant::now();
    let config = CorpusConfig::default_corpus(1_000, 8);
    let corpus = generate_corpus(&config).unwrap();
    let options = TraceOptions {
        jitter_ms: 50,
        ..TraceOptions::default()
    };
    let traces = generate_traces(&corpus, 0, &options).unwrap();
    assert_eq!(traces.len(), 1_000);
    let mapping = corpus.mapping_at(0).unwrap();
    let observations = corpus.observations_at(0).unwrap();

    let mut exact = 0usize;
    for (trace, obs) in traces.iter().zip(&observations) {
        let ip_bucket: BTreeMap<IpAddr, usize> = obs
            .requests
            .iter()
            .map(|r| (mapping[&r.domain], r.bucket.index()))
            .collect();
        let events = trace.secondary_events();
        let labels = cluster_times(&events.iter().map(|e| e.t_ms).collect::<Vec<_>>());
        let recovered = events
            .iter()
            .zip(&labels)
            .all(|(event, &label)| ip_bucket[&event.dst_ip] == label);
        if recovered {
            exact += 1;
        }
    }
    let rate = exact as f64 / traces.len() as f64;
    assert!(rate >= 0.99, "exact recovery rate {rate}");
    finish("8 (k-means bucket recovery)", started, Duration::from_secs(30));
}

#[test]
fn criterion_09_cache_semantics() {
    let started = Instant::now();

    // The three freshness classes.
    let classify = |cc: &str| freshness_timeline(&CachePolicy::parse(cc, None, None)).unwrap();
    assert_eq!(classify("no-store").as_seconds(), -1);
    assert_eq!(classify("no-cache").as_seconds(), 0);
    assert_eq!(classify("max-age=31536000").as_seconds(), 31_536_000);

    // Min-dominance on a randomized 10,000-resource suite, checked against
    // a recomputed minimum per key.
    let mut rng = ChaCha8Rng::seed_from_u64(0x09ca);
    let mut index = CacheIndex::default();
    let mut expected: BTreeMap<(String, IpAddr), i64> = BTreeMap::new();
    for _ in 0..10_000 {
        let website = format!("w{:02}", rng.gen_range(0..40));
        let ip = IpAddr::V4(Ipv4Addr::from(rng.gen_range(0u32..200)));
        let seconds: i64 = match rng.gen_range(0..3) {
            0 => -1,
            1 => 0,
            _ => rng.gen_range(1..=31_536_000),
        };
        index.insert_min(
            website.clone(),
            ip,
            FreshnessClass::try_from(seconds).unwrap(),
        );
        let slot = expected.entry((website, ip)).or_insert(i64::MAX);
        *slot = (*slot).min(seconds);
        // Every resource lands in exactly one class.
        let class = FreshnessClass::try_from(seconds).unwrap();
        match class {
            FreshnessClass::Uncachable => assert_eq!(seconds, -1),
            FreshnessClass::AlwaysRevalidate => assert_eq!(seconds, 0),
            FreshnessClass::FreshFor(s) => assert!(s as i64 == seconds && seconds > 0),
        }
    }
    for ((website, ip), &min_seconds) in &expected {
        assert_eq!(
            index.freshness(website, ip).unwrap().as_seconds(),
            min_seconds
        );
    }

    // Cache-aware matching at revisit 0 is bit-identical to basic matching.
    let config = CorpusConfig::default_corpus(120, 9);
    let corpus = generate_corpus(&config).unwrap();
    let view = build_attacker_view(&corpus, 0).unwrap();
    let cache_index =
        build_cache_index(&corpus.observations_at(0).unwrap(), &view.store).unwrap();
    let traces = generate_traces(&corpus, 0, &TraceOptions::default()).unwrap();
    for trace in &traces {
        let plain = match_basic(trace, &view.db, &view.entropy);
        let cache_aware = match_cache_aware(trace, &view.db, &view.entropy, 0, &cache_index);
        assert_eq!(plain, cache_aware);
        // Bit-identical includes the serialized form.
        let a = serde_json::to_vec(&formats::MatchRecord::from_result(&plain, None, 10)).unwrap();
        let b =
            serde_json::to_vec(&formats::MatchRecord::from_result(&cache_aware, None, 10)).unwrap();
        assert_eq!(a, b);
    }
    finish("9 (cache semantics)", started, Duration::from_secs(30));
}

#[test]
fn criterion_10_determinism_and_round_trip() {
    let started = Instant::now();

    // Byte-identical simulator output for identical (config, seed).
    let config = CorpusConfig::default_corpus(100, 10);
    let serialize_run = || {
        let corpus = generate_corpus(&config).unwrap();
        let mut bytes = Vec::new();
        for batch in 0..corpus.n_batches() {
            let observations = corpus.observations_at(batch).unwrap();
            formats::write_jsonl(
                &mut bytes,
                observations
                    .iter()
                    .map(formats::ObservationRecord::from_observation),
            )
            .unwrap();
            let traces = generate_traces(&corpus, batch, &TraceOptions::default()).unwrap();
            formats::write_jsonl(&mut bytes, traces.iter().map(formats::TraceRecord::from_trace))
                .unwrap();
        }
        formats::write_jsonl(
            &mut bytes,
            corpus
                .snapshots()
                .iter()
                .map(|(snapshot, batch)| formats::SnapshotRecord::from_snapshot(snapshot, *batch)),
        )
        .unwrap();
        formats::write_mappings(&mut bytes, &corpus.store()).unwrap();
        bytes
    };
    assert_eq!(serialize_run(), serialize_run());

    // Every format round-trips through its reader and writer on random
    // simulator-derived fixtures.
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_corpus(&CorpusConfig::default_corpus(60, 11)).unwrap();
    let view = build_attacker_view(&corpus, 0).unwrap();

    // observations.jsonl
    let observations = corpus.all_observations();
    let path = dir.path().join("observations.jsonl");
    let records: Vec<_> = observations
        .iter()
        .map(formats::ObservationRecord::from_observation)
        .collect();
    let mut bytes = Vec::new();
    formats::write_jsonl(&mut bytes, records.iter()).unwrap();
    std::fs::write(&path, &bytes).unwrap();
    let reread = formats::read_observations(&path, None).unwrap();
    assert_eq!(reread, observations);

    // snapshots.jsonl -> store -> mappings.jsonl -> store
    let path = dir.path().join("snapshots.jsonl");
    let mut bytes = Vec::new();
    formats::write_jsonl(
        &mut bytes,
        corpus
            .snapshots()
            .iter()
            .map(|(s, b)| formats::SnapshotRecord::from_snapshot(s, *b)),
    )
    .unwrap();
    std::fs::write(&path, &bytes).unwrap();
    let store = formats::read_snapshots_into_store(&path).unwrap();
    let mappings_path = dir.path().join("mappings.jsonl");
    let mut mapping_bytes = Vec::new();
    formats::write_mappings(&mut mapping_bytes, &store).unwrap();
    std::fs::write(&mappings_path, &mapping_bytes).unwrap();
    let reloaded = formats::read_mappings(&mappings_path).unwrap();
    let mut rewritten = Vec::new();
    formats::write_mappings(&mut rewritten, &reloaded).unwrap();
    assert_eq!(mapping_bytes, rewritten);

    // fingerprints.jsonl
    let path = dir.path().join("fingerprints.jsonl");
    let mut bytes = Vec::new();
    formats::write_jsonl(
        &mut bytes,
        view.db
            .fingerprints()
            .iter()
            .map(formats::FingerprintRecord::from_fingerprint),
    )
    .unwrap();
    std::fs::write(&path, &bytes).unwrap();
    assert_eq!(
        formats::read_fingerprints(&path).unwrap(),
        view.db.fingerprints()
    );

    // traces.jsonl
    let traces = generate_traces(&corpus, 0, &TraceOptions::default()).unwrap();
    let path = dir.path().join("traces.jsonl");
    let mut bytes = Vec::new();
    formats::write_jsonl(&mut bytes, traces.iter().map(formats::TraceRecord::from_trace)).unwrap();
    std::fs::write(&path, &bytes).unwrap();
    let reread: Vec<Trace> = formats::read_jsonl::<formats::TraceRecord>(&path)
        .unwrap()
        .map(|item| item.unwrap().1.to_trace().unwrap())
        .collect();
    assert_eq!(reread, traces);

    // matches.jsonl
    let match_records: Vec<formats::MatchRecord> = traces
        .iter()
        .map(|t| {
            let result = match_bucketed(t, &view.db, &view.entropy);
            formats::MatchRecord::from_result(&result, t.truth.as_deref(), 10)
        })
        .collect();
    let path = dir.path().join("matches.jsonl");
    let mut bytes = Vec::new();
    formats::write_jsonl(&mut bytes, match_records.iter()).unwrap();
    std::fs::write(&path, &bytes).unwrap();
    let reread: Vec<formats::MatchRecord> = formats::read_jsonl(&path)
        .unwrap()
        .map(|item| item.unwrap().1)
        .collect();
    assert_eq!(reread, match_records);

    // entropy.csv
    let path = dir.path().join("entropy.csv");
    let mut bytes = Vec::new();
    formats::write_entropy_csv(&mut bytes, &view.entropy).unwrap();
    std::fs::write(&path, &bytes).unwrap();
    let reloaded = formats::read_entropy_csv(&path).unwrap();
    assert_eq!(reloaded.domain_bits, view.entropy.domain_bits);
    assert_eq!(reloaded.ip_bits, view.entropy.ip_bits);

    // cache_index.csv
    let index = build_cache_index(&corpus.observations_at(0).unwrap(), &view.store).unwrap();
    let path = dir.path().join("cache_index.csv");
    let mut bytes = Vec::new();
    formats::write_cache_index_csv(&mut bytes, &index).unwrap();
    std::fs::write(&path, &bytes).unwrap();
    assert_eq!(formats::read_cache_index_csv(&path).unwrap(), index);

    finish("10 (determinism and round-trip)", started, Duration::from_secs(60));
}
