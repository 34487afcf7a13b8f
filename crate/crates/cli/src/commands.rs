//! Subcommand implementations.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::net::IpAddr;
use std::path::Path;

use rayon::prelude::*;

use ipwf_core::cache::{build_cache_index, CacheIndex};
use ipwf_core::domain::Domain;
use ipwf_core::entropy::EntropyTable;
use ipwf_core::fingerprint::{build_domain_fingerprint, resolve_fingerprint, BrowseObservation};
use ipwf_core::formats::{
    self, AgingRow, ClassRow, DriftRow, FingerprintRecord, MatchRecord, ObservationRecord,
    ReportRow, SnapshotRecord, TraceRecord, TruthRecord,
};
use ipwf_core::mapping_store::classify_longevity;
use ipwf_core::matcher::{
    detect_adblock, match_basic, match_bucketed, match_cache_aware, match_naive_primary,
    Blocklist, FingerprintDb, MatchMode, MatchResult, Trace,
};
use ipwf_core::simulator::{self, generate_corpus, generate_traces, SimulationSpec, SweepGrid};
use ipwf_core::stability::{difference_degree, AccuracyCounter};

use crate::cli::{Cli, Command, KindArg, ModeArg};
use crate::output::OutputFile;

const TRACE_CHUNK: usize = 4_096;

pub struct CliError {
    pub code: i32,
    pub message: String,
}

fn validation(message: impl Into<String>) -> CliError {
    CliError {
        code: 1,
        message: message.into(),
    }
}

fn runtime(error: impl std::fmt::Display) -> CliError {
    CliError {
        code: 2,
        message: error.to_string(),
    }
}

fn require_input(path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(validation(format!("input file not found: {}", path.display())));
    }
    Ok(())
}

struct Diag {
    quiet: bool,
}

impl Diag {
    fn info(&self, message: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("ipwf: {}", message.as_ref());
        }
    }
}

pub fn run(args: Cli) -> Result<(), CliError> {
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| validation(format!("cannot configure {threads} threads: {e}")))?;
    }
    let diag = Diag { quiet: args.quiet };
    if args.seed.is_some()
        && !matches!(args.command, Command::Simulate { .. } | Command::Sweep { .. })
    {
        diag.info("--seed only affects simulate and sweep; ignoring it here");
    }

    match args.command {
        Command::BuildFingerprints {
            observations,
            mappings,
            batch,
            out,
        } => build_fingerprints(&diag, &observations, &mappings, batch, &out),
        Command::Entropy {
            observations,
            mappings,
            batch,
            out,
        } => entropy_cmd(&diag, &observations, &mappings, batch, &out),
        Command::Match {
            fingerprints,
            entropy,
            traces,
            mode,
            blocklist,
            revisit_elapsed,
            cache_index,
            top_k,
            out,
        } => match_cmd(
            &diag,
            &fingerprints,
            &entropy,
            &traces,
            mode,
            blocklist.as_deref(),
            revisit_elapsed,
            cache_index.as_deref(),
            top_k,
            &out,
        ),
        Command::Stability {
            observations,
            kind,
            mappings,
            out,
        } => stability_cmd(&diag, &observations, kind, mappings.as_deref(), &out),
        Command::AgedAccuracy {
            fingerprints,
            traces,
            entropy,
            mode,
            trace_batch,
            out,
        } => aged_accuracy_cmd(&diag, &fingerprints, &traces, &entropy, mode, trace_batch, &out),
        Command::CacheAnalyze {
            observations,
            mappings,
            batch,
            out,
        } => cache_analyze(&diag, &observations, &mappings, batch, &out),
        Command::ClassifyMappings {
            mappings,
            total_batches,
            out,
        } => classify_mappings(&diag, &mappings, total_batches, &out),
        Command::Simulate { config, out_dir } => simulate(&diag, &config, args.seed, &out_dir),
        Command::Sweep { grid, mode, out } => sweep_cmd(&diag, &grid, mode, args.seed, &out),
        Command::Report { matches, out } => report(&diag, &matches, &out),
    }
}

fn fixed_mode(mode: ModeArg) -> Result<MatchMode, CliError> {
    match mode {
        ModeArg::Naive => Ok(MatchMode::NaivePrimary),
        ModeArg::Basic => Ok(MatchMode::Basic),
        ModeArg::Bucketed => Ok(MatchMode::Bucketed),
        ModeArg::Auto => Err(validation("auto mode is only supported by `match`")),
    }
}

fn load_observations(path: &Path, batch: u32) -> Result<Vec<BrowseObservation>, CliError> {
    let observations = formats::read_observations(path, Some(batch)).map_err(runtime)?;
    if observations.is_empty() {
        return Err(validation(format!(
            "{} holds no observations for batch {batch}",
            path.display()
        )));
    }
    Ok(observations)
}

// ---------------------------------------------------------------------------

fn build_fingerprints(
    diag: &Diag,
    observations: &Path,
    mappings: &Path,
    batch: u32,
    out: &Path,
) -> Result<(), CliError> {
    require_input(observations)?;
    require_input(mappings)?;
    let mut output = OutputFile::create(out).map_err(|e| validation(e.to_string()))?;

    let store = formats::read_mappings(mappings).map_err(runtime)?;
    let observations = load_observations(observations, batch)?;

    let mut records = Vec::with_capacity(observations.len());
    let mut unresolved_domains = 0usize;
    for obs in &observations {
        let df = build_domain_fingerprint(obs);
        let resolved = resolve_fingerprint(&df, &store, batch).map_err(runtime)?;
        unresolved_domains += resolved.unresolved.len();
        records.push(FingerprintRecord::from_fingerprint(&resolved.fingerprint));
    }
    records.sort_by(|a, b| a.website.cmp(&b.website));
    formats::write_jsonl(&mut output, records.iter()).map_err(runtime)?;
    output.commit().map_err(runtime)?;
    diag.info(format!(
        "built {} fingerprints at batch {batch} ({unresolved_domains} unresolved secondary domains)",
        records.len()
    ));
    Ok(())
}

fn entropy_cmd(
    diag: &Diag,
    observations: &Path,
    mappings: &Path,
    batch: u32,
    out: &Path,
) -> Result<(), CliError> {
    require_input(observations)?;
    require_input(mappings)?;
    let mut output = OutputFile::create(out).map_err(|e| validation(e.to_string()))?;

    let store = formats::read_mappings(mappings).map_err(runtime)?;
    let observations = load_observations(observations, batch)?;
    let table = EntropyTable::build(&observations, &store, batch).map_err(runtime)?;
    formats::write_entropy_csv(&mut output, &table).map_err(runtime)?;
    output.commit().map_err(runtime)?;
    diag.info(format!(
        "entropy over {} websites: {} domains, {} IPs",
        table.total_websites,
        table.domain_bits.len(),
        table.ip_bits.len()
    ));
    Ok(())
}

// ---------------------------------------------------------------------------

enum MatchPlan {
    Fixed(MatchMode),
    Auto(Blocklist),
    CacheAware { elapsed: i64, index: CacheIndex },
}

impl MatchPlan {
    fn run(&self, trace: &Trace, db: &FingerprintDb, entropy: &EntropyTable) -> MatchResult {
        match self {
            MatchPlan::Fixed(MatchMode::NaivePrimary) => match_naive_primary(trace, db),
            MatchPlan::Fixed(MatchMode::Basic) => match_basic(trace, db, entropy),
            MatchPlan::Fixed(MatchMode::Bucketed) => match_bucketed(trace, db, entropy),
            MatchPlan::Auto(blocklist) => {
                match detect_adblock(trace, blocklist).preferred_mode() {
                    MatchMode::Basic => match_basic(trace, db, entropy),
                    _ => match_bucketed(trace, db, entropy),
                }
            }
            MatchPlan::CacheAware { elapsed, index } => {
                match_cache_aware(trace, db, entropy, *elapsed, index)
            }
        }
    }
}

fn read_blocklist(path: &Path) -> Result<Blocklist, CliError> {
    let text = std::fs::read_to_string(path).map_err(runtime)?;
    let mut ips = Vec::new();
    for (index, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ip: IpAddr = line.parse().map_err(|_| {
            runtime(format!("{}:{}: invalid IP {line:?}", path.display(), index + 1))
        })?;
        ips.push(ip);
    }
    Blocklist::new(ips).map_err(runtime)
}

#[allow(clippy::too_many_arguments)]
fn match_cmd(
    diag: &Diag,
    fingerprints: &Path,
    entropy: &Path,
    traces: &Path,
    mode: ModeArg,
    blocklist: Option<&Path>,
    revisit_elapsed: i64,
    cache_index: Option<&Path>,
    top_k: usize,
    out: &Path,
) -> Result<(), CliError> {
    require_input(fingerprints)?;
    require_input(entropy)?;
    require_input(traces)?;
    if let Some(path) = blocklist {
        require_input(path)?;
    }
    if let Some(path) = cache_index {
        require_input(path)?;
    }

    let plan = if revisit_elapsed > 0 {
        if mode != ModeArg::Basic {
            return Err(validation(
                "--revisit-elapsed requires --mode basic: cache-aware matching is defined for the basic method",
            ));
        }
        let path = cache_index.ok_or_else(|| {
            validation("--revisit-elapsed requires --cache-index from `cache-analyze`")
        })?;
        MatchPlan::CacheAware {
            elapsed: revisit_elapsed,
            index: formats::read_cache_index_csv(path).map_err(runtime)?,
        }
    } else if mode == ModeArg::Auto {
        let path = blocklist
            .ok_or_else(|| validation("--mode auto requires --blocklist to probe for ad traffic"))?;
        MatchPlan::Auto(read_blocklist(path)?)
    } else {
        MatchPlan::Fixed(fixed_mode(mode)?)
    };

    let mut output = OutputFile::create(out).map_err(|e| validation(e.to_string()))?;
    let db = FingerprintDb::new(formats::read_fingerprints(fingerprints).map_err(runtime)?);
    let entropy = formats::read_entropy_csv(entropy).map_err(runtime)?;

    // Traces stream through in chunks; only the compact match rows are kept.
    let mut records: Vec<MatchRecord> = Vec::new();
    let mut reader = formats::read_jsonl::<TraceRecord>(traces).map_err(runtime)?;
    loop {
        let mut chunk = Vec::with_capacity(TRACE_CHUNK);
        for item in reader.by_ref().take(TRACE_CHUNK) {
            chunk.push(item.map_err(runtime)?);
        }
        if chunk.is_empty() {
            break;
        }
        let matched: Vec<MatchRecord> = chunk
            .par_iter()
            .map(|(line, record)| {
                let trace = record.to_trace().map_err(|e| {
                    runtime(format!("{}:{}: {e}", traces.display(), line))
                })?;
                let result = plan.run(&trace, &db, &entropy);
                Ok(MatchRecord::from_result(&result, trace.truth.as_deref(), top_k))
            })
            .collect::<Result<_, CliError>>()?;
        records.extend(matched);
    }

    // Canonical order, independent of input order and thread count.
    records.sort_by(|a, b| a.trace.cmp(&b.trace));
    formats::write_jsonl(&mut output, records.iter()).map_err(runtime)?;
    output.commit().map_err(runtime)?;
    diag.info(format!("matched {} traces against {} fingerprints", records.len(), db.len()));
    Ok(())
}

// ---------------------------------------------------------------------------

fn stability_cmd(
    diag: &Diag,
    observations: &Path,
    kind: KindArg,
    mappings: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    require_input(observations)?;
    let store = match (kind, mappings) {
        (KindArg::Ips, None) => {
            return Err(validation("--kind ips requires --mappings to resolve domains"))
        }
        (KindArg::Ips, Some(path)) => {
            require_input(path)?;
            Some(formats::read_mappings(path).map_err(runtime)?)
        }
        (KindArg::Domains, _) => None,
    };
    let mut output = OutputFile::create(out).map_err(|e| validation(e.to_string()))?;

    // website -> batch -> contacted set (domains or their IPs).
    let mut domain_sets: BTreeMap<(String, u32), BTreeSet<Domain>> = BTreeMap::new();
    for item in formats::read_jsonl::<ObservationRecord>(observations).map_err(runtime)? {
        let (line, record) = item.map_err(runtime)?;
        let obs = record
            .to_observation()
            .map_err(|e| runtime(format!("{}:{}: {e}", observations.display(), line)))?;
        let entry = domain_sets
            .entry((obs.website_id.clone(), obs.batch_id))
            .or_default();
        entry.insert(obs.primary_domain.clone());
        entry.extend(obs.requests.iter().map(|r| r.domain.clone()));
    }

    let contacted = |domains: &BTreeSet<Domain>, batch: u32| -> BTreeSet<String> {
        match &store {
            None => domains.iter().map(Domain::to_string).collect(),
            Some(store) => domains
                .iter()
                .flat_map(|d| store.ips_of(d, batch))
                .map(|ip| ip.to_string())
                .collect(),
        }
    };

    let mut per_site: BTreeMap<&str, Vec<(u32, BTreeSet<String>)>> = BTreeMap::new();
    for ((website, batch), domains) in &domain_sets {
        let set = contacted(domains, *batch);
        if set.is_empty() {
            continue; // nothing resolvable at this batch
        }
        per_site.entry(website).or_default().push((*batch, set));
    }

    let mut rows = Vec::new();
    for (website, batches) in &per_site {
        let Some((t0, base)) = batches.first() else { continue };
        for (t1, set) in &batches[1..] {
            let degree = difference_degree(base, set).map_err(runtime)?;
            rows.push(DriftRow {
                website: website.to_string(),
                t0: *t0,
                t1: *t1,
                degree,
            });
        }
    }
    formats::write_csv_rows(&mut output, rows.iter()).map_err(runtime)?;
    output.commit().map_err(runtime)?;
    diag.info(format!("{} drift rows across {} websites", rows.len(), per_site.len()));
    Ok(())
}

fn aged_accuracy_cmd(
    diag: &Diag,
    fingerprints: &Path,
    traces: &Path,
    entropy: &Path,
    mode: ModeArg,
    trace_batch: Option<u32>,
    out: &Path,
) -> Result<(), CliError> {
    require_input(fingerprints)?;
    require_input(traces)?;
    require_input(entropy)?;
    let mode = fixed_mode(mode)?;
    let mut output = OutputFile::create(out).map_err(|e| validation(e.to_string()))?;

    let fps = formats::read_fingerprints(fingerprints).map_err(runtime)?;
    let built_at = fps.iter().map(|fp| fp.built_at_batch).max().unwrap_or(0);
    let db = FingerprintDb::new(fps);
    let entropy = formats::read_entropy_csv(entropy).map_err(runtime)?;

    let mut counter = AccuracyCounter::default();
    let mut reader = formats::read_jsonl::<TraceRecord>(traces).map_err(runtime)?;
    loop {
        let mut chunk = Vec::with_capacity(TRACE_CHUNK);
        for item in reader.by_ref().take(TRACE_CHUNK) {
            chunk.push(item.map_err(runtime)?);
        }
        if chunk.is_empty() {
            break;
        }
        let observed: Vec<(MatchResult, Option<String>)> = chunk
            .par_iter()
            .map(|(line, record)| {
                let trace = record
                    .to_trace()
                    .map_err(|e| runtime(format!("{}:{}: {e}", traces.display(), line)))?;
                let result = match mode {
                    MatchMode::NaivePrimary => match_naive_primary(&trace, &db),
                    MatchMode::Basic => match_basic(&trace, &db, &entropy),
                    MatchMode::Bucketed => match_bucketed(&trace, &db, &entropy),
                };
                Ok((result, trace.truth))
            })
            .collect::<Result<_, CliError>>()?;
        for (result, truth) in &observed {
            if let Some(truth) = truth {
                counter.observe(result, truth);
            }
        }
    }

    let accuracy = counter.accuracy().map_err(runtime)?;
    let age = i64::from(trace_batch.unwrap_or(built_at)) - i64::from(built_at);
    formats::write_csv_rows(
        &mut output,
        [AgingRow {
            age_batches: age,
            accuracy,
            n: counter.labeled(),
        }],
    )
    .map_err(runtime)?;
    output.commit().map_err(runtime)?;
    diag.info(format!(
        "accuracy {accuracy:.4} over {} labeled traces at age {age}",
        counter.labeled()
    ));
    Ok(())
}

fn cache_analyze(
    diag: &Diag,
    observations: &Path,
    mappings: &Path,
    batch: u32,
    out: &Path,
) -> Result<(), CliError> {
    require_input(observations)?;
    require_input(mappings)?;
    let mut output = OutputFile::create(out).map_err(|e| validation(e.to_string()))?;

    let store = formats::read_mappings(mappings).map_err(runtime)?;
    let observations = load_observations(observations, batch)?;
    let index = build_cache_index(&observations, &store).map_err(runtime)?;
    formats::write_cache_index_csv(&mut output, &index).map_err(runtime)?;
    output.commit().map_err(runtime)?;
    diag.info(format!("{} (website, ip) cache entries", index.len()));
    Ok(())
}

fn classify_mappings(
    diag: &Diag,
    mappings: &Path,
    total_batches: u32,
    out: &Path,
) -> Result<(), CliError> {
    require_input(mappings)?;
    let mut output = OutputFile::create(out).map_err(|e| validation(e.to_string()))?;

    let store = formats::read_mappings(mappings).map_err(runtime)?;
    let mut rows = Vec::with_capacity(store.len());
    for record in store.records() {
        let class = classify_longevity(record, total_batches).map_err(runtime)?;
        rows.push(ClassRow {
            domain: record.domain.to_string(),
            ip: record.ip.to_string(),
            class: class.as_str().to_string(),
        });
    }
    formats::write_csv_rows(&mut output, rows.iter()).map_err(runtime)?;
    output.commit().map_err(runtime)?;
    diag.info(format!("classified {} mappings over {total_batches} batches", rows.len()));
    Ok(())
}

// ---------------------------------------------------------------------------

fn simulate(diag: &Diag, config: &Path, seed: Option<u64>, out_dir: &Path) -> Result<(), CliError> {
    require_input(config)?;
    let text = std::fs::read_to_string(config).map_err(runtime)?;
    let mut spec: SimulationSpec = serde_json::from_str(&text)
        .map_err(|e| validation(format!("{}: {e}", config.display())))?;
    if let Some(seed) = seed {
        spec.corpus.rng_seed = seed;
    }
    std::fs::create_dir_all(out_dir).map_err(|e| validation(e.to_string()))?;

    let corpus = generate_corpus(&spec.corpus).map_err(runtime)?;

    let mut observations_out =
        OutputFile::create(&out_dir.join("observations.jsonl")).map_err(|e| validation(e.to_string()))?;
    let mut snapshots_out =
        OutputFile::create(&out_dir.join("snapshots.jsonl")).map_err(|e| validation(e.to_string()))?;
    let mut traces_out =
        OutputFile::create(&out_dir.join("traces.jsonl")).map_err(|e| validation(e.to_string()))?;
    let mut truth_out =
        OutputFile::create(&out_dir.join("truth.jsonl")).map_err(|e| validation(e.to_string()))?;

    for batch in 0..corpus.n_batches() {
        let observations = corpus.observations_at(batch).map_err(runtime)?;
        formats::write_jsonl(
            &mut observations_out,
            observations.iter().map(ObservationRecord::from_observation),
        )
        .map_err(runtime)?;

        let traces = generate_traces(&corpus, batch, &spec.trace_options).map_err(runtime)?;
        formats::write_jsonl(&mut traces_out, traces.iter().map(TraceRecord::from_trace))
            .map_err(runtime)?;
        formats::write_jsonl(
            &mut truth_out,
            traces.iter().map(|t| TruthRecord {
                trace: t.trace_id.clone(),
                website: t.truth.clone().unwrap_or_default(),
                batch,
            }),
        )
        .map_err(runtime)?;
    }
    formats::write_jsonl(
        &mut snapshots_out,
        corpus
            .snapshots()
            .iter()
            .map(|(s, b)| SnapshotRecord::from_snapshot(s, *b)),
    )
    .map_err(runtime)?;

    observations_out.commit().map_err(runtime)?;
    snapshots_out.commit().map_err(runtime)?;
    traces_out.commit().map_err(runtime)?;
    truth_out.commit().map_err(runtime)?;
    diag.info(format!(
        "simulated {} websites over {} batches into {}",
        corpus.n_websites(),
        corpus.n_batches(),
        out_dir.display()
    ));
    Ok(())
}

fn sweep_cmd(
    diag: &Diag,
    grid: &Path,
    mode: ModeArg,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    require_input(grid)?;
    let mode = fixed_mode(mode)?;
    let text = std::fs::read_to_string(grid).map_err(runtime)?;
    let mut grid: SweepGrid = serde_json::from_str(&text)
        .map_err(|e| validation(format!("{e}")))?;
    if let Some(seed) = seed {
        grid.base.rng_seed = seed;
    }
    let mut output = OutputFile::create(out).map_err(|e| validation(e.to_string()))?;
    let rows = simulator::sweep(&grid, mode).map_err(runtime)?;
    formats::write_csv_rows(&mut output, rows.iter()).map_err(runtime)?;
    output.commit().map_err(runtime)?;
    diag.info(format!("{} grid points", rows.len()));
    Ok(())
}

fn report(diag: &Diag, matches: &Path, out: &Path) -> Result<(), CliError> {
    require_input(matches)?;
    let mut output = OutputFile::create(out).map_err(|e| validation(e.to_string()))?;

    const CDF_POINTS: [usize; 5] = [1, 2, 5, 10, 50];
    let mut total = 0u64;
    let mut correct = 0u64;
    let mut ties = 0u64;
    let mut cdf_counts = [0u64; CDF_POINTS.len()];
    for item in formats::read_jsonl::<MatchRecord>(matches).map_err(runtime)? {
        let (line, record) = item.map_err(runtime)?;
        let Some(truth) = &record.truth else {
            return Err(runtime(format!(
                "{}:{}: match row for trace {} carries no truth label",
                matches.display(),
                line,
                record.trace
            )));
        };
        total += 1;
        if record.tie {
            ties += 1;
        } else if record.prediction.as_ref() == Some(truth) {
            correct += 1;
        }
        for (slot, &k) in cdf_counts.iter_mut().zip(CDF_POINTS.iter()) {
            if record.n_candidates <= k {
                *slot += 1;
            }
        }
    }
    if total == 0 {
        return Err(runtime("no match rows to report on"));
    }

    let mut rows = vec![
        ReportRow {
            metric: "traces".into(),
            value: total as f64,
        },
        ReportRow {
            metric: "accuracy".into(),
            value: correct as f64 / total as f64,
        },
        ReportRow {
            metric: "tie_fraction".into(),
            value: ties as f64 / total as f64,
        },
    ];
    for (count, k) in cdf_counts.iter().zip(CDF_POINTS.iter()) {
        rows.push(ReportRow {
            metric: format!("candidates_le_{k}"),
            value: *count as f64 / total as f64,
        });
    }
    formats::write_csv_rows(&mut output, rows.iter()).map_err(runtime)?;
    output.commit().map_err(runtime)?;
    diag.info(format!("report over {total} matches"));
    Ok(())
}
