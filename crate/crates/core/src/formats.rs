//! Wire formats: JSONL records and CSV reports.
//!
//! Every record type here mirrors one line of a pipeline file. Readers work
//! line-at-a-time and report the offending line number on corrupt input;
//! writers emit canonical, diff-able output (UTF-8, LF, sorted sets).

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::IpAddr;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cache::{CacheIndex, CachePolicy, FreshnessClass};
use crate::domain::Domain;
use crate::entropy::EntropyTable;
use crate::error::{Error, Result};
use crate::fingerprint::{BrowseObservation, Bucket, IpFingerprint, Request};
use crate::mapping_store::{DnsSnapshot, MappingRecord, MappingStore};
use crate::matcher::{Candidate, MatchMode, MatchResult, Trace, TraceEvent};

// ---------------------------------------------------------------------------
// Generic JSONL plumbing

/// Read one JSONL file, decoding every non-empty line. The iterator yields
/// errors carrying `path:line` context.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
) -> Result<impl Iterator<Item = Result<(usize, T)>> + '_> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let iter = reader.lines().enumerate().filter_map(move |(index, line)| {
        let line_no = index + 1;
        let line = match line {
            Ok(line) => line,
            Err(e) => return Some(Err(Error::Io(e))),
        };
        if line.trim().is_empty() {
            return None;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(value) => Some(Ok((line_no, value))),
            Err(e) => Some(Err(Error::JsonSyntax {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })),
        }
    });
    Ok(iter)
}

pub fn write_jsonl<T: Serialize>(
    writer: &mut impl Write,
    records: impl IntoIterator<Item = T>,
) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut *writer, &record)
            .map_err(|e| Error::InvalidRecord { message: e.to_string() })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

fn parse_ip(domain: &str, raw: &str) -> Result<IpAddr> {
    raw.parse().map_err(|_| Error::InvalidIp {
        domain: domain.to_string(),
        value: raw.to_string(),
    })
}

// ---------------------------------------------------------------------------
// snapshots.jsonl

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub domain: String,
    pub ips: Vec<String>,
    pub resolved_at: i64,
    pub batch: u32,
}

impl SnapshotRecord {
    pub fn to_snapshot(&self) -> Result<DnsSnapshot> {
        let ips: Vec<&str> = self.ips.iter().map(String::as_str).collect();
        DnsSnapshot::from_text(&self.domain, &ips, self.resolved_at)
    }

    pub fn from_snapshot(snapshot: &DnsSnapshot, batch: u32) -> Self {
        SnapshotRecord {
            domain: snapshot.domain.to_string(),
            ips: snapshot.ips.iter().map(IpAddr::to_string).collect(),
            resolved_at: snapshot.resolved_at,
            batch,
        }
    }
}

/// Load a snapshot file into a fresh store. Lines must be grouped by
/// non-decreasing batch.
pub fn read_snapshots_into_store(path: &Path) -> Result<MappingStore> {
    let mut store = MappingStore::new();
    for item in read_jsonl::<SnapshotRecord>(path)? {
        let (line, record) = item?;
        let snapshot = record.to_snapshot().map_err(|e| e.at_line(path, line))?;
        store
            .ingest_snapshot(&snapshot, record.batch)
            .map_err(|e| e.at_line(path, line))?;
    }
    Ok(store)
}

// ---------------------------------------------------------------------------
// mappings.jsonl

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingLine {
    pub domain: String,
    pub ip: String,
    pub batches: Vec<u32>,
}

pub fn write_mappings(writer: &mut impl Write, store: &MappingStore) -> Result<()> {
    // Store iteration is (domain, ip)-ordered already.
    write_jsonl(
        writer,
        store.records().map(|record| MappingLine {
            domain: record.domain.to_string(),
            ip: record.ip.to_string(),
            batches: record.observed_batches.iter().copied().collect(),
        }),
    )
}

pub fn read_mappings(path: &Path) -> Result<MappingStore> {
    let mut records = Vec::new();
    for item in read_jsonl::<MappingLine>(path)? {
        let (line, raw) = item?;
        let domain = Domain::new(&raw.domain).map_err(|e| e.at_line(path, line))?;
        let ip = parse_ip(&raw.domain, &raw.ip).map_err(|e| e.at_line(path, line))?;
        let record = MappingRecord::new(domain, ip, raw.batches.iter().copied().collect())
            .map_err(|e| e.at_line(path, line))?;
        records.push(record);
    }
    Ok(MappingStore::from_records(records))
}

// ---------------------------------------------------------------------------
// observations.jsonl

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub cc: String,
    pub expires: Option<i64>,
    pub date: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub domain: String,
    pub bucket: Bucket,
    pub t_ms: u32,
    pub cache: CacheRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub website: String,
    pub batch: u32,
    pub primary: String,
    pub requests: Vec<RequestRecord>,
}

impl ObservationRecord {
    pub fn to_observation(&self) -> Result<BrowseObservation> {
        let requests = self
            .requests
            .iter()
            .map(|r| {
                Ok(Request {
                    domain: Domain::new(&r.domain)?,
                    bucket: r.bucket,
                    t_offset_ms: r.t_ms,
                    cache: CachePolicy::parse(&r.cache.cc, r.cache.expires, r.cache.date),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BrowseObservation {
            website_id: self.website.clone(),
            batch_id: self.batch,
            primary_domain: Domain::new(&self.primary)?,
            requests,
        })
    }

    pub fn from_observation(obs: &BrowseObservation) -> Self {
        ObservationRecord {
            website: obs.website_id.clone(),
            batch: obs.batch_id,
            primary: obs.primary_domain.to_string(),
            requests: obs
                .requests
                .iter()
                .map(|r| RequestRecord {
                    domain: r.domain.to_string(),
                    bucket: r.bucket,
                    t_ms: r.t_offset_ms,
                    cache: CacheRecord {
                        cc: r.cache.render(),
                        expires: r.cache.expires_at,
                        date: r.cache.response_date,
                    },
                })
                .collect(),
        }
    }
}

/// Read observations, optionally keeping only one batch.
pub fn read_observations(path: &Path, batch: Option<u32>) -> Result<Vec<BrowseObservation>> {
    let mut observations = Vec::new();
    for item in read_jsonl::<ObservationRecord>(path)? {
        let (line, record) = item?;
        if batch.is_some_and(|b| record.batch != b) {
            continue;
        }
        observations.push(record.to_observation().map_err(|e| e.at_line(path, line))?);
    }
    Ok(observations)
}

// ---------------------------------------------------------------------------
// fingerprints.jsonl

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintRecord {
    pub website: String,
    pub built_at: u32,
    pub primary_ips: Vec<String>,
    pub buckets: [Vec<String>; 3],
}

impl FingerprintRecord {
    pub fn to_fingerprint(&self) -> Result<IpFingerprint> {
        if self.primary_ips.is_empty() {
            return Err(Error::InvalidRecord {
                message: format!("fingerprint for {} has no primary IPs", self.website),
            });
        }
        let primary_ips = self
            .primary_ips
            .iter()
            .map(|raw| parse_ip(&self.website, raw))
            .collect::<Result<BTreeSet<_>>>()?;
        let mut bucket_ips: [BTreeSet<IpAddr>; 3] = Default::default();
        for (out, raw_bucket) in bucket_ips.iter_mut().zip(self.buckets.iter()) {
            for raw in raw_bucket {
                out.insert(parse_ip(&self.website, raw)?);
            }
        }
        Ok(IpFingerprint {
            website_id: self.website.clone(),
            primary_ips,
            bucket_ips,
            built_at_batch: self.built_at,
        })
    }

    pub fn from_fingerprint(fp: &IpFingerprint) -> Self {
        FingerprintRecord {
            website: fp.website_id.clone(),
            built_at: fp.built_at_batch,
            primary_ips: fp.primary_ips.iter().map(IpAddr::to_string).collect(),
            buckets: [0, 1, 2].map(|i| fp.bucket_ips[i].iter().map(IpAddr::to_string).collect()),
        }
    }
}

pub fn read_fingerprints(path: &Path) -> Result<Vec<IpFingerprint>> {
    let mut fingerprints = Vec::new();
    for item in read_jsonl::<FingerprintRecord>(path)? {
        let (line, record) = item?;
        fingerprints.push(record.to_fingerprint().map_err(|e| e.at_line(path, line))?);
    }
    Ok(fingerprints)
}

// ---------------------------------------------------------------------------
// traces.jsonl

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t_ms: i64,
    pub ip: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub trace: String,
    pub events: Vec<EventRecord>,
    pub truth: Option<String>,
}

impl TraceRecord {
    pub fn to_trace(&self) -> Result<Trace> {
        let events = self
            .events
            .iter()
            .map(|e| {
                Ok(TraceEvent {
                    t_ms: e.t_ms,
                    dst_ip: parse_ip(&self.trace, &e.ip)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Trace::new(self.trace.clone(), events, self.truth.clone())
    }

    pub fn from_trace(trace: &Trace) -> Self {
        TraceRecord {
            trace: trace.trace_id.clone(),
            events: trace
                .events
                .iter()
                .map(|e| EventRecord {
                    t_ms: e.t_ms,
                    ip: e.dst_ip.to_string(),
                })
                .collect(),
            truth: trace.truth.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// matches.jsonl

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub website: String,
    pub score_bits: f64,
}

/// One match result row. `candidates` holds the top-K entries only;
/// `n_candidates` preserves the full pool size for candidate-set statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub trace: String,
    pub mode: MatchMode,
    pub prediction: Option<String>,
    pub score_bits: f64,
    pub tie: bool,
    pub candidates: Vec<CandidateRecord>,
    pub n_candidates: usize,
    pub truth: Option<String>,
}

impl MatchRecord {
    pub fn from_result(result: &MatchResult, truth: Option<&str>, top_k: usize) -> Self {
        MatchRecord {
            trace: result.trace_id.clone(),
            mode: result.mode,
            prediction: result.prediction.clone(),
            score_bits: result.score_bits,
            tie: result.tie,
            candidates: result
                .candidates
                .iter()
                .take(top_k)
                .map(|c: &Candidate| CandidateRecord {
                    website: c.website_id.clone(),
                    score_bits: c.score_bits,
                })
                .collect(),
            n_candidates: result.candidates.len(),
            truth: truth.map(str::to_string),
        }
    }
}

// ---------------------------------------------------------------------------
// truth.jsonl

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub trace: String,
    pub website: String,
    pub batch: u32,
}

// ---------------------------------------------------------------------------
// CSV report rows

/// One `drift.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub website: String,
    pub t0: u32,
    pub t1: u32,
    pub degree: f64,
}

/// One `aging.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingRow {
    pub age_batches: i64,
    pub accuracy: f64,
    pub n: u64,
}

/// One `classes.csv` row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRow {
    pub domain: String,
    pub ip: String,
    pub class: String,
}

/// One `report.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: String,
    pub value: f64,
}

// ---------------------------------------------------------------------------
// CSV reports

fn open_csv_writer(writer: impl Write) -> csv::Writer<impl Write> {
    csv::WriterBuilder::new().from_writer(writer)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub kind: String,
    pub key: String,
    pub bits: f64,
}

pub fn write_entropy_csv(writer: impl Write, table: &EntropyTable) -> Result<()> {
    let mut csv = open_csv_writer(writer);
    for (domain, bits) in &table.domain_bits {
        csv.serialize(EntropyRow {
            kind: "domain".into(),
            key: domain.to_string(),
            bits: *bits,
        })
        .map_err(csv_error)?;
    }
    for (ip, bits) in &table.ip_bits {
        csv.serialize(EntropyRow {
            kind: "ip".into(),
            key: ip.to_string(),
            bits: *bits,
        })
        .map_err(csv_error)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_entropy_csv(path: &Path) -> Result<EntropyTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut domain_bits = BTreeMap::new();
    let mut ip_bits = BTreeMap::new();
    for row in reader.deserialize::<EntropyRow>() {
        let row = row.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        match row.kind.as_str() {
            "domain" => {
                domain_bits.insert(Domain::new(&row.key)?, row.bits);
            }
            "ip" => {
                ip_bits.insert(parse_ip("entropy table", &row.key)?, row.bits);
            }
            other => {
                return Err(Error::Csv {
                    path: path.to_path_buf(),
                    message: format!("unknown entropy row kind {other:?}"),
                })
            }
        }
    }
    Ok(EntropyTable::from_maps(domain_bits, ip_bits))
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidRecord {
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheIndexRow {
    pub website: String,
    pub ip: String,
    pub freshness: i64,
}

pub fn write_cache_index_csv(writer: impl Write, index: &CacheIndex) -> Result<()> {
    let mut csv = open_csv_writer(writer);
    for ((website, ip), freshness) in index.iter() {
        csv.serialize(CacheIndexRow {
            website: website.clone(),
            ip: ip.to_string(),
            freshness: freshness.as_seconds(),
        })
        .map_err(csv_error)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_cache_index_csv(path: &Path) -> Result<CacheIndex> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut entries = Vec::new();
    for row in reader.deserialize::<CacheIndexRow>() {
        let row = row.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let ip = parse_ip(&row.website, &row.ip)?;
        entries.push((row.website, ip, FreshnessClass::try_from(row.freshness)?));
    }
    Ok(CacheIndex::from_entries(entries))
}

pub fn write_csv_rows<T: Serialize>(
    writer: impl Write,
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let mut csv = open_csv_writer(writer);
    for row in rows {
        csv.serialize(row).map_err(csv_error)?;
    }
    csv.flush()?;
    Ok(())
}

/// Buffered writer creation for output files.
pub fn create_file_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}
