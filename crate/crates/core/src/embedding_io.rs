//! Interchange formats: the binary `.nceb` embedding table, the score CSV and
//! the selection-manifest CSV.
//!
//! `.nceb` layout (all integers little-endian):
//!
//! ```text
//! "NCEB" | u32 version (=1) | u32 dimension | u64 record count
//! per record: u8 label (0 real, 1 fake) | u16 algorithm_id | u32 id_len
//!             | id_len bytes UTF-8 sample_id | dimension x f32
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NCEB";
pub const FORMAT_VERSION: u32 = 1;

pub const SCORE_HEADER: [&str; 3] = ["sample_id", "label", "score"];
pub const MANIFEST_HEADER: [&str; 5] = ["sample_id", "label", "cluster_id", "distance", "rule"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Real, Label::Fake];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Label> {
        match code {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Real => Label::Fake,
            Label::Fake => Label::Real,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Only the exact lowercase tokens are accepted.
impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            other => Err(Error::UnknownLabelToken(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub sample_id: String,
    pub label: Label,
    /// 0 for bonafide, otherwise the generating-algorithm tag.
    pub algorithm_id: u16,
    pub embedding: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn new(sample_id: impl Into<String>, label: Label, algorithm_id: u16, embedding: Vec<f32>) -> Self {
        EmbeddingRecord {
            sample_id: sample_id.into(),
            label,
            algorithm_id,
            embedding,
        }
    }
}

/// A validated table of labeled embeddings. Construction checks every
/// invariant, so a value of this type is always well formed.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    records: Vec<EmbeddingRecord>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize, records: Vec<EmbeddingRecord>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvariantViolation("dimension must be at least 1".into()));
        }
        if dimension > u32::MAX as usize {
            return Err(Error::InvariantViolation("dimension does not fit in u32".into()));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for record in &records {
            check_record(dimension, record)?;
            if !seen.insert(record.sample_id.as_str()) {
                return Err(Error::DuplicateSampleId(record.sample_id.clone()));
            }
        }
        Ok(EmbeddingTable { dimension, records })
    }

    pub fn empty(dimension: usize) -> Result<Self> {
        Self::new(dimension, Vec::new())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class(&self, label: Label) -> impl Iterator<Item = &EmbeddingRecord> {
        self.records.iter().filter(move |r| r.label == label)
    }

    pub fn count(&self, label: Label) -> usize {
        self.class(label).count()
    }

    /// Keeps the records matching `keep`, preserving order.
    pub fn filter<F>(&self, mut keep: F) -> EmbeddingTable
    where
        F: FnMut(&EmbeddingRecord) -> bool,
    {
        EmbeddingTable {
            dimension: self.dimension,
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Subtable of the records whose ids are in `ids`, in table order.
    pub fn select_ids<'a, I>(&self, ids: I) -> EmbeddingTable
    where
        I: IntoIterator<Item = &'a str>,
    {
        let wanted: HashSet<&str> = ids.into_iter().collect();
        self.filter(|r| wanted.contains(r.sample_id.as_str()))
    }
}

fn check_record(dimension: usize, record: &EmbeddingRecord) -> Result<()> {
    if record.embedding.len() != dimension {
        return Err(Error::DimensionMismatch {
            expected: dimension,
            found: record.embedding.len(),
        });
    }
    if record.label == Label::Real && record.algorithm_id != 0 {
        return Err(Error::InvariantViolation(format!(
            "real sample `{}` carries algorithm_id {}",
            record.sample_id, record.algorithm_id
        )));
    }
    if record.sample_id.len() > u32::MAX as usize {
        return Err(Error::InvariantViolation("sample_id longer than u32::MAX bytes".into()));
    }
    if let Some(pos) = record.embedding.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            context: format!("embedding of `{}` at component {pos}", record.sample_id),
        });
    }
    Ok(())
}

/// Serializes a table into the `.nceb` byte layout.
pub fn encode_table(table: &EmbeddingTable) -> Vec<u8> {
    let per_record: usize = table
        .records
        .iter()
        .map(|r| 7 + r.sample_id.len() + 4 * table.dimension)
        .sum();
    let mut out = Vec::with_capacity(20 + per_record);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(table.dimension as u32).to_le_bytes());
    out.extend_from_slice(&(table.records.len() as u64).to_le_bytes());
    for record in &table.records {
        out.push(record.label.code());
        out.extend_from_slice(&record.algorithm_id.to_le_bytes());
        out.extend_from_slice(&(record.sample_id.len() as u32).to_le_bytes());
        out.extend_from_slice(record.sample_id.as_bytes());
        for v in &record.embedding {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, context: &'static str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::TruncatedFile { context });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self, context: &'static str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        buf.copy_from_slice(self.take(N, context)?);
        Ok(buf)
    }
}

/// Parses `.nceb` bytes, verifying every header and record invariant.
///
/// A short float block in the final record, or whole floats left over after
/// it, is reported as `DimensionMismatch`; other shortfalls are truncation.
pub fn decode_table(bytes: &[u8]) -> Result<EmbeddingTable> {
    let mut reader = ByteReader { bytes, pos: 0 };
    if reader.take(4, "magic").map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u32::from_le_bytes(reader.array("version")?);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let dimension = u32::from_le_bytes(reader.array("dimension")?) as usize;
    if dimension == 0 {
        return Err(Error::InvariantViolation("header dimension is 0".into()));
    }
    let count = u64::from_le_bytes(reader.array("record count")?);

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for index in 0..count {
        let label_code = reader.array::<1>("record label")?[0];
        let label = Label::from_code(label_code).ok_or_else(|| {
            Error::InvariantViolation(format!("record {index}: label byte {label_code}"))
        })?;
        let algorithm_id = u16::from_le_bytes(reader.array("algorithm_id")?);
        let id_len = u32::from_le_bytes(reader.array("id length")?) as usize;
        let id_bytes = reader.take(id_len, "sample_id")?;
        let sample_id = std::str::from_utf8(id_bytes)
            .map_err(|_| Error::InvariantViolation(format!("record {index}: sample_id is not UTF-8")))?
            .to_string();

        let needed = dimension * 4;
        if reader.remaining() < needed {
            let rest = reader.remaining();
            if index + 1 == count && rest.is_multiple_of(4) {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: rest / 4,
                });
            }
            return Err(Error::TruncatedFile { context: "embedding" });
        }
        let embedding = reader
            .take(needed, "embedding")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();

        let record = EmbeddingRecord {
            sample_id,
            label,
            algorithm_id,
            embedding,
        };
        check_record(dimension, &record)?;
        if !seen.insert(record.sample_id.clone()) {
            return Err(Error::DuplicateSampleId(record.sample_id));
        }
        records.push(record);
    }

    let rest = reader.remaining();
    if rest > 0 {
        if count > 0 && rest.is_multiple_of(4) {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: dimension + rest / 4,
            });
        }
        return Err(Error::TrailingBytes { count: rest });
    }
    Ok(EmbeddingTable { dimension, records })
}

pub fn load_table(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let bytes = std::fs::read(path)?;
    decode_table(&bytes)
}

pub fn store_table(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    for record in &table.records {
        check_record(table.dimension, record).map_err(|e| Error::InvariantViolation(e.to_string()))?;
    }
    std::fs::write(path, encode_table(table))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub sample_id: String,
    pub label: Label,
    /// Higher means more likely fake.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn new(rows: Vec<ScoreRow>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rows.len());
        for row in &rows {
            if !row.score.is_finite() {
                return Err(Error::NonFiniteValue {
                    context: format!("score of `{}`", row.sample_id),
                });
            }
            if !seen.insert(row.sample_id.as_str()) {
                return Err(Error::DuplicateSampleId(row.sample_id.clone()));
            }
        }
        Ok(ScoreTable { rows })
    }

    /// Convenience constructor; ids are generated as `s0`, `s1`, ...
    pub fn from_pairs(pairs: &[(Label, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .enumerate()
                .map(|(i, &(label, score))| ScoreRow {
                    sample_id: format!("s{i}"),
                    label,
                    score,
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.rows.iter().filter(|r| r.label == label).count()
    }

    pub fn score_map(&self) -> HashMap<&str, &ScoreRow> {
        self.rows.iter().map(|r| (r.sample_id.as_str(), r)).collect()
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(csv_error)
}

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::IoFailure(io),
        other => Error::MalformedRow {
            line,
            reason: format!("{other:?}"),
        },
    }
}

fn check_header(reader: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let mut header = csv::StringRecord::new();
    if !reader.read_record(&mut header).map_err(csv_error)? {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "missing header".into(),
        });
    }
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("header must be `{}`", expected.join(",")),
        });
    }
    Ok(())
}

fn parse_f64(field: &str, line: u64, column: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::MalformedRow {
        line,
        reason: format!("unparsable {column} `{field}`"),
    })
}

/// Reads a score CSV with the exact header `sample_id,label,score`.
pub fn read_score_table(path: impl AsRef<Path>) -> Result<ScoreTable> {
    let mut reader = csv_reader(path.as_ref())?;
    check_header(&mut reader, &SCORE_HEADER)?;
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(csv_error)? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != SCORE_HEADER.len() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 3 columns, found {}", record.len()),
            });
        }
        let label: Label = record[1].parse()?;
        let score = parse_f64(&record[2], line, "score")?;
        rows.push(ScoreRow {
            sample_id: record[0].to_string(),
            label,
            score,
        });
    }
    ScoreTable::new(rows)
}

pub fn write_score_table(scores: &ScoreTable, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    writer.write_record(SCORE_HEADER).map_err(csv_error)?;
    for row in &scores.rows {
        writer
            .write_record([row.sample_id.as_str(), row.label.token(), &row.score.to_string()])
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

/// How a manifest row came to be selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectionRule {
    Threshold,
    TopFraction,
    TopCount,
    Random,
    ClusterThreshold,
    ClusterTopFraction,
    ClusterTopCount,
}

impl SelectionRule {
    pub fn token(self) -> &'static str {
        match self {
            SelectionRule::Threshold => "threshold",
            SelectionRule::TopFraction => "top-fraction",
            SelectionRule::TopCount => "top-count",
            SelectionRule::Random => "random",
            SelectionRule::ClusterThreshold => "cluster-threshold",
            SelectionRule::ClusterTopFraction => "cluster-top-fraction",
            SelectionRule::ClusterTopCount => "cluster-top-count",
        }
    }
}

impl FromStr for SelectionRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "threshold" => SelectionRule::Threshold,
            "top-fraction" => SelectionRule::TopFraction,
            "top-count" => SelectionRule::TopCount,
            "random" => SelectionRule::Random,
            "cluster-threshold" => SelectionRule::ClusterThreshold,
            "cluster-top-fraction" => SelectionRule::ClusterTopFraction,
            "cluster-top-count" => SelectionRule::ClusterTopCount,
            other => return Err(format!("unknown rule token `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub sample_id: String,
    pub label: Label,
    /// Cluster index for cluster-wise selection, -1 otherwise.
    pub cluster_id: i64,
    pub distance: f64,
    pub rule: SelectionRule,
}

/// Selected samples, always sorted by (label, distance, sample_id).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionManifest {
    rows: Vec<ManifestRow>,
}

fn row_order(a: &ManifestRow, b: &ManifestRow) -> std::cmp::Ordering {
    a.label
        .cmp(&b.label)
        .then(a.distance.total_cmp(&b.distance))
        .then_with(|| a.sample_id.cmp(&b.sample_id))
}

impl SelectionManifest {
    pub fn new(mut rows: Vec<ManifestRow>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rows.len());
        for row in &rows {
            if !row.distance.is_finite() {
                return Err(Error::NonFiniteValue {
                    context: format!("distance of `{}`", row.sample_id),
                });
            }
            if row.distance < 0.0 {
                return Err(Error::InvariantViolation(format!(
                    "negative distance for `{}`",
                    row.sample_id
                )));
            }
            if !seen.insert(row.sample_id.as_str()) {
                return Err(Error::DuplicateSampleId(row.sample_id.clone()));
            }
        }
        rows.sort_by(row_order);
        Ok(SelectionManifest { rows })
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<ManifestRow> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.rows.iter().filter(|r| r.label == label).count()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.sample_id.as_str())
    }
}

pub fn write_manifest(manifest: &SelectionManifest, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    writer.write_record(MANIFEST_HEADER).map_err(csv_error)?;
    for row in &manifest.rows {
        writer
            .write_record([
                row.sample_id.as_str(),
                row.label.token(),
                &row.cluster_id.to_string(),
                &row.distance.to_string(),
                row.rule.token(),
            ])
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<SelectionManifest> {
    let mut reader = csv_reader(path.as_ref())?;
    check_header(&mut reader, &MANIFEST_HEADER)?;
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(csv_error)? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != MANIFEST_HEADER.len() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 5 columns, found {}", record.len()),
            });
        }
        let label: Label = record[1].parse()?;
        let cluster_id = record[2].parse::<i64>().map_err(|_| Error::MalformedRow {
            line,
            reason: format!("unparsable cluster_id `{}`", &record[2]),
        })?;
        let distance = parse_f64(&record[3], line, "distance")?;
        let rule = record[4]
            .parse::<SelectionRule>()
            .map_err(|reason| Error::MalformedRow { line, reason })?;
        rows.push(ManifestRow {
            sample_id: record[0].to_string(),
            label,
            cluster_id,
            distance,
            rule,
        });
    }
    SelectionManifest::new(rows)
}
