//! Client feature vectors and the malicious reference corpus.
//!
//! Features are opaque reals. The corpus holds feature vectors of known
//! malicious clients; its per-feature min/max bounds define the unit cube
//! that queries are normalized into before distance scoring.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::ip;
use crate::reputation::ReputationScore;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("corpus has no data rows")]
    EmptyCorpus,
    #[error("line {line}: expected {expected} columns, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse {value:?} as a number")]
    NonNumeric { line: usize, value: String },
    #[error("feature values must be finite")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("line {line}: {value:?} is not an IP address")]
    InvalidIp { line: usize, value: String },
    #[error("line {line}: score {score} is outside [0, 10]")]
    ScoreOutOfRange { line: usize, score: f64 },
    #[error("invalid bounds for feature {feature}: min {min} > max {max}")]
    InvalidBounds { feature: usize, min: f64, max: f64 },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for FeatureError {
    fn from(err: csv::Error) -> Self {
        FeatureError::Csv(err.to_string())
    }
}

/// An ordered list of finite feature readings.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, FeatureError> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(FeatureError::NonFinite)
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Feature vectors of known malicious clients, with per-feature bounds.
#[derive(Debug, Clone)]
pub struct MaliciousCorpus {
    points: Vec<FeatureVector>,
    bounds: Vec<(f64, f64)>,
    // normalized copies of `points`, cached for scoring
    unit_points: Vec<Vec<f64>>,
}

impl MaliciousCorpus {
    /// Build a corpus whose bounds are the componentwise min/max of `points`.
    pub fn new(points: Vec<FeatureVector>) -> Result<Self, FeatureError> {
        let first = points.first().ok_or(FeatureError::EmptyCorpus)?;
        let k = first.dim();
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); k];
        for p in &points {
            if p.dim() != k {
                return Err(FeatureError::DimensionMismatch {
                    expected: k,
                    found: p.dim(),
                });
            }
            for (b, &v) in bounds.iter_mut().zip(p.values()) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        Ok(Self::assemble(points, bounds))
    }

    /// Build a corpus with explicit bounds, e.g. known physical feature ranges.
    pub fn with_bounds(
        points: Vec<FeatureVector>,
        bounds: Vec<(f64, f64)>,
    ) -> Result<Self, FeatureError> {
        if points.is_empty() {
            return Err(FeatureError::EmptyCorpus);
        }
        for (feature, &(min, max)) in bounds.iter().enumerate() {
            if !(min.is_finite() && max.is_finite()) {
                return Err(FeatureError::NonFinite);
            }
            if min > max {
                return Err(FeatureError::InvalidBounds { feature, min, max });
            }
        }
        if let Some(p) = points.iter().find(|p| p.dim() != bounds.len()) {
            return Err(FeatureError::DimensionMismatch {
                expected: bounds.len(),
                found: p.dim(),
            });
        }
        Ok(Self::assemble(points, bounds))
    }

    fn assemble(points: Vec<FeatureVector>, bounds: Vec<(f64, f64)>) -> Self {
        let unit_points = points
            .iter()
            .map(|p| normalize_unchecked(p.values(), &bounds))
            .collect();
        Self {
            points,
            bounds,
            unit_points,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn points(&self) -> &[FeatureVector] {
        &self.points
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub(crate) fn unit_points(&self) -> &[Vec<f64>] {
        &self.unit_points
    }
}

fn normalize_unchecked(values: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    values
        .iter()
        .zip(bounds)
        .map(|(&v, &(min, max))| {
            if max > min {
                ((v - min) / (max - min)).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Min-max normalize `v` into the corpus unit cube.
///
/// Out-of-range readings are clamped into `[0, 1]`; a constant feature
/// (`min == max`) always maps to 0.
pub fn normalize(v: &FeatureVector, corpus: &MaliciousCorpus) -> Result<FeatureVector, FeatureError> {
    if v.dim() != corpus.dim() {
        return Err(FeatureError::DimensionMismatch {
            expected: corpus.dim(),
            found: v.dim(),
        });
    }
    Ok(FeatureVector(normalize_unchecked(v.values(), corpus.bounds())))
}

fn reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes)
}

fn parse_number(cell: &str, line: usize) -> Result<f64, FeatureError> {
    let value: f64 = cell.parse().map_err(|_| FeatureError::NonNumeric {
        line,
        value: cell.to_string(),
    })?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(FeatureError::NonFinite)
    }
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn is_blank(record: &csv::StringRecord) -> bool {
    record.iter().all(|c| c.is_empty())
}

/// Parse the headerless corpus CSV: one malicious client's features per row.
pub fn parse_corpus(bytes: &[u8]) -> Result<MaliciousCorpus, FeatureError> {
    let mut points = Vec::new();
    let mut width = None;
    for record in reader(bytes).records() {
        let record = record?;
        if is_blank(&record) {
            continue;
        }
        let line = line_of(&record);
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(FeatureError::RaggedRow {
                line,
                expected,
                found: record.len(),
            });
        }
        let values = record
            .iter()
            .map(|cell| parse_number(cell, line))
            .collect::<Result<Vec<_>, _>>()?;
        points.push(FeatureVector(values));
    }
    MaliciousCorpus::new(points)
}

/// Inverse of [`parse_corpus`]. Uses shortest round-trip decimal text.
pub fn serialize_corpus(corpus: &MaliciousCorpus) -> String {
    let mut out = String::new();
    for p in corpus.points() {
        let row: Vec<String> = p.values().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Static IP → feature vector table, standing in for live feature extraction.
#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    entries: HashMap<String, FeatureVector>,
    dim: Option<usize>,
}

impl FeatureTable {
    pub fn insert(&mut self, ip: &str, v: FeatureVector) -> Result<(), FeatureError> {
        let canonical = ip::canonicalize(ip).ok_or_else(|| FeatureError::InvalidIp {
            line: 0,
            value: ip.to_string(),
        })?;
        match self.dim {
            Some(k) if k != v.dim() => {
                return Err(FeatureError::DimensionMismatch {
                    expected: k,
                    found: v.dim(),
                })
            }
            _ => self.dim = Some(v.dim()),
        }
        self.entries.insert(canonical, v);
        Ok(())
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, ip: &str) -> Option<&FeatureVector> {
        self.entries.get(ip)
    }
}

/// Parse a feature table CSV with rows `ip,f1,...,fk`.
pub fn parse_feature_table(bytes: &[u8]) -> Result<FeatureTable, FeatureError> {
    let mut table = FeatureTable::default();
    let mut width = None;
    for record in reader(bytes).records() {
        let record = record?;
        if is_blank(&record) {
            continue;
        }
        let line = line_of(&record);
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected || expected < 2 {
            return Err(FeatureError::RaggedRow {
                line,
                expected: expected.max(2),
                found: record.len(),
            });
        }
        let ip = ip::canonicalize(&record[0]).ok_or_else(|| FeatureError::InvalidIp {
            line,
            value: record[0].to_string(),
        })?;
        let values = record
            .iter()
            .skip(1)
            .map(|cell| parse_number(cell, line))
            .collect::<Result<Vec<_>, _>>()?;
        table.insert(&ip, FeatureVector(values))?;
    }
    Ok(table)
}

/// Look up a client's features; `None` for unknown clients.
pub fn lookup_features<'a>(ip: &str, table: &'a FeatureTable) -> Option<&'a FeatureVector> {
    table.get(ip)
}

/// IP → reputation score fixture that bypasses the distance scorer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    entries: HashMap<String, ReputationScore>,
}

impl ScoreTable {
    pub fn insert(&mut self, ip: &str, score: ReputationScore) -> Option<ReputationScore> {
        let key = ip::canonicalize(ip).unwrap_or_else(|| ip.to_string());
        self.entries.insert(key, score)
    }

    pub fn get(&self, ip: &str) -> Option<ReputationScore> {
        self.entries.get(ip).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parse `ip,score` rows. Duplicate IPs: the last row wins.
pub fn parse_score_table(bytes: &[u8]) -> Result<ScoreTable, FeatureError> {
    let mut table = ScoreTable::default();
    for record in reader(bytes).records() {
        let record = record?;
        if is_blank(&record) {
            continue;
        }
        let line = line_of(&record);
        if record.len() != 2 {
            return Err(FeatureError::RaggedRow {
                line,
                expected: 2,
                found: record.len(),
            });
        }
        let ip = ip::canonicalize(&record[0]).ok_or_else(|| FeatureError::InvalidIp {
            line,
            value: record[0].to_string(),
        })?;
        let score = parse_number(&record[1], line)?;
        let score =
            ReputationScore::new(score).ok_or(FeatureError::ScoreOutOfRange { line, score })?;
        table.insert(&ip, score);
    }
    Ok(table)
}
