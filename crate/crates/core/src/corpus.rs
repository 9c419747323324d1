//! Review data model, ingestion from CSV/JSONL, text normalization and
//! corpus partitioning.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of rejected records above which ingestion aborts.
pub const MAX_REJECT_FRACTION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown corpus format {0:?} (expected csv or jsonl)")]
    UnknownFormat(String),
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("missing column {column:?} in {path}")]
    MissingColumn { path: PathBuf, column: &'static str },
    #[error("schema mismatch: {rejected} of {total} records rejected in {path}")]
    SchemaMismatch {
        path: PathBuf,
        rejected: usize,
        total: usize,
    },
    #[error("invalid rating bounds {min}..={max}")]
    InvalidBounds { min: u8, max: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Store {
    GooglePlay,
    AppleAppStore,
    Other,
}

impl Store {
    pub fn as_str(&self) -> &'static str {
        match self {
            Store::GooglePlay => "google_play",
            Store::AppleAppStore => "apple_app_store",
            Store::Other => "other",
        }
    }

    /// Lenient parse; unrecognised store names map to `Other`.
    pub fn parse_lenient(s: &str) -> Store {
        let key: String = s
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { '_' })
            .collect();
        match key.as_str() {
            "google_play" | "googleplay" | "google" | "play" | "play_store" | "android" => {
                Store::GooglePlay
            }
            "apple_app_store" | "apple" | "app_store" | "appstore" | "ios" | "itunes" => {
                Store::AppleAppStore
            }
            _ => Store::Other,
        }
    }
}

impl fmt::Display for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binary gold annotation: 1 = privacy-related, 0 = not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GoldLabel {
    NonPrivacy = 0,
    Privacy = 1,
}

impl GoldLabel {
    pub fn is_privacy(self) -> bool {
        self == GoldLabel::Privacy
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    fn parse(s: &str) -> Result<Option<GoldLabel>, String> {
        match s.trim() {
            "" => Ok(None),
            "1" => Ok(Some(GoldLabel::Privacy)),
            "0" => Ok(Some(GoldLabel::NonPrivacy)),
            other => Err(format!("invalid label {other:?} (expected 1 or 0)")),
        }
    }
}

impl Serialize for GoldLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for GoldLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match u8::deserialize(d)? {
            1 => Ok(GoldLabel::Privacy),
            0 => Ok(GoldLabel::NonPrivacy),
            n => Err(serde::de::Error::custom(format!("invalid gold label {n}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub app_name: String,
    pub store: Store,
    pub rating: u8,
    pub text_raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_norm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<GoldLabel>,
}

impl Review {
    /// Normalized text, computed on the fly when not already attached.
    pub fn normalized(&self) -> std::borrow::Cow<'_, str> {
        match &self.text_norm {
            Some(t) => std::borrow::Cow::Borrowed(t.as_str()),
            None => std::borrow::Cow::Owned(normalize_text(&self.text_raw)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: PathBuf,
    pub ingested_at: DateTime<Utc>,
    pub records_seen: usize,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewCorpus {
    pub reviews: Vec<Review>,
    pub provenance: Provenance,
}

impl ReviewCorpus {
    /// Build an in-memory corpus; provenance counts are derived from `reviews`.
    pub fn from_reviews(source: impl Into<PathBuf>, reviews: Vec<Review>) -> Self {
        let n = reviews.len();
        ReviewCorpus {
            reviews,
            provenance: Provenance {
                source: source.into(),
                ingested_at: Utc::now(),
                records_seen: n,
                accepted: n,
                rejected: 0,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Review> {
        self.reviews.iter()
    }

    /// Attach `text_norm` to every review.
    pub fn normalize_all(&mut self) {
        for r in &mut self.reviews {
            r.text_norm = Some(normalize_text(&r.text_raw));
        }
    }

    fn derived(&self, reviews: Vec<Review>) -> ReviewCorpus {
        let n = reviews.len();
        ReviewCorpus {
            reviews,
            provenance: Provenance {
                accepted: n,
                records_seen: n,
                rejected: 0,
                ..self.provenance.clone()
            },
        }
    }

    /// Writes the corpus in the JSONL ingestion schema.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let io = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        for r in &self.reviews {
            let rec = RecordOut::from(r);
            serde_json::to_writer(&mut w, &rec).map_err(|e| io(e.into()))?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl InputFormat {
    /// Guess from a file extension.
    pub fn from_path(path: &Path) -> Option<InputFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(InputFormat::Csv),
            "jsonl" | "ndjson" => Some(InputFormat::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for InputFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(InputFormat::Csv),
            "jsonl" | "ndjson" => Ok(InputFormat::Jsonl),
            _ => Err(CorpusError::UnknownFormat(s.to_string())),
        }
    }
}

/// One record that failed validation during ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line_no: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: ReviewCorpus,
    pub rejects: Vec<Reject>,
}

impl Ingested {
    /// Rejects file: one `{line_no, reason}` object per line.
    pub fn write_rejects(&self, path: &Path) -> Result<(), CorpusError> {
        write_rejects(&self.rejects, path)
    }
}

pub fn write_rejects(rejects: &[Reject], path: &Path) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in rejects {
        serde_json::to_writer(&mut w, r).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Raw string fields of one input record before validation.
#[derive(Debug, Default)]
struct RawRecord {
    id: Option<String>,
    app: Option<String>,
    store: Option<String>,
    rating: Option<String>,
    text: Option<String>,
    label: Option<String>,
    date: Option<String>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    app: &'a str,
    store: &'a str,
    rating: u8,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    date: Option<String>,
}

impl<'a> From<&'a Review> for RecordOut<'a> {
    fn from(r: &'a Review) -> Self {
        RecordOut {
            id: &r.id,
            app: &r.app_name,
            store: r.store.as_str(),
            rating: r.rating,
            text: &r.text_raw,
            label: r.gold_label.map(GoldLabel::as_u8),
            date: r.submitted_at.map(|d| d.to_string()),
        }
    }
}

fn validate(raw: RawRecord) -> Result<Review, String> {
    fn required(v: Option<String>, name: &str) -> Result<String, String> {
        match v {
            Some(s) if !s.trim().is_empty() => Ok(s),
            _ => Err(format!("missing required field {name:?}")),
        }
    }
    let id = required(raw.id, "id")?.trim().to_string();
    let rating_s = required(raw.rating, "rating")?;
    let text = required(raw.text, "text")?;
    let rating: u8 = rating_s
        .trim()
        .parse()
        .map_err(|_| format!("rating {rating_s:?} is not an integer"))?;
    if !(1..=5).contains(&rating) {
        return Err(format!("rating {rating} outside 1..=5"));
    }
    let gold_label = GoldLabel::parse(raw.label.as_deref().unwrap_or(""))?;
    // Dates are informational only; anything that is not ISO-8601 is dropped.
    let submitted_at = raw.date.as_deref().and_then(parse_date);
    Ok(Review {
        id,
        app_name: raw.app.unwrap_or_default().trim().to_string(),
        store: Store::parse_lenient(raw.store.as_deref().unwrap_or("")),
        rating,
        text_raw: text,
        text_norm: None,
        submitted_at,
        gold_label,
    })
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.date_naive()))
        .or_else(|| {
            chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
                .ok()
                .map(|d| d.date())
        })
}

fn json_field(obj: &serde_json::Map<String, serde_json::Value>, key: &str) -> Option<String> {
    match obj.get(key)? {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

/// Line number and parsed record (or parse error) per input row.
type RawRows = Vec<(u64, Result<RawRecord, String>)>;

fn read_csv(path: &Path) -> Result<RawRows, CorpusError> {
    let csv_err = |source| CorpusError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(source) => CorpusError::Io {
                    path: path.to_path_buf(),
                    source,
                },
                _ => unreachable!(),
            },
            _ => csv_err(e),
        })?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let idx = |name: &'static str| {
        col(name).ok_or(CorpusError::MissingColumn {
            path: path.to_path_buf(),
            column: name,
        })
    };
    let (c_id, c_app, c_store, c_rating, c_text) =
        (idx("id")?, idx("app")?, idx("store")?, idx("rating")?, idx("text")?);
    let (c_label, c_date) = (col("label"), col("date"));

    let mut out = Vec::new();
    for rec in rdr.records() {
        match rec {
            Ok(rec) => {
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                let get = |i: Option<usize>| i.and_then(|i| rec.get(i)).map(str::to_string);
                out.push((
                    line,
                    Ok(RawRecord {
                        id: get(Some(c_id)),
                        app: get(Some(c_app)),
                        store: get(Some(c_store)),
                        rating: get(Some(c_rating)),
                        text: get(Some(c_text)),
                        label: get(c_label),
                        date: get(c_date),
                    }),
                ));
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.push((line, Err(e.to_string())));
            }
        }
    }
    Ok(out)
}

fn read_jsonl(path: &Path) -> Result<RawRows, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(serde_json::Value::Object(obj)) => Ok(RawRecord {
                id: json_field(&obj, "id"),
                app: json_field(&obj, "app"),
                store: json_field(&obj, "store"),
                rating: json_field(&obj, "rating"),
                text: json_field(&obj, "text"),
                label: json_field(&obj, "label"),
                date: json_field(&obj, "date"),
            }),
            Ok(_) => Err("record is not a JSON object".to_string()),
            Err(e) => Err(format!("invalid JSON: {e}")),
        };
        out.push((line_no, parsed));
    }
    Ok(out)
}

/// Reads a review file. Invalid records are reported in `rejects`; more than
/// half the records being rejected is treated as a schema mismatch.
pub fn ingest_reviews(source: &Path, format: InputFormat) -> Result<Ingested, CorpusError> {
    let records = match format {
        InputFormat::Csv => read_csv(source)?,
        InputFormat::Jsonl => read_jsonl(source)?,
    };
    let total = records.len();
    let mut seen = HashSet::new();
    let mut reviews = Vec::with_capacity(total);
    let mut rejects = Vec::new();
    for (line_no, raw) in records {
        match raw.and_then(validate) {
            Ok(review) => {
                if seen.insert(review.id.clone()) {
                    reviews.push(review);
                } else {
                    rejects.push(Reject {
                        line_no,
                        reason: format!("duplicate id {:?}", review.id),
                    });
                }
            }
            Err(reason) => rejects.push(Reject { line_no, reason }),
        }
    }
    if total > 0 && rejects.len() as f64 / total as f64 > MAX_REJECT_FRACTION {
        return Err(CorpusError::SchemaMismatch {
            path: source.to_path_buf(),
            rejected: rejects.len(),
            total,
        });
    }
    for r in &rejects {
        log::warn!("{}:{}: {}", source.display(), r.line_no, r.reason);
    }
    let corpus = ReviewCorpus {
        provenance: Provenance {
            source: source.to_path_buf(),
            ingested_at: Utc::now(),
            records_seen: total,
            accepted: reviews.len(),
            rejected: rejects.len(),
        },
        reviews,
    };
    Ok(Ingested { corpus, rejects })
}

/// Lowercases, replaces every non-alphanumeric character with a space,
/// collapses space runs and trims.
pub fn normalize_text(text_raw: &str) -> String {
    let mut out = String::with_capacity(text_raw.len());
    let mut pending_space = false;
    for c in text_raw.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

pub fn filter_by_rating(corpus: &ReviewCorpus, min: u8, max: u8) -> Result<ReviewCorpus, CorpusError> {
    if !(1 <= min && min <= max && max <= 5) {
        return Err(CorpusError::InvalidBounds { min, max });
    }
    let kept = corpus
        .reviews
        .iter()
        .filter(|r| (min..=max).contains(&r.rating))
        .cloned()
        .collect();
    Ok(corpus.derived(kept))
}

/// Splits into (gold-labeled, unlabeled), preserving order within each side.
pub fn partition_gold(corpus: &ReviewCorpus) -> (ReviewCorpus, ReviewCorpus) {
    let (labeled, unlabeled): (Vec<_>, Vec<_>) = corpus
        .reviews
        .iter()
        .cloned()
        .partition(|r| r.gold_label.is_some());
    (corpus.derived(labeled), corpus.derived(unlabeled))
}
