//! Comment and tweet ingestion, toxicity binarization, identity flags,
//! category assignment and deterministic splitting.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::seeded_rng;
use crate::textproc::tokenize;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("schema error: required column `{0}` not found in header")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("cannot split an empty dataset")]
    EmptySplit,
    #[error("invalid split fractions {0:?}: need non-negative values summing to 1")]
    InvalidFractions((f64, f64, f64)),
    #[error("invalid labeling rule: {0}")]
    InvalidRule(String),
    #[error("identity term list is empty")]
    NoTerms,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One row of the comment corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub id: String,
    pub text: String,
    pub toxicity: f64,
    /// `None` when the row carries no identity annotation at all.
    pub identity_fractions: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityFlag {
    Identity,
    NonIdentity,
    Unannotated,
}

/// The four toxicity x identity cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ToxicIdentity,
    ToxicNonIdentity,
    NonToxicIdentity,
    NonToxicNonIdentity,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::ToxicIdentity,
        Category::ToxicNonIdentity,
        Category::NonToxicIdentity,
        Category::NonToxicNonIdentity,
    ];

    pub fn from_parts(toxic: bool, identity: bool) -> Self {
        match (toxic, identity) {
            (true, true) => Category::ToxicIdentity,
            (true, false) => Category::ToxicNonIdentity,
            (false, true) => Category::NonToxicIdentity,
            (false, false) => Category::NonToxicNonIdentity,
        }
    }

    pub fn is_toxic(self) -> bool {
        matches!(self, Category::ToxicIdentity | Category::ToxicNonIdentity)
    }

    pub fn is_identity(self) -> bool {
        matches!(self, Category::ToxicIdentity | Category::NonToxicIdentity)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn slug(self) -> &'static str {
        match self {
            Category::ToxicIdentity => "toxic_identity",
            Category::ToxicNonIdentity => "toxic_non_identity",
            Category::NonToxicIdentity => "non_toxic_identity",
            Category::NonToxicNonIdentity => "non_toxic_non_identity",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_lowercase().replace(['-', ' '], "_");
        Category::ALL
            .into_iter()
            .find(|c| c.slug() == norm)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Real,
    Synthetic,
}

/// A tokenized comment with its binary label and identity information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub label: u8,
    pub identity: IdentityFlag,
    pub category: Option<Category>,
    pub origin: Origin,
}

/// Column names for the comment CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommentSchema {
    pub id_column: String,
    pub text_column: String,
    pub target_column: String,
    pub identity_columns: Vec<String>,
}

/// Identity attribute columns of the Civil Comments release.
pub const DEFAULT_IDENTITY_COLUMNS: [&str; 24] = [
    "male",
    "female",
    "transgender",
    "other_gender",
    "heterosexual",
    "homosexual_gay_or_lesbian",
    "bisexual",
    "other_sexual_orientation",
    "christian",
    "jewish",
    "muslim",
    "hindu",
    "buddhist",
    "atheist",
    "other_religion",
    "black",
    "white",
    "asian",
    "latino",
    "other_race_or_ethnicity",
    "physical_disability",
    "intellectual_or_learning_disability",
    "psychiatric_or_mental_illness",
    "other_disability",
];

impl Default for CommentSchema {
    fn default() -> Self {
        Self {
            id_column: "id".into(),
            text_column: "comment_text".into(),
            target_column: "target".into(),
            identity_columns: DEFAULT_IDENTITY_COLUMNS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

struct ColumnMap {
    id: Option<usize>,
    text: usize,
    target: usize,
    identity: Vec<(String, usize)>,
}

impl ColumnMap {
    fn resolve(headers: &csv::StringRecord, schema: &CommentSchema) -> Result<Self, CorpusError> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let text = find(&schema.text_column)
            .ok_or_else(|| CorpusError::MissingColumn(schema.text_column.clone()))?;
        let target = find(&schema.target_column)
            .ok_or_else(|| CorpusError::MissingColumn(schema.target_column.clone()))?;
        let identity = schema
            .identity_columns
            .iter()
            .filter_map(|c| find(c).map(|i| (c.clone(), i)))
            .collect();
        Ok(Self {
            id: find(&schema.id_column),
            text,
            target,
            identity,
        })
    }
}

fn parse_unit_interval(raw: &str, what: &str) -> Result<f64, String> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| format!("{what} value {raw:?} is not a number"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("{what} value {v} is outside [0, 1]"));
    }
    Ok(v)
}

fn parse_row(
    record: &csv::StringRecord,
    cols: &ColumnMap,
    data_row: usize,
) -> Result<CommentRecord, String> {
    let text = record.get(cols.text).unwrap_or_default().to_string();
    if text.trim().is_empty() {
        return Err("comment text is empty".into());
    }
    let toxicity = parse_unit_interval(record.get(cols.target).unwrap_or_default(), "target")?;
    let mut fractions = BTreeMap::new();
    for (name, idx) in &cols.identity {
        let raw = record.get(*idx).unwrap_or_default();
        if raw.trim().is_empty() {
            continue;
        }
        fractions.insert(name.clone(), parse_unit_interval(raw, name)?);
    }
    let id = cols
        .id
        .and_then(|i| record.get(i))
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| format!("row-{data_row}"));
    Ok(CommentRecord {
        id,
        text,
        toxicity,
        identity_fractions: if fractions.is_empty() { None } else { Some(fractions) },
    })
}

/// A row that failed to parse, with its 1-based line number in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

fn read_comments<R: Read>(
    reader: R,
    schema: &CommentSchema,
    strict: bool,
) -> Result<(Vec<CommentRecord>, Vec<RowError>), CorpusError> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = csv.headers()?.clone();
    let cols = ColumnMap::resolve(&headers, schema)?;
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let row = row?;
        let line = row.position().map_or(i as u64 + 2, |p| p.line());
        match parse_row(&row, &cols, i + 1) {
            Ok(r) => records.push(r),
            Err(message) if strict => return Err(CorpusError::Row { line, message }),
            Err(message) => rejected.push(RowError { line, message }),
        }
    }
    Ok((records, rejected))
}

/// Parses a comment CSV, failing on the first malformed row.
pub fn parse_comments<R: Read>(reader: R, schema: &CommentSchema) -> Result<Vec<CommentRecord>, CorpusError> {
    read_comments(reader, schema, true).map(|(records, _)| records)
}

/// Like [`parse_comments`] but collects malformed rows instead of failing.
pub fn parse_comments_lenient<R: Read>(
    reader: R,
    schema: &CommentSchema,
) -> Result<(Vec<CommentRecord>, Vec<RowError>), CorpusError> {
    read_comments(reader, schema, false)
}

/// Toxicity threshold (closed below) and identity epsilon (strictly exceeded).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelingRule {
    threshold: f64,
    identity_epsilon: f64,
}

impl LabelingRule {
    pub fn new(threshold: f64, identity_epsilon: f64) -> Result<Self, CorpusError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(CorpusError::InvalidRule(format!("threshold {threshold} not in (0, 1)")));
        }
        if !(identity_epsilon >= 0.0) {
            return Err(CorpusError::InvalidRule(format!(
                "identity epsilon {identity_epsilon} is negative"
            )));
        }
        Ok(Self {
            threshold,
            identity_epsilon,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn identity_epsilon(&self) -> f64 {
        self.identity_epsilon
    }
}

impl Default for LabelingRule {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            identity_epsilon: 0.0,
        }
    }
}

pub fn label_example(record: &CommentRecord, rule: &LabelingRule) -> LabeledExample {
    let toxic = record.toxicity >= rule.threshold;
    let identity = match &record.identity_fractions {
        None => IdentityFlag::Unannotated,
        Some(f) if f.values().any(|&v| v > rule.identity_epsilon) => IdentityFlag::Identity,
        Some(_) => IdentityFlag::NonIdentity,
    };
    let category = match identity {
        IdentityFlag::Unannotated => None,
        flag => Some(Category::from_parts(toxic, flag == IdentityFlag::Identity)),
    };
    LabeledExample {
        id: record.id.clone(),
        tokens: tokenize(&record.text),
        text: record.text.clone(),
        label: u8::from(toxic),
        identity,
        category,
        origin: Origin::Real,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit<T = LabeledExample> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
    pub fractions: (f64, f64, f64),
}

/// Seeded shuffle followed by a contiguous partition into (train, validation,
/// test). Validation and test get `floor(n * frac)`; train takes the rest.
pub fn split_dataset<T>(
    mut items: Vec<T>,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit<T>, CorpusError> {
    let (tr, va, te) = fractions;
    let valid = [tr, va, te].iter().all(|f| f.is_finite() && *f >= 0.0)
        && ((tr + va + te) - 1.0).abs() <= 1e-9;
    if !valid {
        return Err(CorpusError::InvalidFractions(fractions));
    }
    if items.is_empty() {
        return Err(CorpusError::EmptySplit);
    }
    let n = items.len();
    items.shuffle(&mut seeded_rng(seed));
    let n_val = (n as f64 * va).floor() as usize;
    let n_test = (n as f64 * te).floor() as usize;
    let n_train = n - n_val - n_test;
    let test = items.split_off(n_train + n_val);
    let validation = items.split_off(n_train);
    Ok(DatasetSplit {
        train: items,
        validation,
        test,
        seed,
        fractions,
    })
}

/// Keeps a seeded random `fraction` of the items (at least one when non-empty),
/// preserving their original order.
pub fn sample_fraction<T>(items: Vec<T>, fraction: f64, seed: u64) -> Vec<T> {
    if fraction >= 1.0 || items.is_empty() {
        return items;
    }
    let keep = ((items.len() as f64 * fraction.max(0.0)).round() as usize).clamp(1, items.len());
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut seeded_rng(seed ^ 0x5A4D_504C_4521));
    let mut chosen = vec![false; items.len()];
    for &i in &idx[..keep] {
        chosen[i] = true;
    }
    items
        .into_iter()
        .zip(chosen)
        .filter_map(|(item, c)| c.then_some(item))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    /// 1-based data row in the source file; doubles as the tweet id.
    pub row: usize,
    pub party: String,
    pub handle: String,
    pub text: String,
}

impl TweetRecord {
    pub fn id(&self) -> String {
        self.row.to_string()
    }
}

fn contains_term(tokens: &[String], term: &[String]) -> bool {
    !term.is_empty() && tokens.windows(term.len()).any(|w| w == term)
}

/// Reads a `Party,Handle,Tweet` CSV and keeps tweets mentioning at least one
/// identity term (token match, case-insensitive; multi-word terms match as
/// contiguous token runs).
pub fn load_identity_texts<R: Read>(reader: R, identity_terms: &[String]) -> Result<Vec<TweetRecord>, CorpusError> {
    let terms: Vec<Vec<String>> = identity_terms
        .iter()
        .map(|t| tokenize(t))
        .filter(|t| !t.is_empty())
        .collect();
    if terms.is_empty() {
        return Err(CorpusError::NoTerms);
    }
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
    };
    let (party, handle, tweet) = (find("Party")?, find("Handle")?, find("Tweet")?);
    let mut out = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(i as u64 + 2, |p| p.line());
            CorpusError::Row {
                line,
                message: e.to_string(),
            }
        })?;
        let text = row.get(tweet).unwrap_or_default();
        if text.trim().is_empty() {
            continue;
        }
        let tokens = tokenize(text);
        if terms.iter().any(|t| contains_term(&tokens, t)) {
            out.push(TweetRecord {
                row: i + 1,
                party: row.get(party).unwrap_or_default().to_string(),
                handle: row.get(handle).unwrap_or_default().to_string(),
                text: text.to_string(),
            });
        }
    }
    Ok(out)
}

/// Counts per category plus the unannotated remainder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub toxic_identity: usize,
    pub toxic_non_identity: usize,
    pub non_toxic_identity: usize,
    pub non_toxic_non_identity: usize,
    pub unannotated: usize,
}

impl CategoryCounts {
    pub fn of(examples: &[LabeledExample]) -> Self {
        let mut c = Self::default();
        for e in examples {
            match e.category {
                Some(Category::ToxicIdentity) => c.toxic_identity += 1,
                Some(Category::ToxicNonIdentity) => c.toxic_non_identity += 1,
                Some(Category::NonToxicIdentity) => c.non_toxic_identity += 1,
                Some(Category::NonToxicNonIdentity) => c.non_toxic_non_identity += 1,
                None => c.unannotated += 1,
            }
        }
        c
    }

    pub fn get(&self, category: Category) -> usize {
        match category {
            Category::ToxicIdentity => self.toxic_identity,
            Category::ToxicNonIdentity => self.toxic_non_identity,
            Category::NonToxicIdentity => self.non_toxic_identity,
            Category::NonToxicNonIdentity => self.non_toxic_non_identity,
        }
    }

    pub fn annotated(&self) -> usize {
        Category::ALL.iter().map(|&c| self.get(c)).sum()
    }
}
