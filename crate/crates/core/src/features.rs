//! TF-IDF vectorization, pretrained embedding tables and the feature
//! containers handed to models.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::DenseMatrix;

pub const TFIDF_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot fit TF-IDF on an empty corpus")]
    EmptyCorpus,
    #[error("embedding line {line}: {message}")]
    EmbeddingLine { line: usize, message: String },
    #[error("unsupported TF-IDF artifact version {0}")]
    Version(u32),
    #[error("malformed TF-IDF artifact: {0}")]
    Artifact(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |p| self.entries[p].1)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// Fitted vocabulary with smoothed IDF weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfModel {
    vocabulary: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<f64>,
    doc_count: usize,
}

#[derive(Serialize, Deserialize)]
struct TfIdfArtifact {
    format_version: u32,
    doc_count: usize,
    vocabulary: Vec<String>,
    idf: Vec<f64>,
}

/// Vocabulary is every token with document frequency >= `min_df`, sorted
/// lexicographically; `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
pub fn fit_tfidf<D: AsRef<[String]>>(docs: &[D], min_df: usize) -> Result<TfIdfModel, FeatureError> {
    if docs.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let mut seen: Vec<&str> = doc.as_ref().iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = docs.len() as f64;
    let (vocabulary, idf): (Vec<String>, Vec<f64>) = df
        .into_iter()
        .filter(|&(_, d)| d >= min_df.max(1))
        .map(|(t, d)| (t.to_string(), ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
        .unzip();
    Ok(TfIdfModel::from_parts(vocabulary, idf, docs.len()))
}

impl TfIdfModel {
    fn from_parts(vocabulary: Vec<String>, idf: Vec<f64>, doc_count: usize) -> Self {
        let index = vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            vocabulary,
            index,
            idf,
            doc_count,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.index_of(token).map(|i| self.idf[i])
    }

    pub fn idf_weights(&self) -> &[f64] {
        &self.idf
    }

    /// Raw in-vocabulary term counts; unknown tokens are dropped.
    pub fn counts(&self, tokens: &[String]) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokens {
            if let Some(&i) = self.index.get(t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        SparseVector {
            dim: self.vocab_size(),
            entries: counts.into_iter().collect(),
        }
    }

    /// Count times IDF, L2-normalised. Documents with no known token map to zero.
    pub fn transform(&self, tokens: &[String]) -> SparseVector {
        let mut v = self.counts(tokens);
        for (i, x) in v.entries.iter_mut() {
            *x *= self.idf[*i];
        }
        let norm = v.norm();
        if norm > 0.0 {
            v.entries.iter_mut().for_each(|(_, x)| *x /= norm);
        }
        v
    }

    pub fn to_json(&self) -> Result<String, FeatureError> {
        Ok(serde_json::to_string(&TfIdfArtifact {
            format_version: TFIDF_FORMAT_VERSION,
            doc_count: self.doc_count,
            vocabulary: self.vocabulary.clone(),
            idf: self.idf.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self, FeatureError> {
        let a: TfIdfArtifact = serde_json::from_str(text)?;
        if a.format_version != TFIDF_FORMAT_VERSION {
            return Err(FeatureError::Version(a.format_version));
        }
        if a.vocabulary.len() != a.idf.len() {
            return Err(FeatureError::Artifact("vocabulary and idf lengths differ".into()));
        }
        if a.vocabulary.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FeatureError::Artifact("vocabulary is not strictly sorted".into()));
        }
        Ok(Self::from_parts(a.vocabulary, a.idf, a.doc_count))
    }
}

/// What an out-of-vocabulary token contributes.
#[derive(Debug, Clone, PartialEq)]
pub enum OovPolicy {
    Zero,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    oov: OovPolicy,
    duplicates: usize,
}

/// Reads `word v1 ... v_dim` lines. Duplicate words keep their first vector.
pub fn load_embeddings<R: BufRead>(reader: R, expected_dim: usize) -> Result<EmbeddingTable, FeatureError> {
    let mut vectors = HashMap::new();
    let mut duplicates = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let mut parts = line.split(' ').filter(|p| !p.is_empty());
        let Some(word) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        if values.len() != expected_dim {
            return Err(FeatureError::EmbeddingLine {
                line: lineno,
                message: format!("expected {expected_dim} components, found {}", values.len()),
            });
        }
        let mut v = Vec::with_capacity(expected_dim);
        for raw in values {
            let x: f64 = raw.trim().parse().map_err(|_| FeatureError::EmbeddingLine {
                line: lineno,
                message: format!("component {raw:?} is not a number"),
            })?;
            v.push(x);
        }
        if vectors.contains_key(word) {
            duplicates += 1;
        } else {
            vectors.insert(word.to_string(), v);
        }
    }
    Ok(EmbeddingTable {
        dim: expected_dim,
        vectors,
        oov: OovPolicy::Zero,
        duplicates,
    })
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
            oov: OovPolicy::Zero,
            duplicates: 0,
        }
    }

    /// Inserts a vector, ignoring it if the word is already present.
    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<(), FeatureError> {
        if vector.len() != self.dim {
            return Err(FeatureError::EmbeddingLine {
                line: 0,
                message: format!("vector for {word:?} has {} components, table dim is {}", vector.len(), self.dim),
            });
        }
        if self.vectors.contains_key(word) {
            self.duplicates += 1;
        } else {
            self.vectors.insert(word.to_string(), vector);
        }
        Ok(())
    }

    pub fn with_oov(mut self, oov: OovPolicy) -> Self {
        self.oov = oov;
        self
    }

    /// Uses the stored vector of `token` (e.g. `<unk>`) for unknown words.
    pub fn with_unknown_token(self, token: &str) -> Self {
        match self.vectors.get(token).cloned() {
            Some(v) => self.with_oov(OovPolicy::Fixed(v)),
            None => self,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn duplicate_count(&self) -> usize {
        self.duplicates
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    fn lookup(&self, token: &str) -> Option<&[f64]> {
        self.get(token).or(match &self.oov {
            OovPolicy::Zero => None,
            OovPolicy::Fixed(v) => Some(v.as_slice()),
        })
    }

    /// Componentwise sum of the token vectors.
    pub fn embed_sum(&self, tokens: &[String]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for t in tokens {
            if let Some(v) = self.lookup(t) {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += x;
                }
            }
        }
        out
    }

    /// First `max_len` token vectors followed by zero padding.
    pub fn embed_sequence(&self, tokens: &[String], max_len: usize) -> SequenceFeature {
        let true_length = tokens.len().min(max_len);
        let mut matrix = DenseMatrix::zeros(max_len, self.dim);
        for (r, t) in tokens.iter().take(true_length).enumerate() {
            if let Some(v) = self.lookup(t) {
                matrix.row_mut(r).copy_from_slice(v);
            }
        }
        SequenceFeature { matrix, true_length }
    }

    pub fn embed_comment(&self, tokens: &[String], mode: EmbedMode) -> EmbeddedComment {
        match mode {
            EmbedMode::Sum => EmbeddedComment::Sum(self.embed_sum(tokens)),
            EmbedMode::Sequence(max_len) => EmbeddedComment::Sequence(self.embed_sequence(tokens, max_len)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedMode {
    Sum,
    Sequence(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddedComment {
    Sum(Vec<f64>),
    Sequence(SequenceFeature),
}

/// A `max_len x dim` matrix whose rows at and beyond `true_length` are padding.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFeature {
    pub matrix: DenseMatrix,
    pub true_length: usize,
}

impl SequenceFeature {
    pub fn max_len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRows {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRows {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_vectors(dim: usize, rows: impl IntoIterator<Item = SparseVector>) -> Self {
        let mut out = Self::new(dim);
        for r in rows {
            out.push(&r);
        }
        out
    }

    pub fn push(&mut self, row: &SparseVector) {
        for &(i, v) in &row.entries {
            debug_assert!(i < self.dim);
            self.indices.push(i);
            self.values.push(v);
        }
        self.indptr.push(self.indices.len());
    }

    pub fn rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn select(&self, rows: &[usize]) -> SparseRows {
        let mut out = SparseRows::new(self.dim);
        for &r in rows {
            for (i, v) in self.row(r) {
                out.indices.push(i);
                out.values.push(v);
            }
            out.indptr.push(out.indices.len());
        }
        out
    }
}

/// Supplies padded sequences on demand, so large corpora need not be
/// materialised as `n x max_len x dim` up front.
pub trait SequenceSource: Send + Sync {
    fn len(&self) -> usize;
    fn max_len(&self) -> usize;
    fn dim(&self) -> usize;
    fn get(&self, index: usize) -> SequenceFeature;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SequenceSource for Vec<SequenceFeature> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn max_len(&self) -> usize {
        self.first().map_or(0, SequenceFeature::max_len)
    }

    fn dim(&self) -> usize {
        self.first().map_or(0, SequenceFeature::dim)
    }

    fn get(&self, index: usize) -> SequenceFeature {
        self[index].clone()
    }
}

/// Lazily embedded token lists.
pub struct EmbeddedSequences {
    table: Arc<EmbeddingTable>,
    docs: Vec<Vec<String>>,
    max_len: usize,
}

impl EmbeddedSequences {
    pub fn new(table: Arc<EmbeddingTable>, docs: Vec<Vec<String>>, max_len: usize) -> Self {
        Self { table, docs, max_len }
    }
}

impl SequenceSource for EmbeddedSequences {
    fn len(&self) -> usize {
        self.docs.len()
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn dim(&self) -> usize {
        self.table.dim()
    }

    fn get(&self, index: usize) -> SequenceFeature {
        self.table.embed_sequence(&self.docs[index], self.max_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// Raw bag-of-words counts over the TF-IDF vocabulary.
    Bow,
    Tfidf,
    EmbedSum,
    EmbedSeq,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Bow => "bow",
            FeatureKind::Tfidf => "tfidf",
            FeatureKind::EmbedSum => "embed-sum",
            FeatureKind::EmbedSeq => "embed-seq",
        })
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace('_', "-").as_str() {
            "bow" | "counts" => Ok(FeatureKind::Bow),
            "tfidf" | "tf-idf" => Ok(FeatureKind::Tfidf),
            "embed-sum" => Ok(FeatureKind::EmbedSum),
            "embed-seq" => Ok(FeatureKind::EmbedSeq),
            other => Err(format!("unknown feature kind `{other}`")),
        }
    }
}

/// Model inputs of one of the supported kinds.
#[derive(Clone)]
pub enum FeatureSet {
    Counts(SparseRows),
    Tfidf(SparseRows),
    Dense(DenseMatrix),
    Sequences(Arc<dyn SequenceSource>),
}

impl fmt::Debug for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeatureSet::{}({} rows)", self.kind(), self.len())
    }
}

impl FeatureSet {
    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureSet::Counts(_) => FeatureKind::Bow,
            FeatureSet::Tfidf(_) => FeatureKind::Tfidf,
            FeatureSet::Dense(_) => FeatureKind::EmbedSum,
            FeatureSet::Sequences(_) => FeatureKind::EmbedSeq,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FeatureSet::Counts(s) | FeatureSet::Tfidf(s) => s.rows(),
            FeatureSet::Dense(m) => m.rows(),
            FeatureSet::Sequences(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Input width for vector features; embedding width for sequences.
    pub fn dim(&self) -> usize {
        match self {
            FeatureSet::Counts(s) | FeatureSet::Tfidf(s) => s.dim(),
            FeatureSet::Dense(m) => m.cols(),
            FeatureSet::Sequences(s) => s.dim(),
        }
    }
}

/// A fitted feature pipeline that maps token lists to a [`FeatureSet`].
#[derive(Debug, Clone)]
pub enum Featurizer {
    Bow(Arc<TfIdfModel>),
    Tfidf(Arc<TfIdfModel>),
    EmbedSum(Arc<EmbeddingTable>),
    EmbedSeq { table: Arc<EmbeddingTable>, max_len: usize },
}

impl Featurizer {
    pub fn kind(&self) -> FeatureKind {
        match self {
            Featurizer::Bow(_) => FeatureKind::Bow,
            Featurizer::Tfidf(_) => FeatureKind::Tfidf,
            Featurizer::EmbedSum(_) => FeatureKind::EmbedSum,
            Featurizer::EmbedSeq { .. } => FeatureKind::EmbedSeq,
        }
    }

    pub fn featurize(&self, docs: &[&[String]]) -> FeatureSet {
        match self {
            Featurizer::Bow(m) => FeatureSet::Counts(SparseRows::from_vectors(
                m.vocab_size(),
                docs.iter().map(|d| m.counts(d)),
            )),
            Featurizer::Tfidf(m) => FeatureSet::Tfidf(SparseRows::from_vectors(
                m.vocab_size(),
                docs.iter().map(|d| m.transform(d)),
            )),
            Featurizer::EmbedSum(t) => {
                let mut out = DenseMatrix::zeros(docs.len(), t.dim());
                for (r, d) in docs.iter().enumerate() {
                    out.row_mut(r).copy_from_slice(&t.embed_sum(d));
                }
                FeatureSet::Dense(out)
            }
            Featurizer::EmbedSeq { table, max_len } => FeatureSet::Sequences(Arc::new(EmbeddedSequences::new(
                Arc::clone(table),
                docs.iter().map(|d| d.to_vec()).collect(),
                *max_len,
            ))),
        }
    }
}
