//! Multinomial naive Bayes over bag-of-words counts.

use super::{check_labels, ModelError, Result};
use crate::features::SparseRows;
use crate::numerics::{DenseMatrix, ParamSet};

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayesModel {
    log_prior: [f64; 2],
    log_likelihood: [Vec<f64>; 2],
    alpha: f64,
}

/// Laplace-smoothed fit: `ln((count(t, c) + alpha) / (total(c) + alpha * V))`.
pub fn fit_naive_bayes(counts: &SparseRows, labels: &[u8], alpha: f64) -> Result<NaiveBayesModel> {
    check_labels(counts.rows(), labels)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(ModelError::Config(format!("smoothing must be positive, got {alpha}")));
    }
    let mut docs = [0usize; 2];
    for &y in labels {
        docs[y as usize] += 1;
    }
    if docs.contains(&0) {
        return Err(ModelError::Fit("naive Bayes needs examples of both classes".into()));
    }
    let v = counts.dim();
    let mut tallies = [vec![0.0; v], vec![0.0; v]];
    for (r, &y) in labels.iter().enumerate() {
        for (t, c) in counts.row(r) {
            tallies[y as usize][t] += c;
        }
    }
    let n = labels.len() as f64;
    let log_prior = [(docs[0] as f64 / n).ln(), (docs[1] as f64 / n).ln()];
    let log_likelihood = tallies.map(|t| {
        let denom = (t.iter().sum::<f64>() + alpha * v as f64).ln();
        t.iter().map(|c| (c + alpha).ln() - denom).collect()
    });
    Ok(NaiveBayesModel { log_prior, log_likelihood, alpha })
}

impl NaiveBayesModel {
    pub fn vocab_size(&self) -> usize {
        self.log_likelihood[0].len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn log_prior(&self) -> [f64; 2] {
        self.log_prior
    }

    pub fn log_likelihood(&self, class: usize) -> &[f64] {
        &self.log_likelihood[class]
    }

    /// Unnormalised class scores `ln prior + sum count * loglik`.
    pub fn scores(&self, doc: impl Iterator<Item = (usize, f64)>) -> [f64; 2] {
        let mut s = self.log_prior;
        for (t, c) in doc {
            if t < self.vocab_size() {
                s[0] += c * self.log_likelihood[0][t];
                s[1] += c * self.log_likelihood[1][t];
            }
        }
        s
    }

    /// Predicted class (ties go to 0) and the normalised log posteriors.
    pub fn predict(&self, doc: impl Iterator<Item = (usize, f64)>) -> (u8, [f64; 2]) {
        let s = self.scores(doc);
        let m = s[0].max(s[1]);
        let lse = m + ((s[0] - m).exp() + (s[1] - m).exp()).ln();
        (u8::from(s[1] > s[0]), [s[0] - lse, s[1] - lse])
    }

    pub fn predict_proba(&self, rows: &SparseRows) -> Vec<f64> {
        (0..rows.rows()).map(|r| self.predict(rows.row(r)).1[1].exp()).collect()
    }

    pub(crate) fn to_params(&self) -> ParamSet {
        ParamSet::new(vec![
            DenseMatrix::row_vector(self.log_prior.to_vec()),
            DenseMatrix::from_rows(&[self.log_likelihood[0].clone(), self.log_likelihood[1].clone()])
                .expect("equal rows"),
            DenseMatrix::row_vector(vec![self.alpha]),
        ])
    }

    pub(crate) fn from_params(p: &ParamSet) -> Result<Self> {
        if p.len() != 3 || p.get(0).len() != 2 || p.get(1).rows() != 2 || p.get(2).len() != 1 {
            return Err(ModelError::Artifact("naive Bayes parameters have the wrong layout".into()));
        }
        let ll = p.get(1);
        Ok(Self {
            log_prior: [p.get(0).as_slice()[0], p.get(0).as_slice()[1]],
            log_likelihood: [ll.row(0).to_vec(), ll.row(1).to_vec()],
            alpha: p.get(2).as_slice()[0],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{fit_tfidf, SparseVector};
    use crate::textproc::tokenize;

    fn counts_of(docs: &[&str]) -> (SparseRows, crate::features::TfIdfModel) {
        let toks: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d)).collect();
        let m = fit_tfidf(&toks, 1).unwrap();
        let rows = SparseRows::from_vectors(m.vocab_size(), toks.iter().map(|t| m.counts(t)));
        (rows, m)
    }

    fn doc(m: &crate::features::TfIdfModel, text: &str) -> SparseVector {
        m.counts(&tokenize(text))
    }

    #[test]
    fn hand_corpus_posteriors() {
        let (rows, vocab) = counts_of(&["good day", "bad slur"]);
        let nb = fit_naive_bayes(&rows, &[0, 1], 1.0).unwrap();
        // V = 4, each class holds 2 tokens: P(seen) = 2/6, P(unseen) = 1/6.
        let good = doc(&vocab, "good");
        let (class, post) = nb.predict(good.entries.iter().copied());
        assert_eq!(class, 0);
        let oracle = (2.0_f64 / 6.0) / (2.0 / 6.0 + 1.0 / 6.0);
        assert!((post[0].exp() - oracle).abs() < 1e-12);
        let bad = doc(&vocab, "bad");
        assert_eq!(nb.predict(bad.entries.iter().copied()).0, 1);
    }

    #[test]
    fn likelihoods_normalise() {
        let (rows, _) = counts_of(&["a b b c", "c d", "a a e", "f"]);
        let nb = fit_naive_bayes(&rows, &[0, 1, 0, 1], 0.5).unwrap();
        for c in 0..2 {
            let s: f64 = nb.log_likelihood(c).iter().map(|l| l.exp()).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn symmetric_corpus_is_even() {
        let (rows, vocab) = counts_of(&["same words", "same words"]);
        let nb = fit_naive_bayes(&rows, &[0, 1], 1.0).unwrap();
        let (class, post) = nb.predict(doc(&vocab, "same words").entries.into_iter());
        assert_eq!(class, 0);
        assert!((post[0].exp() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_document_uses_priors() {
        let (rows, _) = counts_of(&["x", "y", "z"]);
        let nb = fit_naive_bayes(&rows, &[1, 1, 0], 1.0).unwrap();
        let (class, post) = nb.predict(std::iter::empty());
        assert_eq!(class, 1);
        assert!((post[1].exp() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_evidence_wins() {
        let (rows, vocab) = counts_of(&["calm", "calm", "rage", "rage", "rage"]);
        let nb = fit_naive_bayes(&rows, &[0, 0, 1, 1, 1], 1.0).unwrap();
        let d = doc(&vocab, &["calm"; 10].join(" "));
        assert_eq!(nb.predict(d.entries.into_iter()).0, 0);
    }

    #[test]
    fn rejects_bad_input() {
        let (rows, _) = counts_of(&["a", "b"]);
        assert!(matches!(fit_naive_bayes(&rows, &[1, 1], 1.0), Err(ModelError::Fit(_))));
        assert!(matches!(fit_naive_bayes(&rows, &[0, 1], 0.0), Err(ModelError::Config(_))));
        assert!(matches!(fit_naive_bayes(&rows, &[0], 1.0), Err(ModelError::Shape(_))));
    }

    #[test]
    fn params_round_trip() {
        let (rows, _) = counts_of(&["a b", "b c"]);
        let nb = fit_naive_bayes(&rows, &[0, 1], 1.0).unwrap();
        assert_eq!(NaiveBayesModel::from_params(&nb.to_params()).unwrap(), nb);
    }
}
