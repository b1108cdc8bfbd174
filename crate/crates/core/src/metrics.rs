//! Classification and fairness measurement.
//!
//! Rates with a zero denominator are reported as `0.0` together with an
//! explicit `*_defined = false` flag; subgroup ratios are `None` when either
//! rate is undefined or the non-identity rate is zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::IdentityFlag;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("AUC is undefined: {0}")]
    UndefinedAuc(String),
    #[error("invalid proportion test input: {0}")]
    Proportion(String),
    #[error("labels and predictions must be 0 or 1")]
    NotBinary,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, label: u8, prediction: u8) {
        match (label, prediction) {
            (1, 1) => self.tp += 1,
            (0, 1) => self.fp += 1,
            (0, 0) => self.tn += 1,
            _ => self.fn_ += 1,
        }
    }

    /// fp / (fp + tn), with a definedness flag.
    pub fn fpr(&self) -> (f64, bool) {
        ratio(self.fp, self.fp + self.tn)
    }

    /// fn / (fn + tp), with a definedness flag.
    pub fn fnr(&self) -> (f64, bool) {
        ratio(self.fn_, self.fn_ + self.tp)
    }

    pub fn merged(&self, other: &ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

fn check_binary(values: &[u8]) -> Result<(), MetricsError> {
    if values.iter().any(|&v| v > 1) {
        return Err(MetricsError::NotBinary);
    }
    Ok(())
}

pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionCounts, MetricsError> {
    if labels.len() != predictions.len() {
        return Err(MetricsError::Length(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    check_binary(labels)?;
    check_binary(predictions)?;
    let mut c = ConfusionCounts::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        c.add(y, p);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecallF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub f1_defined: bool,
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn precision_recall_f1(c: &ConfusionCounts) -> PrecisionRecallF1 {
    let (precision, precision_defined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_defined) = ratio(c.tp, c.tp + c.fn_);
    PrecisionRecallF1 {
        precision,
        recall,
        f1: f1_from(precision, recall),
        precision_defined,
        recall_defined,
        f1_defined: precision_defined && recall_defined && precision + recall > 0.0,
    }
}

/// Rank-statistic AUC with midranks for tied scores:
/// `(R_pos - P(P+1)/2) / (P N)`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::Length(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    check_binary(labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MetricsError::UndefinedAuc("scores contain NaN".into()));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::UndefinedAuc(
            "both classes must be present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (0-based) share the midrank, 1-based
        let midrank = (start + end + 1) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        rank_sum_pos += midrank * pos_in_group as f64;
        start = end;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Binary predictions: 1 iff `p >= threshold`.
pub fn classify(probabilities: &[f64], threshold: f64) -> Vec<u8> {
    probabilities.iter().map(|&p| u8::from(p >= threshold)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupStats {
    pub count: usize,
    pub confusion: ConfusionCounts,
    pub fpr: f64,
    pub fnr: f64,
    pub fpr_defined: bool,
    pub fnr_defined: bool,
}

impl SubgroupStats {
    fn from_counts(confusion: ConfusionCounts) -> Self {
        let (fpr, fpr_defined) = confusion.fpr();
        let (fnr, fnr_defined) = confusion.fnr();
        Self {
            count: confusion.total(),
            confusion,
            fpr,
            fnr,
            fpr_defined,
            fnr_defined,
        }
    }
}

/// Overall classification quality plus the identity / non-identity split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub threshold: f64,
    pub count: usize,
    /// `None` when the scored set contains a single class.
    pub auc: Option<f64>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1_defined: bool,
    pub confusion: ConfusionCounts,
    pub fpr_identity: f64,
    pub fpr_non_identity: f64,
    pub fnr_identity: f64,
    pub fnr_non_identity: f64,
    pub fpr_ratio: Option<f64>,
    pub fnr_ratio: Option<f64>,
    pub excluded_unannotated: usize,
    pub identity: SubgroupStats,
    pub non_identity: SubgroupStats,
}

fn gap_ratio(num: (f64, bool), den: (f64, bool)) -> Option<f64> {
    (num.1 && den.1 && den.0 > 0.0).then(|| num.0 / den.0)
}

pub fn subgroup_report(
    labels: &[u8],
    predictions: &[u8],
    scores: &[f64],
    identity: &[IdentityFlag],
    threshold: f64,
) -> Result<FairnessReport, MetricsError> {
    let n = labels.len();
    if predictions.len() != n || scores.len() != n || identity.len() != n {
        return Err(MetricsError::Length(format!(
            "labels {n}, predictions {}, scores {}, identity flags {}",
            predictions.len(),
            scores.len(),
            identity.len()
        )));
    }
    let overall = confusion(labels, predictions)?;
    let prf = precision_recall_f1(&overall);
    let auc = match roc_auc(scores, labels) {
        Ok(a) => Some(a),
        Err(MetricsError::UndefinedAuc(_)) => None,
        Err(e) => return Err(e),
    };
    let mut id_counts = ConfusionCounts::default();
    let mut non_counts = ConfusionCounts::default();
    let mut excluded = 0;
    for i in 0..n {
        match identity[i] {
            IdentityFlag::Identity => id_counts.add(labels[i], predictions[i]),
            IdentityFlag::NonIdentity => non_counts.add(labels[i], predictions[i]),
            IdentityFlag::Unannotated => excluded += 1,
        }
    }
    let id_stats = SubgroupStats::from_counts(id_counts);
    let non_stats = SubgroupStats::from_counts(non_counts);
    Ok(FairnessReport {
        threshold,
        count: n,
        auc,
        f1: prf.f1,
        precision: prf.precision,
        recall: prf.recall,
        f1_defined: prf.f1_defined,
        confusion: overall,
        fpr_identity: id_stats.fpr,
        fpr_non_identity: non_stats.fpr,
        fnr_identity: id_stats.fnr,
        fnr_non_identity: non_stats.fnr,
        fpr_ratio: gap_ratio(id_counts.fpr(), non_counts.fpr()),
        fnr_ratio: gap_ratio(id_counts.fnr(), non_counts.fnr()),
        excluded_unannotated: excluded,
        identity: id_stats,
        non_identity: non_stats,
    })
}

impl FairnessReport {
    pub const CSV_HEADER: &'static str = "auc,f1,precision,recall,fpr_identity,fpr_non_identity,fnr_identity,fnr_non_identity,fpr_ratio,fnr_ratio,excluded_unannotated,tp,fp,tn,fn";

    /// One flat CSV row matching [`CSV_HEADER`](Self::CSV_HEADER); undefined values are empty.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            opt(self.auc),
            self.f1,
            self.precision,
            self.recall,
            self.fpr_identity,
            self.fpr_non_identity,
            self.fnr_identity,
            self.fnr_non_identity,
            opt(self.fpr_ratio),
            opt(self.fnr_ratio),
            self.excluded_unannotated,
            self.confusion.tp,
            self.confusion.fp,
            self.confusion.tn,
            self.confusion.fn_,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionTest {
    pub z: f64,
    pub p_two_sided: f64,
    /// Pooled proportion is 0 or 1, so the statistic is undefined.
    pub degenerate: bool,
}

/// Pooled two-proportion z test; the two-sided p-value is `erfc(|z| / sqrt 2)`
/// using libm's erfc (sub-ulp accuracy in double precision).
pub fn two_proportion_test(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<ProportionTest, MetricsError> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(MetricsError::Proportion(format!(
            "need n > 0 and 0 <= k <= n, got {k1}/{n1} and {k2}/{n2}"
        )));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    if pooled == 0.0 || pooled == 1.0 {
        return Ok(ProportionTest {
            z: 0.0,
            p_two_sided: 1.0,
            degenerate: true,
        });
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (k1 as f64 / n1f - k2 as f64 / n2f) / se;
    let p = libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
    Ok(ProportionTest {
        z,
        p_two_sided: p,
        degenerate: false,
    })
}
