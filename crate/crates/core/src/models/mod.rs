//! Classifier families: naive Bayes, logistic regression, fully connected
//! networks and a two-layer bidirectional LSTM, behind one registry.

mod artifact;
pub mod bilstm;
pub mod dense_net;
pub mod naive_bayes;
mod registry;
mod training;

pub use artifact::ARTIFACT_FORMAT_VERSION;
pub use bilstm::{BiLstmConfig, BiLstmNet, LstmDirection};
pub use dense_net::{Architecture, DenseNet, GradientModelConfig};
pub use naive_bayes::{fit_naive_bayes, NaiveBayesModel};
pub use registry::{BiLstmFamily, GradientFamily, ModelFamily, ModelRegistry, NaiveBayesConfig, NaiveBayesFamily};
pub use bilstm::fit_bilstm;
pub use dense_net::{fit_gradient_model, Inputs};
pub use training::{select_best_epoch, EpochRecord};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureKind, FeatureSet};
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("cannot fit model: {0}")]
    Fit(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss is not finite")]
    Divergence { epoch: usize, batch: usize },
    #[error("model expects {expected} features but got {found}")]
    KindMismatch { expected: FeatureKind, found: FeatureKind },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),
    #[error("model artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NaiveBayes,
    Logistic,
    Mlp,
    BiLstm,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Network {
    NaiveBayes(NaiveBayesModel),
    Dense(DenseNet),
    BiLstm(BiLstmNet),
}

/// A fitted classifier with its configuration snapshot and training history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub family: String,
    pub kind: ModelKind,
    pub input: FeatureKind,
    pub config: serde_json::Value,
    pub history: Vec<EpochRecord>,
    pub selected_epoch: Option<usize>,
    pub(crate) network: Network,
}

impl TrainedModel {
    pub fn input_dim(&self) -> usize {
        match &self.network {
            Network::NaiveBayes(m) => m.vocab_size(),
            Network::Dense(n) => n.input_dim(),
            Network::BiLstm(n) => n.config().embed_dim,
        }
    }

    /// Probability of the toxic class for every row of `features`.
    pub fn predict_proba(&self, features: &FeatureSet) -> Result<Vec<f64>> {
        if features.kind() != self.input {
            return Err(ModelError::KindMismatch { expected: self.input, found: features.kind() });
        }
        if !features.is_empty() && features.dim() != self.input_dim() {
            return Err(ModelError::Shape(format!(
                "model input width is {} but features have width {}",
                self.input_dim(),
                features.dim()
            )));
        }
        match (&self.network, features) {
            (Network::NaiveBayes(m), FeatureSet::Counts(rows)) => Ok(m.predict_proba(rows)),
            (Network::Dense(n), FeatureSet::Counts(rows) | FeatureSet::Tfidf(rows)) => {
                Ok(n.predict_proba(&dense_net::Inputs::Sparse(rows)))
            }
            (Network::Dense(n), FeatureSet::Dense(m)) => Ok(n.predict_proba(&dense_net::Inputs::Dense(m))),
            (Network::BiLstm(n), FeatureSet::Sequences(src)) => n.predict_source(src.as_ref()),
            _ => Err(ModelError::KindMismatch { expected: self.input, found: features.kind() }),
        }
    }

    pub fn naive_bayes(&self) -> Option<&NaiveBayesModel> {
        match &self.network {
            Network::NaiveBayes(m) => Some(m),
            _ => None,
        }
    }

    pub fn dense(&self) -> Option<&DenseNet> {
        match &self.network {
            Network::Dense(n) => Some(n),
            _ => None,
        }
    }

    pub fn bilstm(&self) -> Option<&BiLstmNet> {
        match &self.network {
            Network::BiLstm(n) => Some(n),
            _ => None,
        }
    }
}

pub(crate) fn check_labels(n_rows: usize, labels: &[u8]) -> Result<()> {
    if n_rows != labels.len() {
        return Err(ModelError::Shape(format!("{n_rows} feature rows but {} labels", labels.len())));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(ModelError::Fit("labels must be 0 or 1".into()));
    }
    Ok(())
}
