//! JSON model files: kind tag, configuration snapshot, training history and
//! a base64 parameter blob.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::bilstm::{BiLstmConfig, BiLstmNet};
use super::dense_net::{DenseNet, GradientModelConfig};
use super::naive_bayes::NaiveBayesModel;
use super::{EpochRecord, ModelError, ModelKind, Network, Result, TrainedModel};
use crate::features::FeatureKind;
use crate::numerics::ParamSet;

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ArtifactFile {
    format_version: u32,
    family: String,
    kind: ModelKind,
    input: FeatureKind,
    config: Value,
    history: Vec<EpochRecord>,
    selected_epoch: Option<usize>,
    params: String,
}

fn bad(e: impl std::fmt::Display) -> ModelError {
    ModelError::Artifact(e.to_string())
}

impl TrainedModel {
    fn params(&self) -> ParamSet {
        match &self.network {
            Network::NaiveBayes(m) => m.to_params(),
            Network::Dense(n) => n.params().clone(),
            Network::BiLstm(n) => n.params().clone(),
        }
    }

    pub fn to_artifact_bytes(&self) -> Result<Vec<u8>> {
        let file = ArtifactFile {
            format_version: ARTIFACT_FORMAT_VERSION,
            family: self.family.clone(),
            kind: self.kind,
            input: self.input,
            config: self.config.clone(),
            history: self.history.clone(),
            selected_epoch: self.selected_epoch,
            params: STANDARD.encode(self.params().to_bytes()),
        };
        let mut out = serde_json::to_vec_pretty(&file).map_err(bad)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_artifact_bytes(bytes: &[u8]) -> Result<Self> {
        let file: ArtifactFile = serde_json::from_slice(bytes).map_err(bad)?;
        if file.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", file.format_version)));
        }
        let params = ParamSet::from_bytes(&STANDARD.decode(&file.params).map_err(bad)?)?;
        let network = match file.kind {
            ModelKind::NaiveBayes => Network::NaiveBayes(NaiveBayesModel::from_params(&params)?),
            ModelKind::Logistic | ModelKind::Mlp => {
                let config: GradientModelConfig = serde_json::from_value(file.config.clone()).map_err(bad)?;
                if params.is_empty() {
                    return Err(bad("no parameters"));
                }
                let input_dim = params.get(0).rows();
                Network::Dense(DenseNet::from_params(config.architecture, input_dim, params)?)
            }
            ModelKind::BiLstm => {
                let config: BiLstmConfig = serde_json::from_value(file.config.clone()).map_err(bad)?;
                Network::BiLstm(BiLstmNet::from_params(config, params)?)
            }
        };
        Ok(TrainedModel {
            family: file.family,
            kind: file.kind,
            input: file.input,
            config: file.config,
            history: file.history,
            selected_epoch: file.selected_epoch,
            network,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_artifact_bytes()?).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_artifact_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSet, SequenceFeature};
    use crate::models::ModelRegistry;
    use crate::numerics::{seeded_rng, DenseMatrix};
    use rand::Rng;
    use serde_json::json;
    use std::sync::Arc;

    fn round_trip(m: &TrainedModel) {
        let bytes = m.to_artifact_bytes().unwrap();
        let back = TrainedModel::from_artifact_bytes(&bytes).unwrap();
        assert_eq!(&back, m);
        assert_eq!(back.to_artifact_bytes().unwrap(), bytes);
    }

    #[test]
    fn every_family_round_trips() {
        let r = ModelRegistry::with_defaults();
        let mut rng = seeded_rng(1);
        let dense = FeatureSet::Dense(
            DenseMatrix::from_vec(6, 3, (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
        );
        let y = [0, 1, 0, 1, 1, 0];
        for name in ["logistic", "mlp2", "mlp3"] {
            round_trip(&r.get(name).unwrap().fit(&json!({"epochs": 2, "batch_size": 4}), &dense, &y, Some((&dense, &y))).unwrap());
        }
        let counts = FeatureSet::Counts(crate::features::SparseRows::from_vectors(
            2,
            [crate::features::SparseVector { dim: 2, entries: vec![(0, 1.0)] }, crate::features::SparseVector { dim: 2, entries: vec![(1, 1.0)] }],
        ));
        round_trip(&r.get("naive_bayes").unwrap().fit(&Value::Null, &counts, &[0, 1], None).unwrap());
        let seqs: Vec<SequenceFeature> = (0..6)
            .map(|i| SequenceFeature {
                matrix: DenseMatrix::from_vec(4, 3, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
                true_length: 1 + i % 4,
            })
            .collect();
        let seq = FeatureSet::Sequences(Arc::new(seqs));
        let hyper = json!({"hidden_units": 3, "head_hidden": 4, "epochs": 1, "batch_size": 3});
        round_trip(&r.get("bilstm").unwrap().fit(&hyper, &seq, &y, Some((&seq, &y))).unwrap());
    }

    #[test]
    fn rejects_future_versions_and_garbage() {
        assert!(TrainedModel::from_artifact_bytes(b"{").is_err());
        let r = ModelRegistry::with_defaults();
        let f = FeatureSet::Dense(DenseMatrix::zeros(2, 2));
        let m = r.get("logistic").unwrap().fit(&json!({"epochs": 0}), &f, &[0, 1], None).unwrap();
        let mut v: Value = serde_json::from_slice(&m.to_artifact_bytes().unwrap()).unwrap();
        v["format_version"] = json!(99);
        assert!(TrainedModel::from_artifact_bytes(v.to_string().as_bytes()).is_err());
    }
}
