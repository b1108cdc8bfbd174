//! Model families registered by name and selected at runtime.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::bilstm::{fit_bilstm, BiLstmConfig};
use super::dense_net::{fit_gradient_model, GradientModelConfig};
use super::naive_bayes::fit_naive_bayes;
use super::{ModelError, ModelKind, Network, Result, TrainedModel};
use crate::features::{FeatureKind, FeatureSet};

/// A trainable classifier family. Hyperparameters arrive as a JSON object
/// that is overlaid on [`ModelFamily::default_config`].
pub trait ModelFamily: Send + Sync {
    fn name(&self) -> &str;
    fn accepts(&self, kind: FeatureKind) -> bool;
    /// The feature kind used when an experiment does not pick one.
    fn preferred_input(&self) -> FeatureKind;
    fn default_config(&self) -> Value;
    fn fit(
        &self,
        hyper: &Value,
        train: &FeatureSet,
        labels: &[u8],
        val: Option<(&FeatureSet, &[u8])>,
    ) -> Result<TrainedModel>;
}

fn overlay(base: Value, hyper: &Value) -> Result<Value> {
    let mut base = base;
    match (base.as_object_mut(), hyper) {
        (_, Value::Null) => {}
        (Some(b), Value::Object(h)) => {
            for (k, v) in h {
                b.insert(k.clone(), v.clone());
            }
        }
        _ => return Err(ModelError::Config(format!("hyperparameters must be a table, got {hyper}"))),
    }
    Ok(base)
}

fn parse<T: DeserializeOwned>(family: &str, value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| ModelError::Config(format!("{family}: {e}")))
}

fn check_input(family: &dyn ModelFamily, train: &FeatureSet) -> Result<()> {
    if family.accepts(train.kind()) {
        Ok(())
    } else {
        Err(ModelError::KindMismatch { expected: family.preferred_input(), found: train.kind() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaiveBayesConfig {
    pub alpha: f64,
}

impl Default for NaiveBayesConfig {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

pub struct NaiveBayesFamily;

impl ModelFamily for NaiveBayesFamily {
    fn name(&self) -> &str {
        "naive_bayes"
    }

    fn accepts(&self, kind: FeatureKind) -> bool {
        kind == FeatureKind::Bow
    }

    fn preferred_input(&self) -> FeatureKind {
        FeatureKind::Bow
    }

    fn default_config(&self) -> Value {
        serde_json::to_value(NaiveBayesConfig::default()).expect("plain struct")
    }

    fn fit(&self, hyper: &Value, train: &FeatureSet, labels: &[u8], _val: Option<(&FeatureSet, &[u8])>) -> Result<TrainedModel> {
        check_input(self, train)?;
        let config: NaiveBayesConfig = parse(self.name(), overlay(self.default_config(), hyper)?)?;
        let FeatureSet::Counts(rows) = train else { unreachable!("checked above") };
        let model = fit_naive_bayes(rows, labels, config.alpha)?;
        Ok(TrainedModel {
            family: self.name().into(),
            kind: ModelKind::NaiveBayes,
            input: FeatureKind::Bow,
            config: serde_json::to_value(config).expect("plain struct"),
            history: Vec::new(),
            selected_epoch: None,
            network: Network::NaiveBayes(model),
        })
    }
}

/// Logistic regression or a fully connected network.
pub struct GradientFamily {
    name: String,
    defaults: GradientModelConfig,
}

impl GradientFamily {
    pub fn new(name: &str, defaults: GradientModelConfig) -> Self {
        Self { name: name.into(), defaults }
    }
}

impl ModelFamily for GradientFamily {
    fn name(&self) -> &str {
        &self.name
    }

    fn accepts(&self, kind: FeatureKind) -> bool {
        kind != FeatureKind::EmbedSeq
    }

    fn preferred_input(&self) -> FeatureKind {
        FeatureKind::Tfidf
    }

    fn default_config(&self) -> Value {
        serde_json::to_value(&self.defaults).expect("plain struct")
    }

    fn fit(&self, hyper: &Value, train: &FeatureSet, labels: &[u8], val: Option<(&FeatureSet, &[u8])>) -> Result<TrainedModel> {
        check_input(self, train)?;
        let config: GradientModelConfig = parse(&self.name, overlay(self.default_config(), hyper)?)?;
        let mut model = fit_gradient_model(&config, train, labels, val)?;
        model.family = self.name.clone();
        Ok(model)
    }
}

pub struct BiLstmFamily {
    defaults: BiLstmConfig,
}

impl BiLstmFamily {
    pub fn new(defaults: BiLstmConfig) -> Self {
        Self { defaults }
    }
}

impl ModelFamily for BiLstmFamily {
    fn name(&self) -> &str {
        "bilstm"
    }

    fn accepts(&self, kind: FeatureKind) -> bool {
        kind == FeatureKind::EmbedSeq
    }

    fn preferred_input(&self) -> FeatureKind {
        FeatureKind::EmbedSeq
    }

    fn default_config(&self) -> Value {
        serde_json::to_value(&self.defaults).expect("plain struct")
    }

    /// Input width and sequence length come from the data unless set explicitly.
    fn fit(&self, hyper: &Value, train: &FeatureSet, labels: &[u8], val: Option<(&FeatureSet, &[u8])>) -> Result<TrainedModel> {
        check_input(self, train)?;
        let mut merged = overlay(self.default_config(), hyper)?;
        if let (FeatureSet::Sequences(src), Some(obj)) = (train, merged.as_object_mut()) {
            let explicit = |k: &str| hyper.get(k).is_some();
            if !explicit("embed_dim") {
                obj.insert("embed_dim".into(), src.dim().into());
            }
            if !explicit("max_len") {
                obj.insert("max_len".into(), src.max_len().into());
            }
        }
        let config: BiLstmConfig = parse(self.name(), merged)?;
        let val = val.ok_or_else(|| ModelError::Fit("bilstm training needs a validation set".into()))?;
        fit_bilstm(&config, train, labels, val)
    }
}

/// Name-keyed collection of model families.
#[derive(Clone, Default)]
pub struct ModelRegistry {
    families: BTreeMap<String, Arc<dyn ModelFamily>>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// naive_bayes, logistic, mlp2 (hidden 100), mlp3 (hidden 75, 50) and bilstm.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(NaiveBayesFamily));
        r.register(Arc::new(GradientFamily::new("logistic", GradientModelConfig::logistic())));
        r.register(Arc::new(GradientFamily::new("mlp2", GradientModelConfig::mlp(vec![100]))));
        r.register(Arc::new(GradientFamily::new("mlp3", GradientModelConfig::mlp(vec![75, 50]))));
        r.register(Arc::new(BiLstmFamily::new(BiLstmConfig::default())));
        r
    }

    /// Adds or replaces a family under its own name.
    pub fn register(&mut self, family: Arc<dyn ModelFamily>) {
        self.families.insert(family.name().to_string(), family);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ModelFamily>> {
        self.families
            .get(name)
            .cloned()
            .ok_or_else(|| ModelError::UnknownFamily(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.families.keys().map(String::as_str).collect()
    }
}
