use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ExperimentError;
use crate::corpus::{Category, CommentSchema};
use crate::features::FeatureKind;
use crate::models::ModelRegistry;
use crate::rebalance::CategoryTargets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub comments: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity_terms: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slur_terms: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tweets: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_scores: Option<PathBuf>,
    #[serde(default)]
    pub schema: CommentSchema,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train: 0.7, validation: 0.1, test: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingConfig {
    pub toxicity_threshold: f64,
    pub identity_epsilon: f64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self { toxicity_threshold: 0.5, identity_epsilon: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub min_df: usize,
    pub embed_dim: usize,
    pub max_len: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { kind: FeatureKind::Tfidf, min_df: 1, embed_dim: 25, max_len: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: String,
    /// Overrides on top of the family defaults.
    #[serde(default = "empty_table")]
    pub hyper: Value,
}

fn empty_table() -> Value {
    Value::Object(Default::default())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RebalanceMode {
    /// Train on the original split as drawn.
    #[default]
    Original,
    /// Train on an exactly balanced draw from the four category pools.
    Balanced,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RebalanceConfig {
    pub mode: RebalanceMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<CategoryTargets>,
    /// Shorthand for the same target in every category.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_category: Option<usize>,
    /// Fill generatable categories with template comments up to their target.
    pub synthesize: bool,
}

impl RebalanceConfig {
    pub fn resolved_targets(&self) -> Option<CategoryTargets> {
        self.targets.or(self.per_category.map(CategoryTargets::uniform))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub category: Category,
    pub from: usize,
    pub to: usize,
    pub step: usize,
}

/// One experiment: data, features, a single model family, an optional
/// rebalancing of the training split, and where to write results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataPaths,
    #[serde(default = "one")]
    pub sample_fraction: f64,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub labeling: LabelingConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub rebalance: RebalanceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default = "half")]
    pub threshold: f64,
    #[serde(default = "half")]
    pub external_threshold: f64,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl ExperimentConfig {
    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let d = &mut self.data;
        fix(&mut d.comments);
        for p in [
            &mut d.embeddings,
            &mut d.templates,
            &mut d.identity_terms,
            &mut d.slur_terms,
            &mut d.tweets,
            &mut d.external_scores,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    /// Checks ranges, file presence and that the model family accepts the
    /// chosen features.
    pub fn validate(&self, registry: &ModelRegistry) -> Result<(), ExperimentError> {
        let err = |m: String| Err(ExperimentError::Config(m));
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return err(format!("sample_fraction must be in (0, 1], got {}", self.sample_fraction));
        }
        let s = self.split;
        if [s.train, s.validation, s.test].iter().any(|f| !(0.0..=1.0).contains(f))
            || ((s.train + s.validation + s.test) - 1.0).abs() > 1e-9
            || s.test == 0.0
        {
            return err(format!("split fractions must be non-negative, sum to 1 and give a test share: {s:?}"));
        }
        for (name, t) in [("threshold", self.threshold), ("external_threshold", self.external_threshold)] {
            if !(0.0..=1.0).contains(&t) {
                return err(format!("{name} must be in [0, 1], got {t}"));
            }
        }
        let family = registry.get(&self.model.family).map_err(|e| ExperimentError::Config(e.to_string()))?;
        if !family.accepts(self.features.kind) {
            return err(format!("model family `{}` does not accept {} features", self.model.family, self.features.kind));
        }
        if !self.model.hyper.is_object() {
            return err("model.hyper must be a table".into());
        }
        let f = self.features;
        if f.min_df == 0 || f.embed_dim == 0 || f.max_len == 0 {
            return err("features.min_df, embed_dim and max_len must be positive".into());
        }
        let mut required: Vec<(&str, Option<&PathBuf>)> = vec![("data.comments", Some(&self.data.comments))];
        if matches!(f.kind, FeatureKind::EmbedSum | FeatureKind::EmbedSeq) {
            required.push(("data.embeddings", self.data.embeddings.as_ref()));
        }
        if self.rebalance.mode == RebalanceMode::Balanced {
            if self.rebalance.targets.is_some() == self.rebalance.per_category.is_some() {
                return err("balanced rebalancing needs exactly one of rebalance.targets or rebalance.per_category".into());
            }
            if self.rebalance.synthesize {
                required.push(("data.templates", self.data.templates.as_ref()));
                required.push(("data.identity_terms", self.data.identity_terms.as_ref()));
                required.push(("data.slur_terms", self.data.slur_terms.as_ref()));
            }
        }
        if let Some(sw) = &self.sweep {
            if self.rebalance.mode != RebalanceMode::Balanced {
                return err("a sweep needs rebalance.mode = \"balanced\" for the fixed categories".into());
            }
            if sw.step == 0 {
                return err("sweep.step must be positive".into());
            }
        }
        for (name, path) in required {
            match path {
                None => return err(format!("{name} is required by this configuration")),
                Some(p) if !p.is_file() => return err(format!("{name}: {} does not exist", p.display())),
                Some(_) => {}
            }
        }
        for (name, path) in [
            ("data.tweets", &self.data.tweets),
            ("data.external_scores", &self.data.external_scores),
            ("data.templates", &self.data.templates),
            ("data.identity_terms", &self.data.identity_terms),
            ("data.slur_terms", &self.data.slur_terms),
            ("data.embeddings", &self.data.embeddings),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return err(format!("{name}: {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }

    /// Model hyperparameters with the experiment seed filled in when unset.
    pub fn model_hyper(&self, seed: u64) -> Value {
        let mut h = self.model.hyper.clone();
        if let Some(obj) = h.as_object_mut() {
            obj.entry("seed").or_insert(seed.into());
        }
        h
    }
}
