use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::manifest::{sha256_hex, OutputStage, RunManifest};
use super::{ExperimentConfig, ExperimentError, RebalanceMode};
use crate::corpus::{
    label_example, load_identity_texts, parse_comments_lenient, sample_fraction, split_dataset, Category,
    CategoryCounts, DatasetSplit, IdentityFlag, LabeledExample, LabelingRule, Origin, TweetRecord,
};
use crate::features::{fit_tfidf, load_embeddings, EmbeddingTable, FeatureKind, Featurizer, TfIdfModel};
use crate::metrics::{classify, subgroup_report, FairnessReport};
use crate::models::{EpochRecord, ModelRegistry, TrainedModel};
use crate::rebalance::{build_pools, make_sweep, sample_balanced, synthetic_deficits, CategoryTargets, RebalanceSpec};
use crate::textproc::{parse_templates, read_term_list, synthesize_for, TermLexicon, Template};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// How many disagreement examples the external comparison lists.
const EXAMPLE_LISTING: usize = 10;

fn open(stage: &'static str, path: &Path) -> Result<BufReader<File>, ExperimentError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| ExperimentError::data(stage, format!("{}: {e}", path.display())))
}

fn file_sha(path: &Path) -> Result<String, ExperimentError> {
    let bytes = fs::read(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, ExperimentError> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| ExperimentError::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Parsed, labeled and split corpus plus provenance.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: DatasetSplit,
    pub rejected_rows: usize,
    /// Input file name to SHA-256 of its bytes.
    pub datasets: BTreeMap<String, String>,
    pub test_fingerprint: String,
}

impl Prepared {
    pub fn counts(&self) -> [CategoryCounts; 3] {
        [
            CategoryCounts::of(&self.split.train),
            CategoryCounts::of(&self.split.validation),
            CategoryCounts::of(&self.split.test),
        ]
    }
}

/// SHA-256 over the ordered test ids, one per line.
pub fn test_fingerprint(test: &[LabeledExample]) -> String {
    let ids: Vec<&str> = test.iter().map(|e| e.id.as_str()).collect();
    sha256_hex(ids.join("\n").as_bytes())
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, ExperimentError> {
    let data = &config.data;
    let (records, rejected) = parse_comments_lenient(open("parse", &data.comments)?, &data.schema)
        .map_err(|e| ExperimentError::data("parse", e))?;
    for r in rejected.iter().take(5) {
        log::warn!("rejected row at line {}: {}", r.line, r.message);
    }
    if records.is_empty() {
        return Err(ExperimentError::data("parse", "no usable comment rows"));
    }
    let records = sample_fraction(records, config.sample_fraction, config.seed);
    let rule = LabelingRule::new(config.labeling.toxicity_threshold, config.labeling.identity_epsilon)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let examples: Vec<LabeledExample> = records.iter().map(|r| label_example(r, &rule)).collect();
    let s = config.split;
    let split = split_dataset(examples, (s.train, s.validation, s.test), config.seed)
        .map_err(|e| ExperimentError::data("split", e))?;
    if split.train.is_empty() || split.test.is_empty() {
        return Err(ExperimentError::data("split", "train or test split is empty"));
    }
    let mut datasets = BTreeMap::new();
    for path in [
        Some(&data.comments),
        data.embeddings.as_ref(),
        data.templates.as_ref(),
        data.identity_terms.as_ref(),
        data.slur_terms.as_ref(),
        data.tweets.as_ref(),
        data.external_scores.as_ref(),
    ]
    .into_iter()
    .flatten()
    {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        datasets.insert(name, file_sha(path)?);
    }
    let test_fingerprint = test_fingerprint(&split.test);
    Ok(Prepared { split, rejected_rows: rejected.len(), datasets, test_fingerprint })
}

/// Shared, lazily loaded resources for one or more runs of a config.
pub struct Workspace {
    pub config: ExperimentConfig,
    pub registry: ModelRegistry,
    embeddings: Option<Arc<EmbeddingTable>>,
    templates: Option<(Vec<Template>, TermLexicon)>,
}

impl Workspace {
    pub fn new(config: ExperimentConfig, registry: ModelRegistry) -> Result<Self, ExperimentError> {
        config.validate(&registry)?;
        Ok(Self { config, registry, embeddings: None, templates: None })
    }

    fn embeddings(&mut self) -> Result<Arc<EmbeddingTable>, ExperimentError> {
        if let Some(t) = &self.embeddings {
            return Ok(Arc::clone(t));
        }
        let path = self.config.data.embeddings.clone().ok_or_else(|| ExperimentError::Config("data.embeddings is required".into()))?;
        let table = load_embeddings(open("embeddings", &path)?, self.config.features.embed_dim)
            .map_err(|e| ExperimentError::data("embeddings", e))?;
        if table.duplicate_count() > 0 {
            log::warn!("{} duplicate embedding rows ignored", table.duplicate_count());
        }
        let table = Arc::new(table);
        self.embeddings = Some(Arc::clone(&table));
        Ok(table)
    }

    fn templates(&mut self) -> Result<&(Vec<Template>, TermLexicon), ExperimentError> {
        if self.templates.is_none() {
            let d = &self.config.data;
            let need = |p: &Option<PathBuf>, name: &str| {
                p.clone().ok_or_else(|| ExperimentError::Config(format!("data.{name} is required for synthesis")))
            };
            let (tp, ip, sp) = (need(&d.templates, "templates")?, need(&d.identity_terms, "identity_terms")?, need(&d.slur_terms, "slur_terms")?);
            let templates = parse_templates(open("templates", &tp)?).map_err(|e| ExperimentError::data("templates", e))?;
            let identity = read_term_list(open("lexicon", &ip)?).map_err(|e| ExperimentError::data("lexicon", e))?;
            let slurs = read_term_list(open("lexicon", &sp)?).map_err(|e| ExperimentError::data("lexicon", e))?;
            let lexicon = TermLexicon::new(identity, slurs).map_err(|e| ExperimentError::data("lexicon", e))?;
            self.templates = Some((templates, lexicon));
        }
        Ok(self.templates.as_ref().expect("loaded above"))
    }

    fn identity_terms(&self) -> Result<Vec<String>, ExperimentError> {
        let path = self.config.data.identity_terms.as_ref().ok_or_else(|| ExperimentError::Config("data.identity_terms is required".into()))?;
        read_term_list(open("lexicon", path)?).map_err(|e| ExperimentError::data("lexicon", e))
    }
}

/// The examples a model is fitted on, with bookkeeping for the report.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub examples: Vec<LabeledExample>,
    pub targets: Option<CategoryTargets>,
    pub excluded_unannotated: usize,
    pub synthetic_generated: usize,
}

impl TrainingSet {
    /// `id,origin,category,multiplicity` in first-appearance order.
    pub fn manifest_csv(&self) -> String {
        let mut order: Vec<(&str, Origin, Option<Category>)> = Vec::new();
        let mut counts: BTreeMap<(&str, bool), usize> = BTreeMap::new();
        for e in &self.examples {
            let key = (e.id.as_str(), e.origin == Origin::Synthetic);
            let n = counts.entry(key).or_insert(0);
            if *n == 0 {
                order.push((e.id.as_str(), e.origin, e.category));
            }
            *n += 1;
        }
        let mut out = String::from("id,origin,category,multiplicity\n");
        for (id, origin, category) in order {
            let origin_name = match origin {
                Origin::Real => "real",
                Origin::Synthetic => "synthetic",
            };
            let category = category.map(Category::slug).unwrap_or("unannotated");
            let n = counts[&(id, origin == Origin::Synthetic)];
            out.push_str(&format!("{id},{origin_name},{category},{n}\n"));
        }
        out
    }
}

fn training_set(
    ws: &mut Workspace,
    train: &[LabeledExample],
    targets: Option<CategoryTargets>,
    seed: u64,
) -> Result<TrainingSet, ExperimentError> {
    let Some(targets) = targets else {
        return Ok(TrainingSet { examples: train.to_vec(), targets: None, excluded_unannotated: 0, synthetic_generated: 0 });
    };
    let (real_pools, _) = build_pools(train.to_vec(), Vec::new());
    let synthetic = if ws.config.rebalance.synthesize {
        let deficits = synthetic_deficits(&real_pools, &targets);
        let (templates, lexicon) = ws.templates()?;
        let usable: Vec<(Category, usize)> =
            deficits.into_iter().filter(|(c, _)| templates.iter().any(|t| t.category == *c)).collect();
        synthesize_for(templates, lexicon, &usable, seed).map_err(|e| ExperimentError::data("synthesize", e))?
    } else {
        Vec::new()
    };
    let synthetic_generated = synthetic.len();
    let (pools, remainder) = build_pools(train.to_vec(), synthetic);
    let examples = sample_balanced(&pools, &RebalanceSpec { targets, seed }).map_err(|e| ExperimentError::data("rebalance", e))?;
    Ok(TrainingSet { examples, targets: Some(targets), excluded_unannotated: remainder.len(), synthetic_generated })
}

/// A fitted featurizer and its serialized description.
pub struct FeatureState {
    pub featurizer: Featurizer,
    pub description: Value,
}

fn fit_features(ws: &mut Workspace, train: &[LabeledExample]) -> Result<FeatureState, ExperimentError> {
    let f = ws.config.features;
    match f.kind {
        FeatureKind::Bow | FeatureKind::Tfidf => {
            let docs: Vec<&[String]> = train.iter().map(|e| e.tokens.as_slice()).collect();
            let model = fit_tfidf(&docs, f.min_df).map_err(|e| ExperimentError::data("features", e))?;
            let json = model.to_json().map_err(|e| ExperimentError::data("features", e))?;
            let description = serde_json::json!({
                "kind": f.kind,
                "tfidf": serde_json::from_str::<Value>(&json).map_err(|e| ExperimentError::data("features", e))?,
            });
            let model = Arc::new(model);
            let featurizer = if f.kind == FeatureKind::Bow { Featurizer::Bow(model) } else { Featurizer::Tfidf(model) };
            Ok(FeatureState { featurizer, description })
        }
        FeatureKind::EmbedSum | FeatureKind::EmbedSeq => {
            let table = ws.embeddings()?;
            let sha = ws.config.data.embeddings.as_deref().map(file_sha).transpose()?;
            let description = serde_json::json!({
                "kind": f.kind,
                "embed_dim": f.embed_dim,
                "max_len": f.max_len,
                "embeddings_sha256": sha,
            });
            let featurizer = if f.kind == FeatureKind::EmbedSum {
                Featurizer::EmbedSum(table)
            } else {
                Featurizer::EmbedSeq { table, max_len: f.max_len }
            };
            Ok(FeatureState { featurizer, description })
        }
    }
}

fn restore_features(ws: &mut Workspace, description: &Value) -> Result<FeatureState, ExperimentError> {
    let kind: FeatureKind = serde_json::from_value(description["kind"].clone())
        .map_err(|e| ExperimentError::data("features", format!("features.json: {e}")))?;
    let featurizer = match kind {
        FeatureKind::Bow | FeatureKind::Tfidf => {
            let model = TfIdfModel::from_json(&description["tfidf"].to_string()).map_err(|e| ExperimentError::data("features", e))?;
            let model = Arc::new(model);
            if kind == FeatureKind::Bow { Featurizer::Bow(model) } else { Featurizer::Tfidf(model) }
        }
        FeatureKind::EmbedSum => Featurizer::EmbedSum(ws.embeddings()?),
        FeatureKind::EmbedSeq => {
            let max_len = description["max_len"].as_u64().ok_or_else(|| ExperimentError::data("features", "features.json lacks max_len"))?;
            Featurizer::EmbedSeq { table: ws.embeddings()?, max_len: max_len as usize }
        }
    };
    Ok(FeatureState { featurizer, description: description.clone() })
}

fn tokens_of(examples: &[LabeledExample]) -> Vec<&[String]> {
    examples.iter().map(|e| e.tokens.as_slice()).collect()
}

fn labels_of(examples: &[LabeledExample]) -> Vec<u8> {
    examples.iter().map(|e| e.label).collect()
}

fn fit_model(ws: &Workspace, features: &FeatureState, train: &[LabeledExample], validation: &[LabeledExample], seed: u64) -> Result<TrainedModel, ExperimentError> {
    let family = ws.registry.get(&ws.config.model.family).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let mut hyper = ws.config.model.hyper.clone();
    if family.default_config().get("seed").is_some() {
        hyper = ws.config.model_hyper(seed);
    }
    let x = features.featurizer.featurize(&tokens_of(train));
    let y = labels_of(train);
    let val_x;
    let val_y = labels_of(validation);
    let val = if validation.is_empty() {
        None
    } else {
        val_x = features.featurizer.featurize(&tokens_of(validation));
        Some((&val_x, val_y.as_slice()))
    };
    family.fit(&hyper, &x, &y, val).map_err(|e| ExperimentError::model("fit", e))
}

fn evaluate(model: &TrainedModel, features: &FeatureState, test: &[LabeledExample], threshold: f64) -> Result<(FairnessReport, Vec<f64>), ExperimentError> {
    let x = features.featurizer.featurize(&tokens_of(test));
    let scores = model.predict_proba(&x).map_err(|e| ExperimentError::model("evaluate", e))?;
    let labels = labels_of(test);
    let predictions = classify(&scores, threshold);
    let identity: Vec<IdentityFlag> = test.iter().map(|e| e.identity).collect();
    let report = subgroup_report(&labels, &predictions, &scores, &identity, threshold).map_err(|e| ExperimentError::data("evaluate", e))?;
    Ok((report, scores))
}

/// Where a sweep point sits, recorded in its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPosition {
    pub index: usize,
    pub category: Category,
    pub count: usize,
    /// Targets of the three categories held fixed.
    pub baseline: CategoryTargets,
}

/// Everything a run measured. Contains no timings, so identical inputs give
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub family: String,
    pub features: FeatureKind,
    pub rebalance: RebalanceMode,
    pub targets: Option<CategoryTargets>,
    pub sweep: Option<SweepPosition>,
    pub seed: u64,
    pub threshold: f64,
    pub test_fingerprint: String,
    pub training_counts: CategoryCounts,
    pub training_size: usize,
    pub synthetic_generated: usize,
    pub excluded_unannotated: usize,
    pub selected_epoch: Option<usize>,
    pub metrics: FairnessReport,
}

impl RunReport {
    pub const CSV_PREFIX: &'static str = "family,features,rebalance,training_size";

    pub fn csv(&self) -> String {
        format!(
            "{},{}\n{},{},{},{},{}\n",
            Self::CSV_PREFIX,
            FairnessReport::CSV_HEADER,
            self.family,
            self.features,
            mode_name(self.rebalance),
            self.training_size,
            self.metrics.csv_row()
        )
    }
}

fn mode_name(mode: RebalanceMode) -> &'static str {
    match mode {
        RebalanceMode::Original => "original",
        RebalanceMode::Balanced => "balanced",
    }
}

fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss,val_f1\n");
    for h in history {
        let f1 = h.val_f1.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", h.epoch, h.loss, f1));
    }
    out
}

struct PointResult {
    report: RunReport,
    model: TrainedModel,
    features: FeatureState,
    training: TrainingSet,
}

fn run_point(ws: &mut Workspace, prepared: &Prepared, targets: Option<CategoryTargets>, seed: u64, sweep: Option<SweepPosition>) -> Result<PointResult, ExperimentError> {
    let training = training_set(ws, &prepared.split.train, targets, seed)?;
    if training.examples.is_empty() {
        return Err(ExperimentError::data("rebalance", "training set is empty"));
    }
    let features = fit_features(ws, &training.examples)?;
    let model = fit_model(ws, &features, &training.examples, &prepared.split.validation, seed)?;
    let (metrics, _) = evaluate(&model, &features, &prepared.split.test, ws.config.threshold)?;
    let report = RunReport {
        format_version: REPORT_FORMAT_VERSION,
        family: ws.config.model.family.clone(),
        features: ws.config.features.kind,
        rebalance: ws.config.rebalance.mode,
        targets: training.targets,
        sweep,
        seed,
        threshold: ws.config.threshold,
        test_fingerprint: prepared.test_fingerprint.clone(),
        training_counts: CategoryCounts::of(&training.examples),
        training_size: training.examples.len(),
        synthetic_generated: training.synthetic_generated,
        excluded_unannotated: training.excluded_unannotated,
        selected_epoch: model.selected_epoch,
        metrics,
    };
    Ok(PointResult { report, model, features, training })
}

fn configured_targets(config: &ExperimentConfig) -> Option<CategoryTargets> {
    match config.rebalance.mode {
        RebalanceMode::Original => None,
        RebalanceMode::Balanced => config.rebalance.resolved_targets(),
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub manifest: RunManifest,
}

fn begin(config: &ExperimentConfig, command: &str, prepared: &Prepared) -> RunManifest {
    let mut manifest = RunManifest::new(command, config);
    manifest.datasets = prepared.datasets.clone();
    manifest.test_fingerprint = prepared.test_fingerprint.clone();
    manifest.rejected_rows = prepared.rejected_rows;
    manifest
}

/// parse, label, split, optionally rebalance the training split, fit and
/// evaluate on the untouched test split. Writes report.json, report.csv,
/// history.csv, model.json, features.json, training_set.csv and
/// manifest.json to the output directory.
pub fn run_experiment(ws: &mut Workspace) -> Result<RunOutcome, ExperimentError> {
    let config = ws.config.clone();
    let mut timings = RunManifest::new("train", &config);
    let prepared = timings.time("prepare", || prepare(&config))?;
    let mut manifest = begin(&config, "train", &prepared);
    manifest.stages = timings.stages;
    let point = manifest.time("fit_evaluate", || run_point(ws, &prepared, configured_targets(&config), config.seed, None))?;
    let mut stage = OutputStage::new(&config.output_dir)?;
    stage.write("report.json", &json_bytes(&point.report)?)?;
    stage.write("report.csv", point.report.csv().as_bytes())?;
    stage.write("history.csv", history_csv(&point.model.history).as_bytes())?;
    stage.write("model.json", &point.model.to_artifact_bytes().map_err(|e| ExperimentError::model("save", e))?)?;
    stage.write("features.json", &json_bytes(&point.features.description)?)?;
    stage.write("training_set.csv", point.training.manifest_csv().as_bytes())?;
    stage.commit(&mut manifest)?;
    Ok(RunOutcome { report: point.report, manifest })
}

/// Re-scores a saved model on the test split of `ws.config` and writes
/// report.json, report.csv and manifest.json to the output directory.
pub fn evaluate_saved_model(ws: &mut Workspace, model_dir: &Path) -> Result<RunOutcome, ExperimentError> {
    let config = ws.config.clone();
    let prepared = prepare(&config)?;
    let mut manifest = begin(&config, "evaluate", &prepared);
    let model = TrainedModel::load(&model_dir.join("model.json")).map_err(|e| ExperimentError::model("load", e))?;
    let text = fs::read_to_string(model_dir.join("features.json")).map_err(|e| ExperimentError::Io(format!("features.json: {e}")))?;
    let description: Value = serde_json::from_str(&text).map_err(|e| ExperimentError::data("features", e))?;
    let features = restore_features(ws, &description)?;
    if features.featurizer.kind() != model.input {
        return Err(ExperimentError::data("evaluate", format!("model expects {} features, found {}", model.input, features.featurizer.kind())));
    }
    let (metrics, _) = manifest.time("evaluate", || evaluate(&model, &features, &prepared.split.test, config.threshold))?;
    let report = RunReport {
        format_version: REPORT_FORMAT_VERSION,
        family: model.family.clone(),
        features: model.input,
        rebalance: config.rebalance.mode,
        targets: configured_targets(&config),
        sweep: None,
        seed: config.seed,
        threshold: config.threshold,
        test_fingerprint: prepared.test_fingerprint.clone(),
        training_counts: CategoryCounts::default(),
        training_size: 0,
        synthetic_generated: 0,
        excluded_unannotated: 0,
        selected_epoch: model.selected_epoch,
        metrics,
    };
    let mut stage = OutputStage::new(&config.output_dir)?;
    stage.write("report.json", &json_bytes(&report)?)?;
    stage.write("report.csv", report.csv().as_bytes())?;
    stage.commit(&mut manifest)?;
    Ok(RunOutcome { report, manifest })
}

/// One schedule point of a sweep; `error` is set when the point failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub count: usize,
    pub seed: u64,
    pub report: Option<RunReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub format_version: u32,
    pub category: Category,
    pub baseline: CategoryTargets,
    pub points: Vec<usize>,
    pub test_fingerprint: String,
    pub rows: Vec<SweepRow>,
}

impl SweepOutcome {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn csv(&self) -> String {
        let mut out = format!("index,category,count,seed,training_size,error,{}\n", crate::metrics::FairnessReport::CSV_HEADER);
        let blank = ",".repeat(FairnessReport::CSV_HEADER.matches(',').count());
        for r in &self.rows {
            let (size, metrics) = match &r.report {
                Some(rep) => (rep.training_size.to_string(), rep.metrics.csv_row()),
                None => (String::new(), blank.clone()),
            };
            let error = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            out.push_str(&format!("{},{},{},{},{},{},{}\n", r.index, self.category, r.count, r.seed, size, error, metrics));
        }
        out
    }
}

/// Fits one model per schedule point against a shared test split. Point `i`
/// uses seed `seed + i`. Failed points are recorded and the sweep goes on;
/// if any failed, outputs are still written and `PartialSweep` is returned.
pub fn run_sweep(ws: &mut Workspace) -> Result<SweepOutcome, ExperimentError> {
    let config = ws.config.clone();
    let sweep = config.sweep.ok_or_else(|| ExperimentError::Config("no [sweep] section".into()))?;
    let baseline = configured_targets(&config).ok_or_else(|| ExperimentError::Config("a sweep needs balanced targets".into()))?;
    let schedule = make_sweep(sweep.category, sweep.from, sweep.to, sweep.step, baseline)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let prepared = prepare(&config)?;
    let mut manifest = begin(&config, "sweep", &prepared);
    let mut stage = OutputStage::new(&config.output_dir)?;
    let mut rows = Vec::with_capacity(schedule.len());
    for i in 0..schedule.len() {
        let seed = config.seed.wrapping_add(i as u64);
        let position = SweepPosition { index: i, category: sweep.category, count: schedule.points[i], baseline };
        let result = manifest.time(&format!("point_{i}"), || run_point(ws, &prepared, Some(schedule.targets_at(i)), seed, Some(position)));
        let row = match result {
            Ok(point) => {
                stage.write(&format!("training_set_{i}.csv"), point.training.manifest_csv().as_bytes())?;
                stage.write(&format!("history_{i}.csv"), history_csv(&point.model.history).as_bytes())?;
                SweepRow { index: i, count: schedule.points[i], seed, report: Some(point.report), error: None }
            }
            Err(e) => {
                log::error!("sweep point {i} failed: {e}");
                SweepRow { index: i, count: schedule.points[i], seed, report: None, error: Some(e.to_string()) }
            }
        };
        rows.push(row);
    }
    let outcome = SweepOutcome {
        format_version: REPORT_FORMAT_VERSION,
        category: sweep.category,
        baseline,
        points: schedule.points.clone(),
        test_fingerprint: prepared.test_fingerprint.clone(),
        rows,
    };
    stage.write("sweep.json", &json_bytes(&outcome)?)?;
    stage.write("sweep.csv", outcome.csv().as_bytes())?;
    stage.commit(&mut manifest)?;
    match outcome.failed() {
        0 => Ok(outcome),
        failed => Err(ExperimentError::PartialSweep { failed, total: outcome.rows.len() }),
    }
}

/// Generates template comments for the synthesizable categories.
pub fn synthesize_fill(ws: &mut Workspace, per_category: usize, seed: u64) -> Result<Vec<LabeledExample>, ExperimentError> {
    let (templates, lexicon) = ws.templates()?;
    let targets: Vec<(Category, usize)> = crate::textproc::SYNTHESIZABLE
        .iter()
        .filter(|c| templates.iter().any(|t| t.category == **c))
        .map(|&c| (c, per_category))
        .collect();
    synthesize_for(templates, lexicon, &targets, seed).map_err(|e| ExperimentError::data("synthesize", e))
}

/// Reads an `id,score` CSV.
pub fn read_external_scores(path: &Path) -> Result<BTreeMap<String, f64>, ExperimentError> {
    let mut reader = csv::Reader::from_reader(open("external", path)?);
    let headers = reader.headers().map_err(|e| ExperimentError::data("external", e))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| ExperimentError::data("external", format!("missing column `{name}`")))
    };
    let (id_col, score_col) = (col("id")?, col("score")?);
    let mut out = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| ExperimentError::data("external", e))?;
        let id = row.get(id_col).unwrap_or_default().trim().to_string();
        let raw = row.get(score_col).unwrap_or_default().trim();
        let score: f64 = raw
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| ExperimentError::data("external", format!("row {}: bad score `{raw}`", i + 1)))?;
        out.insert(id, score);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementExample {
    pub id: String,
    pub text: String,
    pub ours: f64,
    pub theirs: f64,
}

/// Both scorers applied to texts presumed non-toxic, so every positive is a
/// false positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalComparison {
    pub format_version: u32,
    pub count: usize,
    pub threshold: f64,
    pub external_threshold: f64,
    pub ours_toxic: usize,
    pub theirs_toxic: usize,
    pub ours_toxic_fraction: f64,
    pub theirs_toxic_fraction: f64,
    pub both_toxic: usize,
    pub ours_only: Vec<String>,
    pub theirs_only: Vec<String>,
    pub ours_only_examples: Vec<DisagreementExample>,
    pub theirs_only_examples: Vec<DisagreementExample>,
}

/// Set arithmetic over two scorers. `texts` pairs each id with its text;
/// every id needs an external score.
pub fn compare_scores(
    texts: &[(String, String)],
    ours: &[f64],
    theirs: &BTreeMap<String, f64>,
    threshold: f64,
    external_threshold: f64,
) -> Result<ExternalComparison, ExperimentError> {
    if texts.len() != ours.len() {
        return Err(ExperimentError::data("compare", format!("{} texts but {} scores", texts.len(), ours.len())));
    }
    let missing: Vec<&str> = texts.iter().filter(|(id, _)| !theirs.contains_key(id)).map(|(id, _)| id.as_str()).collect();
    if !missing.is_empty() {
        return Err(ExperimentError::data("compare", format!("no external score for ids: {}", missing.join(", "))));
    }
    let (mut ours_toxic, mut theirs_toxic, mut both) = (0, 0, 0);
    let (mut ours_only, mut theirs_only) = (Vec::new(), Vec::new());
    let (mut ours_ex, mut theirs_ex) = (Vec::new(), Vec::new());
    for ((id, text), &p) in texts.iter().zip(ours) {
        let q = theirs[id];
        let (a, b) = (p >= threshold, q >= external_threshold);
        ours_toxic += usize::from(a);
        theirs_toxic += usize::from(b);
        let example = || DisagreementExample { id: id.clone(), text: text.clone(), ours: p, theirs: q };
        match (a, b) {
            (true, true) => both += 1,
            (true, false) => {
                ours_only.push(id.clone());
                if ours_ex.len() < EXAMPLE_LISTING {
                    ours_ex.push(example());
                }
            }
            (false, true) => {
                theirs_only.push(id.clone());
                if theirs_ex.len() < EXAMPLE_LISTING {
                    theirs_ex.push(example());
                }
            }
            (false, false) => {}
        }
    }
    let n = texts.len();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(ExternalComparison {
        format_version: REPORT_FORMAT_VERSION,
        count: n,
        threshold,
        external_threshold,
        ours_toxic,
        theirs_toxic,
        ours_toxic_fraction: frac(ours_toxic),
        theirs_toxic_fraction: frac(theirs_toxic),
        both_toxic: both,
        ours_only,
        theirs_only,
        ours_only_examples: ours_ex,
        theirs_only_examples: theirs_ex,
    })
}

/// Scores identity-mentioning tweets with a saved model and compares with
/// precomputed external scores. Writes external.json, external.csv and
/// manifest.json.
pub fn run_compare_external(ws: &mut Workspace, model_dir: &Path) -> Result<ExternalComparison, ExperimentError> {
    let config = ws.config.clone();
    let tweets_path = config.data.tweets.clone().ok_or_else(|| ExperimentError::Config("data.tweets is required".into()))?;
    let scores_path = config.data.external_scores.clone().ok_or_else(|| ExperimentError::Config("data.external_scores is required".into()))?;
    let mut manifest = RunManifest::new("compare-external", &config);
    for p in [&tweets_path, &scores_path] {
        manifest.datasets.insert(p.file_name().unwrap_or_default().to_string_lossy().into_owned(), file_sha(p)?);
    }
    let terms = ws.identity_terms()?;
    let tweets: Vec<TweetRecord> = load_identity_texts(open("tweets", &tweets_path)?, &terms).map_err(|e| ExperimentError::data("tweets", e))?;
    let external = read_external_scores(&scores_path)?;
    let model = TrainedModel::load(&model_dir.join("model.json")).map_err(|e| ExperimentError::model("load", e))?;
    let text = fs::read_to_string(model_dir.join("features.json")).map_err(|e| ExperimentError::Io(format!("features.json: {e}")))?;
    let description: Value = serde_json::from_str(&text).map_err(|e| ExperimentError::data("features", e))?;
    let features = restore_features(ws, &description)?;
    let tokens: Vec<Vec<String>> = tweets.iter().map(|t| crate::textproc::tokenize(&t.text)).collect();
    let refs: Vec<&[String]> = tokens.iter().map(Vec::as_slice).collect();
    let ours = model.predict_proba(&features.featurizer.featurize(&refs)).map_err(|e| ExperimentError::model("compare", e))?;
    let texts: Vec<(String, String)> = tweets.iter().map(|t| (t.id(), t.text.clone())).collect();
    let comparison = compare_scores(&texts, &ours, &external, config.threshold, config.external_threshold)?;
    let mut csv = String::from("id,ours,theirs,ours_toxic,theirs_toxic\n");
    for ((id, _), p) in texts.iter().zip(&ours) {
        let q = external[id];
        csv.push_str(&format!("{id},{p},{q},{},{}\n", u8::from(*p >= config.threshold), u8::from(q >= config.external_threshold)));
    }
    let mut stage = OutputStage::new(&config.output_dir)?;
    stage.write("external.json", &json_bytes(&comparison)?)?;
    stage.write("external.csv", csv.as_bytes())?;
    stage.commit(&mut manifest)?;
    Ok(comparison)
}

/// Rewrites report.csv / sweep.csv in `dir` from the JSON reports there.
/// Returns the files written.
pub fn render_reports(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut written = Vec::new();
    let report = dir.join("report.json");
    if report.is_file() {
        let text = fs::read_to_string(&report)?;
        let r: RunReport = serde_json::from_str(&text).map_err(|e| ExperimentError::data("report", e))?;
        let out = dir.join("report.csv");
        fs::write(&out, r.csv())?;
        written.push(out);
    }
    let sweep = dir.join("sweep.json");
    if sweep.is_file() {
        let text = fs::read_to_string(&sweep)?;
        let s: SweepOutcome = serde_json::from_str(&text).map_err(|e| ExperimentError::data("report", e))?;
        let out = dir.join("sweep.csv");
        fs::write(&out, s.csv())?;
        written.push(out);
    }
    if written.is_empty() {
        return Err(ExperimentError::data("report", format!("no report.json or sweep.json in {}", dir.display())));
    }
    Ok(written)
}

/// Ids that appear in more than one split; empty for a well-formed split.
pub fn split_overlap(split: &DatasetSplit) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut dup = Vec::new();
    for e in split.train.iter().chain(&split.validation).chain(&split.test) {
        if !seen.insert(e.id.as_str()) {
            dup.push(e.id.clone());
        }
    }
    dup
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(n: usize) -> Vec<(String, String)> {
        (1..=n).map(|i| (i.to_string(), format!("tweet {i}"))).collect()
    }

    fn scores(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn all_zero_scores_agree() {
        let c = compare_scores(&texts(3), &[0.0; 3], &scores(&[("1", 0.0), ("2", 0.0), ("3", 0.0)]), 0.5, 0.5).unwrap();
        assert_eq!((c.ours_toxic_fraction, c.theirs_toxic_fraction), (0.0, 0.0));
        assert!(c.ours_only.is_empty() && c.theirs_only.is_empty());
    }

    #[test]
    fn disagreement_sets() {
        let c = compare_scores(&texts(2), &[0.6, 0.4], &scores(&[("1", 0.2), ("2", 0.8)]), 0.5, 0.5).unwrap();
        assert_eq!(c.ours_only, vec!["1"]);
        assert_eq!(c.theirs_only, vec!["2"]);
        assert_eq!((c.ours_toxic_fraction, c.theirs_toxic_fraction), (0.5, 0.5));
        assert_eq!(c.ours_only_examples[0].text, "tweet 1");
    }

    #[test]
    fn missing_scores_are_listed() {
        let err = compare_scores(&texts(3), &[0.1; 3], &scores(&[("2", 0.1)]), 0.5, 0.5).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1, 3"), "{msg}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn separate_thresholds() {
        let c = compare_scores(&texts(1), &[0.55], &scores(&[("1", 0.55)]), 0.5, 0.6).unwrap();
        assert_eq!((c.ours_toxic, c.theirs_toxic), (1, 0));
    }

    #[test]
    fn training_manifest_counts_multiplicity() {
        let ex = |id: &str, origin| LabeledExample {
            id: id.into(),
            text: String::new(),
            tokens: vec![],
            label: 1,
            identity: IdentityFlag::Identity,
            category: Some(Category::ToxicIdentity),
            origin,
        };
        let set = TrainingSet {
            examples: vec![ex("a", Origin::Real), ex("s", Origin::Synthetic), ex("a", Origin::Real)],
            targets: None,
            excluded_unannotated: 0,
            synthetic_generated: 1,
        };
        assert_eq!(
            set.manifest_csv(),
            "id,origin,category,multiplicity\na,real,toxic_identity,2\ns,synthetic,toxic_identity,1\n"
        );
    }

    #[test]
    fn external_scores_reject_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "id,score\n1,0.5\n2,abc\n").unwrap();
        assert!(read_external_scores(&p).is_err());
        fs::write(&p, "id,score\n1,0.5\n2,0.25\n").unwrap();
        assert_eq!(read_external_scores(&p).unwrap()["2"], 0.25);
    }
}
