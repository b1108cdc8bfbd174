#![allow(dead_code)]

use std::path::Path;

use toxfair::experiment::{ExperimentConfig, Workspace};
use toxfair::models::ModelRegistry;
use toxfair::planted::{write_desk_bundle, DeskBundle, PlantedSpec};

/// Adam-trained logistic regression settings used for the desk runs.
pub const DESK_LOGISTIC: &str = r#"{ epochs = 20, batch_size = 64, learning_rate = 0.01, optimizer = { kind = "adam" } }"#;

pub fn desk_bundle(dir: &Path, spec: &PlantedSpec) -> DeskBundle {
    write_desk_bundle(&dir.join("data"), spec, 400).expect("bundle written")
}

/// Config text for `bundle` with TF-IDF features; `extra` is appended verbatim.
pub fn config_text(bundle: &DeskBundle, out: &Path, family: &str, hyper: &str, seed: u64, extra: &str) -> String {
    format!(
        r#"seed = {seed}
output_dir = "{out}"

[data]
comments = "{c}"
embeddings = "{e}"
templates = "{t}"
identity_terms = "{i}"
slur_terms = "{s}"

[model]
family = "{family}"
hyper = {hyper}
{extra}"#,
        out = out.display(),
        c = bundle.comments.display(),
        e = bundle.embeddings.display(),
        t = bundle.templates.display(),
        i = bundle.identity_terms.display(),
        s = bundle.slur_terms.display(),
    )
}

pub fn workspace(text: &str) -> Workspace {
    let config = ExperimentConfig::from_toml(text).expect("config parses");
    Workspace::new(config, ModelRegistry::with_defaults()).expect("config validates")
}

pub fn balanced(per_category: usize) -> String {
    format!("[rebalance]\nmode = \"balanced\"\nper_category = {per_category}\n")
}
