use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use toxfair::corpus::{CategoryCounts, LabeledExample};
use toxfair::experiment::{
    evaluate_saved_model, prepare, render_reports, run_compare_external, run_experiment, run_sweep, split_overlap,
    synthesize_fill, ExperimentConfig, ExperimentError, OutputStage, RunManifest, Workspace,
};
use toxfair::metrics::FairnessReport;
use toxfair::models::ModelRegistry;

#[derive(Debug, Parser)]
#[command(name = "toxfair", version, about = "Toxic-comment classifiers with subgroup fairness reports")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the share of the corpus that is used.
    #[arg(long, global = true, value_name = "F")]
    sample_fraction: Option<f64>,
    /// Print the config with defaults and overrides applied, then exit.
    #[arg(long, global = true)]
    print_effective_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, label and split the corpus; write split assignments and fingerprints.
    Prepare,
    /// Expand the templates into synthetic comments.
    Synth {
        /// Comments per generatable category.
        #[arg(long, default_value_t = 100)]
        per_category: usize,
    },
    /// Fit the configured model and report fairness metrics on the test split.
    Train,
    /// Score a saved model on the test split.
    Evaluate {
        /// Directory holding model.json and features.json from `train`.
        #[arg(long, value_name = "DIR")]
        model: PathBuf,
    },
    /// One training run per point of the configured sweep.
    Sweep,
    /// Compare a saved model with precomputed external scores on the tweet set.
    CompareExternal {
        #[arg(long, value_name = "DIR")]
        model: PathBuf,
        /// Cut-off applied to the external scores.
        #[arg(long, value_name = "F")]
        external_threshold: Option<f64>,
    },
    /// Re-render CSV files from the JSON reports in a run directory.
    Report {
        /// Run directory; defaults to the config's output directory.
        #[arg(long, value_name = "DIR")]
        dir: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ExperimentError> {
    let path = cli.config.as_ref().ok_or_else(|| ExperimentError::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(f) = cli.sample_fraction {
        config.sample_fraction = f;
    }
    if let Some(Command::CompareExternal { external_threshold: Some(t), .. }) = &cli.command {
        config.external_threshold = *t;
    }
    Ok(config)
}

fn workspace(cli: &Cli) -> Result<Workspace, ExperimentError> {
    Workspace::new(load_config(cli)?, ModelRegistry::with_defaults())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn summary(m: &FairnessReport) -> String {
    format!(
        "auc {} f1 {:.4} fpr identity {:.4} non-identity {:.4} ratio {}",
        fmt_opt(m.auc),
        m.f1,
        m.fpr_identity,
        m.fpr_non_identity,
        fmt_opt(m.fpr_ratio)
    )
}

fn counts_line(name: &str, c: &CategoryCounts) -> String {
    format!(
        "{name}: toxic_identity {} toxic_non_identity {} non_toxic_identity {} non_toxic_non_identity {} unannotated {}",
        c.toxic_identity, c.toxic_non_identity, c.non_toxic_identity, c.non_toxic_non_identity, c.unannotated
    )
}

fn json(value: &serde_json::Value) -> Result<Vec<u8>, ExperimentError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| ExperimentError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn category_slug(e: &LabeledExample) -> String {
    e.category.map_or_else(|| "unannotated".into(), |c| c.to_string())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_prepare(cli: &Cli) -> Result<(), ExperimentError> {
    let config = load_config(cli)?;
    config.validate(&ModelRegistry::with_defaults())?;
    let mut manifest = RunManifest::new("prepare", &config);
    let prepared = manifest.time("prepare", || prepare(&config))?;
    manifest.datasets = prepared.datasets.clone();
    manifest.test_fingerprint = prepared.test_fingerprint.clone();
    manifest.rejected_rows = prepared.rejected_rows;
    let overlap = split_overlap(&prepared.split);
    if !overlap.is_empty() {
        return Err(ExperimentError::Data { stage: "split", message: format!("ids in more than one split: {overlap:?}") });
    }
    let [train, validation, test] = prepared.counts();
    let mut assignments = String::from("id,split,category,label\n");
    for (name, part) in [("train", &prepared.split.train), ("validation", &prepared.split.validation), ("test", &prepared.split.test)] {
        for e in part.iter() {
            let _ = writeln!(assignments, "{},{name},{},{}", csv_field(&e.id), category_slug(e), e.label);
        }
    }
    let summary = serde_json::json!({
        "rejected_rows": prepared.rejected_rows,
        "datasets": prepared.datasets,
        "test_fingerprint": prepared.test_fingerprint,
        "counts": { "train": train, "validation": validation, "test": test },
    });
    let mut stage = OutputStage::new(&config.output_dir)?;
    stage.write("prepare.json", &json(&summary)?)?;
    stage.write("split.csv", assignments.as_bytes())?;
    stage.commit(&mut manifest)?;
    println!("{}", counts_line("train", &train));
    println!("{}", counts_line("validation", &validation));
    println!("{}", counts_line("test", &test));
    println!("rejected rows {}; test fingerprint {}", prepared.rejected_rows, prepared.test_fingerprint);
    Ok(())
}

fn cmd_synth(cli: &Cli, per_category: usize) -> Result<(), ExperimentError> {
    let mut ws = workspace(cli)?;
    let config = ws.config.clone();
    let mut manifest = RunManifest::new("synth", &config);
    let examples = manifest.time("synthesize", || synthesize_fill(&mut ws, per_category, config.seed))?;
    let mut out = String::from("id,category,comment_text\n");
    for e in &examples {
        let _ = writeln!(out, "{},{},{}", csv_field(&e.id), category_slug(e), csv_field(&e.text));
    }
    let mut stage = OutputStage::new(&config.output_dir)?;
    stage.write("synthetic.csv", out.as_bytes())?;
    stage.commit(&mut manifest)?;
    println!("generated {} comments into {}", examples.len(), config.output_dir.join("synthetic.csv").display());
    Ok(())
}

fn cmd_report(cli: &Cli, dir: Option<&Path>) -> Result<(), ExperimentError> {
    let dir = match dir {
        Some(d) => d.to_path_buf(),
        None => cli.out.clone().map_or_else(|| load_config(cli).map(|c| c.output_dir), Ok)?,
    };
    for path in render_reports(&dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), ExperimentError> {
    if cli.print_effective_config {
        let config = load_config(cli)?;
        config.validate(&ModelRegistry::with_defaults())?;
        print!("{}", config.to_toml());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(ExperimentError::Config("no subcommand given; see --help".into()));
    };
    match command {
        Command::Prepare => cmd_prepare(cli),
        Command::Synth { per_category } => cmd_synth(cli, *per_category),
        Command::Train => {
            let mut ws = workspace(cli)?;
            let out = run_experiment(&mut ws)?;
            println!("{}", summary(&out.report.metrics));
            println!("outputs in {}", ws.config.output_dir.display());
            Ok(())
        }
        Command::Evaluate { model } => {
            let mut ws = workspace(cli)?;
            let out = evaluate_saved_model(&mut ws, model)?;
            println!("{}", summary(&out.report.metrics));
            Ok(())
        }
        Command::Sweep => {
            let mut ws = workspace(cli)?;
            let result = run_sweep(&mut ws);
            let outcome = match &result {
                Ok(o) => Some(o),
                Err(ExperimentError::PartialSweep { .. }) => None,
                Err(_) => return result.map(|_| ()),
            };
            if let Some(o) = outcome {
                for row in &o.rows {
                    if let Some(r) = &row.report {
                        println!("point {} count {}: {}", row.index, row.count, summary(&r.metrics));
                    }
                }
            }
            println!("outputs in {}", ws.config.output_dir.display());
            result.map(|_| ())
        }
        Command::CompareExternal { model, .. } => {
            let mut ws = workspace(cli)?;
            let c = run_compare_external(&mut ws, model)?;
            println!(
                "{} texts: ours {:.1}% toxic, external {:.1}% toxic; ours only {}, external only {}",
                c.count,
                100.0 * c.ours_toxic_fraction,
                100.0 * c.theirs_toxic_fraction,
                c.ours_only.len(),
                c.theirs_only.len()
            );
            Ok(())
        }
        Command::Report { dir } => cmd_report(cli, dir.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
