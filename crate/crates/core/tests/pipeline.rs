mod common;

use std::fs;

use common::{balanced, config_text, desk_bundle, workspace, DESK_LOGISTIC};
use toxfair::experiment::{run_experiment, run_sweep, ExperimentError};
use toxfair::planted::PlantedSpec;

const QUICK: &str = r#"{ epochs = 3, batch_size = 64, learning_rate = 0.01, optimizer = { kind = "adam" } }"#;

fn small_spec() -> PlantedSpec {
    PlantedSpec { comments: 2000, ..PlantedSpec::default() }
}

#[test]
fn minimal_run_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let b = desk_bundle(tmp.path(), &small_spec());
    let out = tmp.path().join("out");
    let mut ws = workspace(&config_text(&b, &out, "logistic", QUICK, 1, ""));
    let outcome = run_experiment(&mut ws).unwrap();
    let auc = outcome.report.metrics.auc.unwrap();
    assert!((0.0..=1.0).contains(&auc));
    for name in &outcome.manifest.artifacts {
        assert!(out.join(name).is_file(), "{name}");
    }
    assert_eq!(outcome.manifest.artifacts.len(), 7);
    assert!(outcome.manifest.config_matches());
    assert_eq!(outcome.manifest.command, "train");
}

#[test]
fn four_way_targets_produce_exact_training_set() {
    let tmp = tempfile::tempdir().unwrap();
    let b = desk_bundle(tmp.path(), &small_spec());
    let out = tmp.path().join("out");
    let hyper = r#"{ epochs = 1, batch_size = 512, learning_rate = 0.01, optimizer = { kind = "adam" } }"#;
    let mut ws = workspace(&config_text(&b, &out, "logistic", hyper, 2, &balanced(50_000)));
    let outcome = run_experiment(&mut ws).unwrap();
    assert_eq!(outcome.report.training_size, 200_000);
    let manifest = fs::read_to_string(out.join("training_set.csv")).unwrap();
    let rows: usize = manifest
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(rows, 200_000);
    let c = outcome.report.training_counts;
    assert_eq!(
        [c.toxic_identity, c.toxic_non_identity, c.non_toxic_identity, c.non_toxic_non_identity, c.unannotated],
        [50_000, 50_000, 50_000, 50_000, 0]
    );
}

#[test]
fn six_point_sweep_gives_six_rows_on_one_test_set() {
    let tmp = tempfile::tempdir().unwrap();
    let b = desk_bundle(tmp.path(), &small_spec());
    let out = tmp.path().join("out");
    let extra = format!("{}[sweep]\ncategory = \"toxic_identity\"\nfrom = 0\nto = 250\nstep = 50\n", balanced(250));
    let mut ws = workspace(&config_text(&b, &out, "logistic", QUICK, 5, &extra));
    let sweep = run_sweep(&mut ws).unwrap();
    assert_eq!(sweep.rows.len(), 6);
    assert_eq!(sweep.points, vec![0, 50, 100, 150, 200, 250]);
    for (i, row) in sweep.rows.iter().enumerate() {
        let r = row.report.as_ref().unwrap();
        assert_eq!(row.index, i);
        assert_eq!(r.seed, 5 + i as u64);
        assert_eq!(r.test_fingerprint, sweep.test_fingerprint);
        assert_eq!(r.training_counts.toxic_identity, sweep.points[i]);
        assert_eq!(r.training_counts.non_toxic_identity, 250);
    }
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.lines().next().unwrap().contains("fpr_identity"));
}

#[test]
fn single_point_sweep_matches_a_plain_run() {
    let tmp = tempfile::tempdir().unwrap();
    let b = desk_bundle(tmp.path(), &small_spec());
    let plain = config_text(&b, &tmp.path().join("plain"), "logistic", QUICK, 8, &balanced(300));
    let run = run_experiment(&mut workspace(&plain)).unwrap();
    let extra = format!("{}[sweep]\ncategory = \"toxic_identity\"\nfrom = 300\nto = 300\nstep = 1\n", balanced(300));
    let swept = config_text(&b, &tmp.path().join("sweep"), "logistic", QUICK, 8, &extra);
    let sweep = run_sweep(&mut workspace(&swept)).unwrap();
    assert_eq!(sweep.rows.len(), 1);
    let point = sweep.rows[0].report.as_ref().unwrap();
    assert_eq!(point.metrics, run.report.metrics);
    assert_eq!(point.training_counts, run.report.training_counts);
    assert_eq!(point.selected_epoch, run.report.selected_epoch);
}

#[test]
fn rebalancing_never_touches_the_test_split() {
    let tmp = tempfile::tempdir().unwrap();
    let b = desk_bundle(tmp.path(), &small_spec());
    let mut fingerprints = Vec::new();
    for (i, extra) in ["".to_string(), balanced(100), format!("{}synthesize = true\n", balanced(600))].iter().enumerate() {
        let text = config_text(&b, &tmp.path().join(format!("o{i}")), "logistic", QUICK, 4, extra);
        let outcome = run_experiment(&mut workspace(&text)).unwrap();
        assert_eq!(outcome.report.metrics.count, 400);
        fingerprints.push(outcome.report.test_fingerprint);
    }
    assert!(fingerprints.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn failed_run_removes_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let b = desk_bundle(tmp.path(), &small_spec());
    let out = tmp.path().join("out");
    let text = config_text(&b, &out, "mlp2", "{ epochs = 2, batch_size = 8, learning_rate = 1e300 }", 1, "");
    let err = run_experiment(&mut workspace(&text)).unwrap_err();
    assert!(matches!(err, ExperimentError::Divergence { .. }), "{err}");
    assert_eq!(err.exit_code(), 4);
    let left = fs::read_dir(&out).map(|d| d.count()).unwrap_or(0);
    assert_eq!(left, 0);
}

#[test]
fn every_family_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let b = desk_bundle(tmp.path(), &PlantedSpec { comments: 600, ..PlantedSpec::default() });
    let cases = [
        ("naive_bayes", "{}", "bow"),
        ("logistic", DESK_LOGISTIC, "tfidf"),
        ("mlp2", QUICK, "tfidf"),
        ("mlp3", QUICK, "embed-sum"),
        ("bilstm", "{ hidden_units = 4, head_hidden = 4, epochs = 2, batch_size = 32, learning_rate = 0.001 }", "embed-seq"),
    ];
    for (family, hyper, kind) in cases {
        let features = format!("[features]\nkind = \"{kind}\"\nmax_len = 20\n");
        let text = config_text(&b, &tmp.path().join(family), family, hyper, 1, &features);
        let outcome = run_experiment(&mut workspace(&text)).unwrap_or_else(|e| panic!("{family}: {e}"));
        assert_eq!(outcome.report.family, family);
        assert!(outcome.report.metrics.auc.is_some(), "{family}");
    }
}
