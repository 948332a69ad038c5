//! Stage orchestration, caching and artifact contracts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fitts_bench::pipeline::{ExperimentConfig, Pipeline, StageStatus};
use fitts_bench::Error;

fn quick(root: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str(
        r#"
        seed = 5
        [generator]
        trials_per_condition = 4
        [policy]
        hidden_sizes = [16, 16]
        max_epochs = 3
        "#,
        &[],
    )
    .unwrap();
    cfg.output_dir = root.to_path_buf();
    cfg
}

/// Every file under `root` except the stage stamps, keyed by relative path.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.file_name().unwrap() == ".cache" {
                continue;
            }
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn second_full_run_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(quick(dir.path())).unwrap();
    let first = pipeline.all().unwrap();
    assert!(first.iter().all(|o| o.status == StageStatus::Ran));
    let before = snapshot(dir.path());
    let second = pipeline.all().unwrap();
    assert!(second.iter().all(|o| o.status == StageStatus::Cached), "{second:?}");
    assert_eq!(before, snapshot(dir.path()));

    for rel in ["report/fits.csv", "report/summary.md", "metrics/human.csv", "metrics/policy.csv", "policy/policy.json"] {
        assert!(before.contains_key(Path::new(rel)), "missing {rel}");
    }
}

fn first_demo(dir: &Path) -> PathBuf {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .min()
        .unwrap()
}

#[test]
fn tampered_generated_demo_is_regenerated() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(quick(dir.path())).unwrap();
    pipeline.all().unwrap();
    let before = snapshot(dir.path());
    let demo = first_demo(&pipeline.generated_demo_dir());
    fs::write(&demo, "{}").unwrap();
    let outcomes = pipeline.all().unwrap();
    assert_eq!(outcomes[0].stage, "gen");
    assert_eq!(outcomes[0].status, StageStatus::Ran);
    // regenerated content is identical, so later stages stay cached
    assert!(outcomes[1..].iter().all(|o| o.status == StageStatus::Cached));
    assert_eq!(before, snapshot(dir.path()));
}

#[test]
fn editing_an_external_demo_reruns_downstream_stages() {
    let source = tempfile::tempdir().unwrap();
    let producer = Pipeline::new(quick(source.path())).unwrap();
    producer.gen().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(dir.path());
    cfg.demo_dir = Some(producer.generated_demo_dir());
    let pipeline = Pipeline::new(cfg).unwrap();
    pipeline.all().unwrap();

    let demo = first_demo(&producer.generated_demo_dir());
    let text = fs::read_to_string(&demo).unwrap();
    fs::write(&demo, format!("{text}\n")).unwrap();
    let outcomes = pipeline.all().unwrap();
    let status: BTreeMap<_, _> = outcomes.iter().map(|o| (o.stage, o.status)).collect();
    for stage in ["metrics", "train", "rollout"] {
        assert_eq!(status[stage], StageStatus::Ran, "{stage}");
    }
    // a whitespace edit leaves the metric tables byte-identical
    assert_eq!(status["analyze"], StageStatus::Cached);
}

#[test]
fn artifacts_do_not_depend_on_the_output_location() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    Pipeline::new(quick(a.path())).unwrap().all().unwrap();
    Pipeline::new(quick(b.path())).unwrap().all().unwrap();
    assert_eq!(snapshot(a.path()), snapshot(b.path()));
}

#[test]
fn analysis_runs_on_human_data_alone() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(quick(dir.path())).unwrap();
    pipeline.gen().unwrap();
    pipeline.metrics().unwrap();
    let report = pipeline.analyze().unwrap();
    assert!(report.policy.is_none() && report.comparison.is_none());
    assert!(report.human.unwrap().fitts.is_ok());
    let summary = fs::read_to_string(dir.path().join("report/summary.md")).unwrap();
    assert!(summary.contains("Comparison absent"));
    assert!(dir.path().join("report/fitts_human.svg").exists());
    assert!(!dir.path().join("report/fitts_policy.svg").exists());
    let fits = fs::read_to_string(dir.path().join("report/fits.csv")).unwrap();
    assert!(fits.lines().filter(|l| !l.starts_with('#')).skip(1).all(|l| l.starts_with("human,")));
}

#[test]
fn analysis_without_metrics_is_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(quick(dir.path())).unwrap();
    assert!(matches!(pipeline.analyze(), Err(Error::MissingInput(_))));
}

#[test]
fn foreign_policy_schema_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(quick(dir.path())).unwrap();
    pipeline.gen().unwrap();
    pipeline.train().unwrap();
    let path = pipeline.policy_path();
    let text = fs::read_to_string(&path).unwrap().replace("\"policy-v1\"", "\"policy-v0\"");
    fs::write(&path, text).unwrap();
    assert!(matches!(pipeline.rollout(), Err(Error::SchemaMismatch { .. })));
}

#[test]
fn paper_replica_keeps_ninety_nine_demonstrations() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(dir.path());
    cfg.generator.trials_per_condition = 25;
    cfg.generator.paper_replica = true;
    let pipeline = Pipeline::new(cfg).unwrap();
    pipeline.gen().unwrap();
    let demos = fs::read_dir(pipeline.generated_demo_dir())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "json"))
        .count();
    assert_eq!(demos, 99);
    pipeline.metrics().unwrap();
    let human = fitts_bench::trajectory::read_metrics_csv(&pipeline.human_metrics_path()).unwrap();
    assert_eq!(human.len(), 99);
}

#[test]
fn external_demo_directory_skips_generation() {
    let source = tempfile::tempdir().unwrap();
    let producer = Pipeline::new(quick(source.path())).unwrap();
    producer.gen().unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(dir.path());
    cfg.demo_dir = Some(producer.generated_demo_dir());
    let pipeline = Pipeline::new(cfg).unwrap();
    let outcomes = pipeline.all().unwrap();
    assert!(outcomes.iter().all(|o| o.stage != "gen"));
    assert!(!dir.path().join("demos").exists());
    assert!(pipeline.policy_metrics_path().exists());
}
