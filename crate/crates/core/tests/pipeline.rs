use std::fs;
use std::path::{Path, PathBuf};

use ertl_core::config::{DomainInput, PipelineConfig};
use ertl_core::dataset_io::BlockConfig;
use ertl_core::pipeline::{encode_relations, load_run_metrics, run_pipeline, RelationInput, MANIFEST_FILE};
use ertl_core::report::Summary;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn config(scenario: &str, out: &Path, extra: &str) -> PipelineConfig {
    let text = format!(
        r#"
        seed = 11
        scenario = "{scenario}"
        out = {out:?}
        encode.embeddings = {emb:?}
        target.left = {a:?}
        target.right = {b:?}
        target.labels = {t:?}
        {extra}
        "#,
        out = out.display().to_string(),
        emb = fixture("embeddings_200x16.txt").display().to_string(),
        a = fixture("pubs_a.csv").display().to_string(),
        b = fixture("pubs_b.csv").display().to_string(),
        t = fixture("pubs_truth.csv").display().to_string(),
    );
    PipelineConfig::from_toml_str(&text).unwrap()
}

fn with_source(extra: &str) -> String {
    format!(
        "source.pubs.left = {:?}\nsource.pubs.right = {:?}\nsource.pubs.labels = {:?}\n{extra}",
        fixture("pubs_a.csv").display().to_string(),
        fixture("pubs_b.csv").display().to_string(),
        fixture("pubs_truth.csv").display().to_string(),
    )
}

#[test]
fn target_only_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = config("not", &out, "target.label_fraction = 0.5");
    let run = run_pipeline::<f64>(&cfg).unwrap();
    for f in ["model.txt", "training.json", "metrics.json", "report.json", "report.txt", MANIFEST_FILE] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let metrics = load_run_metrics(&out).unwrap();
    assert!(metrics.evaluated_pairs > 0);
    let f1 = metrics.models["not"].f1;
    assert!((0.0..=1.0).contains(&f1));
    let text = fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(Summary::parse_text(&text).unwrap(), run.summary);
    assert_eq!(run.summary.delta_vs_not, Some(0.0));
}

#[test]
fn rerun_from_manifest_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    run_pipeline::<f64>(&config("not", &first, "target.label_fraction = 0.3")).unwrap();
    let mut again = PipelineConfig::load(Some(&first.join(MANIFEST_FILE)), []).unwrap();
    let second = dir.path().join("b");
    again.out = Some(second.clone());
    run_pipeline::<f64>(&again).unwrap();
    for f in ["model.txt", "training.json", "metrics.json", "report.json", "report.txt"] {
        assert_eq!(
            fs::read(first.join(f)).unwrap(),
            fs::read(second.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn unlabeled_target_scenario_rejects_target_labels_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = config("s1", &out, &with_source("target.label_fraction = 0.1"));
    let err = run_pipeline::<f64>(&cfg).unwrap_err().to_string();
    assert!(err.contains("validate"), "{err}");
    assert!(err.contains("label_fraction"), "{err}");
    assert!(!out.exists());
}

#[test]
fn missing_seed_is_a_config_error() {
    let err = PipelineConfig::from_toml_str("scenario = \"not\"\nout = \"x\"")
        .unwrap()
        .validate()
        .unwrap_err()
        .to_string();
    assert!(err.contains("seed"), "{err}");
}

#[test]
fn corrupted_input_fails_in_encode() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, b"id,title\np00,caf\xff\xfe\n").unwrap();
    let mut cfg = config("not", &dir.path().join("run"), "target.label_fraction = 0.5");
    cfg.target.left = Some(bad);
    let err = run_pipeline::<f64>(&cfg).unwrap_err().to_string();
    assert!(err.contains("encode"), "{err}");
}

fn encode_fixture() -> Vec<ertl_core::encoder::EncodedPair<f64>> {
    let domain = DomainInput {
        left: Some(fixture("pubs_a.csv")),
        right: Some(fixture("pubs_b.csv")),
        labels: Some(fixture("pubs_truth.csv")),
        ..DomainInput::default()
    };
    let input = RelationInput::load("pubs", &domain).unwrap();
    let cfg = PipelineConfig::default();
    let emb = fixture("embeddings_200x16.txt");
    let mut out = encode_relations(&[input], &emb, &cfg.encode, &BlockConfig::from(&cfg.block)).unwrap();
    out.pop().unwrap()
}

#[test]
fn duplicates_encode_closer_than_non_duplicates() {
    let pairs = encode_fixture();
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mean = |y: u8| {
        let v: Vec<f64> = pairs.iter().filter(|p| p.label == Some(y)).map(|p| norm(&p.x)).collect();
        assert!(!v.is_empty());
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(1) < mean(0), "dup {} vs non-dup {}", mean(1), mean(0));
}

#[test]
fn encoding_is_bitwise_deterministic() {
    let a = encode_fixture();
    let b = encode_fixture();
    assert_eq!(a.len(), b.len());
    for (p, q) in a.iter().zip(&b) {
        assert_eq!((&p.left_id, &p.right_id, p.label), (&q.left_id, &q.right_id, q.label));
        assert!(p.x.iter().zip(&q.x).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}
