use std::path::Path;
use std::process::Command;

use labelprop::pipeline::{
    cmd_label, cmd_synth, cmd_train, evaluate_labels, label_proposals, load_predictor, perturb_proposals, AnnotationSet,
    PipelineConfig,
};
use labelprop::savings::TimeModel;
use labelprop::store::{EmbeddingStore, Split};
use labelprop::Error;

const SMALL: &str = r#"
seed = 4

[synth]
num_classes = 4
dim = 8
cluster_sigma = 0.4

[synth.samples_per_class_per_split]
representative = 3
train = 12
validation = 6

[head]
p = 8
m = 2

[train]
epochs = 20
learning_rate = 0.01
"#;

fn small_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::from_toml(SMALL).unwrap();
    cfg.paths.output = out.to_path_buf();
    cfg
}

fn trained(out: &Path) -> (PipelineConfig, EmbeddingStore) {
    let cfg = small_config(out);
    cmd_synth(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    let store = EmbeddingStore::load(cfg.store_path()).unwrap();
    (cfg, store)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_labelprop"))
}

fn run_cli(args: &[&str], config: &Path, out: &Path) -> std::process::Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn cli_chain_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("cfg.toml");
    std::fs::write(&config, SMALL).unwrap();
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        for cmd in [&["synth"][..], &["train"], &["label"], &["eval"]] {
            let o = run_cli(cmd, &config, &out);
            assert!(o.status.success(), "{cmd:?}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let o = run_cli(&["perturb", "--drop-rate", "0.5"], &config, &out);
        assert!(o.status.success());
        runs.push(files(&out));
    }
    assert_eq!(runs[0], runs[1]);
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    for expected in ["store.jsonl", "labeled.json", "eval.json", "savings.json", "perturbed.json", "heads/ensemble.json"] {
        assert!(names.contains(&expected), "missing {expected} in {names:?}");
    }
    let perturbed = AnnotationSet::load(tmp.path().join("a/perturbed.json")).unwrap();
    assert_eq!(perturbed.annotations.len(), 12);
}

#[test]
fn cli_errors_are_one_json_line_and_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    std::fs::write(&config, "[split_fractions]\nrepresentative = 0.5\ntrain = 0.4\nvalidation = 0.3\n").unwrap();
    let o = run_cli(&["synth"], &config, tmp.path());
    assert!(!o.status.success());
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    let v: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(v["error"], "config");

    let o = run_cli(&["label"], &config, &tmp.path().join("missing"));
    assert!(!o.status.success());

    let o = bin().args(["train", "--bogus"]).output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn help_documents_every_override() {
    for sub in ["synth", "train", "label", "eval", "perturb", "report-savings"] {
        let o = bin().args([sub, "--help"]).output().unwrap();
        let text = String::from_utf8(o.stdout).unwrap();
        for flag in ["--config", "--seed", "--spaces", "--drop-rate", "--out"] {
            assert!(text.contains(flag), "{sub} --help lacks {flag}");
        }
    }
}

#[test]
fn report_savings_reads_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let counts = tmp.path().join("counts.json");
    std::fs::write(
        &counts,
        r#"{"Simple":{"retrieved":2850,"ground_truth_total":4065},"Medium":{"retrieved":2425,"ground_truth_total":3203},"Complex":{"retrieved":179,"ground_truth_total":732}}"#,
    )
    .unwrap();
    let o = bin()
        .args(["report-savings", "--name", "Bonn", "--counts"])
        .arg(&counts)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("Bonn") && text.contains("67.5%") && text.contains("(5:18:27)"), "{text}");
    assert!(tmp.path().join("savings.json").exists());
}

#[test]
fn labeling_passes_images_and_geometry_through() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, store) = trained(tmp.path());
    let mut proposals = AnnotationSet::load(cfg.output("proposals.json")).unwrap();
    for (i, a) in proposals.annotations.iter_mut().enumerate() {
        a.geometry = serde_json::json!({ "polygon": [[i, 0], [i + 1, 2]], "note": format!("p{i}") });
    }
    let labeled = cmd_label(&cfg, &proposals, &store).unwrap();
    assert_eq!(serde_json::to_vec(&labeled.images).unwrap(), serde_json::to_vec(&proposals.images).unwrap());
    for (a, b) in labeled.annotations.iter().zip(&proposals.annotations) {
        assert_eq!(serde_json::to_vec(&a.geometry).unwrap(), serde_json::to_vec(&b.geometry).unwrap());
        assert_eq!((&a.id, &a.image_id), (&b.id, &b.image_id));
        assert!(a.class_id.is_some() && a.confidence.is_some());
    }

    let mut empty = proposals.clone();
    empty.annotations.clear();
    assert!(cmd_label(&cfg, &empty, &store).unwrap().annotations.is_empty());

    let mut stray = proposals.clone();
    stray.annotations[0].id = "nowhere".into();
    assert!(matches!(cmd_label(&cfg, &stray, &store), Err(Error::MissingEmbedding { .. })));
}

#[test]
fn representatives_retrieve_their_own_class() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, store) = trained(tmp.path());
    let reps = AnnotationSet::from_store(&store, Split::Representative, false).unwrap();
    let labeled = cmd_label(&cfg, &reps, &store).unwrap();
    let c = store.registry().len() as f64;
    for a in &labeled.annotations {
        assert_eq!(a.class_id, store.class_of(&a.id), "{}", a.id);
        assert!(a.confidence.unwrap() > 1.0 / c);
    }
}

#[test]
fn single_head_equals_an_ensemble_of_one() {
    let tmp = tempfile::tempdir().unwrap();
    let (mut cfg, store) = trained(tmp.path());
    let proposals = AnnotationSet::load(cfg.output("proposals.json")).unwrap();
    cfg.ensemble = false;
    let single = cmd_label(&cfg, &proposals, &store).unwrap();
    cfg.ensemble = true;
    cfg.spaces = Some(vec!["space_a".into()]);
    let one = cmd_label(&cfg, &proposals, &store).unwrap();
    assert_eq!(single, one);
    let predictor = load_predictor(&cfg, &store).unwrap();
    assert_eq!(predictor.heads().len(), 1);
    assert_eq!(label_proposals(&predictor, &proposals, &store).unwrap(), one);
}

#[test]
fn truth_as_labels_scores_perfectly_and_drops_never_raise_retrieval() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, store) = trained(tmp.path());
    let truth = AnnotationSet::load(cfg.output("truth.json")).unwrap();
    let tm = TimeModel::default();
    let perfect = evaluate_labels(&truth, &truth, store.registry(), &tm).unwrap();
    assert_eq!(perfect.eval.overall.accuracy, 1.0);
    assert!((perfect.savings.percent_saved - 100.0).abs() < 1e-9);

    let proposals = AnnotationSet::load(cfg.output("proposals.json")).unwrap();
    let mut last = u64::MAX;
    for rate in [0.0, 0.25, 0.5] {
        let kept = perturb_proposals(&proposals, rate, cfg.seed).unwrap();
        let labeled = cmd_label(&cfg, &kept, &store).unwrap();
        let outcome = evaluate_labels(&labeled, &truth, store.registry(), &tm).unwrap();
        let retrieved: u64 = outcome.counts.rows.values().map(|r| r.retrieved).sum();
        assert!(retrieved <= last, "rate {rate}: {retrieved} > {last}");
        last = retrieved;
    }

    let mut stray = truth.clone();
    stray.annotations[0].id = "ghost".into();
    assert!(matches!(evaluate_labels(&stray, &truth, store.registry(), &tm), Err(Error::Join(ids)) if ids == ["ghost"]));
}

#[test]
fn perturbation_is_seeded_and_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path());
    cfg.synth.samples_per_class_per_split.insert(Split::Validation, 25);
    cmd_synth(&cfg).unwrap();
    let proposals = AnnotationSet::load(cfg.output("proposals.json")).unwrap();
    assert_eq!(proposals.annotations.len(), 100);
    let a = perturb_proposals(&proposals, 0.5, 9).unwrap();
    let b = perturb_proposals(&proposals, 0.5, 9).unwrap();
    assert_eq!(a.annotations.len(), 50);
    assert_eq!(a, b);
    assert_ne!(a, perturb_proposals(&proposals, 0.5, 10).unwrap());
    assert!(perturb_proposals(&proposals, 1.5, 9).is_err());
}

#[test]
fn sample_config_spells_out_the_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/pipeline.toml");
    assert_eq!(PipelineConfig::load(path).unwrap(), PipelineConfig::default());
}
