//! End-to-end flow: synthetic store, per-space training, labeling of
//! proposals, evaluation and savings. Proposals join to embeddings by id.

mod annotations;
mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use annotations::{perturb_proposals, relabel_noise, Annotation, AnnotationSet, ImageEntry, ANNOTATION_FORMAT};
pub use config::{Paths, PerturbConfig, PipelineConfig};

use crate::ensemble::{EnsembleManifest, EnsemblePredictor, ManifestEntry};
use crate::error::{Error, Result};
use crate::eval::{evaluate, render_complexity_table, render_summary_table, EvalReport, Prediction};
use crate::hopfield::{train_head, HopfieldHead, TrainReport};
use crate::savings::{compute_savings, count_retrieved, render_savings_table, RetrievalCounts, SavingsReport, TimeModel};
use crate::scores::ScoreVector;
use crate::store::{ClassRegistry, EmbeddingStore, Split};
use crate::synth::synth_generate;

pub const MANIFEST_FILE: &str = "ensemble.json";

use crate::fsutil::write_text;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSummary {
    pub checksum: String,
    pub classes: usize,
    pub spaces: BTreeMap<String, usize>,
    pub records: usize,
    pub splits: BTreeMap<Split, usize>,
}

impl StoreSummary {
    pub fn of(store: &EmbeddingStore) -> Self {
        Self {
            checksum: store.checksum(),
            classes: store.registry().len(),
            spaces: store.spaces().iter().map(|(k, s)| (k.clone(), s.dim())).collect(),
            records: store.num_records(),
            splits: store.splits().iter().map(|(&k, v)| (k, v.len())).collect(),
        }
    }
}

/// Generates the store plus ground-truth and class-agnostic proposal sets for
/// the configured label split.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<StoreSummary> {
    cfg.validate()?;
    let mut store = synth_generate(&cfg.synth_config())?;
    if let Some(fr) = &cfg.split_fractions {
        store = store.split_assign(fr, cfg.seed)?;
    }
    ensure_dir(&cfg.paths.output)?;
    let store_path = cfg.store_path();
    if let Some(dir) = store_path.parent() {
        ensure_dir(dir)?;
    }
    store.save(&store_path)?;
    AnnotationSet::from_store(&store, cfg.label_split, true)?.save(cfg.output("truth.json"))?;
    AnnotationSet::from_store(&store, cfg.label_split, false)?.save(cfg.output("proposals.json"))?;
    Ok(StoreSummary::of(&store))
}

fn resolve_spaces(cfg: &PipelineConfig, store: &EmbeddingStore) -> Result<Vec<String>> {
    let spaces: Vec<String> = match &cfg.spaces {
        Some(s) => s.clone(),
        None => store.spaces().keys().cloned().collect(),
    };
    for s in &spaces {
        store.space(s)?;
    }
    let unique: BTreeSet<&String> = spaces.iter().collect();
    if unique.len() != spaces.len() {
        return Err(Error::Config("spaces listed more than once".into()));
    }
    Ok(spaces)
}

/// Trains one head per space on the train split. Heads run on separate
/// threads; results are collected in space order.
pub fn train_all(cfg: &PipelineConfig, store: &EmbeddingStore) -> Result<Vec<(HopfieldHead, TrainReport)>> {
    let spaces = resolve_spaces(cfg, store)?;
    for split in [Split::Representative, Split::Train] {
        if store.split(split).is_empty() {
            return Err(Error::EmptySplit(split.to_string()));
        }
    }
    let head_cfg = cfg.head_config();
    let hp = cfg.hyperparams();
    std::thread::scope(|scope| {
        let handles: Vec<_> = spaces
            .iter()
            .map(|space| {
                let (head_cfg, hp) = (&head_cfg, &hp);
                scope.spawn(move || {
                    let head = HopfieldHead::init(store, space, head_cfg)?;
                    train_head(&head, store, Split::Train, hp)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    })
}

/// Writes `<heads>/<space>.json`, `<heads>/ensemble.json` and
/// `<output>/reports/<space>.train.json`.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<Vec<TrainReport>> {
    cfg.validate()?;
    let store = EmbeddingStore::load(cfg.store_path())?;
    let trained = train_all(cfg, &store)?;
    let heads_dir = cfg.heads_dir();
    ensure_dir(&heads_dir)?;
    let mut entries = Vec::new();
    let mut reports = Vec::new();
    for (head, report) in trained {
        let file = PathBuf::from(format!("{}.json", head.space));
        head.save(heads_dir.join(&file))?;
        write_json(&cfg.output(&format!("reports/{}.train.json", head.space)), &report)?;
        log::info!(
            "{}: train accuracy {:.4}, loss {:.5} -> {:.5} in {:?}",
            head.space,
            report.last().train_accuracy,
            report.initial.loss.total,
            report.last().loss.total,
            report.wall_time
        );
        entries.push(ManifestEntry {
            space: head.space.clone(),
            path: file,
        });
        reports.push(report);
    }
    EnsembleManifest::new(store.registry(), entries).save(heads_dir.join(MANIFEST_FILE))?;
    Ok(reports)
}

/// Loads the trained predictor; with `ensemble = false` only the first space is used.
pub fn load_predictor(cfg: &PipelineConfig, store: &EmbeddingStore) -> Result<EnsemblePredictor> {
    let manifest_path = cfg.heads_dir().join(MANIFEST_FILE);
    let manifest = EnsembleManifest::load(&manifest_path)?;
    let mut spaces = match &cfg.spaces {
        Some(s) => s.clone(),
        None => manifest.heads.iter().map(|h| h.space.clone()).collect(),
    };
    if !cfg.ensemble {
        spaces.truncate(1);
    }
    manifest.load_predictor(&manifest_path, store.registry().clone(), Some(&spaces))
}

/// Fills `class_id`, `confidence` and `scores` for every proposal. Geometry
/// and images pass through untouched.
pub fn label_proposals(
    predictor: &EnsemblePredictor,
    proposals: &AnnotationSet,
    store: &EmbeddingStore,
) -> Result<AnnotationSet> {
    let mut out = proposals.clone();
    out.categories = store.registry().classes().to_vec();
    for a in out.annotations.iter_mut() {
        let scores = predictor.predict_with(|space| {
            store
                .space(space)
                .ok()
                .and_then(|s| s.get(&a.id))
                .map(|r| r.vector.as_slice())
        });
        let scores = match scores {
            Err(Error::UnknownSpace(space)) => {
                return Err(Error::MissingEmbedding {
                    id: a.id.clone(),
                    space,
                })
            }
            other => other?,
        };
        a.class_id = Some(scores.predicted());
        a.confidence = Some(scores.confidence());
        a.scores = Some(scores.0);
    }
    Ok(out)
}

pub fn cmd_label(cfg: &PipelineConfig, proposals: &AnnotationSet, store: &EmbeddingStore) -> Result<AnnotationSet> {
    let predictor = load_predictor(cfg, store)?;
    label_proposals(&predictor, proposals, store)
}

/// Applies the configured drop rate and relabel noise.
pub fn cmd_perturb(cfg: &PipelineConfig, input: &AnnotationSet) -> Result<AnnotationSet> {
    let dropped = perturb_proposals(input, cfg.perturb.drop_rate, cfg.seed)?;
    if cfg.perturb.relabel_noise > 0.0 {
        relabel_noise(&dropped, cfg.perturb.relabel_noise, cfg.seed)
    } else {
        Ok(dropped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub eval: EvalReport,
    pub counts: RetrievalCounts,
    pub savings: SavingsReport,
}

/// Joins labeled proposals to ground truth by id. Ground-truth totals count
/// every truth annotation, including ones no proposal covered.
pub fn evaluate_labels(
    labeled: &AnnotationSet,
    truth: &AnnotationSet,
    registry: &ClassRegistry,
    tm: &TimeModel,
) -> Result<EvalOutcome> {
    let truth_by_id: BTreeMap<&str, &Annotation> = truth.annotations.iter().map(|a| (a.id.as_str(), a)).collect();
    let complexity_of = |a: &Annotation| -> Result<_> {
        let class = a.class_id.ok_or_else(|| Error::UnknownClass(format!("none (truth `{}`)", a.id)))?;
        a.complexity
            .or(registry.complexity(class))
            .map(|c| (class, c))
            .ok_or_else(|| Error::UnknownClass(format!("{class} (truth `{}`)", a.id)))
    };

    let unmatched: Vec<String> = labeled
        .annotations
        .iter()
        .filter(|a| !truth_by_id.contains_key(a.id.as_str()))
        .map(|a| a.id.clone())
        .collect();
    if !unmatched.is_empty() {
        return Err(Error::Join(unmatched));
    }

    let num_classes = registry.len();
    let mut preds = Vec::with_capacity(labeled.annotations.len());
    for a in &labeled.annotations {
        let (truth_class, complexity) = complexity_of(truth_by_id[a.id.as_str()])?;
        let predicted = a
            .class_id
            .ok_or_else(|| Error::Config(format!("annotation `{}` carries no label", a.id)))?;
        let scores = match &a.scores {
            Some(s) if s.len() != num_classes => {
                return Err(Error::Shape {
                    expected: num_classes,
                    got: s.len(),
                })
            }
            Some(s) if ScoreVector(s.clone()).predicted() == predicted => s.clone(),
            // No scores, or a label edited after scoring: rank by the label alone.
            _ => {
                let mut s = vec![0.0; num_classes];
                s[predicted] = a.confidence.filter(|c| *c > 0.0).unwrap_or(1.0);
                s
            }
        };
        let p = Prediction::new(a.id.clone(), ScoreVector(scores), truth_class, Some(complexity));
        preds.push(p);
    }
    if preds.is_empty() {
        return Err(Error::EmptyPredictions);
    }

    let eval = evaluate(&preds, registry)?;
    let mut counts = count_retrieved(&preds)?;
    for row in counts.rows.values_mut() {
        row.ground_truth_total = 0;
    }
    for a in &truth.annotations {
        let (_, c) = complexity_of(a)?;
        counts.rows.entry(c).or_default().ground_truth_total += 1;
    }
    let savings = compute_savings(&counts, tm)?;
    Ok(EvalOutcome { eval, counts, savings })
}

/// Writes `eval.json`, `eval.txt`, `savings.json` and `savings.txt` to the output directory.
pub fn cmd_eval(
    cfg: &PipelineConfig,
    labeled: &AnnotationSet,
    truth: &AnnotationSet,
    registry: &ClassRegistry,
) -> Result<EvalOutcome> {
    let outcome = evaluate_labels(labeled, truth, registry, &cfg.time_model)?;
    let name = if cfg.ensemble { "Ensemble" } else { "Head" };
    let text = format!(
        "{}\n{}",
        render_summary_table(&[(name, &outcome.eval)]),
        render_complexity_table(&[(name, &outcome.eval)])
    );
    write_json(&cfg.output("eval.json"), &outcome.eval)?;
    write_text(cfg.output("eval.txt"), &text)?;
    write_json(&cfg.output("savings.json"), &outcome.savings)?;
    write_text(
        cfg.output("savings.txt"),
        &render_savings_table(&[("synthetic", &outcome.savings)]),
    )?;
    Ok(outcome)
}

/// Savings for externally supplied counts.
pub fn cmd_report_savings(name: &str, counts: &RetrievalCounts, tm: &TimeModel) -> Result<(SavingsReport, String)> {
    let report = compute_savings(counts, tm)?;
    let text = render_savings_table(&[(name, &report)]);
    Ok((report, text))
}

/// The whole chain in one call: synth, train, label the configured split, evaluate.
pub fn run_all(cfg: &PipelineConfig) -> Result<EvalOutcome> {
    cmd_synth(cfg)?;
    cmd_train(cfg)?;
    let store = EmbeddingStore::load(cfg.store_path())?;
    let proposals = AnnotationSet::load(cfg.output("proposals.json"))?;
    let proposals = cmd_perturb(cfg, &proposals)?;
    let labeled = cmd_label(cfg, &proposals, &store)?;
    labeled.save(cfg.output("labeled.json"))?;
    let truth = AnnotationSet::load(cfg.output("truth.json"))?;
    cmd_eval(cfg, &labeled, &truth, store.registry())
}
