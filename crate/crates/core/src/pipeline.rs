//! End-to-end runs: encode, split, train, evaluate, estimate, write.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::config::{DomainInput, EncodeSection, PipelineConfig};
use crate::dataset_io::{
    block, block_self, load_dataset, load_labels, BlockConfig, DatasetHandle, LabeledPair, LabeledPairs,
};
use crate::embedding::{estimate_frequencies, load_embeddings, resolve_vocabulary};
use crate::encoder::{attach_labels, encode_dataset, read_pairs, EncodeOptions, EncodedPair};
use crate::error::{Error, Result};
use crate::eval::{estimate_performance, Confusion, FileOracle, MetricsReport, PerformanceEstimate};
use crate::learners::LearnerKind;
use crate::report::{summarize, Summary};
use crate::scalar::Scalar;
use crate::seed;
use crate::transfer::{train, Scenario, SourceData, TargetData, TrainingReport, TransferModel};

pub const MODEL_FILE: &str = "model.txt";
pub const TRAINING_FILE: &str = "training.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Two relations to block and encode; `right` absent means deduplication.
#[derive(Debug, Clone)]
pub struct RelationInput {
    pub origin: String,
    pub left: DatasetHandle,
    pub right: Option<DatasetHandle>,
    pub labels: Option<LabeledPairs>,
}

impl RelationInput {
    pub fn load(origin: &str, d: &DomainInput) -> Result<Self> {
        let left = d
            .left
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{origin}: left relation not set")))?;
        Ok(Self {
            origin: origin.to_string(),
            left: load_dataset(left, &d.left_id)?,
            right: d.right.as_ref().map(|r| load_dataset(r, &d.right_id)).transpose()?,
            labels: d.labels.as_ref().map(load_labels).transpose()?,
        })
    }
}

/// Blocks and encodes several relation pairs against one embedding store.
/// Token frequencies and out-of-vocabulary vectors come from the pooled
/// corpus of every relation involved.
pub fn encode_relations<F: Scalar>(
    inputs: &[RelationInput],
    embeddings: &Path,
    encode: &EncodeSection,
    blocking: &BlockConfig,
) -> Result<Vec<Vec<EncodedPair<F>>>> {
    let corpora: Vec<Vec<String>> = inputs
        .iter()
        .flat_map(|i| std::iter::once(&i.left).chain(&i.right))
        .flat_map(DatasetHandle::corpus)
        .collect();
    let freqs = estimate_frequencies(&corpora)?;
    let vocabulary: BTreeSet<String> = corpora.iter().flatten().cloned().collect();
    let mut store = load_embeddings::<F>(embeddings, None)?;
    let oov = resolve_vocabulary(&mut store, &vocabulary, &corpora, &freqs, &encode.oov_policy())?;
    log::info!(
        "{} words inferred from context, {} unresolved",
        oov.inferred.len(),
        oov.unresolved.len()
    );
    inputs
        .iter()
        .map(|input| {
            let right = input.right.as_ref().unwrap_or(&input.left);
            let candidates = match &input.right {
                Some(r) => block(&input.left, r, blocking)?,
                None => block_self(&input.left, blocking)?,
            };
            log::info!("{}: {} candidate pairs", input.origin, candidates.len());
            let options = EncodeOptions {
                composition: encode.composition(),
                remove_first_pc: encode.remove_first_pc,
                origin: input.origin.clone(),
            };
            let mut pairs = encode_dataset(&input.left, right, &candidates, &store, &freqs, &options)?;
            if let Some(labels) = &input.labels {
                let hit = attach_labels(&mut pairs, labels);
                log::info!("{}: {hit} of {} labels matched a candidate", input.origin, labels.len());
            }
            Ok(pairs)
        })
        .collect()
}

/// The target after the seeded split.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSplit<F> {
    /// Labeled pairs available for training.
    pub train: Vec<EncodedPair<F>>,
    /// Labels stripped; offered to scenarios that use unlabeled target data.
    pub unlabeled: Vec<EncodedPair<F>>,
    /// Labeled pairs held out for evaluation.
    pub test: Vec<EncodedPair<F>>,
}

fn strip<F: Clone>(p: &EncodedPair<F>) -> EncodedPair<F> {
    let mut p = p.clone();
    p.label = None;
    p
}

fn take_sorted(len: usize, k: usize, rng: &mut seed::Rng) -> Vec<usize> {
    let mut v = index::sample(rng, len, k.min(len)).into_vec();
    v.sort_unstable();
    v
}

/// Shuffles the labeled target pairs; the first `label_fraction` (at least
/// one) train, the rest are held out. The unlabeled pool is every held-out
/// or originally unlabeled pair, subsampled to `unlabeled_fraction`.
pub fn split_target<F: Scalar>(
    pairs: &[EncodedPair<F>],
    label_fraction: Option<f64>,
    unlabeled_fraction: f64,
    rng: &mut seed::Rng,
) -> TargetSplit<F> {
    let mut labeled: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].label.is_some()).collect();
    labeled.shuffle(rng);
    let n_train = label_fraction.map_or(0, |f| {
        ((f * labeled.len() as f64).round() as usize).clamp(1.min(labeled.len()), labeled.len())
    });
    let mut train_idx = labeled[..n_train].to_vec();
    let mut test_idx = labeled[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let in_train: BTreeSet<usize> = train_idx.iter().copied().collect();
    let pool: Vec<usize> = (0..pairs.len()).filter(|i| !in_train.contains(i)).collect();
    let keep = (unlabeled_fraction * pool.len() as f64).round() as usize;
    let unlabeled = take_sorted(pool.len(), keep, rng)
        .into_iter()
        .map(|k| strip(&pairs[pool[k]]))
        .collect();
    TargetSplit {
        train: train_idx.iter().map(|&i| pairs[i].clone()).collect(),
        unlabeled,
        test: test_idx.iter().map(|&i| pairs[i].clone()).collect(),
    }
}

/// Labeled pairs subsampled to `label_fraction`, plus every unlabeled pair.
pub fn split_source<F: Scalar>(
    name: &str,
    pairs: &[EncodedPair<F>],
    label_fraction: Option<f64>,
    rng: &mut seed::Rng,
) -> SourceData<F> {
    let labeled: Vec<&EncodedPair<F>> = pairs.iter().filter(|p| p.label.is_some()).collect();
    let keep = label_fraction.map_or(labeled.len(), |f| {
        ((f * labeled.len() as f64).round() as usize).max(1.min(labeled.len()))
    });
    SourceData {
        name: name.to_string(),
        labeled: take_sorted(labeled.len(), keep, rng)
            .into_iter()
            .map(|k| labeled[k].clone())
            .collect(),
        unlabeled: pairs.iter().filter(|p| p.label.is_none()).cloned().collect(),
    }
}

/// Metrics of the configured model and the baselines on held-out pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: Scenario,
    pub learner: LearnerKind,
    pub threshold: f64,
    pub evaluated_pairs: usize,
    /// Keyed by scenario name.
    pub models: BTreeMap<String, MetricsReport>,
    pub estimate: Option<PerformanceEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub model: TrainingReport,
    pub baselines: BTreeMap<String, TrainingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainCounts {
    pub pairs: usize,
    pub labeled: usize,
}

/// Everything needed to repeat a run: the resolved configuration, the
/// derived stage seeds and the size of every input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: PipelineConfig,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, DomainCounts>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Summary,
}

pub fn evaluate<F: Scalar>(
    model: &TransferModel<F>,
    test: &[EncodedPair<F>],
    threshold: f64,
) -> Result<MetricsReport> {
    let mut c = Confusion::default();
    let t = F::lit(threshold);
    for p in test {
        let truth = p
            .label
            .ok_or_else(|| Error::invalid(format!("pair ({}, {}) has no label", p.left_id, p.right_id)))?;
        c.record(model.predict(&p.x, t)?, truth);
    }
    Ok(MetricsReport::from_confusion(c))
}

fn truth_of<F>(pairs: &[EncodedPair<F>]) -> Result<LabeledPairs> {
    LabeledPairs::new(
        pairs
            .iter()
            .filter_map(|p| {
                p.label.map(|label| LabeledPair {
                    left_id: p.left_id.clone(),
                    right_id: p.right_id.clone(),
                    label,
                })
            })
            .collect(),
    )
}

fn counts<F>(pairs: &[EncodedPair<F>]) -> DomainCounts {
    DomainCounts {
        pairs: pairs.len(),
        labeled: pairs.iter().filter(|p| p.label.is_some()).count(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn absolute(p: &mut Option<PathBuf>) -> Result<()> {
    if let Some(path) = p {
        *path = std::path::absolute(&*path).map_err(|e| Error::io(&*path, e))?;
    }
    Ok(())
}

/// Loads or encodes every domain; the target comes first.
fn load_domains<F: Scalar>(cfg: &PipelineConfig) -> Result<(Vec<EncodedPair<F>>, BTreeMap<String, Vec<EncodedPair<F>>>)> {
    let domains: Vec<(String, &DomainInput)> = std::iter::once(("target".to_string(), &cfg.target))
        .chain(cfg.source.iter().map(|(k, v)| (k.clone(), v)))
        .collect();
    let to_encode: Vec<RelationInput> = domains
        .iter()
        .filter(|(_, d)| d.needs_encoding())
        .map(|(name, d)| RelationInput::load(name, d))
        .collect::<Result<_>>()?;
    let mut encoded = if to_encode.is_empty() {
        Vec::new()
    } else {
        let path = cfg
            .encode
            .embeddings
            .as_ref()
            .ok_or_else(|| Error::Config("encode.embeddings is not set".into()))?;
        encode_relations(&to_encode, path, &cfg.encode, &(&cfg.block).into())?
    }
    .into_iter();
    let mut out = Vec::with_capacity(domains.len());
    for (name, d) in &domains {
        let mut pairs = match &d.pairs {
            Some(p) => read_pairs(p, Some(name))?,
            None => encoded.next().expect("one encoding per relation input"),
        };
        if let (Some(labels), Some(_)) = (&d.labels, &d.pairs) {
            attach_labels(&mut pairs, &load_labels(labels)?);
        }
        out.push((name.clone(), pairs));
    }
    let mut it = out.into_iter();
    let (_, target) = it.next().expect("target is always present");
    Ok((target, it.collect()))
}

/// Validates the configuration, then runs every stage and writes the
/// artifacts to `cfg.out`. Any stage failure is reported with its name.
pub fn run_pipeline<F: Scalar>(cfg: &PipelineConfig) -> Result<RunArtifacts> {
    cfg.validate().map_err(|e| e.in_stage("validate"))?;
    let scenario = cfg.scenario()?;
    let master = cfg.seed()?;
    let out = cfg.out.clone().expect("validated");

    let (target_pairs, source_pairs) = load_domains::<F>(cfg).map_err(|e| e.in_stage("encode"))?;

    let split_seed = seed::derive_seed(master, "split");
    let (split, sources) = (|| -> Result<_> {
        let mut rng = seed::rng(split_seed);
        let split = split_target(
            &target_pairs,
            cfg.target.label_fraction,
            cfg.target.unlabeled_fraction,
            &mut rng,
        );
        if scenario.uses_target_labels() && split.train.is_empty() {
            return Err(Error::invalid("target has no labeled pairs"));
        }
        let sources: Vec<SourceData<F>> = source_pairs
            .iter()
            .map(|(name, pairs)| {
                let mut r = seed::rng(seed::derive_seed(split_seed, name));
                split_source(name, pairs, cfg.source[name].label_fraction, &mut r)
            })
            .collect();
        Ok((split, sources))
    })()
    .map_err(|e| e.in_stage("split"))?;

    let target_for = |s: Scenario| TargetData {
        labeled: if s.uses_target_labels() {
            split.train.clone()
        } else {
            Vec::new()
        },
        unlabeled: if matches!(s, Scenario::AdequateNothing | Scenario::LimitedLimited) {
            split.unlabeled.clone()
        } else {
            Vec::new()
        },
    };
    let train_one = |s: Scenario| -> Result<(TransferModel<F>, TrainingReport)> {
        let t = train(&cfg.scenario_config(s)?, &sources, &target_for(s))?;
        Ok((t.model, t.report))
    };
    let (main, baselines) = (|| -> Result<_> {
        let main = train_one(scenario)?;
        let mut baselines = BTreeMap::new();
        if cfg.baselines {
            if scenario != Scenario::NoT && !split.train.is_empty() {
                baselines.insert(Scenario::NoT, train_one(Scenario::NoT)?);
            }
            if scenario != Scenario::NvT && !sources.is_empty() {
                baselines.insert(Scenario::NvT, train_one(Scenario::NvT)?);
            }
        }
        Ok((main, baselines))
    })()
    .map_err(|e| e.in_stage("train"))?;

    let mut models = BTreeMap::new();
    if split.test.is_empty() {
        log::warn!("no held-out labeled target pairs; skipping evaluation");
    } else {
        (|| -> Result<()> {
            models.insert(scenario.name().to_string(), evaluate(&main.0, &split.test, cfg.threshold)?);
            for (s, (m, _)) in &baselines {
                models.insert(s.name().to_string(), evaluate(m, &split.test, cfg.threshold)?);
            }
            Ok(())
        })()
        .map_err(|e| e.in_stage("evaluate"))?;
    }

    let estimate = match cfg.estimate_config()? {
        Some(ecfg) if !split.test.is_empty() => Some(
            (|| -> Result<PerformanceEstimate> {
                let mut oracle = FileOracle::new(&truth_of(&split.test)?);
                estimate_performance(&main.0, &split.test, &mut oracle, &ecfg)
            })()
            .map_err(|e| e.in_stage("estimate"))?,
        ),
        Some(_) => {
            log::warn!("no held-out labeled target pairs; skipping estimation");
            None
        }
        None => None,
    };

    let metrics = RunMetrics {
        scenario,
        learner: cfg.learner.kind,
        threshold: cfg.threshold,
        evaluated_pairs: split.test.len(),
        models,
        estimate,
    };
    let summary = summarize(&metrics);
    let training = TrainingSummary {
        model: main.1.clone(),
        baselines: baselines
            .iter()
            .map(|(s, (_, r))| (s.name().to_string(), r.clone()))
            .collect(),
    };
    let mut seeds: BTreeMap<String, u64> = main.1.seeds.clone();
    seeds.insert("master".into(), master);
    seeds.insert("split".into(), split_seed);
    if let Some(e) = cfg.estimate_config()? {
        seeds.insert("estimate".into(), e.seed);
    }
    let mut config = cfg.clone();
    let mut inputs = BTreeMap::from([("target".to_string(), counts(&target_pairs))]);
    inputs.extend(source_pairs.iter().map(|(k, v)| (format!("source.{k}"), counts(v))));

    let files = (|| -> Result<Vec<PathBuf>> {
        absolute(&mut config.encode.embeddings)?;
        for d in std::iter::once(&mut config.target).chain(config.source.values_mut()) {
            for p in [&mut d.pairs, &mut d.left, &mut d.right, &mut d.labels] {
                absolute(p)?;
            }
        }
        absolute(&mut config.out)?;
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            inputs,
        };
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let contents = [
            (MODEL_FILE, main.0.to_text()?),
            (TRAINING_FILE, json(&training)?),
            (METRICS_FILE, json(&metrics)?),
            (REPORT_JSON, json(&summary)?),
            (REPORT_TEXT, summary.to_text()),
            (MANIFEST_FILE, json(&manifest)?),
        ];
        contents
            .iter()
            .map(|(name, text)| {
                let path = out.join(name);
                write_file(&path, text)?;
                Ok(path)
            })
            .collect()
    })()
    .map_err(|e| e.in_stage("write"))?;

    Ok(RunArtifacts { out, files, summary })
}

/// Reads the metrics of a finished run.
pub fn load_run_metrics(run_dir: &Path) -> Result<RunMetrics> {
    let path = run_dir.join(METRICS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(n: usize, labeled: usize) -> Vec<EncodedPair<f64>> {
        (0..n)
            .map(|i| {
                let p = EncodedPair::new(format!("l{i}"), format!("r{i}"), vec![i as f64]);
                if i < labeled {
                    p.with_label(u8::from(i % 4 == 0))
                } else {
                    p
                }
            })
            .collect()
    }

    #[test]
    fn target_split_partitions() {
        let p = pairs(100, 80);
        let s = split_target(&p, Some(0.1), 1.0, &mut seed::rng(1));
        assert_eq!(s.train.len(), 8);
        assert_eq!(s.test.len(), 72);
        assert_eq!(s.unlabeled.len(), 92);
        assert!(s.unlabeled.iter().all(|p| p.label.is_none()));
        let train_ids: BTreeSet<&str> = s.train.iter().map(|p| p.left_id.as_str()).collect();
        assert!(s.test.iter().all(|p| !train_ids.contains(p.left_id.as_str())));
        assert!(s.unlabeled.iter().all(|p| !train_ids.contains(p.left_id.as_str())));
        let half = split_target(&p, Some(0.1), 0.5, &mut seed::rng(1));
        assert_eq!(half.unlabeled.len(), 46);
    }

    #[test]
    fn target_split_without_labels_for_training() {
        let s = split_target(&pairs(50, 50), None, 1.0, &mut seed::rng(2));
        assert!(s.train.is_empty());
        assert_eq!(s.test.len(), 50);
        let tiny = split_target(&pairs(50, 50), Some(0.001), 1.0, &mut seed::rng(2));
        assert_eq!(tiny.train.len(), 1);
    }

    #[test]
    fn source_split_keeps_unlabeled() {
        let s = split_source("a", &pairs(30, 20), Some(0.5), &mut seed::rng(3));
        assert_eq!(s.labeled.len(), 10);
        assert_eq!(s.unlabeled.len(), 10);
        let all = split_source("a", &pairs(30, 20), None, &mut seed::rng(3));
        assert_eq!(all.labeled.len(), 20);
    }
}
