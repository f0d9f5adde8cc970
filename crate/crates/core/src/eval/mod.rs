//! Exact metrics, and stratified estimation of classifier quality on an
//! unlabeled pool under a labeling budget.

mod metrics;
mod oracle;
mod strata;

use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use metrics::{exact_metrics, f1, prf, Confusion, MetricsReport};
pub use oracle::{FileOracle, LabelOracle, PromptOracle};
pub use strata::{
    allocate, neyman_allocate, strata_variance, stratify, stratum_of, Allocation, StrataPlan, Stratum,
    DEFAULT_STRATA,
};

use crate::encoder::EncodedPair;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;
use crate::transfer::TransferModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub budget: usize,
    pub strata: usize,
    pub allocation: Allocation,
    pub threshold: f64,
    pub seed: u64,
}

impl EstimateConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget,
            strata: DEFAULT_STRATA,
            allocation: Allocation::Neyman,
            threshold: 0.5,
            seed,
        }
    }
}

/// Counts that may be scaled up from a sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedCounts {
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub tn: f64,
}

impl WeightedCounts {
    fn add(&mut self, other: &WeightedCounts, scale: f64) {
        self.tp += scale * other.tp;
        self.fp += scale * other.fp;
        self.fn_ += scale * other.fn_;
        self.tn += scale * other.tn;
    }

    fn total(&self) -> f64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEstimate {
    pub index: usize,
    pub size: usize,
    pub sampled: usize,
    /// Sample counts, or model-expected counts when nothing was sampled.
    pub counts: WeightedCounts,
    /// Within-stratum precision; 1 when no predicted positives were seen.
    pub precision: f64,
    /// Within-stratum recall; 1 when no true positives were seen.
    pub recall: f64,
    pub accuracy: f64,
    pub precision_unsupported: bool,
    pub recall_unsupported: bool,
    /// No budget reached this stratum; counts come from model scores.
    pub imputed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceEstimate {
    /// Ratio estimate from size-scaled stratum counts.
    pub estimate: Scores,
    pub estimated_counts: WeightedCounts,
    /// Size-weighted average of the stratum precisions and recalls.
    pub stratum_weighted: Scores,
    pub strata: Vec<StratumEstimate>,
    pub plan: StrataPlan,
    pub queries: usize,
}

fn expected_counts(members: &[usize], scores: &[f64], threshold: f64) -> WeightedCounts {
    let mut c = WeightedCounts::default();
    for &k in members {
        let p = scores[k];
        if p >= threshold {
            c.tp += p;
            c.fp += 1.0 - p;
        } else {
            c.fn_ += p;
            c.tn += 1.0 - p;
        }
    }
    c
}

/// Stratifies the pool by score, allocates the budget, samples each stratum
/// uniformly and asks the oracle for the sampled labels.
pub fn estimate_from_scores(
    ids: &[(String, String)],
    scores: &[f64],
    oracle: &mut dyn LabelOracle,
    cfg: &EstimateConfig,
) -> Result<PerformanceEstimate> {
    if ids.len() != scores.len() {
        return Err(Error::Dimension {
            expected: ids.len(),
            actual: scores.len(),
        });
    }
    if ids.is_empty() {
        return Err(Error::invalid("cannot estimate on an empty pool"));
    }
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(Error::invalid("threshold must lie in (0, 1)"));
    }
    let plan = allocate(&stratify(scores, cfg.strata)?, cfg.budget, cfg.allocation)?;
    let n = ids.len() as f64;
    let mut rng = seed::rng(seed::derive_seed(cfg.seed, "estimate"));
    let mut total = WeightedCounts::default();
    let mut weighted = (0.0, 0.0);
    let mut rows = Vec::with_capacity(plan.width());
    for (i, s) in plan.strata.iter().enumerate() {
        let b = s.budget.unwrap_or(0);
        let size = s.size();
        if size == 0 {
            continue;
        }
        let (counts, imputed) = if b == 0 {
            (expected_counts(&s.members, scores, cfg.threshold), true)
        } else {
            let mut picked: Vec<usize> = index::sample(&mut rng, size, b).into_vec();
            picked.sort_unstable();
            let mut c = WeightedCounts::default();
            for j in picked {
                let k = s.members[j];
                let truth = oracle.label(&ids[k].0, &ids[k].1)?;
                let pred = scores[k] >= cfg.threshold;
                match (pred, truth == 1) {
                    (true, true) => c.tp += 1.0,
                    (true, false) => c.fp += 1.0,
                    (false, true) => c.fn_ += 1.0,
                    (false, false) => c.tn += 1.0,
                }
            }
            (c, false)
        };
        let scale = size as f64 / counts.total();
        total.add(&counts, scale);
        let precision_unsupported = counts.tp + counts.fp == 0.0;
        let recall_unsupported = counts.tp + counts.fn_ == 0.0;
        let precision = if precision_unsupported { 1.0 } else { counts.tp / (counts.tp + counts.fp) };
        let recall = if recall_unsupported { 1.0 } else { counts.tp / (counts.tp + counts.fn_) };
        weighted.0 += size as f64 / n * precision;
        weighted.1 += size as f64 / n * recall;
        rows.push(StratumEstimate {
            index: i,
            size,
            sampled: b,
            counts,
            precision,
            recall,
            accuracy: (counts.tp + counts.tn) / counts.total(),
            precision_unsupported,
            recall_unsupported,
            imputed,
        });
    }
    let (precision, recall, f) = prf(total.tp, total.fp, total.fn_);
    Ok(PerformanceEstimate {
        estimate: Scores {
            precision,
            recall,
            f1: f,
        },
        estimated_counts: total,
        stratum_weighted: Scores {
            precision: weighted.0,
            recall: weighted.1,
            f1: f1(weighted.0, weighted.1),
        },
        strata: rows,
        plan,
        queries: oracle.query_count(),
    })
}

/// Scores the pool with `model`, then estimates as [`estimate_from_scores`].
pub fn estimate_performance<F: Scalar>(
    model: &TransferModel<F>,
    pool: &[EncodedPair<F>],
    oracle: &mut dyn LabelOracle,
    cfg: &EstimateConfig,
) -> Result<PerformanceEstimate> {
    let xs: Vec<Vec<F>> = pool.iter().map(|p| p.x.clone()).collect();
    let scores: Vec<f64> = model
        .predict_proba_batch(&xs)?
        .into_iter()
        .map(|p| p.to_f64_lossy().clamp(0.0, 1.0))
        .collect();
    let ids: Vec<(String, String)> = pool
        .iter()
        .map(|p| (p.left_id.clone(), p.right_id.clone()))
        .collect();
    estimate_from_scores(&ids, &scores, oracle, cfg)
}
