//! Source relatedness and source ranking from a domain separator's held-out
//! performance.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;
use crate::transfer::fit_domain_separator;

pub const DEFAULT_RUNS: usize = 10;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_MCC_THRESHOLD: f64 = 0.2;
const MIN_POOL: usize = 10;
const MAX_SPLIT_RETRIES: usize = 16;

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(tp: u64, tn: u64, fp: u64, fn_: u64) -> f64 {
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0.0) {
        return 0.0;
    }
    let denom = factors.iter().product::<f64>().sqrt();
    ((tp * tn - fp * fn_) / denom).clamp(-1.0, 1.0)
}

/// `2 (acc - 0.5)`, clamped to `[0, 1]`.
pub fn da_from_accuracy(acc: f64) -> f64 {
    (2.0 * (acc - 0.5)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl SplitOutcome {
    pub fn mcc(&self) -> f64 {
        mcc(self.tp, self.tn, self.fp, self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.tp + self.tn + self.fp + self.fn_;
        (self.tp + self.tn) as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatorRuns {
    pub train_fraction: f64,
    pub seed: u64,
    pub runs: Vec<SplitOutcome>,
}

impl SeparatorRuns {
    pub fn mean_mcc(&self) -> f64 {
        self.runs.iter().map(SplitOutcome::mcc).sum::<f64>() / self.runs.len() as f64
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.runs.iter().map(SplitOutcome::accuracy).sum::<f64>() / self.runs.len() as f64
    }
}

fn split_indices(n: usize, fraction: f64, rng: &mut seed::Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let k = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let test = idx.split_off(k);
    (idx, test)
}

/// One seeded split per run: `train_fraction` of each origin trains the
/// separator, the rest scores it. Source is the positive class.
pub fn separator_runs<F: Scalar>(
    source_x: &[Vec<F>],
    target_x: &[Vec<F>],
    runs: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<SeparatorRuns> {
    if source_x.len() < MIN_POOL || target_x.len() < MIN_POOL {
        return Err(Error::invalid(format!(
            "separator runs need at least {MIN_POOL} vectors on each side"
        )));
    }
    if runs == 0 {
        return Err(Error::invalid("runs must be >= 1"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid("train_fraction must lie in (0, 1)"));
    }
    let outcomes = (0..runs)
        .into_par_iter()
        .map(|run| {
            let run_seed = seed::child_seed(seed, run as u64);
            let mut rng = seed::rng(run_seed);
            for _ in 0..MAX_SPLIT_RETRIES {
                let (s_train, s_test) = split_indices(source_x.len(), train_fraction, &mut rng);
                let (t_train, t_test) = split_indices(target_x.len(), train_fraction, &mut rng);
                if s_test.is_empty() || t_test.is_empty() {
                    continue;
                }
                let pick = |pool: &[Vec<F>], idx: &[usize]| -> Vec<Vec<F>> {
                    idx.iter().map(|&i| pool[i].clone()).collect()
                };
                let sep = fit_domain_separator(
                    &pick(source_x, &s_train),
                    &pick(target_x, &t_train),
                    run_seed,
                )?;
                let mut out = SplitOutcome {
                    tp: 0,
                    tn: 0,
                    fp: 0,
                    fn_: 0,
                };
                for &i in &s_test {
                    match sep.predict(&source_x[i], F::lit(0.5))? {
                        1 => out.tp += 1,
                        _ => out.fn_ += 1,
                    }
                }
                for &i in &t_test {
                    match sep.predict(&target_x[i], F::lit(0.5))? {
                        1 => out.fp += 1,
                        _ => out.tn += 1,
                    }
                }
                return Ok(out);
            }
            Err(Error::invalid("could not draw a held-out split with both origins"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeparatorRuns {
        train_fraction,
        seed,
        runs: outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatednessReport {
    pub mcc: Vec<f64>,
    pub mean_mcc: f64,
    pub threshold: f64,
    pub related: bool,
    pub runs: SeparatorRuns,
}

/// Mean held-out MCC of the separator; the pools count as related when it
/// does not exceed `threshold`.
pub fn relatedness_gate<F: Scalar>(
    source_x: &[Vec<F>],
    target_x: &[Vec<F>],
    runs: usize,
    train_fraction: f64,
    threshold: f64,
    seed: u64,
) -> Result<RelatednessReport> {
    let r = separator_runs(source_x, target_x, runs, train_fraction, seed)?;
    let mean_mcc = r.mean_mcc();
    Ok(RelatednessReport {
        mcc: r.runs.iter().map(SplitOutcome::mcc).collect(),
        mean_mcc,
        threshold,
        related: mean_mcc <= threshold,
        runs: r,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaEstimate {
    pub accuracy: f64,
    pub da: f64,
    pub runs: SeparatorRuns,
}

pub fn estimate_da<F: Scalar>(
    source_x: &[Vec<F>],
    target_x: &[Vec<F>],
    runs: usize,
    seed: u64,
) -> Result<DaEstimate> {
    let r = separator_runs(source_x, target_x, runs, DEFAULT_TRAIN_FRACTION, seed)?;
    let accuracy = r.mean_accuracy();
    Ok(DaEstimate {
        accuracy,
        da: da_from_accuracy(accuracy),
        runs: r,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSource {
    pub name: String,
    pub accuracy: f64,
    pub da: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRanking {
    pub rows: Vec<RankedSource>,
}

impl SourceRanking {
    pub fn best(&self) -> Option<&RankedSource> {
        self.rows.first()
    }
}

/// Ranks candidates by ascending `d_A`, ties by name. Each candidate's
/// seed derives from its name, so input order does not matter.
pub fn select_source<F: Scalar>(
    candidates: &[(String, Vec<Vec<F>>)],
    target_x: &[Vec<F>],
    runs: usize,
    seed: u64,
) -> Result<SourceRanking> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate sources"));
    }
    let mut rows = candidates
        .iter()
        .map(|(name, pool)| {
            let est = estimate_da(pool, target_x, runs, seed::derive_seed(seed, name))?;
            Ok(RankedSource {
                name: name.clone(),
                accuracy: est.accuracy,
                da: est.da,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.da.total_cmp(&b.da).then_with(|| a.name.cmp(&b.name)));
    Ok(SourceRanking { rows })
}
