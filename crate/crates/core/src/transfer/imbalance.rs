//! Class and dataset imbalance handling for transfer training sets.

use serde::{Deserialize, Serialize};

use crate::dataset_io::{importance_sample, replicate_with_replacement, undersample_balanced, ClassRatio};
use crate::encoder::EncodedPair;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalancePolicy {
    /// Upper bound on labeled source pairs per labeled target pair.
    pub max_imbalance_ratio: f64,
    pub class_ratio: ClassRatio,
    /// Cap on labeled source pairs, split equally across sources.
    pub source_budget: Option<usize>,
    /// Cap on labeled target pairs.
    pub target_budget: Option<usize>,
}

impl Default for ImbalancePolicy {
    fn default() -> Self {
        Self {
            max_imbalance_ratio: 10.0,
            class_ratio: ClassRatio::default(),
            source_budget: None,
            target_budget: None,
        }
    }
}

impl ImbalancePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_imbalance_ratio >= 1.0 && self.max_imbalance_ratio.is_finite()) {
            return Err(Error::Config("max_imbalance_ratio must be finite and >= 1".into()));
        }
        if self.class_ratio.positive == 0 || self.class_ratio.negative == 0 {
            return Err(Error::Config("class ratio terms must be positive".into()));
        }
        if self.source_budget == Some(0) || self.target_budget == Some(0) {
            return Err(Error::Config("budgets must be positive".into()));
        }
        Ok(())
    }

    /// Largest number of source pairs allowed next to `target` target pairs.
    pub fn source_cap(&self, target: usize) -> usize {
        (self.max_imbalance_ratio * target as f64).floor() as usize
    }
}

/// Splits `total` equally across pools of the given sizes. Shares a pool
/// cannot use flow to the others; leftovers go to the lowest indices.
pub fn equal_shares(total: usize, sizes: &[usize]) -> Vec<usize> {
    let mut shares = vec![0usize; sizes.len()];
    let mut remaining = total.min(sizes.iter().sum());
    loop {
        let open: Vec<usize> = (0..sizes.len()).filter(|&i| shares[i] < sizes[i]).collect();
        if remaining == 0 || open.is_empty() {
            return shares;
        }
        let each = remaining / open.len();
        if each == 0 {
            for &i in open.iter().take(remaining) {
                shares[i] += 1;
            }
            return shares;
        }
        for &i in &open {
            let add = each.min(sizes[i] - shares[i]);
            shares[i] += add;
            remaining -= add;
        }
    }
}

/// Undersamples `pool` to `budget` at the class ratio, or uniformly when the
/// pool lacks a class.
pub fn undersample_to_budget<F: Scalar>(
    pool: &[EncodedPair<F>],
    budget: usize,
    ratio: ClassRatio,
    rng: &mut Rng,
) -> Result<Vec<EncodedPair<F>>> {
    if budget >= pool.len() {
        return Ok(pool.to_vec());
    }
    let has = |c| pool.iter().any(|p| p.label == Some(c));
    if budget >= 4 && has(0) && has(1) {
        return undersample_balanced(pool, budget, ratio, rng);
    }
    log::warn!("class-ratio undersampling not feasible; sampling {budget} pairs uniformly");
    importance_sample(pool, &vec![1.0; pool.len()], budget, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceOutcome<F> {
    pub sources: Vec<Vec<EncodedPair<F>>>,
    pub target: Vec<EncodedPair<F>>,
    /// Whether the source cap forced importance sampling.
    pub capped: bool,
}

/// Applies budgets, the source-to-target cap and optional target parity.
///
/// `importance` is called only when the cap binds and must return one
/// non-negative weight per source pair.
pub fn apply_imbalance_policy<F: Scalar>(
    sources: &[Vec<EncodedPair<F>>],
    target: &[EncodedPair<F>],
    policy: &ImbalancePolicy,
    parity: bool,
    importance: impl FnOnce(&[Vec<EncodedPair<F>>]) -> Result<Vec<Vec<f64>>>,
    rng: &mut Rng,
) -> Result<ImbalanceOutcome<F>> {
    policy.validate()?;
    let sizes: Vec<usize> = sources.iter().map(Vec::len).collect();
    let mut kept: Vec<Vec<EncodedPair<F>>> = match policy.source_budget {
        Some(b) => equal_shares(b, &sizes)
            .into_iter()
            .zip(sources)
            .map(|(share, pool)| undersample_to_budget(pool, share, policy.class_ratio, rng))
            .collect::<Result<_>>()?,
        None => sources.to_vec(),
    };
    let mut tgt = match policy.target_budget {
        Some(b) => undersample_to_budget(target, b, policy.class_ratio, rng)?,
        None => target.to_vec(),
    };

    let total: usize = kept.iter().map(Vec::len).sum();
    let cap = policy.source_cap(tgt.len());
    let capped = !tgt.is_empty() && total > cap;
    if capped {
        let weights = importance(&kept)?;
        if weights.len() != kept.len() {
            return Err(Error::Dimension {
                expected: kept.len(),
                actual: weights.len(),
            });
        }
        let sizes: Vec<usize> = kept.iter().map(Vec::len).collect();
        let shares = equal_shares(cap, &sizes);
        kept = kept
            .iter()
            .zip(&weights)
            .zip(shares)
            .map(|((pool, w), share)| {
                if share == 0 {
                    Ok(Vec::new())
                } else if share >= pool.len() {
                    Ok(pool.clone())
                } else {
                    importance_sample(pool, w, share, rng)
                }
            })
            .collect::<Result<_>>()?;
    }

    let total: usize = kept.iter().map(Vec::len).sum();
    if parity && !tgt.is_empty() && tgt.len() < total {
        tgt = replicate_with_replacement(&tgt, total, rng)?;
    }
    Ok(ImbalanceOutcome {
        sources: kept,
        target: tgt,
        capped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn pool(n: usize, positives: usize, origin: &str) -> Vec<EncodedPair<f64>> {
        (0..n)
            .map(|i| {
                EncodedPair::new(format!("{origin}{i}"), "r", vec![i as f64])
                    .with_label(u8::from(i < positives))
                    .with_origin(origin)
            })
            .collect()
    }

    fn uniform(ps: &[Vec<EncodedPair<f64>>]) -> Result<Vec<Vec<f64>>> {
        Ok(ps.iter().map(|p| vec![1.0; p.len()]).collect())
    }

    #[test]
    fn cap_at_ten_times_target() {
        let src = pool(100_000, 1_000, "s");
        let tgt = pool(100, 25, "t");
        let out = apply_imbalance_policy(
            &[src],
            &tgt,
            &ImbalancePolicy::default(),
            false,
            uniform,
            &mut seed::rng(1),
        )
        .unwrap();
        assert!(out.capped);
        assert_eq!(out.sources[0].len(), 1_000);
        assert_eq!(out.target.len(), 100);
    }

    #[test]
    fn parity_replication() {
        let src = pool(1_000, 250, "s");
        let tgt = pool(100, 25, "t");
        let out = apply_imbalance_policy(
            &[src.clone()],
            &tgt,
            &ImbalancePolicy::default(),
            true,
            |_| panic!("cap is inactive"),
            &mut seed::rng(2),
        )
        .unwrap();
        assert!(!out.capped);
        assert_eq!(out.sources[0], src);
        assert_eq!(out.target.len(), 1_000);
        assert!(out.target.iter().all(|p| p.origin == "t"));
    }

    #[test]
    fn importance_weights_pick_only_positive_weight_pairs() {
        let src = pool(50, 10, "s");
        let tgt = pool(2, 1, "t");
        let out = apply_imbalance_policy(
            &[src],
            &tgt,
            &ImbalancePolicy::default(),
            false,
            |ps| Ok(vec![(0..ps[0].len()).map(|i| f64::from(u8::from(i % 2 == 0))).collect()]),
            &mut seed::rng(3),
        )
        .unwrap();
        assert_eq!(out.sources[0].len(), 20);
        assert!(out.sources[0].iter().all(|p| p.x[0] as usize % 2 == 0));
    }

    #[test]
    fn budgets_split_equally_across_sources() {
        let a = pool(400, 100, "a");
        let b = pool(30, 10, "b");
        let policy = ImbalancePolicy {
            source_budget: Some(200),
            ..Default::default()
        };
        let out = apply_imbalance_policy(&[a, b], &[], &policy, false, uniform, &mut seed::rng(4))
            .unwrap();
        assert_eq!(out.sources[0].len(), 170);
        assert_eq!(out.sources[1].len(), 30);
        let pos = out.sources[0].iter().filter(|p| p.label == Some(1)).count();
        assert_eq!(pos, 42);
    }

    #[test]
    fn shares() {
        assert_eq!(equal_shares(10, &[100, 100]), vec![5, 5]);
        assert_eq!(equal_shares(11, &[100, 100, 100]), vec![4, 4, 3]);
        assert_eq!(equal_shares(10, &[2, 100]), vec![2, 8]);
        assert_eq!(equal_shares(1000, &[2, 3]), vec![2, 3]);
        assert_eq!(equal_shares(0, &[2, 3]), vec![0, 0]);
    }
}
