use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Anything carrying an optional 0/1 label.
pub trait Labeled {
    fn label(&self) -> Option<u8>;
}

/// Positive-to-negative class ratio, `1:3` by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRatio {
    pub positive: u32,
    pub negative: u32,
}

impl Default for ClassRatio {
    fn default() -> Self {
        Self {
            positive: 1,
            negative: 3,
        }
    }
}

impl ClassRatio {
    /// Positive share of a budget; the remainder goes to negatives.
    pub fn positives_for(&self, budget: usize) -> usize {
        budget * self.positive as usize / (self.positive + self.negative) as usize
    }
}

fn pick<T: Clone>(items: &[T], pool: &[usize], k: usize, rng: &mut Rng) -> Vec<usize> {
    if k >= pool.len() {
        return pool.to_vec();
    }
    let mut chosen: Vec<usize> = index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    chosen.sort_unstable();
    debug_assert!(chosen.iter().all(|&i| i < items.len()));
    chosen
}

/// Undersamples to `budget` items at the requested class ratio. When one
/// class is too small all of it is kept and the other fills the remainder.
/// Selected items keep their input order.
pub fn undersample_balanced<T: Labeled + Clone>(
    items: &[T],
    budget: usize,
    ratio: ClassRatio,
    rng: &mut Rng,
) -> Result<Vec<T>> {
    if budget < 4 {
        return Err(Error::invalid("undersampling budget must be >= 4"));
    }
    if ratio.positive == 0 || ratio.negative == 0 {
        return Err(Error::invalid("class ratio terms must be positive"));
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, it) in items.iter().enumerate() {
        match it.label() {
            Some(1) => pos.push(i),
            Some(0) => neg.push(i),
            _ => return Err(Error::invalid("undersampling requires labeled items")),
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("undersampling requires both classes"));
    }
    if budget >= items.len() {
        if budget > items.len() {
            log::warn!(
                "budget {budget} exceeds the {} available pairs; taking all",
                items.len()
            );
        }
        return Ok(items.to_vec());
    }
    let want_pos = ratio.positives_for(budget);
    let want_neg = budget - want_pos;
    let (take_pos, take_neg) = if pos.len() < want_pos {
        (pos.len(), budget - pos.len())
    } else if neg.len() < want_neg {
        (budget - neg.len(), neg.len())
    } else {
        (want_pos, want_neg)
    };
    let mut chosen = pick(items, &pos, take_pos, rng);
    chosen.extend(pick(items, &neg, take_neg, rng));
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| items[i].clone()).collect())
}

/// Uniform draws with replacement until `target_count` items are collected.
pub fn replicate_with_replacement<T: Clone>(
    items: &[T],
    target_count: usize,
    rng: &mut Rng,
) -> Result<Vec<T>> {
    if items.is_empty() {
        return Err(Error::invalid("cannot replicate an empty pool"));
    }
    if target_count == 0 {
        return Err(Error::invalid("replication target must be >= 1"));
    }
    Ok((0..target_count)
        .map(|_| items[rng.random_range(0..items.len())].clone())
        .collect())
}

/// Binary indexed tree over non-negative weights supporting removal.
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let mut tree = vec![0.0; n + 1];
        for (i, &w) in weights.iter().enumerate() {
            let k = i + 1;
            tree[k] += w;
            let parent = k + (k & k.wrapping_neg());
            if parent <= n {
                tree[parent] += tree[k];
            }
        }
        Self { tree }
    }

    fn add(&mut self, i: usize, delta: f64) {
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut k = self.tree.len() - 1;
        let mut s = 0.0;
        while k > 0 {
            s += self.tree[k];
            k -= k & k.wrapping_neg();
        }
        s
    }

    /// Smallest index whose prefix sum exceeds `u`.
    fn find(&self, mut u: f64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= u {
                pos = next;
                u -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }
}

/// Draws `n` items without replacement, each draw proportional to the
/// remaining weights. Items come back in input order.
pub fn importance_sample<T: Clone>(
    items: &[T],
    weights: &[f64],
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<T>> {
    if items.len() != weights.len() {
        return Err(Error::Dimension {
            expected: items.len(),
            actual: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("importance weights must be finite and non-negative"));
    }
    if n == 0 {
        return Err(Error::invalid("importance sample size must be >= 1"));
    }
    let positive: Vec<usize> = (0..items.len()).filter(|&i| weights[i] > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::invalid("importance weights sum to zero"));
    }
    if n >= positive.len() {
        if n > positive.len() {
            log::warn!(
                "requested {n} draws but only {} items have positive weight",
                positive.len()
            );
        }
        return Ok(positive.into_iter().map(|i| items[i].clone()).collect());
    }
    let mut live: Vec<f64> = weights.to_vec();
    let mut tree = Fenwick::new(&live);
    let mut chosen = Vec::with_capacity(n);
    for _ in 0..n {
        let total = tree.total();
        let u = rng.random::<f64>() * total;
        let mut i = tree.find(u);
        if live[i] <= 0.0 {
            // rounding pushed the search onto an exhausted slot
            i = (0..live.len())
                .rev()
                .find(|&j| live[j] > 0.0)
                .expect("positive weight remains");
        }
        chosen.push(i);
        tree.add(i, -live[i]);
        live[i] = 0.0;
    }
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| items[i].clone()).collect())
}
