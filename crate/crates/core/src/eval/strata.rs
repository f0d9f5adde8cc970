use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STRATA: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub lower: f64,
    pub upper: f64,
    /// Pool positions of the members, ascending.
    pub members: Vec<usize>,
    /// Sum of `p (1 - p)` over members.
    pub variance: f64,
    pub budget: Option<usize>,
}

impl Stratum {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataPlan {
    pub strata: Vec<Stratum>,
}

impl StrataPlan {
    pub fn width(&self) -> usize {
        self.strata.len()
    }

    pub fn total(&self) -> usize {
        self.strata.iter().map(Stratum::size).sum()
    }

    pub fn budget(&self) -> usize {
        self.strata.iter().filter_map(|s| s.budget).sum()
    }
}

/// Bin index `floor(p W)`, with `p = 1` in the last bin.
pub fn stratum_of(p: f64, w: usize) -> usize {
    ((p * w as f64).floor() as usize).min(w - 1)
}

pub fn strata_variance(scores: impl IntoIterator<Item = f64>) -> f64 {
    scores.into_iter().map(|p| p * (1.0 - p)).sum()
}

/// Partitions `[0, 1]` into `w` equal bins and assigns every score.
pub fn stratify(scores: &[f64], w: usize) -> Result<StrataPlan> {
    if w < 2 {
        return Err(Error::invalid("need at least two strata"));
    }
    if let Some(p) = scores.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("score {p} outside [0, 1]")));
    }
    let mut strata: Vec<Stratum> = (0..w)
        .map(|i| Stratum {
            lower: i as f64 / w as f64,
            upper: (i + 1) as f64 / w as f64,
            members: Vec::new(),
            variance: 0.0,
            budget: None,
        })
        .collect();
    for (k, &p) in scores.iter().enumerate() {
        strata[stratum_of(p, w)].members.push(k);
    }
    for s in &mut strata {
        s.variance = strata_variance(s.members.iter().map(|&k| scores[k]));
    }
    Ok(StrataPlan { strata })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// Proportional to size times variance.
    Neyman,
    /// The same share for every non-empty stratum.
    Equal,
    /// Proportional to size.
    Proportional,
}

impl std::str::FromStr for Allocation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neyman" => Ok(Allocation::Neyman),
            "equal" => Ok(Allocation::Equal),
            "proportional" => Ok(Allocation::Proportional),
            other => Err(Error::Config(format!("unknown allocation {other:?}"))),
        }
    }
}

/// Rounds non-negative real shares summing to an integer `total` by largest
/// remainder; ties go to the lower index.
fn largest_remainder(shares: &[f64], total: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

/// Distributes `budget` labels across strata. Budgets never exceed stratum
/// sizes; surplus from capped strata is re-shared among the rest until no
/// stratum is over capacity.
pub fn allocate(plan: &StrataPlan, budget: usize, method: Allocation) -> Result<StrataPlan> {
    if budget == 0 {
        return Err(Error::invalid("budget must be >= 1"));
    }
    let total = plan.total();
    if total == 0 {
        return Err(Error::invalid("no pairs to allocate over"));
    }
    let budget = if budget > total {
        log::warn!("budget {budget} exceeds the {total} pooled pairs; capping");
        total
    } else {
        budget
    };
    let sizes: Vec<usize> = plan.strata.iter().map(Stratum::size).collect();
    let priority = |i: usize| -> f64 {
        match method {
            Allocation::Neyman => plan.strata[i].variance * sizes[i] as f64,
            Allocation::Equal => f64::from(u8::from(sizes[i] > 0)),
            Allocation::Proportional => sizes[i] as f64,
        }
    };
    let mut prio: Vec<f64> = (0..sizes.len()).map(priority).collect();
    if prio.iter().all(|&p| p <= 0.0) {
        log::info!("all strata have zero priority; allocating proportionally to size");
        prio = sizes.iter().map(|&s| s as f64).collect();
    }

    let mut budgets = vec![0usize; sizes.len()];
    let mut capped = vec![false; sizes.len()];
    loop {
        let remaining = budget - budgets.iter().zip(&capped).filter(|(_, &c)| c).map(|(b, _)| b).sum::<usize>();
        let open: Vec<usize> = (0..sizes.len()).filter(|&i| !capped[i]).collect();
        let mut weight: f64 = open.iter().map(|&i| prio[i]).sum();
        let mut use_size = false;
        if weight <= 0.0 {
            // Only zero-priority strata still have room.
            use_size = true;
            weight = open.iter().map(|&i| sizes[i] as f64).sum();
        }
        let shares: Vec<f64> = open
            .iter()
            .map(|&i| {
                let p = if use_size { sizes[i] as f64 } else { prio[i] };
                remaining as f64 * p / weight
            })
            .collect();
        let over: Vec<usize> = open
            .iter()
            .zip(&shares)
            .filter(|(&i, &s)| s > sizes[i] as f64)
            .map(|(&i, _)| i)
            .collect();
        if over.is_empty() {
            for (&i, b) in open.iter().zip(largest_remainder(&shares, remaining)) {
                budgets[i] = b;
            }
            break;
        }
        for i in over {
            capped[i] = true;
            budgets[i] = sizes[i];
        }
    }
    let mut out = plan.clone();
    for (s, b) in out.strata.iter_mut().zip(budgets) {
        s.budget = Some(b);
    }
    debug_assert_eq!(out.budget(), budget);
    Ok(out)
}

pub fn neyman_allocate(plan: &StrataPlan, budget: usize) -> Result<StrataPlan> {
    allocate(plan, budget, Allocation::Neyman)
}
