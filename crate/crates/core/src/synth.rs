//! Seeded generators of labeled similarity vectors with controlled shift
//! between a source and a target domain.
//!
//! Every feature of a duplicate is drawn from `|N(dup_mean, dup_spread)|` and
//! every feature of a non-duplicate from `|N(nondup_mean, nondup_spread)|`, so
//! duplicates sit at small distances. A near-miss non-duplicate looks like a
//! duplicate except for one feature drawn around `near_miss_peak`.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset_io::{DatasetHandle, LabeledPair, LabeledPairs, Record};
use crate::encoder::EncodedPair;
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};
use crate::seed::{self, Rng};

/// Per-domain knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainShift {
    pub size: usize,
    /// Fraction of duplicates (prior shift).
    pub dup_rate: f64,
    /// Added to every feature mean (covariate shift).
    pub mean_offset: f64,
    /// Features whose class-conditional distributions are swapped
    /// (conditional shift).
    pub flipped: Vec<usize>,
    /// Signed strength of selection on the direction `(+1,..,+1,-1,..,-1)`.
    pub selection_bias: f64,
}

impl DomainShift {
    pub fn plain(size: usize, dup_rate: f64) -> Self {
        Self {
            size,
            dup_rate,
            mean_offset: 0.0,
            flipped: Vec::new(),
            selection_bias: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub dims: usize,
    pub dup_mean: f64,
    pub dup_spread: f64,
    pub nondup_mean: f64,
    pub nondup_spread: f64,
    pub near_miss_fraction: f64,
    pub near_miss_peak: f64,
    pub source: DomainShift,
    pub target: DomainShift,
    pub seed: u64,
}

pub const PRESETS: [&str; 6] = [
    "none",
    "prior",
    "covariate",
    "conditional",
    "adversarial",
    "disjoint",
];

impl ShiftSpec {
    /// Identical source and target generators.
    pub fn unshifted(dims: usize, size: usize, seed: u64) -> Self {
        Self {
            dims,
            dup_mean: 0.3,
            dup_spread: 0.15,
            nondup_mean: 0.4,
            nondup_spread: 0.15,
            near_miss_fraction: 0.0,
            near_miss_peak: 0.6,
            source: DomainShift::plain(size, 0.25),
            target: DomainShift::plain(size, 0.25),
            seed,
        }
    }

    /// Named generator families.
    ///
    /// * `none`: no shift.
    /// * `prior`: target duplicate rate 0.1 against 0.25.
    /// * `covariate`: opposite selection bias, near-miss non-duplicates.
    /// * `conditional`: 4 of 24 features swap class roles in the target.
    /// * `adversarial`: 16 of 24 features swap, with wider class gaps.
    /// * `disjoint`: target features offset far beyond the source support.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let mut s = Self::unshifted(24, 1000, seed);
        match name {
            "none" => {}
            "prior" => s.target.dup_rate = 0.1,
            "covariate" => {
                s.dims = 8;
                s.dup_mean = 0.1;
                s.dup_spread = 0.1;
                s.nondup_mean = 0.5;
                s.nondup_spread = 0.15;
                s.near_miss_fraction = 0.5;
                s.near_miss_peak = 0.6;
                s.source.selection_bias = 4.0;
                s.target.selection_bias = -4.0;
            }
            "conditional" => s.target.flipped = (0..4).collect(),
            "adversarial" => {
                s.dup_mean = 0.2;
                s.nondup_mean = 0.5;
                s.target.flipped = (0..16).collect();
            }
            "disjoint" => {
                s.dims = 8;
                s.target.mean_offset = 3.0;
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown shift preset {other:?}; expected one of {PRESETS:?}"
                )))
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dims == 0 {
            return bad("dims must be positive".into());
        }
        if !(self.dup_spread > 0.0 && self.nondup_spread > 0.0) {
            return bad("spreads must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.near_miss_fraction) {
            return bad("near_miss_fraction must lie in [0, 1]".into());
        }
        for (name, d) in [("source", &self.source), ("target", &self.target)] {
            if !(d.dup_rate > 0.0 && d.dup_rate < 1.0) {
                return bad(format!("{name} dup_rate must lie in (0, 1)"));
            }
            if d.size < 20 {
                return bad(format!("{name} size must be >= 20"));
            }
            if let Some(&j) = d.flipped.iter().find(|&&j| j >= self.dims) {
                return bad(format!("{name} flipped feature {j} out of range"));
            }
            if !(d.mean_offset.is_finite() && d.selection_bias.is_finite()) {
                return bad(format!("{name} shift parameters must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData<F> {
    pub source: Vec<EncodedPair<F>>,
    pub target: Vec<EncodedPair<F>>,
}

impl<F: Scalar> SyntheticData<F> {
    pub fn truth(pairs: &[EncodedPair<F>]) -> Result<LabeledPairs> {
        LabeledPairs::new(
            pairs
                .iter()
                .map(|p| LabeledPair {
                    left_id: p.left_id.clone(),
                    right_id: p.right_id.clone(),
                    label: p.label.unwrap_or(0),
                })
                .collect(),
        )
    }
}

struct Sampler<'a> {
    spec: &'a ShiftSpec,
    domain: &'a DomainShift,
}

impl Sampler<'_> {
    fn feature(&self, rng: &mut Rng, dup: bool, j: usize) -> f64 {
        let s = self.spec;
        let flipped = self.domain.flipped.contains(&j);
        let (m, sd) = if dup != flipped {
            (s.dup_mean, s.dup_spread)
        } else {
            (s.nondup_mean, s.nondup_spread)
        };
        let m = m + self.domain.mean_offset;
        Normal::new(m, sd).expect("validated spread").sample(rng).abs()
    }

    fn draw(&self, rng: &mut Rng, dup: bool) -> Vec<f64> {
        let d = self.spec.dims;
        if !dup && rng.random::<f64>() < self.spec.near_miss_fraction {
            let mut x: Vec<f64> = (0..d).map(|j| self.feature(rng, true, j)).collect();
            let j = rng.random_range(0..d);
            let m = self.spec.near_miss_peak + self.domain.mean_offset;
            x[j] = Normal::new(m, self.spec.nondup_spread)
                .expect("validated spread")
                .sample(rng)
                .abs();
            return x;
        }
        (0..d).map(|j| self.feature(rng, dup, j)).collect()
    }

    fn accept(&self, rng: &mut Rng, x: &[f64]) -> bool {
        let b = self.domain.selection_bias;
        if b == 0.0 {
            return true;
        }
        let half = x.len() / 2;
        let proj: f64 = x[..half].iter().sum::<f64>() - x[half..].iter().sum::<f64>();
        rng.random::<f64>() < sigmoid(b * proj)
    }

    /// Exact class counts without selection bias; otherwise labels are drawn
    /// at the duplicate rate and survivors of the selection step are kept.
    fn pool(&self, rng: &mut Rng) -> Vec<(Vec<f64>, u8)> {
        let n = self.domain.size;
        if self.domain.selection_bias == 0.0 {
            let dups = (n as f64 * self.domain.dup_rate).round() as usize;
            let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < dups)).collect();
            labels.shuffle(rng);
            return labels
                .into_iter()
                .map(|y| (self.draw(rng, y == 1), y))
                .collect();
        }
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let dup = rng.random::<f64>() < self.domain.dup_rate;
            let x = self.draw(rng, dup);
            if self.accept(rng, &x) {
                out.push((x, u8::from(dup)));
            }
        }
        out
    }
}

fn to_pairs<F: Scalar>(rows: Vec<(Vec<f64>, u8)>, tag: &str) -> Vec<EncodedPair<F>> {
    rows.into_iter()
        .enumerate()
        .map(|(i, (x, y))| {
            EncodedPair::new(format!("{tag}-l{i}"), format!("{tag}-r{i}"), x.into_iter().map(F::lit).collect())
                .with_label(y)
                .with_origin(tag)
        })
        .collect()
}

/// Draws labeled source and target pools. Source and target use independent
/// streams derived from `spec.seed`.
pub fn generate_synthetic<F: Scalar>(spec: &ShiftSpec) -> Result<SyntheticData<F>> {
    spec.validate()?;
    let gen = |domain: &DomainShift, key: &str| {
        let mut rng = seed::rng(seed::derive_seed(spec.seed, key));
        Sampler { spec, domain }.pool(&mut rng)
    };
    Ok(SyntheticData {
        source: to_pairs(gen(&spec.source, "synth-source"), "source"),
        target: to_pairs(gen(&spec.target, "synth-target"), "target"),
    })
}

/// Pools for a small end-to-end run through tokenization and encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct TextTuples {
    pub left: DatasetHandle,
    pub right: DatasetHandle,
    pub truth: LabeledPairs,
}

fn phrase(vocabulary: &[String], rng: &mut Rng, k: usize) -> String {
    (0..k)
        .map(|_| vocabulary[rng.random_range(0..vocabulary.len())].as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_record(vocabulary: &[String], rng: &mut Rng) -> Record {
    Record::from([
        ("title".to_string(), Some(phrase(vocabulary, rng, 5))),
        ("authors".to_string(), Some(phrase(vocabulary, rng, 2))),
        ("venue".to_string(), Some(phrase(vocabulary, rng, 1))),
        ("year".to_string(), Some((1990 + rng.random_range(0..30)).to_string())),
    ])
}

/// Builds `entities` left tuples from `vocabulary` and a right table holding
/// perturbed copies of a `dup_rate` share of them plus unrelated tuples.
/// Truth labels cover the full cross product.
pub fn generate_text_tuples(
    vocabulary: &[String],
    entities: usize,
    dup_rate: f64,
    seed: u64,
) -> Result<TextTuples> {
    if vocabulary.len() < 8 {
        return Err(Error::invalid("text tuple mode needs at least 8 vocabulary words"));
    }
    if entities < 2 || !(dup_rate > 0.0 && dup_rate < 1.0) {
        return Err(Error::invalid("need >= 2 entities and dup_rate in (0, 1)"));
    }
    let schema: Vec<String> = ["title", "authors", "venue", "year"].map(String::from).to_vec();
    let mut rng = seed::rng(seed::derive_seed(seed, "synth-text"));
    let mut left = DatasetHandle::new("left", schema.clone(), "id")?;
    let mut right = DatasetHandle::new("right", schema, "id")?;
    let dups = ((entities as f64) * dup_rate).round().max(1.0) as usize;
    let mut matches = Vec::new();
    for i in 0..entities {
        let rec = random_record(vocabulary, &mut rng);
        if i < dups {
            let mut copy = rec.clone();
            if let Some(Some(title)) = copy.get_mut("title") {
                let mut words: Vec<&str> = title.split(' ').collect();
                let drop = rng.random_range(0..words.len());
                words.remove(drop);
                *title = words.join(" ");
            }
            right.insert(format!("r{i}"), copy)?;
            matches.push((format!("l{i}"), format!("r{i}")));
        } else {
            right.insert(format!("r{i}"), random_record(vocabulary, &mut rng))?;
        }
        left.insert(format!("l{i}"), rec)?;
    }
    let mut entries = Vec::new();
    for l in left.ids() {
        for r in right.ids() {
            let label = u8::from(matches.iter().any(|(a, b)| a == l && b == r));
            entries.push(LabeledPair {
                left_id: l.to_string(),
                right_id: r.to_string(),
                label,
            });
        }
    }
    Ok(TextTuples {
        left,
        right,
        truth: LabeledPairs::new(entries)?,
    })
}
