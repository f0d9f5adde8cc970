//! Transfer training: baselines, instance weighting and feature augmentation.

mod augment;
mod imbalance;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use augment::{extract_block, phi_source, phi_target, phi_unlabeled, FeatureMap};
pub use imbalance::{
    apply_imbalance_policy, equal_shares, undersample_to_budget, ImbalanceOutcome, ImbalancePolicy,
};

use crate::encoder::EncodedPair;
use crate::error::{Error, Result};
use crate::learners::{self, balanced_class_weights, ClassWeights, LearnerModel, LearnerSpec};
use crate::scalar::Scalar;
use crate::seed;

/// Probability clamp applied before converting separator output to weights.
pub const PROBABILITY_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Target labels only.
    #[serde(rename = "not")]
    NoT,
    /// Pooled source labels only.
    #[serde(rename = "nvt")]
    NvT,
    #[serde(alias = "s1")]
    AdequateNothing,
    #[serde(alias = "s2")]
    AdequateLimited,
    #[serde(alias = "s3")]
    LimitedLimited,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::NoT,
        Scenario::NvT,
        Scenario::AdequateNothing,
        Scenario::AdequateLimited,
        Scenario::LimitedLimited,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::NoT => "not",
            Scenario::NvT => "nvt",
            Scenario::AdequateNothing => "adequate_nothing",
            Scenario::AdequateLimited => "adequate_limited",
            Scenario::LimitedLimited => "limited_limited",
        }
    }

    pub fn uses_target_labels(self) -> bool {
        matches!(
            self,
            Scenario::NoT | Scenario::AdequateLimited | Scenario::LimitedLimited
        )
    }

    pub fn uses_sources(self) -> bool {
        self != Scenario::NoT
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "not" => Scenario::NoT,
            "nvt" => Scenario::NvT,
            "adequate_nothing" | "s1" => Scenario::AdequateNothing,
            "adequate_limited" | "s2" => Scenario::AdequateLimited,
            "limited_limited" | "s3" => Scenario::LimitedLimited,
            other => return Err(Error::Config(format!("unknown scenario {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub imbalance: ImbalancePolicy,
    /// Weight of each of the two copies of an unlabeled target pair.
    pub unlabeled_weight: f64,
    /// Append a constant feature before block augmentation.
    pub augment_bias: bool,
    pub seed: u64,
    pub learner: LearnerSpec,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self {
            scenario,
            imbalance: ImbalancePolicy::default(),
            unlabeled_weight: 1.0,
            augment_bias: true,
            seed,
            learner: LearnerSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.imbalance.validate()?;
        self.learner.validate()?;
        if !(self.unlabeled_weight >= 0.0 && self.unlabeled_weight.is_finite()) {
            return Err(Error::Config("unlabeled_weight must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn learner_spec(&self) -> LearnerSpec {
        let mut spec = self.learner.clone();
        spec.seed = seed::derive_seed(self.seed, "learner");
        spec
    }
}

/// A labeled source: its labeled pairs plus any unlabeled pairs that may
/// inform the domain separator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceData<F> {
    pub name: String,
    pub labeled: Vec<EncodedPair<F>>,
    pub unlabeled: Vec<EncodedPair<F>>,
}

impl<F: Scalar> SourceData<F> {
    pub fn new(name: impl Into<String>, labeled: Vec<EncodedPair<F>>) -> Self {
        Self {
            name: name.into(),
            labeled,
            unlabeled: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetData<F> {
    pub labeled: Vec<EncodedPair<F>>,
    pub unlabeled: Vec<EncodedPair<F>>,
}

/// A trained model plus the feature map its inputs go through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferModel<F> {
    pub scenario: Scenario,
    pub features: FeatureMap,
    pub model: LearnerModel<F>,
}

const TRANSFER_MAGIC: &str = "ertl-transfer-model";

impl<F: Scalar> TransferModel<F> {
    pub fn plain(scenario: Scenario, model: LearnerModel<F>) -> Self {
        Self {
            scenario,
            features: FeatureMap::Plain { dim: model.dim },
            model,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.features.input_dim()
    }

    /// p(duplicate) for a raw target similarity vector.
    pub fn predict_proba(&self, x: &[F]) -> Result<F> {
        self.model.predict_proba(&self.features.target(x)?)
    }

    pub fn predict(&self, x: &[F], threshold: F) -> Result<u8> {
        self.model.predict(&self.features.target(x)?, threshold)
    }

    pub fn predict_proba_batch(&self, xs: &[Vec<F>]) -> Result<Vec<F>> {
        xs.par_iter().map(|x| self.predict_proba(x)).collect()
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(format!(
            "{TRANSFER_MAGIC} {} {}\n{}\n",
            learners::MODEL_FORMAT_VERSION,
            std::any::type_name::<F>(),
            serde_json::to_string(self)?
        ))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (head, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::invalid("model text has no header line"))?;
        let fields: Vec<&str> = head.split_whitespace().collect();
        match fields.as_slice() {
            [TRANSFER_MAGIC, version, scalar] => {
                if *version != learners::MODEL_FORMAT_VERSION.to_string() {
                    return Err(Error::invalid(format!(
                        "unsupported model format version {version}"
                    )));
                }
                if *scalar != std::any::type_name::<F>() {
                    return Err(Error::invalid(format!(
                        "model stores {scalar} parameters, expected {}",
                        std::any::type_name::<F>()
                    )));
                }
                Ok(serde_json::from_str(body.trim())?)
            }
            _ => Err(Error::invalid("not a transfer model file")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl WeightSummary {
    pub fn of(w: &[f64]) -> Option<Self> {
        if w.is_empty() {
            return None;
        }
        Some(Self {
            count: w.len(),
            min: w.iter().copied().fold(f64::INFINITY, f64::min),
            max: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: w.iter().sum::<f64>() / w.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub scenario: Scenario,
    pub learner: learners::LearnerKind,
    /// Labeled pairs used per source after budgets and caps.
    pub source_rows: BTreeMap<String, usize>,
    /// Labeled target rows after replication.
    pub target_rows: usize,
    /// Rows contributed by unlabeled target copies.
    pub unlabeled_rows: usize,
    pub training_rows: usize,
    pub model_dim: usize,
    pub source_capped: bool,
    /// Separator-derived source weights, when computed.
    pub instance_weights: Option<WeightSummary>,
    pub seeds: BTreeMap<String, u64>,
    pub epochs: usize,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained<F> {
    pub model: TransferModel<F>,
    pub report: TrainingReport,
}

/// `1/p - 1` with `p` clamped to `[1e-6, 1 - 1e-6]`.
pub fn instance_weight<F: Scalar>(p_source: F) -> F {
    let eps = F::lit(PROBABILITY_CLAMP);
    let p = p_source.max(eps).min(F::one() - eps);
    F::one() / p - F::one()
}

/// Logistic separator with source vectors labeled 1 and target vectors 0,
/// trained with balanced class weights.
pub fn fit_domain_separator<F: Scalar>(
    source_x: &[Vec<F>],
    target_x: &[Vec<F>],
    seed: u64,
) -> Result<LearnerModel<F>> {
    if source_x.is_empty() || target_x.is_empty() {
        return Err(Error::invalid("domain separator needs source and target vectors"));
    }
    let x: Vec<Vec<F>> = source_x.iter().chain(target_x).cloned().collect();
    let mut y = vec![1u8; source_x.len()];
    y.resize(x.len(), 0);
    let spec = separator_spec(seed);
    learners::fit(&spec, &x, &y, &vec![F::one(); x.len()])
}

pub fn separator_spec(seed: u64) -> LearnerSpec {
    LearnerSpec::logistic()
        .with_class_weights(ClassWeights::Balanced)
        .with_seed(seed)
}

/// Per-pair sample weight times the balanced class weight of its group.
fn balanced_weights<F: Scalar>(pairs: &[EncodedPair<F>]) -> Result<Vec<F>> {
    let y = labels(pairs)?;
    let cw = balanced_class_weights(&y);
    Ok(pairs
        .iter()
        .zip(&y)
        .map(|(p, &c)| p.weight * F::lit(cw[usize::from(c)]))
        .collect())
}

fn labels<F>(pairs: &[EncodedPair<F>]) -> Result<Vec<u8>> {
    pairs
        .iter()
        .map(|p| {
            p.label.ok_or_else(|| {
                Error::invalid(format!("pair ({}, {}) has no label", p.left_id, p.right_id))
            })
        })
        .collect()
}

fn check_dims<'a, F: 'a>(dim: usize, pairs: impl IntoIterator<Item = &'a EncodedPair<F>>) -> Result<()> {
    for p in pairs {
        if p.x.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: p.x.len(),
            });
        }
    }
    Ok(())
}

/// Training rows before fitting: model inputs, labels and sample weights.
#[derive(Default)]
struct Rows<F> {
    x: Vec<Vec<F>>,
    y: Vec<u8>,
    w: Vec<F>,
}

impl<F: Scalar> Rows<F> {
    fn push_group(
        &mut self,
        pairs: &[EncodedPair<F>],
        extra: Option<&[F]>,
        map: impl Fn(&[F]) -> Result<Vec<F>>,
    ) -> Result<()> {
        let bw = balanced_weights(pairs)?;
        for (k, p) in pairs.iter().enumerate() {
            self.x.push(map(&p.x)?);
            self.y.push(p.label.unwrap_or(0));
            self.w.push(extra.map_or(bw[k], |e| bw[k] * e[k]));
        }
        Ok(())
    }

    fn fit(&self, spec: &LearnerSpec) -> Result<LearnerModel<F>> {
        let mut spec = spec.clone();
        spec.class_weights = ClassWeights::Uniform;
        learners::fit(&spec, &self.x, &self.y, &self.w)
    }
}

fn base_report<F>(
    scenario: Scenario,
    spec: &LearnerSpec,
    model: &LearnerModel<F>,
    rows: usize,
) -> TrainingReport {
    TrainingReport {
        scenario,
        learner: spec.kind,
        source_rows: BTreeMap::new(),
        target_rows: 0,
        unlabeled_rows: 0,
        training_rows: rows,
        model_dim: model.dim,
        source_capped: false,
        instance_weights: None,
        seeds: BTreeMap::from([("learner".to_string(), spec.seed)]),
        epochs: model.meta.epochs,
        final_loss: model.meta.final_loss,
    }
}

/// Fits on target labels only, with balanced class weights.
pub fn train_not<F: Scalar>(target_labeled: &[EncodedPair<F>], spec: &LearnerSpec) -> Result<LearnerModel<F>> {
    if target_labeled.is_empty() {
        return Err(Error::invalid("no-transfer training needs target labels"));
    }
    let mut rows = Rows::default();
    rows.push_group(target_labeled, None, |x| Ok(x.to_vec()))?;
    rows.fit(spec)
}

/// Fits on pooled source labels, class-balancing each source before pooling.
pub fn train_nvt<F: Scalar, S: AsRef<[EncodedPair<F>]>>(
    sources_labeled: &[S],
    spec: &LearnerSpec,
) -> Result<LearnerModel<F>> {
    if sources_labeled.iter().all(|s| s.as_ref().is_empty()) {
        return Err(Error::invalid("naive transfer needs labeled source pairs"));
    }
    let mut rows = Rows::default();
    for s in sources_labeled {
        let s = s.as_ref();
        if !s.is_empty() {
            rows.push_group(s, None, |x| Ok(x.to_vec()))?;
        }
    }
    rows.fit(spec)
}

/// Importance weights for every labeled pair of every source, from a separator
/// that sees all source pairs against all target pairs.
fn source_instance_weights<F: Scalar>(
    sources: &[SourceData<F>],
    target_x: &[Vec<F>],
    seed: u64,
) -> Result<Vec<Vec<F>>> {
    let source_x: Vec<Vec<F>> = sources
        .iter()
        .flat_map(|s| s.labeled.iter().chain(&s.unlabeled))
        .map(|p| p.x.clone())
        .collect();
    let sep = fit_domain_separator(&source_x, target_x, seed)?;
    sources
        .iter()
        .map(|s| {
            s.labeled
                .par_iter()
                .map(|p| sep.predict_proba(&p.x).map(instance_weight))
                .collect()
        })
        .collect()
}

fn infer_dim<F>(sources: &[SourceData<F>], target: &TargetData<F>) -> Result<usize> {
    sources
        .iter()
        .flat_map(|s| s.labeled.iter().chain(&s.unlabeled))
        .chain(target.labeled.iter().chain(&target.unlabeled))
        .map(|p| p.x.len())
        .next()
        .ok_or_else(|| Error::invalid("no pairs supplied"))
}

/// Checks that the supplied data fits the configured scenario.
pub fn validate_inputs<F>(cfg: &ScenarioConfig, sources: &[SourceData<F>], target: &TargetData<F>) -> Result<()> {
    let s = cfg.scenario;
    let labeled_sources = sources.iter().filter(|s| !s.labeled.is_empty()).count();
    if s.uses_sources() && labeled_sources == 0 {
        return Err(Error::Config(format!("scenario {s} needs at least one labeled source")));
    }
    if s.uses_target_labels() && target.labeled.is_empty() {
        return Err(Error::Config(format!("scenario {s} needs target labels")));
    }
    if s == Scenario::AdequateNothing && !target.labeled.is_empty() {
        return Err(Error::Config(
            "scenario adequate_nothing must not be given target labels".into(),
        ));
    }
    if s == Scenario::AdequateNothing && target.unlabeled.is_empty() {
        return Err(Error::Config(
            "scenario adequate_nothing needs unlabeled target pairs".into(),
        ));
    }
    let dim = infer_dim(sources, target)?;
    check_dims(
        dim,
        sources
            .iter()
            .flat_map(|s| s.labeled.iter().chain(&s.unlabeled))
            .chain(target.labeled.iter().chain(&target.unlabeled)),
    )
}

/// Instance-weighted training for a target without labels.
pub fn train_scenario1<F: Scalar>(
    sources: &[SourceData<F>],
    target_unlabeled: &[EncodedPair<F>],
    cfg: &ScenarioConfig,
) -> Result<Trained<F>> {
    let target = TargetData {
        labeled: Vec::new(),
        unlabeled: target_unlabeled.to_vec(),
    };
    let mut cfg = cfg.clone();
    cfg.scenario = Scenario::AdequateNothing;
    cfg.validate()?;
    validate_inputs(&cfg, sources, &target)?;
    let sep_seed = seed::derive_seed(cfg.seed, "separator");
    let target_x: Vec<Vec<F>> = target_unlabeled.iter().map(|p| p.x.clone()).collect();
    let weights = source_instance_weights(sources, &target_x, sep_seed)?;
    let all_w: Vec<f64> = weights.iter().flatten().map(|w| w.to_f64_lossy()).collect();

    // Weights travel with their pairs through budget sampling.
    let weighted: Vec<Vec<EncodedPair<F>>> = sources
        .iter()
        .zip(&weights)
        .map(|(s, w)| {
            s.labeled
                .iter()
                .zip(w)
                .map(|(p, &wi)| {
                    let mut q = p.clone();
                    q.weight = q.weight * wi;
                    q
                })
                .collect()
        })
        .collect();
    let mut rng = seed::rng(seed::derive_seed(cfg.seed, "imbalance"));
    let out = apply_imbalance_policy(&weighted, &[], &cfg.imbalance, false, |_| unreachable!(), &mut rng)?;

    let spec = cfg.learner_spec();
    let mut rows = Rows::default();
    for pool in out.sources.iter().filter(|p| !p.is_empty()) {
        rows.push_group(pool, None, |x| Ok(x.to_vec()))?;
    }
    let model = rows.fit(&spec)?;
    let mut report = base_report(Scenario::AdequateNothing, &spec, &model, rows.y.len());
    report.source_rows = source_rows(sources, &out.sources);
    report.instance_weights = WeightSummary::of(&all_w);
    report.seeds.insert("separator".into(), sep_seed);
    report.seeds.insert("imbalance".into(), seed::derive_seed(cfg.seed, "imbalance"));
    Ok(Trained {
        model: TransferModel::plain(Scenario::AdequateNothing, model),
        report,
    })
}

fn source_rows<F>(sources: &[SourceData<F>], used: &[Vec<EncodedPair<F>>]) -> BTreeMap<String, usize> {
    sources
        .iter()
        .zip(used)
        .enumerate()
        .map(|(i, (s, u))| {
            let name = if s.name.is_empty() {
                format!("source{}", i + 1)
            } else {
                s.name.clone()
            };
            (name, u.len())
        })
        .collect()
}

/// Feature-augmented training on source and limited target labels.
pub fn train_scenario2<F: Scalar>(
    sources: &[SourceData<F>],
    target: &TargetData<F>,
    cfg: &ScenarioConfig,
) -> Result<Trained<F>> {
    let mut cfg = cfg.clone();
    cfg.scenario = Scenario::AdequateLimited;
    augmented(sources, target, &cfg, false)
}

/// Augmented training that also uses unlabeled target pairs. Without
/// unlabeled pairs this is exactly [`train_scenario2`].
pub fn train_scenario3<F: Scalar>(
    sources: &[SourceData<F>],
    target: &TargetData<F>,
    cfg: &ScenarioConfig,
) -> Result<Trained<F>> {
    if target.unlabeled.is_empty() {
        log::warn!("no unlabeled target pairs; falling back to adequate_limited training");
        return train_scenario2(sources, target, cfg);
    }
    let mut cfg = cfg.clone();
    cfg.scenario = Scenario::LimitedLimited;
    augmented(sources, target, &cfg, true)
}

fn augmented<F: Scalar>(
    sources: &[SourceData<F>],
    target: &TargetData<F>,
    cfg: &ScenarioConfig,
    with_unlabeled: bool,
) -> Result<Trained<F>> {
    cfg.validate()?;
    validate_inputs(cfg, sources, target)?;
    let dim = infer_dim(sources, target)?;
    let n = sources.len();
    let map = FeatureMap::Augmented {
        dim,
        sources: n,
        bias: cfg.augment_bias,
    };
    let sep_seed = seed::derive_seed(cfg.seed, "separator");
    let imb_seed = seed::derive_seed(cfg.seed, "imbalance");
    let mut rng = seed::rng(imb_seed);
    let labeled: Vec<Vec<EncodedPair<F>>> = sources.iter().map(|s| s.labeled.clone()).collect();
    let mut summary = None;
    let out = apply_imbalance_policy(
        &labeled,
        &target.labeled,
        &cfg.imbalance,
        true,
        |_| {
            let tx: Vec<Vec<F>> = target
                .labeled
                .iter()
                .chain(&target.unlabeled)
                .map(|p| p.x.clone())
                .collect();
            let w = source_instance_weights(sources, &tx, sep_seed)?;
            let w: Vec<Vec<f64>> = w
                .into_iter()
                .map(|v| v.into_iter().map(|x| x.to_f64_lossy()).collect())
                .collect();
            summary = WeightSummary::of(&w.concat());
            Ok(w)
        },
        &mut rng,
    )?;

    let mut rows = Rows::default();
    for (i, pool) in out.sources.iter().enumerate() {
        if !pool.is_empty() {
            rows.push_group(pool, None, |x| map.source(x, i + 1))?;
        }
    }
    rows.push_group(&out.target, None, |x| map.target(x))?;
    let mut unlabeled_rows = 0;
    if with_unlabeled {
        let uw = F::lit(cfg.unlabeled_weight);
        for p in &target.unlabeled {
            let u = map.unlabeled(&p.x)?;
            for label in [0u8, 1] {
                rows.x.push(u.clone());
                rows.y.push(label);
                rows.w.push(uw);
            }
            unlabeled_rows += 2;
        }
    }
    let mut spec = cfg.learner_spec();
    if cfg.augment_bias {
        spec.fit_intercept = false;
    }
    let model = rows.fit(&spec)?;
    let mut report = base_report(cfg.scenario, &spec, &model, rows.y.len());
    report.source_rows = source_rows(sources, &out.sources);
    report.target_rows = out.target.len();
    report.unlabeled_rows = unlabeled_rows;
    report.source_capped = out.capped;
    report.instance_weights = summary;
    report.seeds.insert("imbalance".into(), imb_seed);
    if out.capped {
        report.seeds.insert("separator".into(), sep_seed);
    }
    Ok(Trained {
        model: TransferModel {
            scenario: cfg.scenario,
            features: map,
            model,
        },
        report,
    })
}

/// Runs the configured scenario.
pub fn train<F: Scalar>(
    cfg: &ScenarioConfig,
    sources: &[SourceData<F>],
    target: &TargetData<F>,
) -> Result<Trained<F>> {
    cfg.validate()?;
    validate_inputs(cfg, sources, target)?;
    match cfg.scenario {
        Scenario::NoT | Scenario::NvT => {
            let imb_seed = seed::derive_seed(cfg.seed, "imbalance");
            let mut rng = seed::rng(imb_seed);
            let spec = cfg.learner_spec();
            let (model, report) = if cfg.scenario == Scenario::NoT {
                let t = match cfg.imbalance.target_budget {
                    Some(b) => undersample_to_budget(&target.labeled, b, cfg.imbalance.class_ratio, &mut rng)?,
                    None => target.labeled.clone(),
                };
                let model = train_not(&t, &spec)?;
                let mut r = base_report(Scenario::NoT, &spec, &model, t.len());
                r.target_rows = t.len();
                (model, r)
            } else {
                let labeled: Vec<Vec<EncodedPair<F>>> =
                    sources.iter().map(|s| s.labeled.clone()).collect();
                let out = apply_imbalance_policy(
                    &labeled,
                    &[],
                    &cfg.imbalance,
                    false,
                    |_| unreachable!(),
                    &mut rng,
                )?;
                let model = train_nvt(&out.sources, &spec)?;
                let rows = out.sources.iter().map(Vec::len).sum();
                let mut r = base_report(Scenario::NvT, &spec, &model, rows);
                r.source_rows = source_rows(sources, &out.sources);
                (model, r)
            };
            let mut report = report;
            report.seeds.insert("imbalance".into(), imb_seed);
            Ok(Trained {
                model: TransferModel::plain(cfg.scenario, model),
                report,
            })
        }
        Scenario::AdequateNothing => train_scenario1(sources, &target.unlabeled, cfg),
        Scenario::AdequateLimited => train_scenario2(sources, target, cfg),
        Scenario::LimitedLimited => train_scenario3(sources, target, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::Rng;
    use rand::Rng as _;

    fn cluster(rng: &mut Rng, n: usize, centre: f64, label_split: f64, origin: &str) -> Vec<EncodedPair<f64>> {
        (0..n)
            .map(|i| {
                let y = u8::from(rng.random::<f64>() < label_split);
                let shift = if y == 1 { -0.3 } else { 0.3 };
                let x = vec![
                    centre + shift + rng.random::<f64>() * 0.2,
                    centre + rng.random::<f64>() * 0.2,
                ];
                EncodedPair::new(format!("{origin}{i}"), "r", x)
                    .with_label(y)
                    .with_origin(origin)
            })
            .collect()
    }

    #[test]
    fn weight_arithmetic() {
        assert_eq!(instance_weight(0.5_f64), 1.0);
        assert!((instance_weight(2.0_f64 / 3.0) - 0.5).abs() < 1e-15);
        assert!((instance_weight(1.0_f64) - 1e-6 / (1.0 - 1e-6)).abs() < 1e-15);
        assert!((instance_weight(0.0_f64) - (1e6 - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn not_matches_direct_fit_with_balanced_weights() {
        let mut rng = seed::rng(5);
        let pairs = cluster(&mut rng, 40, 0.5, 0.3, "t");
        let spec = LearnerSpec::logistic();
        let via = train_not(&pairs, &spec).unwrap();
        let x: Vec<Vec<f64>> = pairs.iter().map(|p| p.x.clone()).collect();
        let y: Vec<u8> = pairs.iter().map(|p| p.label.unwrap()).collect();
        let direct = learners::fit(
            &spec.clone().with_class_weights(ClassWeights::Balanced),
            &x,
            &y,
            &[1.0; 40],
        )
        .unwrap();
        assert_eq!(via.params, direct.params);
        assert!(train_not::<f64>(&[], &spec).is_err());
    }

    #[test]
    fn nvt_of_one_source_is_not() {
        let mut rng = seed::rng(6);
        let pairs = cluster(&mut rng, 50, 0.5, 0.3, "s");
        let spec = LearnerSpec::logistic();
        assert_eq!(
            train_nvt(&[pairs.clone()], &spec).unwrap().params,
            train_not(&pairs, &spec).unwrap().params
        );
    }

    #[test]
    fn separable_domains_are_separated() {
        let src: Vec<Vec<f64>> = (0..40).map(|i| vec![0.0, (i % 5) as f64 * 0.01]).collect();
        let tgt: Vec<Vec<f64>> = (0..40).map(|i| vec![1.0, (i % 5) as f64 * 0.01]).collect();
        let sep = fit_domain_separator(&src, &tgt, 1).unwrap();
        let hits = src.iter().filter(|x| sep.predict(x, 0.5).unwrap() == 1).count()
            + tgt.iter().filter(|x| sep.predict(x, 0.5).unwrap() == 0).count();
        assert_eq!(hits, 80);
        assert!(fit_domain_separator(&src, &[], 1).is_err());
    }

    #[test]
    fn scenario_validation() {
        let mut rng = seed::rng(7);
        let s = vec![SourceData::new("s", cluster(&mut rng, 30, 0.5, 0.3, "s"))];
        let labeled = TargetData {
            labeled: cluster(&mut rng, 20, 0.5, 0.3, "t"),
            unlabeled: cluster(&mut rng, 20, 0.5, 0.3, "t"),
        };
        let cfg = ScenarioConfig::new(Scenario::AdequateNothing, 1);
        assert!(train(&cfg, &s, &labeled).is_err());
        let cfg = ScenarioConfig::new(Scenario::NoT, 1);
        assert!(train(&cfg, &s, &TargetData::default()).is_err());
        let cfg = ScenarioConfig::new(Scenario::AdequateLimited, 1);
        let t = train(&cfg, &s, &labeled).unwrap();
        assert_eq!(t.model.model.dim, 9);
        assert_eq!(t.report.target_rows, 30);
    }

    #[test]
    fn scenario3_counts_and_fallback() {
        let mut rng = seed::rng(8);
        let s = vec![SourceData::new("s", cluster(&mut rng, 40, 0.5, 0.3, "s"))];
        let mut target = TargetData {
            labeled: cluster(&mut rng, 10, 0.5, 0.3, "t"),
            unlabeled: cluster(&mut rng, 15, 0.5, 0.3, "t"),
        };
        for p in &mut target.unlabeled {
            p.label = None;
        }
        let cfg = ScenarioConfig::new(Scenario::LimitedLimited, 3);
        let t3 = train_scenario3(&s, &target, &cfg).unwrap();
        assert_eq!(t3.report.unlabeled_rows, 30);
        assert_eq!(t3.report.training_rows, 40 + 40 + 30);

        target.unlabeled.clear();
        let t3 = train_scenario3(&s, &target, &cfg).unwrap();
        let t2 = train_scenario2(&s, &target, &cfg).unwrap();
        assert_eq!(t3.model, t2.model);
    }

    #[test]
    fn transfer_model_round_trip() {
        let mut rng = seed::rng(9);
        let s = vec![SourceData::new("s", cluster(&mut rng, 40, 0.5, 0.3, "s"))];
        let target = TargetData {
            labeled: cluster(&mut rng, 10, 0.5, 0.3, "t"),
            unlabeled: Vec::new(),
        };
        let t = train_scenario2(&s, &target, &ScenarioConfig::new(Scenario::AdequateLimited, 1)).unwrap();
        let back = TransferModel::<f64>::from_text(&t.model.to_text().unwrap()).unwrap();
        assert_eq!(back, t.model);
        let x = [0.4, 0.5];
        assert_eq!(back.predict_proba(&x).unwrap(), t.model.predict_proba(&x).unwrap());
    }
}
