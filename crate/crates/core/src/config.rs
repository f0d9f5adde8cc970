//! Run configuration: a flat TOML file of dotted keys, with `ERTL_*`
//! environment overrides. `ERTL_BLOCK_MIN_SHARED_TOKENS=2` sets
//! `block.min_shared_tokens`; `ERTL_SOURCE_DBLP_PAIRS` sets
//! `source.dblp.pairs` for a source named in the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset_io::{BlockConfig, ClassRatio, DEFAULT_STOP_TOKENS};
use crate::embedding::{OovPolicy, DEFAULT_WINDOW};
use crate::encoder::{Composition, DEFAULT_SIF_A};
use crate::error::{Error, Result};
use crate::eval::{Allocation, EstimateConfig, DEFAULT_STRATA};
use crate::learners::{ClassWeights, LearnerKind, LearnerSpec};
use crate::transfer::{ImbalancePolicy, Scenario, ScenarioConfig};

pub const ENV_PREFIX: &str = "ERTL_";

/// Scalar keys accepted at the top level and in fixed sections.
pub const KEYS: &[&str] = &[
    "seed",
    "scenario",
    "out",
    "threshold",
    "baselines",
    "learner.kind",
    "learner.l2",
    "learner.max_epochs",
    "learner.tolerance",
    "learner.max_depth",
    "learner.n_trees",
    "transfer.unlabeled_weight",
    "transfer.augment_bias",
    "transfer.max_imbalance_ratio",
    "transfer.positive_share",
    "transfer.negative_share",
    "transfer.source_budget",
    "transfer.target_budget",
    "encode.embeddings",
    "encode.composition",
    "encode.sif_a",
    "encode.remove_first_pc",
    "encode.oov_window",
    "encode.rare_min_count",
    "block.min_shared_tokens",
    "block.stop_tokens",
    "estimate.budget",
    "estimate.strata",
    "estimate.allocation",
];

/// Keys of `target.*` and `source.<name>.*`.
pub const DOMAIN_KEYS: &[&str] = &[
    "pairs",
    "left",
    "right",
    "left_id",
    "right_id",
    "labels",
    "label_fraction",
    "unlabeled_fraction",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSection {
    pub kind: LearnerKind,
    pub l2: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
    pub max_depth: usize,
    pub n_trees: usize,
}

impl Default for LearnerSection {
    fn default() -> Self {
        let d = LearnerSpec::default();
        Self {
            kind: d.kind,
            l2: d.l2,
            max_epochs: d.max_epochs,
            tolerance: d.tolerance,
            max_depth: d.max_depth,
            n_trees: d.n_trees,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    pub unlabeled_weight: f64,
    pub augment_bias: bool,
    pub max_imbalance_ratio: f64,
    pub positive_share: u32,
    pub negative_share: u32,
    pub source_budget: Option<usize>,
    pub target_budget: Option<usize>,
}

impl Default for TransferSection {
    fn default() -> Self {
        let p = ImbalancePolicy::default();
        Self {
            unlabeled_weight: 1.0,
            augment_bias: true,
            max_imbalance_ratio: p.max_imbalance_ratio,
            positive_share: p.class_ratio.positive,
            negative_share: p.class_ratio.negative,
            source_budget: None,
            target_budget: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionKind {
    Sif,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeSection {
    pub embeddings: Option<PathBuf>,
    pub composition: CompositionKind,
    pub sif_a: f64,
    pub remove_first_pc: bool,
    pub oov_window: usize,
    /// Dictionary words rarer than this are also re-inferred from context.
    pub rare_min_count: Option<u64>,
}

impl Default for EncodeSection {
    fn default() -> Self {
        Self {
            embeddings: None,
            composition: CompositionKind::Sif,
            sif_a: DEFAULT_SIF_A,
            remove_first_pc: false,
            oov_window: DEFAULT_WINDOW,
            rare_min_count: None,
        }
    }
}

impl EncodeSection {
    pub fn composition(&self) -> Composition {
        match self.composition {
            CompositionKind::Sif => Composition::Sif { a: self.sif_a },
            CompositionKind::Mean => Composition::Mean,
        }
    }

    pub fn oov_policy(&self) -> OovPolicy {
        OovPolicy {
            window_k: self.oov_window,
            rare_min_count: self.rare_min_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockSection {
    pub min_shared_tokens: usize,
    pub stop_tokens: usize,
}

impl Default for BlockSection {
    fn default() -> Self {
        Self {
            min_shared_tokens: 1,
            stop_tokens: DEFAULT_STOP_TOKENS,
        }
    }
}

impl From<&BlockSection> for BlockConfig {
    fn from(b: &BlockSection) -> Self {
        BlockConfig {
            min_shared_tokens: b.min_shared_tokens,
            stop_tokens: b.stop_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    /// Labels to spend; no estimate is made when unset.
    pub budget: Option<usize>,
    pub strata: usize,
    pub allocation: Allocation,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            budget: None,
            strata: DEFAULT_STRATA,
            allocation: Allocation::Neyman,
        }
    }
}

/// One domain: either a file of encoded pairs, or two relations to block
/// and encode (`right` omitted means deduplicating `left`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainInput {
    pub pairs: Option<PathBuf>,
    pub left: Option<PathBuf>,
    pub right: Option<PathBuf>,
    pub left_id: String,
    pub right_id: String,
    /// `left_id,right_id,label` file; labels override any in `pairs`.
    pub labels: Option<PathBuf>,
    /// Share of labeled pairs used for training.
    pub label_fraction: Option<f64>,
    /// Share of the remaining target pairs offered as unlabeled data.
    pub unlabeled_fraction: f64,
}

impl Default for DomainInput {
    fn default() -> Self {
        Self {
            pairs: None,
            left: None,
            right: None,
            left_id: "id".into(),
            right_id: "id".into(),
            labels: None,
            label_fraction: None,
            unlabeled_fraction: 1.0,
        }
    }
}

impl DomainInput {
    pub fn from_pairs(path: impl Into<PathBuf>) -> Self {
        Self {
            pairs: Some(path.into()),
            ..Self::default()
        }
    }

    pub fn needs_encoding(&self) -> bool {
        self.pairs.is_none()
    }

    fn paths_mut(&mut self) -> [&mut Option<PathBuf>; 4] {
        [&mut self.pairs, &mut self.left, &mut self.right, &mut self.labels]
    }

    fn validate(&self, name: &str) -> Result<()> {
        let err = |m: String| Err(Error::Config(format!("{name}: {m}")));
        match (&self.pairs, &self.left) {
            (Some(_), Some(_)) => return err("set either pairs or left/right, not both".into()),
            (None, None) => return err("needs pairs or left".into()),
            (None, Some(_)) | (Some(_), None) => {}
        }
        if self.pairs.is_some() && self.right.is_some() {
            return err("right is only used with left".into());
        }
        for p in [&self.pairs, &self.left, &self.right, &self.labels].into_iter().flatten() {
            if !p.is_file() {
                return err(format!("file {} does not exist", p.display()));
            }
        }
        if let Some(f) = self.label_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return err(format!("label_fraction {f} must lie in (0, 1]"));
            }
        }
        if !(self.unlabeled_fraction > 0.0 && self.unlabeled_fraction <= 1.0) {
            return err(format!(
                "unlabeled_fraction {} must lie in (0, 1]",
                self.unlabeled_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub scenario: Option<Scenario>,
    pub out: Option<PathBuf>,
    pub threshold: f64,
    /// Also train the target-only and source-only baselines for comparison.
    pub baselines: bool,
    pub learner: LearnerSection,
    pub transfer: TransferSection,
    pub encode: EncodeSection,
    pub block: BlockSection,
    pub estimate: EstimateSection,
    pub target: DomainInput,
    pub source: BTreeMap<String, DomainInput>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            scenario: None,
            out: None,
            threshold: 0.5,
            baselines: true,
            learner: LearnerSection::default(),
            transfer: TransferSection::default(),
            encode: EncodeSection::default(),
            block: BlockSection::default(),
            estimate: EstimateSection::default(),
            target: DomainInput::default(),
            source: BTreeMap::new(),
        }
    }
}

/// Parses an environment value as a TOML value, falling back to a string.
fn env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn env_name(key: &str) -> String {
    let mut s = String::from(ENV_PREFIX);
    s.extend(key.chars().map(|c| {
        if c.is_ascii_alphanumeric() {
            c.to_ascii_uppercase()
        } else {
            '_'
        }
    }));
    s
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Every key an environment variable may set, given the sources in `table`.
fn overridable_keys(table: &toml::Table) -> Vec<String> {
    let mut keys: Vec<String> = KEYS.iter().map(|k| k.to_string()).collect();
    keys.extend(DOMAIN_KEYS.iter().map(|k| format!("target.{k}")));
    if let Some(sources) = table.get("source").and_then(toml::Value::as_table) {
        for name in sources.keys() {
            keys.extend(DOMAIN_KEYS.iter().map(|k| format!("source.{name}.{k}")));
        }
    }
    keys
}

/// Applies `ERTL_*` overrides from `vars` to a parsed table.
pub fn apply_overrides(
    table: &mut toml::Table,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<Vec<String>> {
    let by_env: BTreeMap<String, String> = overridable_keys(table)
        .into_iter()
        .map(|k| (env_name(&k), k))
        .collect();
    let mut applied = Vec::new();
    for (name, raw) in vars {
        if !name.starts_with(ENV_PREFIX) {
            continue;
        }
        match by_env.get(&name) {
            Some(key) => {
                set_dotted(table, key, env_value(&raw))?;
                applied.push(key.clone());
            }
            None => log::warn!("ignoring {name}: no matching configuration key"),
        }
    }
    applied.sort();
    Ok(applied)
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl PipelineConfig {
    /// Parses TOML text without environment overrides.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Reads a TOML config, or the config inside a run manifest (`.json`),
    /// then applies `ERTL_*` overrides from `vars`. Relative paths are
    /// resolved against the file's directory.
    pub fn load(
        path: Option<&Path>,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut table = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                if p.extension().is_some_and(|e| e == "json") {
                    let manifest: crate::pipeline::Manifest = serde_json::from_str(&text)?;
                    toml::Table::try_from(&manifest.config)
                        .map_err(|e| Error::Config(e.to_string()))?
                } else {
                    text.parse()
                        .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", p.display())))?
                }
            }
        };
        let applied = apply_overrides(&mut table, vars)?;
        for k in &applied {
            log::info!("{k} set from the environment");
        }
        let mut cfg = Self::from_table(table)?;
        let base = path
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    /// Makes every relative input path relative to `base` instead.
    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.encode.embeddings);
        for d in std::iter::once(&mut self.target).chain(self.source.values_mut()) {
            for p in d.paths_mut() {
                resolve(base, p);
            }
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn scenario(&self) -> Result<Scenario> {
        self.scenario
            .ok_or_else(|| Error::Config("scenario is not set".into()))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("seed is not set".into()))
    }

    pub fn learner_spec(&self) -> LearnerSpec {
        let l = &self.learner;
        LearnerSpec {
            kind: l.kind,
            l2: l.l2,
            max_epochs: l.max_epochs,
            tolerance: l.tolerance,
            fit_intercept: true,
            max_depth: l.max_depth,
            n_trees: l.n_trees,
            class_weights: ClassWeights::Uniform,
            seed: 0,
        }
    }

    pub fn scenario_config(&self, scenario: Scenario) -> Result<ScenarioConfig> {
        let t = &self.transfer;
        Ok(ScenarioConfig {
            scenario,
            imbalance: ImbalancePolicy {
                max_imbalance_ratio: t.max_imbalance_ratio,
                class_ratio: ClassRatio {
                    positive: t.positive_share,
                    negative: t.negative_share,
                },
                source_budget: t.source_budget,
                target_budget: t.target_budget,
            },
            unlabeled_weight: t.unlabeled_weight,
            augment_bias: t.augment_bias,
            seed: self.seed()?,
            learner: self.learner_spec(),
        })
    }

    pub fn estimate_config(&self) -> Result<Option<EstimateConfig>> {
        let seed = crate::seed::derive_seed(self.seed()?, "estimate");
        Ok(self.estimate.budget.map(|budget| EstimateConfig {
            budget,
            strata: self.estimate.strata,
            allocation: self.estimate.allocation,
            threshold: self.threshold,
            seed,
        }))
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<()> {
        let scenario = self.scenario()?;
        self.seed()?;
        if self.out.is_none() {
            return Err(Error::Config("out is not set".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config("threshold must lie in (0, 1)".into()));
        }
        self.scenario_config(scenario)?.validate()?;
        self.target.validate("target")?;
        for (name, d) in &self.source {
            d.validate(&format!("source.{name}"))?;
            if d.unlabeled_fraction != 1.0 {
                return Err(Error::Config(format!(
                    "source.{name}: unlabeled_fraction applies to the target only"
                )));
            }
        }
        let encodes = std::iter::once(&self.target)
            .chain(self.source.values())
            .any(DomainInput::needs_encoding);
        if encodes {
            match &self.encode.embeddings {
                None => return Err(Error::Config("encode.embeddings is needed to encode relations".into())),
                Some(p) if !p.is_file() => {
                    return Err(Error::Config(format!("file {} does not exist", p.display())))
                }
                Some(_) => {}
            }
            if !(self.encode.sif_a > 0.0) {
                return Err(Error::Config("encode.sif_a must be positive".into()));
            }
            if self.encode.oov_window == 0 || self.block.min_shared_tokens == 0 {
                return Err(Error::Config(
                    "encode.oov_window and block.min_shared_tokens must be >= 1".into(),
                ));
            }
        }
        if scenario.uses_sources() && self.source.is_empty() {
            return Err(Error::Config(format!("scenario {scenario} needs at least one source")));
        }
        let target_labels = self.target.label_fraction.is_some();
        if scenario.uses_target_labels() && !target_labels {
            return Err(Error::Config(format!(
                "scenario {scenario} needs target.label_fraction"
            )));
        }
        if scenario == Scenario::AdequateNothing && target_labels {
            return Err(Error::Config(
                "scenario adequate_nothing trains without target labels; unset target.label_fraction".into(),
            ));
        }
        if let Some(b) = self.estimate.budget {
            if b == 0 || self.estimate.strata < 2 {
                return Err(Error::Config("estimate.budget must be >= 1 and estimate.strata >= 2".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_parse() {
        let cfg = PipelineConfig::from_toml_str(
            r#"
            seed = 7
            scenario = "s2"
            learner.kind = "rf"
            block.min_shared_tokens = 2
            target.pairs = "t.csv"
            target.label_fraction = 0.1
            source.dblp.pairs = "s.csv"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.scenario, Some(Scenario::AdequateLimited));
        assert_eq!(cfg.learner.kind, LearnerKind::RandomForest);
        assert_eq!(cfg.block.min_shared_tokens, 2);
        assert_eq!(cfg.source["dblp"].pairs, Some(PathBuf::from("s.csv")));
        assert_eq!(cfg.target.label_fraction, Some(0.1));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml_str("sead = 1").is_err());
        assert!(PipelineConfig::from_toml_str("learner.kindd = \"lr\"").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut t: toml::Table = "source.dblp.pairs = \"a.csv\"".parse().unwrap();
        let vars = [
            ("ERTL_BLOCK_MIN_SHARED_TOKENS", "3"),
            ("ERTL_SCENARIO", "s1"),
            ("ERTL_SOURCE_DBLP_PAIRS", "b.csv"),
            ("ERTL_LEARNER_L2", "0.5"),
            ("ERTL_NOT_A_KEY", "1"),
            ("HOME", "/root"),
        ]
        .map(|(a, b)| (a.to_string(), b.to_string()));
        let applied = apply_overrides(&mut t, vars).unwrap();
        assert_eq!(applied.len(), 4);
        let cfg = PipelineConfig::from_table(t).unwrap();
        assert_eq!(cfg.block.min_shared_tokens, 3);
        assert_eq!(cfg.scenario, Some(Scenario::AdequateNothing));
        assert_eq!(cfg.source["dblp"].pairs, Some(PathBuf::from("b.csv")));
        assert_eq!(cfg.learner.l2, 0.5);
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.seed = Some(3);
        cfg.scenario = Some(Scenario::LimitedLimited);
        cfg.source.insert("a".into(), DomainInput::from_pairs("a.csv"));
        cfg.estimate.budget = Some(40);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn validation_needs_seed_scenario_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("p.csv");
        std::fs::write(&f, "left_id,right_id,label,weight,x_0\n").unwrap();
        let mut cfg = PipelineConfig {
            out: Some(dir.path().join("out")),
            target: DomainInput::from_pairs(&f),
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.seed = Some(1);
        cfg.scenario = Some(Scenario::NoT);
        assert!(cfg.validate().unwrap_err().to_string().contains("label_fraction"));
        cfg.target.label_fraction = Some(0.5);
        cfg.validate().unwrap();
        cfg.scenario = Some(Scenario::AdequateNothing);
        cfg.source.insert("s".into(), DomainInput::from_pairs(&f));
        assert!(cfg.validate().is_err());
        cfg.target.label_fraction = None;
        cfg.validate().unwrap();
        cfg.target.label_fraction = Some(1.5);
        assert!(cfg.validate().is_err());
        cfg.target = DomainInput::from_pairs(dir.path().join("missing.csv"));
        assert!(cfg.validate().unwrap_err().to_string().contains("does not exist"));
    }
}
