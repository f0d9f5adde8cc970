//! Weighted binary classifiers with probability outputs.
//!
//! Every learner takes per-example sample weights; the effective weight of an
//! example is its sample weight times the weight of its class.

mod linear;
mod tree;

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use tree::{leaf_probability, Node, Tree};

use crate::error::{Error, Result};
use crate::scalar::{dot, sigmoid, Scalar};
use crate::seed;
use linear::{minimize, Loss, Problem};
use tree::{fit_tree, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_MAGIC: &str = "ertl-model";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    #[serde(alias = "lr")]
    LogisticRegression,
    #[serde(alias = "dt")]
    DecisionTree,
    #[serde(alias = "rf")]
    RandomForest,
    #[serde(alias = "svm")]
    LinearSvm,
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::LogisticRegression => "logistic_regression",
            LearnerKind::DecisionTree => "decision_tree",
            LearnerKind::RandomForest => "random_forest",
            LearnerKind::LinearSvm => "linear_svm",
        })
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "logistic_regression" | "lr" => LearnerKind::LogisticRegression,
            "decision_tree" | "dt" => LearnerKind::DecisionTree,
            "random_forest" | "rf" => LearnerKind::RandomForest,
            "linear_svm" | "svm" => LearnerKind::LinearSvm,
            other => return Err(Error::Config(format!("unknown learner kind {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ClassWeights {
    Uniform,
    /// `N / (2 N_c)` per class.
    Balanced,
    Explicit { negative: f64, positive: f64 },
}

/// `N / (2 N_c)` for classes 0 and 1, from example counts.
pub fn balanced_class_weights(y: &[u8]) -> [f64; 2] {
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v == 1).count() as f64;
    let neg = n - pos;
    let w = |c: f64| if c > 0.0 { n / (2.0 * c) } else { 0.0 };
    [w(neg), w(pos)]
}

impl ClassWeights {
    pub fn resolve(&self, y: &[u8]) -> [f64; 2] {
        match *self {
            ClassWeights::Uniform => [1.0, 1.0],
            ClassWeights::Balanced => balanced_class_weights(y),
            ClassWeights::Explicit { negative, positive } => [negative, positive],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    /// L2 strength on the normalized objective (linear models).
    pub l2: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
    pub fit_intercept: bool,
    pub max_depth: usize,
    pub n_trees: usize,
    pub class_weights: ClassWeights,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        Self {
            kind,
            l2: 1e-3,
            max_epochs: 500,
            tolerance: 1e-8,
            fit_intercept: true,
            max_depth: 8,
            n_trees: 32,
            class_weights: ClassWeights::Uniform,
            seed: 0,
        }
    }

    pub fn logistic() -> Self {
        Self::new(LearnerKind::LogisticRegression)
    }

    pub fn with_class_weights(mut self, cw: ClassWeights) -> Self {
        self.class_weights = cw;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be finite and non-negative");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if self.max_epochs == 0 || self.max_depth == 0 || self.n_trees == 0 {
            return bad("max_epochs, max_depth and n_trees must be positive");
        }
        if let ClassWeights::Explicit { negative, positive } = self.class_weights {
            if !(negative >= 0.0 && positive >= 0.0 && negative.is_finite() && positive.is_finite())
            {
                return bad("class weights must be finite and non-negative");
            }
        }
        Ok(())
    }
}

impl Default for LearnerSpec {
    fn default() -> Self {
        Self::logistic()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Params<F> {
    Linear {
        weights: Vec<F>,
        intercept: F,
    },
    Svm {
        weights: Vec<F>,
        intercept: F,
        platt_scale: F,
        platt_offset: F,
    },
    Tree(Tree<F>),
    Forest { trees: Vec<Tree<F>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub examples: usize,
    pub epochs: usize,
    /// Final objective value for gradient-trained models.
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerModel<F> {
    pub spec: LearnerSpec,
    pub dim: usize,
    pub params: Params<F>,
    pub meta: TrainingMeta,
}

fn validate_training<F: Scalar>(x: &[Vec<F>], y: &[u8], w: &[F]) -> Result<usize> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vectors, {} labels, {} weights",
            x.len(),
            y.len(),
            w.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("need at least two training examples"));
    }
    let dim = x[0].len();
    for (xi, &wi) in x.iter().zip(w) {
        if xi.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: xi.len(),
            });
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        if !(wi >= F::zero()) || !wi.is_finite() {
            return Err(Error::invalid("sample weights must be finite and non-negative"));
        }
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(Error::invalid("training data contains a single class"));
    }
    Ok(dim)
}

/// Sample weight times class weight.
pub fn effective_weights<F: Scalar>(spec: &LearnerSpec, y: &[u8], w: &[F]) -> Vec<F> {
    let cw = spec.class_weights.resolve(y);
    y.iter()
        .zip(w)
        .map(|(&c, &s)| s * F::lit(cw[usize::from(c)]))
        .collect()
}

/// Trains a model on weighted examples.
pub fn fit<F: Scalar>(
    spec: &LearnerSpec,
    x: &[Vec<F>],
    y: &[u8],
    sample_weights: &[F],
) -> Result<LearnerModel<F>> {
    spec.validate()?;
    let dim = validate_training(x, y, sample_weights)?;
    let ew = effective_weights(spec, y, sample_weights);
    if !(ew.iter().copied().sum::<F>() > F::zero()) {
        return Err(Error::invalid("total training weight is zero"));
    }
    let (params, epochs, final_loss) = match spec.kind {
        LearnerKind::LogisticRegression => {
            let p = Problem::new(x, y, &ew, F::lit(spec.l2), spec.fit_intercept, Loss::Logistic);
            let sol = minimize(&p, spec.max_epochs, F::lit(spec.tolerance));
            let (weights, intercept) = split_theta(sol.theta, dim);
            (
                Params::Linear { weights, intercept },
                sol.epochs,
                Some(sol.objective.to_f64_lossy()),
            )
        }
        LearnerKind::LinearSvm => {
            let p = Problem::new(x, y, &ew, F::lit(spec.l2), spec.fit_intercept, Loss::SmoothHinge);
            let sol = minimize(&p, spec.max_epochs, F::lit(spec.tolerance));
            let objective = sol.objective.to_f64_lossy();
            let (weights, intercept) = split_theta(sol.theta, dim);
            let margins: Vec<Vec<F>> = x
                .iter()
                .map(|xi| vec![dot(&weights, xi) + intercept])
                .collect();
            let platt = Problem::new(&margins, y, &ew, F::lit(1e-6), true, Loss::Logistic);
            let cal = minimize(&platt, spec.max_epochs, F::lit(spec.tolerance));
            (
                Params::Svm {
                    weights,
                    intercept,
                    platt_scale: cal.theta[0],
                    platt_offset: cal.theta[1],
                },
                sol.epochs,
                Some(objective),
            )
        }
        LearnerKind::DecisionTree => {
            let tp = TreeParams {
                max_depth: spec.max_depth,
                max_features: None,
            };
            let tree = fit_tree(x, y, &ew, &tp, &mut seed::rng(spec.seed));
            (Params::Tree(tree), 0, None)
        }
        LearnerKind::RandomForest => (Params::Forest { trees: fit_forest(spec, x, y, &ew)? }, 0, None),
    };
    Ok(LearnerModel {
        spec: spec.clone(),
        dim,
        params,
        meta: TrainingMeta {
            examples: x.len(),
            epochs,
            final_loss,
        },
    })
}

fn split_theta<F: Scalar>(mut theta: Vec<F>, dim: usize) -> (Vec<F>, F) {
    let b = if theta.len() > dim { theta[dim] } else { F::zero() };
    theta.truncate(dim);
    (theta, b)
}

/// Bootstrap by weighted sampling with replacement; the draw counts become
/// the tree's example weights. Tree `t` uses seed `child_seed(seed, t)`.
fn fit_forest<F: Scalar>(
    spec: &LearnerSpec,
    x: &[Vec<F>],
    y: &[u8],
    ew: &[F],
) -> Result<Vec<Tree<F>>> {
    let dim = x[0].len();
    let mtry = ((dim as f64).sqrt().ceil() as usize).max(1);
    let probs: Vec<f64> = ew.iter().map(|w| w.to_f64_lossy()).collect();
    let dist = WeightedIndex::new(&probs)
        .map_err(|e| Error::invalid(format!("bootstrap weights: {e}")))?;
    let tp = TreeParams {
        max_depth: spec.max_depth,
        max_features: Some(mtry),
    };
    Ok((0..spec.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::child_seed(spec.seed, t as u64));
            let mut counts = vec![0u32; x.len()];
            for _ in 0..x.len() {
                counts[dist.sample(&mut rng)] += 1;
            }
            let w: Vec<F> = counts.iter().map(|&c| F::lit(f64::from(c))).collect();
            fit_tree(x, y, &w, &tp, &mut rng)
        })
        .collect())
}

impl<F: Scalar> LearnerModel<F> {
    /// p(y = 1 | x).
    pub fn predict_proba(&self, x: &[F]) -> Result<F> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(match &self.params {
            Params::Linear { weights, intercept } => sigmoid(dot(weights, x) + *intercept),
            Params::Svm {
                weights,
                intercept,
                platt_scale,
                platt_offset,
            } => sigmoid(*platt_scale * (dot(weights, x) + *intercept) + *platt_offset),
            Params::Tree(t) => t.predict_proba(x),
            Params::Forest { trees } => {
                trees.iter().map(|t| t.predict_proba(x)).sum::<F>() / F::lit(trees.len() as f64)
            }
        })
    }

    /// 1 iff p(y = 1 | x) >= threshold.
    pub fn predict(&self, x: &[F], threshold: F) -> Result<u8> {
        if !(threshold > F::zero() && threshold < F::one()) {
            return Err(Error::invalid("threshold must lie in (0, 1)"));
        }
        Ok(u8::from(self.predict_proba(x)? >= threshold))
    }

    pub fn predict_proba_batch(&self, xs: &[Vec<F>]) -> Result<Vec<F>> {
        xs.par_iter().map(|x| self.predict_proba(x)).collect()
    }

    /// Versioned text serialization: a magic line then one JSON document.
    /// Floats use shortest round-trip formatting, so reload is bit-exact.
    pub fn to_text(&self) -> Result<String> {
        let mut s = format!(
            "{MODEL_MAGIC} {MODEL_FORMAT_VERSION} {}\n",
            std::any::type_name::<F>()
        );
        s.push_str(&serde_json::to_string(self)?);
        s.push('\n');
        Ok(s)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (head, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::invalid("model text has no header line"))?;
        let mut parts = head.split_whitespace();
        if parts.next() != Some(MODEL_MAGIC) {
            return Err(Error::invalid("not a model file"));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::invalid("missing model format version"))?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {version}"
            )));
        }
        if let Some(scalar) = parts.next() {
            if scalar != std::any::type_name::<F>() {
                return Err(Error::invalid(format!(
                    "model stores {scalar} parameters, expected {}",
                    std::any::type_name::<F>()
                )));
            }
        }
        Ok(serde_json::from_str(body.trim())?)
    }
}

/// Weighted regularized log-loss objective and analytic gradient at
/// `params = (weights..., intercept)`.
pub fn logistic_objective<F: Scalar>(
    spec: &LearnerSpec,
    x: &[Vec<F>],
    y: &[u8],
    sample_weights: &[F],
    params: &[F],
) -> Result<(F, Vec<F>)> {
    let ew = effective_weights(spec, y, sample_weights);
    let p = Problem::new(x, y, &ew, F::lit(spec.l2), spec.fit_intercept, Loss::Logistic);
    if params.len() != p.n_params() {
        return Err(Error::Dimension {
            expected: p.n_params(),
            actual: params.len(),
        });
    }
    Ok(p.value_grad(params))
}

/// Max relative error between the analytic log-loss gradient and central
/// finite differences (h = 1e-6) at a parameter point drawn from `spec.seed`.
pub fn gradient_check(
    spec: &LearnerSpec,
    x: &[Vec<f64>],
    y: &[u8],
    sample_weights: &[f64],
) -> Result<f64> {
    if spec.kind != LearnerKind::LogisticRegression {
        return Err(Error::invalid("gradient check applies to logistic regression"));
    }
    let dim = x.first().map_or(0, Vec::len);
    let n = dim + usize::from(spec.fit_intercept);
    let mut rng = seed::rng(seed::derive_seed(spec.seed, "gradient-check"));
    let theta: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let (_, grad) = logistic_objective(spec, x, y, sample_weights, &theta)?;
    let h = 1e-6;
    let mut worst = 0.0f64;
    for j in 0..n {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[j] += h;
        minus[j] -= h;
        let fp = logistic_objective(spec, x, y, sample_weights, &plus)?.0;
        let fm = logistic_objective(spec, x, y, sample_weights, &minus)?.0;
        let numeric = (fp - fm) / (2.0 * h);
        let denom = grad[j].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((grad[j] - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<u8>) {
        let x = vec![
            vec![0.1, 0.2],
            vec![0.2, 0.1],
            vec![0.3, 0.3],
            vec![0.9, 0.8],
            vec![0.8, 0.9],
            vec![0.7, 0.7],
        ];
        (x, vec![1, 1, 1, 0, 0, 0])
    }

    fn accuracy(m: &LearnerModel<f64>, x: &[Vec<f64>], y: &[u8]) -> f64 {
        let hits = x
            .iter()
            .zip(y)
            .filter(|(xi, &yi)| m.predict(xi, 0.5).unwrap() == yi)
            .count();
        hits as f64 / y.len() as f64
    }

    #[test]
    fn all_kinds_separate_toy_data() {
        let (x, y) = toy();
        for kind in [
            LearnerKind::LogisticRegression,
            LearnerKind::DecisionTree,
            LearnerKind::RandomForest,
            LearnerKind::LinearSvm,
        ] {
            let mut spec = LearnerSpec::new(kind);
            spec.l2 = 1e-4;
            let m = fit(&spec, &x, &y, &[1.0; 6]).unwrap();
            assert_eq!(accuracy(&m, &x, &y), 1.0, "{kind}");
        }
    }

    #[test]
    fn balanced_weights_formula() {
        let mut y = vec![0u8; 90];
        y.extend([1u8; 10]);
        let [neg, pos] = balanced_class_weights(&y);
        assert!((neg - 100.0 / 180.0).abs() < 1e-12);
        assert!((pos - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = LearnerModel {
            spec: LearnerSpec::logistic(),
            dim: 3,
            params: Params::Linear {
                weights: vec![0.0; 3],
                intercept: 0.0,
            },
            meta: TrainingMeta {
                examples: 0,
                epochs: 0,
                final_loss: None,
            },
        };
        assert_eq!(m.predict_proba(&[5.0, -1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(m.predict(&[5.0, -1.0, 2.0], 0.5).unwrap(), 1);
        assert!(m.predict_proba(&[1.0]).is_err());
        assert!(m.predict(&[0.0; 3], 1.0).is_err());
    }

    #[test]
    fn forest_probability_is_tree_mean() {
        let leaf = |p: f64, n: f64| Tree {
            nodes: vec![Node::Leaf {
                positive: p,
                negative: n,
            }],
        };
        // (0+1)/(3+2) = 0.2 and (2+1)/(3+2) = 0.6
        let m = LearnerModel {
            spec: LearnerSpec::new(LearnerKind::RandomForest),
            dim: 1,
            params: Params::Forest {
                trees: vec![leaf(0.0, 3.0), leaf(2.0, 1.0)],
            },
            meta: TrainingMeta {
                examples: 0,
                epochs: 0,
                final_loss: None,
            },
        };
        assert!((m.predict_proba(&[0.0]).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let (x, y) = toy();
        let spec = LearnerSpec::logistic();
        assert!(fit(&spec, &x, &[1u8; 6], &[1.0; 6]).is_err());
        assert!(fit(&spec, &x, &y, &[0.0; 6]).is_err());
        let mut bad = x.clone();
        bad[0][0] = f64::NAN;
        assert!(fit(&spec, &bad, &y, &[1.0; 6]).is_err());
        assert!(fit(&spec, &x[..1], &y[..1], &[1.0]).is_err());
    }

    #[test]
    fn regularizer_only_gradient() {
        let (x, y) = toy();
        let spec = LearnerSpec::logistic();
        let theta = [0.3, -0.7, 1.1];
        let (f, g) = logistic_objective(&spec, &x, &y, &[0.0; 6], &theta).unwrap();
        let expected: Vec<f64> = theta.iter().map(|t| spec.l2 * t).collect();
        assert_eq!(g, expected);
        assert!((f - spec.l2 / 2.0 * theta.iter().map(|t| t * t).sum::<f64>()).abs() < 1e-18);
    }

    #[test]
    fn zero_weight_example_has_no_gradient_contribution() {
        let (x, y) = toy();
        let spec = LearnerSpec::logistic();
        let theta = [0.3, -0.7, 1.1];
        let mut w = vec![1.0; 6];
        w[2] = 0.0;
        let (_, g1) = logistic_objective(&spec, &x, &y, &w, &theta).unwrap();
        let mut x2 = x.clone();
        x2[2] = vec![100.0, -50.0];
        let (_, g2) = logistic_objective(&spec, &x2, &y, &w, &theta).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn model_text_round_trip_is_exact() {
        let (x, y) = toy();
        for kind in [LearnerKind::LinearSvm, LearnerKind::RandomForest] {
            let m = fit(&LearnerSpec::new(kind), &x, &y, &[1.0; 6]).unwrap();
            let back = LearnerModel::<f64>::from_text(&m.to_text().unwrap()).unwrap();
            assert_eq!(back.params, m.params);
            assert_eq!(back.spec, m.spec);
        }
        let m = fit(&LearnerSpec::logistic(), &x, &y, &[1.0; 6]).unwrap();
        assert!(LearnerModel::<f32>::from_text(&m.to_text().unwrap()).is_err());
        assert!(LearnerModel::<f64>::from_text("ertl-model 99\n{}").is_err());
    }

    #[test]
    fn f32_models_train() {
        let (x, y) = toy();
        let x32: Vec<Vec<f32>> = x
            .iter()
            .map(|r| r.iter().map(|&v| v as f32).collect())
            .collect();
        let m = fit(&LearnerSpec::logistic(), &x32, &y, &[1.0f32; 6]).unwrap();
        assert!(m.predict_proba(&[0.1, 0.1]).unwrap() > 0.5);
    }
}
