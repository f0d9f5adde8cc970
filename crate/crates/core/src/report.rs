//! Run summaries: F1 of the configured model and its differences from the
//! target-only and source-only baselines, as JSON and as `key: value` text.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::LearnerKind;
use crate::pipeline::RunMetrics;
use crate::transfer::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: Scenario,
    pub learner: LearnerKind,
    pub evaluated_pairs: usize,
    /// F1 on held-out target pairs, keyed by scenario name.
    pub f1: BTreeMap<String, f64>,
    /// Configured model's F1 minus the target-only baseline's.
    pub delta_vs_not: Option<f64>,
    /// Configured model's F1 minus the source-only baseline's.
    pub delta_vs_nvt: Option<f64>,
    pub estimated_f1: Option<f64>,
}

pub fn summarize(m: &RunMetrics) -> Summary {
    let f1: BTreeMap<String, f64> = m.models.iter().map(|(k, r)| (k.clone(), r.f1)).collect();
    let own = f1.get(m.scenario.name()).copied();
    let delta = |baseline: Scenario| Some(own? - f1.get(baseline.name())?);
    Summary {
        scenario: m.scenario,
        learner: m.learner,
        evaluated_pairs: m.evaluated_pairs,
        delta_vs_not: delta(Scenario::NoT),
        delta_vs_nvt: delta(Scenario::NvT),
        estimated_f1: m.estimate.as_ref().map(|e| e.estimate.f1),
        f1,
    }
}

const NONE: &str = "n/a";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NONE.to_string(), |x| x.to_string())
}

fn parse_opt(key: &str, v: &str) -> Result<Option<f64>> {
    if v == NONE {
        return Ok(None);
    }
    v.parse()
        .map(Some)
        .map_err(|_| Error::invalid(format!("{key}: not a number: {v:?}")))
}

fn from_name<T: serde::de::DeserializeOwned>(key: &str, v: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(v.to_string()))
        .map_err(|_| Error::invalid(format!("{key}: unknown value {v:?}")))
}

/// Serialized name of a unit enum variant.
fn serde_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

impl Summary {
    /// One `key: value` per line; numbers print in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", serde_name(&self.scenario));
        let _ = writeln!(s, "learner: {}", serde_name(&self.learner));
        let _ = writeln!(s, "evaluated_pairs: {}", self.evaluated_pairs);
        for (k, v) in &self.f1 {
            let _ = writeln!(s, "f1.{k}: {v}");
        }
        let _ = writeln!(s, "delta_vs_not: {}", opt(self.delta_vs_not));
        let _ = writeln!(s, "delta_vs_nvt: {}", opt(self.delta_vs_nvt));
        let _ = writeln!(s, "estimated_f1: {}", opt(self.estimated_f1));
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        let mut f1 = BTreeMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(": ")
                .ok_or_else(|| Error::invalid(format!("line {}: expected `key: value`", i + 1)))?;
            if let Some(model) = k.strip_prefix("f1.") {
                let x = parse_opt(k, v)?.ok_or_else(|| Error::invalid(format!("{k}: missing value")))?;
                f1.insert(model.to_string(), x);
            } else if fields.insert(k, v).is_some() {
                return Err(Error::invalid(format!("duplicate key {k}")));
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::invalid(format!("missing key {k}")))
        };
        Ok(Self {
            scenario: from_name("scenario", get("scenario")?)?,
            learner: from_name("learner", get("learner")?)?,
            evaluated_pairs: get("evaluated_pairs")?
                .parse()
                .map_err(|_| Error::invalid("evaluated_pairs: not an integer"))?,
            f1,
            delta_vs_not: parse_opt("delta_vs_not", get("delta_vs_not")?)?,
            delta_vs_nvt: parse_opt("delta_vs_nvt", get("delta_vs_nvt")?)?,
            estimated_f1: parse_opt("estimated_f1", get("estimated_f1")?)?,
        })
    }
}
