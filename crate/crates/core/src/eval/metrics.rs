use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset_io::LabeledPairs;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn record(&mut self, predicted: u8, truth: u8) {
        match (predicted, truth) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

/// Precision, recall and F1 from (possibly fractional) counts; each ratio is
/// 0 when its denominator is 0.
pub fn prf(tp: f64, fp: f64, fn_: f64) -> (f64, f64, f64) {
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    (p, r, f1(p, r))
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

impl MetricsReport {
    pub fn from_confusion(c: Confusion) -> Self {
        let (precision, recall, f1) = prf(c.tp as f64, c.fp as f64, c.fn_ as f64);
        Self {
            precision,
            recall,
            f1,
            confusion: c,
        }
    }
}

/// Compares predictions keyed by `(left_id, right_id)` against truth.
pub fn exact_metrics<'a>(
    predictions: impl IntoIterator<Item = (&'a str, &'a str, u8)>,
    truth: &LabeledPairs,
) -> Result<MetricsReport> {
    let map: HashMap<(&str, &str), u8> = truth
        .entries
        .iter()
        .map(|e| ((e.left_id.as_str(), e.right_id.as_str()), e.label))
        .collect();
    let mut c = Confusion::default();
    for (l, r, pred) in predictions {
        let t = map
            .get(&(l, r))
            .ok_or_else(|| Error::invalid(format!("no truth label for pair ({l}, {r})")))?;
        c.record(pred, *t);
    }
    Ok(MetricsReport::from_confusion(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::LabeledPair;

    fn truth(labels: &[u8]) -> LabeledPairs {
        LabeledPairs::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, &label)| LabeledPair {
                    left_id: format!("l{i}"),
                    right_id: format!("r{i}"),
                    label,
                })
                .collect(),
        )
        .unwrap()
    }

    fn ids(n: usize) -> Vec<(String, String)> {
        (0..n).map(|i| (format!("l{i}"), format!("r{i}"))).collect()
    }

    fn run(labels: &[u8], preds: &[u8]) -> MetricsReport {
        let ids = ids(labels.len());
        exact_metrics(
            ids.iter().zip(preds).map(|((l, r), &p)| (l.as_str(), r.as_str(), p)),
            &truth(labels),
        )
        .unwrap()
    }

    #[test]
    fn all_correct() {
        let m = run(&[1, 0, 1, 0], &[1, 0, 1, 0]);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_negative_predictions() {
        let m = run(&[1, 0, 1, 0], &[0, 0, 0, 0]);
        assert_eq!((m.recall, m.f1), (0.0, 0.0));
    }

    #[test]
    fn hand_tally_of_twenty() {
        let labels = [1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
        let preds = [1, 1, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1];
        let m = run(&labels, &preds);
        assert_eq!(
            m.confusion,
            Confusion {
                tp: 4,
                fp: 3,
                tn: 10,
                fn_: 3
            }
        );
        assert!((m.precision - 4.0 / 7.0).abs() < 1e-15);
        assert!((m.recall - 4.0 / 7.0).abs() < 1e-15);
        assert!((m.f1 - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn missing_truth_is_an_error() {
        let t = truth(&[1]);
        assert!(exact_metrics([("x", "y", 1)], &t).is_err());
    }
}
