use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// A rate that may be undefined because its denominator is zero.
/// Serialized as a number or the string `"undefined"`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metric(pub Option<f64>);

impl Metric {
    pub const UNDEFINED: Metric = Metric(None);

    pub fn ratio(num: f64, den: f64) -> Metric {
        if den == 0.0 {
            Metric(None)
        } else {
            Metric(Some(num / den))
        }
    }

    pub fn value(self) -> Option<f64> {
        self.0
    }

    pub fn is_defined(self) -> bool {
        self.0.is_some()
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v:.4}"),
            None => f.write_str("undefined"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Metric;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"undefined\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Metric, E> {
                Ok(Metric(Some(v)))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Metric, E> {
                Ok(Metric(Some(v as f64)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Metric, E> {
                Ok(Metric(Some(v as f64)))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Metric, E> {
                if v == "undefined" {
                    Ok(Metric(None))
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
            fn visit_unit<E: de::Error>(self) -> std::result::Result<Metric, E> {
                Ok(Metric(None))
            }
        }
        d.deserialize_any(V)
    }
}

/// Mean of the defined values; undefined when there are none.
pub fn mean_defined(values: impl IntoIterator<Item = Metric>) -> Metric {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.into_iter().filter_map(Metric::value) {
        sum += v;
        n += 1;
    }
    Metric::ratio(sum, n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&mut self, label: bool, pred: bool) {
        match (label, pred) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn metrics(&self) -> Metrics {
        let (tp, tn, fp, fn_) = (
            self.tp as f64,
            self.tn as f64,
            self.fp as f64,
            self.fn_ as f64,
        );
        let recall = Metric::ratio(tp, tp + fn_);
        let specificity = Metric::ratio(tn, tn + fp);
        let balanced = match (recall.0, specificity.0) {
            (Some(r), Some(s)) => Metric(Some((r + s) / 2.0)),
            _ => Metric::UNDEFINED,
        };
        Metrics {
            accuracy: Metric::ratio(tp + tn, tp + tn + fp + fn_),
            balanced_accuracy: balanced,
            precision: Metric::ratio(tp, tp + fp),
            recall,
            f1: Metric::ratio(2.0 * tp, 2.0 * tp + fp + fn_),
        }
    }
}

/// Counts over paired binary labels and predictions.
pub fn confusion(labels: &[bool], preds: &[bool]) -> Result<ConfusionMatrix> {
    if labels.len() != preds.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} predictions",
            labels.len(),
            preds.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Empty("confusion matrix of no samples".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&l, &p) in labels.iter().zip(preds) {
        cm.add(l, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Metric,
    pub balanced_accuracy: Metric,
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
}

impl Metrics {
    /// Field-wise mean over defined values.
    pub fn mean(items: &[Metrics]) -> Metrics {
        Metrics {
            accuracy: mean_defined(items.iter().map(|m| m.accuracy)),
            balanced_accuracy: mean_defined(items.iter().map(|m| m.balanced_accuracy)),
            precision: mean_defined(items.iter().map(|m| m.precision)),
            recall: mean_defined(items.iter().map(|m| m.recall)),
            f1: mean_defined(items.iter().map(|m| m.f1)),
        }
    }
}
