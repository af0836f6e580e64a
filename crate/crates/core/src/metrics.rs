//! Confusion matrices, macro-averaged metrics, and M ± SD aggregation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    pub fn per_class(&self) -> Vec<ClassMetrics> {
        (0..self.num_classes())
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let ratio = |den: u64| if den == 0 { 0.0 } else { tp / den as f64 };
                let precision = ratio(self.col_sum(c));
                let recall = ratio(self.row_sum(c));
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support: self.row_sum(c),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

pub fn confusion(preds: &[usize], labels: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &t) in preds.iter().zip(labels) {
        for c in [p, t] {
            if c >= k {
                return Err(Error::ClassOutOfRange {
                    class: c,
                    num_classes: k,
                });
            }
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricSet {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Accuracy => self.accuracy,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Accuracy => "Accuracy",
            Metric::Precision => "Precision",
            Metric::Recall => "Recall",
            Metric::F1 => "F1",
        }
    }
}

/// Accuracy plus macro-averaged precision, recall and F1.
pub fn metric_set(cm: &ConfusionMatrix) -> Result<MetricSet> {
    let total = cm.total();
    if cm.num_classes() == 0 || total == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let trace: u64 = (0..cm.num_classes()).map(|c| cm.counts[c][c]).sum();
    let per = cm.per_class();
    let k = per.len() as f64;
    Ok(MetricSet {
        accuracy: trace as f64 / total as f64,
        precision: per.iter().map(|c| c.precision).sum::<f64>() / k,
        recall: per.iter().map(|c| c.recall).sum::<f64>() / k,
        f1: per.iter().map(|c| c.f1).sum::<f64>() / k,
    })
}

/// Mean recall over classes that occur in the labels; equals accuracy on a
/// class-balanced reweighting of the evaluated windows.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let present: Vec<ClassMetrics> = cm.per_class().into_iter().filter(|c| c.support > 0).collect();
    if present.is_empty() {
        return Err(Error::Empty("confusion matrix"));
    }
    Ok(present.iter().map(|c| c.recall).sum::<f64>() / present.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl fmt::Display for MeanSd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.sd)
    }
}

impl MeanSd {
    /// Arithmetic mean and sample SD (divisor n − 1, zero for one value).
    /// Sums run over sorted values so input order cannot change the bits.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("values"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let sd = if sorted.len() == 1 {
            0.0
        } else {
            (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Self { mean, sd })
    }

    /// Inverse of the `Display` format.
    pub fn parse(s: &str) -> Option<Self> {
        let (m, sd) = s.split_once('±')?;
        Some(Self {
            mean: m.trim().parse().ok()?,
            sd: sd.trim().parse().ok()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub accuracy: MeanSd,
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub f1: MeanSd,
}

impl AggregateMetrics {
    pub fn get(&self, m: Metric) -> MeanSd {
        match m {
            Metric::Accuracy => self.accuracy,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
        }
    }
}

pub fn aggregate(per_fold: &[MetricSet]) -> Result<AggregateMetrics> {
    if per_fold.is_empty() {
        return Err(Error::Empty("fold metrics"));
    }
    let col = |m: Metric| MeanSd::of(&per_fold.iter().map(|s| s.get(m)).collect::<Vec<_>>());
    Ok(AggregateMetrics {
        accuracy: col(Metric::Accuracy)?,
        precision: col(Metric::Precision)?,
        recall: col(Metric::Recall)?,
        f1: col(Metric::F1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix {
            counts: rows.iter().map(|r| r.to_vec()).collect(),
        }
    }

    #[test]
    fn confusion_counts() {
        assert_eq!(confusion(&[0, 1, 0, 1], &[0, 1, 0, 1], 2).unwrap(), cm(&[&[2, 0], &[0, 2]]));
        assert_eq!(confusion(&[0, 0, 0, 0], &[0, 1, 0, 1], 2).unwrap(), cm(&[&[2, 0], &[2, 0]]));
        assert!(matches!(confusion(&[], &[], 2), Err(Error::Empty(_))));
        assert!(confusion(&[0], &[0, 1], 2).is_err());
        assert!(confusion(&[2], &[0], 2).is_err());
    }

    #[test]
    fn perfect_and_symmetric() {
        let m = metric_set(&cm(&[&[2, 0], &[0, 2]])).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        let m = metric_set(&cm(&[&[1, 1], &[1, 1]])).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (0.5, 0.5, 0.5, 0.5));
    }

    #[test]
    fn three_class_hand_example() {
        let m = metric_set(&cm(&[&[5, 0, 0], &[0, 0, 5], &[0, 0, 5]])).unwrap();
        assert_eq!(m.accuracy, 10.0 / 15.0);
        assert!((m.precision - 0.5).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - (1.0 + 2.0 / 3.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(metric_set(&cm(&[&[0, 0], &[0, 0]])).is_err());
    }

    #[test]
    fn balanced_accuracy_ignores_absent_classes() {
        let c = cm(&[&[3, 1], &[0, 0]]);
        assert_eq!(balanced_accuracy(&c).unwrap(), 0.75);
        assert_eq!(balanced_accuracy(&cm(&[&[2, 0], &[6, 0]])).unwrap(), 0.5);
    }

    #[test]
    fn aggregate_mean_sd() {
        let fold = |a| MetricSet {
            accuracy: a,
            precision: a,
            recall: a,
            f1: a,
        };
        let agg = aggregate(&[fold(0.9), fold(1.0)]).unwrap();
        assert!((agg.accuracy.mean - 0.95).abs() < 1e-12);
        assert!((agg.accuracy.sd - 0.07071068).abs() < 1e-6);
        let single = aggregate(&[fold(0.4)]).unwrap();
        assert_eq!(single.f1.sd, 0.0);
        assert_eq!(aggregate(&[fold(0.7); 5]).unwrap().recall.sd, 0.0);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn mean_sd_format_round_trip() {
        let m = MeanSd { mean: 0.935, sd: 0.032 };
        assert_eq!(m.to_string(), "0.935 ± 0.032");
        assert_eq!(MeanSd::parse("0.935 ± 0.032"), Some(m));
    }
}
