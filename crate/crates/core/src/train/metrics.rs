use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Classification metrics over one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub recall_macro: f64,
    pub precision_macro: f64,
    pub per_class: Vec<ClassMetrics>,
    pub per_snr_accuracy: BTreeMap<i8, f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub support: u64,
    pub predicted: u64,
    pub true_positive: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    /// Builds the report from true labels, predictions and per-frame SNRs.
    pub fn from_predictions(
        num_classes: usize,
        truth: &[usize],
        predicted: &[usize],
        snr_db: &[i8],
    ) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if truth.len() != predicted.len() || truth.len() != snr_db.len() {
            return Err(Error::InvalidArgument(
                "truth, predictions and SNRs differ in length".into(),
            ));
        }
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        let mut snr_counts: BTreeMap<i8, (u64, u64)> = BTreeMap::new();
        for ((&t, &p), &snr) in truth.iter().zip(predicted).zip(snr_db) {
            if t >= num_classes || p >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: t.max(p),
                    classes: num_classes,
                });
            }
            confusion[t][p] += 1;
            let cell = snr_counts.entry(snr).or_default();
            cell.1 += 1;
            if t == p {
                cell.0 += 1;
            }
        }
        let mut report = Self::from_confusion(confusion)?;
        report.per_snr_accuracy = snr_counts
            .into_iter()
            .map(|(snr, (hit, total))| (snr, hit as f64 / total as f64))
            .collect();
        Ok(report)
    }

    /// Metrics implied by a confusion matrix (rows = true class). The per-SNR
    /// breakdown is left empty.
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let k = confusion.len();
        if confusion.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidArgument(
                "confusion matrix must be square".into(),
            ));
        }
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        let trace: u64 = (0..k).map(|c| confusion[c][c]).sum();
        let per_class: Vec<ClassMetrics> = (0..k)
            .map(|c| {
                let support: u64 = confusion[c].iter().sum();
                let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
                let tp = confusion[c][c];
                let ratio = |num: u64, den: u64| {
                    if den == 0 {
                        0.0
                    } else {
                        num as f64 / den as f64
                    }
                };
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    support,
                    predicted,
                    true_positive: tp,
                    precision,
                    recall,
                    f1,
                }
            })
            .collect();
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
        let f1_weighted = per_class
            .iter()
            .map(|c| c.f1 * c.support as f64)
            .sum::<f64>()
            / total as f64;
        Ok(Self {
            accuracy: trace as f64 / total as f64,
            f1_macro: mean(|c| c.f1),
            f1_weighted,
            recall_macro: mean(|c| c.recall),
            precision_macro: mean(|c| c.precision),
            per_class,
            per_snr_accuracy: BTreeMap::new(),
            confusion,
        })
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}
