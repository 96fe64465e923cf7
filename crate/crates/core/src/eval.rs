//! Weighted accuracy and evaluation reports.
//!
//! Weighted accuracy is total correct over total evaluated, i.e. plain
//! micro accuracy. Percentages are reported truncated to two decimals.

use std::fmt::Write as _;

use ndarray::Array2;
use vser_nn::Scalar;

use crate::error::{shape_err, Error, Result};
use crate::vit::VitModel;

fn check(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<()> {
    if preds.len() != labels.len() {
        return shape_err(format!("{} predictions for {} labels", preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Err(Error::InvalidDataset("nothing to evaluate".into()));
    }
    if let Some(v) = preds.iter().chain(labels).find(|&&v| v >= n_classes) {
        return shape_err(format!("class index {v} out of range for {n_classes} classes"));
    }
    Ok(())
}

pub fn weighted_accuracy(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<f64> {
    check(preds, labels, n_classes)?;
    let mut correct = vec![0usize; n_classes];
    let mut total = vec![0usize; n_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        total[l] += 1;
        if p == l {
            correct[l] += 1;
        }
    }
    Ok(correct.iter().sum::<usize>() as f64 / total.iter().sum::<usize>() as f64)
}

/// `correct / total` as a percentage truncated (not rounded) to two
/// decimals, computed exactly in integers.
pub fn truncated_percent(correct: usize, total: usize) -> String {
    let basis = (correct as u128 * 10_000) / total.max(1) as u128;
    format!("{}.{:02}%", basis / 100, basis % 100)
}

/// A fraction in `[0, 1]` as a truncated percentage, e.g. 0.97395 ->
/// "97.39%".
pub fn format_truncated(fraction: f64) -> String {
    // the nudge keeps values like 0.9739 from falling to 97.38
    let basis = (fraction * 10_000.0 + 1e-7).floor().max(0.0) as u64;
    format!("{}.{:02}%", basis / 100, basis % 100)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_class_correct: Vec<usize>,
    pub per_class_total: Vec<usize>,
    pub weighted_accuracy: f64,
    /// `confusion[[true, predicted]]`.
    pub confusion: Array2<usize>,
}

impl EvalReport {
    pub fn from_predictions(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<Self> {
        check(preds, labels, n_classes)?;
        let mut confusion = Array2::zeros((n_classes, n_classes));
        for (&p, &l) in preds.iter().zip(labels) {
            confusion[[l, p]] += 1;
        }
        let per_class_total: Vec<usize> = confusion.rows().into_iter().map(|r| r.sum()).collect();
        let per_class_correct: Vec<usize> = (0..n_classes).map(|i| confusion[[i, i]]).collect();
        let weighted_accuracy =
            per_class_correct.iter().sum::<usize>() as f64 / per_class_total.iter().sum::<usize>() as f64;
        Ok(Self {
            per_class_correct,
            per_class_total,
            weighted_accuracy,
            confusion,
        })
    }

    pub fn correct(&self) -> usize {
        self.per_class_correct.iter().sum()
    }

    pub fn total(&self) -> usize {
        self.per_class_total.iter().sum()
    }

    pub fn wa_string(&self) -> String {
        truncated_percent(self.correct(), self.total())
    }

    /// Tab-separated text: a summary line, per-class rows, then the
    /// confusion matrix with true labels as rows.
    pub fn to_tsv(&self, label_names: &[String]) -> String {
        let n = self.per_class_total.len();
        let name = |i: usize| label_names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut out = String::new();
        writeln!(out, "weighted_accuracy\t{}\t{}/{}", self.wa_string(), self.correct(), self.total()).unwrap();
        writeln!(out, "class\tcorrect\ttotal").unwrap();
        for i in 0..n {
            writeln!(out, "{}\t{}\t{}", name(i), self.per_class_correct[i], self.per_class_total[i]).unwrap();
        }
        let header: Vec<String> = (0..n).map(name).collect();
        writeln!(out, "confusion\t{}", header.join("\t")).unwrap();
        for i in 0..n {
            let row: Vec<String> = self.confusion.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}\t{}", name(i), row.join("\t")).unwrap();
        }
        out
    }
}

/// Index of the largest logit; the first one wins ties.
pub fn argmax<T: Scalar>(logits: impl IntoIterator<Item = T>) -> usize {
    let mut best = (0, T::neg_infinity());
    for (i, v) in logits.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Predict every image and summarize.
pub fn evaluate<T: Scalar>(
    model: &VitModel<T>,
    images: &[ndarray::ArrayView2<T>],
    labels: &[usize],
) -> Result<EvalReport> {
    let mut preds = Vec::with_capacity(images.len());
    for img in images {
        preds.push(argmax(model.forward(img.view())?.logits.iter().copied()));
    }
    EvalReport::from_predictions(&preds, labels, model.spec.n_classes)
}
