//! Evaluation quantities: confusion matrix, accuracy/precision/recall/F1,
//! false-positive and false-negative rates, and the bias score with its
//! pre/post-debiasing reduction.
//!
//! `Hate` is the positive class throughout. Every ratio with a zero
//! denominator is defined as 0 (not NaN) so reports stay arithmetic-safe.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{predict, ClassifierModel};
use crate::corpus::Label;

/// 2×2 cross-tabulation of predictions against truths, `Hate` positive.
///
/// Field names are spelled out because `fn` is reserved in Rust; the
/// serialized form uses the conventional short keys `tp`/`fp`/`tn`/`fn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(rename = "tp")]
    pub true_positive: u64,
    #[serde(rename = "fp")]
    pub false_positive: u64,
    #[serde(rename = "tn")]
    pub true_negative: u64,
    #[serde(rename = "fn")]
    pub false_negative: u64,
}

impl ConfusionMatrix {
    pub fn new(true_positive: u64, false_positive: u64, true_negative: u64, false_negative: u64) -> Self {
        Self {
            true_positive,
            false_positive,
            true_negative,
            false_negative,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("predictions ({predictions}) and truths ({truths}) differ in length")]
    LengthMismatch { predictions: usize, truths: usize },
}

/// Tabulates predictions against ground truth.
pub fn confusion(predictions: &[Label], truths: &[Label]) -> Result<ConfusionMatrix, MetricsError> {
    if predictions.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (prediction, truth) in predictions.iter().zip(truths) {
        match (prediction, truth) {
            (Label::Hate, Label::Hate) => cm.true_positive += 1,
            (Label::Hate, Label::NoHate) => cm.false_positive += 1,
            (Label::NoHate, Label::NoHate) => cm.true_negative += 1,
            (Label::NoHate, Label::Hate) => cm.false_negative += 1,
        }
    }
    Ok(cm)
}

/// Mean bias score before and after debiasing, with the reduction, plus the
/// false-positive-tendency alternative reading computed over the non-hateful
/// subset only.
///
/// Means are `None` when no texts were scored; `reduction` is exactly
/// `pre − post` whenever both are present (negative means debiasing
/// increased measured bias).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BiasReport {
    /// Number of texts scored.
    pub n: u64,
    /// Mean hate probability before debiasing.
    pub pre: Option<f64>,
    /// Mean hate probability after debiasing.
    pub post: Option<f64>,
    /// `pre − post` when both present.
    pub reduction: Option<f64>,
    /// Share of truly non-hateful texts flagged hateful before debiasing.
    pub fp_rate_on_nonhate_pre: Option<f64>,
    /// Same, measured on the debiased texts.
    pub fp_rate_on_nonhate_post: Option<f64>,
}

impl BiasReport {
    /// Assembles a report from the two mean scores, maintaining the
    /// `reduction = pre − post` invariant.
    pub fn from_means(n: u64, pre: Option<f64>, post: Option<f64>) -> Self {
        let reduction = match (pre, post) {
            (Some(p), Some(q)) => Some(bias_reduction(p, q)),
            _ => None,
        };
        Self {
            n,
            pre,
            post,
            reduction,
            fp_rate_on_nonhate_pre: None,
            fp_rate_on_nonhate_post: None,
        }
    }
}

/// Confusion-matrix-derived metrics, serialized as the report JSON layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub counts: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub fnr: f64,
    /// Present when the evaluation also scored bias (pipeline reports).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<BiasReport>,
}

fn ratio(numerator: u64, denominator: u64) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

/// Derives all ratio metrics from a confusion matrix.
///
/// `precision = tp/(tp+fp)`, `recall = tp/(tp+fn)`, `f1 = 2PR/(P+R)`,
/// `accuracy = (tp+tn)/total`, `fpr = fp/(fp+tn)`, `fnr = fn/(fn+tp)`;
/// each is 0 when its denominator is 0.
pub fn eval_report(cm: ConfusionMatrix) -> EvalReport {
    let precision = ratio(cm.true_positive, cm.true_positive + cm.false_positive);
    let recall = ratio(cm.true_positive, cm.true_positive + cm.false_negative);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    EvalReport {
        counts: cm,
        accuracy: ratio(cm.true_positive + cm.true_negative, cm.total()),
        precision,
        recall,
        f1,
        fpr: ratio(cm.false_positive, cm.false_positive + cm.true_negative),
        fnr: ratio(cm.false_negative, cm.false_negative + cm.true_positive),
        bias: None,
    }
}

/// Mean of a score list in fixed order; `None` for an empty list.
pub fn mean_score(scores: &[f64]) -> Option<f64> {
    if scores.is_empty() {
        None
    } else {
        Some(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}

/// Mean predicted hate probability over the texts (the corpus-level bias
/// score); `None` for an empty list.
///
/// Texts are scored in the given order and summed in that fixed order, so
/// the result is reproducible.
pub fn bias_score<S: AsRef<str>>(model: &ClassifierModel, texts: &[S]) -> Option<f64> {
    let scores: Vec<f64> = texts
        .iter()
        .map(|t| predict(model, t.as_ref()).p_hate)
        .collect();
    mean_score(&scores)
}

/// Drop in mean bias score achieved by debiasing: `pre − post`.
///
/// Negative output means the debiaser increased measured bias.
pub fn bias_reduction(pre: f64, post: f64) -> f64 {
    pre - post
}
