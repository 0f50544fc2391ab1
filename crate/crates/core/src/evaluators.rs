//! Prediction extraction and quality metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;

/// Score threshold at which a PHQ-8 total counts as positive.
pub const PHQ_POSITIVE_THRESHOLD: i64 = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("metric input is empty")]
    Empty,
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

impl NliLabel {
    pub const ALL: [NliLabel; 3] = [NliLabel::Entailment, NliLabel::Contradiction, NliLabel::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            NliLabel::Entailment => "entailment",
            NliLabel::Contradiction => "contradiction",
            NliLabel::Neutral => "neutral",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NliLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        match folded.as_str() {
            "entailment" | "entailed" => Ok(NliLabel::Entailment),
            "contradiction" | "contradicts" => Ok(NliLabel::Contradiction),
            "neutral" | "notmentioned" => Ok(NliLabel::Neutral),
            _ => Err(format!("unknown NLI label `{s}`")),
        }
    }
}

/// Structured answer parsed out of a model response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Prediction {
    Score(i64),
    Nli(NliLabel),
}

/// Metric names accepted in configurations and written to summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Mae,
    Specificity,
    F1Macro,
    F1Micro,
    ValidAnswerRate,
}

impl MetricName {
    pub const ALL: [MetricName; 5] = [
        MetricName::Mae,
        MetricName::Specificity,
        MetricName::F1Macro,
        MetricName::F1Micro,
        MetricName::ValidAnswerRate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Mae => "mae",
            MetricName::Specificity => "specificity",
            MetricName::F1Macro => "f1_macro",
            MetricName::F1Micro => "f1_micro",
            MetricName::ValidAnswerRate => "valid_answer_rate",
        }
    }

    /// True for metrics where a smaller value is better.
    pub fn lower_is_better(self) -> bool {
        matches!(self, MetricName::Mae)
    }

    /// Metrics that need NLI class predictions rather than integer scores.
    pub fn is_classification(self) -> bool {
        matches!(self, MetricName::F1Macro | MetricName::F1Micro)
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

fn score_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(r#"(?i)score[\s:=\-–—.,;*"'`()\[\]]*(\d+)"#).expect("valid score regex")
    })
}

/// First `score` followed by optional punctuation and an integer; `None` marks an invalid answer.
pub fn extract_score(response_text: &str) -> Option<i64> {
    score_pattern()
        .captures(response_text)
        .and_then(|c| c[1].parse().ok())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliPrediction {
    /// `None` is an invalid answer.
    pub label: Option<NliLabel>,
    /// Set when keywords for more than one class appear.
    pub low_confidence: bool,
}

const NLI_KEYWORDS: [(&str, NliLabel); 4] = [
    ("entail", NliLabel::Entailment),
    ("contradict", NliLabel::Contradiction),
    ("neutral", NliLabel::Neutral),
    ("not mentioned", NliLabel::Neutral),
];

/// Keyword classification; the earliest keyword in the text wins.
pub fn extract_nli_label(response_text: &str) -> NliPrediction {
    let lowered = response_text.to_lowercase();
    let mut hits: Vec<(usize, NliLabel)> = NLI_KEYWORDS
        .iter()
        .filter_map(|(kw, label)| lowered.find(kw).map(|pos| (pos, *label)))
        .collect();
    // position first, then entailment > contradiction > neutral
    hits.sort_by_key(|(pos, label)| (*pos, label.index()));
    let label = hits.first().map(|(_, l)| *l);
    let low_confidence = hits.iter().any(|(_, l)| Some(*l) != label);
    NliPrediction {
        label,
        low_confidence,
    }
}

fn check_lengths(predictions: usize, labels: usize) -> Result<(), MetricError> {
    if predictions != labels {
        return Err(MetricError::LengthMismatch {
            predictions,
            labels,
        });
    }
    if predictions == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Mean absolute error between integer predictions and labels.
pub fn mae(predictions: &[i64], labels: &[i64]) -> Result<f64, MetricError> {
    check_lengths(predictions.len(), labels.len())?;
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y).abs() as f64)
        .sum();
    Ok(total / predictions.len() as f64)
}

/// True negative rate after binarizing both sides at `score >= threshold`.
///
/// `Ok(None)` when there are no actual negatives.
pub fn specificity(
    predictions: &[i64],
    labels: &[i64],
    threshold: i64,
) -> Result<Option<f64>, MetricError> {
    check_lengths(predictions.len(), labels.len())?;
    let (mut tn, mut fp) = (0usize, 0usize);
    for (&p, &y) in predictions.iter().zip(labels) {
        if y >= threshold {
            continue;
        }
        if p >= threshold {
            fp += 1;
        } else {
            tn += 1;
        }
    }
    if tn + fp == 0 {
        return Ok(None);
    }
    Ok(Some(tn as f64 / (tn + fp) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum F1Averaging {
    #[default]
    Macro,
    Micro,
}

fn harmonic(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Three-class F1. Invalid predictions (`None`) are wrong for every class.
///
/// Macro averaging skips classes with no support in `labels`.
pub fn f1(
    predictions: &[Option<NliLabel>],
    labels: &[NliLabel],
    averaging: F1Averaging,
) -> Result<f64, MetricError> {
    check_lengths(predictions.len(), labels.len())?;
    let mut tp = [0usize; 3];
    let mut fp = [0usize; 3];
    let mut support = [0usize; 3];
    for (pred, &label) in predictions.iter().zip(labels) {
        support[label.index()] += 1;
        match pred {
            Some(p) if *p == label => tp[p.index()] += 1,
            Some(p) => fp[p.index()] += 1,
            None => {}
        }
    }

    match averaging {
        F1Averaging::Macro => {
            let mut sum = 0.0;
            let mut counted = 0usize;
            for class in NliLabel::ALL {
                let c = class.index();
                if support[c] == 0 {
                    log::info!("f1_macro: class `{class}` has no support and is excluded");
                    continue;
                }
                let predicted = tp[c] + fp[c];
                let precision = if predicted == 0 {
                    0.0
                } else {
                    tp[c] as f64 / predicted as f64
                };
                let recall = tp[c] as f64 / support[c] as f64;
                sum += harmonic(precision, recall);
                counted += 1;
            }
            Ok(sum / counted as f64)
        }
        F1Averaging::Micro => {
            let hits: usize = tp.iter().sum();
            let predicted = hits + fp.iter().sum::<usize>();
            let precision = if predicted == 0 {
                0.0
            } else {
                hits as f64 / predicted as f64
            };
            let recall = hits as f64 / labels.len() as f64;
            Ok(harmonic(precision, recall))
        }
    }
}

/// Metric values for one run plus bookkeeping about excluded answers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evaluation {
    pub metrics: BTreeMap<String, f64>,
    /// Invalid answers left out of score metrics.
    pub excluded: usize,
}

/// Computes the requested metrics over `(prediction, label)` pairs.
///
/// Metrics whose inputs are empty or undefined are left out of the map.
pub fn evaluate(metrics: &[MetricName], pairs: &[(Option<Prediction>, &Label)]) -> Evaluation {
    let mut out = Evaluation::default();
    let n = pairs.len();
    let valid = pairs.iter().filter(|(p, _)| p.is_some()).count();
    out.excluded = n - valid;

    let (mut score_preds, mut score_labels) = (Vec::new(), Vec::new());
    let (mut nli_preds, mut nli_labels) = (Vec::new(), Vec::new());
    for (pred, label) in pairs {
        match label {
            Label::Score(y) => {
                if let Some(Prediction::Score(p)) = pred {
                    score_preds.push(*p);
                    score_labels.push(*y);
                }
            }
            Label::Class(y) => {
                nli_preds.push(match pred {
                    Some(Prediction::Nli(p)) => Some(*p),
                    _ => None,
                });
                nli_labels.push(*y);
            }
            Label::None => {}
        }
    }

    for &metric in metrics {
        let value = match metric {
            MetricName::Mae => mae(&score_preds, &score_labels).ok(),
            MetricName::Specificity => {
                specificity(&score_preds, &score_labels, PHQ_POSITIVE_THRESHOLD)
                    .ok()
                    .flatten()
            }
            MetricName::F1Macro => f1(&nli_preds, &nli_labels, F1Averaging::Macro).ok(),
            MetricName::F1Micro => f1(&nli_preds, &nli_labels, F1Averaging::Micro).ok(),
            MetricName::ValidAnswerRate => {
                (n > 0).then(|| valid as f64 / n as f64)
            }
        };
        if let Some(v) = value {
            out.metrics.insert(metric.as_str().to_string(), v);
        }
    }
    out
}
