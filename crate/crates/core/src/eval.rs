//! Scoring against individual annotator labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{AnnotatorProfile, SocioSchema};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when the labels contain a single class.
    pub auc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n: usize,
    /// Set when precision or recall had a zero denominator and was reported as 0.
    pub undefined: bool,
}

impl MetricsReport {
    fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let p = precision.unwrap_or(0.0);
        let r = recall.unwrap_or(0.0);
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        Self {
            precision: p,
            recall: r,
            f1,
            auc: None,
            tp,
            fp,
            tn,
            fn_,
            n: tp + fp + tn + fn_,
            undefined: precision.is_none() || recall.is_none(),
        }
    }
}

/// Precision/recall/F1 of the positive class; a probability at or above the threshold is positive.
pub fn confusion_metrics(probs: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    if probs.is_empty() {
        return Err(Error::EmptyEval);
    }
    if probs.len() != labels.len() {
        return Err(Error::Contract(format!("{} probabilities for {} labels", probs.len(), labels.len())));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, tn, fn_))
}

/// Confusion metrics plus AUC when it is defined.
pub fn full_metrics(probs: &[f64], labels: &[u8]) -> Result<MetricsReport> {
    let mut m = confusion_metrics(probs, labels, DEFAULT_THRESHOLD)?;
    m.auc = roc_auc(probs, labels).ok();
    Ok(m)
}

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    (pos, labels.len() - pos)
}

/// Mann–Whitney AUC: probability that a random positive outscores a random
/// negative, ties counted one half. Uses midranks, O(n log n).
pub fn roc_auc(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Contract(format!("{} probabilities for {} labels", probs.len(), labels.len())));
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean.
        let midrank = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += midrank * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// One point per distinct score (descending), starting at (0,0) with an
/// infinite threshold and ending at (1,1).
pub fn roc_curve(probs: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    if probs.len() != labels.len() {
        return Err(Error::Contract(format!("{} probabilities for {} labels", probs.len(), labels.len())));
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = probs[order[i]];
        while i < order.len() && probs[order[i]] == t {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(points)
}

pub fn trapezoid_area(curve: &[RocPoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation (divisor n).
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    /// Over the runs where AUC was defined.
    pub auc: Option<MeanStd>,
}

pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::EmptyEval);
    }
    let col = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let aucs: Vec<f64> = reports.iter().filter_map(|r| r.auc).collect();
    Ok(AggregateReport {
        runs: reports.len(),
        precision: MeanStd::of(&col(|r| r.precision)),
        recall: MeanStd::of(&col(|r| r.recall)),
        f1: MeanStd::of(&col(|r| r.f1)),
        auc: (!aucs.is_empty()).then(|| MeanStd::of(&aucs)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: String,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub attribute: String,
    pub categories: Vec<CategoryReport>,
    /// Schema categories with no evaluated records.
    pub omitted: Vec<String>,
}

/// Metrics sliced by each annotator attribute's categories.
pub fn group_breakdown(
    probs: &[f64],
    labels: &[u8],
    annotator_ids: &[String],
    profiles: &BTreeMap<String, AnnotatorProfile>,
    schema: &SocioSchema,
) -> Result<Vec<GroupReport>> {
    if probs.len() != labels.len() || probs.len() != annotator_ids.len() {
        return Err(Error::Contract("probs, labels and annotator ids must align".into()));
    }
    let resolved: Vec<&AnnotatorProfile> = annotator_ids
        .iter()
        .map(|a| {
            profiles.get(a).ok_or_else(|| Error::Coverage {
                kind: "annotator profile",
                key: a.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for attr in schema.attributes() {
        let mut categories = Vec::new();
        let mut omitted = Vec::new();
        for cat in &attr.categories {
            let idx: Vec<usize> = (0..probs.len())
                .filter(|&i| {
                    let v = resolved[i].category(&attr.name);
                    let v = if attr.categories.iter().any(|c| c == v) { v } else { crate::features::MISSING };
                    v == cat
                })
                .collect();
            if idx.is_empty() {
                omitted.push(cat.clone());
                continue;
            }
            let p: Vec<f64> = idx.iter().map(|&i| probs[i]).collect();
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            categories.push(CategoryReport {
                category: cat.clone(),
                metrics: full_metrics(&p, &y)?,
            });
        }
        out.push(GroupReport {
            attribute: attr.name.clone(),
            categories,
            omitted,
        });
    }
    Ok(out)
}
