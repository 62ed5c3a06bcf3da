//! Classification and contrastive objectives with their analytic gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::batcher;
use crate::error::{Error, Result};

const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub classification: f64,
    pub contrastive_pos: f64,
    pub contrastive_neg: f64,
    pub pos_pairs: usize,
    pub neg_pairs: usize,
}

/// Mean binary cross-entropy and its gradient w.r.t. the pre-sigmoid logits.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> (f64, Array1<f64>) {
    assert_eq!(probs.len(), labels.len(), "probs/labels length mismatch");
    let b = probs.len().max(1) as f64;
    let loss = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / b;
    let grad = probs.iter().zip(labels).map(|(&p, &y)| (p - f64::from(y)) / b).collect();
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveOutput {
    pub loss: f64,
    pub pos: f64,
    pub neg: f64,
    pub pos_pairs: usize,
    pub neg_pairs: usize,
    /// Gradient of `loss` w.r.t. the embedding rows passed in.
    pub grad: Array2<f64>,
}

/// Masked contrastive loss over a batch of socio representations.
///
/// `S = E Eᵀ / τ`, softmax taken row-wise over the full row (the diagonal is
/// kept unless `exclude_self` is set). Same-text same-label pairs contribute
/// `-log softmax`, same-text different-label pairs contribute `softmax`, each
/// averaged by its pair count (at least 1).
pub fn contrastive_loss<S: AsRef<str>>(
    embeddings: ArrayView2<'_, f64>,
    labels: &[u8],
    text_ids: &[S],
    temperature: f64,
    exclude_self: bool,
) -> ContrastiveOutput {
    let b = embeddings.nrows();
    assert_eq!(labels.len(), b);
    assert_eq!(text_ids.len(), b);
    let (m_pos, m_neg) = batcher::masks(labels, text_ids);
    let pos_pairs = m_pos.sum() as usize;
    let neg_pairs = m_neg.sum() as usize;
    if pos_pairs == 0 && neg_pairs == 0 {
        return ContrastiveOutput {
            loss: 0.0,
            pos: 0.0,
            neg: 0.0,
            pos_pairs,
            neg_pairs,
            grad: Array2::zeros(embeddings.raw_dim()),
        };
    }

    let mut sim = embeddings.dot(&embeddings.t()) / temperature;
    if exclude_self {
        sim.diag_mut().fill(f64::NEG_INFINITY);
    }
    let mut log_p = Array2::zeros((b, b));
    for (i, row) in sim.outer_iter().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + row.iter().map(|&s| (s - max).exp()).sum::<f64>().ln();
        for j in 0..b {
            log_p[[i, j]] = row[j] - log_z;
        }
    }
    let p = log_p.mapv(f64::exp);

    let pos_denom = (pos_pairs as f64).max(1.0);
    let neg_denom = (neg_pairs as f64).max(1.0);
    let mut pos = 0.0;
    let mut neg = 0.0;
    for ((i, j), &m) in m_pos.indexed_iter() {
        if m != 0.0 {
            pos -= m * log_p[[i, j]];
        }
    }
    for ((i, j), &m) in m_neg.indexed_iter() {
        if m != 0.0 {
            neg += m * p[[i, j]];
        }
    }
    pos /= pos_denom;
    neg /= neg_denom;

    // dL/dS, row by row.
    let pos_row = m_pos.sum_axis(Axis(1));
    let neg_row = (&m_neg * &p).sum_axis(Axis(1));
    let mut g = Array2::zeros((b, b));
    for i in 0..b {
        for k in 0..b {
            let pik = p[[i, k]];
            g[[i, k]] = -(m_pos[[i, k]] - pik * pos_row[i]) / pos_denom
                + (m_neg[[i, k]] * pik - pik * neg_row[i]) / neg_denom;
        }
    }
    let grad = (&g + &g.t()).dot(&embeddings) / temperature;

    ContrastiveOutput {
        loss: pos + neg,
        pos,
        neg,
        pos_pairs,
        neg_pairs,
        grad,
    }
}

/// Reference evaluation of [`contrastive_loss`] with explicit pair loops and
/// scalar softmax denominators. Quadratic per row; meant for small batches in tests.
pub fn contrastive_loss_oracle<S: AsRef<str>>(
    embeddings: ArrayView2<'_, f64>,
    labels: &[u8],
    text_ids: &[S],
    temperature: f64,
    exclude_self: bool,
) -> f64 {
    let b = embeddings.nrows();
    let d = embeddings.ncols();
    let dot = |i: usize, j: usize| -> f64 {
        let mut s = 0.0;
        for c in 0..d {
            s += embeddings[[i, c]] * embeddings[[j, c]];
        }
        s / temperature
    };
    let mut pos_sum = 0.0;
    let mut neg_sum = 0.0;
    let mut pos_count = 0usize;
    let mut neg_count = 0usize;
    for i in 0..b {
        let mut max = f64::NEG_INFINITY;
        for k in 0..b {
            if !(exclude_self && k == i) {
                max = max.max(dot(i, k));
            }
        }
        let mut denom = 0.0;
        for k in 0..b {
            if !(exclude_self && k == i) {
                denom += (dot(i, k) - max).exp();
            }
        }
        for j in 0..b {
            if text_ids[i].as_ref() != text_ids[j].as_ref() {
                continue;
            }
            let softmax = (dot(i, j) - max).exp() / denom;
            if labels[i] == labels[j] {
                if i != j {
                    pos_sum += -softmax.ln();
                    pos_count += 1;
                }
            } else {
                neg_sum += softmax;
                neg_count += 1;
            }
        }
    }
    pos_sum / (pos_count.max(1) as f64) + neg_sum / (neg_count.max(1) as f64)
}

/// Merged gradient streams handed to the model's backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedGradients {
    pub d_logits: Array1<f64>,
    pub d_embeddings: Option<Array2<f64>>,
}

/// `total = classification + λ · contrastive`.
pub fn combined_loss(
    classification: (f64, Array1<f64>),
    contrastive: Option<ContrastiveOutput>,
    weight: f64,
) -> Result<(LossReport, CombinedGradients)> {
    if !(weight >= 0.0) || !weight.is_finite() {
        return Err(Error::Config(format!("contrastive weight must be >= 0, got {weight}")));
    }
    let (cls, d_logits) = classification;
    let mut report = LossReport {
        total: cls,
        classification: cls,
        ..LossReport::default()
    };
    let mut d_embeddings = None;
    if let Some(c) = contrastive {
        report.contrastive_pos = c.pos;
        report.contrastive_neg = c.neg;
        report.pos_pairs = c.pos_pairs;
        report.neg_pairs = c.neg_pairs;
        report.total = cls + weight * (c.pos + c.neg);
        d_embeddings = Some(c.grad * weight);
    }
    if !report.total.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {report:?}")));
    }
    Ok((report, CombinedGradients { d_logits, d_embeddings }))
}
