//! Text-grouped epoch planning and contrastive mask construction.
//!
//! Records of the same text are kept contiguous so that every annotation of a
//! text lands in the same batch when it fits. Groups are packed greedily in
//! shuffled order: the concatenated sequence is cut every `batch_size`
//! records, so an oversized group spills into the following batch(es) and an
//! under-full batch is topped up by the next group.

use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::features::{AnnotatorProfile, EmbeddingTable, SocioSchema};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batches: Vec<Vec<usize>>,
    pub batch_size: usize,
    pub seed: u64,
}

impl BatchPlan {
    pub fn record_count(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }
}

pub fn plan_epoch(dataset: &Dataset, batch_size: usize, seed: u64) -> Result<BatchPlan> {
    let text_ids: Vec<&str> = dataset.records().iter().map(|r| r.text_id.as_str()).collect();
    plan_groups(&text_ids, batch_size, seed)
}

/// Plans one epoch over records identified only by their text id.
pub fn plan_groups(text_ids: &[&str], batch_size: usize, seed: u64) -> Result<BatchPlan> {
    if batch_size < 2 {
        return Err(Error::Plan(format!(
            "batch size {batch_size} cannot hold a contrastive pair"
        )));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, &t) in text_ids.iter().enumerate() {
        groups
            .entry(t)
            .or_insert_with(|| {
                order.push(t);
                Vec::new()
            })
            .push(i);
    }
    let mut rng = rng::seeded(seed);
    rng::shuffle(&mut order, &mut rng);
    let mut sequence = Vec::with_capacity(text_ids.len());
    for t in order {
        let mut members = groups.remove(t).unwrap_or_default();
        rng::shuffle(&mut members, &mut rng);
        sequence.extend(members);
    }
    Ok(BatchPlan {
        batches: sequence.chunks(batch_size).map(<[usize]>::to_vec).collect(),
        batch_size,
        seed,
    })
}

/// Where the socio part of a model input comes from.
#[derive(Debug, Clone, Copy)]
pub enum SocioSource<'a> {
    None,
    Multihot {
        schema: &'a SocioSchema,
        profiles: &'a BTreeMap<String, AnnotatorProfile>,
    },
    Embedding(&'a EmbeddingTable),
}

#[derive(Debug, Clone, Copy)]
pub struct FeatureSource<'a> {
    pub text: &'a EmbeddingTable,
    pub socio: SocioSource<'a>,
    /// Annotator -> output head, for per-annotator heads.
    pub heads: Option<&'a BTreeMap<String, usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub text_inputs: Array2<f64>,
    /// Multi-hot rows or annotator embedding rows, depending on the source.
    pub socio_inputs: Option<Array2<f64>>,
    pub labels: Vec<u8>,
    pub text_ids: Vec<String>,
    pub annotator_ids: Vec<String>,
    /// Output head per row; `None` for annotators without a trained head.
    pub heads: Vec<Option<usize>>,
}

impl Batch {
    pub fn assemble(dataset: &Dataset, indices: &[usize], source: &FeatureSource<'_>) -> Result<Self> {
        let records: Vec<_> = indices.iter().map(|&i| &dataset.records()[i]).collect();
        let b = records.len();
        let dim = source.text.dimension();
        let mut text_inputs = Array2::zeros((b, dim));
        for (row, r) in records.iter().enumerate() {
            let v = source.text.get(&r.text_id).ok_or_else(|| Error::Coverage {
                kind: "text embedding",
                key: r.text_id.clone(),
            })?;
            text_inputs.row_mut(row).assign(&ndarray::ArrayView1::from(v));
        }
        let socio_inputs = match source.socio {
            SocioSource::None => None,
            SocioSource::Multihot { schema, profiles } => {
                let mut m = Array2::zeros((b, schema.total_width()));
                for (row, r) in records.iter().enumerate() {
                    let p = profiles.get(&r.annotator_id).ok_or_else(|| Error::Coverage {
                        kind: "annotator profile",
                        key: r.annotator_id.clone(),
                    })?;
                    let v = schema.encode(p, false)?;
                    m.row_mut(row).assign(&ndarray::Array1::from(v));
                }
                Some(m)
            }
            SocioSource::Embedding(table) => {
                let mut m = Array2::zeros((b, table.dimension()));
                for (row, r) in records.iter().enumerate() {
                    let v = table.get(&r.annotator_id).ok_or_else(|| Error::Coverage {
                        kind: "annotator embedding",
                        key: r.annotator_id.clone(),
                    })?;
                    m.row_mut(row).assign(&ndarray::ArrayView1::from(v));
                }
                Some(m)
            }
        };
        let heads = records
            .iter()
            .map(|r| source.heads.and_then(|h| h.get(&r.annotator_id).copied()))
            .collect();
        Ok(Self {
            text_inputs,
            socio_inputs,
            labels: records.iter().map(|r| r.label).collect(),
            text_ids: records.iter().map(|r| r.text_id.clone()).collect(),
            annotator_ids: records.iter().map(|r| r.annotator_id.clone()).collect(),
            heads,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn text_match_mask(batch: &Batch) -> Array2<f64> {
    text_match(&batch.text_ids)
}

pub fn contrastive_masks(batch: &Batch) -> (Array2<f64>, Array2<f64>) {
    masks(&batch.labels, &batch.text_ids)
}

pub fn text_match<S: AsRef<str>>(text_ids: &[S]) -> Array2<f64> {
    let b = text_ids.len();
    Array2::from_shape_fn((b, b), |(i, j)| f64::from(text_ids[i].as_ref() == text_ids[j].as_ref()))
}

/// Positive (same text, same label, off-diagonal) and negative (same text,
/// different label) pair masks.
pub fn masks<S: AsRef<str>>(labels: &[u8], text_ids: &[S]) -> (Array2<f64>, Array2<f64>) {
    let m_text = text_match(text_ids);
    let b = labels.len();
    let pos = Array2::from_shape_fn((b, b), |(i, j)| {
        if i != j && labels[i] == labels[j] {
            m_text[[i, j]]
        } else {
            0.0
        }
    });
    let neg = Array2::from_shape_fn((b, b), |(i, j)| {
        if labels[i] != labels[j] {
            m_text[[i, j]]
        } else {
            0.0
        }
    });
    (pos, neg)
}
