//! Annotation tables: loading, binarization, reliability filtering, text-level
//! splits and majority-vote aggregation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DuplicatePair, Error, Result};
use crate::features::AnnotatorProfile;
use crate::rng;

/// Annotator id given to aggregated majority-vote samples.
pub const MAJORITY_ANNOTATOR: &str = "⟂majority⟂";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub text_id: String,
    pub annotator_id: String,
    pub raw_score: u32,
    pub label: u8,
}

impl AnnotationRecord {
    pub fn new(text_id: impl Into<String>, annotator_id: impl Into<String>, raw_score: u32) -> Self {
        Self {
            text_id: text_id.into(),
            annotator_id: annotator_id.into(),
            raw_score,
            label: binary_label(raw_score),
        }
    }
}

/// Score 0 is the negative class, anything above 0 is positive.
pub fn binary_label(raw_score: u32) -> u8 {
    u8::from(raw_score > 0)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub unique_texts: usize,
    pub unique_annotators: usize,
    pub positive: usize,
    pub negative: usize,
}

impl DatasetStats {
    fn compute(records: &[AnnotationRecord]) -> Self {
        let texts: BTreeSet<&str> = records.iter().map(|r| r.text_id.as_str()).collect();
        let annotators: BTreeSet<&str> = records.iter().map(|r| r.annotator_id.as_str()).collect();
        let positive = records.iter().filter(|r| r.label == 1).count();
        Self {
            records: records.len(),
            unique_texts: texts.len(),
            unique_annotators: annotators.len(),
            positive,
            negative: records.len() - positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<AnnotationRecord>,
    profiles: BTreeMap<String, AnnotatorProfile>,
    stats: DatasetStats,
}

impl Dataset {
    /// Builds a dataset from records, rejecting duplicate (text, annotator) pairs.
    pub fn from_records(records: Vec<AnnotationRecord>) -> Result<Self> {
        let mut seen: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            seen.entry((&r.text_id, &r.annotator_id)).or_default().push(i + 1);
        }
        let mut dups: Vec<DuplicatePair> = seen
            .into_iter()
            .filter(|(_, rows)| rows.len() > 1)
            .map(|((t, a), rows)| DuplicatePair {
                text_id: t.to_string(),
                annotator_id: a.to_string(),
                rows,
            })
            .collect();
        if !dups.is_empty() {
            dups.sort_by_key(|d| d.rows[0]);
            return Err(Error::Duplicate(dups));
        }
        Ok(Self::unchecked(records, BTreeMap::new()))
    }

    fn unchecked(records: Vec<AnnotationRecord>, profiles: BTreeMap<String, AnnotatorProfile>) -> Self {
        let stats = DatasetStats::compute(&records);
        Self {
            records,
            profiles,
            stats,
        }
    }

    /// Attaches annotator profiles; every annotator in the records must be covered.
    pub fn with_profiles(mut self, profiles: BTreeMap<String, AnnotatorProfile>) -> Result<Self> {
        if let Some(r) = self.records.iter().find(|r| !profiles.contains_key(&r.annotator_id)) {
            return Err(Error::Coverage {
                kind: "annotator profile",
                key: r.annotator_id.clone(),
            });
        }
        self.profiles = profiles;
        Ok(self)
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn profiles(&self) -> &BTreeMap<String, AnnotatorProfile> {
        &self.profiles
    }

    pub fn stats(&self) -> &DatasetStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Unique text ids in order of first appearance.
    pub fn text_ids(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.text_id.as_str()))
            .map(|r| r.text_id.as_str())
            .collect()
    }

    /// Sorted unique annotator ids.
    pub fn annotator_ids(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.annotator_id.as_str()).collect();
        set.into_iter().collect()
    }

    fn retain(&self, keep: impl Fn(&AnnotationRecord) -> bool) -> Self {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Self::unchecked(records, self.profiles.clone())
    }
}

/// Names of the three columns read from an annotation CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMapping {
    pub text_id: String,
    pub annotator_id: String,
    pub score: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            text_id: "text_id".into(),
            annotator_id: "annotator_id".into(),
            score: "score".into(),
        }
    }
}

pub fn load_annotations(path: &Path, mapping: &ColumnMapping) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_annotations(file, mapping).map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        other => other,
    })
}

pub fn read_annotations<R: Read>(reader: R, mapping: &ColumnMapping) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv("<annotations>", e))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let text_col = column(&mapping.text_id)?;
    let ann_col = column(&mapping.annotator_id)?;
    let score_col = column(&mapping.score)?;

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::csv("<annotations>", e))?;
        let field = |idx: usize, name: &str| {
            row.get(idx).ok_or_else(|| Error::Parse {
                row: row_no,
                column: name.to_string(),
                message: "missing field".into(),
            })
        };
        let text = field(text_col, &mapping.text_id)?;
        let ann = field(ann_col, &mapping.annotator_id)?;
        let raw = field(score_col, &mapping.score)?;
        let score: u32 = raw.trim().parse().map_err(|_| Error::Parse {
            row: row_no,
            column: mapping.score.clone(),
            message: format!("`{raw}` is not a non-negative base-10 integer"),
        })?;
        records.push(AnnotationRecord::new(text, ann, score));
    }
    Dataset::from_records(records)
}

/// Writes records with the same column names they were loaded under.
pub fn write_annotations<W: Write>(writer: W, dataset: &Dataset, mapping: &ColumnMapping) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::csv("<annotations>", e);
    wtr.write_record([&mapping.text_id, &mapping.annotator_id, &mapping.score])
        .map_err(io)?;
    for r in dataset.records() {
        wtr.write_record([r.text_id.as_str(), r.annotator_id.as_str(), &r.raw_score.to_string()])
            .map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::io("<annotations>", e))?;
    Ok(())
}

pub fn save_annotations(path: &Path, dataset: &Dataset, mapping: &ColumnMapping) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_annotations(std::io::BufWriter::new(file), dataset, mapping)
}

pub fn binarize(dataset: &Dataset) -> Dataset {
    let records = dataset
        .records
        .iter()
        .map(|r| AnnotationRecord {
            label: binary_label(r.raw_score),
            ..r.clone()
        })
        .collect();
    Dataset::unchecked(records, dataset.profiles.clone())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub removed_annotators: usize,
    pub removed_texts: usize,
    pub removed_records: usize,
    pub retained_records: usize,
}

/// Drops low-volume annotators, then texts with too few annotators. One pass of each.
///
/// Because the passes are not iterated, an annotator may end below the
/// annotation threshold after the text pass removes some of their records.
pub fn filter_dataset(
    dataset: &Dataset,
    min_annotators_per_text: usize,
    min_annotations_per_annotator: usize,
) -> Result<(Dataset, FilterReport)> {
    if min_annotators_per_text == 0 || min_annotations_per_annotator == 0 {
        return Err(Error::Parameter("filter thresholds must be at least 1".into()));
    }
    let mut per_annotator: HashMap<&str, usize> = HashMap::new();
    for r in dataset.records() {
        *per_annotator.entry(&r.annotator_id).or_default() += 1;
    }
    let dropped_annotators: BTreeSet<&str> = per_annotator
        .iter()
        .filter(|(_, &n)| n < min_annotations_per_annotator)
        .map(|(&a, _)| a)
        .collect();
    let stage1 = dataset.retain(|r| !dropped_annotators.contains(r.annotator_id.as_str()));

    let mut per_text: HashMap<&str, usize> = HashMap::new();
    for r in stage1.records() {
        *per_text.entry(&r.text_id).or_default() += 1;
    }
    let dropped_texts: BTreeSet<&str> = per_text
        .iter()
        .filter(|(_, &n)| n < min_annotators_per_text)
        .map(|(&t, _)| t)
        .collect();
    let stage2 = stage1.retain(|r| !dropped_texts.contains(r.text_id.as_str()));

    let report = FilterReport {
        removed_annotators: dataset.stats.unique_annotators - stage2.stats.unique_annotators,
        removed_texts: dataset.stats.unique_texts - stage2.stats.unique_texts,
        removed_records: dataset.len() - stage2.len(),
        retained_records: stage2.len(),
    };
    if stage2.is_empty() {
        return Err(Error::EmptyDataset("filtering".into()));
    }
    Ok((stage2, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub seed: u64,
    pub train_fraction: f64,
}

/// Splits by unique text id: sorted ids are shuffled with the seeded
/// generator and the first `ceil(fraction * n)` go to train.
pub fn split_by_text(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitPair> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut texts: Vec<&str> = dataset.text_ids();
    texts.sort_unstable();
    let n = texts.len();
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 unique texts, found {n}")));
    }
    // Guard against representation error such as 0.7 * 10 = 7.000000000000001.
    let n_train = (train_fraction * n as f64 - 1e-9).ceil() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Split(format!(
            "fraction {train_fraction} of {n} texts leaves one side empty"
        )));
    }
    rng::shuffle(&mut texts, &mut rng::seeded(seed));
    let train_ids: BTreeSet<&str> = texts[..n_train].iter().copied().collect();
    Ok(SplitPair {
        train: dataset.retain(|r| train_ids.contains(r.text_id.as_str())),
        test: dataset.retain(|r| !train_ids.contains(r.text_id.as_str())),
        seed,
        train_fraction,
    })
}

/// Per-text majority label; an exact tie resolves to 1.
pub fn majority_vote(dataset: &Dataset) -> BTreeMap<String, u8> {
    let mut votes: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in dataset.records() {
        let v = votes.entry(&r.text_id).or_default();
        if r.label == 1 {
            v.1 += 1;
        } else {
            v.0 += 1;
        }
    }
    votes
        .into_iter()
        .map(|(t, (neg, pos))| (t.to_string(), u8::from(pos >= neg)))
        .collect()
}

/// One aggregated record per text (in first-appearance order), labelled by majority vote.
pub fn majority_dataset(dataset: &Dataset) -> Dataset {
    let votes = majority_vote(dataset);
    let records = dataset
        .text_ids()
        .into_iter()
        .map(|t| {
            let label = votes[t];
            AnnotationRecord {
                text_id: t.to_string(),
                annotator_id: MAJORITY_ANNOTATOR.to_string(),
                raw_score: u32::from(label),
                label,
            }
        })
        .collect();
    Dataset::unchecked(records, BTreeMap::new())
}
