//! Synthetic annotator populations with planted demographic labeling shifts.
//!
//! Each text has a latent offensiveness `z ~ N(mean, std)` and an embedding
//! `z·u + noise` along a fixed random unit direction `u`. An annotator labels
//! a text positive with probability `σ(z + Σ shift(attribute, category))`
//! summed over the annotator's categories.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array1;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationRecord, ColumnMapping, Dataset};
use crate::error::{Error, Result};
use crate::features::{build_schema, AnnotatorProfile, EmbeddingTable, SocioSchema};
use crate::model::sigmoid;
use crate::rng::{self, derive_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    pub categories: Vec<String>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shift {
    pub attribute: String,
    pub category: String,
    pub log_odds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationSpec {
    pub annotator_count: usize,
    pub attributes: Vec<AttributeSpec>,
    pub signal: Vec<Shift>,
    pub difficulty_mean: f64,
    pub difficulty_std: f64,
    pub text_count: usize,
    pub annotations_per_text: usize,
    pub embedding_dim: usize,
    pub embedding_noise: f64,
    /// Width of the synthetic annotator embedding table (socio_embedding baseline).
    pub socio_embedding_dim: usize,
    pub seed: u64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            annotator_count: 100,
            attributes: vec![
                AttributeSpec {
                    name: "group".into(),
                    categories: vec!["a".into(), "b".into()],
                    probabilities: vec![0.5, 0.5],
                },
                AttributeSpec {
                    name: "age".into(),
                    categories: vec!["young".into(), "old".into()],
                    probabilities: vec![0.5, 0.5],
                },
            ],
            signal: vec![
                Shift {
                    attribute: "group".into(),
                    category: "a".into(),
                    log_odds: 2.0,
                },
                Shift {
                    attribute: "group".into(),
                    category: "b".into(),
                    log_odds: -2.0,
                },
            ],
            difficulty_mean: 0.0,
            difficulty_std: 1.0,
            text_count: 200,
            annotations_per_text: 5,
            embedding_dim: 16,
            embedding_noise: 0.1,
            socio_embedding_dim: 16,
            seed: 0,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.annotator_count == 0 || self.text_count == 0 || self.annotations_per_text == 0 || self.embedding_dim == 0 {
            return bad("synthetic counts and dimensions must be at least 1".into());
        }
        if self.annotations_per_text > self.annotator_count {
            return bad(format!(
                "{} annotations per text exceeds {} annotators",
                self.annotations_per_text, self.annotator_count
            ));
        }
        for a in &self.attributes {
            if a.categories.is_empty() || a.categories.len() != a.probabilities.len() {
                return bad(format!("attribute `{}` needs one probability per category", a.name));
            }
            let sum: f64 = a.probabilities.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || a.probabilities.iter().any(|&p| p < 0.0) {
                return bad(format!("probabilities of `{}` must be non-negative and sum to 1", a.name));
            }
        }
        for s in &self.signal {
            let known = self
                .attributes
                .iter()
                .any(|a| a.name == s.attribute && a.categories.contains(&s.category));
            if !known {
                return bad(format!("signal targets unknown category {}={}", s.attribute, s.category));
            }
        }
        if !(self.difficulty_std >= 0.0) || !(self.embedding_noise >= 0.0) {
            return bad("standard deviations must be non-negative".into());
        }
        Ok(())
    }

    fn shift_for(&self, profile: &AnnotatorProfile) -> f64 {
        self.signal
            .iter()
            .filter(|s| profile.category(&s.attribute) == s.category)
            .map(|s| s.log_odds)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub profiles: BTreeMap<String, AnnotatorProfile>,
    pub schema: SocioSchema,
}

pub fn annotator_id(i: usize) -> String {
    format!("ann{i:05}")
}

pub fn text_id(i: usize) -> String {
    format!("txt{i:05}")
}

fn sample_category(probabilities: &[f64], rng: &mut rng::Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub fn generate_population(spec: &PopulationSpec) -> Result<Population> {
    spec.validate()?;
    let mut rng = rng::seeded(derive_seed(spec.seed, 1));
    let profiles: BTreeMap<String, AnnotatorProfile> = (0..spec.annotator_count)
        .map(|i| {
            let id = annotator_id(i);
            let assignments: Vec<(String, String)> = spec
                .attributes
                .iter()
                .map(|a| (a.name.clone(), a.categories[sample_category(&a.probabilities, &mut rng)].clone()))
                .collect();
            (id.clone(), AnnotatorProfile::new(id, assignments))
        })
        .collect();
    let schema = build_schema(profiles.values())?;
    Ok(Population { profiles, schema })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    /// (text id, latent score) in generation order.
    pub texts: Vec<(String, f64)>,
    pub embeddings: EmbeddingTable,
    pub direction: Vec<f64>,
}

pub fn generate_corpus(spec: &PopulationSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = rng::seeded(derive_seed(spec.seed, 2));
    let mut u: Array1<f64> = (0..spec.embedding_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = u.dot(&u).sqrt().max(f64::MIN_POSITIVE);
    u /= norm;
    let difficulty = Normal::new(spec.difficulty_mean, spec.difficulty_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut table = EmbeddingTable::new(spec.embedding_dim)?;
    let mut texts = Vec::with_capacity(spec.text_count);
    for i in 0..spec.text_count {
        let z: f64 = difficulty.sample(&mut rng);
        let v: Vec<f64> = u
            .iter()
            .map(|&ui| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                z * ui + spec.embedding_noise * noise
            })
            .collect();
        let id = text_id(i);
        table.insert(id.clone(), v, i + 1)?;
        texts.push((id, z));
    }
    Ok(SynthCorpus {
        texts,
        embeddings: table,
        direction: u.to_vec(),
    })
}

/// Labels per text from a without-replacement draw of annotators. Positive
/// labels get a Likert-style raw score in 1..=3.
pub fn generate_annotations(population: &Population, corpus: &SynthCorpus, spec: &PopulationSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng::seeded(derive_seed(spec.seed, 3));
    let ids: Vec<&String> = population.profiles.keys().collect();
    let shifts: Vec<f64> = ids.iter().map(|id| spec.shift_for(&population.profiles[*id])).collect();
    let mut records = Vec::with_capacity(corpus.texts.len() * spec.annotations_per_text);
    let mut order: Vec<usize> = (0..ids.len()).collect();
    for (text, z) in &corpus.texts {
        // Partial Fisher–Yates: the first `annotations_per_text` slots are the draw.
        for slot in 0..spec.annotations_per_text {
            let j = slot + rng.random_range(0..order.len() - slot);
            order.swap(slot, j);
        }
        for &a in &order[..spec.annotations_per_text] {
            let p = sigmoid(z + shifts[a]);
            let positive = rng.random::<f64>() < p;
            let score = if positive { rng.random_range(1..=3) } else { 0 };
            records.push(AnnotationRecord::new(text.clone(), ids[a].clone(), score));
        }
    }
    Dataset::from_records(records)?.with_profiles(population.profiles.clone())
}

/// Annotator vectors from a fixed random linear map of the multi-hot encoding,
/// standing in for an external encoder of the profile description.
pub fn generate_socio_embeddings(population: &Population, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let mut rng = rng::seeded(derive_seed(seed, 4));
    let width = population.schema.total_width();
    let map: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..width).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut table = EmbeddingTable::new(dim)?;
    for (row, (id, p)) in population.profiles.iter().enumerate() {
        let m = population.schema.encode(p, true)?;
        let v: Vec<f64> = map
            .iter()
            .map(|w| w.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>() / (width as f64).sqrt())
            .collect();
        table.insert(id.clone(), v, row + 1)?;
    }
    Ok(table)
}

/// Everything generated from one [`PopulationSpec`].
#[derive(Debug, Clone)]
pub struct SynthBundle {
    pub population: Population,
    pub corpus: SynthCorpus,
    pub dataset: Dataset,
    pub socio_embeddings: EmbeddingTable,
}

pub fn generate(spec: &PopulationSpec) -> Result<SynthBundle> {
    let population = generate_population(spec)?;
    let corpus = generate_corpus(spec)?;
    let dataset = generate_annotations(&population, &corpus, spec)?;
    let socio_embeddings = generate_socio_embeddings(&population, spec.socio_embedding_dim.max(1), spec.seed)?;
    Ok(SynthBundle {
        population,
        corpus,
        dataset,
        socio_embeddings,
    })
}

pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const PROFILES_FILE: &str = "profiles.csv";
pub const TEXT_EMBEDDINGS_FILE: &str = "text_embeddings.csv";
pub const SOCIO_EMBEDDINGS_FILE: &str = "socio_embeddings.csv";

/// Writes the bundle in the loader formats: annotations, profiles and both embedding tables.
pub fn write_bundle(dir: &Path, bundle: &SynthBundle, spec: &PopulationSpec) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crate::corpus::save_annotations(&dir.join(ANNOTATIONS_FILE), &bundle.dataset, &ColumnMapping::default())?;
    let attrs: Vec<String> = spec.attributes.iter().map(|a| a.name.clone()).collect();
    let path = dir.join(PROFILES_FILE);
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    crate::features::write_profiles(std::io::BufWriter::new(f), &bundle.population.profiles, &attrs)?;
    crate::features::save_embeddings(&dir.join(TEXT_EMBEDDINGS_FILE), &bundle.corpus.embeddings)?;
    crate::features::save_embeddings(&dir.join(SOCIO_EMBEDDINGS_FILE), &bundle.socio_embeddings)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_generation() {
        let spec = PopulationSpec::default();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.population, b.population);
    }

    #[test]
    fn single_category_attribute() {
        let spec = PopulationSpec {
            attributes: vec![AttributeSpec {
                name: "only".into(),
                categories: vec!["x".into()],
                probabilities: vec![1.0],
            }],
            signal: vec![],
            ..PopulationSpec::default()
        };
        let pop = generate_population(&spec).unwrap();
        assert!(pop.profiles.values().all(|p| p.category("only") == "x"));
    }

    #[test]
    fn corpus_shape_and_zero_noise() {
        let spec = PopulationSpec {
            text_count: 50,
            embedding_dim: 8,
            embedding_noise: 0.0,
            ..PopulationSpec::default()
        };
        let c = generate_corpus(&spec).unwrap();
        assert_eq!(c.embeddings.len(), 50);
        assert_eq!(c.embeddings.dimension(), 8);
        for (id, z) in &c.texts {
            let v = c.embeddings.get(id).unwrap();
            let proj: f64 = v.iter().zip(&c.direction).map(|(a, b)| a * b).sum();
            assert!((proj - z).abs() < 1e-12);
        }
    }

    #[test]
    fn annotations_per_text_is_exact() {
        let spec = PopulationSpec::default();
        let b = generate(&spec).unwrap();
        let mut per_text: BTreeMap<&str, usize> = BTreeMap::new();
        for r in b.dataset.records() {
            *per_text.entry(&r.text_id).or_default() += 1;
        }
        assert_eq!(per_text.len(), spec.text_count);
        assert!(per_text.values().all(|&n| n == spec.annotations_per_text));
    }

    #[test]
    fn invalid_specs_rejected() {
        let spec = PopulationSpec {
            annotations_per_text: 500,
            ..PopulationSpec::default()
        };
        assert!(spec.validate().is_err());
        let mut spec = PopulationSpec::default();
        spec.attributes[0].probabilities = vec![0.6, 0.6];
        assert!(spec.validate().is_err());
    }
}
