//! Demographic homophily of a representation space.
//!
//! For each annotator the `k` nearest neighbours are retrieved and the share
//! with the same category of an attribute is averaged (observed probability).
//! That share is compared with the probability that two random annotators
//! share a category, `Σ_c freq(c)²` (chance probability). A ratio above 1
//! means the attribute clusters in the space.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MeanStd;
use crate::features::{AnnotatorProfile, SocioSchema, MISSING};
use crate::rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

/// Annotator vectors plus their category for every attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct RepSpace {
    annotator_ids: Vec<String>,
    vectors: Array2<f64>,
    attribute_names: Vec<String>,
    /// `categories[a][i]`: category of annotator `i` for attribute `a`.
    categories: Vec<Vec<String>>,
}

impl RepSpace {
    /// Rows are sorted by annotator id so that tie-breaking by row index follows id order.
    pub fn new(
        reps: &BTreeMap<String, Vec<f64>>,
        profiles: &BTreeMap<String, AnnotatorProfile>,
        schema: &SocioSchema,
    ) -> Result<Self> {
        let annotator_ids: Vec<String> = reps.keys().cloned().collect();
        let dim = reps.values().next().map(Vec::len).unwrap_or(0);
        let mut vectors = Array2::zeros((annotator_ids.len(), dim));
        for (i, id) in annotator_ids.iter().enumerate() {
            let v = &reps[id];
            if v.len() != dim {
                return Err(Error::Format {
                    row: i + 1,
                    message: format!("vector for `{id}` has {} components, expected {dim}", v.len()),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("vector for `{id}` is not finite")));
            }
            vectors.row_mut(i).assign(&ndarray::ArrayView1::from(v.as_slice()));
        }
        let attribute_names: Vec<String> = schema.attributes().iter().map(|a| a.name.clone()).collect();
        let categories = schema
            .attributes()
            .iter()
            .map(|attr| {
                annotator_ids
                    .iter()
                    .map(|id| {
                        let p = profiles.get(id).ok_or_else(|| Error::Coverage {
                            kind: "annotator profile",
                            key: id.clone(),
                        })?;
                        let c = p.category(&attr.name);
                        Ok(if attr.categories.iter().any(|x| x == c) { c } else { MISSING }.to_string())
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            annotator_ids,
            vectors,
            attribute_names,
            categories,
        })
    }

    /// Builds a space directly from rows and per-attribute category columns.
    pub fn from_parts(
        annotator_ids: Vec<String>,
        vectors: Array2<f64>,
        attributes: Vec<(String, Vec<String>)>,
    ) -> Result<Self> {
        let n = annotator_ids.len();
        if vectors.nrows() != n || attributes.iter().any(|(_, c)| c.len() != n) {
            return Err(Error::Contract("rows, ids and attribute columns must align".into()));
        }
        let (attribute_names, categories) = attributes.into_iter().unzip();
        Ok(Self {
            annotator_ids,
            vectors,
            attribute_names,
            categories,
        })
    }

    pub fn len(&self) -> usize {
        self.annotator_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotator_ids.is_empty()
    }

    pub fn annotator_ids(&self) -> &[String] {
        &self.annotator_ids
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    fn attribute_index(&self, attribute: &str) -> Result<usize> {
        self.attribute_names
            .iter()
            .position(|a| a == attribute)
            .ok_or_else(|| Error::Parameter(format!("unknown attribute `{attribute}`")))
    }

    /// Pairwise distances; cosine distance treats zero vectors as orthogonal to everything.
    pub fn distance_matrix(&self, metric: Metric) -> Array2<f64> {
        match metric {
            Metric::Cosine => {
                let norms = self.vectors.map_axis(Axis(1), |r| r.dot(&r).sqrt());
                let safe = norms.mapv(|n| if n > 0.0 { n } else { 1.0 });
                let unit = &self.vectors / &safe.view().insert_axis(Axis(1));
                1.0 - unit.dot(&unit.t())
            }
            Metric::Euclidean => {
                let n = self.len();
                Array2::from_shape_fn((n, n), |(i, j)| {
                    let d = &self.vectors.row(i) - &self.vectors.row(j);
                    d.dot(&d).sqrt()
                })
            }
        }
    }
}

/// `k` nearest candidates to `query` (by row), excluding the query itself;
/// ties broken by row order, which is annotator-id order.
fn nearest(distances: &Array2<f64>, query: usize, candidates: &[usize], k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = candidates.iter().copied().filter(|&j| j != query).collect();
    let row = distances.row(query);
    let cmp = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
    if pool.len() > k {
        pool.select_nth_unstable_by(k, cmp);
        pool.truncate(k);
    }
    pool.sort_by(cmp);
    pool
}

pub fn knn(space: &RepSpace, i: usize, k: usize, metric: Metric) -> Result<Vec<usize>> {
    check_k(space.len(), k)?;
    if i >= space.len() {
        return Err(Error::Parameter(format!("annotator index {i} out of range")));
    }
    let d = space.distance_matrix(metric);
    let all: Vec<usize> = (0..space.len()).collect();
    Ok(nearest(&d, i, &all, k))
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!("k = {k} requires 1 <= k < N = {n}")));
    }
    Ok(())
}

/// Observed same-category neighbour share for draws `draws` (rows, with
/// repetition) searching among the distinct `pool` rows.
fn observed_over(distances: &Array2<f64>, column: &[String], draws: &[usize], pool: &[usize], k: usize) -> f64 {
    let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
    let mut total = 0.0;
    for &i in draws {
        let share = *cache.entry(i).or_insert_with(|| {
            let nn = nearest(distances, i, pool, k);
            nn.iter().filter(|&&j| column[j] == column[i]).count() as f64 / k as f64
        });
        total += share;
    }
    total / draws.len() as f64
}

fn chance_over(column: &[String], draws: &[usize]) -> f64 {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in draws {
        *counts.entry(column[i].as_str()).or_default() += 1;
    }
    // Integer sum of squares over n², one rounding: uniform categories give exactly 1/C.
    let n = draws.len() as u128;
    let squares: u128 = counts.values().map(|&c| (c as u128) * (c as u128)).sum();
    squares as f64 / (n * n) as f64
}

pub fn observed_probability(space: &RepSpace, attribute: &str, k: usize, metric: Metric) -> Result<f64> {
    check_k(space.len(), k)?;
    let a = space.attribute_index(attribute)?;
    let d = space.distance_matrix(metric);
    let all: Vec<usize> = (0..space.len()).collect();
    Ok(observed_over(&d, &space.categories[a], &all, &all, k))
}

pub fn chance_probability(space: &RepSpace, attribute: &str) -> Result<f64> {
    let a = space.attribute_index(attribute)?;
    if space.is_empty() {
        return Err(Error::Parameter("empty annotator pool".into()));
    }
    let all: Vec<usize> = (0..space.len()).collect();
    Ok(chance_over(&space.categories[a], &all))
}

pub fn homophily_ratio(space: &RepSpace, attribute: &str, k: usize, metric: Metric) -> Result<f64> {
    Ok(observed_probability(space, attribute, k, metric)? / chance_probability(space, attribute)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyRow {
    pub attribute: String,
    pub observed: MeanStd,
    pub chance: MeanStd,
    pub ratio: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyReport {
    pub k: usize,
    pub iterations: usize,
    pub seed: u64,
    pub metric: Metric,
    pub rows: Vec<HomophilyRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub k: usize,
    pub iterations: usize,
    pub seed: u64,
    pub metric: Metric,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            k: 50,
            iterations: 1000,
            seed: 0,
            metric: Metric::Cosine,
        }
    }
}

/// Resamples annotators with replacement. Neighbours are searched among the
/// distinct drawn annotators (never the query itself); each draw counts once
/// in the observed average and in the chance frequencies.
pub fn bootstrap_homophily(space: &RepSpace, attribute: &str, config: &BootstrapConfig) -> Result<HomophilyRow> {
    let d = space.distance_matrix(config.metric);
    bootstrap_with(space, &d, attribute, config)
}

fn bootstrap_with(space: &RepSpace, distances: &Array2<f64>, attribute: &str, config: &BootstrapConfig) -> Result<HomophilyRow> {
    check_k(space.len(), config.k)?;
    if config.iterations == 0 {
        return Err(Error::Parameter("bootstrap needs at least one iteration".into()));
    }
    let a = space.attribute_index(attribute)?;
    let column = &space.categories[a];
    let n = space.len();
    let samples: Vec<(f64, f64, f64)> = (0..config.iterations)
        .into_par_iter()
        .map(|it| {
            let mut r = rng::seeded(rng::derive_seed(config.seed, it as u64));
            let draws: Vec<usize> = (0..n).map(|_| (r.next_u64() % n as u64) as usize).collect();
            let mut pool = draws.clone();
            pool.sort_unstable();
            pool.dedup();
            if pool.len() <= config.k {
                return Err(Error::Parameter(format!(
                    "bootstrap sample has {} distinct annotators, need more than k = {}",
                    pool.len(),
                    config.k
                )));
            }
            let obs = observed_over(distances, column, &draws, &pool, config.k);
            let chance = chance_over(column, &draws);
            Ok((obs, chance, obs / chance))
        })
        .collect::<Result<_>>()?;
    let pick = |f: fn(&(f64, f64, f64)) -> f64| MeanStd::of(&samples.iter().map(f).collect::<Vec<_>>());
    Ok(HomophilyRow {
        attribute: attribute.to_string(),
        observed: pick(|s| s.0),
        chance: pick(|s| s.1),
        ratio: pick(|s| s.2),
    })
}

/// Bootstrap rows for every attribute of the space.
pub fn homophily_report(space: &RepSpace, config: &BootstrapConfig) -> Result<HomophilyReport> {
    let d = space.distance_matrix(config.metric);
    let rows = space
        .attribute_names
        .iter()
        .map(|a| bootstrap_with(space, &d, a, config))
        .collect::<Result<_>>()?;
    Ok(HomophilyReport {
        k: config.k,
        iterations: config.iterations,
        seed: config.seed,
        metric: config.metric,
        rows,
    })
}

/// Reads `annotator_id,d0..` representation CSVs.
pub fn read_representations<R: std::io::Read>(reader: R) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv("<representations>", e))?.clone();
    if headers.get(0) != Some("annotator_id") {
        return Err(Error::Format {
            row: 0,
            message: "header must start with `annotator_id`".into(),
        });
    }
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::csv("<representations>", e))?;
        let id = row.get(0).unwrap_or_default().to_string();
        let v = row
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Format {
                    row: i + 1,
                    message: format!("`{s}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(id, v);
    }
    Ok(out)
}

pub fn write_representations<W: std::io::Write>(writer: W, reps: &BTreeMap<String, Vec<f64>>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::csv("<representations>", e);
    let dim = reps.values().next().map(Vec::len).unwrap_or(0);
    let header: Vec<String> = std::iter::once("annotator_id".to_string())
        .chain((0..dim).map(|i| format!("d{i}")))
        .collect();
    wtr.write_record(&header).map_err(io)?;
    for (id, v) in reps {
        let row: Vec<String> = std::iter::once(id.clone()).chain(v.iter().map(f64::to_string)).collect();
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::io("<representations>", e))?;
    Ok(())
}

/// Table layout: `attribute,observed,observed_std,random,random_std,ratio,ratio_std`.
pub fn write_report_csv<W: std::io::Write>(writer: W, report: &HomophilyReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::csv("<homophily>", e);
    wtr.write_record(["attribute", "observed", "observed_std", "random", "random_std", "ratio", "ratio_std"])
        .map_err(io)?;
    for r in &report.rows {
        wtr.write_record([
            r.attribute.clone(),
            format!("{:.6}", r.observed.mean),
            format!("{:.6}", r.observed.std),
            format!("{:.6}", r.chance.mean),
            format!("{:.6}", r.chance.std),
            format!("{:.6}", r.ratio.mean),
            format!("{:.6}", r.ratio.std),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::io("<homophily>", e))?;
    Ok(())
}
