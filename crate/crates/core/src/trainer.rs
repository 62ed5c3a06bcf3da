//! Training regimes, the multi-seed protocol and the contrastive-weight ablation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batcher::{plan_epoch, Batch, FeatureSource, SocioSource};
use crate::corpus::{self, Dataset, SplitPair};
use crate::error::{Error, Result};
use crate::eval::{self, AggregateReport, MetricsReport};
use crate::features::{build_schema, AnnotatorProfile, EmbeddingTable, SocioSchema};
use crate::model::{self, checkpoint, AdamConfig, Mode, ModelConfig, ModelParams, ModelSpec, Variant};
use crate::objectives::{self, LossReport};
use crate::rng::derive_seed;

const PREDICT_CHUNK: usize = 256;
const INIT_STREAM: u64 = 10;
const DROPOUT_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub variant: Variant,
    pub model: ModelConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub adam: AdamConfig,
    /// Train the simple model on every annotation relabelled with its text's
    /// majority vote instead of one aggregated sample per text.
    pub simple_per_annotation: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SocioContrastive,
            model: ModelConfig::default(),
            lr: 0.01,
            batch_size: 32,
            epochs: 7,
            seeds: (0..6).collect(),
            adam: AdamConfig::default(),
            simple_per_annotation: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch size {} must be at least 2", self.batch_size)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("at least one epoch is required".into()));
        }
        if !(self.model.contrastive_weight >= 0.0) {
            return Err(Error::Config("contrastive weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// Read-only inputs shared by every run.
#[derive(Debug, Clone, Copy)]
pub struct Resources<'a> {
    pub text_embeddings: &'a EmbeddingTable,
    pub socio_embeddings: Option<&'a EmbeddingTable>,
    pub profiles: &'a BTreeMap<String, AnnotatorProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossReport,
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub seed: u64,
    pub spec: ModelSpec,
    pub params: ModelParams,
    pub heads: Option<BTreeMap<String, usize>>,
    pub schema: Option<SocioSchema>,
    pub log: Vec<LogEntry>,
    pub batches_per_epoch: Vec<usize>,
    pub test_probs: Vec<f64>,
    pub metrics: MetricsReport,
    /// Text ids read while training; audited against the test split.
    pub touched_texts: BTreeSet<String>,
}

impl TrainedRun {
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        checkpoint::save(dir, &self.spec, &self.params, self.seed, self.heads.as_ref(), self.schema.as_ref())
    }

    pub fn write_log<W: Write>(&self, writer: W) -> Result<()> {
        write_log(writer, &self.log)
    }
}

pub fn write_log<W: Write>(mut writer: W, log: &[LogEntry]) -> Result<()> {
    for entry in log {
        serde_json::to_writer(&mut writer, entry)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<train log>", e))?;
    }
    Ok(())
}

/// Everything needed to turn a dataset into model inputs for one variant.
#[derive(Debug, Clone)]
pub struct InputContext {
    pub schema: Option<SocioSchema>,
    pub heads: Option<BTreeMap<String, usize>>,
}

impl InputContext {
    pub fn source<'a>(&'a self, variant: Variant, resources: &Resources<'a>) -> Result<FeatureSource<'a>> {
        let socio = match variant {
            Variant::Simple | Variant::Multitask => SocioSource::None,
            Variant::SocioMultihot | Variant::SocioContrastive => SocioSource::Multihot {
                schema: self
                    .schema
                    .as_ref()
                    .ok_or_else(|| Error::Contract("multi-hot variant without a schema".into()))?,
                profiles: resources.profiles,
            },
            Variant::SocioEmbedding => SocioSource::Embedding(
                resources
                    .socio_embeddings
                    .ok_or_else(|| Error::Config("socio_embedding needs an annotator embedding table".into()))?,
            ),
        };
        Ok(FeatureSource {
            text: resources.text_embeddings,
            socio,
            heads: self.heads.as_ref(),
        })
    }

    pub fn socio_width(&self, variant: Variant, resources: &Resources<'_>) -> usize {
        match variant {
            Variant::Simple | Variant::Multitask => 0,
            Variant::SocioMultihot | Variant::SocioContrastive => self.schema.as_ref().map_or(0, SocioSchema::total_width),
            Variant::SocioEmbedding => resources.socio_embeddings.map_or(0, EmbeddingTable::dimension),
        }
    }
}

/// Fails before training when any text or annotator lacks an input row.
pub fn check_coverage(variant: Variant, split: &SplitPair, resources: &Resources<'_>) -> Result<()> {
    for ds in [&split.train, &split.test] {
        for r in ds.records() {
            if !resources.text_embeddings.contains(&r.text_id) {
                return Err(Error::Coverage {
                    kind: "text embedding",
                    key: r.text_id.clone(),
                });
            }
            match variant {
                Variant::SocioMultihot | Variant::SocioContrastive if !resources.profiles.contains_key(&r.annotator_id) => {
                    return Err(Error::Coverage {
                        kind: "annotator profile",
                        key: r.annotator_id.clone(),
                    })
                }
                Variant::SocioEmbedding => {
                    let table = resources
                        .socio_embeddings
                        .ok_or_else(|| Error::Config("socio_embedding needs an annotator embedding table".into()))?;
                    if !table.contains(&r.annotator_id) {
                        return Err(Error::Coverage {
                            kind: "annotator embedding",
                            key: r.annotator_id.clone(),
                        });
                    }
                }
                _ => {}
            }
        }
    }
    Ok(())
}

/// Samples the variant trains on: aggregated per text for `simple`, per annotation otherwise.
pub fn training_samples(config: &RunConfig, train: &Dataset) -> Dataset {
    if config.variant != Variant::Simple {
        return train.clone();
    }
    if !config.simple_per_annotation {
        return corpus::majority_dataset(train);
    }
    let votes = corpus::majority_vote(train);
    let records = train
        .records()
        .iter()
        .map(|r| corpus::AnnotationRecord {
            label: votes[&r.text_id],
            ..r.clone()
        })
        .collect();
    Dataset::from_records(records).expect("relabelling keeps pairs unique")
}

pub fn input_context(variant: Variant, train: &Dataset, resources: &Resources<'_>) -> Result<InputContext> {
    let schema = if variant.uses_multihot() {
        Some(build_schema(resources.profiles.values())?)
    } else {
        None
    };
    let heads = (variant == Variant::Multitask).then(|| {
        train
            .annotator_ids()
            .into_iter()
            .enumerate()
            .map(|(i, a)| (a.to_string(), i))
            .collect()
    });
    Ok(InputContext { schema, heads })
}

/// Eval-mode probabilities for every record of `dataset`, in record order.
pub fn predict(spec: &ModelSpec, params: &ModelParams, dataset: &Dataset, source: &FeatureSource<'_>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(dataset.len());
    let idx: Vec<usize> = (0..dataset.len()).collect();
    for chunk in idx.chunks(PREDICT_CHUNK) {
        let batch = Batch::assemble(dataset, chunk, source)?;
        let (p, _) = model::forward(spec, params, &batch, Mode::Eval, 0)?;
        out.extend(p);
    }
    Ok(out)
}

pub fn train_one(config: &RunConfig, seed: u64, split: &SplitPair, resources: &Resources<'_>) -> Result<TrainedRun> {
    config.validate()?;
    check_coverage(config.variant, split, resources)?;
    let samples = training_samples(config, &split.train);
    let ctx = input_context(config.variant, &split.train, resources)?;
    let spec = config.model.spec(
        config.variant,
        resources.text_embeddings.dimension(),
        ctx.socio_width(config.variant, resources),
        ctx.heads.as_ref().map_or(0, BTreeMap::len),
    );
    spec.validate()?;
    let source = ctx.source(config.variant, resources)?;
    let mut params = model::init_params(&spec, derive_seed(seed, INIT_STREAM))?;
    let weight = spec.contrastive_weight;

    let mut log = Vec::new();
    let mut batches_per_epoch = Vec::with_capacity(config.epochs);
    let mut touched = BTreeSet::new();
    for epoch in 0..config.epochs {
        let plan = plan_epoch(&samples, config.batch_size, seed.wrapping_add(epoch as u64))?;
        batches_per_epoch.push(plan.batches.len());
        for indices in &plan.batches {
            let batch = Batch::assemble(&samples, indices, &source)?;
            touched.extend(batch.text_ids.iter().cloned());
            let dropout_seed = derive_seed(seed, DROPOUT_STREAM + params.step);
            let (probs, trace) = model::forward(&spec, &params, &batch, Mode::Train, dropout_seed)?;
            let bce = objectives::bce_loss(probs.as_slice().expect("contiguous"), &batch.labels);
            let contrastive = trace.contrastive_view.as_ref().map(|view| {
                objectives::contrastive_loss(
                    view.view(),
                    &batch.labels,
                    &batch.text_ids,
                    spec.temperature,
                    spec.exclude_self_from_softmax,
                )
            });
            let (report, grads) = objectives::combined_loss(bce, contrastive, weight)?;
            let d_e = if weight > 0.0 { grads.d_embeddings.as_ref().map(|g| g.view()) } else { None };
            let g = model::backward(&spec, &params, &trace, &grads.d_logits, d_e)?;
            model::adam_step(&mut params, &g, config.lr, config.adam)?;
            log.push(LogEntry {
                step: params.step,
                epoch,
                loss: report,
            });
        }
    }

    let test_texts: BTreeSet<&str> = split.test.text_ids().into_iter().collect();
    if let Some(leak) = touched.iter().find(|t| test_texts.contains(t.as_str())) {
        return Err(Error::Contract(format!("test text `{leak}` was read during training")));
    }

    let test_probs = predict(&spec, &params, &split.test, &source)?;
    let labels: Vec<u8> = split.test.records().iter().map(|r| r.label).collect();
    let metrics = eval::full_metrics(&test_probs, &labels)?;
    Ok(TrainedRun {
        seed,
        spec,
        params,
        heads: ctx.heads,
        schema: ctx.schema,
        log,
        batches_per_epoch,
        test_probs,
        metrics,
        touched_texts: touched,
    })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub variant: Variant,
    pub contrastive_weight: f64,
    pub runs: Vec<TrainedRun>,
    pub aggregate: AggregateReport,
}

/// One run per configured seed (in parallel on the current rayon pool), then aggregated.
pub fn train_suite(config: &RunConfig, split: &SplitPair, resources: &Resources<'_>) -> Result<RunResult> {
    config.validate()?;
    let runs: Vec<TrainedRun> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            train_one(config, seed, split, resources).map_err(|e| Error::Run {
                seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let metrics: Vec<MetricsReport> = runs.iter().map(|r| r.metrics.clone()).collect();
    Ok(RunResult {
        variant: config.variant,
        contrastive_weight: config.model.contrastive_weight,
        aggregate: eval::aggregate_runs(&metrics)?,
        runs,
    })
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub with_contrastive: RunResult,
    pub without_contrastive: RunResult,
    /// Mean F1 with the contrastive term minus mean F1 without it.
    pub f1_delta: f64,
}

/// The socio-contrastive suite at its configured weight and at weight 0, same seeds.
pub fn run_ablation(config: &RunConfig, split: &SplitPair, resources: &Resources<'_>) -> Result<AblationResult> {
    if config.variant != Variant::SocioContrastive {
        return Err(Error::UnsupportedVariant(config.variant.to_string()));
    }
    let with_contrastive = train_suite(config, split, resources)?;
    let mut off = config.clone();
    off.model.contrastive_weight = 0.0;
    let without_contrastive = train_suite(&off, split, resources)?;
    let f1_delta = with_contrastive.aggregate.f1.mean - without_contrastive.aggregate.f1.mean;
    Ok(AblationResult {
        with_contrastive,
        without_contrastive,
        f1_delta,
    })
}
