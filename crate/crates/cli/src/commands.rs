//! Pipeline commands. Every output lands under `output_dir`:
//!
//! ```text
//! synth/        generated corpus, profiles and embedding tables
//! prep/         train.csv, test.csv, report.json
//! train/<run>/  seed-<n>/ checkpoints and logs, summary.json
//! eval/<run>/   seed-<n>/ metrics, ROC and group slices; groups.csv
//! homophily/<run>/  seed-<n>/ representations and reports; table.csv
//! report/       report.md, summary.csv
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use perspectives_core::batcher::{plan_epoch, BatchPlan};
use perspectives_core::corpus::{self, DatasetStats, FilterReport};
use perspectives_core::eval::{self, AggregateReport, GroupReport, MeanStd, MetricsReport};
use perspectives_core::features::{self, build_schema, AnnotatorProfile, EmbeddingTable};
use perspectives_core::homophily::{self, HomophilyReport, HomophilyRow, RepSpace};
use perspectives_core::model::{checkpoint, extract_socio_reps, Variant};
use perspectives_core::objectives::LossReport;
use perspectives_core::synth;
use perspectives_core::trainer::{self, InputContext, Resources, RunConfig};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

pub const ABLATION_SUFFIX: &str = "_lambda0";

fn progress(cfg: &PipelineConfig, msg: impl AsRef<str>) {
    if cfg.verbosity > 0 {
        eprintln!("{}", msg.as_ref());
    }
}

fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Removes a previous run's directory so stale seeds never leak into new outputs.
fn fresh_dir(path: &Path) -> CliResult<()> {
    if path.exists() {
        std::fs::remove_dir_all(path).map_err(|e| CliError::io(path, e))?;
    }
    create_dir(path)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    require(path)?;
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("seed-{seed}"))
}

/// `seed-<n>` subdirectories, ordered by seed.
fn seed_dirs(run_dir: &Path) -> CliResult<Vec<(u64, PathBuf)>> {
    require(run_dir)?;
    let mut out = Vec::new();
    for entry in std::fs::read_dir(run_dir).map_err(|e| CliError::io(run_dir, e))? {
        let entry = entry.map_err(|e| CliError::io(run_dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(seed) = name.strip_prefix("seed-").and_then(|s| s.parse().ok()) {
            out.push((seed, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// Run directories under `dir`, in canonical variant order.
fn run_dirs(dir: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    require(dir)?;
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        if entry.path().is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    out.sort_by_key(|(name, _)| run_order(name));
    Ok(out)
}

pub fn run_name(variant: Variant, contrastive_weight: f64) -> String {
    if variant == Variant::SocioContrastive && contrastive_weight == 0.0 {
        format!("{variant}{ABLATION_SUFFIX}")
    } else {
        variant.to_string()
    }
}

pub(crate) fn run_order(name: &str) -> (usize, String) {
    let base = name.strip_suffix(ABLATION_SUFFIX).unwrap_or(name);
    let idx = Variant::ALL.iter().position(|v| v.as_str() == base).unwrap_or(Variant::ALL.len());
    (idx, name.to_string())
}

// ---------------------------------------------------------------- synth

pub fn cmd_synth(cfg: &PipelineConfig) -> CliResult<()> {
    let spec = cfg
        .synth
        .as_ref()
        .ok_or_else(|| CliError::Config("the synth command needs a [synth] section".into()))?;
    let dir = cfg.synth_dir();
    fresh_dir(&dir)?;
    let bundle = synth::generate(spec)?;
    synth::write_bundle(&dir, &bundle, spec)?;
    write_json(&dir.join("spec.json"), spec)?;
    progress(cfg, format!("synth: {} annotations written to {}", bundle.dataset.len(), dir.display()));
    Ok(())
}

// ---------------------------------------------------------------- prep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub seed: u64,
    pub train_fraction: f64,
    pub train_texts: usize,
    pub test_texts: usize,
    pub train_records: usize,
    pub test_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepReport {
    pub input: DatasetStats,
    pub filter: FilterReport,
    pub split: SplitSummary,
}

pub fn prep_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("prep")
}

pub fn cmd_prep(cfg: &PipelineConfig) -> CliResult<PrepReport> {
    let paths = cfg.data_paths()?;
    require(&paths.annotations)?;
    let ds = corpus::load_annotations(&paths.annotations, &cfg.data.columns)?;
    let (filtered, filter) = corpus::filter_dataset(&ds, cfg.prep.min_annotators_per_text, cfg.prep.min_annotations_per_annotator)?;
    let split = corpus::split_by_text(&filtered, cfg.prep.train_fraction, cfg.prep.seed)?;
    let dir = prep_dir(cfg);
    fresh_dir(&dir)?;
    corpus::save_annotations(&dir.join("train.csv"), &split.train, &cfg.data.columns)?;
    corpus::save_annotations(&dir.join("test.csv"), &split.test, &cfg.data.columns)?;
    let report = PrepReport {
        input: ds.stats().clone(),
        filter,
        split: SplitSummary {
            seed: split.seed,
            train_fraction: split.train_fraction,
            train_texts: split.train.stats().unique_texts,
            test_texts: split.test.stats().unique_texts,
            train_records: split.train.len(),
            test_records: split.test.len(),
        },
    };
    write_json(&dir.join("report.json"), &report)?;
    progress(cfg, format!("prep: {} train / {} test records", report.split.train_records, report.split.test_records));
    Ok(report)
}

// ---------------------------------------------------------------- shared inputs

pub struct Inputs {
    pub split: corpus::SplitPair,
    pub text_embeddings: EmbeddingTable,
    pub socio_embeddings: Option<EmbeddingTable>,
    pub socio_path: Option<PathBuf>,
    pub profiles: BTreeMap<String, AnnotatorProfile>,
}

impl Inputs {
    pub fn load(cfg: &PipelineConfig) -> CliResult<Self> {
        let paths = cfg.data_paths()?;
        let dir = prep_dir(cfg);
        let train_path = dir.join("train.csv");
        let test_path = dir.join("test.csv");
        for p in [&train_path, &test_path, &paths.profiles, &paths.text_embeddings] {
            require(p)?;
        }
        let train = corpus::load_annotations(&train_path, &cfg.data.columns)?;
        let test = corpus::load_annotations(&test_path, &cfg.data.columns)?;
        let socio_embeddings = match &paths.socio_embeddings {
            Some(p) if p.exists() => Some(features::load_embeddings(p)?),
            _ => None,
        };
        Ok(Self {
            split: corpus::SplitPair {
                train,
                test,
                seed: cfg.prep.seed,
                train_fraction: cfg.prep.train_fraction,
            },
            text_embeddings: features::load_embeddings(&paths.text_embeddings)?,
            socio_embeddings,
            socio_path: paths.socio_embeddings,
            profiles: features::load_profiles(&paths.profiles)?,
        })
    }

    pub fn resources(&self) -> Resources<'_> {
        Resources {
            text_embeddings: &self.text_embeddings,
            socio_embeddings: self.socio_embeddings.as_ref(),
            profiles: &self.profiles,
        }
    }

    fn check_variant(&self, variant: Variant) -> CliResult<()> {
        if variant == Variant::SocioEmbedding && self.socio_embeddings.is_none() {
            return Err(match &self.socio_path {
                Some(p) => CliError::MissingInput(p.clone()),
                None => CliError::Config("socio_embedding needs data.socio_embeddings".into()),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub steps: u64,
    pub final_loss: Option<LossReport>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub run: String,
    pub variant: Variant,
    pub contrastive_weight: f64,
    pub aggregate: AggregateReport,
    pub seeds: Vec<SeedSummary>,
}

pub fn train_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("train")
}

/// Runs the config asks for: each variant, plus the zero-weight contrastive arm when enabled.
pub fn planned_runs(cfg: &PipelineConfig) -> Vec<RunConfig> {
    let mut runs = Vec::new();
    for &v in &cfg.train.variants {
        let rc = cfg.run_config(v);
        let ablate = v == Variant::SocioContrastive && cfg.train.ablation && rc.model.contrastive_weight > 0.0;
        runs.push(rc.clone());
        if ablate {
            let mut off = rc;
            off.model.contrastive_weight = 0.0;
            runs.push(off);
        }
    }
    runs
}

pub fn cmd_train(cfg: &PipelineConfig, dump_plan: bool) -> CliResult<Vec<TrainSummary>> {
    let inputs = Inputs::load(cfg)?;
    let res = inputs.resources();
    let root = train_dir(cfg);
    create_dir(&root)?;
    let mut summaries = Vec::new();
    for rc in planned_runs(cfg) {
        inputs.check_variant(rc.variant)?;
        let name = run_name(rc.variant, rc.model.contrastive_weight);
        progress(cfg, format!("train: {name} over {} seed(s)", rc.seeds.len()));
        let result = trainer::train_suite(&rc, &inputs.split, &res)?;
        let dir = root.join(&name);
        fresh_dir(&dir)?;
        let samples = trainer::training_samples(&rc, &inputs.split.train);
        for run in &result.runs {
            let sd = seed_dir(&dir, run.seed);
            run.save_checkpoint(&sd)?;
            let log_path = sd.join("log.jsonl");
            let f = std::fs::File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
            let mut w = std::io::BufWriter::new(f);
            run.write_log(&mut w)?;
            w.flush().map_err(|e| CliError::io(&log_path, e))?;
            if dump_plan {
                let plans: Vec<BatchPlan> = (0..rc.epochs)
                    .map(|e| plan_epoch(&samples, rc.batch_size, run.seed.wrapping_add(e as u64)))
                    .collect::<Result<_, _>>()?;
                write_json(&sd.join("plan.json"), &plans)?;
            }
        }
        let summary = TrainSummary {
            run: name,
            variant: rc.variant,
            contrastive_weight: rc.model.contrastive_weight,
            aggregate: result.aggregate.clone(),
            seeds: result
                .runs
                .iter()
                .map(|r| SeedSummary {
                    seed: r.seed,
                    steps: r.params.step,
                    final_loss: r.log.last().map(|l| l.loss.clone()),
                    metrics: r.metrics.clone(),
                })
                .collect(),
        };
        write_json(&dir.join("summary.json"), &summary)?;
        summaries.push(summary);
    }
    Ok(summaries)
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEval {
    pub run: String,
    pub variant: Variant,
    pub contrastive_weight: f64,
    pub aggregate: AggregateReport,
}

pub fn eval_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("eval")
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn cmd_eval(cfg: &PipelineConfig) -> CliResult<Vec<RunEval>> {
    let inputs = Inputs::load(cfg)?;
    let res = inputs.resources();
    let runs = run_dirs(&train_dir(cfg))?;
    if runs.is_empty() {
        return Err(CliError::MissingInput(train_dir(cfg)));
    }
    let schema = build_schema(inputs.profiles.values())?;
    let test = &inputs.split.test;
    let labels: Vec<u8> = test.records().iter().map(|r| r.label).collect();
    let annotators: Vec<String> = test.records().iter().map(|r| r.annotator_id.clone()).collect();
    let root = eval_dir(cfg);
    fresh_dir(&root)?;
    let mut evals = Vec::new();
    for (name, dir) in runs {
        let seeds = seed_dirs(&dir)?;
        if seeds.is_empty() {
            continue;
        }
        progress(cfg, format!("eval: {name}"));
        let out = root.join(&name);
        let mut reports = Vec::new();
        let mut group_runs: Vec<Vec<GroupReport>> = Vec::new();
        let mut spec_info = None;
        for (seed, sd) in seeds {
            let ck = checkpoint::load(&sd)?;
            let spec = &ck.manifest.spec;
            inputs.check_variant(spec.variant)?;
            spec_info = Some((spec.variant, spec.contrastive_weight));
            let ctx = InputContext {
                schema: ck.manifest.schema.clone(),
                heads: ck.manifest.heads.clone(),
            };
            let source = ctx.source(spec.variant, &res)?;
            let probs = trainer::predict(spec, &ck.params, test, &source)?;
            let metrics = eval::full_metrics(&probs, &labels)?;
            let groups = eval::group_breakdown(&probs, &labels, &annotators, &inputs.profiles, &schema)?;
            let od = seed_dir(&out, seed);
            create_dir(&od)?;
            write_json(&od.join("metrics.json"), &metrics)?;
            write_json(&od.join("groups.json"), &groups)?;
            if let Ok(curve) = eval::roc_curve(&probs, &labels) {
                let mut w = csv_writer(&od.join("roc.csv"))?;
                w.write_record(["threshold", "fpr", "tpr"])?;
                for p in curve {
                    w.write_record([fmt_f64(p.threshold), fmt_f64(p.fpr), fmt_f64(p.tpr)])?;
                }
                w.flush().map_err(|e| CliError::io(od.join("roc.csv"), e))?;
            }
            let mut w = csv_writer(&od.join("predictions.csv"))?;
            w.write_record(["text_id", "annotator_id", "label", "probability"])?;
            for (r, p) in test.records().iter().zip(&probs) {
                w.write_record([r.text_id.clone(), r.annotator_id.clone(), r.label.to_string(), fmt_f64(*p)])?;
            }
            w.flush().map_err(|e| CliError::io(od.join("predictions.csv"), e))?;
            reports.push(metrics);
            group_runs.push(groups);
        }
        let (variant, weight) = spec_info.expect("at least one seed");
        let aggregate = eval::aggregate_runs(&reports)?;
        write_json(&out.join("summary.json"), &aggregate)?;
        write_group_table(&out.join("groups.csv"), &group_runs)?;
        evals.push(RunEval {
            run: name,
            variant,
            contrastive_weight: weight,
            aggregate,
        });
    }
    write_json(&root.join("summary.json"), &evals)?;
    write_summary_csv(&root.join("summary.csv"), &evals)?;
    Ok(evals)
}

/// One row per (attribute, category) with the mean ± std of each metric over seeds.
fn write_group_table(path: &Path, runs: &[Vec<GroupReport>]) -> CliResult<()> {
    let mut cells: BTreeMap<(usize, usize), (String, String, Vec<MetricsReport>)> = BTreeMap::new();
    for groups in runs {
        for (ai, g) in groups.iter().enumerate() {
            for (ci, c) in g.categories.iter().enumerate() {
                cells
                    .entry((ai, ci))
                    .or_insert_with(|| (g.attribute.clone(), c.category.clone(), Vec::new()))
                    .2
                    .push(c.metrics.clone());
            }
        }
    }
    let mut w = csv_writer(path)?;
    w.write_record(["attribute", "category", "n", "precision", "precision_std", "recall", "recall_std", "f1", "f1_std"])?;
    for (attribute, category, ms) in cells.into_values() {
        let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&ms.iter().map(f).collect::<Vec<_>>());
        let (p, r, f) = (col(|m| m.precision), col(|m| m.recall), col(|m| m.f1));
        w.write_record([
            attribute,
            category,
            ms[0].n.to_string(),
            fmt_f64(p.mean),
            fmt_f64(p.std),
            fmt_f64(r.mean),
            fmt_f64(r.std),
            fmt_f64(f.mean),
            fmt_f64(f.std),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_summary_csv(path: &Path, evals: &[RunEval]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "model",
        "contrastive_weight",
        "runs",
        "precision",
        "precision_std",
        "recall",
        "recall_std",
        "f1",
        "f1_std",
        "auc",
        "auc_std",
    ])?;
    for e in evals {
        let a = &e.aggregate;
        let (auc, auc_std) = a.auc.map_or((String::new(), String::new()), |m| (fmt_f64(m.mean), fmt_f64(m.std)));
        w.write_record([
            e.run.clone(),
            fmt_f64(e.contrastive_weight),
            a.runs.to_string(),
            fmt_f64(a.precision.mean),
            fmt_f64(a.precision.std),
            fmt_f64(a.recall.mean),
            fmt_f64(a.recall.std),
            fmt_f64(a.f1.mean),
            fmt_f64(a.f1.std),
            auc,
            auc_std,
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

// ---------------------------------------------------------------- homophily

pub fn homophily_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("homophily")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHomophily {
    pub run: String,
    /// Mean over seeds of each bootstrap mean; `std` is the mean bootstrap std.
    pub table: HomophilyReport,
    pub seeds: Vec<(u64, HomophilyReport)>,
}

pub fn cmd_homophily(cfg: &PipelineConfig) -> CliResult<Vec<RunHomophily>> {
    let inputs = Inputs::load(cfg)?;
    let runs = run_dirs(&train_dir(cfg))?;
    let root = homophily_dir(cfg);
    fresh_dir(&root)?;
    let mut out = Vec::new();
    for (name, dir) in runs {
        let mut per_seed = Vec::new();
        for (seed, sd) in seed_dirs(&dir)? {
            let ck = checkpoint::load(&sd)?;
            if ck.manifest.spec.variant != Variant::SocioContrastive {
                break;
            }
            let schema = ck
                .manifest
                .schema
                .as_ref()
                .ok_or_else(|| CliError::Core(perspectives_core::Error::Contract("checkpoint lacks its schema".into())))?;
            let reps = extract_socio_reps(&ck.manifest.spec, &ck.params, &inputs.profiles, schema)?;
            let space = RepSpace::new(&reps, &inputs.profiles, schema)?;
            let report = homophily::homophily_report(&space, &cfg.homophily)?;
            let od = seed_dir(&root.join(&name), seed);
            create_dir(&od)?;
            let f = std::fs::File::create(od.join("representations.csv")).map_err(|e| CliError::io(&od, e))?;
            homophily::write_representations(std::io::BufWriter::new(f), &reps)?;
            write_json(&od.join("report.json"), &report)?;
            let f = std::fs::File::create(od.join("report.csv")).map_err(|e| CliError::io(&od, e))?;
            homophily::write_report_csv(std::io::BufWriter::new(f), &report)?;
            per_seed.push((seed, report));
        }
        if per_seed.is_empty() {
            continue;
        }
        progress(cfg, format!("homophily: {name}"));
        let table = pool_reports(&per_seed.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>());
        let run_root = root.join(&name);
        let f = std::fs::File::create(run_root.join("table.csv")).map_err(|e| CliError::io(&run_root, e))?;
        homophily::write_report_csv(std::io::BufWriter::new(f), &table)?;
        let entry = RunHomophily {
            run: name,
            table,
            seeds: per_seed,
        };
        write_json(&run_root.join("summary.json"), &entry)?;
        out.push(entry);
    }
    if out.is_empty() {
        return Err(CliError::Config("no socio_contrastive checkpoints to analyse".into()));
    }
    Ok(out)
}

/// Averages per-checkpoint bootstrap rows attribute by attribute.
pub fn pool_reports(reports: &[HomophilyReport]) -> HomophilyReport {
    let first = &reports[0];
    let pool = |pick: fn(&HomophilyRow) -> MeanStd, a: usize| {
        let rows: Vec<MeanStd> = reports.iter().map(|r| pick(&r.rows[a])).collect();
        MeanStd {
            mean: rows.iter().map(|m| m.mean).sum::<f64>() / rows.len() as f64,
            std: rows.iter().map(|m| m.std).sum::<f64>() / rows.len() as f64,
        }
    };
    HomophilyReport {
        rows: first
            .rows
            .iter()
            .enumerate()
            .map(|(a, row)| HomophilyRow {
                attribute: row.attribute.clone(),
                observed: pool(|r| r.observed, a),
                chance: pool(|r| r.chance, a),
                ratio: pool(|r| r.ratio, a),
            })
            .collect(),
        ..first.clone()
    }
}
