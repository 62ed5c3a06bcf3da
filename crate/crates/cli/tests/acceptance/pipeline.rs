//! Criteria that drive the full pipeline: the library for the synthetic-data
//! experiments, the binary for determinism.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::Instant;

use perspectives_cli::commands::{eval_dir, homophily_dir, read_json, RunEval, RunHomophily};
use perspectives_cli::{execute, Command, PipelineConfig};
use perspectives_core::model::Variant;
use perspectives_core::synth::PopulationSpec;

use crate::{ensure, within, Outcome};

fn experiment(dir: &Path, synth: PopulationSpec, variants: &[Variant]) -> Result<PipelineConfig, String> {
    let mut cfg = PipelineConfig::parse(&format!("output_dir = {:?}\n", dir.display().to_string())).map_err(|e| e.to_string())?;
    cfg.synth = Some(synth);
    cfg.train.variants = variants.to_vec();
    cfg.validate().map_err(|e| e.to_string())?;
    execute(Command::Run, &cfg, false).map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn f1_by_run(cfg: &PipelineConfig) -> Result<BTreeMap<String, f64>, String> {
    let evals: Vec<RunEval> = read_json(&eval_dir(cfg).join("summary.json")).map_err(|e| e.to_string())?;
    Ok(evals.into_iter().map(|e| (e.run, e.aggregate.f1.mean)).collect())
}

fn get(map: &BTreeMap<String, f64>, run: &str) -> Result<f64, String> {
    map.get(run).copied().ok_or_else(|| format!("no result for {run}"))
}

pub fn signal_hypothesis() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = PopulationSpec::default();
    ensure!(spec.text_count >= 200 && spec.annotator_count >= 100, "population below the required size");
    ensure!(spec.signal.iter().any(|s| s.log_odds.abs() >= 2.0), "no log-odds shift of at least 2");
    let cfg = experiment(tmp.path(), spec, &[Variant::Simple, Variant::SocioContrastive])?;
    ensure!(cfg.train.seeds.len() == 6, "expected the 6-seed protocol");
    let f1 = f1_by_run(&cfg)?;
    let simple = get(&f1, "simple")?;
    let contrastive = get(&f1, "socio_contrastive")?;
    let ablation = get(&f1, "socio_contrastive_lambda0")?;
    let summary = format!("F1 socio_contrastive {contrastive:.4}, simple {simple:.4}, lambda 0 {ablation:.4}");
    ensure!(contrastive >= simple + 0.05, "{summary}: margin over simple {:.4} < 0.05", contrastive - simple);
    ensure!(contrastive > ablation, "{summary}: does not exceed the lambda 0 ablation");
    let secs = within(start, 600.0)?;
    Ok(format!("{summary}, {secs:.0} s"))
}

pub fn null_honesty() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = PopulationSpec {
        signal: Vec::new(),
        ..PopulationSpec::default()
    };
    let cfg = experiment(tmp.path(), spec, &Variant::ALL)?;
    let f1 = f1_by_run(&cfg)?;
    let simple = get(&f1, "simple")?;
    let mut problems = Vec::new();
    let mut notes = Vec::new();
    for (run, &score) in &f1 {
        let gain = score - simple;
        notes.push(format!("{run} {gain:+.4}"));
        if gain > 0.03 {
            problems.push(format!("{run} F1 advantage {gain:.4} > 0.03"));
        }
    }
    for run in ["socio_contrastive", "socio_contrastive_lambda0"] {
        let h: RunHomophily = read_json(&homophily_dir(&cfg).join(run).join("summary.json")).map_err(|e| e.to_string())?;
        for row in &h.table.rows {
            let ratio = row.ratio.mean;
            notes.push(format!("{run}/{} ratio {ratio:.3}", row.attribute));
            if !(0.85..=1.15).contains(&ratio) {
                problems.push(format!("{run} {} homophily ratio {ratio:.3} outside [0.85, 1.15]", row.attribute));
            }
        }
    }
    let detail = format!("F1 vs simple: {}", notes.join(", "));
    ensure!(problems.is_empty(), "{}; {detail}", problems.join("; "));
    Ok(detail)
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

const SMALL_CONFIG: &str = r#"output_dir = "out"

[train]
epochs = 2
seeds = [0, 1, 2]

[model]
hidden_dims = [32, 16]
projection_dims = [16, 32]

[homophily]
k = 10
iterations = 50

[synth]
text_count = 120
annotator_count = 60
"#;

pub fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut roots = Vec::new();
    for (name, threads) in [("first", "1"), ("second", "3")] {
        let dir = tmp.path().join(name);
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        std::fs::write(dir.join("pipeline.toml"), SMALL_CONFIG).map_err(|e| e.to_string())?;
        let status = Process::new(env!("CARGO_BIN_EXE_perspectives"))
            .args(["run", "--dump-plan", "--threads", threads, "--config"])
            .arg(dir.join("pipeline.toml"))
            .status()
            .map_err(|e| e.to_string())?;
        ensure!(status.success(), "{name} run exited with {status}");
        roots.push(dir.join("out"));
    }
    let (a, b) = (files(&roots[0]), files(&roots[1]));
    ensure!(a == b, "the two runs wrote different file sets");
    for required in ["prep/train.csv", "prep/test.csv", "report/report.md", "train/socio_contrastive/seed-0/plan.json"] {
        ensure!(a.iter().any(|p| p == Path::new(required)), "missing {required}");
    }
    let checkpoints = a.iter().filter(|p| p.extension().is_some_and(|e| e == "bin")).count();
    ensure!(checkpoints > 0, "no checkpoint tensors were written");
    for rel in &a {
        let x = std::fs::read(roots[0].join(rel)).map_err(|e| e.to_string())?;
        let y = std::fs::read(roots[1].join(rel)).map_err(|e| e.to_string())?;
        ensure!(x == y, "{} differs between runs", rel.display());
    }
    Ok(format!("{} files byte-identical across two runs (1 and 3 worker threads), including {checkpoints} checkpoint tensors", a.len()))
}
