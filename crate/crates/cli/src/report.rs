//! Consolidated markdown report over whatever eval and homophily artifacts exist.

use std::fmt::Write as _;
use std::path::Path;

use perspectives_core::eval::MeanStd;
use perspectives_core::model::Variant;

use crate::commands::{eval_dir, homophily_dir, read_json, write_bytes, RunEval, RunHomophily, ABLATION_SUFFIX};
use crate::config::PipelineConfig;
use crate::error::CliResult;

pub struct ReportOutcome {
    pub markdown: String,
    pub gaps: Vec<String>,
}

fn pm(m: MeanStd) -> String {
    format!("{:.4} ± {:.4}", m.mean, m.std)
}

fn read_groups(path: &Path) -> Option<Vec<csv::StringRecord>> {
    let mut rdr = csv::Reader::from_path(path).ok()?;
    rdr.records().collect::<Result<Vec<_>, _>>().ok()
}

pub fn cmd_report(cfg: &PipelineConfig) -> CliResult<ReportOutcome> {
    let mut md = String::from("# Perspective modelling report\n\n");
    let mut gaps = Vec::new();

    let evals: Option<Vec<RunEval>> = read_json(&eval_dir(cfg).join("summary.json")).ok();
    md.push_str("## Model comparison\n\n");
    match &evals {
        Some(evals) if !evals.is_empty() => {
            md.push_str("| Model | Precision | Recall | F1 | AUC |\n|---|---|---|---|---|\n");
            for e in evals {
                let a = &e.aggregate;
                let auc = a.auc.map_or("n/a".to_string(), pm);
                let _ = writeln!(md, "| {} | {} | {} | {} | {} |", e.run, pm(a.precision), pm(a.recall), pm(a.f1), auc);
            }
            md.push('\n');
            let _ = writeln!(md, "Mean ± population std over {} seed(s) per model.\n", evals[0].aggregate.runs);
            for v in Variant::ALL {
                if !evals.iter().any(|e| e.variant == v) {
                    gaps.push(format!("no evaluation for {v}"));
                }
            }
        }
        _ => gaps.push("no evaluation summary (run `eval`)".into()),
    }

    md.push_str("## Contrastive ablation\n\n");
    let contrastive = Variant::SocioContrastive.as_str();
    let ablated = format!("{contrastive}{ABLATION_SUFFIX}");
    let find = |name: &str| evals.as_ref().and_then(|es| es.iter().find(|e| e.run == name));
    match (find(contrastive), find(&ablated)) {
        (Some(on), Some(off)) => {
            let _ = writeln!(
                md,
                "F1 with the contrastive term (weight {}): {}\n\nF1 with weight 0: {}\n\nDifference in mean F1: {:+.4}\n",
                on.contrastive_weight,
                pm(on.aggregate.f1),
                pm(off.aggregate.f1),
                on.aggregate.f1.mean - off.aggregate.f1.mean
            );
        }
        _ => {
            md.push_str("Not available.\n\n");
            gaps.push("ablation needs both socio_contrastive runs".into());
        }
    }

    md.push_str("## Group breakdown\n\n");
    match read_groups(&eval_dir(cfg).join(contrastive).join("groups.csv")) {
        Some(rows) if !rows.is_empty() => {
            let _ = writeln!(md, "Model: {contrastive}\n");
            md.push_str("| Attribute | Category | n | Precision | Recall | F1 |\n|---|---|---|---|---|---|\n");
            for r in rows {
                let num = |i: usize| r.get(i).and_then(|s| s.parse::<f64>().ok()).unwrap_or(f64::NAN);
                let _ = writeln!(
                    md,
                    "| {} | {} | {} | {} | {} | {} |",
                    &r[0],
                    &r[1],
                    &r[2],
                    pm(MeanStd { mean: num(3), std: num(4) }),
                    pm(MeanStd { mean: num(5), std: num(6) }),
                    pm(MeanStd { mean: num(7), std: num(8) }),
                );
            }
            md.push('\n');
        }
        _ => {
            md.push_str("Not available.\n\n");
            gaps.push(format!("no group breakdown for {contrastive}"));
        }
    }

    md.push_str("## Homophily of learned representations\n\n");
    let mut any = false;
    for run in [contrastive.to_string(), ablated] {
        let path = homophily_dir(cfg).join(&run).join("summary.json");
        let Ok(h) = read_json::<RunHomophily>(&path) else { continue };
        any = true;
        let t = &h.table;
        let _ = writeln!(md, "Model: {run} (k = {}, {} bootstrap iterations, {} checkpoint(s))\n", t.k, t.iterations, h.seeds.len());
        md.push_str("| Attribute | Observed | Random | Ratio |\n|---|---|---|---|\n");
        for row in &t.rows {
            let _ = writeln!(md, "| {} | {} | {} | {} |", row.attribute, pm(row.observed), pm(row.chance), pm(row.ratio));
        }
        md.push('\n');
    }
    if !any {
        md.push_str("Not available.\n\n");
        gaps.push("no homophily analysis (run `homophily`)".into());
    }

    if !gaps.is_empty() {
        md.push_str("## Gaps\n\n");
        for g in &gaps {
            let _ = writeln!(md, "- {g}");
        }
        md.push('\n');
    }

    let dir = cfg.output_dir.join("report");
    std::fs::create_dir_all(&dir).map_err(|e| crate::error::CliError::io(&dir, e))?;
    write_bytes(&dir.join("report.md"), md.as_bytes())?;
    let summary = eval_dir(cfg).join("summary.csv");
    if let Ok(bytes) = std::fs::read(&summary) {
        write_bytes(&dir.join("summary.csv"), &bytes)?;
    }
    Ok(ReportOutcome { markdown: md, gaps })
}
