use perspectives_core::eval::{confusion_metrics, roc_auc, roc_curve, trapezoid_area};
use perspectives_core::rng;
use rand::{Rng, RngCore};

use crate::{ensure, Outcome};

/// Fraction of (positive, negative) pairs ranked correctly, ties counting one half.
fn pair_count_auc(probs: &[f64], labels: &[u8]) -> f64 {
    let mut good = 0.0;
    let mut pairs = 0.0;
    for (&pi, _) in probs.iter().zip(labels).filter(|(_, &l)| l == 1) {
        for (&pj, _) in probs.iter().zip(labels).filter(|(_, &l)| l == 0) {
            pairs += 1.0;
            if pi > pj {
                good += 1.0;
            } else if pi == pj {
                good += 0.5;
            }
        }
    }
    good / pairs
}

pub fn correctness() -> Outcome {
    let mut r = rng::seeded(808);
    let mut sets = 0;
    let mut worst: f64 = 0.0;
    while sets < 1000 {
        let n = r.random_range(2..80usize);
        // Half the sets use a coarse grid so that ties are common.
        let probs: Vec<f64> = if sets % 2 == 0 {
            let levels = r.random_range(2..12u32);
            (0..n).map(|_| r.random_range(0..=levels) as f64 / levels as f64).collect()
        } else {
            (0..n).map(|_| r.random_range(0.0..1.0)).collect()
        };
        let labels: Vec<u8> = (0..n).map(|_| (r.next_u64() & 1) as u8).collect();
        if labels.iter().all(|&l| l == labels[0]) {
            continue;
        }
        let auc = roc_auc(&probs, &labels).map_err(|e| e.to_string())?;
        let pairs = pair_count_auc(&probs, &labels);
        let area = trapezoid_area(&roc_curve(&probs, &labels).map_err(|e| e.to_string())?);
        ensure!((auc - pairs).abs() < 1e-9, "set {sets}: auc {auc} vs pair count {pairs}");
        ensure!((area - auc).abs() < 1e-9, "set {sets}: trapezoid {area} vs auc {auc}");
        worst = worst.max((auc - pairs).abs()).max((area - auc).abs());
        sets += 1;
    }

    // Hand-counted: 0.5 is a positive prediction, 0.4999999 is not.
    let m = confusion_metrics(&[0.5, 0.4999999, 0.5, 0.9, 0.1], &[1, 1, 0, 0, 0], 0.5).map_err(|e| e.to_string())?;
    ensure!(
        (m.tp, m.fn_, m.fp, m.tn) == (1, 1, 2, 1),
        "boundary confusion tp {} fn {} fp {} tn {}",
        m.tp,
        m.fn_,
        m.fp,
        m.tn
    );
    ensure!((m.precision - 1.0 / 3.0).abs() < 1e-12 && (m.recall - 0.5).abs() < 1e-12, "precision {} recall {}", m.precision, m.recall);
    ensure!((m.f1 - 0.4).abs() < 1e-12, "f1 {}", m.f1);
    let all_pos = confusion_metrics(&[0.5, 0.5], &[1, 1], 0.5).map_err(|e| e.to_string())?;
    ensure!((all_pos.tp, all_pos.f1) == (2, 1.0), "all-boundary positives gave tp {} f1 {}", all_pos.tp, all_pos.f1);
    Ok(format!("{sets} score sets, worst |diff| {worst:.1e}; boundary confusions match hand counts"))
}
