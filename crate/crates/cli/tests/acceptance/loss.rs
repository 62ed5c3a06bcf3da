use std::time::Instant;

use ndarray::{array, Array2};
use perspectives_core::objectives::{contrastive_loss, contrastive_loss_oracle};
use perspectives_core::rng;
use rand::{Rng, RngCore};

use crate::{ensure, within, Outcome};

fn random_batch(r: &mut rng::Rng) -> (Array2<f64>, Vec<u8>, Vec<String>) {
    let b = r.random_range(1..=16usize);
    let d = r.random_range(1..=8usize);
    let groups = r.random_range(1..=b);
    let e = Array2::from_shape_fn((b, d), |_| r.random_range(-1.5..1.5));
    let labels = (0..b).map(|_| (r.next_u64() & 1) as u8).collect();
    let texts = (0..b).map(|_| format!("t{}", r.random_range(0..groups))).collect();
    (e, labels, texts)
}

pub fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(31);
    let batches = 1200;
    let mut worst: f64 = 0.0;
    let mut empty = 0;
    for case in 0..batches {
        let (e, labels, texts) = random_batch(&mut r);
        for tau in [0.05, 0.1, 1.0] {
            for exclude in [false, true] {
                let fast = contrastive_loss(e.view(), &labels, &texts, tau, exclude);
                let slow = contrastive_loss_oracle(e.view(), &labels, &texts, tau, exclude);
                let err = (fast.loss - slow).abs();
                ensure!(err <= 1e-12, "batch {case}, tau {tau}: {} vs oracle {slow}", fast.loss);
                worst = worst.max(err);
                if fast.pos_pairs + fast.neg_pairs == 0 {
                    empty += 1;
                    ensure!(fast.loss == 0.0 && slow == 0.0, "mask-empty batch {case} gave {}", fast.loss);
                }
            }
        }
    }
    ensure!(empty > 0, "no mask-empty batch was drawn");
    let secs = within(start, 10.0)?;
    Ok(format!("{batches} batches x 3 temperatures x 2 softmax forms, worst |diff| {worst:.1e}, {empty} mask-empty evaluations, {secs:.2} s"))
}

pub fn hand_anchors() -> Outcome {
    let e = array![[1.0, 0.0], [1.0, 0.0]];
    let same = contrastive_loss(e.view(), &[1, 1], &["t", "t"], 1.0, false).loss;
    let diff = contrastive_loss(e.view(), &[1, 0], &["t", "t"], 1.0, false).loss;
    ensure!((same - std::f64::consts::LN_2).abs() < 1e-9, "same-label pair gave {same}");
    ensure!((diff - 0.5).abs() < 1e-9, "different-label pair gave {diff}");
    Ok(format!("same label {same:.12}, different label {diff:.12}"))
}
