use std::time::Instant;

use ndarray::{array, Array2};
use perspectives_core::objectives::{contrastive_loss, contrastive_loss_oracle};
use perspectives_core::rng;
use rand::{Rng, RngCore};

fn random_batch(r: &mut rng::Rng) -> (Array2<f64>, Vec<u8>, Vec<String>) {
    let b = r.random_range(1..=16usize);
    let d = r.random_range(1..=6usize);
    let groups = r.random_range(1..=b.max(1));
    let e = Array2::from_shape_fn((b, d), |_| r.random_range(-1.5..1.5));
    let labels = (0..b).map(|_| (r.next_u64() & 1) as u8).collect();
    let texts = (0..b).map(|_| format!("t{}", r.random_range(0..groups))).collect();
    (e, labels, texts)
}

#[test]
fn matrix_form_matches_pairwise_oracle() {
    let start = Instant::now();
    let mut r = rng::seeded(2024);
    let mut empty = 0;
    for case in 0..1500 {
        let (e, labels, texts) = random_batch(&mut r);
        for tau in [0.05, 0.1, 1.0] {
            for exclude in [false, true] {
                let fast = contrastive_loss(e.view(), &labels, &texts, tau, exclude);
                let slow = contrastive_loss_oracle(e.view(), &labels, &texts, tau, exclude);
                assert!((fast.loss - slow).abs() <= 1e-12, "case {case} tau {tau}: {} vs {slow}", fast.loss);
                if fast.pos_pairs + fast.neg_pairs == 0 {
                    empty += 1;
                    assert_eq!(fast.loss, 0.0);
                    assert!(fast.grad.iter().all(|&g| g == 0.0));
                }
            }
        }
    }
    assert!(empty > 0, "no mask-empty batch was generated");
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn hand_anchors() {
    let e = array![[1.0, 0.0], [1.0, 0.0]];
    let same = contrastive_loss(e.view(), &[1, 1], &["t", "t"], 1.0, false);
    assert!((same.loss - std::f64::consts::LN_2).abs() < 1e-9);
    let diff = contrastive_loss(e.view(), &[1, 0], &["t", "t"], 1.0, false);
    assert!((diff.loss - 0.5).abs() < 1e-9);
}

#[test]
fn finite_difference_gradient() {
    let mut r = rng::seeded(7);
    let h = 1e-4;
    for _ in 0..200 {
        let (e, labels, texts) = random_batch(&mut r);
        let tau = [0.05, 0.1, 1.0][r.random_range(0..3usize)];
        let out = contrastive_loss(e.view(), &labels, &texts, tau, false);
        for idx in 0..e.len() {
            let (i, j) = (idx / e.ncols(), idx % e.ncols());
            let central = |step: f64| {
                let mut plus = e.clone();
                plus[[i, j]] += step;
                let mut minus = e.clone();
                minus[[i, j]] -= step;
                (contrastive_loss_oracle(plus.view(), &labels, &texts, tau, false)
                    - contrastive_loss_oracle(minus.view(), &labels, &texts, tau, false))
                    / (2.0 * step)
            };
            // Richardson extrapolation cancels the O(h²) truncation term.
            let num = (4.0 * central(h / 2.0) - central(h)) / 3.0;
            let ana = out.grad[[i, j]];
            let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-5);
            assert!(rel < 1e-4, "grad mismatch {ana} vs {num}");
        }
    }
}
