use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};

use perspectives_core::batcher::{masks, plan_groups, text_match};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use crate::{ensure, Outcome};

const CASES: u32 = 600;

fn case() -> impl Strategy<Value = (Vec<String>, usize, u64, Vec<u8>)> {
    (
        prop::collection::vec(0u8..15, 1..150).prop_map(|v| v.into_iter().map(|t| format!("t{t}")).collect::<Vec<_>>()),
        2usize..40,
        any::<u64>(),
        prop::collection::vec(0u8..2, 150),
    )
}

fn plan_invariants(ids: &[String], b: usize, seed: u64) -> Result<(), TestCaseError> {
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let plan = plan_groups(&refs, b, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;

    let flat: Vec<usize> = plan.batches.iter().flatten().copied().collect();
    let mut sorted = flat.clone();
    sorted.sort_unstable();
    prop_assert_eq!(sorted, (0..ids.len()).collect::<Vec<_>>(), "not a partition");

    // Full batches except the last: a group that does not fit spills into the next batch.
    for (k, batch) in plan.batches.iter().enumerate() {
        prop_assert!(!batch.is_empty() && batch.len() <= b);
        if k + 1 < plan.batches.len() {
            prop_assert_eq!(batch.len(), b);
        }
    }

    // Same-text records form a single contiguous run of the epoch sequence.
    let mut seen = BTreeSet::new();
    let mut prev = None;
    for &i in &flat {
        let t = ids[i].as_str();
        if prev != Some(t) {
            prop_assert!(seen.insert(t), "text {} is split into two runs", t);
            prev = Some(t);
        }
    }
    prop_assert_eq!(plan_groups(&refs, b, seed).unwrap(), plan);
    Ok(())
}

fn mask_invariants(ids: &[String], labels: &[u8]) -> Result<(), TestCaseError> {
    let ids = &ids[..ids.len().min(40)];
    let labels = &labels[..ids.len()];
    let m_text = text_match(ids);
    let (pos, neg) = masks(labels, ids);
    for i in 0..ids.len() {
        for j in 0..ids.len() {
            let allowed = m_text[[i, j]] - if i == j { 1.0 } else { 0.0 };
            prop_assert!(pos[[i, j]] * neg[[i, j]] == 0.0, "masks overlap");
            prop_assert!(pos[[i, j]] + neg[[i, j]] <= allowed, "mask outside M_text - I");
            let same = ids[i] == ids[j];
            prop_assert_eq!(pos[[i, j]] == 1.0, same && i != j && labels[i] == labels[j]);
            prop_assert_eq!(neg[[i, j]] == 1.0, same && labels[i] != labels[j]);
        }
    }
    Ok(())
}

pub fn invariants() -> Outcome {
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: CASES,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let oversize = Cell::new(0u32);
    let ran = Cell::new(0u32);
    let result = runner.run(&case(), |(ids, b, seed, labels)| {
        let mut counts = BTreeMap::new();
        for t in &ids {
            *counts.entry(t.as_str()).or_insert(0usize) += 1;
        }
        if counts.values().any(|&c| c > b) {
            oversize.set(oversize.get() + 1);
        }
        ran.set(ran.get() + 1);
        plan_invariants(&ids, b, seed)?;
        mask_invariants(&ids, &labels)
    });
    ensure!(result.is_ok(), "{}", result.unwrap_err());
    let (oversize, ran) = (oversize.get(), ran.get());
    ensure!(oversize > 0, "no case had a text group larger than the batch");
    Ok(format!("{ran} random datasets ({oversize} with oversize text groups)"))
}
