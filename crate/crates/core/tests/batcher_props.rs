use std::collections::BTreeSet;

use perspectives_core::batcher::{masks, plan_groups, text_match};
use proptest::prelude::*;

fn text_ids() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(0u8..12, 1..120).prop_map(|v| v.into_iter().map(|t| format!("t{t}")).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(600))]

    #[test]
    fn plans_partition_and_keep_groups_together(ids in text_ids(), b in 2usize..40, seed in any::<u64>()) {
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let plan = plan_groups(&refs, b, seed).unwrap();

        // Partition: every record exactly once.
        let flat: Vec<usize> = plan.batches.iter().flatten().copied().collect();
        let mut sorted = flat.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..ids.len()).collect::<Vec<_>>());

        // Every batch is full except possibly the last, so oversize groups spill
        // into the immediately following batch.
        for (k, batch) in plan.batches.iter().enumerate() {
            prop_assert!(!batch.is_empty() && batch.len() <= b);
            if k + 1 < plan.batches.len() {
                prop_assert_eq!(batch.len(), b);
            }
        }

        // Each text's records form one contiguous run in the epoch sequence,
        // hence also within every batch.
        let mut seen = BTreeSet::new();
        let mut prev: Option<&str> = None;
        for &i in &flat {
            let t = ids[i].as_str();
            if prev != Some(t) {
                prop_assert!(seen.insert(t), "text {} appears in two runs", t);
                prev = Some(t);
            }
        }

        // Same seed replans identically.
        prop_assert_eq!(plan_groups(&refs, b, seed).unwrap(), plan);
    }

    #[test]
    fn masks_are_disjoint_submasks_of_text_match(ids in text_ids(), bits in prop::collection::vec(0u8..2, 120)) {
        let ids = &ids[..ids.len().min(40)];
        let labels = &bits[..ids.len()];
        let m_text = text_match(ids);
        let (pos, neg) = masks(labels, ids);
        let n = ids.len();
        for i in 0..n {
            for j in 0..n {
                let allowed = m_text[[i, j]] - if i == j { 1.0 } else { 0.0 };
                prop_assert!(pos[[i, j]] * neg[[i, j]] == 0.0);
                prop_assert!(pos[[i, j]] + neg[[i, j]] <= allowed);
                prop_assert_eq!(m_text[[i, j]], m_text[[j, i]]);
                let same = ids[i] == ids[j];
                prop_assert_eq!(pos[[i, j]] == 1.0, same && i != j && labels[i] == labels[j]);
                prop_assert_eq!(neg[[i, j]] == 1.0, same && labels[i] != labels[j]);
            }
        }
    }
}

#[test]
fn different_seeds_only_reorder_groups() {
    let ids: Vec<String> = (0..60).map(|i| format!("t{}", i % 9)).collect();
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let a = plan_groups(&refs, 8, 1).unwrap();
    let c = plan_groups(&refs, 8, 2).unwrap();
    assert_ne!(a, c);
    let sizes = |p: &perspectives_core::batcher::BatchPlan| p.batches.iter().map(Vec::len).collect::<Vec<_>>();
    assert_eq!(sizes(&a), sizes(&c));
}
