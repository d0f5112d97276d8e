use std::collections::BTreeSet;

use balance::attribution::{AttributionScore, ScoreMode};
use balance::merge::*;
use proptest::collection::{btree_map, vec};
use proptest::prelude::*;

fn scores_strategy() -> impl Strategy<Value = Vec<AttributionScore>> {
    btree_map("[a-h]", prop_oneof![1 => Just(0.0), 4 => 0.0f64..1.0], 0..8).prop_map(|m| {
        m.into_iter()
            .map(|(name, score)| AttributionScore {
                candidate: name,
                lag: 0,
                score,
                beta: score,
                delta_x: 1.0,
                signed_contribution: score,
                mode: ScoreMode::Delta,
                flagged: false,
            })
            .collect()
    })
}

fn set(list: &[Ranked]) -> BTreeSet<String> {
    list.iter().map(|r| r.name.clone()).collect()
}

proptest! {
    #[test]
    fn selection_bounded_by_kappa(scores in scores_strategy(), kappa in 1usize..6) {
        let sel = rank_and_select(&scores, kappa);
        prop_assert!(sel.len() <= kappa);
        prop_assert!(sel.iter().all(|r| r.score > 0.0));
        prop_assert!(sel.windows(2).all(|w| w[0].score >= w[1].score));
        let nonzero = scores.iter().filter(|s| s.score > 0.0).count();
        prop_assert_eq!(sel.len(), nonzero.min(kappa));
    }

    #[test]
    fn intersection_within_lists_within_union(lists in vec((scores_strategy(), 1usize..6), 1..4)) {
        let per: Vec<Vec<Ranked>> = lists.iter().map(|(s, k)| rank_and_select(s, *k)).collect();
        let inter = set(&merge_sets(&per, MergeStrategy::Intersection));
        let union = set(&merge_sets(&per, MergeStrategy::Union));
        for l in &per {
            let s = set(l);
            prop_assert!(inter.is_subset(&s));
            prop_assert!(s.is_subset(&union));
        }
    }

    #[test]
    fn single_list_is_identity(scores in scores_strategy(), kappa in 1usize..6) {
        let sel = rank_and_select(&scores, kappa);
        for strategy in [MergeStrategy::Union, MergeStrategy::Intersection] {
            prop_assert_eq!(&merge_sets(std::slice::from_ref(&sel), strategy), &sel);
        }
    }

    #[test]
    fn merge_is_commutative(a in scores_strategy(), b in scores_strategy(), kappa in 1usize..6) {
        let (a, b) = (rank_and_select(&a, kappa), rank_and_select(&b, kappa));
        for strategy in [MergeStrategy::Union, MergeStrategy::Intersection] {
            prop_assert_eq!(merge_sets(&[a.clone(), b.clone()], strategy), merge_sets(&[b.clone(), a.clone()], strategy));
        }
    }
}

#[test]
fn kappa_zero_rejected() {
    assert!(MergeOptions { kappa: 0, strategy: MergeStrategy::Union }.validate().is_err());
    assert!(MergeOptions::default().validate().is_ok());
    assert_eq!(MergeOptions::default().kappa, 3);
}
