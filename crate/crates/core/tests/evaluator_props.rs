use ctsearch::evaluator::{make_pairs, pairwise_ranking_accuracy, spearman_rho, Channel, ScoreRecord};
use ctsearch::searchspace::{sample_arch_hyper, SpaceConfig};
use proptest::prelude::*;
use std::collections::HashSet;

// grid values keep strictly increasing maps from merging distinct entries
fn scores(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec((-20i32..20).prop_map(|k| f64::from(k) * 0.37), len)
}

fn pair_of_scores() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..30).prop_flat_map(|n| (scores(n..n + 1), scores(n..n + 1)))
}

fn records(values: &[f64], offset: u64) -> Vec<ScoreRecord> {
    let mut seen = HashSet::new();
    let cands = (offset..)
        .map(|s| sample_arch_hyper(s, &SpaceConfig::default()))
        .filter(|ah| seen.insert(ah.clone()));
    values
        .iter()
        .zip(cands)
        .map(|(&score, ah)| ScoreRecord {
            ah,
            score,
            channel: Channel::Full,
            cost_epochs: 1,
            seed: 0,
            test_error: None,
        })
        .collect()
}

proptest! {
    #[test]
    fn pra_of_identical_is_one(x in scores(2..40)) {
        prop_assert_eq!(pairwise_ranking_accuracy(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn pra_ignores_increasing_maps((x, y) in pair_of_scores(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let base = pairwise_ranking_accuracy(&x, &y).unwrap();
        let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let ay: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        prop_assert_eq!(pairwise_ranking_accuracy(&ex, &y).unwrap(), base);
        prop_assert_eq!(pairwise_ranking_accuracy(&x, &ay).unwrap(), base);
        prop_assert_eq!(pairwise_ranking_accuracy(&ex, &ay).unwrap(), base);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn spearman_is_symmetric_and_rank_based((x, y) in pair_of_scores(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let r = spearman_rho(&x, &y).unwrap();
        prop_assert_eq!(r, spearman_rho(&y, &x).unwrap());
        let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let ay: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        prop_assert!((spearman_rho(&ex, &ay).unwrap() - r).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
    }

    #[test]
    fn pairs_are_complete_and_consistent(x in scores(2..25), offset in 0u64..1_000_000) {
        let recs = records(&x, offset);
        let pairs = make_pairs(&recs).unwrap();
        let a = x.len();
        prop_assert_eq!(pairs.len(), a * (a - 1) / 2);
        let score = |ah| recs.iter().find(|r| &r.ah == ah).unwrap().score;
        for p in &pairs {
            prop_assert_eq!(p.label, u8::from(score(&p.ah1) <= score(&p.ah2)));
        }

        let mut reversed = recs.clone();
        reversed.reverse();
        let back = make_pairs(&reversed).unwrap();
        for p in &pairs {
            let q = back.iter().find(|q| {
                (q.ah1 == p.ah1 && q.ah2 == p.ah2) || (q.ah1 == p.ah2 && q.ah2 == p.ah1)
            });
            let q = q.unwrap();
            if q.ah1 == p.ah1 {
                prop_assert_eq!(q.label, p.label);
            } else if score(&p.ah1) != score(&p.ah2) {
                prop_assert_eq!(q.label, 1 - p.label);
            }
        }
    }
}
