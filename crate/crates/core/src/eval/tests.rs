use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::logistic;

fn examples(pos: &[f64], neg: &[f64]) -> Vec<ScoredExample> {
    pos.iter()
        .map(|&s| ScoredExample::new(s, 1))
        .chain(neg.iter().map(|&s| ScoredExample::new(s, 0)))
        .collect()
}

fn brute_force_auc(ex: &[ScoredExample]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for p in ex.iter().filter(|e| e.label == 1) {
        for n in ex.iter().filter(|e| e.label == 0) {
            pairs += 1.0;
            if p.score > n.score {
                wins += 1.0;
            } else if p.score == n.score {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

#[test]
fn auc_examples() {
    assert_eq!(auc(&examples(&[1.0, 1.0], &[0.0, 0.0, 0.0])).unwrap(), 1.0);
    assert_eq!(auc(&examples(&[0.3; 4], &[0.3; 5])).unwrap(), 0.5);
    assert_eq!(auc(&examples(&[0.9, 0.8], &[0.7, 0.85])).unwrap(), 0.75);
    assert_eq!(auc(&examples(&[0.0], &[1.0])).unwrap(), 0.0);
}

#[test]
fn auc_rejects_degenerate_input() {
    assert!(matches!(auc(&examples(&[0.1, 0.2], &[])), Err(Error::UndefinedMetric(_))));
    assert!(matches!(auc(&examples(&[], &[0.1])), Err(Error::UndefinedMetric(_))));
    assert!(auc(&examples(&[f64::NAN], &[0.1])).is_err());
    assert!(auc(&[ScoredExample::new(0.1, 2), ScoredExample::new(0.2, 0)]).is_err());
}

#[test]
fn auc_equals_brute_force_with_heavy_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let n = rng.random_range(2..=20);
        let mut ex: Vec<ScoredExample> = (0..n)
            .map(|_| ScoredExample::new(rng.random_range(0..4) as f64, rng.random_range(0..2)))
            .collect();
        ex[0].label = 1;
        ex[1].label = 0;
        assert_eq!(auc(&ex).unwrap().to_bits(), brute_force_auc(&ex).to_bits());
    }
}

#[test]
fn perfect_scorer_gets_full_fitb_accuracy() {
    let questions = synthetic_questions(200, 1);
    let out = fitb_accuracy(&questions, |ids| Ok(if ids.last().unwrap().starts_with("right") { 1.0 } else { 0.0 })).unwrap();
    assert_eq!(out.accuracy, 1.0);
    assert_eq!(out.ties, 0);
}

#[test]
fn constant_scorer_matches_random_guessing() {
    let questions = synthetic_questions(8000, 2);
    let out = fitb_accuracy(&questions, |_| Ok(0.0)).unwrap();
    assert_eq!(out.ties, questions.len());
    assert!(out.predictions.iter().all(|&p| p == 0));
    assert!((out.accuracy - 0.25).abs() < 0.02, "{}", out.accuracy);
}

#[test]
fn lookup_scorer_two_question_suite() {
    let q = |partial: &str, choices: [&str; 4], answer_index| FitbQuestion {
        partial_set: vec![partial.to_string(), format!("{partial}2")],
        choices: choices.map(String::from),
        answer_index,
    };
    let questions = vec![q("p", ["a", "b", "c", "d"], 1), q("r", ["e", "f", "g", "h"], 3)];
    // Question 1: b scores highest, correct. Question 2: e and g tie at the
    // top, lowest index e wins, the answer h is wrong.
    let table: HashMap<&str, f64> = [
        ("a", 0.1),
        ("b", 0.9),
        ("c", 0.5),
        ("d", 0.2),
        ("e", 0.7),
        ("f", 0.3),
        ("g", 0.7),
        ("h", 0.6),
    ]
    .into_iter()
    .collect();
    let out = fitb_accuracy(&questions, |ids| Ok(table[ids.last().unwrap().as_str()])).unwrap();
    assert_eq!(out.accuracy, 0.5);
    assert_eq!(out.predictions, vec![1, 0]);
    assert_eq!(out.ties, 1);
}

#[test]
fn fitb_rejects_empty_suite_and_propagates_scorer_errors() {
    assert!(matches!(fitb_accuracy(&[], |_| Ok(0.0)), Err(Error::UndefinedMetric(_))));
    let questions = synthetic_questions(3, 0);
    assert!(fitb_accuracy(&questions, |_| Err(Error::Data("boom".into()))).is_err());
    assert!(fitb_accuracy_from_scores(&questions, &[[0.0; 4]]).is_err());
}

#[test]
fn argmax_prefers_lowest_index() {
    assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0, 2.0]), Some(1));
    assert_eq!(argmax_lowest(&[-1.0; 4]), Some(0));
    assert_eq!(argmax_lowest(&[]), None);
}

fn synthetic_questions(n: usize, seed: u64) -> Vec<FitbQuestion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let answer_index = rng.random_range(0..4);
            let choices = std::array::from_fn(|k| {
                if k == answer_index {
                    format!("right{i}")
                } else {
                    format!("wrong{i}_{k}")
                }
            });
            FitbQuestion {
                partial_set: vec![format!("x{i}"), format!("y{i}")],
                choices,
                answer_index,
            }
        })
        .collect()
}

#[test]
fn report_round_trip_and_replacement() {
    let mut r = Report::new();
    r.set("auc", 0.75).set("seed", 7).set("auc", 0.5);
    r.extend_prefixed("config", [("lr", "0.001"), ("variant", "I")]);
    assert_eq!(r.to_string(), "auc=0.5\nseed=7\nconfig.lr=0.001\nconfig.variant=I\n");
    assert_eq!(Report::parse(&r.to_string()).unwrap(), r);
    assert_eq!(r.get("config.variant"), Some("I"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.txt");
    emit_report(&r, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), r.to_string());
    assert!(emit_report(&r, &dir.path().join("missing/report.txt")).is_err());
}

fn scores_strategy() -> impl Strategy<Value = Vec<ScoredExample>> {
    prop::collection::vec((-5.0f64..5.0, 0u8..=1), 2..=20).prop_map(|mut v| {
        v[0].1 = 1;
        v[1].1 = 0;
        v.into_iter().map(|(s, l)| ScoredExample::new(s, l)).collect()
    })
}

proptest! {
    #[test]
    fn auc_matches_brute_force(ex in scores_strategy()) {
        prop_assert_eq!(auc(&ex).unwrap().to_bits(), brute_force_auc(&ex).to_bits());
    }

    #[test]
    fn auc_invariant_under_increasing_maps(ex in scores_strategy()) {
        let base = auc(&ex).unwrap();
        let affine: Vec<_> = ex.iter().map(|e| ScoredExample::new(2.0 * e.score + 1.0, e.label)).collect();
        let squashed: Vec<_> = ex.iter().map(|e| ScoredExample::new(logistic(e.score), e.label)).collect();
        prop_assert_eq!(auc(&affine).unwrap(), base);
        prop_assert_eq!(auc(&squashed).unwrap(), base);
    }

    #[test]
    fn flipping_labels_complements_auc(ex in scores_strategy()) {
        let mut sorted: Vec<f64> = ex.iter().map(|e| e.score).collect();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
        let flipped: Vec<_> = ex.iter().map(|e| ScoredExample::new(e.score, 1 - e.label)).collect();
        prop_assert!((auc(&flipped).unwrap() - (1.0 - auc(&ex).unwrap())).abs() < 1e-15);
    }

    #[test]
    fn fitb_accuracy_ignores_question_order(seed in 0u64..1000) {
        let questions = synthetic_questions(30, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let scores: HashMap<String, f64> = questions
            .iter()
            .flat_map(|q| q.choices.iter().cloned())
            .map(|c| (c, rng.random_range(0.0..1.0)))
            .collect();
        let scorer = |ids: &[String]| Ok(scores[ids.last().unwrap()]);
        let base = fitb_accuracy(&questions, scorer).unwrap().accuracy;
        let mut shuffled = questions.clone();
        shuffled.reverse();
        shuffled.rotate_left(seed as usize % 30);
        prop_assert_eq!(fitb_accuracy(&shuffled, scorer).unwrap().accuracy, base);
    }
}
