use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::files::*;
use super::*;
use crate::error::Error;

fn two_style_table(per_style: usize) -> EmbeddingTable {
    generate_synthetic(2, per_style, 4, 0.1, 3).unwrap()
}

#[test]
fn parses_small_embedding_file() {
    let text = "#dim 4\n\
                a\tchair\tmodern\t1 2 3 4\n\
                b\ttable\t-\t0.5 -1 2e-3 0\n\
                c\t-\tbaroque\t0 0 0 1\n";
    let table = EmbeddingTable::parse(text, "t").unwrap();
    assert_eq!(table.len(), 3);
    assert_eq!(table.dim(), 4);
    assert_eq!(table.get("b").unwrap().vector, vec![0.5, -1.0, 0.002, 0.0]);
    assert_eq!(table.style("b"), None);
    assert_eq!(table.category("c"), None);
    assert_eq!(table.style("c"), Some("baroque"));
}

#[test]
fn empty_file_keeps_header_dim() {
    let table = EmbeddingTable::parse("#dim 7\n", "t").unwrap();
    assert!(table.is_empty());
    assert_eq!(table.dim(), 7);
}

#[test]
fn rejects_malformed_embedding_files() {
    let line_of = |text: &str| match EmbeddingTable::parse(text, "t") {
        Err(Error::Parse { line, .. }) => line,
        other => panic!("expected parse error, got {other:?}"),
    };
    assert_eq!(line_of("#dim 2\na\tc\ts\t1 2\nb\tc\ts\t1 NaN\n"), 3);
    assert_eq!(line_of("#dim 2\na\tc\ts\t1 2\nb\tc\ts\t1 2 3\n"), 3);
    assert_eq!(line_of("#dim 2\na\tc\ts\t1 2\na\tc\ts\t3 4\n"), 3);
    assert_eq!(line_of("#dim 2\na\tc\t1 2\n"), 2);
    assert_eq!(line_of("#dim 2\na\tc\ts\t1 x\n"), 2);
    assert_eq!(line_of("dim 2\n"), 1);
    assert_eq!(line_of(""), 1);
    assert_eq!(line_of("#dim 1\na\tc\ts\tinf\n"), 2);
}

#[test]
fn embedding_text_round_trips_exactly() {
    let table = generate_synthetic(3, 7, 5, 0.3, 11).unwrap();
    let back = EmbeddingTable::parse(&table.to_text(), "t").unwrap();
    assert_eq!(back, table);
}

#[test]
fn graph_from_table() {
    let table = two_style_table(4);
    let g = table.graph("g", &["s0_001", "s1_002"], Some(1)).unwrap();
    assert_eq!(g.states.shape(), &[2, 4]);
    assert_eq!(g.states.row(1), table.get("s1_002").unwrap().vector.as_slice());
    assert!(table.graph("g", &["s0_001", "missing"], None).is_err());
    assert!(table.graph("g", &["s0_001"], None).is_err());
}

#[test]
fn style_sampling_counts_and_balance() {
    let table = two_style_table(10);
    let samples = sample_style_ensembles(&table, 5, LengthRange::new(3, 3).unwrap(), 1).unwrap();
    assert_eq!(samples.len(), 10);
    assert_eq!(samples.iter().filter(|s| s.label == 1).count(), 5);
    assert!(samples.iter().all(|s| s.item_ids.len() == 3));
}

#[test]
fn style_sampling_labels_hold_exhaustively() {
    let table = generate_synthetic(4, 12, 6, 0.1, 5).unwrap();
    for seed in 0..20 {
        let samples = sample_style_ensembles(&table, 50, LengthRange::default(), seed).unwrap();
        for s in &samples {
            let styles: HashSet<&str> = s.item_ids.iter().map(|id| table.style(id).unwrap()).collect();
            let unique: HashSet<&String> = s.item_ids.iter().collect();
            assert_eq!(unique.len(), s.item_ids.len(), "duplicate item in {s:?}");
            assert!((3..=6).contains(&s.item_ids.len()));
            if s.label == 1 {
                assert_eq!(styles.len(), 1);
            } else {
                assert!(styles.len() >= 2);
            }
        }
    }
}

#[test]
fn style_sampling_covers_length_range() {
    let table = generate_synthetic(4, 12, 6, 0.1, 5).unwrap();
    let samples = sample_style_ensembles(&table, 400, LengthRange::default(), 2).unwrap();
    let mut counts = [0usize; 7];
    for s in &samples {
        counts[s.item_ids.len()] += 1;
    }
    for (n, &c) in counts.iter().enumerate().skip(3) {
        assert!((140..=260).contains(&c), "length {n} drawn {c} times of 800");
    }
}

#[test]
fn style_sampling_preconditions() {
    let table = two_style_table(4);
    let err = sample_style_ensembles(&table, 5, LengthRange::new(3, 6).unwrap(), 1).unwrap_err();
    assert!(err.to_string().contains("fewer than"), "{err}");
    let one = generate_synthetic(2, 8, 3, 0.1, 0).unwrap();
    let only_style0: Vec<String> = one.items()[..8].iter().map(|i| i.id.clone()).collect();
    let single = one.subset(&only_style0).unwrap();
    assert!(sample_style_ensembles(&single, 5, LengthRange::default(), 1).is_err());
    assert!(LengthRange::new(1, 3).is_err());
    assert!(LengthRange::new(4, 3).is_err());
}

fn collection_sets() -> Vec<ItemSet> {
    (0..6)
        .map(|s| ItemSet {
            id: format!("set{s}"),
            items: (0..(s % 3 + 2)).map(|i| format!("c{s}_{i}")).collect(),
        })
        .chain(std::iter::once(ItemSet {
            id: "lonely".into(),
            items: vec!["solo".into()],
        }))
        .collect()
}

#[test]
fn collection_sampling_properties() {
    let sets = collection_sets();
    let owner: HashMap<&str, &str> = sets
        .iter()
        .flat_map(|s| s.items.iter().map(move |i| (i.as_str(), s.id.as_str())))
        .collect();
    let samples = sample_collection_ensembles(&sets, None, 9).unwrap();
    assert_eq!(samples.len(), 12);
    let positives: Vec<&EnsembleSample> = samples.iter().filter(|s| s.label == 1).collect();
    let negatives: Vec<&EnsembleSample> = samples.iter().filter(|s| s.label == 0).collect();
    assert_eq!(positives.len(), negatives.len());
    for (p, set) in positives.iter().zip(&sets) {
        assert_eq!(p.item_ids, set.items);
    }
    let mut pos_lengths: Vec<usize> = positives.iter().map(|s| s.item_ids.len()).collect();
    let mut neg_lengths: Vec<usize> = negatives.iter().map(|s| s.item_ids.len()).collect();
    pos_lengths.sort_unstable();
    neg_lengths.sort_unstable();
    assert_eq!(pos_lengths, neg_lengths);
    for n in negatives {
        let sources: HashSet<&str> = n.item_ids.iter().map(|i| owner[i.as_str()]).collect();
        assert!(sources.len() >= 2);
        assert!(!n.item_ids.contains(&"solo".to_string()));
    }
    assert_eq!(sample_collection_ensembles(&sets, Some(2), 9).unwrap().len(), 4);
    assert!(sample_collection_ensembles(&sets[..1], None, 9).is_err());
}

/// `sets[i]` must be the set question `i` was made from.
fn fitb_audit(questions: &[FitbQuestion], sets: &[ItemSet], table: &EmbeddingTable) {
    assert_eq!(questions.len(), sets.len());
    for (q, set) in questions.iter().zip(sets) {
        let answer = q.answer();
        assert_eq!(q.choices.iter().filter(|c| c.as_str() == answer).count(), 1);
        let mut rebuilt = q.partial_set.clone();
        rebuilt.push(answer.to_string());
        rebuilt.sort();
        let mut original = set.items.clone();
        original.sort();
        assert_eq!(rebuilt, original);
        for (k, c) in q.choices.iter().enumerate() {
            assert_eq!(table.category(c), table.category(answer));
            if k != q.answer_index {
                assert_ne!(table.style(c), table.style(answer));
                assert!(!set.items.contains(c));
            }
        }
    }
}

#[test]
fn fitb_questions_obey_distractor_rules() {
    let table = generate_synthetic(4, 50, 8, 0.05, 2).unwrap();
    let samples = sample_style_ensembles(&table, 300, LengthRange::default(), 4).unwrap();
    let sets = positive_sets(&samples);
    let questions = make_fitb_questions(&sets, &table, 6).unwrap();
    assert_eq!(questions.len(), sets.len());
    fitb_audit(&questions, &sets, &table);

    let mut positions = [0usize; 4];
    for q in &questions {
        positions[q.answer_index] += 1;
    }
    assert!(positions.iter().all(|&c| (45..=105).contains(&c)), "{positions:?}");
}

#[test]
fn fitb_from_a_three_item_set() {
    let table = generate_synthetic(3, 20, 4, 0.1, 1).unwrap();
    let sets = vec![ItemSet {
        id: "x".into(),
        items: vec!["s0_000".into(), "s0_001".into(), "s0_002".into()],
    }];
    let q = make_fitb_questions(&sets, &table, 0).unwrap();
    assert_eq!(q.len(), 1);
    assert_eq!(q[0].partial_set.len(), 2);
    fitb_audit(&q, &sets, &table);
}

#[test]
fn fitb_skips_unusable_sets() {
    let table = generate_synthetic(2, 5, 4, 0.1, 1).unwrap();
    let sets = vec![
        ItemSet {
            id: "short".into(),
            items: vec!["s0_000".into(), "s0_001".into()],
        },
        // Only one other-style item per category exists in this table.
        ItemSet {
            id: "sparse".into(),
            items: vec!["s0_000".into(), "s0_001".into(), "s0_002".into()],
        },
    ];
    assert!(make_fitb_questions(&sets, &table, 0).unwrap().is_empty());
}

#[test]
fn zero_noise_items_equal_their_anchor() {
    let table = generate_synthetic(3, 6, 5, 0.0, 4).unwrap();
    let anchors = style_anchors(3, 5, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    for it in table.items() {
        let s: usize = it.style.as_deref().unwrap()["style".len()..].parse().unwrap();
        assert_eq!(it.vector, anchors[s]);
    }
}

#[test]
fn anchors_are_orthonormal() {
    let anchors = style_anchors(4, 8, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    for (i, a) in anchors.iter().enumerate() {
        for (j, b) in anchors.iter().enumerate() {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((dot - expected).abs() < 1e-12, "{i},{j}: {dot}");
        }
    }
    assert!(style_anchors(4, 2, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    assert!(generate_synthetic(4, 10, 2, 0.1, 0).is_err());
}

#[test]
fn low_noise_styles_are_nearest_anchor_separable() {
    let seed = 7;
    let table = generate_synthetic(4, 50, 16, 0.05, seed).unwrap();
    let anchors = style_anchors(4, 16, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    for it in table.items() {
        let nearest = (0..4)
            .min_by(|&a, &b| {
                let d = |k: usize| it.vector.iter().zip(&anchors[k]).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
                d(a).total_cmp(&d(b))
            })
            .unwrap();
        assert_eq!(it.style.as_deref(), Some(format!("style{nearest}").as_str()));
    }
}

#[test]
fn categories_span_every_style() {
    let table = generate_synthetic(4, 50, 8, 0.05, 0).unwrap();
    for style in 0..4 {
        let cats: HashSet<&str> = table
            .items()
            .iter()
            .filter(|i| i.style.as_deref() == Some(format!("style{style}").as_str()))
            .map(|i| i.category.as_deref().unwrap())
            .collect();
        assert_eq!(cats.len(), CATEGORIES.len());
    }
}

#[test]
fn style_split_sizes_and_hygiene() {
    assert_eq!(SplitRatios::STYLE.sizes(50), (34, 6, 10));
    assert_eq!(SplitRatios::COLLECTION.sizes(100), (75, 10, 15));
    let table = generate_synthetic(4, 50, 8, 0.05, 0).unwrap();
    let split = split_style_items(&table, SplitRatios::STYLE, 1).unwrap();
    assert_eq!((split.train.len(), split.val.len(), split.test.len()), (136, 24, 40));
    check_disjoint("item", &split.parts()).unwrap();
    let sub = table.subset(&split.test).unwrap();
    assert_eq!(style_groups(&sub).values().map(Vec::len).collect::<Vec<_>>(), vec![10; 4]);
}

#[test]
fn set_split_hygiene() {
    let sets: Vec<ItemSet> = (0..40)
        .map(|i| ItemSet {
            id: format!("set{i}"),
            items: vec![format!("a{i}"), format!("b{i}")],
        })
        .collect();
    let split = split_sets(&sets, SplitRatios::COLLECTION, 3).unwrap();
    assert_eq!((split.train.len(), split.val.len(), split.test.len()), (30, 4, 6));
    let all: HashSet<&str> = split.parts().iter().flat_map(|(_, p)| p.iter().map(|s| s.id.as_str())).collect();
    assert_eq!(all.len(), 40);
}

#[test]
fn overlap_is_detected() {
    let a = vec!["x".to_string(), "y".to_string()];
    let b = vec!["z".to_string(), "y".to_string()];
    let err = check_disjoint("item", &[("train", &a[..]), ("test", &b[..])]).unwrap_err();
    assert!(err.to_string().contains("item y appears in both train and test"));

    let sample = |ids: &[&str]| EnsembleSample {
        item_ids: ids.iter().map(|s| s.to_string()).collect(),
        label: 1,
        provenance: Provenance::Loaded,
    };
    let train = [sample(&["a", "b"])];
    let test = [sample(&["c", "b"])];
    assert!(check_corpora_disjoint(&[("train", &train[..]), ("test", &test[..])]).is_err());
    let test = [sample(&["c", "d"])];
    assert!(check_corpora_disjoint(&[("train", &train[..]), ("test", &test[..])]).is_ok());
}

#[test]
fn corpus_parsing_drops_singletons_and_rejects_bad_labels() {
    let parsed = parse_corpus("1\ta,b,c\n0\tq\n0\td,e\n", "c").unwrap();
    assert_eq!(parsed.len(), 2);
    assert_eq!(parsed[1].label, 0);
    assert!(parse_corpus("2\ta,b\n", "c").is_err());
    assert!(parse_corpus("1\ta,,b\n", "c").is_err());
    assert!(parse_fitb("a,b\tc,d,e\t0\n", "f").is_err());
    assert!(parse_fitb("a,b\tc,d,e,f\t4\n", "f").is_err());
    assert!(parse_manifest("s\ta,b\ns\tc,d\n", "m").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sampling_is_seed_deterministic(seed in 0u64..1000) {
        let table = generate_synthetic(3, 10, 4, 0.2, seed).unwrap();
        let a = sample_style_ensembles(&table, 20, LengthRange::default(), seed).unwrap();
        let b = sample_style_ensembles(&table, 20, LengthRange::default(), seed).unwrap();
        prop_assert_eq!(&a, &b);
        let sets = positive_sets(&a);
        prop_assert_eq!(
            make_fitb_questions(&sets, &table, seed).unwrap(),
            make_fitb_questions(&sets, &table, seed).unwrap()
        );
        prop_assert_eq!(
            sample_collection_ensembles(&sets, None, seed).unwrap(),
            sample_collection_ensembles(&sets, None, seed).unwrap()
        );
    }

    #[test]
    fn file_formats_round_trip(seed in 0u64..1000) {
        let table = generate_synthetic(3, 10, 4, 0.2, seed).unwrap();
        let samples = sample_style_ensembles(&table, 10, LengthRange::default(), seed).unwrap();
        let back = parse_corpus(&corpus_to_text(&samples), "c").unwrap();
        prop_assert_eq!(back.len(), samples.len());
        for (x, y) in back.iter().zip(&samples) {
            prop_assert_eq!(&x.item_ids, &y.item_ids);
            prop_assert_eq!(x.label, y.label);
        }
        let sets = positive_sets(&samples);
        prop_assert_eq!(parse_manifest(&manifest_to_text(&sets), "m").unwrap(), sets.clone());
        let questions = make_fitb_questions(&sets, &table, seed).unwrap();
        prop_assert_eq!(parse_fitb(&fitb_to_text(&questions), "f").unwrap(), questions);
    }
}
