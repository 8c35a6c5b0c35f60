mod support;

use std::collections::HashMap;

use bidaf::data::squad::{Answer, SquadExample};
use bidaf::metrics::{evaluate_predictions, exact_match, f1_score, normalize_answer};
use proptest::prelude::*;
use support::{oracle_score, oracle_tokens, random_pairs};

#[test]
fn scorer_matches_brute_force_reference() {
    for seed in 0..10 {
        let (preds, golds) = random_pairs(seed, 200);
        let got = evaluate_predictions(&preds, &golds).unwrap();
        let (em, f1, avna) = oracle_score(&preds, &golds);
        assert_eq!(got.n, 200);
        assert!((got.em - em).abs() < 1e-12, "seed {seed}: EM {} vs {em}", got.em);
        assert!((got.f1 - f1).abs() < 1e-12, "seed {seed}: F1 {} vs {f1}", got.f1);
        assert!((got.avna - avna).abs() < 1e-12, "seed {seed}: AvNA {} vs {avna}", got.avna);
    }
}

#[test]
fn partial_overlap_worked_example() {
    // precision 1, recall 1/2
    let golds = vec!["black cat".to_string()];
    assert_eq!(f1_score("cat", &golds), 2.0 / 3.0);
    assert_eq!(exact_match("cat", &golds), 0.0);
    assert_eq!(f1_score("The black cat.", &golds), 1.0);
}

#[test]
fn abstention_scoring() {
    let ex = |id: &str, answer: Option<&str>| SquadExample {
        id: id.into(),
        context: String::new(),
        question: String::new(),
        answers: answer
            .map(|t| vec![Answer { text: t.into(), start: 0 }])
            .unwrap_or_default(),
        is_impossible: answer.is_none(),
    };
    let golds = vec![ex("a", None), ex("b", None), ex("c", Some("x")), ex("d", Some("y z"))];
    let preds: HashMap<String, String> = [("a", ""), ("b", "x"), ("c", ""), ("d", "z")]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let r = evaluate_predictions(&preds, &golds).unwrap();
    assert_eq!(r.em, 25.0);
    assert!((r.f1 - 100.0 * (1.0 + 2.0 / 3.0) / 4.0).abs() < 1e-12);
    assert_eq!(r.avna, 50.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalization_agrees_with_token_reference(s in "[ a-zA-Z.,!'()-]{0,24}") {
        prop_assert_eq!(normalize_answer(&s), oracle_tokens(&s).join(" "));
    }

    #[test]
    fn normalization_is_idempotent(s in "\\PC{0,24}") {
        let once = normalize_answer(&s);
        prop_assert_eq!(normalize_answer(&once), once);
    }

    #[test]
    fn per_example_scores_are_bounded(pred in "[ a-z.]{0,16}", gold in prop::collection::vec("[ a-z.]{0,16}", 1..4)) {
        let em = exact_match(&pred, &gold);
        let f1 = f1_score(&pred, &gold);
        prop_assert!(em == 0.0 || em == 1.0);
        prop_assert!((0.0..=1.0).contains(&f1));
        prop_assert!(em <= f1);
    }

    #[test]
    fn aggregate_metrics_are_percentages(seed in 0u64..1000, n in 1usize..40) {
        let (preds, golds) = random_pairs(seed, n);
        let r = evaluate_predictions(&preds, &golds).unwrap();
        for v in [r.em, r.f1, r.avna] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
        prop_assert!(r.em <= r.f1 + 1e-9);
    }
}
