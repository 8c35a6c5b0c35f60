//! Independent reference implementations shared by integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use bidaf::data::squad::{Answer, SquadExample};
use bidaf::rng::RngStream;

/// Token-level normalization written without regexes: lowercase, drop
/// ASCII punctuation, split on whitespace, drop article tokens.
pub fn oracle_tokens(s: &str) -> Vec<String> {
    let cleaned: String = s
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

/// Quadratic bag-of-tokens overlap.
fn oracle_f1_pair(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return (pred.is_empty() && gold.is_empty()) as u8 as f64;
    }
    let mut used = vec![false; gold.len()];
    let mut common = 0.0;
    for p in pred {
        if let Some(k) = (0..gold.len()).find(|&k| !used[k] && gold[k] == *p) {
            used[k] = true;
            common += 1.0;
        }
    }
    if common == 0.0 {
        return 0.0;
    }
    let precision = common / pred.len() as f64;
    let recall = common / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// `(EM, F1, AvNA)` in percent.
pub fn oracle_score(preds: &HashMap<String, String>, golds: &[SquadExample]) -> (f64, f64, f64) {
    let (mut em, mut f1, mut av) = (0.0, 0.0, 0.0);
    for g in golds {
        let pred = &preds[&g.id];
        let texts: Vec<String> = if g.is_impossible {
            vec![String::new()]
        } else {
            g.answers.iter().map(|a| a.text.clone()).collect()
        };
        let p = oracle_tokens(pred);
        let mut best_em: f64 = 0.0;
        let mut best_f1: f64 = 0.0;
        for t in &texts {
            let gt = oracle_tokens(t);
            if gt.join(" ") == p.join(" ") {
                best_em = 1.0;
            }
            best_f1 = best_f1.max(oracle_f1_pair(&p, &gt));
        }
        em += best_em;
        f1 += best_f1;
        if pred.is_empty() == g.is_impossible {
            av += 1.0;
        }
    }
    let n = golds.len() as f64;
    (100.0 * em / n, 100.0 * f1 / n, 100.0 * av / n)
}

const WORDS: &[&str] = &[
    "the", "The", "a", "An", "an", "cat", "Cat", "cat's", "dog,", "black", "U.S.", "river", "(river)", "naïve", "café",
    "42", "4.2", "the-end", "theory", "another", "a.", "Rhine", "rhine!", "--", "x",
];

fn phrase(rng: &mut RngStream, max_len: usize) -> String {
    let n = rng.below(max_len + 1);
    let mut words: Vec<&str> = (0..n).map(|_| WORDS[rng.below(WORDS.len())]).collect();
    if rng.bernoulli(0.1) {
        words.push(" ");
    }
    words.join(if rng.bernoulli(0.2) { "  " } else { " " })
}

/// Random prediction/gold pairs, about a quarter of them unanswerable and a
/// quarter of the predictions empty.
pub fn random_pairs(seed: u64, n: usize) -> (HashMap<String, String>, Vec<SquadExample>) {
    let mut rng = RngStream::new(seed, 0);
    let mut preds = HashMap::new();
    let mut golds = Vec::new();
    for i in 0..n {
        let id = format!("q{i}");
        let impossible = rng.bernoulli(0.25);
        let answers = if impossible {
            Vec::new()
        } else {
            (0..1 + rng.below(3))
                .map(|_| Answer {
                    text: phrase(&mut rng, 4),
                    start: 0,
                })
                .collect()
        };
        let pred = if rng.bernoulli(0.25) {
            String::new()
        } else if !answers.is_empty() && rng.bernoulli(0.3) {
            answers[0].text.to_uppercase()
        } else {
            phrase(&mut rng, 4)
        };
        preds.insert(id.clone(), pred);
        golds.push(SquadExample {
            id,
            context: String::new(),
            question: String::new(),
            answers,
            is_impossible: impossible,
        });
    }
    (preds, golds)
}

/// Exhaustive span search: sentinel (0, 0) or `1 <= i <= j`, `j - i <=
/// max_len`; the first maximum in (start, end) order wins.
pub fn decode_oracle(ps: &[f64], pe: &[f64], max_len: usize) -> (usize, usize, f64) {
    let mut best = (0, 0, ps[0] * pe[0]);
    for i in 1..ps.len() {
        for j in i..pe.len() {
            if j - i <= max_len && ps[i] * pe[j] > best.2 {
                best = (i, j, ps[i] * pe[j]);
            }
        }
    }
    best
}

pub fn distribution(rng: &mut RngStream, n: usize, sentinel_boost: f64) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
    raw[0] += sentinel_boost;
    let z: f64 = raw.iter().sum();
    raw.iter().map(|v| v / z).collect()
}
