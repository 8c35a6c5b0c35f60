//! SQuAD 2.0 scoring: answer normalization, EM, token F1 and AvNA.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::data::squad::SquadExample;
use crate::error::{Error, Result};

fn articles() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("static regex"))
}

/// Lowercase, strip ASCII punctuation, drop the articles "a", "an", "the",
/// collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = articles().replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn normalized_tokens(s: &str) -> Vec<String> {
    normalize_answer(s)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Golds as scored: an empty list means "no answer", i.e. `[""]`.
fn effective_golds(golds: &[String]) -> Vec<&str> {
    if golds.is_empty() {
        vec![""]
    } else {
        golds.iter().map(String::as_str).collect()
    }
}

pub fn exact_match(pred: &str, golds: &[String]) -> f64 {
    let p = normalize_answer(pred);
    let hit = effective_golds(golds)
        .into_iter()
        .any(|g| normalize_answer(g) == p);
    if hit {
        1.0
    } else {
        0.0
    }
}

fn f1_single(pred: &str, gold: &str) -> f64 {
    let p = normalized_tokens(pred);
    let g = normalized_tokens(gold);
    if p.is_empty() || g.is_empty() {
        return if p == g { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-bag F1, maximised over golds.
pub fn f1_score(pred: &str, golds: &[String]) -> f64 {
    effective_golds(golds)
        .into_iter()
        .map(|g| f1_single(pred, g))
        .fold(0.0, f64::max)
}

/// 1 when the answer/no-answer decision agrees with the gold.
pub fn avna(pred_is_no_answer: bool, gold_has_answer: bool) -> f64 {
    if (!pred_is_no_answer) == gold_has_answer {
        1.0
    } else {
        0.0
    }
}

/// Percentages over evaluated examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    #[serde(rename = "EM")]
    pub em: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    #[serde(rename = "AvNA")]
    pub avna: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl EvalResult {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

impl fmt::Display for EvalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8}{:>10}", "metric", "value")?;
        writeln!(f, "{:<8}{:>10.2}", "EM", self.em)?;
        writeln!(f, "{:<8}{:>10.2}", "F1", self.f1)?;
        writeln!(f, "{:<8}{:>10.2}", "AvNA", self.avna)?;
        write!(f, "{:<8}{:>10}", "N", self.n)
    }
}

/// Scores a prediction map (id → answer text, empty for no answer) against
/// gold examples.
pub fn evaluate_predictions(preds: &HashMap<String, String>, golds: &[SquadExample]) -> Result<EvalResult> {
    let missing: Vec<String> = golds
        .iter()
        .filter(|g| !preds.contains_key(&g.id))
        .map(|g| g.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPredictions(missing));
    }
    let (mut em, mut f1, mut av) = (0.0, 0.0, 0.0);
    for g in golds {
        let pred = &preds[&g.id];
        let gold_texts = g.gold_texts();
        em += exact_match(pred, &gold_texts);
        f1 += f1_score(pred, &gold_texts);
        av += avna(pred.is_empty(), !g.is_impossible);
    }
    let n = golds.len();
    let scale = if n == 0 { 0.0 } else { 100.0 / n as f64 };
    Ok(EvalResult {
        em: em * scale,
        f1: f1 * scale,
        avna: av * scale,
        n,
    })
}
