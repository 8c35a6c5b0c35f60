//! Synthetic extractive-QA corpora with controllable difficulty.
//!
//! All tasks build contexts from random pseudo-words. 20% of the examples are
//! unanswerable. Words that carry character-level information ("tagged"
//! words) never receive a pretrained vector.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::squad::{Answer, SquadExample};
use crate::error::{Error, Result};
use crate::rng::{streams, RngStream};

pub const UNANSWERABLE_FRACTION: f64 = 0.2;

/// Number of tagged words placed in a char-sensitive context.
const TAGGED_PER_CONTEXT: usize = 3;
const SUFFIX_POOL: usize = 8;
/// Multi-hop chains pass through one of this many shared bridge words.
const BRIDGE_POOL: usize = 2;
const STEM_LETTERS: &[u8] = b"bcdfghjklmnp";
const SUFFIX_LETTERS: &[u8] = b"qrstvwxz";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// "what follows K ?": the answer is the word after K.
    Copy,
    /// The answer is the tagged word whose suffix matches the question's.
    CharSensitive,
    /// Two chained `key value .` facts: the answer is the value of the value.
    MultiHop,
    /// Multi-hop where the chain key is only identifiable by its suffix.
    CharMultiHop,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Copy, Task::CharSensitive, Task::MultiHop, Task::CharMultiHop];

    pub fn name(self) -> &'static str {
        match self {
            Task::Copy => "copy",
            Task::CharSensitive => "char-sensitive",
            Task::MultiHop => "multi-hop",
            Task::CharMultiHop => "char-multi-hop",
        }
    }

    fn min_context(self) -> usize {
        match self {
            Task::Copy => 2,
            Task::CharSensitive => TAGGED_PER_CONTEXT + 1,
            // two chains of two facts, three tokens each
            Task::MultiHop | Task::CharMultiHop => 12,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid("task", format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_examples: usize,
    /// Number of filler words that have vectors.
    pub vocab_size: usize,
    /// Context length in tokens.
    pub context_len: usize,
    pub task: Task,
    /// Width of the emitted word vectors.
    #[serde(default = "default_vector_dim")]
    pub vector_dim: usize,
}

fn default_vector_dim() -> usize {
    50
}

impl SynthSpec {
    pub fn new(task: Task, n_examples: usize) -> Self {
        SynthSpec {
            n_examples,
            vocab_size: 200,
            context_len: 12,
            task,
            vector_dim: default_vector_dim(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub examples: Vec<SquadExample>,
    /// Vectors for filler and template words; tagged words are absent.
    pub vectors: Vec<(String, Vec<f64>)>,
    /// Every tagged word that appears in the corpus.
    pub tagged: HashSet<String>,
}

const TEMPLATE_WORDS: &[&str] = &["what", "follows", "?", "which", "word", "ends", "like", "where", "does", "lead", "."];

struct Generator {
    rng: RngStream,
    fillers: Vec<String>,
    /// Reserved fillers used only as chain midpoints.
    bridges: Vec<String>,
    suffixes: Vec<String>,
    used_tagged: HashSet<String>,
    taken: HashSet<String>,
}

impl Generator {
    fn new(spec: &SynthSpec, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, streams::SYNTHETIC);
        let mut taken: HashSet<String> = TEMPLATE_WORDS.iter().map(|s| s.to_string()).collect();
        let mut fillers = Vec::with_capacity(spec.vocab_size);
        while fillers.len() < spec.vocab_size {
            let len = 3 + rng.below(5);
            let w: String = (0..len).map(|_| (b'a' + rng.below(26) as u8) as char).collect();
            if taken.insert(w.clone()) {
                fillers.push(w);
            }
        }
        let bridges = if matches!(spec.task, Task::MultiHop | Task::CharMultiHop) {
            fillers.split_off(fillers.len() - BRIDGE_POOL)
        } else {
            Vec::new()
        };
        let mut suffixes = Vec::with_capacity(SUFFIX_POOL);
        while suffixes.len() < SUFFIX_POOL {
            let s: String = (0..2).map(|_| SUFFIX_LETTERS[rng.below(SUFFIX_LETTERS.len())] as char).collect();
            if !suffixes.contains(&s) {
                suffixes.push(s);
            }
        }
        Generator {
            rng,
            fillers,
            bridges,
            suffixes,
            used_tagged: HashSet::new(),
            taken,
        }
    }

    /// Distinct fillers.
    fn fillers(&mut self, k: usize) -> Vec<String> {
        let mut idx: Vec<usize> = (0..self.fillers.len()).collect();
        self.rng.shuffle(&mut idx);
        idx[..k].iter().map(|&i| self.fillers[i].clone()).collect()
    }

    /// A fresh tagged word (stem plus suffix), never a filler.
    fn tagged(&mut self, suffix: usize, avoid: &HashSet<String>) -> String {
        loop {
            let stem: String = (0..3).map(|_| STEM_LETTERS[self.rng.below(STEM_LETTERS.len())] as char).collect();
            let w = format!("{stem}{}", self.suffixes[suffix]);
            if !self.taken.contains(&w) && !avoid.contains(&w) {
                self.used_tagged.insert(w.clone());
                return w;
            }
        }
    }

    /// `k` distinct suffix indices.
    fn suffix_choice(&mut self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..SUFFIX_POOL).collect();
        self.rng.shuffle(&mut idx);
        idx.truncate(k);
        idx
    }
}

/// Joins tokens with single spaces and returns the char offset of `target`.
fn assemble(tokens: &[String], target: Option<usize>) -> (String, Option<usize>) {
    let mut text = String::new();
    let mut offset = None;
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            text.push(' ');
        }
        if Some(i) == target {
            offset = Some(text.chars().count());
        }
        text.push_str(t);
    }
    (text, offset)
}

struct Draft {
    context: Vec<String>,
    question: Vec<String>,
    answer: Option<usize>,
}

fn copy_example(g: &mut Generator, len: usize, answerable: bool) -> Draft {
    let mut words = g.fillers(len + 1);
    let outside = words.pop().expect("len + 1 words");
    let (key, answer) = if answerable {
        let p = g.rng.below(len - 1);
        (words[p].clone(), Some(p + 1))
    } else {
        (outside, None)
    };
    Draft {
        question: vec!["what".into(), "follows".into(), key, "?".into()],
        context: words,
        answer,
    }
}

fn char_sensitive_example(g: &mut Generator, len: usize, answerable: bool) -> Draft {
    let mut context = g.fillers(len - TAGGED_PER_CONTEXT);
    let suffixes = g.suffix_choice(TAGGED_PER_CONTEXT + 1);
    let mut avoid = HashSet::new();
    let mut slots = Vec::new();
    for &s in &suffixes[..TAGGED_PER_CONTEXT] {
        let w = g.tagged(s, &avoid);
        avoid.insert(w.clone());
        let pos = g.rng.below(context.len() + 1);
        context.insert(pos, w);
        for p in slots.iter_mut() {
            if *p >= pos {
                *p += 1;
            }
        }
        slots.push(pos);
    }
    let pick = g.rng.below(TAGGED_PER_CONTEXT);
    let q_suffix = if answerable { suffixes[pick] } else { suffixes[TAGGED_PER_CONTEXT] };
    let q = g.tagged(q_suffix, &avoid);
    Draft {
        question: vec!["which".into(), "word".into(), "ends".into(), "like".into(), q, "?".into()],
        context,
        answer: answerable.then(|| slots[pick]),
    }
}

fn multi_hop_example(g: &mut Generator, len: usize, answerable: bool, tagged_keys: bool) -> Draft {
    let n_facts = len / 3;
    // chains a->b->c and d->e->f, then single distractor facts
    let mut words = g.fillers(2 * n_facts);
    let outside = words.pop().expect("spare word");
    let mut pair: Vec<usize> = (0..BRIDGE_POOL).collect();
    g.rng.shuffle(&mut pair);
    words.insert(1, g.bridges[pair[0]].clone());
    words.insert(4, g.bridges[pair[1]].clone());
    let mut avoid = HashSet::new();
    let mut question_key = outside;
    if tagged_keys {
        let sfx = g.suffix_choice(3);
        let a = g.tagged(sfx[0], &avoid);
        avoid.insert(a.clone());
        let d = g.tagged(sfx[1], &avoid);
        avoid.insert(d.clone());
        words[0] = a;
        words[3] = d;
        question_key = g.tagged(if answerable { sfx[0] } else { sfx[2] }, &avoid);
    } else if answerable {
        question_key = words[0].clone();
    }
    let (a, b, c) = (words[0].clone(), words[1].clone(), words[2].clone());
    let (d, e, f) = (words[3].clone(), words[4].clone(), words[5].clone());
    let mut facts: Vec<[String; 2]> = vec![[a, b.clone()], [b, c.clone()], [d, e.clone()], [e, f]];
    let mut rest = words[6..].iter();
    while facts.len() < n_facts {
        let k = rest.next().expect("enough fillers").clone();
        let v = rest.next().expect("enough fillers").clone();
        facts.push([k, v]);
    }
    g.rng.shuffle(&mut facts);
    let mut context = Vec::with_capacity(len);
    let mut answer = None;
    for [k, v] in facts {
        if answerable && v == c {
            answer = Some(context.len() + 1);
        }
        context.extend([k, v, ".".to_string()]);
    }
    Draft {
        question: vec!["where".into(), "does".into(), question_key, "lead".into(), "?".into()],
        context,
        answer: if answerable { answer } else { None },
    }
}

/// Builds a corpus that is fully determined by `(spec, seed)`.
pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<SyntheticCorpus> {
    if spec.vocab_size < 10 {
        return Err(Error::InfeasibleCorpus(format!(
            "vocab_size {} is below 10",
            spec.vocab_size
        )));
    }
    if spec.context_len < 5.max(spec.task.min_context()) {
        return Err(Error::InfeasibleCorpus(format!(
            "context_len {} is too short for the {} task (needs {})",
            spec.context_len,
            spec.task,
            5.max(spec.task.min_context())
        )));
    }
    if spec.vector_dim == 0 {
        return Err(Error::InfeasibleCorpus("vector_dim must be positive".into()));
    }
    let bridges = match spec.task {
        Task::MultiHop | Task::CharMultiHop => BRIDGE_POOL,
        _ => 0,
    };
    let distinct_needed = spec.context_len + 2 + bridges;
    if spec.vocab_size < distinct_needed {
        return Err(Error::InfeasibleCorpus(format!(
            "vocab_size {} cannot fill a context of {} distinct words",
            spec.vocab_size, spec.context_len
        )));
    }

    let mut g = Generator::new(spec, seed);
    let n = spec.n_examples;
    let n_unanswerable = (UNANSWERABLE_FRACTION * n as f64).round() as usize;
    let mut unanswerable = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    g.rng.shuffle(&mut order);
    for &i in &order[..n_unanswerable] {
        unanswerable[i] = true;
    }

    let mut examples = Vec::with_capacity(n);
    for (i, &impossible) in unanswerable.iter().enumerate() {
        let len = spec.context_len;
        let draft = match spec.task {
            Task::Copy => copy_example(&mut g, len, !impossible),
            Task::CharSensitive => char_sensitive_example(&mut g, len, !impossible),
            Task::MultiHop => multi_hop_example(&mut g, len, !impossible, false),
            Task::CharMultiHop => multi_hop_example(&mut g, len, !impossible, true),
        };
        let (context, start) = assemble(&draft.context, draft.answer);
        let (question, _) = assemble(&draft.question, None);
        let answers = match (draft.answer, start) {
            (Some(p), Some(start)) => vec![Answer {
                text: draft.context[p].clone(),
                start,
            }],
            _ => Vec::new(),
        };
        examples.push(SquadExample {
            id: format!("{}-{seed}-{i}", spec.task),
            context,
            question,
            answers,
            is_impossible: impossible,
        });
    }

    let mut vrng = RngStream::new(seed, streams::SYNTHETIC ^ 0x5eed);
    let scale = 1.0 / (spec.vector_dim as f64).sqrt() * 2.0;
    let vectors = TEMPLATE_WORDS
        .iter()
        .map(|s| s.to_string())
        .chain(g.fillers.iter().cloned())
        .chain(g.bridges.iter().cloned())
        .map(|w| {
            let v = (0..spec.vector_dim).map(|_| vrng.normal() * scale).collect();
            (w, v)
        })
        .collect();
    Ok(SyntheticCorpus {
        examples,
        vectors,
        tagged: g.used_tagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tokenize::{align_span, detokenize, tokenize, Alignment};

    fn corpus(task: Task, n: usize, seed: u64) -> SyntheticCorpus {
        generate_synthetic_corpus(&SynthSpec::new(task, n), seed).unwrap()
    }

    #[test]
    fn regeneration_is_identical() {
        for task in Task::ALL {
            let a = corpus(task, 50, 9);
            let b = corpus(task, 50, 9);
            assert_eq!(a.examples, b.examples);
            assert_eq!(a.vectors, b.vectors);
        }
        assert_ne!(corpus(Task::Copy, 20, 1).examples, corpus(Task::Copy, 20, 2).examples);
    }

    #[test]
    fn gold_spans_detokenize_to_answer_text() {
        for task in Task::ALL {
            let c = corpus(task, 1000, 3);
            let mut impossible = 0;
            for ex in &c.examples {
                let toks = tokenize(&ex.context);
                match align_span(ex, &toks) {
                    Alignment::Span(s, e) => {
                        assert_eq!(detokenize(&ex.context, &toks, s, e), ex.answers[0].text)
                    }
                    Alignment::NoAnswer => impossible += 1,
                    Alignment::Unalignable => panic!("{task}: unalignable {ex:?}"),
                }
            }
            assert_eq!(impossible, 200, "{task}");
        }
    }

    #[test]
    fn char_sensitive_answers_have_no_vector() {
        for task in [Task::CharSensitive, Task::CharMultiHop] {
            let c = corpus(task, 300, 5);
            let with_vectors: HashSet<&str> = c.vectors.iter().map(|(w, _)| w.as_str()).collect();
            for ex in c.examples.iter().filter(|e| !e.is_impossible) {
                if task == Task::CharSensitive {
                    assert!(!with_vectors.contains(ex.answers[0].text.as_str()));
                }
                for t in tokenize(&ex.question) {
                    if c.tagged.contains(&t.text) {
                        assert!(!with_vectors.contains(t.text.as_str()));
                    }
                }
            }
            assert!(c.tagged.iter().all(|t| !with_vectors.contains(t.as_str())));
        }
    }

    #[test]
    fn char_sensitive_answer_shares_the_question_suffix() {
        let c = corpus(Task::CharSensitive, 200, 8);
        for ex in c.examples.iter().filter(|e| !e.is_impossible) {
            let q = tokenize(&ex.question)[4].text.clone();
            let a = &ex.answers[0].text;
            assert_eq!(&q[q.len() - 2..], &a[a.len() - 2..]);
            assert_ne!(&q, a);
        }
    }

    #[test]
    fn multi_hop_answer_is_two_links_away() {
        let c = corpus(Task::MultiHop, 200, 4);
        for ex in c.examples.iter().filter(|e| !e.is_impossible) {
            let toks: Vec<String> = tokenize(&ex.context).into_iter().map(|t| t.text).collect();
            let key = tokenize(&ex.question)[2].text.clone();
            let follow = |k: &str| {
                toks.chunks(3)
                    .find(|f| f[0] == k)
                    .map(|f| f[1].clone())
                    .unwrap()
            };
            assert_eq!(follow(&follow(&key)), ex.answers[0].text);
        }
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let mut spec = SynthSpec::new(Task::MultiHop, 10);
        spec.context_len = 6;
        assert!(matches!(
            generate_synthetic_corpus(&spec, 1),
            Err(Error::InfeasibleCorpus(_))
        ));
        spec = SynthSpec::new(Task::Copy, 10);
        spec.vocab_size = 5;
        assert!(generate_synthetic_corpus(&spec, 1).is_err());
        assert_eq!("Char-Sensitive".parse::<Task>().unwrap(), Task::CharSensitive);
    }
}
