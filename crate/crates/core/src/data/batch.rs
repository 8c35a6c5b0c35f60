use crate::data::squad::SquadExample;
use crate::data::tokenize::{align_span, tokenize, Alignment, Token};
use crate::data::vocab::{CharVocab, Vocabulary, CHAR_PAD, MAX_WORD_LEN, NULL, PAD};
use crate::rng::RngStream;

/// An example after tokenization and id lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    /// Index into the source example list.
    pub source: usize,
    pub context_tokens: Vec<Token>,
    pub context_words: Vec<usize>,
    pub context_chars: Vec<[usize; MAX_WORD_LEN]>,
    pub question_words: Vec<usize>,
    pub question_chars: Vec<[usize; MAX_WORD_LEN]>,
    /// Token span of the first gold answer, `None` for no answer.
    pub gold: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EncodeStats {
    pub kept: usize,
    pub unalignable: usize,
    pub empty: usize,
}

impl EncodeStats {
    pub fn dropped(&self) -> usize {
        self.unalignable + self.empty
    }
}

/// Tokenizes and aligns; examples whose answer cannot be aligned or whose
/// context or question is empty are dropped and counted.
pub fn encode_examples(examples: &[SquadExample], vocab: &Vocabulary, chars: &CharVocab) -> (Vec<EncodedExample>, EncodeStats) {
    let mut out = Vec::with_capacity(examples.len());
    let mut stats = EncodeStats::default();
    for (source, ex) in examples.iter().enumerate() {
        let ctx = tokenize(&ex.context);
        let qst = tokenize(&ex.question);
        if ctx.is_empty() || qst.is_empty() {
            stats.empty += 1;
            continue;
        }
        let gold = match align_span(ex, &ctx) {
            Alignment::NoAnswer => None,
            Alignment::Span(s, e) => Some((s, e)),
            Alignment::Unalignable => {
                stats.unalignable += 1;
                continue;
            }
        };
        out.push(EncodedExample {
            source,
            context_words: ctx.iter().map(|t| vocab.id(&t.text)).collect(),
            context_chars: ctx.iter().map(|t| chars.encode(&t.text)).collect(),
            question_words: qst.iter().map(|t| vocab.id(&t.text)).collect(),
            question_chars: qst.iter().map(|t| chars.encode(&t.text)).collect(),
            context_tokens: ctx,
            gold,
        });
    }
    stats.kept = out.len();
    (out, stats)
}

/// Padded batch. Context position 0 is the NULL sentinel in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    /// Context width including the sentinel.
    pub n: usize,
    pub m: usize,
    pub context_words: Vec<usize>,
    pub question_words: Vec<usize>,
    pub context_chars: Vec<usize>,
    pub question_chars: Vec<usize>,
    pub context_mask: Vec<bool>,
    pub question_mask: Vec<bool>,
    pub starts: Vec<usize>,
    pub ends: Vec<usize>,
    /// Indices into the encoded example list.
    pub examples: Vec<usize>,
}

impl Batch {
    pub fn build(encoded: &[EncodedExample], members: &[usize]) -> Batch {
        let size = members.len();
        let n = 1 + members.iter().map(|&i| encoded[i].context_words.len()).max().unwrap_or(0);
        let m = members.iter().map(|&i| encoded[i].question_words.len()).max().unwrap_or(0);
        let mut b = Batch {
            size,
            n,
            m,
            context_words: vec![PAD; size * n],
            question_words: vec![PAD; size * m],
            context_chars: vec![CHAR_PAD; size * n * MAX_WORD_LEN],
            question_chars: vec![CHAR_PAD; size * m * MAX_WORD_LEN],
            context_mask: vec![false; size * n],
            question_mask: vec![false; size * m],
            starts: vec![0; size],
            ends: vec![0; size],
            examples: members.to_vec(),
        };
        for (r, &i) in members.iter().enumerate() {
            let ex = &encoded[i];
            b.context_words[r * n] = NULL;
            for (t, &w) in ex.context_words.iter().enumerate() {
                b.context_words[r * n + t + 1] = w;
            }
            for (t, c) in ex.context_chars.iter().enumerate() {
                let at = (r * n + t + 1) * MAX_WORD_LEN;
                b.context_chars[at..at + MAX_WORD_LEN].copy_from_slice(c);
            }
            for (t, &w) in ex.question_words.iter().enumerate() {
                b.question_words[r * m + t] = w;
            }
            for (t, c) in ex.question_chars.iter().enumerate() {
                let at = (r * m + t) * MAX_WORD_LEN;
                b.question_chars[at..at + MAX_WORD_LEN].copy_from_slice(c);
            }
            if let Some((s, e)) = ex.gold {
                b.starts[r] = s + 1;
                b.ends[r] = e + 1;
            }
        }
        for (mask, ids) in [
            (&mut b.context_mask, &b.context_words),
            (&mut b.question_mask, &b.question_words),
        ] {
            for (m, &id) in mask.iter_mut().zip(ids) {
                *m = id != PAD;
            }
        }
        b
    }

    /// Unpadded context lengths including the sentinel.
    pub fn context_lengths(&self) -> Vec<usize> {
        lengths(&self.context_mask, self.n)
    }

    pub fn question_lengths(&self) -> Vec<usize> {
        lengths(&self.question_mask, self.m)
    }
}

fn lengths(mask: &[bool], width: usize) -> Vec<usize> {
    mask.chunks(width)
        .map(|row| row.iter().filter(|&&m| m).count())
        .collect()
}

/// Splits into batches of at most `batch_size`. With an rng the example order
/// is shuffled (training); without, input order is kept (evaluation).
pub fn make_batches(encoded: &[EncodedExample], batch_size: usize, rng: Option<&mut RngStream>) -> Vec<Batch> {
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    if let Some(rng) = rng {
        rng.shuffle(&mut order);
    }
    order
        .chunks(batch_size.max(1))
        .map(|members| Batch::build(encoded, members))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::squad::Answer;
    use crate::data::synth::{generate_synthetic_corpus, SynthSpec, Task};
    use proptest::prelude::*;

    fn example(context: &str, answer: Option<(&str, usize)>) -> SquadExample {
        SquadExample {
            id: context.into(),
            context: context.into(),
            question: "what ?".into(),
            answers: answer
                .map(|(text, start)| Answer {
                    text: text.into(),
                    start,
                })
                .into_iter()
                .collect(),
            is_impossible: answer.is_none(),
        }
    }

    fn encode(examples: &[SquadExample]) -> Vec<EncodedExample> {
        let words = examples.iter().flat_map(|e| tokenize(&e.context)).map(|t| t.text);
        let vocab = Vocabulary::build(words.collect::<Vec<_>>());
        let chars = CharVocab::build(vocab.words().iter().map(String::as_str));
        encode_examples(examples, &vocab, &chars).0
    }

    #[test]
    fn sentinel_widens_context_by_one() {
        let enc = encode(&[example("a b c", Some(("b", 2)))]);
        let b = &make_batches(&enc, 8, None)[0];
        assert_eq!(b.n, 4);
        assert_eq!(b.context_words[0], NULL);
        assert_eq!((b.starts[0], b.ends[0]), (2, 2));
    }

    #[test]
    fn gold_is_shifted_past_the_sentinel() {
        let enc = encode(&[example("x y z w", Some(("y z", 2))), example("p q", None)]);
        assert_eq!(enc[0].gold, Some((1, 2)));
        let b = &make_batches(&enc, 8, None)[0];
        assert_eq!((b.starts[0], b.ends[0]), (2, 3));
        assert_eq!((b.starts[1], b.ends[1]), (0, 0));
        assert_eq!(b.context_lengths(), vec![5, 3]);
    }

    #[test]
    fn unalignable_examples_are_counted() {
        let examples = [example("abc def", Some(("bc", 1))), example("a b", Some(("a", 0)))];
        let vocab = Vocabulary::build(["a"]);
        let chars = CharVocab::build(["a"]);
        let (enc, stats) = encode_examples(&examples, &vocab, &chars);
        assert_eq!(enc.len(), 1);
        assert_eq!(stats.unalignable, 1);
        assert_eq!(enc[0].source, 1);
    }

    #[test]
    fn eval_batches_keep_order_and_train_batches_shuffle() {
        let c = generate_synthetic_corpus(&SynthSpec::new(Task::Copy, 40), 1).unwrap();
        let enc = encode(&c.examples);
        let eval: Vec<usize> = make_batches(&enc, 16, None).iter().flat_map(|b| b.examples.clone()).collect();
        assert_eq!(eval, (0..40).collect::<Vec<_>>());
        let mut rng = RngStream::new(1, 1);
        let train: Vec<usize> = make_batches(&enc, 16, Some(&mut rng)).iter().flat_map(|b| b.examples.clone()).collect();
        assert_ne!(train, eval);
        let mut sorted = train.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, eval);
    }

    proptest! {
        #[test]
        fn batch_layout_invariants(seed in 0u64..500, bs in 1usize..9) {
            let mut spec = SynthSpec::new(Task::CharSensitive, 20);
            spec.context_len = 5 + (seed as usize % 7);
            let c = generate_synthetic_corpus(&spec, seed).unwrap();
            let enc = encode(&c.examples);
            let mut rng = RngStream::new(seed, 1);
            for b in make_batches(&enc, bs, Some(&mut rng)) {
                let longest = b.examples.iter().map(|&i| enc[i].context_words.len()).max().unwrap();
                prop_assert_eq!(b.n, longest + 1);
                prop_assert_eq!(b.m, b.examples.iter().map(|&i| enc[i].question_words.len()).max().unwrap());
                for (m, &id) in b.context_mask.iter().zip(&b.context_words) {
                    prop_assert_eq!(*m, id != PAD);
                }
                for (m, &id) in b.question_mask.iter().zip(&b.question_words) {
                    prop_assert_eq!(*m, id != PAD);
                }
                for (r, &i) in b.examples.iter().enumerate() {
                    prop_assert_eq!(b.context_words[r * b.n], NULL);
                    let expect = enc[i].gold.map(|(s, e)| (s + 1, e + 1)).unwrap_or((0, 0));
                    prop_assert_eq!((b.starts[r], b.ends[r]), expect);
                    prop_assert!(b.starts[r] <= b.ends[r] && b.ends[r] < b.n);
                }
            }
        }
    }
}
