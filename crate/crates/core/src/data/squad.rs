//! SQuAD v2.0 JSON reading and writing.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    pub text: String,
    /// Offset in characters (Unicode scalar values) into the context.
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SquadExample {
    pub id: String,
    pub context: String,
    pub question: String,
    /// Empty for unanswerable questions.
    pub answers: Vec<Answer>,
    pub is_impossible: bool,
}

impl SquadExample {
    /// Gold texts as scored: `[""]` for an unanswerable question.
    pub fn gold_texts(&self) -> Vec<String> {
        if self.is_impossible {
            vec![String::new()]
        } else {
            self.answers.iter().map(|a| a.text.clone()).collect()
        }
    }
}

/// Substring by character offsets.
pub fn char_slice(s: &str, start: usize, len: usize) -> Option<&str> {
    let mut indices = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let begin = indices.nth(start)?;
    let end = if len == 0 {
        begin
    } else {
        indices.nth(len - 1)?
    };
    Some(&s[begin..end])
}

fn field<'a>(v: &'a Value, key: &str, path: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| Error::MalformedSquad {
        path: path.to_string(),
        msg: format!("missing field `{key}`"),
    })
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::MalformedSquad {
        path: path.to_string(),
        msg: "expected a string".into(),
    })
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::MalformedSquad {
        path: path.to_string(),
        msg: "expected an array".into(),
    })
}

/// Parses an in-memory SQuAD document.
pub fn parse_squad(doc: &Value) -> Result<Vec<SquadExample>> {
    let mut out = Vec::new();
    let data = as_array(field(doc, "data", "$")?, "$.data")?;
    for (ai, article) in data.iter().enumerate() {
        let apath = format!("$.data[{ai}]");
        let paragraphs = as_array(
            field(article, "paragraphs", &apath)?,
            &format!("{apath}.paragraphs"),
        )?;
        for (pi, para) in paragraphs.iter().enumerate() {
            let ppath = format!("{apath}.paragraphs[{pi}]");
            let context = as_str(field(para, "context", &ppath)?, &format!("{ppath}.context"))?;
            let qas = as_array(field(para, "qas", &ppath)?, &format!("{ppath}.qas"))?;
            for (qi, qa) in qas.iter().enumerate() {
                let qpath = format!("{ppath}.qas[{qi}]");
                out.push(parse_qa(qa, context, &qpath)?);
            }
        }
    }
    Ok(out)
}

fn parse_qa(qa: &Value, context: &str, qpath: &str) -> Result<SquadExample> {
    let id = as_str(field(qa, "id", qpath)?, &format!("{qpath}.id"))?.to_string();
    let question = as_str(field(qa, "question", qpath)?, &format!("{qpath}.question"))?.to_string();
    let is_impossible = match qa.get("is_impossible") {
        None => false,
        Some(v) => v.as_bool().ok_or_else(|| Error::MalformedSquad {
            path: format!("{qpath}.is_impossible"),
            msg: "expected a boolean".into(),
        })?,
    };
    let raw_answers = as_array(field(qa, "answers", qpath)?, &format!("{qpath}.answers"))?;
    let mut answers = Vec::with_capacity(raw_answers.len());
    for (k, ans) in raw_answers.iter().enumerate() {
        let apath = format!("{qpath}.answers[{k}]");
        let text = as_str(field(ans, "text", &apath)?, &format!("{apath}.text"))?;
        let start = field(ans, "answer_start", &apath)?
            .as_u64()
            .ok_or_else(|| Error::MalformedSquad {
                path: format!("{apath}.answer_start"),
                msg: "expected a non-negative integer".into(),
            })? as usize;
        let found = char_slice(context, start, text.chars().count());
        if found != Some(text) {
            return Err(Error::MalformedSquad {
                path: format!("{apath}.answer_start"),
                msg: format!(
                    "context at {start} reads {:?}, answer text is {text:?}",
                    found.unwrap_or("<out of range>")
                ),
            });
        }
        answers.push(Answer {
            text: text.to_string(),
            start,
        });
    }
    if is_impossible {
        answers.clear();
    } else if answers.is_empty() {
        return Err(Error::MalformedSquad {
            path: format!("{qpath}.answers"),
            msg: "answerable question without answers".into(),
        });
    }
    Ok(SquadExample {
        id,
        context: context.to_string(),
        question,
        answers,
        is_impossible,
    })
}

pub fn load_squad_json(path: impl AsRef<Path>) -> Result<Vec<SquadExample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text)?;
    parse_squad(&doc)
}

#[derive(Serialize)]
struct JsonAnswer<'a> {
    text: &'a str,
    answer_start: usize,
}

#[derive(Serialize)]
struct JsonQa<'a> {
    id: &'a str,
    question: &'a str,
    answers: Vec<JsonAnswer<'a>>,
    is_impossible: bool,
}

#[derive(Serialize)]
struct JsonParagraph<'a> {
    context: &'a str,
    qas: Vec<JsonQa<'a>>,
}

#[derive(Serialize)]
struct JsonArticle<'a> {
    title: &'a str,
    paragraphs: Vec<JsonParagraph<'a>>,
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    version: &'a str,
    data: Vec<JsonArticle<'a>>,
}

/// Serializes examples as one article; consecutive examples sharing a context
/// share a paragraph.
pub fn to_squad_json(examples: &[SquadExample], title: &str) -> Value {
    let mut paragraphs: Vec<JsonParagraph<'_>> = Vec::new();
    for ex in examples {
        let qa = JsonQa {
            id: &ex.id,
            question: &ex.question,
            answers: ex
                .answers
                .iter()
                .map(|a| JsonAnswer {
                    text: &a.text,
                    answer_start: a.start,
                })
                .collect(),
            is_impossible: ex.is_impossible,
        };
        match paragraphs.last_mut() {
            Some(p) if p.context == ex.context => p.qas.push(qa),
            _ => paragraphs.push(JsonParagraph {
                context: &ex.context,
                qas: vec![qa],
            }),
        }
    }
    let doc = JsonDoc {
        version: "v2.0",
        data: vec![JsonArticle { title, paragraphs }],
    };
    serde_json::to_value(doc).expect("SQuAD document serializes")
}

pub fn write_squad_json(examples: &[SquadExample], title: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&to_squad_json(examples, title))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
