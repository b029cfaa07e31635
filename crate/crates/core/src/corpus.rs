//! Corpus ingestion, noun-phrase candidate extraction and snippet lookup.
//!
//! Plain text is split into documents on blank lines, into sentences on
//! terminal punctuation, and into tokens on whitespace with leading and
//! trailing punctuation detached. CoNLL-U input keeps its gold tags and
//! dependency arcs, which the dependency context extractor needs.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stopwords::Stopwords;
use crate::termgroup::TermGroup;

/// Dependency head of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Head {
    Root,
    /// 0-based index of the governing token in the same sentence.
    Token(usize),
}

// Serialized as an integer: -1 for the root, otherwise the token index.
impl Serialize for Head {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Head::Root => serializer.serialize_i64(-1),
            Head::Token(i) => serializer.serialize_u64(*i as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Head {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(deserializer)?;
        match v {
            -1 => Ok(Head::Root),
            v if v >= 0 => Ok(Head::Token(v as usize)),
            v => Err(de::Error::custom(format!("invalid head {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<Head>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deprel: Option<String>,
}

impl Token {
    pub fn new(surface: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            lemma: None,
            pos: None,
            head: None,
            deprel: None,
        }
    }

    pub fn tagged(surface: impl Into<String>, pos: impl Into<String>) -> Self {
        Token {
            pos: Some(pos.into()),
            ..Token::new(surface)
        }
    }

    pub fn parsed(
        surface: impl Into<String>,
        pos: impl Into<String>,
        head: Head,
        deprel: impl Into<String>,
    ) -> Self {
        Token {
            surface: surface.into(),
            lemma: None,
            pos: Some(pos.into()),
            head: Some(head),
            deprel: Some(deprel.into()),
        }
    }

    pub fn is_punctuation(&self) -> bool {
        is_punctuation(&self.surface)
    }
}

/// True for nonempty strings made only of non-alphanumeric characters.
pub fn is_punctuation(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| !c.is_alphanumeric() && !c.is_whitespace())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub sent_index: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(doc_id: impl Into<String>, sent_index: usize, tokens: Vec<Token>) -> Self {
        Sentence {
            doc_id: doc_id.into(),
            sent_index,
            tokens,
        }
    }

    /// Builds an untagged sentence from whitespace-separated tokens.
    pub fn from_tokens(doc_id: impl Into<String>, sent_index: usize, text: &str) -> Self {
        Sentence::new(
            doc_id,
            sent_index,
            text.split_whitespace().map(Token::new).collect(),
        )
    }

    /// Builds a tagged sentence from `surface/TAG` items. The tag is taken
    /// after the last slash.
    pub fn from_tagged(doc_id: impl Into<String>, sent_index: usize, text: &str) -> Self {
        let tokens = text
            .split_whitespace()
            .map(|item| match item.rfind('/') {
                Some(i) if i > 0 => Token::tagged(&item[..i], &item[i + 1..]),
                _ => Token::new(item),
            })
            .collect();
        Sentence::new(doc_id, sent_index, tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token surfaces joined by single spaces.
    pub fn text(&self) -> String {
        self.span_text(0, self.tokens.len())
    }

    pub fn span_text(&self, start: usize, end: usize) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens[start..end].iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&t.surface);
        }
        out
    }

    pub fn is_tagged(&self) -> bool {
        self.tokens.iter().all(|t| t.pos.is_some())
    }

    pub fn is_parsed(&self) -> bool {
        self.tokens
            .iter()
            .all(|t| t.head.is_some() && t.deprel.is_some())
    }
}

/// An ordered collection of sentences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        Corpus { sentences }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn documents(&self) -> usize {
        let mut n = 0;
        let mut last: Option<&str> = None;
        for s in &self.sentences {
            if last != Some(s.doc_id.as_str()) {
                n += 1;
                last = Some(&s.doc_id);
            }
        }
        n
    }

    pub fn is_tagged(&self) -> bool {
        self.sentences.iter().all(Sentence::is_tagged)
    }

    pub fn is_parsed(&self) -> bool {
        !self.sentences.is_empty() && self.sentences.iter().all(Sentence::is_parsed)
    }

    /// Writes the sentence cache: one JSON record per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.sentences {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut sentences = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: Sentence = serde_json::from_str(&line).map_err(|e| Error::Format {
                line: i + 1,
                message: e.to_string(),
            })?;
            sentences.push(s);
        }
        Ok(Corpus { sentences })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizerConfig {
    /// Documents are named `<doc_prefix><block index>`.
    pub doc_prefix: String,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            doc_prefix: "doc".to_string(),
        }
    }
}

fn validate_utf8(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| Error::Encoding {
        offset: e.valid_up_to(),
    })
}

/// Splits plain text into documents (blank-line separated blocks),
/// sentences and tokens.
pub fn ingest_plaintext(bytes: &[u8], config: &TokenizerConfig) -> Result<Vec<Sentence>> {
    let text = validate_utf8(bytes)?;
    let mut sentences = Vec::new();
    let mut block = String::new();
    let mut doc = 0;
    let mut flush = |block: &mut String, sentences: &mut Vec<Sentence>| {
        if block.trim().is_empty() {
            block.clear();
            return;
        }
        let doc_id = format!("{}{}", config.doc_prefix, doc);
        for (i, tokens) in split_sentences(block).into_iter().enumerate() {
            sentences.push(Sentence::new(doc_id.clone(), i, tokens));
        }
        doc += 1;
        block.clear();
    };
    for line in text.lines() {
        if line.trim().is_empty() {
            flush(&mut block, &mut sentences);
        } else {
            block.push_str(line);
            block.push('\n');
        }
    }
    flush(&mut block, &mut sentences);
    Ok(sentences)
}

struct RawToken {
    text: String,
    /// First token produced from a whitespace-delimited chunk.
    chunk_start: bool,
    /// Abbreviation-like tokens ("U.S.", "A.") never end a sentence.
    abbreviation: bool,
}

fn split_identical_runs(s: &str, out: &mut Vec<String>) {
    let mut cur = String::new();
    for c in s.chars() {
        if let Some(last) = cur.chars().last() {
            if last != c {
                out.push(std::mem::take(&mut cur));
            }
        }
        cur.push(c);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
}

fn tokenize_chunk(chunk: &str, out: &mut Vec<RawToken>) {
    let is_p = |c: char| !c.is_alphanumeric();
    if chunk.chars().all(is_p) {
        out.push(RawToken {
            text: chunk.to_string(),
            chunk_start: true,
            abbreviation: false,
        });
        return;
    }
    let body_start = chunk.find(|c: char| !is_p(c)).unwrap_or(0);
    let body_end = chunk
        .char_indices()
        .rev()
        .find(|&(_, c)| !is_p(c))
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(chunk.len());
    let lead = &chunk[..body_start];
    let mut body = chunk[body_start..body_end].to_string();
    let mut trail = &chunk[body_end..];

    // Keep the period of abbreviations and initials attached.
    let mut abbreviation = false;
    if trail.starts_with('.') && !trail.starts_with("..") {
        let single_letter = body.chars().count() == 1 && body.chars().all(char::is_alphabetic);
        if single_letter || body.contains('.') {
            body.push('.');
            trail = &trail[1..];
            abbreviation = true;
        }
    }

    let mut pieces = Vec::new();
    split_identical_runs(lead, &mut pieces);
    let n_lead = pieces.len();
    pieces.push(body);
    split_identical_runs(trail, &mut pieces);
    for (i, p) in pieces.into_iter().enumerate() {
        out.push(RawToken {
            text: p,
            chunk_start: i == 0,
            abbreviation: abbreviation && i == n_lead,
        });
    }
}

fn is_terminal(t: &RawToken) -> bool {
    !t.abbreviation
        && is_punctuation(&t.text)
        && t.text.ends_with(['.', '!', '?'])
}

fn split_sentences(block: &str) -> Vec<Vec<Token>> {
    let mut raw = Vec::new();
    for chunk in block.split_whitespace() {
        tokenize_chunk(chunk, &mut raw);
    }
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for i in 0..raw.len() {
        current.push(Token::new(raw[i].text.clone()));
        let boundary = is_terminal(&raw[i])
            && match raw.get(i + 1) {
                None => true,
                Some(next) => {
                    next.chunk_start && next.text.chars().next().is_some_and(char::is_uppercase)
                }
            };
        if boundary {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

/// Reads CoNLL-U. Multiword-token and empty-node lines are skipped, `#`
/// comments are ignored except `# newdoc id = ...`, which starts a new
/// document. Sentences before any `newdoc` comment belong to `default_doc`.
pub fn ingest_conllu(bytes: &[u8], default_doc: &str) -> Result<Vec<Sentence>> {
    let text = validate_utf8(bytes)?;
    let mut sentences = Vec::new();
    let mut doc_id = default_doc.to_string();
    let mut sent_index = 0;
    let mut tokens: Vec<Token> = Vec::new();
    let mut heads: Vec<(usize, Option<usize>)> = Vec::new();
    let mut sentence_start_line = 0;

    let finish = |tokens: &mut Vec<Token>,
                      heads: &mut Vec<(usize, Option<usize>)>,
                      doc_id: &str,
                      sent_index: &mut usize,
                      sentences: &mut Vec<Sentence>|
     -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let n = tokens.len();
        for (i, &(line, head)) in heads.iter().enumerate() {
            let Some(head) = head else { continue };
            tokens[i].head = Some(match head {
                0 => Head::Root,
                h if h > n => {
                    return Err(Error::Conllu {
                        line,
                        message: format!("HEAD {h} out of range for sentence of {n} tokens"),
                    })
                }
                h if h - 1 == i => {
                    return Err(Error::Conllu {
                        line,
                        message: "token is its own head".into(),
                    })
                }
                h => Head::Token(h - 1),
            });
        }
        sentences.push(Sentence::new(doc_id, *sent_index, std::mem::take(tokens)));
        heads.clear();
        *sent_index += 1;
        Ok(())
    };

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut tokens, &mut heads, &doc_id, &mut sent_index, &mut sentences)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("newdoc id") {
                finish(&mut tokens, &mut heads, &doc_id, &mut sent_index, &mut sentences)?;
                doc_id = id.trim_start_matches([' ', '=']).trim().to_string();
                sent_index = 0;
            }
            continue;
        }
        if tokens.is_empty() {
            sentence_start_line = lineno;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Conllu {
                line: lineno,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains(['-', '.']) {
            continue;
        }
        let id: usize = cols[0].parse().map_err(|_| Error::Conllu {
            line: lineno,
            message: format!("invalid ID {:?}", cols[0]),
        })?;
        if id != tokens.len() + 1 {
            return Err(Error::Conllu {
                line: lineno,
                message: format!(
                    "ID {id} out of sequence (sentence starting at line {sentence_start_line})"
                ),
            });
        }
        let field = |s: &str| (s != "_").then(|| s.to_string());
        let head = match cols[6] {
            "_" => None,
            h => Some(h.parse::<usize>().map_err(|_| Error::Conllu {
                line: lineno,
                message: format!("non-integer HEAD {h:?}"),
            })?),
        };
        let pos = field(cols[4]).or_else(|| field(cols[3]));
        let deprel = field(cols[7]);
        if deprel.is_some() && pos.is_none() {
            return Err(Error::Conllu {
                line: lineno,
                message: "DEPREL given without a POS tag".into(),
            });
        }
        tokens.push(Token {
            surface: cols[1].to_string(),
            lemma: field(cols[2]),
            pos,
            head: None,
            deprel,
        });
        heads.push((lineno, head));
    }
    finish(&mut tokens, &mut heads, &doc_id, &mut sent_index, &mut sentences)?;
    Ok(sentences)
}

/// Serializes sentences as CoNLL-U; POS goes to the XPOS column.
pub fn write_conllu(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    let mut last_doc: Option<&str> = None;
    for s in sentences {
        if last_doc != Some(s.doc_id.as_str()) {
            let _ = writeln!(out, "# newdoc id = {}", s.doc_id);
            last_doc = Some(&s.doc_id);
        }
        for (i, t) in s.tokens.iter().enumerate() {
            let head = match t.head {
                None => "_".to_string(),
                Some(Head::Root) => "0".to_string(),
                Some(Head::Token(h)) => (h + 1).to_string(),
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t_\t{}\t_\t{}\t{}\t_\t_",
                i + 1,
                t.surface,
                t.lemma.as_deref().unwrap_or("_"),
                t.pos.as_deref().unwrap_or("_"),
                head,
                t.deprel.as_deref().unwrap_or("_"),
            );
        }
        out.push('\n');
    }
    out
}

/// A candidate term occurrence: tokens `start..end` of one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSpan {
    pub doc_id: String,
    pub sent_index: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkMode {
    /// `(DT)? (JJ|JJR|JJS)* (NN|NNS|NNP|NNPS)+`, determiner stripped.
    PosChunk,
    /// Untagged fallback: 1..4-grams without punctuation whose boundary
    /// tokens are not stopwords.
    Ngram,
}

fn is_adjective(tag: &str) -> bool {
    matches!(tag, "JJ" | "JJR" | "JJS")
}

fn is_noun(tag: &str) -> bool {
    matches!(tag, "NN" | "NNS" | "NNP" | "NNPS")
}

const MAX_NGRAM: usize = 4;

pub fn extract_candidates(
    sentence: &Sentence,
    mode: ChunkMode,
    stopwords: &Stopwords,
) -> Result<Vec<CandidateSpan>> {
    let mut spans = Vec::new();
    let mut push = |start: usize, end: usize| {
        spans.push(CandidateSpan {
            doc_id: sentence.doc_id.clone(),
            sent_index: sentence.sent_index,
            start,
            end,
            surface: sentence.span_text(start, end),
        })
    };
    let tokens = &sentence.tokens;
    match mode {
        ChunkMode::PosChunk => {
            let tags: Vec<&str> = tokens
                .iter()
                .map(|t| t.pos.as_deref())
                .collect::<Option<_>>()
                .ok_or_else(|| {
                    Error::Mode(format!(
                        "POS chunking needs tags on every token ({} sentence {})",
                        sentence.doc_id, sentence.sent_index
                    ))
                })?;
            let mut i = 0;
            while i < tags.len() {
                let mut j = i;
                if tags[j] == "DT" {
                    j += 1;
                }
                let body = j;
                while j < tags.len() && is_adjective(tags[j]) {
                    j += 1;
                }
                let nouns = j;
                while j < tags.len() && is_noun(tags[j]) {
                    j += 1;
                }
                if j > nouns {
                    push(body, j);
                    i = j;
                } else {
                    i += 1;
                }
            }
        }
        ChunkMode::Ngram => {
            for start in 0..tokens.len() {
                for end in start + 1..=(start + MAX_NGRAM).min(tokens.len()) {
                    if tokens[end - 1].is_punctuation() {
                        break;
                    }
                    if stopwords.contains(&tokens[start].surface)
                        || stopwords.contains(&tokens[end - 1].surface)
                    {
                        continue;
                    }
                    push(start, end);
                }
            }
        }
    }
    Ok(spans)
}

/// A sentence with highlight ranges, for showing a group in context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub doc_id: String,
    pub sent_index: usize,
    pub text: String,
    /// Half-open character (Unicode scalar) ranges into `text`.
    pub highlights: Vec<(usize, usize)>,
}

/// Finds non-overlapping, leftmost-longest token-aligned matches of any of
/// `phrases` (lowercased token sequences) in `sentence`.
pub(crate) fn match_phrases(
    sentence: &Sentence,
    index: &HashMap<Vec<String>, usize>,
    max_len: usize,
) -> Vec<(usize, usize, usize)> {
    let lower: Vec<String> = sentence
        .tokens
        .iter()
        .map(|t| t.surface.to_lowercase())
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lower.len() {
        let mut found = None;
        for len in (1..=max_len.min(lower.len() - i)).rev() {
            if let Some(&v) = index.get(&lower[i..i + len]) {
                found = Some((len, v));
                break;
            }
        }
        match found {
            Some((len, v)) => {
                out.push((i, i + len, v));
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

pub(crate) fn phrase_key(surface: &str) -> Vec<String> {
    surface.split_whitespace().map(str::to_lowercase).collect()
}

/// Up to `max_n` sentences mentioning any member of `group`, in corpus order
/// (document, then sentence index), with the member occurrences highlighted.
pub fn snippets(corpus: &Corpus, group: &TermGroup, max_n: usize) -> Vec<Snippet> {
    if max_n == 0 {
        return Vec::new();
    }
    let mut index = HashMap::new();
    let mut max_len = 0;
    for m in &group.members {
        let key = phrase_key(&m.surface);
        if key.is_empty() {
            continue;
        }
        max_len = max_len.max(key.len());
        index.insert(key, 0);
    }
    let mut order: Vec<&Sentence> = corpus.sentences.iter().collect();
    order.sort_by(|a, b| (&a.doc_id, a.sent_index).cmp(&(&b.doc_id, b.sent_index)));

    let mut out = Vec::new();
    for s in order {
        let matches = match_phrases(s, &index, max_len);
        if matches.is_empty() {
            continue;
        }
        // Character offset of every token start in the space-joined text.
        let mut starts = Vec::with_capacity(s.tokens.len());
        let mut pos = 0;
        for t in &s.tokens {
            starts.push(pos);
            pos += t.surface.chars().count() + 1;
        }
        let highlights = matches
            .iter()
            .map(|&(a, b, _)| (starts[a], starts[b - 1] + s.tokens[b - 1].surface.chars().count()))
            .collect();
        out.push(Snippet {
            doc_id: s.doc_id.clone(),
            sent_index: s.sent_index,
            text: s.text(),
            highlights,
        });
        if out.len() == max_n {
            break;
        }
    }
    out
}
