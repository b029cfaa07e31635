//! Context extraction: turns group-annotated sentences into
//! `(target group, context unit)` pairs, one extractor per context type.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, Corpus, Head, Sentence};
use crate::error::{Error, Result};
use crate::stopwords::Stopwords;
use crate::termgroup::{GroupId, TermGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextType {
    Linear,
    List,
    Dependency,
    Symmetric,
    Unary,
}

impl ContextType {
    /// All context types in feature order.
    pub const ALL: [ContextType; 5] = [
        ContextType::Linear,
        ContextType::List,
        ContextType::Dependency,
        ContextType::Symmetric,
        ContextType::Unary,
    ];

    /// Position of this type in a feature vector.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContextType::Linear => "linear",
            ContextType::List => "list",
            ContextType::Dependency => "dependency",
            ContextType::Symmetric => "symmetric",
            ContextType::Unary => "unary",
        }
    }
}

impl fmt::Display for ContextType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContextType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ContextType::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim().to_lowercase())
            .ok_or_else(|| Error::InvalidInput(format!("unknown context type {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextPair {
    pub target: GroupId,
    pub context: String,
    pub ctype: ContextType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub group: GroupId,
}

/// A sentence with its group mentions: sorted, non-overlapping.
#[derive(Debug, Clone)]
pub struct AnnotatedSentence<'a> {
    pub sentence: &'a Sentence,
    pub mentions: Vec<Mention>,
    canonical: Vec<String>,
}

impl<'a> AnnotatedSentence<'a> {
    /// Annotates with explicit mentions; `canonical[i]` names mention `i`.
    pub fn with_mentions(
        sentence: &'a Sentence,
        mentions: Vec<(usize, usize, GroupId, String)>,
    ) -> Self {
        let mut mentions = mentions;
        mentions.sort_by_key(|m| m.0);
        let canonical = mentions.iter().map(|m| m.3.clone()).collect();
        AnnotatedSentence {
            sentence,
            mentions: mentions
                .into_iter()
                .map(|(start, end, group, _)| Mention { start, end, group })
                .collect(),
            canonical,
        }
    }

    pub fn canonical(&self, mention: usize) -> &str {
        &self.canonical[mention]
    }

    fn mention_at(&self, token: usize) -> Option<usize> {
        self.mentions
            .iter()
            .position(|m| m.start <= token && token < m.end)
    }

    /// The sentence as a sequence of mention and plain-token segments.
    fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut next = self.mentions.iter().enumerate().peekable();
        let mut i = 0;
        while i < self.sentence.tokens.len() {
            match next.peek() {
                Some(&(mi, m)) if m.start == i => {
                    out.push(Segment::Mention(mi));
                    i = m.end;
                    next.next();
                }
                _ => {
                    out.push(Segment::Token(i));
                    i += 1;
                }
            }
        }
        out
    }

    fn token(&self, i: usize) -> &str {
        &self.sentence.tokens[i].surface
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Segment {
    Mention(usize),
    Token(usize),
}

/// Member-surface index for longest-match annotation.
#[derive(Debug, Clone, Default)]
pub struct GroupIndex {
    phrases: HashMap<Vec<String>, usize>,
    groups: Vec<(GroupId, String)>,
    max_len: usize,
}

impl GroupIndex {
    pub fn new(groups: &[TermGroup]) -> Self {
        let mut index = GroupIndex::default();
        for g in groups {
            let slot = index.groups.len();
            index.groups.push((g.id, g.canonical.clone()));
            for m in &g.members {
                let key = corpus::phrase_key(&m.surface);
                if key.is_empty() {
                    continue;
                }
                index.max_len = index.max_len.max(key.len());
                index.phrases.entry(key).or_insert(slot);
            }
        }
        index
    }

    /// Greedy left-to-right, longest-match, case-insensitive annotation.
    pub fn annotate<'a>(&self, sentence: &'a Sentence) -> AnnotatedSentence<'a> {
        let found = corpus::match_phrases(sentence, &self.phrases, self.max_len);
        let mentions = found
            .into_iter()
            .map(|(start, end, slot)| {
                let (id, canonical) = &self.groups[slot];
                (start, end, *id, canonical.clone())
            })
            .collect();
        AnnotatedSentence::with_mentions(sentence, mentions)
    }
}

pub fn annotate<'a>(sentence: &'a Sentence, groups: &[TermGroup]) -> AnnotatedSentence<'a> {
    GroupIndex::new(groups).annotate(sentence)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextConfig {
    /// Linear window, in units on each side.
    pub window: usize,
    pub min_list_items: usize,
    pub unary_gram: usize,
    pub symmetric_patterns: Vec<String>,
    #[serde(skip)]
    pub stopwords: Stopwords,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig {
            window: 5,
            min_list_items: 3,
            unary_gram: 3,
            symmetric_patterns: vec!["and".into(), "or".into()],
            stopwords: Stopwords::english(),
        }
    }
}

fn pair(target: GroupId, context: impl Into<String>, ctype: ContextType) -> ContextPair {
    ContextPair {
        target,
        context: context.into(),
        ctype,
    }
}

/// Window contexts over units: each mention is one unit, as is every other
/// token that is neither a stopword nor punctuation.
pub fn extract_linear(
    s: &AnnotatedSentence,
    window: usize,
    stopwords: &Stopwords,
) -> Vec<ContextPair> {
    let units: Vec<Segment> = s
        .segments()
        .into_iter()
        .filter(|seg| match *seg {
            Segment::Mention(_) => true,
            Segment::Token(i) => {
                let t = &s.sentence.tokens[i];
                !t.is_punctuation() && !stopwords.contains(&t.surface)
            }
        })
        .collect();
    let text = |seg: Segment| match seg {
        Segment::Mention(m) => s.canonical(m),
        Segment::Token(i) => s.token(i),
    };
    let mut out = Vec::new();
    for (p, &seg) in units.iter().enumerate() {
        let Segment::Mention(m) = seg else { continue };
        let lo = p.saturating_sub(window);
        let hi = (p + window).min(units.len() - 1);
        for (q, &other) in units.iter().enumerate().take(hi + 1).skip(lo) {
            if q != p {
                out.push(pair(s.mentions[m].group, text(other), ContextType::Linear));
            }
        }
    }
    out
}

fn is_conjunction(word: &str) -> bool {
    word.eq_ignore_ascii_case("and") || word.eq_ignore_ascii_case("or")
}

/// Explicit list contexts: maximal runs of at least `min_items` mentions
/// separated by commas, with an optional final conjunction.
pub fn extract_lists(s: &AnnotatedSentence, min_items: usize) -> Vec<ContextPair> {
    let segs = s.segments();
    let is_tok = |j: usize, pred: &dyn Fn(&str) -> bool| match segs.get(j) {
        Some(&Segment::Token(t)) => pred(s.token(t)),
        _ => false,
    };
    let mention = |j: usize| match segs.get(j) {
        Some(&Segment::Mention(m)) => Some(m),
        _ => None,
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < segs.len() {
        let Some(first) = mention(i) else {
            i += 1;
            continue;
        };
        let mut items = vec![first];
        let mut j = i + 1;
        loop {
            let mut k = j;
            let comma = is_tok(k, &|t| t == ",");
            if comma {
                k += 1;
            }
            let conj = is_tok(k, &is_conjunction);
            if conj {
                k += 1;
            }
            if !comma && !conj {
                break;
            }
            match mention(k) {
                Some(m) => {
                    items.push(m);
                    j = k + 1;
                    if conj {
                        break;
                    }
                }
                None => break,
            }
        }
        if items.len() >= min_items {
            for (a, &ma) in items.iter().enumerate() {
                for (b, &mb) in items.iter().enumerate() {
                    if a != b {
                        out.push(pair(s.mentions[ma].group, s.canonical(mb), ContextType::List));
                    }
                }
            }
        }
        i = j;
    }
    out
}

/// Dependency contexts with collapsed prepositions: `word/deprel` for each
/// dependent, `word/deprel-1` for the governor, and `word/prep_P` (or
/// `word/prep_P-1`) when the arc goes through preposition `P`. Both
/// Stanford-style `prep`/`pobj` and UD-style `case` markings are collapsed.
pub fn extract_dependency(s: &AnnotatedSentence) -> Result<Vec<ContextPair>> {
    let sent = s.sentence;
    if !sent.is_parsed() {
        return Err(Error::Mode(format!(
            "dependency contexts need a parsed sentence ({} sentence {})",
            sent.doc_id, sent.sent_index
        )));
    }
    let tokens = &sent.tokens;
    let head = |i: usize| match tokens[i].head {
        Some(Head::Token(h)) => Some(h),
        _ => None,
    };
    let deprel = |i: usize| tokens[i].deprel.as_deref().unwrap_or("");
    let children = |i: usize, rel: &str| {
        (0..tokens.len()).find(|&c| head(c) == Some(i) && deprel(c) == rel)
    };
    let unit = |i: usize| match s.mention_at(i) {
        Some(m) => s.canonical(m).to_string(),
        None => tokens[i].surface.clone(),
    };

    let mut out = Vec::new();
    for m in &s.mentions {
        let inside = |i: usize| m.start <= i && i < m.end;
        // Dependents outside the span.
        for d in (0..tokens.len()).filter(|&d| !inside(d)) {
            let Some(h) = head(d) else { continue };
            if !inside(h) || matches!(deprel(d), "punct" | "case") {
                continue;
            }
            let context = if deprel(d) == "prep" {
                match children(d, "pobj") {
                    Some(p) => format!("{}/prep_{}", unit(p), tokens[d].surface.to_lowercase()),
                    None => format!("{}/prep", unit(d)),
                }
            } else if let Some(c) = children(d, "case") {
                format!("{}/prep_{}", unit(d), tokens[c].surface.to_lowercase())
            } else {
                format!("{}/{}", unit(d), deprel(d))
            };
            out.push(pair(m.group, context, ContextType::Dependency));
        }
        // Governor of the mention's syntactic head.
        let Some(h) = (m.start..m.end).find(|&i| head(i).is_none_or(|g| !inside(g))) else {
            continue;
        };
        let Some(g) = head(h) else { continue };
        if deprel(h) == "punct" {
            continue;
        }
        let context = if deprel(h) == "pobj" && deprel(g) == "prep" {
            match head(g) {
                Some(gg) if !inside(gg) => {
                    format!("{}/prep_{}-1", unit(gg), tokens[g].surface.to_lowercase())
                }
                _ => continue,
            }
        } else if let Some(c) = children(h, "case") {
            format!("{}/prep_{}-1", unit(g), tokens[c].surface.to_lowercase())
        } else {
            format!("{}/{}-1", unit(g), deprel(h))
        };
        out.push(pair(m.group, context, ContextType::Dependency));
    }
    Ok(out)
}

/// Symmetric-pattern contexts: mentions X and Y directly joined by one of
/// `patterns` ("X and Y") yield both (X, Y) and (Y, X).
pub fn extract_symmetric(s: &AnnotatedSentence, patterns: &[String]) -> Vec<ContextPair> {
    let segs = s.segments();
    let mut out = Vec::new();
    for w in segs.windows(3) {
        if let [Segment::Mention(x), Segment::Token(t), Segment::Mention(y)] = *w {
            if patterns.iter().any(|p| p.eq_ignore_ascii_case(s.token(t))) {
                out.push(pair(s.mentions[x].group, s.canonical(y), ContextType::Symmetric));
                out.push(pair(s.mentions[y].group, s.canonical(x), ContextType::Symmetric));
            }
        }
    }
    out
}

/// Unary pattern contexts: the `gram` tokens before a mention followed by
/// `__`, and `__` followed by the `gram` tokens after it. Windows containing
/// punctuation, running past the sentence, or made only of stopwords are
/// dropped.
pub fn extract_unary(s: &AnnotatedSentence, gram: usize, stopwords: &Stopwords) -> Vec<ContextPair> {
    let tokens = &s.sentence.tokens;
    let usable = |range: std::ops::Range<usize>| {
        let window = &tokens[range];
        !window.is_empty()
            && window.iter().all(|t| !t.is_punctuation())
            && !window.iter().all(|t| stopwords.contains(&t.surface))
    };
    let join = |range: std::ops::Range<usize>| {
        tokens[range]
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = Vec::new();
    if gram == 0 {
        return out;
    }
    for m in &s.mentions {
        if m.start >= gram && usable(m.start - gram..m.start) {
            out.push(pair(
                m.group,
                format!("{} __", join(m.start - gram..m.start)),
                ContextType::Unary,
            ));
        }
        if m.end + gram <= tokens.len() && usable(m.end..m.end + gram) {
            out.push(pair(
                m.group,
                format!("__ {}", join(m.end..m.end + gram)),
                ContextType::Unary,
            ));
        }
    }
    out
}

/// Runs the extractor for `ctype` on one annotated sentence.
pub fn extract(
    s: &AnnotatedSentence,
    ctype: ContextType,
    config: &ContextConfig,
) -> Result<Vec<ContextPair>> {
    Ok(match ctype {
        ContextType::Linear => extract_linear(s, config.window, &config.stopwords),
        ContextType::List => extract_lists(s, config.min_list_items),
        ContextType::Dependency => extract_dependency(s)?,
        ContextType::Symmetric => extract_symmetric(s, &config.symmetric_patterns),
        ContextType::Unary => extract_unary(s, config.unary_gram, &config.stopwords),
    })
}

/// All pairs of one context type for a corpus, with unit counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairStream {
    pub pairs: Vec<ContextPair>,
    pub target_counts: BTreeMap<GroupId, u64>,
    pub context_counts: BTreeMap<String, u64>,
}

impl PairStream {
    pub fn from_pairs(pairs: Vec<ContextPair>) -> Self {
        let mut stream = PairStream::default();
        for p in &pairs {
            *stream.target_counts.entry(p.target).or_default() += 1;
            *stream.context_counts.entry(p.context.clone()).or_default() += 1;
        }
        stream.pairs = pairs;
        stream
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Extracts pairs of one context type from every sentence, in corpus order.
pub fn build_pairs(
    corpus: &Corpus,
    groups: &[TermGroup],
    ctype: ContextType,
    config: &ContextConfig,
) -> Result<PairStream> {
    if ctype == ContextType::Dependency && !corpus.is_empty() && !corpus.is_parsed() {
        return Err(Error::Mode(
            "dependency contexts need a fully parsed (CoNLL-U) corpus".into(),
        ));
    }
    let index = GroupIndex::new(groups);
    let mut pairs = Vec::new();
    for s in &corpus.sentences {
        let annotated = index.annotate(s);
        pairs.extend(extract(&annotated, ctype, config)?);
    }
    Ok(PairStream::from_pairs(pairs))
}

fn clean_unit(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Writes `<target_group_id>\t<context>` lines.
pub fn write_pairs<W: Write>(pairs: &[ContextPair], mut w: W) -> Result<()> {
    for p in pairs {
        writeln!(w, "{}\t{}", p.target, clean_unit(&p.context))?;
    }
    Ok(())
}

pub fn read_pairs<R: BufRead>(r: R, ctype: ContextType) -> Result<Vec<ContextPair>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Format {
            line: i + 1,
            message,
        };
        let (target, context) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected <target>\\t<context>".into()))?;
        let target = target
            .parse()
            .map_err(|_| bad(format!("invalid group id {target:?}")))?;
        if context.is_empty() {
            return Err(bad("empty context".into()));
        }
        out.push(pair(target, context, ctype));
    }
    Ok(out)
}

/// Writes the `<unit>\t<count>` sidecar.
pub fn write_counts<W: Write>(counts: &BTreeMap<String, u64>, mut w: W) -> Result<()> {
    for (unit, n) in counts {
        writeln!(w, "{}\t{}", clean_unit(unit), n)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;
    use crate::termgroup::Term;
    use std::collections::BTreeSet;

    fn group(id: u32, members: &[&str]) -> TermGroup {
        TermGroup::new(GroupId(id), members.iter().map(|m| Term::new(*m, 1)).collect())
    }

    fn contexts_of(pairs: &[ContextPair], target: u32) -> BTreeSet<String> {
        pairs
            .iter()
            .filter(|p| p.target == GroupId(target))
            .map(|p| p.context.clone())
            .collect()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn annotate_prefers_longest_match() {
        let s = Sentence::from_tokens("d", 0, "I love New York City");
        let groups = [group(0, &["NY", "New York", "New York City"])];
        let a = annotate(&s, &groups);
        assert_eq!(a.mentions, [Mention { start: 2, end: 5, group: GroupId(0) }]);
    }

    #[test]
    fn annotate_is_leftmost_longest() {
        let s = Sentence::from_tokens("d", 0, "machine learning theory");
        let groups = [group(0, &["machine learning"]), group(1, &["learning theory"])];
        let a = annotate(&s, &groups);
        assert_eq!(a.mentions.len(), 1);
        assert_eq!(a.mentions[0].group, GroupId(0));
        let plain = Sentence::from_tokens("d", 0, "nothing here");
        let none = annotate(&plain, &groups);
        assert!(none.mentions.is_empty());
    }

    #[test]
    fn annotate_is_case_insensitive() {
        let s = Sentence::from_tokens("d", 0, "i use JAVA daily");
        let a = annotate(&s, &[group(3, &["Java"])]);
        assert_eq!(a.mentions[0].group, GroupId(3));
        assert_eq!(a.canonical(0), "Java");
    }

    #[test]
    fn linear_window_bounds() {
        let s = Sentence::from_tokens("d", 0, "A b C");
        let a = annotate(&s, &[group(0, &["A"]), group(1, &["C"])]);
        let pairs = extract_linear(&a, 1, &Stopwords::empty());
        assert_eq!(contexts_of(&pairs, 0), set(&["b"]));
        assert_eq!(contexts_of(&pairs, 1), set(&["b"]));
        assert_eq!(pairs.len(), 2);
    }

    #[test]
    fn linear_skips_stopword_sentences() {
        let s = Sentence::from_tokens("d", 0, "the of a and");
        let a = annotate(&s, &[group(0, &["Siri"])]);
        assert!(extract_linear(&a, 5, &Stopwords::english()).is_empty());
    }

    #[test]
    fn linear_window_saturates() {
        let s = Sentence::from_tokens("d", 0, "alpha uses beta with gamma and delta");
        let g = [group(0, &["alpha"]), group(1, &["gamma"])];
        let a = annotate(&s, &g);
        let sw = Stopwords::english();
        let n = s.len();
        assert_eq!(extract_linear(&a, n, &sw), extract_linear(&a, n + 7, &sw));
    }

    #[test]
    fn two_item_run_is_not_a_list() {
        let s = Sentence::from_tokens("d", 0, "A , B");
        let a = annotate(&s, &[group(0, &["A"]), group(1, &["B"])]);
        assert!(extract_lists(&a, 3).is_empty());
    }

    #[test]
    fn list_with_final_conjunction() {
        let s = Sentence::from_tokens("d", 0, "we use A , B and C daily");
        let g = [group(0, &["A"]), group(1, &["B"]), group(2, &["C"])];
        let pairs = extract_lists(&annotate(&s, &g), 3);
        assert_eq!(contexts_of(&pairs, 0), set(&["B", "C"]));
        assert_eq!(contexts_of(&pairs, 1), set(&["A", "C"]));
        assert_eq!(contexts_of(&pairs, 2), set(&["A", "B"]));
        assert_eq!(pairs.len(), 6);
    }

    #[test]
    fn list_stops_after_conjunction() {
        // "D" follows the conjunction-terminated run and starts no new run.
        let s = Sentence::from_tokens("d", 0, "A , B , C and D , E");
        let g = [
            group(0, &["A"]),
            group(1, &["B"]),
            group(2, &["C"]),
            group(3, &["D"]),
            group(4, &["E"]),
        ];
        let pairs = extract_lists(&annotate(&s, &g), 3);
        assert_eq!(contexts_of(&pairs, 0), set(&["B", "C", "D"]));
        assert!(contexts_of(&pairs, 4).is_empty());
    }

    #[test]
    fn symmetric_requires_adjacency_and_pattern_word() {
        let g = [group(0, &["Apple"]), group(1, &["Orange"])];
        let pats = ContextConfig::default().symmetric_patterns;
        let s = Sentence::from_tokens("d", 0, "Apple and Orange juice drink");
        let pairs = extract_symmetric(&annotate(&s, &g), &pats);
        assert_eq!(contexts_of(&pairs, 0), set(&["Orange"]));
        assert_eq!(contexts_of(&pairs, 1), set(&["Apple"]));
        for text in ["Apple nor Orange", "Apple and fresh Orange"] {
            let s = Sentence::from_tokens("d", 0, text);
            assert!(extract_symmetric(&annotate(&s, &g), &pats).is_empty(), "{text}");
        }
    }

    #[test]
    fn unary_length_and_stopword_rules() {
        let sw = Stopwords::english();
        let g = [group(0, &["Alaska"])];
        let s = Sentence::from_tokens("d", 0, "Alaska is big");
        assert!(extract_unary(&annotate(&s, &g), 3, &sw).is_empty());
        let s = Sentence::from_tokens("d", 0, "the of a Alaska");
        assert!(extract_unary(&annotate(&s, &g), 3, &sw).is_empty());
        let s = Sentence::from_tokens("d", 0, "we visited rural Alaska in the summer");
        let pairs = extract_unary(&annotate(&s, &g), 3, &sw);
        assert_eq!(contexts_of(&pairs, 0), set(&["we visited rural __", "__ in the summer"]));
    }

    fn parsed(items: &[(&str, &str, i64, &str)]) -> Sentence {
        let tokens = items
            .iter()
            .map(|&(w, pos, h, rel)| {
                let head = if h < 0 { Head::Root } else { Head::Token(h as usize) };
                Token::parsed(w, pos, head, rel)
            })
            .collect();
        Sentence::new("d", 0, tokens)
    }

    #[test]
    fn dependency_needs_parse() {
        let s = Sentence::from_tokens("d", 0, "Turing studied");
        let a = annotate(&s, &[group(0, &["studied"])]);
        assert!(matches!(extract_dependency(&a), Err(Error::Mode(_))));
    }

    #[test]
    fn dependency_single_token_and_isolated_mentions() {
        let s = parsed(&[("studied", "VBD", -1, "root")]);
        let a = annotate(&s, &[group(0, &["studied"])]);
        assert!(extract_dependency(&a).unwrap().is_empty());
        // The whole sentence is the mention: no external arcs.
        let s = parsed(&[("big", "JJ", 1, "amod"), ("data", "NN", -1, "root")]);
        let a = annotate(&s, &[group(0, &["big data"])]);
        assert!(extract_dependency(&a).unwrap().is_empty());
    }

    #[test]
    fn dependency_ud_case_collapsing_and_inverse_arcs() {
        // Turing studied at Cambridge (UD style: obl + case)
        let s = parsed(&[
            ("Turing", "NNP", 1, "nsubj"),
            ("studied", "VBD", -1, "root"),
            ("at", "IN", 3, "case"),
            ("Cambridge", "NNP", 1, "obl"),
        ]);
        let g = [group(0, &["studied"]), group(1, &["Turing"]), group(2, &["Cambridge"])];
        let pairs = extract_dependency(&annotate(&s, &g)).unwrap();
        assert_eq!(contexts_of(&pairs, 0), set(&["Turing/nsubj", "Cambridge/prep_at"]));
        assert_eq!(contexts_of(&pairs, 1), set(&["studied/nsubj-1"]));
        assert_eq!(contexts_of(&pairs, 2), set(&["studied/prep_at-1"]));
    }

    #[test]
    fn pair_file_round_trip_replaces_tabs() {
        let pairs = vec![
            pair(GroupId(3), "voice queries", ContextType::Linear),
            pair(GroupId(0), "a\tb", ContextType::Linear),
        ];
        let mut buf = Vec::new();
        write_pairs(&pairs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "3\tvoice queries\n0\ta b\n");
        let back = read_pairs(&buf[..], ContextType::Linear).unwrap();
        assert_eq!(back[0], pairs[0]);
        assert_eq!(back[1].context, "a b");
        assert!(matches!(
            read_pairs(&b"x\ty\n"[..], ContextType::Linear),
            Err(Error::Format { line: 1, .. })
        ));
    }

    #[test]
    fn build_pairs_counts_and_order_independence() {
        let corpus = Corpus::new(vec![
            Sentence::from_tokens("d", 0, "Apple and Orange juice"),
            Sentence::from_tokens("d", 1, "Orange or Lemon soda"),
        ]);
        let g = [group(0, &["Apple"]), group(1, &["Orange"]), group(2, &["Lemon"])];
        let cfg = ContextConfig::default();
        let stream = build_pairs(&corpus, &g, ContextType::Symmetric, &cfg).unwrap();
        assert_eq!(stream.len(), 4);
        assert_eq!(stream.context_counts["Orange"], 2);
        assert_eq!(stream.target_counts[&GroupId(1)], 2);

        let mut reversed = corpus.clone();
        reversed.sentences.reverse();
        let other = build_pairs(&reversed, &g, ContextType::Symmetric, &cfg).unwrap();
        let key = |p: &ContextPair| (p.target, p.context.clone());
        let mut a: Vec<_> = stream.pairs.iter().map(key).collect();
        let mut b: Vec<_> = other.pairs.iter().map(key).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);

        assert!(build_pairs(&Corpus::default(), &g, ContextType::Linear, &cfg)
            .unwrap()
            .is_empty());
        assert!(matches!(
            build_pairs(&corpus, &g, ContextType::Dependency, &cfg),
            Err(Error::Mode(_))
        ));
    }

    #[test]
    fn context_type_parsing() {
        assert_eq!("Unary".parse::<ContextType>().unwrap(), ContextType::Unary);
        assert!("bag".parse::<ContextType>().is_err());
        assert_eq!(ContextType::Dependency.index(), 2);
    }
}
