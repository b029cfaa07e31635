//! Grouping of surface variants into term groups.
//!
//! Two terms are merged when their normalized forms are equal, when one is
//! an abbreviation of the other, when they are within a small edit distance,
//! or when an auxiliary surface-level embedding finds them similar. Groups
//! are the transitive closure of that predicate.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contexts::{self, ContextConfig, ContextType};
use crate::corpus::Corpus;
use crate::embedding::{self, EmbeddingModel, TrainConfig};
use crate::error::{Error, Result};

/// Identifier of a term group. Ids are dense and ordered by descending
/// group frequency.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct GroupId(pub u32);

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for GroupId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(GroupId)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub surface: String,
    pub frequency: u64,
}

impl Term {
    pub fn new(surface: impl Into<String>, frequency: u64) -> Self {
        Term {
            surface: surface.into(),
            frequency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermGroup {
    pub id: GroupId,
    pub canonical: String,
    /// Sorted by surface.
    pub members: Vec<Term>,
    pub frequency: u64,
}

impl TermGroup {
    /// Builds a group; the canonical form is the most frequent member,
    /// ties broken by the lexicographically smallest surface.
    pub fn new(id: GroupId, mut members: Vec<Term>) -> Self {
        members.sort_by(|a, b| a.surface.cmp(&b.surface));
        let canonical = members
            .iter()
            .min_by(|a, b| {
                b.frequency
                    .cmp(&a.frequency)
                    .then_with(|| a.surface.cmp(&b.surface))
            })
            .map(|t| t.surface.clone())
            .unwrap_or_default();
        let frequency = members.iter().map(|t| t.frequency).sum();
        TermGroup {
            id,
            canonical,
            members,
            frequency,
        }
    }

    /// Case-insensitive substring match on the canonical form and members.
    pub fn matches_filter(&self, needle: &str) -> bool {
        let needle = needle.to_lowercase();
        self.canonical.to_lowercase().contains(&needle)
            || self
                .members
                .iter()
                .any(|m| m.surface.to_lowercase().contains(&needle))
    }

    /// Case-insensitive member lookup.
    pub fn has_member(&self, surface: &str) -> bool {
        let surface = surface.to_lowercase();
        self.members.iter().any(|m| m.surface.to_lowercase() == surface)
    }
}

/// Writes `groups.jsonl`: one `{id, canonical, members:[{surface, frequency}]}`
/// record per line.
pub fn write_groups<W: Write>(groups: &[TermGroup], mut w: W) -> Result<()> {
    #[derive(Serialize)]
    struct Record<'a> {
        id: GroupId,
        canonical: &'a str,
        members: &'a [Term],
    }
    for g in groups {
        serde_json::to_writer(
            &mut w,
            &Record {
                id: g.id,
                canonical: &g.canonical,
                members: &g.members,
            },
        )?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_groups<R: BufRead>(r: R) -> Result<Vec<TermGroup>> {
    #[derive(Deserialize)]
    struct Record {
        id: GroupId,
        canonical: String,
        members: Vec<Term>,
    }
    let mut groups = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Format {
            line: i + 1,
            message,
        };
        let rec: Record = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if rec.members.is_empty() {
            return Err(bad("group without members".into()));
        }
        let mut g = TermGroup::new(rec.id, rec.members);
        // The stored canonical wins; it must name a member.
        if !g.members.iter().any(|m| m.surface == rec.canonical) {
            return Err(bad(format!("canonical {:?} is not a member", rec.canonical)));
        }
        g.canonical = rec.canonical;
        groups.push(g);
    }
    Ok(groups)
}

/// Lowercases, turns hyphens and underscores into spaces, drops all other
/// punctuation and collapses whitespace.
pub fn normalize(surface: &str) -> String {
    let mut out = String::with_capacity(surface.len());
    let mut pending_space = false;
    for c in surface.chars() {
        if c.is_whitespace() || c == '-' || c == '_' {
            pending_space = true;
        } else if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Abbreviation to expansions, keyed and valued by normalized strings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AbbreviationLexicon {
    entries: HashMap<String, BTreeSet<String>>,
}

const SHIPPED_LEXICON: &str = include_str!("../data/abbreviations.json");

impl AbbreviationLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// The lexicon in `data/abbreviations.json`.
    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_LEXICON).expect("shipped lexicon is valid JSON")
    }

    /// Parses a JSON object mapping abbreviations to lists of expansions.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        let mut lex = Self::new();
        for (abbr, expansions) in raw {
            for e in expansions {
                lex.insert(&abbr, &e);
            }
        }
        Ok(lex)
    }

    pub fn insert(&mut self, abbreviation: &str, expansion: &str) {
        self.entries
            .entry(normalize(abbreviation))
            .or_default()
            .insert(normalize(expansion));
    }

    pub fn expansions(&self, abbreviation: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(&normalize(abbreviation))
    }

    fn expansions_normalized(&self, key: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// First letters of the words of an already normalized string.
fn initials(normalized: &str) -> String {
    normalized
        .split(' ')
        .filter_map(|w| w.chars().next())
        .collect()
}

fn initials_match(na: &str, nb: &str) -> bool {
    let check = |short: &str, long: &str| {
        let init = initials(long);
        long.contains(' ') && init.chars().count() >= 2 && short == init
    };
    check(na, nb) || check(nb, na)
}

/// True when either string is a lexicon abbreviation of the other or equals
/// the initials of the other's words.
pub fn abbreviation_match(a: &str, b: &str, lexicon: &AbbreviationLexicon) -> bool {
    let na = normalize(a);
    let nb = normalize(b);
    let listed = |x: &str, y: &str| {
        lexicon
            .expansions_normalized(x)
            .is_some_and(|e| e.contains(y))
    };
    listed(&na, &nb) || listed(&nb, &na) || initials_match(&na, &nb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupConfig {
    pub max_edit_ratio: f64,
    pub sim_threshold: f64,
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig {
            max_edit_ratio: 0.2,
            sim_threshold: 0.7,
        }
    }
}

/// An embedding over raw term surfaces, used for similarity-based merging
/// before groups exist.
#[derive(Debug, Clone)]
pub struct SurfaceEmbedding {
    pub model: EmbeddingModel,
    ids: HashMap<String, GroupId>,
}

impl SurfaceEmbedding {
    /// `ids` maps each surface to its target unit in `model`.
    pub fn new(model: EmbeddingModel, ids: HashMap<String, GroupId>) -> Self {
        SurfaceEmbedding { model, ids }
    }

    /// Trains a linear-context model in which every term surface is its own
    /// unit.
    pub fn train(
        corpus: &Corpus,
        terms: &[Term],
        context: &ContextConfig,
        train: &TrainConfig,
    ) -> Result<Self> {
        let mut sorted: Vec<&Term> = terms.iter().collect();
        sorted.sort_by(|a, b| a.surface.cmp(&b.surface));
        let singletons: Vec<TermGroup> = sorted
            .iter()
            .enumerate()
            .map(|(i, t)| TermGroup::new(GroupId(i as u32), vec![(*t).clone()]))
            .collect();
        let ids = singletons
            .iter()
            .map(|g| (g.canonical.clone(), g.id))
            .collect();
        let stream = contexts::build_pairs(corpus, &singletons, ContextType::Linear, context)?;
        let model = embedding::train_sgns(&stream.pairs, ContextType::Linear, train, None)?;
        Ok(SurfaceEmbedding { model, ids })
    }

    pub fn similarity(&self, a: &str, b: &str) -> Option<f64> {
        let va = self.model.target_vector(*self.ids.get(a)?)?;
        let vb = self.model.target_vector(*self.ids.get(b)?)?;
        embedding::cosine(va, vb).ok()
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so the structure is input-order independent
            // up to relabeling.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn head_word(normalized: &str) -> &str {
    normalized.rsplit(' ').next().unwrap_or("")
}

/// The head-word guard: multiword comparisons need equal last words.
fn heads_compatible(na: &str, nb: &str) -> bool {
    if !na.contains(' ') && !nb.contains(' ') {
        return true;
    }
    head_word(na) == head_word(nb)
}

/// Edit-distance predicate on normalized strings.
pub fn edit_match(na: &str, nb: &str, max_edit_ratio: f64) -> bool {
    if !heads_compatible(na, nb) {
        return false;
    }
    let (la, lb) = (na.chars().count(), nb.chars().count());
    let bound = (max_edit_ratio * la.min(lb) as f64).floor() as usize;
    la.abs_diff(lb) <= bound && edit_distance(na, nb) <= bound
}

/// Partitions `terms` into groups: union-find closure over the merge
/// predicate, ids assigned by descending frequency then canonical string.
pub fn group_terms(
    terms: &[Term],
    aux: Option<&SurfaceEmbedding>,
    lexicon: &AbbreviationLexicon,
    config: &GroupConfig,
) -> Result<Vec<TermGroup>> {
    let mut seen = BTreeSet::new();
    for t in terms {
        if !seen.insert(t.surface.as_str()) {
            return Err(Error::InvalidInput(format!(
                "duplicate term surface {:?}",
                t.surface
            )));
        }
    }
    let norm: Vec<String> = terms.iter().map(|t| normalize(&t.surface)).collect();
    let mut sets = DisjointSets::new(terms.len());

    let mut by_norm: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, n) in norm.iter().enumerate() {
        by_norm.entry(n.as_str()).or_default().push(i);
    }
    // Equal normalized forms.
    for members in by_norm.values() {
        for &j in &members[1..] {
            sets.union(members[0], j);
        }
    }
    // Abbreviations: lexicon entries and initials.
    for (i, n) in norm.iter().enumerate() {
        if let Some(expansions) = lexicon.expansions_normalized(n) {
            for e in expansions {
                for &j in by_norm.get(e.as_str()).into_iter().flatten() {
                    sets.union(i, j);
                }
            }
        }
        if n.contains(' ') {
            let init = initials(n);
            if init.chars().count() >= 2 {
                for &j in by_norm.get(init.as_str()).into_iter().flatten() {
                    sets.union(i, j);
                }
            }
        }
    }
    // Edit distance and embedding similarity, both only between terms whose
    // head words are compatible. Single-word terms are all compatible for
    // edit distance; the embedding test keeps the strict head-word rule.
    let mut by_head: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, n) in norm.iter().enumerate() {
        by_head.entry(head_word(n)).or_default().push(i);
    }
    let singles: Vec<usize> = (0..terms.len()).filter(|&i| !norm[i].contains(' ')).collect();
    let check_edit = |a: usize, b: usize, sets: &mut DisjointSets| {
        if norm[a] != norm[b] && edit_match(&norm[a], &norm[b], config.max_edit_ratio) {
            sets.union(a, b);
        }
    };
    for members in by_head.values() {
        for (x, &a) in members.iter().enumerate() {
            for &b in &members[x + 1..] {
                check_edit(a, b, &mut sets);
            }
        }
    }
    for (x, &a) in singles.iter().enumerate() {
        for &b in &singles[x + 1..] {
            if head_word(&norm[a]) != head_word(&norm[b]) {
                check_edit(a, b, &mut sets);
            }
        }
    }
    if let Some(aux) = aux {
        for members in by_head.values() {
            for (x, &a) in members.iter().enumerate() {
                for &b in &members[x + 1..] {
                    let sim = aux.similarity(&terms[a].surface, &terms[b].surface);
                    if sim.is_some_and(|s| s >= config.sim_threshold) {
                        sets.union(a, b);
                    }
                }
            }
        }
    }

    let mut clusters: BTreeMap<usize, Vec<Term>> = BTreeMap::new();
    for (i, t) in terms.iter().enumerate() {
        clusters.entry(sets.find(i)).or_default().push(t.clone());
    }
    let mut groups: Vec<TermGroup> = clusters
        .into_values()
        .map(|members| TermGroup::new(GroupId(0), members))
        .collect();
    groups.sort_by(|a, b| {
        b.frequency
            .cmp(&a.frequency)
            .then_with(|| a.canonical.cmp(&b.canonical))
    });
    for (i, g) in groups.iter_mut().enumerate() {
        g.id = GroupId(i as u32);
    }
    Ok(groups)
}
