//! Template-generated corpora: the planted-class benchmark and the bundled
//! toy corpus. Sentences come out tagged and parsed, so every context type
//! can be trained on them.
//!
//! A template is a space-separated list of `surface|POS|head|deprel` tokens
//! and `{N}|head|deprel` slots, where `head` is the 1-based template
//! position of the governor (0 for the root). A slot is filled with a term
//! whose last word heads the others as `compound`.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Head, Sentence, Token};
use crate::eval::GoldCategory;
use crate::termgroup::{edit_distance, normalize};

enum Part<'a> {
    Word {
        surface: &'a str,
        pos: &'a str,
        head: usize,
        deprel: &'a str,
    },
    Slot {
        slot: usize,
        head: usize,
        deprel: &'a str,
    },
}

fn parse_template(template: &str) -> Vec<Part<'_>> {
    template
        .split(' ')
        .map(|part| {
            let f: Vec<&str> = part.split('|').collect();
            if let Some(slot) = f[0].strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
                assert_eq!(f.len(), 3, "bad slot {part:?}");
                Part::Slot {
                    slot: slot.parse().expect("slot number"),
                    head: f[1].parse().expect("slot head"),
                    deprel: f[2],
                }
            } else {
                assert_eq!(f.len(), 4, "bad token {part:?}");
                Part::Word {
                    surface: f[0],
                    pos: f[1],
                    head: f[2].parse().expect("token head"),
                    deprel: f[3],
                }
            }
        })
        .collect()
}

fn term_pos(word: &str) -> &'static str {
    if word.chars().next().is_some_and(char::is_uppercase) {
        "NNP"
    } else {
        "NN"
    }
}

/// Fills `template` with `terms` (slot `{i}` takes `terms[i]`).
pub fn render(template: &str, terms: &[&str], doc_id: &str, sent_index: usize) -> Sentence {
    let parts = parse_template(template);
    // Output index of each part's syntactic head token.
    let mut anchor = Vec::with_capacity(parts.len());
    let mut next = 0;
    for p in &parts {
        let width = match p {
            Part::Word { .. } => 1,
            Part::Slot { slot, .. } => terms[*slot].split(' ').count(),
        };
        anchor.push(next + width - 1);
        next += width;
    }
    let resolve = |head: usize| {
        if head == 0 {
            Head::Root
        } else {
            Head::Token(anchor[head - 1])
        }
    };
    let mut tokens = Vec::with_capacity(next);
    for p in &parts {
        match *p {
            Part::Word {
                surface,
                pos,
                head,
                deprel,
            } => tokens.push(Token::parsed(surface, pos, resolve(head), deprel)),
            Part::Slot { slot, head, deprel } => {
                let words: Vec<&str> = terms[slot].split(' ').collect();
                let last = tokens.len() + words.len() - 1;
                for (i, w) in words.iter().enumerate() {
                    if i + 1 == words.len() {
                        tokens.push(Token::parsed(*w, term_pos(w), resolve(head), deprel));
                    } else {
                        tokens.push(Token::parsed(*w, term_pos(w), Head::Token(last), "compound"));
                    }
                }
            }
        }
    }
    Sentence::new(doc_id, sent_index, tokens)
}

const LIST3: &str = "we|PRP|2|nsubj compared|VBD|0|root {0}|2|obj ,|,|5|punct {1}|3|conj and|CC|7|cc {2}|3|conj .|.|2|punct";
const LIST4: &str = "they|PRP|2|nsubj listed|VBD|0|root {0}|2|obj ,|,|5|punct {1}|3|conj ,|,|7|punct {2}|3|conj or|CC|9|cc {3}|3|conj .|.|2|punct";
const GENERIC: [&str; 4] = [
    "the|DT|2|det {0}|3|nsubj was|VBD|0|root mentioned|VBN|3|xcomp again|RB|4|advmod .|.|3|punct",
    "they|PRP|2|nsubj noticed|VBD|0|root the|DT|4|det {0}|2|obj yesterday|RB|2|advmod .|.|2|punct",
    "we|PRP|2|nsubj discussed|VBD|0|root {0}|2|obj twice|RB|2|advmod .|.|2|punct",
    "it|PRP|2|nsubj was|VBD|0|root about|IN|4|case {0}|2|obl mostly|RB|2|advmod .|.|2|punct",
];

/// A generated benchmark: sentences plus the planted classes.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub sentences: Vec<Sentence>,
    pub classes: Vec<(String, Vec<String>)>,
    pub distractors: Vec<String>,
}

impl PlantedCorpus {
    /// One category per class, seeded with its first `seeds` terms.
    pub fn dataset(&self, seeds: usize) -> Vec<GoldCategory> {
        self.classes
            .iter()
            .map(|(name, terms)| GoldCategory {
                name: name.clone(),
                gold: terms.clone(),
                seeds: terms[..seeds].to_vec(),
            })
            .collect()
    }
}

const PLANTED: [(&str, [&str; 10], [&str; 3]); 3] = [
    (
        "fruit",
        ["apple", "banana", "cherry", "mango", "papaya", "grape", "lemon", "peach", "plum", "melon"],
        [
            "she|PRP|2|nsubj peeled|VBD|0|root a|DT|4|det {0}|2|obj carefully|RB|2|advmod .|.|2|punct",
            "grandma|NN|2|nsubj baked|VBD|0|root with|IN|4|case {0}|2|obl today|RB|2|advmod .|.|2|punct",
            "they|PRP|2|nsubj harvested|VBD|0|root {0}|2|obj from|IN|5|case orchards|NNS|2|obl .|.|2|punct",
        ],
    ),
    (
        "language",
        ["java", "python", "ruby", "perl", "haskell", "erlang", "scala", "kotlin", "fortran", "cobol"],
        [
            "he|PRP|2|nsubj compiled|VBD|0|root programs|NNS|2|obj written|VBN|3|acl in|IN|6|case {0}|4|obl .|.|2|punct",
            "our|PRP$|2|nmod:poss team|NN|3|nsubj codes|VBZ|0|root in|IN|5|case {0}|3|obl daily|RB|3|advmod .|.|3|punct",
            "she|PRP|2|nsubj debugged|VBD|0|root code|NN|2|obj in|IN|5|case {0}|2|obl quickly|RB|2|advmod .|.|2|punct",
        ],
    ),
    (
        "animal",
        ["tiger", "zebra", "otter", "beaver", "badger", "falcon", "heron", "lizard", "panda", "rabbit"],
        [
            "rangers|NNS|2|nsubj tracked|VBD|0|root a|DT|4|det {0}|2|obj overnight|RB|2|advmod .|.|2|punct",
            "the|DT|2|det zoo|NN|3|nsubj fed|VBD|0|root its|PRP$|5|nmod:poss {0}|3|obj twice|RB|3|advmod .|.|3|punct",
            "we|PRP|2|nsubj photographed|VBD|0|root {0}|2|obj in|IN|5|case habitats|NNS|2|obl .|.|2|punct",
        ],
    ),
];

const SYLLABLES: [&str; 20] = [
    "ba", "ko", "ri", "te", "mu", "sa", "ve", "lo", "di", "nu", "pa", "ge", "fo", "zi", "ha", "wu", "ne", "ro", "xi", "ju",
];

/// Pseudo-words that are pairwise at edit distance ≥ 2 from each other and
/// from every word in `avoid`.
fn pseudo_words(n: usize, rng: &mut impl Rng, avoid: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(n);
    while out.len() < n {
        let w: String = (0..3).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        let far = |o: &str| edit_distance(&w, o) >= 2;
        if out.iter().all(|o| far(o)) && avoid.iter().all(|o| far(o)) {
            out.push(w);
        }
    }
    out
}

/// The planted-class benchmark corpus: three classes of ten terms that
/// share lists and class-specific patterns, plus `distractors` unrelated
/// terms in generic sentences. Class terms also appear in generic
/// sentences as noise.
pub fn planted_corpus(seed: u64, sentences: usize, distractors: usize) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all_terms: Vec<&str> = PLANTED.iter().flat_map(|(_, t, _)| t.iter().copied()).collect();
    let noise = pseudo_words(distractors, &mut rng, &all_terms);
    let mut out = Vec::with_capacity(sentences);
    for i in 0..sentences {
        let doc = format!("planted{}", i / 50);
        let idx = i % 50;
        let roll: f64 = rng.gen();
        let s = if roll < 0.35 {
            let (_, terms, _) = PLANTED.choose(&mut rng).unwrap();
            let (tpl, n) = if rng.gen_bool(0.5) { (LIST3, 3) } else { (LIST4, 4) };
            let picked: Vec<&str> = terms.choose_multiple(&mut rng, n).copied().collect();
            render(tpl, &picked, &doc, idx)
        } else if roll < 0.65 {
            let (_, terms, patterns) = PLANTED.choose(&mut rng).unwrap();
            let term = terms.choose(&mut rng).unwrap();
            render(patterns.choose(&mut rng).unwrap(), &[term], &doc, idx)
        } else if roll < 0.75 && !noise.is_empty() {
            let n = if rng.gen_bool(0.5) { 3 } else { 4 };
            let picked: Vec<&str> = noise.choose_multiple(&mut rng, n).map(String::as_str).collect();
            render(if n == 3 { LIST3 } else { LIST4 }, &picked, &doc, idx)
        } else {
            let term: &str = if rng.gen_bool(0.25) || noise.is_empty() {
                all_terms.choose(&mut rng).unwrap()
            } else {
                noise.choose(&mut rng).unwrap()
            };
            render(GENERIC.choose(&mut rng).unwrap(), &[term], &doc, idx)
        };
        out.push(s);
    }
    PlantedCorpus {
        sentences: out,
        classes: PLANTED
            .iter()
            .map(|(name, terms, _)| (name.to_string(), terms.iter().map(|t| t.to_string()).collect()))
            .collect(),
        distractors: noise,
    }
}

const TOY: [(&str, &[&str], &[&str]); 4] = [
    (
        "programming languages",
        &[
            "java", "python", "Python", "ruby", "perl", "haskell", "scala", "kotlin", "JavaScript", "JS", "erlang", "rust",
        ],
        &[
            "i|PRP|2|nsubj write|VBP|0|root most|JJS|4|amod code|NN|2|obj in|IN|6|case {0}|2|obl .|.|2|punct",
            "{0}|2|nsubj is|VBZ|0|root a|DT|5|det programming|NN|5|compound language|NN|2|attr .|.|2|punct",
            "she|PRP|2|nsubj ported|VBD|0|root the|DT|4|det compiler|NN|2|obj to|IN|6|case {0}|2|obl .|.|2|punct",
            "the|DT|2|det {0}|3|nsubj interpreter|VBZ|0|root crashed|VBN|3|xcomp again|RB|4|advmod .|.|3|punct",
        ],
    ),
    (
        "cities",
        &[
            "New York", "New-York", "NY", "New York City", "NYC", "London", "Paris", "Berlin", "Tokyo", "Boston", "Chicago",
            "Madrid",
        ],
        &[
            "we|PRP|2|nsubj moved|VBD|0|root to|IN|4|case {0}|2|obl last|JJ|6|amod year|NN|2|obl:tmod .|.|2|punct",
            "the|DT|2|det flight|NN|5|nsubj to|IN|4|case {0}|2|nmod was|VBD|0|root late|RB|5|advmod .|.|5|punct",
            "i|PRP|2|nsubj love|VBP|0|root {0}|2|obj .|.|2|punct",
            "rents|NNS|4|nsubj in|IN|3|case {0}|1|nmod keep|VBP|0|root rising|VBG|4|xcomp .|.|4|punct",
        ],
    ),
    (
        "databases",
        &["mysql", "postgres", "sqlite", "oracle", "mongodb", "redis", "cassandra", "mariadb"],
        &[
            "we|PRP|2|nsubj store|VBP|0|root records|NNS|2|obj in|IN|5|case {0}|2|obl .|.|2|punct",
            "the|DT|2|det {0}|4|nsubj cluster|VBZ|4|dep replicates|VBZ|0|root nightly|RB|4|advmod .|.|4|punct",
            "they|PRP|2|nsubj migrated|VBD|0|root from|IN|4|case {0}|2|obl .|.|2|punct",
        ],
    ),
    (
        "frameworks",
        &["django", "rails", "spring", "flask", "react", "angular", "laravel"],
        &[
            "our|PRP$|2|nmod:poss app|NN|3|nsubj uses|VBZ|0|root {0}|3|obj for|IN|6|case routing|NN|3|obl .|.|3|punct",
            "he|PRP|2|nsubj upgraded|VBD|0|root {0}|2|obj yesterday|RB|2|advmod .|.|2|punct",
            "templates|NNS|5|nsubj in|IN|3|case {0}|1|nmod are|VBP|5|cop easy|JJ|0|root .|.|5|punct",
        ],
    ),
];

const PAIR: &str = "should|MD|3|aux i|PRP|3|nsubj learn|VB|0|root {0}|3|obj or|CC|6|cc {1}|4|conj ?|.|3|punct";

/// The bundled toy corpus: four small categories (programming languages,
/// cities including the New York variants, databases, web frameworks).
pub fn toy_corpus(seed: u64, sentences: usize) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(sentences);
    for i in 0..sentences {
        let doc = format!("toy{}", i / 40);
        let idx = i % 40;
        let (_, terms, patterns) = TOY.choose(&mut rng).unwrap();
        let roll: f64 = rng.gen();
        let s = if roll < 0.3 {
            let (tpl, n) = if rng.gen_bool(0.5) { (LIST3, 3) } else { (LIST4, 4) };
            let picked: Vec<&str> = terms.choose_multiple(&mut rng, n).copied().collect();
            render(tpl, &picked, &doc, idx)
        } else if roll < 0.4 {
            let picked: Vec<&str> = terms.choose_multiple(&mut rng, 2).copied().collect();
            render(PAIR, &picked, &doc, idx)
        } else if roll < 0.9 {
            render(patterns.choose(&mut rng).unwrap(), &[terms.choose(&mut rng).unwrap()], &doc, idx)
        } else {
            render(GENERIC.choose(&mut rng).unwrap(), &[terms.choose(&mut rng).unwrap()], &doc, idx)
        };
        out.push(s);
    }
    out
}

/// Distinct normalized forms of every toy term.
pub fn toy_terms() -> BTreeSet<String> {
    TOY.iter().flat_map(|(_, t, _)| t.iter().map(|s| normalize(s))).collect()
}

pub const TOY_SEED: u64 = 7;
pub const TOY_SENTENCES: usize = 1200;
