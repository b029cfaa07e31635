//! Corpus to trained models: candidate extraction, grouping and one
//! embedding per requested context type.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use termset_core::contexts::{build_pairs, ContextConfig};
use termset_core::corpus::{extract_candidates, ChunkMode};
use termset_core::embedding::{train_sgns, Progress};
use termset_core::expansion::Models;
use termset_core::stopwords::Stopwords;
use termset_core::termgroup::{group_terms, AbbreviationLexicon, GroupConfig, SurfaceEmbedding};
use termset_core::{ContextType, Corpus, Result, Term, TermGroup, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    pub contexts: Vec<ContextType>,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub group_config: Option<GroupConfig>,
    #[serde(default)]
    pub context_config: Option<ContextConfig>,
    /// Merge same-head multiword terms whose surface embeddings are close.
    #[serde(default = "default_true")]
    pub aux_similarity: bool,
    /// Candidates seen fewer times are not turned into terms.
    #[serde(default = "default_min_term_frequency")]
    pub min_term_frequency: u64,
}

fn default_true() -> bool {
    true
}

fn default_min_term_frequency() -> u64 {
    1
}

impl TrainRequest {
    pub fn new(contexts: Vec<ContextType>) -> Self {
        TrainRequest {
            contexts,
            train_config: None,
            group_config: None,
            context_config: None,
            aux_similarity: true,
            min_term_frequency: 1,
        }
    }
}

/// Fully resolved settings of a training run, as recorded in the project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub contexts: Vec<ContextType>,
    pub train_config: TrainConfig,
    pub group_config: GroupConfig,
    pub context_config: ContextConfig,
    pub aux_similarity: bool,
    pub min_term_frequency: u64,
}

impl TrainSettings {
    pub fn resolve(req: &TrainRequest, default_train: &TrainConfig) -> Self {
        let mut contexts = req.contexts.clone();
        contexts.sort();
        contexts.dedup();
        TrainSettings {
            contexts,
            train_config: req.train_config.clone().unwrap_or_else(|| default_train.clone()),
            group_config: req.group_config.unwrap_or_default(),
            context_config: req.context_config.clone().unwrap_or_default(),
            aux_similarity: req.aux_similarity,
            min_term_frequency: req.min_term_frequency,
        }
    }
}

pub struct Trained {
    pub groups: Vec<TermGroup>,
    pub models: Models,
}

/// Counts candidate surfaces: POS chunks for tagged sentences, n-grams
/// otherwise.
pub fn collect_terms(corpus: &Corpus, stopwords: &Stopwords, min_frequency: u64) -> Result<Vec<Term>> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for s in &corpus.sentences {
        let mode = if s.is_tagged() {
            ChunkMode::PosChunk
        } else {
            ChunkMode::Ngram
        };
        for span in extract_candidates(s, mode, stopwords)? {
            *counts.entry(span.surface).or_default() += 1;
        }
    }
    Ok(counts
        .into_iter()
        .filter(|&(_, n)| n >= min_frequency.max(1))
        .map(|(s, n)| Term::new(s, n))
        .collect())
}

/// Runs the whole training pipeline. `progress` receives a fraction in
/// [0, 1] and a short stage description.
pub fn run_training(
    corpus: &Corpus,
    settings: &TrainSettings,
    lexicon: &AbbreviationLexicon,
    progress: &mut dyn FnMut(f64, &str),
) -> Result<Trained> {
    if settings.contexts.is_empty() {
        return Err(termset_core::Error::InvalidInput("no context types requested".into()));
    }
    if corpus.is_empty() {
        return Err(termset_core::Error::InvalidInput("the corpus is empty".into()));
    }
    let ctx = &settings.context_config;
    progress(0.0, "extracting candidates");
    let terms = collect_terms(corpus, &ctx.stopwords, settings.min_term_frequency)?;
    if terms.is_empty() {
        return Err(termset_core::Error::Training("no candidate terms found".into()));
    }

    let aux = if settings.aux_similarity {
        progress(0.05, "training surface embedding");
        match SurfaceEmbedding::train(corpus, &terms, ctx, &settings.train_config) {
            Ok(a) => Some(a),
            // Too little data for the auxiliary model; group without it.
            Err(termset_core::Error::Training(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    progress(0.2, "grouping terms");
    let groups = group_terms(&terms, aux.as_ref(), lexicon, &settings.group_config)?;

    let mut models = Models::new();
    let share = 0.75 / settings.contexts.len() as f64;
    for (i, &ctype) in settings.contexts.iter().enumerate() {
        let base = 0.25 + share * i as f64;
        progress(base, &format!("extracting {ctype} contexts"));
        let stream = build_pairs(corpus, &groups, ctype, ctx)?;
        let epochs = settings.train_config.epochs.max(1) as f64;
        let mut epoch = 0;
        let mut report = |p: Progress| {
            epoch += 1;
            progress(
                base + share * epoch as f64 / epochs,
                &format!("training {ctype}: {p}"),
            );
        };
        let model = train_sgns(&stream.pairs, ctype, &settings.train_config, Some(&mut report))?;
        models.insert(ctype, model);
    }
    progress(1.0, "done");
    Ok(Trained { groups, models })
}
