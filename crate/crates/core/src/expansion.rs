//! Seed-set expansion over one or more context models.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::contexts::ContextType;
use crate::embedding::{self, EmbeddingModel};
use crate::error::{Error, Result};
use crate::mlp::{Features, MlpModel, INPUT_WIDTH};
use crate::termgroup::{GroupId, TermGroup};

pub const DEFAULT_K: usize = 50;
pub const DEFAULT_POOL_SIZE: usize = 500;

/// Trained models keyed by context type; iteration follows feature order.
pub type Models = BTreeMap<ContextType, EmbeddingModel>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub category: String,
    pub ids: BTreeSet<GroupId>,
}

impl SeedSet {
    pub fn new(category: impl Into<String>, ids: impl IntoIterator<Item = GroupId>) -> Result<Self> {
        let seed = SeedSet {
            category: category.into(),
            ids: ids.into_iter().collect(),
        };
        if seed.category.trim().is_empty() {
            return Err(Error::InvalidInput("category name is empty".into()));
        }
        if seed.ids.is_empty() {
            return Err(Error::InvalidInput("seed set is empty".into()));
        }
        Ok(seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    Mlp,
    /// `(1 + mean of available features) / 2`, used when no MLP is trained.
    MeanFeature,
}

impl Scorer {
    pub fn as_str(self) -> &'static str {
        match self {
            Scorer::Mlp => "mlp",
            Scorer::MeanFeature => "mean_feature",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub group_id: GroupId,
    pub features: Features,
    pub certainty: f64,
    pub seed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResult {
    pub seed: SeedSet,
    /// Seeds first, then candidates by certainty descending, ties by id.
    pub candidates: Vec<Candidate>,
    pub validated: BTreeSet<GroupId>,
    pub scorer: Scorer,
}

/// Expansion parameters other than the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpandParams {
    pub k: usize,
    pub pool_size: usize,
}

impl Default for ExpandParams {
    fn default() -> Self {
        ExpandParams {
            k: DEFAULT_K,
            pool_size: DEFAULT_POOL_SIZE,
        }
    }
}

fn missing_ids(ids: impl Iterator<Item = GroupId>) -> String {
    ids.map(|g| g.to_string()).collect::<Vec<_>>().join(", ")
}

/// Centroid of the seeds present in `model`, or `None` when no seed is
/// present or the centroid is the zero vector.
fn seed_centroid(model: &EmbeddingModel, seed: &SeedSet) -> Result<Option<Vec<f64>>> {
    let vectors: Vec<&[f64]> = seed.ids.iter().filter_map(|&g| model.target_vector(g)).collect();
    if vectors.is_empty() {
        return Ok(None);
    }
    let c = embedding::centroid(&vectors)?;
    Ok(c.iter().any(|x| *x != 0.0).then_some(c))
}

/// Nearest neighbours of the seed centroid in a single model.
pub fn expand_simple(model: &EmbeddingModel, seed: &SeedSet, k: usize) -> Result<Vec<(GroupId, f64)>> {
    let missing: Vec<GroupId> = seed.ids.iter().copied().filter(|&g| !model.contains(g)).collect();
    if !missing.is_empty() {
        return Err(Error::NotFound(format!(
            "seed groups not in the {} model vocabulary: {}",
            model.ctype,
            missing_ids(missing.into_iter())
        )));
    }
    let vectors: Vec<&[f64]> = seed.ids.iter().filter_map(|&g| model.target_vector(g)).collect();
    let c = embedding::centroid(&vectors)?;
    embedding::nearest(model, &c, k, &seed.ids)
}

/// Per-candidate features plus which of them were available.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub group_id: GroupId,
    pub features: Features,
    pub available: [bool; INPUT_WIDTH],
}

/// Builds the candidate pool (union of each model's top `pool_size` by
/// centroid cosine) and its feature vectors, ordered by group id.
pub fn score_candidates(models: &Models, seed: &SeedSet, pool_size: usize) -> Result<Vec<ScoredCandidate>> {
    if models.is_empty() {
        return Err(Error::InvalidInput("no context model available".into()));
    }
    let mut centroids: BTreeMap<ContextType, Vec<f64>> = BTreeMap::new();
    let mut any_seed = false;
    for (&ctype, model) in models {
        any_seed |= seed.ids.iter().any(|&g| model.contains(g));
        if let Some(c) = seed_centroid(model, seed)? {
            centroids.insert(ctype, c);
        }
    }
    if !any_seed {
        return Err(Error::NotFound(format!(
            "seed groups {} are absent from every model",
            missing_ids(seed.ids.iter().copied())
        )));
    }
    let mut pool = BTreeSet::new();
    for (ctype, c) in &centroids {
        for (g, _) in embedding::nearest(&models[ctype], c, pool_size, &seed.ids)? {
            pool.insert(g);
        }
    }
    Ok(pool
        .into_iter()
        .map(|g| {
            let mut features = [0.0; INPUT_WIDTH];
            let mut available = [false; INPUT_WIDTH];
            for (ctype, c) in &centroids {
                let Some(v) = models[ctype].target_vector(g) else {
                    continue;
                };
                // A zero row has no direction; it keeps the neutral 0.
                if let Ok(s) = embedding::cosine(c, v) {
                    features[ctype.index()] = s;
                    available[ctype.index()] = true;
                }
            }
            ScoredCandidate {
                group_id: g,
                features,
                available,
            }
        })
        .collect())
}

fn mean_feature_certainty(c: &ScoredCandidate) -> f64 {
    let (sum, n) = c
        .features
        .iter()
        .zip(&c.available)
        .filter(|(_, &a)| a)
        .fold((0.0, 0usize), |(s, n), (f, _)| (s + f, n + 1));
    if n == 0 {
        return 0.5;
    }
    ((1.0 + sum / n as f64) / 2.0).clamp(0.0, 1.0)
}

/// Scores the pool with `mlp` (or the mean-feature fallback) and returns
/// the seeds followed by the top `k` candidates.
pub fn expand(models: &Models, mlp: Option<&MlpModel>, seed: &SeedSet, params: ExpandParams) -> Result<ExpansionResult> {
    let pool = score_candidates(models, seed, params.pool_size)?;
    let mut scored = Vec::with_capacity(pool.len());
    for c in &pool {
        let certainty = match mlp {
            Some(m) => m.forward(&c.features)?,
            None => mean_feature_certainty(c),
        };
        scored.push(Candidate {
            group_id: c.group_id,
            features: c.features,
            certainty,
            seed: false,
        });
    }
    scored.sort_by(|a, b| {
        b.certainty
            .total_cmp(&a.certainty)
            .then_with(|| a.group_id.cmp(&b.group_id))
    });
    scored.truncate(params.k);

    let mut candidates: Vec<Candidate> = seed
        .ids
        .iter()
        .map(|&g| Candidate {
            group_id: g,
            features: seed_features(models, seed, g),
            certainty: 1.0,
            seed: true,
        })
        .collect();
    candidates.extend(scored);
    Ok(ExpansionResult {
        seed: seed.clone(),
        candidates,
        validated: BTreeSet::new(),
        scorer: if mlp.is_some() { Scorer::Mlp } else { Scorer::MeanFeature },
    })
}

/// Seed rows report their own cosine to the seed centroid.
fn seed_features(models: &Models, seed: &SeedSet, g: GroupId) -> Features {
    let mut f = [0.0; INPUT_WIDTH];
    for (ctype, model) in models {
        if let (Ok(Some(c)), Some(v)) = (seed_centroid(model, seed), model.target_vector(g)) {
            f[ctype.index()] = embedding::cosine(&c, v).unwrap_or(0.0);
        }
    }
    f
}

/// Expands again with the accepted groups added to the seed set.
pub fn reexpand(
    result: &ExpansionResult,
    accepted: &BTreeSet<GroupId>,
    models: &Models,
    mlp: Option<&MlpModel>,
    params: ExpandParams,
) -> Result<ExpansionResult> {
    let unknown: Vec<GroupId> = accepted.iter().copied().filter(|g| !result.contains(*g)).collect();
    if !unknown.is_empty() {
        return Err(Error::NotFound(format!(
            "accepted groups not in this expansion: {}",
            missing_ids(unknown.into_iter())
        )));
    }
    let seed = SeedSet {
        category: result.seed.category.clone(),
        ids: result.seed.ids.union(accepted).copied().collect(),
    };
    expand(models, mlp, &seed, params)
}

impl ExpansionResult {
    pub fn contains(&self, g: GroupId) -> bool {
        self.candidates.iter().any(|c| c.group_id == g)
    }

    pub fn set_completed(&mut self, g: GroupId, completed: bool) -> Result<()> {
        if !self.contains(g) {
            return Err(Error::NotFound(format!("group {g} is not part of this expansion")));
        }
        if completed {
            self.validated.insert(g);
        } else {
            self.validated.remove(&g);
        }
        Ok(())
    }

    /// The report shape shared by the CLI and the HTTP API.
    pub fn report(&self, session_id: Option<&str>, groups: &BTreeMap<GroupId, TermGroup>) -> ExpansionReport {
        ExpansionReport {
            session_id: session_id.map(str::to_string),
            category: self.seed.category.clone(),
            scorer: self.scorer,
            items: self
                .candidates
                .iter()
                .map(|c| ReportItem {
                    group_id: c.group_id,
                    canonical: groups.get(&c.group_id).map(|g| g.canonical.clone()).unwrap_or_default(),
                    certainty: c.certainty,
                    seed: c.seed,
                    completed: self.validated.contains(&c.group_id),
                    features: c.features,
                })
                .collect(),
        }
    }

    /// Writes validated items as CSV `canonical,group_id,certainty`, in
    /// result order.
    pub fn export_csv<W: Write>(&self, groups: &BTreeMap<GroupId, TermGroup>, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["canonical", "group_id", "certainty"])?;
        for c in self.candidates.iter().filter(|c| self.validated.contains(&c.group_id)) {
            let canonical = groups.get(&c.group_id).map(|g| g.canonical.as_str()).unwrap_or("");
            out.write_record([canonical, &c.group_id.to_string(), &c.certainty.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub session_id: Option<String>,
    pub category: String,
    pub scorer: Scorer,
    pub items: Vec<ReportItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportItem {
    pub group_id: GroupId,
    pub canonical: String,
    pub certainty: f64,
    pub seed: bool,
    pub completed: bool,
    pub features: Features,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Vocabulary;

    fn model(ctype: ContextType, rows: &[(u32, [f64; 2])]) -> EmbeddingModel {
        EmbeddingModel {
            ctype,
            dim: 2,
            target_vocab: Vocabulary::from_entries(rows.iter().map(|(g, _)| (GroupId(*g), 1))),
            context_vocab: Vocabulary::from_entries([("x".to_string(), 1)]),
            target_matrix: rows.iter().flat_map(|(_, v)| *v).collect(),
            context_matrix: vec![0.0, 0.0],
        }
    }

    fn clustered() -> EmbeddingModel {
        model(
            ContextType::Linear,
            &[
                (0, [1.0, 0.1]),
                (1, [0.9, 0.2]),
                (2, [1.0, 0.3]),
                (3, [0.8, 0.0]),
                (4, [-0.2, 1.0]),
                (5, [0.0, -1.0]),
            ],
        )
    }

    fn seed(ids: &[u32]) -> SeedSet {
        SeedSet::new("c", ids.iter().map(|&i| GroupId(i))).unwrap()
    }

    fn ids(r: &[(GroupId, f64)]) -> Vec<u32> {
        r.iter().map(|(g, _)| g.0).collect()
    }

    #[test]
    fn simple_expansion_ranks_the_cluster_first() {
        let m = clustered();
        let r = expand_simple(&m, &seed(&[0, 1]), 10).unwrap();
        let mut top: Vec<u32> = ids(&r)[..2].to_vec();
        top.sort();
        assert_eq!(top, [2, 3]);
        assert!(expand_simple(&m, &seed(&[0]), 0).unwrap().is_empty());
        let single = expand_simple(&m, &seed(&[4]), 10).unwrap();
        let direct = embedding::nearest(&m, m.target_vector(GroupId(4)).unwrap(), 10, &[GroupId(4)].into()).unwrap();
        assert_eq!(single, direct);
        match expand_simple(&m, &seed(&[0, 9]), 3) {
            Err(Error::NotFound(msg)) => assert!(msg.contains('9')),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_models_give_zero_features() {
        let mut models = Models::new();
        models.insert(ContextType::Linear, clustered());
        models.insert(ContextType::List, model(ContextType::List, &[(0, [1.0, 0.0]), (1, [1.0, 0.5])]));
        let pool = score_candidates(&models, &seed(&[0]), 10).unwrap();
        let c5 = pool.iter().find(|c| c.group_id == GroupId(5)).unwrap();
        assert_eq!(&c5.features[1..], &[0.0; 4]);
        assert!(c5.features[0] != 0.0);
        assert!(score_candidates(&models, &seed(&[0]), 0).unwrap().is_empty());
        assert!(score_candidates(&models, &seed(&[42]), 5).is_err());
        assert!(score_candidates(&Models::new(), &seed(&[0]), 5).is_err());
    }

    #[test]
    fn pool_is_the_union_of_per_model_top_sets() {
        let mut models = Models::new();
        models.insert(ContextType::Linear, model(ContextType::Linear, &[(0, [1.0, 0.0]), (1, [1.0, 0.1]), (2, [-1.0, 0.0])]));
        models.insert(ContextType::Unary, model(ContextType::Unary, &[(0, [1.0, 0.0]), (1, [-1.0, 0.0]), (2, [1.0, 0.1])]));
        let pool: Vec<u32> = score_candidates(&models, &seed(&[0]), 1)
            .unwrap()
            .iter()
            .map(|c| c.group_id.0)
            .collect();
        assert_eq!(pool, [1, 2]);
    }

    #[test]
    fn seeds_lead_with_certainty_one() {
        let mut models = Models::new();
        models.insert(ContextType::Linear, clustered());
        let r = expand(&models, None, &seed(&[0, 1]), ExpandParams::default()).unwrap();
        assert_eq!(r.scorer, Scorer::MeanFeature);
        assert!(r.candidates[..2].iter().all(|c| c.seed && c.certainty == 1.0));
        assert!(r.candidates[2..].iter().all(|c| !c.seed && c.certainty < 1.0));
        assert_eq!(r.candidates.len(), 6);
        for w in r.candidates[2..].windows(2) {
            assert!(w[0].certainty >= w[1].certainty);
        }
    }

    #[test]
    fn zero_mlp_falls_back_to_id_order() {
        let mut models = Models::new();
        models.insert(ContextType::Linear, clustered());
        let mlp = MlpModel::zeros(8);
        let r = expand(&models, Some(&mlp), &seed(&[3]), ExpandParams::default()).unwrap();
        assert_eq!(r.scorer, Scorer::Mlp);
        let rest: Vec<u32> = r.candidates[1..].iter().map(|c| c.group_id.0).collect();
        assert_eq!(rest, [0, 1, 2, 4, 5]);
        assert!(r.candidates[1..].iter().all(|c| c.certainty == 0.5));
    }

    #[test]
    fn reexpand_adds_accepted_seeds() {
        let mut models = Models::new();
        models.insert(ContextType::Linear, clustered());
        let p = ExpandParams::default();
        let first = expand(&models, None, &seed(&[0]), p).unwrap();
        assert_eq!(reexpand(&first, &BTreeSet::new(), &models, None, p).unwrap(), first);
        let next = reexpand(&first, &[GroupId(2)].into(), &models, None, p).unwrap();
        assert!(next.candidates.iter().any(|c| c.group_id == GroupId(2) && c.seed && c.certainty == 1.0));
        assert!(next.seed.ids.contains(&GroupId(0)));
        assert_eq!(next.seed.category, "c");
        assert!(reexpand(&first, &[GroupId(77)].into(), &models, None, p).is_err());
    }

    #[test]
    fn validation_and_export() {
        let mut models = Models::new();
        models.insert(ContextType::Linear, clustered());
        let mut r = expand(&models, None, &seed(&[0]), ExpandParams { k: 2, pool_size: 10 }).unwrap();
        let groups: BTreeMap<GroupId, TermGroup> = (0..6)
            .map(|i| {
                let g = TermGroup::new(GroupId(i), vec![crate::termgroup::Term::new(format!("t{i}"), 1)]);
                (g.id, g)
            })
            .collect();
        let second = r.candidates[1].group_id;
        r.set_completed(GroupId(0), true).unwrap();
        r.set_completed(second, true).unwrap();
        assert!(r.set_completed(GroupId(5), true).is_err() || r.contains(GroupId(5)));
        let mut buf = Vec::new();
        r.export_csv(&groups, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "canonical,group_id,certainty");
        assert_eq!(lines[1], "t0,0,1");
        assert!(lines[2].starts_with(&format!("t{},{},", second.0, second.0)));
        let report = r.report(Some("s1"), &groups);
        assert!(report.items[0].completed && report.items[0].seed);
        r.set_completed(GroupId(0), false).unwrap();
        assert!(!r.validated.contains(&GroupId(0)));
    }
}
