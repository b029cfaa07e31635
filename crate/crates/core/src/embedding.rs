//! Skip-gram negative-sampling embeddings over arbitrary
//! `(target, context)` pairs, plus similarity queries.
//!
//! Targets are term groups; contexts are opaque strings produced by the
//! context extractors. Training follows the classic word2vec recipe:
//! uniform target initialization, zero context initialization, a 0.75-power
//! unigram table for negatives, frequent-context subsampling and a linearly
//! decaying learning rate. Everything runs in double precision.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::hash::Hash;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contexts::{ContextPair, ContextType};
use crate::error::{Error, Result};
use crate::termgroup::GroupId;

/// Dense index over units, ordered by descending count then by unit.
#[derive(Debug, Clone)]
pub struct Vocabulary<T> {
    units: Vec<T>,
    counts: Vec<u64>,
    index: HashMap<T, usize>,
}

impl<T: PartialEq> PartialEq for Vocabulary<T> {
    fn eq(&self, other: &Self) -> bool {
        self.units == other.units && self.counts == other.counts
    }
}

impl<T: Clone + Ord + Hash> Vocabulary<T> {
    pub fn from_counts(counts: &BTreeMap<T, u64>, min_count: u64) -> Self {
        let mut entries: Vec<(&T, u64)> = counts
            .iter()
            .filter(|(_, &n)| n >= min_count)
            .map(|(u, &n)| (u, n))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_entries(entries.into_iter().map(|(u, n)| (u.clone(), n)))
    }

    /// Keeps the given order.
    pub fn from_entries(entries: impl IntoIterator<Item = (T, u64)>) -> Self {
        let mut vocab = Vocabulary {
            units: Vec::new(),
            counts: Vec::new(),
            index: HashMap::new(),
        };
        for (unit, count) in entries {
            vocab.index.insert(unit.clone(), vocab.units.len());
            vocab.units.push(unit);
            vocab.counts.push(count);
        }
        vocab
    }

    pub fn get(&self, unit: &T) -> Option<usize> {
        self.index.get(unit).copied()
    }

    pub fn unit(&self, idx: usize) -> &T {
        &self.units[idx]
    }

    pub fn units(&self) -> &[T] {
        &self.units
    }

    /// Corpus counts; zero for vocabularies read back from model files.
    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

impl Vocabulary<String> {
    /// Lookup without allocating a `String`.
    pub fn get_str(&self, unit: &str) -> Option<usize> {
        self.index.get(unit).copied()
    }
}

/// Builds target and context vocabularies, dropping units seen fewer than
/// `min_count` times.
pub fn build_vocab(
    pairs: &[ContextPair],
    min_count: u64,
) -> Result<(Vocabulary<GroupId>, Vocabulary<String>)> {
    let mut targets: BTreeMap<GroupId, u64> = BTreeMap::new();
    let mut contexts: BTreeMap<String, u64> = BTreeMap::new();
    for p in pairs {
        *targets.entry(p.target).or_default() += 1;
        // Avoid cloning the context for every repeat.
        match contexts.get_mut(p.context.as_str()) {
            Some(n) => *n += 1,
            None => {
                contexts.insert(p.context.clone(), 1);
            }
        }
    }
    let tv = Vocabulary::from_counts(&targets, min_count);
    let cv = Vocabulary::from_counts(&contexts, min_count);
    if tv.is_empty() || cv.is_empty() {
        return Err(Error::Training(format!(
            "empty vocabulary after min_count={min_count} ({} pairs, {} targets, {} contexts survive)",
            pairs.len(),
            tv.len(),
            cv.len()
        )));
    }
    Ok((tv, cv))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    /// Initial learning rate; decays linearly to `alpha / 1e4`.
    pub alpha: f64,
    pub min_count: u64,
    /// Subsampling threshold for frequent contexts.
    pub subsample: f64,
    pub seed: u64,
    /// 1 gives deterministic training; more workers apply lock-free
    /// updates to shared parameters and are not reproducible.
    pub workers: usize,
    pub negative_table_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            epochs: 5,
            negatives: 5,
            alpha: 0.025,
            min_count: 5,
            subsample: 1e-4,
            seed: 1,
            workers: 1,
            negative_table_size: 10_000_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("train config: {what}")));
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if self.negatives == 0 || self.min_count == 0 || self.workers == 0 {
            return bad("negatives, min_count and workers must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.subsample > 0.0) {
            return bad("subsample must be positive");
        }
        if self.negative_table_size == 0 {
            return bad("negative_table_size must be positive");
        }
        Ok(())
    }
}

/// Training progress, printed as `PROGRESS <pairs> <alpha> <loss>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub pairs: u64,
    pub total: u64,
    pub alpha: f64,
    /// Mean loss over the pairs trained since the previous report.
    pub loss: f64,
}

impl fmt::Display for Progress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PROGRESS {} {:.6e} {:.6}", self.pairs, self.alpha, self.loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub ctype: ContextType,
    pub dim: usize,
    pub target_vocab: Vocabulary<GroupId>,
    pub context_vocab: Vocabulary<String>,
    /// Row-major, one row per target unit.
    pub target_matrix: Vec<f64>,
    /// Row-major, one row per context unit.
    pub context_matrix: Vec<f64>,
}

impl EmbeddingModel {
    /// A model with target rows drawn uniformly from ±0.5/dim and zero
    /// context rows.
    pub fn initialize(
        ctype: ContextType,
        dim: usize,
        target_vocab: Vocabulary<GroupId>,
        context_vocab: Vocabulary<String>,
        rng: &mut impl Rng,
    ) -> Self {
        let half = 0.5 / dim as f64;
        let target_matrix = (0..target_vocab.len() * dim)
            .map(|_| rng.gen_range(-half..=half))
            .collect();
        let context_matrix = vec![0.0; context_vocab.len() * dim];
        EmbeddingModel {
            ctype,
            dim,
            target_vocab,
            context_vocab,
            target_matrix,
            context_matrix,
        }
    }

    pub fn target_row(&self, idx: usize) -> &[f64] {
        &self.target_matrix[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn context_row(&self, idx: usize) -> &[f64] {
        &self.context_matrix[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn target_vector(&self, id: GroupId) -> Option<&[f64]> {
        self.target_vocab.get(&id).map(|i| self.target_row(i))
    }

    pub fn contains(&self, id: GroupId) -> bool {
        self.target_vocab.get(&id).is_some()
    }

    /// Rescales every target row by `factor` (used in scale-invariance
    /// checks).
    pub fn scale_targets(&mut self, factor: f64) {
        for x in &mut self.target_matrix {
            *x *= factor;
        }
    }

    /// SGNS loss of one target row against one positive and some negative
    /// context rows.
    pub fn pair_loss(&self, target: usize, positive: usize, negatives: &[usize]) -> f64 {
        let negs: Vec<&[f64]> = negatives.iter().map(|&n| self.context_row(n)).collect();
        sgns_loss(self.target_row(target), self.context_row(positive), &negs)
    }

    fn check_finite(&self) -> Result<()> {
        let bad = |which: &str, i: usize| {
            Err(Error::Training(format!(
                "non-finite value in {which} matrix at row {} column {}",
                i / self.dim,
                i % self.dim
            )))
        };
        if let Some(i) = self.target_matrix.iter().position(|x| !x.is_finite()) {
            return bad("target", i);
        }
        if let Some(i) = self.context_matrix.iter().position(|x| !x.is_finite()) {
            return bad("context", i);
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-log σ(x)`, stable for large |x|.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// `−log σ(v·u₊) − Σᵢ log σ(−v·uᵢ)`.
pub fn sgns_loss(target: &[f64], positive: &[f64], negatives: &[&[f64]]) -> f64 {
    neg_log_sigmoid(dot(target, positive))
        + negatives
            .iter()
            .map(|n| neg_log_sigmoid(-dot(target, n)))
            .sum::<f64>()
}

/// Analytic gradients of [`sgns_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradient {
    pub loss: f64,
    pub target: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn sgns_gradient(target: &[f64], positive: &[f64], negatives: &[&[f64]]) -> SgnsGradient {
    let dim = target.len();
    let mut g_target = vec![0.0; dim];
    let s = dot(target, positive);
    // d/ds −log σ(s) = σ(s) − 1
    let coef = sigmoid(s) - 1.0;
    for i in 0..dim {
        g_target[i] += coef * positive[i];
    }
    let g_positive = target.iter().map(|v| coef * v).collect();
    let mut loss = neg_log_sigmoid(s);
    let mut g_negatives = Vec::with_capacity(negatives.len());
    for n in negatives {
        let s = dot(target, n);
        loss += neg_log_sigmoid(-s);
        // d/ds −log σ(−s) = σ(s)
        let coef = sigmoid(s);
        for i in 0..dim {
            g_target[i] += coef * n[i];
        }
        g_negatives.push(target.iter().map(|v| coef * v).collect());
    }
    SgnsGradient {
        loss,
        target: g_target,
        positive: g_positive,
        negatives: g_negatives,
    }
}

/// Negative-sampling table over context units, proportional to count^0.75.
struct UnigramTable {
    table: Vec<u32>,
}

impl UnigramTable {
    fn new(counts: &[u64], size: usize) -> Self {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let total: f64 = weights.iter().sum();
        let mut table = Vec::with_capacity(size);
        let mut word = 0;
        let mut cumulative = weights[0] / total;
        for i in 0..size {
            table.push(word as u32);
            if (i + 1) as f64 / size as f64 > cumulative && word + 1 < weights.len() {
                word += 1;
                cumulative += weights[word] / total;
            }
        }
        UnigramTable { table }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        self.table[rng.gen_range(0..self.table.len())] as usize
    }
}

/// Parameters shared between training workers. Relaxed atomic loads and
/// stores let workers race on rows without undefined behavior.
struct SharedMatrix {
    data: Vec<AtomicU64>,
    dim: usize,
}

impl SharedMatrix {
    fn new(values: &[f64], dim: usize) -> Self {
        SharedMatrix {
            data: values.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
            dim,
        }
    }

    fn read_row(&self, row: usize, out: &mut [f64]) {
        let base = row * self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            *o = f64::from_bits(self.data[base + i].load(Ordering::Relaxed));
        }
    }

    fn add_to_row(&self, row: usize, delta: &[f64], scale: f64) {
        let base = row * self.dim;
        for (i, d) in delta.iter().enumerate() {
            let cell = &self.data[base + i];
            let v = f64::from_bits(cell.load(Ordering::Relaxed)) + scale * d;
            cell.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    fn into_vec(self) -> Vec<f64> {
        self.data
            .into_iter()
            .map(|a| f64::from_bits(a.into_inner()))
            .collect()
    }
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    targets: SharedMatrix,
    contexts: SharedMatrix,
    table: UnigramTable,
    keep_prob: Vec<f64>,
    n_contexts: usize,
    total_visits: u64,
    visited: AtomicU64,
}

struct StepStats {
    loss: f64,
    trained: u64,
}

impl Trainer<'_> {
    fn alpha(&self, visited: u64) -> f64 {
        let frac = 1.0 - visited as f64 / self.total_visits as f64;
        self.config.alpha * frac.max(1e-4)
    }

    /// Trains on `pairs[order[..]]`; returns summed loss and pairs trained.
    fn run(&self, pairs: &[(usize, usize)], order: &[usize], rng: &mut ChaCha8Rng) -> Result<StepStats> {
        let dim = self.config.dim;
        let mut v = vec![0.0; dim];
        let mut u_pos = vec![0.0; dim];
        let mut negs: Vec<usize> = Vec::with_capacity(self.config.negatives);
        let mut neg_rows = vec![vec![0.0; dim]; self.config.negatives];
        let mut stats = StepStats {
            loss: 0.0,
            trained: 0,
        };
        for &p in order {
            let (t, c) = pairs[p];
            let visited = self.visited.fetch_add(1, Ordering::Relaxed);
            if self.keep_prob[c] < 1.0 && rng.gen::<f64>() >= self.keep_prob[c] {
                continue;
            }
            let alpha = self.alpha(visited);
            negs.clear();
            if self.n_contexts > 1 {
                while negs.len() < self.config.negatives {
                    let n = self.table.sample(rng);
                    if n != c {
                        negs.push(n);
                    }
                }
            }
            self.targets.read_row(t, &mut v);
            self.contexts.read_row(c, &mut u_pos);
            for (row, &n) in neg_rows.iter_mut().zip(&negs) {
                self.contexts.read_row(n, row);
            }
            let neg_refs: Vec<&[f64]> = neg_rows[..negs.len()].iter().map(Vec::as_slice).collect();
            let g = sgns_gradient(&v, &u_pos, &neg_refs);
            if !g.loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss {} at pair visit {visited} (target row {t}, context row {c}, alpha {alpha})",
                    g.loss
                )));
            }
            self.targets.add_to_row(t, &g.target, -alpha);
            self.contexts.add_to_row(c, &g.positive, -alpha);
            for (&n, grad) in negs.iter().zip(&g.negatives) {
                self.contexts.add_to_row(n, grad, -alpha);
            }
            stats.loss += g.loss;
            stats.trained += 1;
        }
        Ok(stats)
    }
}

/// Trains an SGNS model on `pairs`.
///
/// With `workers == 1` the result depends only on the pairs and the seed.
/// `progress` is called after every epoch.
pub fn train_sgns(
    pairs: &[ContextPair],
    ctype: ContextType,
    config: &TrainConfig,
    mut progress: Option<&mut dyn FnMut(Progress)>,
) -> Result<EmbeddingModel> {
    config.validate()?;
    let (target_vocab, context_vocab) = build_vocab(pairs, config.min_count)?;
    let indexed: Vec<(usize, usize)> = pairs
        .iter()
        .filter_map(|p| Some((target_vocab.get(&p.target)?, context_vocab.get_str(&p.context)?)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = EmbeddingModel::initialize(ctype, config.dim, target_vocab, context_vocab, &mut rng);

    let context_counts: Vec<u64> = (0..model.context_vocab.len())
        .map(|i| model.context_vocab.count(i))
        .collect();
    let total_count: u64 = context_counts.iter().sum();
    let keep_prob = context_counts
        .iter()
        .map(|&n| {
            let f = n as f64 / total_count as f64;
            (config.subsample / f).sqrt().min(1.0)
        })
        .collect();

    let trainer = Trainer {
        config,
        targets: SharedMatrix::new(&model.target_matrix, config.dim),
        contexts: SharedMatrix::new(&model.context_matrix, config.dim),
        table: UnigramTable::new(&context_counts, config.negative_table_size),
        keep_prob,
        n_contexts: model.context_vocab.len(),
        total_visits: (config.epochs as u64 * indexed.len() as u64).max(1),
        visited: AtomicU64::new(0),
    };

    let mut order: Vec<usize> = (0..indexed.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let stats = if config.workers == 1 {
            trainer.run(&indexed, &order, &mut rng)?
        } else {
            let chunk = order.len().div_ceil(config.workers).max(1);
            let seeds: Vec<u64> = (0..config.workers).map(|_| rng.gen()).collect();
            let results: Vec<Result<StepStats>> = std::thread::scope(|scope| {
                let handles: Vec<_> = order
                    .chunks(chunk)
                    .zip(&seeds)
                    .map(|(part, &seed)| {
                        let trainer = &trainer;
                        let indexed = &indexed;
                        scope.spawn(move || {
                            let mut rng = ChaCha8Rng::seed_from_u64(seed);
                            trainer.run(indexed, part, &mut rng)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect()
            });
            let mut total = StepStats {
                loss: 0.0,
                trained: 0,
            };
            for r in results {
                let s = r?;
                total.loss += s.loss;
                total.trained += s.trained;
            }
            total
        };
        if let Some(cb) = progress.as_mut() {
            let visited = trainer.visited.load(Ordering::Relaxed);
            cb(Progress {
                pairs: visited,
                total: trainer.total_visits,
                alpha: trainer.alpha(visited),
                loss: if stats.trained > 0 {
                    stats.loss / stats.trained as f64
                } else {
                    0.0
                },
            });
        }
    }

    let Trainer {
        targets, contexts, ..
    } = trainer;
    let model = EmbeddingModel {
        target_matrix: targets.into_vec(),
        context_matrix: contexts.into_vec(),
        ..model
    };
    model.check_finite()?;
    Ok(model)
}

/// Cosine similarity, clamped to [−1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Coordinate-wise mean.
pub fn centroid(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidInput("centroid of an empty set".into()))?;
    let dim = first.len();
    let mut out = vec![0.0; dim];
    for v in vectors {
        if v.len() != dim {
            return Err(Error::InvalidInput("centroid over unequal dimensions".into()));
        }
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    let n = vectors.len() as f64;
    for o in &mut out {
        *o /= n;
    }
    Ok(out)
}

/// The `k` target units most cosine-similar to `query`, excluding `exclude`;
/// similarity descending, ties by group id. Zero rows are skipped.
pub fn nearest(
    model: &EmbeddingModel,
    query: &[f64],
    k: usize,
    exclude: &BTreeSet<GroupId>,
) -> Result<Vec<(GroupId, f64)>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    if query.len() != model.dim {
        return Err(Error::InvalidInput(format!(
            "query has dimension {}, model has {}",
            query.len(),
            model.dim
        )));
    }
    let qn = norm(query);
    if qn == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    let mut scored: Vec<(GroupId, f64)> = (0..model.target_vocab.len())
        .filter_map(|i| {
            let id = *model.target_vocab.unit(i);
            if exclude.contains(&id) {
                return None;
            }
            let row = model.target_row(i);
            let rn = norm(row);
            (rn > 0.0).then(|| (id, (dot(query, row) / (qn * rn)).clamp(-1.0, 1.0)))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// Path of the context-matrix file next to a target-matrix file.
pub fn context_path(path: &Path) -> PathBuf {
    path.with_extension("ctx")
}

fn write_matrix<W: Write, T: fmt::Display>(
    mut w: W,
    units: &[T],
    matrix: &[f64],
    dim: usize,
) -> Result<()> {
    writeln!(w, "{} {}", units.len(), dim)?;
    for (i, u) in units.iter().enumerate() {
        write!(w, "{u}")?;
        for x in &matrix[i * dim..(i + 1) * dim] {
            // `{}` on f64 prints the shortest string that round-trips.
            write!(w, " {x}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix<R: BufRead>(r: R, source: &str) -> Result<(Vec<String>, Vec<f64>, usize)> {
    let mut lines = r.lines();
    let bad = |line: usize, message: String| Error::Format {
        line,
        message: format!("{source}: {message}"),
    };
    let header = lines
        .next()
        .ok_or_else(|| bad(1, "missing header".into()))??;
    let mut fields = header.split_whitespace();
    let parse = |s: Option<&str>| s.and_then(|s| s.parse::<usize>().ok());
    let (rows, dim) = match (parse(fields.next()), parse(fields.next()), fields.next()) {
        (Some(r), Some(d), None) if d > 0 => (r, d),
        _ => return Err(bad(1, format!("expected header \"V dim\", found {header:?}"))),
    };
    let mut units = Vec::with_capacity(rows);
    let mut matrix = Vec::with_capacity(rows * dim);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if units.len() == rows {
            return Err(bad(lineno, format!("more rows than the {rows} in the header")));
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() < dim + 1 {
            return Err(bad(
                lineno,
                format!(
                    "row {:?} has {} values, header says {dim}",
                    fields[0],
                    fields.len() - 1
                ),
            ));
        }
        let split = fields.len() - dim;
        let unit = fields[..split].join(" ");
        for f in &fields[split..] {
            let x: f64 = f
                .parse()
                .map_err(|_| bad(lineno, format!("row {unit:?}: invalid number {f:?}")))?;
            matrix.push(x);
        }
        units.push(unit);
    }
    if units.len() != rows {
        return Err(bad(
            units.len() + 2,
            format!("truncated: header promises {rows} rows, found {}", units.len()),
        ));
    }
    Ok((units, matrix, dim))
}

/// Writes the target matrix to `path` and the context matrix to
/// [`context_path`]`(path)`. Both use the text format: a `V dim` header,
/// then one line per unit with the unit followed by `dim` reals. Counts are
/// not stored.
pub fn save_model(model: &EmbeddingModel, path: &Path) -> Result<()> {
    write_matrix(
        BufWriter::new(File::create(path)?),
        model.target_vocab.units(),
        &model.target_matrix,
        model.dim,
    )?;
    write_matrix(
        BufWriter::new(File::create(context_path(path))?),
        model.context_vocab.units(),
        &model.context_matrix,
        model.dim,
    )
}

pub fn load_model(path: &Path, ctype: ContextType) -> Result<EmbeddingModel> {
    let name = path.display().to_string();
    let (tunits, target_matrix, dim) = read_matrix(BufReader::new(File::open(path)?), &name)?;
    let cpath = context_path(path);
    let cname = cpath.display().to_string();
    let (cunits, context_matrix, cdim) = read_matrix(BufReader::new(File::open(&cpath)?), &cname)?;
    if cdim != dim {
        return Err(Error::Format {
            line: 1,
            message: format!("{cname}: dimension {cdim} differs from target dimension {dim}"),
        });
    }
    let mut ids = Vec::with_capacity(tunits.len());
    for (i, u) in tunits.iter().enumerate() {
        let id: GroupId = u.parse().map_err(|_| Error::Format {
            line: i + 2,
            message: format!("{name}: row {u:?} is not a group id (or has too many values)"),
        })?;
        ids.push((id, 0));
    }
    Ok(EmbeddingModel {
        ctype,
        dim,
        target_vocab: Vocabulary::from_entries(ids),
        context_vocab: Vocabulary::from_entries(cunits.into_iter().map(|u| (u, 0))),
        target_matrix,
        context_matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(t: u32, c: &str) -> ContextPair {
        ContextPair {
            target: GroupId(t),
            context: c.to_string(),
            ctype: ContextType::Linear,
        }
    }

    #[test]
    fn vocab_threshold() {
        let mut pairs = vec![p(0, "x"); 5];
        pairs.push(p(1, "x"));
        let (tv, cv) = build_vocab(&pairs, 2).unwrap();
        assert_eq!(tv.units(), &[GroupId(0)]);
        assert_eq!(cv.units(), &["x".to_string()]);
        let (tv, _) = build_vocab(&pairs, 1).unwrap();
        assert_eq!(tv.len(), 2);
        assert!(matches!(build_vocab(&[], 1), Err(Error::Training(_))));
    }

    #[test]
    fn vocab_order_is_count_then_unit() {
        let pairs = [p(2, "b"), p(1, "a"), p(2, "a"), p(3, "c")];
        let (tv, cv) = build_vocab(&pairs, 1).unwrap();
        assert_eq!(tv.units(), &[GroupId(2), GroupId(1), GroupId(3)]);
        assert_eq!(cv.units(), &["a".to_string(), "b".into(), "c".into()]);
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3, -1.2, 2.0];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::UndefinedSimilarity)));
    }

    #[test]
    fn centroid_examples() {
        let v = [1.5, -2.0];
        assert_eq!(centroid(&[&v]).unwrap(), v);
        assert_eq!(centroid(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap(), [0.5, 0.5]);
        let a = [1.0, 2.0];
        let b = [3.0, -4.0];
        let c = [0.5, 0.25];
        assert_eq!(centroid(&[&a, &b, &c]).unwrap(), centroid(&[&c, &a, &b]).unwrap());
        assert!(centroid(&[]).is_err());
    }

    fn toy_model() -> EmbeddingModel {
        let ids = [(GroupId(0), 1), (GroupId(1), 1), (GroupId(2), 1), (GroupId(3), 1)];
        EmbeddingModel {
            ctype: ContextType::Linear,
            dim: 2,
            target_vocab: Vocabulary::from_entries(ids),
            context_vocab: Vocabulary::from_entries([("x".to_string(), 1)]),
            target_matrix: vec![1.0, 0.0, 0.9, 0.1, 0.0, 1.0, -1.0, 0.0],
            context_matrix: vec![0.0, 0.0],
        }
    }

    #[test]
    fn nearest_examples() {
        let m = toy_model();
        let none = BTreeSet::new();
        let r = nearest(&m, m.target_row(0), 2, &none).unwrap();
        assert_eq!(r[0].0, GroupId(0));
        assert!((r[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(r[1].0, GroupId(1));
        let ex: BTreeSet<_> = [GroupId(0)].into();
        let r = nearest(&m, m.target_row(0), 10, &ex).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|(g, _)| *g != GroupId(0)));
        assert!(nearest(&m, m.target_row(0), 0, &none).unwrap().is_empty());
        assert!(nearest(&m, &[1.0], 1, &none).is_err());
    }

    #[test]
    fn nearest_breaks_ties_by_id() {
        let mut m = toy_model();
        m.target_matrix = vec![0.0, 1.0, 1.0, 0.0, 2.0, 0.0, 1.0, 0.0];
        let r = nearest(&m, &[1.0, 0.0], 3, &BTreeSet::new()).unwrap();
        let ids: Vec<u32> = r.iter().map(|x| x.0 .0).collect();
        assert_eq!(ids, [1, 2, 3]);
    }

    #[test]
    fn initial_loss_is_k_plus_one_log_two() {
        let pairs: Vec<ContextPair> = (0..6).map(|i| p(i % 3, &format!("c{}", i % 4))).collect();
        let (tv, cv) = build_vocab(&pairs, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = EmbeddingModel::initialize(ContextType::Linear, 10, tv, cv, &mut rng);
        let k = 5;
        let loss = m.pair_loss(0, 1, &[0, 2, 3, 1, 0]);
        assert!((loss - (k as f64 + 1.0) * 2f64.ln()).abs() < 1e-12);
        let half = 0.5 / 10.0;
        assert!(m.target_matrix.iter().all(|x| x.abs() <= half));
    }

    #[test]
    fn sgns_loss_is_nonnegative() {
        let t = [0.4, -1.0, 2.0];
        let pos = [1.0, 0.5, -0.5];
        let n1 = [-3.0, 0.0, 1.0];
        assert!(sgns_loss(&t, &pos, &[&n1]) >= 0.0);
        assert!(sgns_loss(&[100.0, 0.0, 0.0], &[100.0, 0.0, 0.0], &[]) >= 0.0);
        assert!(neg_log_sigmoid(-800.0).is_finite());
    }

    #[test]
    fn unigram_table_follows_power_law() {
        let t = UnigramTable::new(&[16, 1], 1000);
        let zeros = t.table.iter().filter(|&&w| w == 0).count();
        // 16^0.75 = 8, so 8/9 of the table.
        assert!((zeros as i64 - 889).abs() <= 1, "{zeros}");
    }

    #[test]
    fn progress_line_format() {
        let p = Progress {
            pairs: 120,
            total: 200,
            alpha: 0.0125,
            loss: 1.5,
        };
        assert_eq!(p.to_string(), "PROGRESS 120 1.250000e-2 1.500000");
    }

    #[test]
    fn model_files_round_trip_and_report_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = toy_model();
        m.context_vocab = Vocabulary::from_entries([("voice queries".to_string(), 0)]);
        m.context_matrix = vec![0.1, 1e-300];
        let path = dir.path().join("linear.vec");
        save_model(&m, &path).unwrap();
        let back = load_model(&path, ContextType::Linear).unwrap();
        assert_eq!(back.target_matrix, m.target_matrix);
        assert_eq!(back.context_matrix, m.context_matrix);
        assert_eq!(back.context_vocab.units(), m.context_vocab.units());

        std::fs::write(&path, "4 2\n0 1 0\n1 0.9 0.1\n").unwrap();
        match load_model(&path, ContextType::Linear) {
            Err(Error::Format { message, .. }) => assert!(message.contains("truncated")),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "2 2\n0 1 0\n1 0.9\n").unwrap();
        match load_model(&path, ContextType::Linear) {
            Err(Error::Format { line: 3, message }) => assert!(message.contains("\"1\""), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
