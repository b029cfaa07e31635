//! MAP@n scoring of expansion rankings against gold term lists.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::hash::Hash;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::termgroup::GroupId;

pub const DEFAULT_CUTOFFS: [usize; 3] = [10, 20, 50];

/// AP@n with normalizer `min(|gold|, n)`. Repeated items count once.
pub fn average_precision_at<T: Eq + Hash>(ranked: &[T], gold: &HashSet<T>, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let mut seen = HashSet::new();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, item) in ranked.iter().take(n).enumerate() {
        if gold.contains(item) && seen.insert(item) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / gold.len().min(n) as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldCategory {
    pub name: String,
    pub gold: Vec<String>,
    pub seeds: Vec<String>,
}

impl GoldCategory {
    pub fn validate(&self) -> Result<()> {
        let gold: BTreeSet<&String> = self.gold.iter().collect();
        if self.seeds.is_empty() {
            return Err(Error::InvalidInput(format!("category {:?} has no seeds", self.name)));
        }
        if let Some(s) = self.seeds.iter().find(|s| !gold.contains(s)) {
            return Err(Error::InvalidInput(format!(
                "category {:?}: seed {s:?} is not a gold term",
                self.name
            )));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() == gold.len() {
            return Err(Error::InvalidInput(format!(
                "category {:?} has no gold terms beyond its seeds",
                self.name
            )));
        }
        Ok(())
    }
}

/// Mean AP@n over `(ranking, category)` pairs, with seeds removed from both
/// the ranking and the gold set.
pub fn map_at(categories: &[(Vec<String>, GoldCategory)], n: usize) -> Result<f64> {
    if categories.is_empty() {
        return Err(Error::InvalidInput("no categories to score".into()));
    }
    let mut total = 0.0;
    for (ranking, cat) in categories {
        let seeds: HashSet<&String> = cat.seeds.iter().collect();
        let gold: HashSet<&String> = cat.gold.iter().filter(|g| !seeds.contains(g)).collect();
        let ranked: Vec<&String> = ranking.iter().filter(|r| !seeds.contains(r)).collect();
        total += average_precision_at(&ranked, &gold, n)?;
    }
    Ok(total / categories.len() as f64)
}

/// One category per line: `{name, gold:[...], seeds:[...]}`.
pub fn read_dataset<R: BufRead>(r: R) -> Result<Vec<GoldCategory>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cat: GoldCategory = serde_json::from_str(&line).map_err(|e| Error::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        cat.validate().map_err(|e| Error::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(cat);
    }
    Ok(out)
}

/// What a benchmark run needs from a trained project.
pub trait Expander {
    fn resolve(&self, term: &str) -> Option<GroupId>;
    /// Ranked candidate groups for the seed set, seeds excluded.
    fn rank(&self, category: &str, seeds: &BTreeSet<GroupId>, depth: usize) -> Result<Vec<GroupId>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub ap: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub per_category: BTreeMap<String, CategoryScore>,
    pub map: BTreeMap<usize, f64>,
    /// Gold terms that did not resolve to a group; scored as misses.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub unresolved: BTreeMap<String, Vec<String>>,
    /// Categories left out because a seed did not resolve.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum GoldKey {
    Group(GroupId),
    Missing(String),
}

pub fn run_benchmark(expander: &dyn Expander, dataset: &[GoldCategory], cutoffs: &[usize]) -> Result<BenchmarkReport> {
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(Error::InvalidInput("cutoffs must be positive".into()));
    }
    let depth = *cutoffs.iter().max().unwrap();
    let mut report = BenchmarkReport {
        per_category: BTreeMap::new(),
        map: BTreeMap::new(),
        unresolved: BTreeMap::new(),
        skipped: Vec::new(),
    };
    for cat in dataset {
        let seeds: Option<BTreeSet<GroupId>> = cat.seeds.iter().map(|s| expander.resolve(s)).collect();
        let Some(seeds) = seeds else {
            report.skipped.push(cat.name.clone());
            continue;
        };
        let mut gold = HashSet::new();
        let mut unresolved = Vec::new();
        for term in &cat.gold {
            match expander.resolve(term) {
                Some(g) if seeds.contains(&g) => {}
                Some(g) => {
                    gold.insert(GoldKey::Group(g));
                }
                None => {
                    unresolved.push(term.clone());
                    gold.insert(GoldKey::Missing(term.clone()));
                }
            }
        }
        if !unresolved.is_empty() {
            report.unresolved.insert(cat.name.clone(), unresolved);
        }
        let ranked: Vec<GoldKey> = expander
            .rank(&cat.name, &seeds, depth)?
            .into_iter()
            .filter(|g| !seeds.contains(g))
            .map(GoldKey::Group)
            .collect();
        let mut ap = BTreeMap::new();
        for &n in cutoffs {
            ap.insert(n, average_precision_at(&ranked, &gold, n)?);
        }
        report.per_category.insert(cat.name.clone(), CategoryScore { ap });
    }
    if report.per_category.is_empty() {
        return Err(Error::NotFound("no dataset category could be resolved".into()));
    }
    for &n in cutoffs {
        let sum: f64 = report.per_category.values().map(|c| c.ap[&n]).sum();
        report.map.insert(n, sum / report.per_category.len() as f64);
    }
    Ok(report)
}

impl BenchmarkReport {
    pub fn table(&self) -> String {
        let cutoffs: Vec<usize> = self.map.keys().copied().collect();
        let width = self
            .per_category
            .keys()
            .map(|k| k.chars().count())
            .max()
            .unwrap_or(0)
            .max("category".len());
        let mut out = format!("{:<width$}", "category");
        for n in &cutoffs {
            let _ = write!(out, "  {:>7}", format!("AP@{n}"));
        }
        out.push('\n');
        for (name, score) in &self.per_category {
            let _ = write!(out, "{name:<width$}");
            for n in &cutoffs {
                let _ = write!(out, "  {:>7.4}", score.ap[n]);
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<width$}", "MAP");
        for n in &cutoffs {
            let _ = write!(out, "  {:>7.4}", self.map[n]);
        }
        out.push('\n');
        for (name, terms) in &self.unresolved {
            let _ = writeln!(out, "unresolved in {name}: {}", terms.join(", "));
        }
        for name in &self.skipped {
            let _ = writeln!(out, "skipped {name}: seed not found");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> HashSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn strings(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ap_examples() {
        let gold = set(&["g1", "g2"]);
        assert_eq!(average_precision_at(&strings(&["g1", "g2"]), &gold, 2).unwrap(), 1.0);
        let ap = average_precision_at(&strings(&["g1", "x", "g2"]), &gold, 3).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision_at(&strings(&["x", "y", "g1"]), &gold, 2).unwrap(), 0.0);
        assert!(average_precision_at(&strings(&["g1"]), &gold, 0).is_err());
        // Repeats do not inflate the score.
        assert_eq!(average_precision_at(&strings(&["g1", "g1"]), &gold, 2).unwrap(), 0.5);
    }

    fn cat(name: &str, gold: &[&str], seeds: &[&str]) -> GoldCategory {
        GoldCategory {
            name: name.into(),
            gold: strings(gold),
            seeds: strings(seeds),
        }
    }

    #[test]
    fn map_examples() {
        let c = cat("a", &["s", "g1", "g2"], &["s"]);
        let r = strings(&["s", "g1", "x", "g2"]);
        let single = map_at(&[(r.clone(), c.clone())], 3).unwrap();
        // Seeds are dropped before scoring: [g1, x, g2].
        assert!((single - 5.0 / 6.0).abs() < 1e-15);
        let miss = (strings(&["x"]), cat("b", &["s", "g"], &["s"]));
        let hit = (strings(&["g"]), cat("c", &["s", "g"], &["s"]));
        assert_eq!(map_at(&[hit.clone(), miss], 5).unwrap(), 0.5);
        assert_eq!(map_at(&[hit.clone(), hit.clone()], 5).unwrap(), map_at(&[hit], 5).unwrap());
        assert!(map_at(&[], 5).is_err());
    }

    #[test]
    fn dataset_validation() {
        let text = "{\"name\":\"a\",\"gold\":[\"x\",\"y\"],\"seeds\":[\"x\"]}\n\n{\"name\":\"b\",\"gold\":[\"x\"],\"seeds\":[\"x\"]}\n";
        match read_dataset(text.as_bytes()) {
            Err(Error::Format { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        let ok = read_dataset(text.lines().next().unwrap().as_bytes()).unwrap();
        assert_eq!(ok, vec![cat("a", &["x", "y"], &["x"])]);
    }

    struct Fixed;

    impl Expander for Fixed {
        fn resolve(&self, term: &str) -> Option<GroupId> {
            term.strip_prefix('g').and_then(|n| n.parse().ok()).map(GroupId)
        }

        fn rank(&self, _: &str, seeds: &BTreeSet<GroupId>, depth: usize) -> Result<Vec<GroupId>> {
            let base = seeds.iter().next_back().unwrap().0 + 1;
            Ok((base..base + depth as u32).map(GroupId).collect())
        }
    }

    #[test]
    fn benchmark_counts_unresolved_gold_as_misses() {
        let data = [
            cat("one", &["g1", "g2"], &["g1"]),
            cat("two", &["g10", "g11", "unknown"], &["g10"]),
            cat("lost", &["nope", "g3"], &["nope"]),
        ];
        let report = run_benchmark(&Fixed, &data, &[1]).unwrap();
        assert_eq!(report.per_category["one"].ap[&1], 1.0);
        assert_eq!(report.per_category["two"].ap[&1], 1.0);
        let r2 = run_benchmark(&Fixed, &data, &[2]).unwrap();
        // Two gold terms left, one unresolvable: (1/1) / 2.
        assert_eq!(r2.per_category["two"].ap[&2], 0.5);
        assert_eq!(r2.unresolved["two"], ["unknown"]);
        assert_eq!(r2.skipped, ["lost"]);
        let json = serde_json::to_string(&report.map).unwrap();
        assert_eq!(json, "{\"1\":1.0}");
        assert!(run_benchmark(&Fixed, &data[2..], &[1]).is_err());
        assert!(report.table().contains("MAP"));
    }
}
