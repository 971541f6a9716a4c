//! Ranking and classification metrics, POQR pair accuracy, seeded
//! cross-validation, and k-means clustering recall.

mod kmeans;

pub use kmeans::{kmeans_cluster_recall, KmeansOutcome};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::OrderedPair;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// One query's scored candidates plus the ids that count as relevant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedQuery {
    pub query_id: String,
    /// `(candidate_id, score)` in any order; ranking sorts by descending
    /// score with ties broken by candidate id.
    pub candidates: Vec<(String, f64)>,
    pub relevant: HashSet<String>,
}

impl RankedQuery {
    /// Candidates sorted by descending score, ties by id (deterministic).
    pub fn ranking(&self) -> Vec<(String, f64)> {
        let mut r = self.candidates.clone();
        r.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        r
    }

    /// 1-based rank of the first relevant candidate.
    pub fn first_relevant_rank(&self) -> Option<usize> {
        self.ranking()
            .iter()
            .position(|(id, _)| self.relevant.contains(id))
            .map(|p| p + 1)
    }
}

/// A full ranking run: one entry per query.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RankingRun {
    pub queries: Vec<RankedQuery>,
}

impl RankingRun {
    pub fn new(queries: Vec<RankedQuery>) -> Self {
        RankingRun { queries }
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Fraction of queries with at least one relevant candidate in the top `k`.
pub fn recall_at_k(run: &RankingRun, k: usize) -> Result<f64> {
    if run.is_empty() {
        return Err(Error::Argument("recall_at_k on an empty run".into()));
    }
    if k == 0 {
        return Err(Error::Argument("recall_at_k needs k >= 1".into()));
    }
    let hits = run
        .queries
        .iter()
        .filter(|q| q.first_relevant_rank().map(|r| r <= k).unwrap_or(false))
        .count();
    Ok(hits as f64 / run.queries.len() as f64)
}

/// Mean reciprocal rank of the first relevant candidate. A query with no
/// relevant candidate contributes 0 (with a warning).
pub fn mrr(run: &RankingRun) -> Result<f64> {
    if run.is_empty() {
        return Err(Error::Argument("mrr on an empty run".into()));
    }
    let mut total = 0.0;
    for q in &run.queries {
        match q.first_relevant_rank() {
            Some(rank) => total += 1.0 / rank as f64,
            None => log::warn!("query {:?} has no relevant candidate; contributes 0", q.query_id),
        }
    }
    Ok(total / run.queries.len() as f64)
}

/// Mean average precision. Equals [`mrr`] whenever every query has exactly
/// one relevant candidate.
pub fn map(run: &RankingRun) -> Result<f64> {
    if run.is_empty() {
        return Err(Error::Argument("map on an empty run".into()));
    }
    let mut total = 0.0;
    for q in &run.queries {
        let ranking = q.ranking();
        let n_rel = ranking
            .iter()
            .filter(|(id, _)| q.relevant.contains(id))
            .count();
        if n_rel == 0 {
            log::warn!("query {:?} has no relevant candidate; contributes 0", q.query_id);
            continue;
        }
        let mut hits = 0usize;
        let mut ap = 0.0;
        for (i, (id, _)) in ranking.iter().enumerate() {
            if q.relevant.contains(id) {
                hits += 1;
                ap += hits as f64 / (i + 1) as f64;
            }
        }
        total += ap / n_rel as f64;
    }
    Ok(total / run.queries.len() as f64)
}

/// Fraction of ordered pairs where `better` outscores `worse` relative to
/// the same reference; exact ties count one half. Scores are looked up by
/// `(reference_id, candidate_id)`.
pub fn poqr_pair_accuracy(
    scores: &dyn Fn(&str, &str) -> Option<f64>,
    pairs: &[OrderedPair],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Argument("pair accuracy over zero pairs".into()));
    }
    let mut total = 0.0;
    for p in pairs {
        let sb = scores(&p.reference.id, &p.better.id).ok_or_else(|| {
            Error::Data(format!("missing score for ({}, {})", p.reference.id, p.better.id))
        })?;
        let sw = scores(&p.reference.id, &p.worse.id).ok_or_else(|| {
            Error::Data(format!("missing score for ({}, {})", p.reference.id, p.worse.id))
        })?;
        if sb > sw {
            total += 1.0;
        } else if sb == sw {
            total += 0.5;
        }
    }
    Ok(total / pairs.len() as f64)
}

/// Average of the pair accuracy over two annotators' datasets.
pub fn annotator_averaged(acc1: f64, acc2: f64) -> f64 {
    (acc1 + acc2) / 2.0
}

/// macro-F1 over gold/predicted label pairs; labels are compared as strings.
pub fn macro_f1(gold: &[String], predicted: &[String]) -> Result<f64> {
    if gold.len() != predicted.len() || gold.is_empty() {
        return Err(Error::Argument(
            "macro_f1 needs equal-length non-empty label lists".into(),
        ));
    }
    let labels: std::collections::BTreeSet<&String> = gold.iter().chain(predicted).collect();
    let mut f1_sum = 0.0;
    for label in &labels {
        let tp = gold
            .iter()
            .zip(predicted)
            .filter(|(g, p)| g == p && *g == *label)
            .count() as f64;
        let fp = gold
            .iter()
            .zip(predicted)
            .filter(|(g, p)| p == label && g != p)
            .count() as f64;
        let fn_ = gold
            .iter()
            .zip(predicted)
            .filter(|(g, p)| g == label && g != p)
            .count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        f1_sum += if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
    }
    Ok(f1_sum / labels.len() as f64)
}

pub fn accuracy(gold: &[String], predicted: &[String]) -> Result<f64> {
    if gold.len() != predicted.len() || gold.is_empty() {
        return Err(Error::Argument(
            "accuracy needs equal-length non-empty label lists".into(),
        ));
    }
    let hits = gold.iter().zip(predicted).filter(|(g, p)| g == p).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Confusion counts keyed `gold -> predicted -> count`.
pub fn confusion_matrix(gold: &[String], predicted: &[String]) -> BTreeMap<String, BTreeMap<String, usize>> {
    let mut m: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for (g, p) in gold.iter().zip(predicted) {
        *m.entry(g.clone()).or_default().entry(p.clone()).or_default() += 1;
    }
    m
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossValReport {
    pub folds: usize,
    pub per_fold: Vec<f64>,
    pub mean: f64,
    pub stddev: f64,
    pub seed: u64,
}

/// Seeded k-fold orchestration. `run_fold(fold, train_idx, test_idx,
/// fold_seed)` trains and applies one pipeline instance and returns its
/// metric; fold seeds derive from the master seed so folds can run in any
/// order.
pub fn cross_validate<F>(
    n_items: usize,
    folds: usize,
    seed: u64,
    mut run_fold: F,
) -> Result<CrossValReport>
where
    F: FnMut(usize, &[usize], &[usize], u64) -> Result<f64>,
{
    let splits = crate::corpus::kfold_split(n_items, folds, seed)?;
    let mut per_fold = Vec::with_capacity(folds);
    for (f, (train, test)) in splits.iter().enumerate() {
        let fold_seed = derive_seed(seed, &format!("fold-{f}"));
        per_fold.push(run_fold(f, train, test, fold_seed)?);
    }
    let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
    let var = per_fold.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / per_fold.len() as f64;
    Ok(CrossValReport {
        folds,
        per_fold,
        mean,
        stddev: var.sqrt(),
        seed,
    })
}

/// Aggregate metrics for one evaluation run, serialized into reports.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mrr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_fold: Option<CrossValReport>,
    /// Effective configuration echoed for reproducibility.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl MetricsReport {
    pub fn for_run(run: &RankingRun) -> Result<Self> {
        Ok(MetricsReport {
            recall_at_1: Some(recall_at_k(run, 1)?),
            recall_at_3: Some(recall_at_k(run, 3)?),
            recall_at_5: Some(recall_at_k(run, 5)?),
            mrr: Some(mrr(run)?),
            map: Some(map(run)?),
            ..Default::default()
        })
    }

    /// Aligned-column text rendering.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(&str, String)> = Vec::new();
        let mut push = |name: &'static str, v: Option<f64>| {
            if let Some(v) = v {
                rows.push((name, format!("{v:.4}")));
            }
        };
        push("recall@1", self.recall_at_1);
        push("recall@3", self.recall_at_3);
        push("recall@5", self.recall_at_5);
        push("mrr", self.mrr);
        push("map", self.map);
        push("accuracy", self.accuracy);
        push("pair_accuracy", self.pair_accuracy);
        if let Some(cv) = &self.per_fold {
            rows.push(("cv_mean", format!("{:.4}", cv.mean)));
            rows.push(("cv_stddev", format!("{:.4}", cv.stddev)));
        }
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(n, v)| format!("{n:<width$}  {v}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PoqrRelation, Question};

    fn query(id: &str, scored: &[(&str, f64)], relevant: &[&str]) -> RankedQuery {
        RankedQuery {
            query_id: id.to_string(),
            candidates: scored.iter().map(|(c, s)| (c.to_string(), *s)).collect(),
            relevant: relevant.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn recall_perfect_and_rank_two() {
        let run = RankingRun::new(vec![
            query("q1", &[("a", 0.9), ("b", 0.1)], &["a"]),
            query("q2", &[("c", 0.9), ("d", 0.1)], &["c"]),
        ]);
        assert_eq!(recall_at_k(&run, 1).unwrap(), 1.0);

        let run = RankingRun::new(vec![
            query("q1", &[("a", 0.9), ("b", 0.1)], &["b"]),
            query("q2", &[("c", 0.9), ("d", 0.1)], &["d"]),
        ]);
        assert_eq!(recall_at_k(&run, 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(&run, 3).unwrap(), 1.0);
    }

    #[test]
    fn recall_rejects_empty_run_and_zero_k() {
        let empty = RankingRun::default();
        assert!(recall_at_k(&empty, 1).is_err());
        let run = RankingRun::new(vec![query("q", &[("a", 1.0)], &["a"])]);
        assert!(recall_at_k(&run, 0).is_err());
    }

    #[test]
    fn mrr_rank_two_everywhere_is_half() {
        let run = RankingRun::new(vec![
            query("q1", &[("a", 0.9), ("b", 0.1)], &["b"]),
            query("q2", &[("c", 0.9), ("d", 0.1)], &["d"]),
        ]);
        assert_eq!(mrr(&run).unwrap(), 0.5);
        assert_eq!(map(&run).unwrap(), 0.5);
    }

    #[test]
    fn mrr_hand_mixed_fixture() {
        // Ranks of first relevant: 1, 2, 4, 1 -> (1 + 1/2 + 1/4 + 1)/4
        let run = RankingRun::new(vec![
            query("q1", &[("a", 0.9), ("b", 0.5)], &["a"]),
            query("q2", &[("a", 0.9), ("b", 0.5)], &["b"]),
            query(
                "q3",
                &[("a", 0.9), ("b", 0.8), ("c", 0.7), ("d", 0.6)],
                &["d"],
            ),
            query("q4", &[("a", 0.9)], &["a"]),
        ]);
        assert!((mrr(&run).unwrap() - (1.0 + 0.5 + 0.25 + 1.0) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn ranking_breaks_ties_by_id() {
        let q = query("q", &[("b", 0.5), ("a", 0.5), ("c", 0.5)], &["c"]);
        let ranking = q.ranking();
        let ids: Vec<&str> = ranking.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn pair_accuracy_cases() {
        let q = |id: &str| Question::new(id, id);
        let pairs = vec![OrderedPair {
            reference: q("r"),
            better: q("p"),
            worse: q("n"),
            relation: PoqrRelation::ParaphraseNeutral,
        }];
        let perfect = |_r: &str, c: &str| Some(if c == "p" { 1.0 } else { 0.0 });
        assert_eq!(poqr_pair_accuracy(&perfect, &pairs).unwrap(), 1.0);
        let constant = |_r: &str, _c: &str| Some(0.5);
        assert_eq!(poqr_pair_accuracy(&constant, &pairs).unwrap(), 0.5);
        let missing = |_r: &str, c: &str| if c == "p" { Some(1.0) } else { None };
        assert!(poqr_pair_accuracy(&missing, &pairs).is_err());
    }

    #[test]
    fn pair_accuracy_invariant_to_score_shift() {
        let q = |id: &str| Question::new(id, id);
        let pairs: Vec<OrderedPair> = (0..10)
            .map(|i| OrderedPair {
                reference: q("r"),
                better: q(&format!("b{i}")),
                worse: q(&format!("w{i}")),
                relation: PoqrRelation::ParaphraseUseful,
            })
            .collect();
        let base = |_r: &str, c: &str| Some(if c.starts_with('b') { 0.3 } else { 0.7 });
        let shifted = |_r: &str, c: &str| Some(if c.starts_with('b') { 100.3 } else { 100.7 });
        assert_eq!(
            poqr_pair_accuracy(&base, &pairs).unwrap(),
            poqr_pair_accuracy(&shifted, &pairs).unwrap()
        );
    }

    #[test]
    fn macro_f1_perfect_predictor_is_one() {
        let gold: Vec<String> = ["a", "b", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(macro_f1(&gold, &gold).unwrap(), 1.0);
    }

    #[test]
    fn cross_validate_partitions_and_is_deterministic() {
        let mut tested: Vec<usize> = Vec::new();
        let report = cross_validate(9, 3, 11, |_f, train, test, _seed| {
            assert_eq!(train.len() + test.len(), 9);
            tested.extend_from_slice(test);
            Ok(1.0)
        })
        .unwrap();
        tested.sort_unstable();
        assert_eq!(tested, (0..9).collect::<Vec<_>>());
        assert_eq!(report.mean, 1.0);
        assert_eq!(report.stddev, 0.0);

        let r1 = cross_validate(9, 3, 11, |_f, _tr, test, _s| Ok(test[0] as f64)).unwrap();
        let r2 = cross_validate(9, 3, 11, |_f, _tr, test, _s| Ok(test[0] as f64)).unwrap();
        assert_eq!(r1.per_fold, r2.per_fold);
    }
}
