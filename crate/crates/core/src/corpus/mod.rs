//! Dataset records, tokenization, POQR pair expansion, and deterministic
//! k-fold splitting.

mod loaders;

pub use loaders::{
    builtin_poqr_stats, load_labeled_questions, load_pairs, load_poqr_groups, load_poqr_stats,
    load_ranking_groups, PairDataset, PoqrStats, RankingDataset,
};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::component_rng;

/// A question as the pipeline sees it: raw text plus its tokenization, an
/// optional handle into a parsed-question store, and optional gold taxonomy
/// labels.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine: Option<String>,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Question {
            id: id.into(),
            tokens: tokenize(&text),
            text,
            parse_ref: None,
            coarse: None,
            fine: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchLabel {
    Match,
    NoMatch,
}

/// A labeled question pair for the match/no-match classification task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairExample {
    pub q1: Question,
    pub q2: Question,
    pub label: MatchLabel,
}

/// One ranking instance: a query, its known-similar questions, and the rest
/// of the candidate pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankingGroup {
    pub query: Question,
    pub positives: Vec<Question>,
    pub negatives: Vec<Question>,
}

impl RankingGroup {
    /// The full candidate pool (positives then negatives).
    pub fn candidates(&self) -> impl Iterator<Item = &Question> {
        self.positives.iter().chain(self.negatives.iter())
    }
}

/// One partially ordered group: a reference question and its paraphrase /
/// useful / neutral candidate lists. The three lists are pairwise disjoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoqrGroup {
    pub reference: Question,
    pub paraphrases: Vec<Question>,
    pub useful: Vec<Question>,
    pub neutral: Vec<Question>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoqrRelation {
    /// paraphrase over useful
    ParaphraseUseful,
    /// useful over neutral
    UsefulNeutral,
    /// paraphrase over neutral (by transitivity)
    ParaphraseNeutral,
}

/// An ordered judgment: relative to `reference`, `better` is more useful
/// than `worse`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderedPair {
    pub reference: Question,
    pub better: Question,
    pub worse: Question,
    pub relation: PoqrRelation,
}

/// Lowercase, split on whitespace, and detach punctuation as separate
/// tokens. An apostrophe starts a new token that keeps the letters following
/// it, so clitics split off whole ("what's" becomes `what` + `'s`).
pub fn tokenize(text: &str) -> Vec<String> {
    const PUNCT: &[char] = &['.', ',', '?', '!', '"', '(', ')', ':', ';'];
    let mut tokens = Vec::new();
    let mut buf = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_whitespace() {
            if !buf.is_empty() {
                tokens.push(std::mem::take(&mut buf));
            }
        } else if PUNCT.contains(&ch) {
            if !buf.is_empty() {
                tokens.push(std::mem::take(&mut buf));
            }
            tokens.push(ch.to_string());
        } else if ch == '\'' {
            if !buf.is_empty() {
                tokens.push(std::mem::take(&mut buf));
            }
            buf.push(ch);
        } else {
            buf.push(ch);
        }
    }
    if !buf.is_empty() {
        tokens.push(buf);
    }
    tokens
}

/// All ordered pairs a POQR group implies: every (paraphrase, useful),
/// (useful, neutral), and — by transitivity — (paraphrase, neutral)
/// combination.
pub fn expand_poqr(groups: &[PoqrGroup]) -> Vec<OrderedPair> {
    let mut out = Vec::new();
    for g in groups {
        for p in &g.paraphrases {
            for u in &g.useful {
                out.push(OrderedPair {
                    reference: g.reference.clone(),
                    better: p.clone(),
                    worse: u.clone(),
                    relation: PoqrRelation::ParaphraseUseful,
                });
            }
        }
        for u in &g.useful {
            for n in &g.neutral {
                out.push(OrderedPair {
                    reference: g.reference.clone(),
                    better: u.clone(),
                    worse: n.clone(),
                    relation: PoqrRelation::UsefulNeutral,
                });
            }
        }
        for p in &g.paraphrases {
            for n in &g.neutral {
                out.push(OrderedPair {
                    reference: g.reference.clone(),
                    better: p.clone(),
                    worse: n.clone(),
                    relation: PoqrRelation::ParaphraseNeutral,
                });
            }
        }
    }
    out
}

/// Deterministic k-fold split of `0..n_items`. Returns `(train, test)` index
/// sets per fold; test folds partition the index set with sizes differing by
/// at most one.
pub fn kfold_split(n_items: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > n_items {
        return Err(Error::Argument(format!(
            "k must satisfy 2 <= k <= {n_items}, got {k}"
        )));
    }
    let mut idx: Vec<usize> = (0..n_items).collect();
    let mut rng = component_rng(seed, "kfold");
    idx.shuffle(&mut rng);

    let base = n_items / k;
    let extra = n_items % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0usize;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let test: Vec<usize> = idx[start..start + size].to_vec();
        let train: Vec<usize> = idx[..start]
            .iter()
            .chain(&idx[start + size..])
            .cloned()
            .collect();
        folds.push((train, test));
        start += size;
    }
    Ok(folds)
}

/// Stratified variant of [`kfold_split`]: items sharing a stratum label are
/// spread evenly across folds.
pub fn kfold_split_stratified(
    strata: &[String],
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let n = strata.len();
    if k < 2 || k > n {
        return Err(Error::Argument(format!(
            "k must satisfy 2 <= k <= {n}, got {k}"
        )));
    }
    let mut rng = component_rng(seed, "kfold-stratified");
    let mut by_stratum: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, s) in strata.iter().enumerate() {
        match by_stratum.iter_mut().find(|(name, _)| name == s) {
            Some((_, v)) => v.push(i),
            None => by_stratum.push((s.clone(), vec![i])),
        }
    }
    let mut test_folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0usize;
    for (_, mut members) in by_stratum {
        members.shuffle(&mut rng);
        for m in members {
            test_folds[next % k].push(m);
            next += 1;
        }
    }
    let folds = test_folds
        .into_iter()
        .map(|test| {
            let train: Vec<usize> = (0..n).filter(|i| !test.contains(i)).collect();
            (train, test)
        })
        .collect();
    Ok(folds)
}

/// Sample `count` dissimilar question pairs under the constraint that the
/// two questions carry different coarse labels. Questions without a coarse
/// label are skipped. Seeded and deterministic.
pub fn generate_negatives(questions: &[Question], count: usize, seed: u64) -> Vec<PairExample> {
    let labeled: Vec<&Question> = questions.iter().filter(|q| q.coarse.is_some()).collect();
    let mut rng = component_rng(seed, "negative-sampler");
    let mut out = Vec::new();
    let mut attempts = 0usize;
    // Lexical overlap between sampled pairs is not controlled.
    while out.len() < count && attempts < count * 100 {
        attempts += 1;
        if labeled.len() < 2 {
            break;
        }
        let a = labeled[rng.gen_range(0..labeled.len())];
        let b = labeled[rng.gen_range(0..labeled.len())];
        if a.id != b.id && a.coarse != b.coarse {
            out.push(PairExample {
                q1: a.clone(),
                q2: b.clone(),
                label: MatchLabel::NoMatch,
            });
        }
    }
    out
}

use rand::Rng;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_detaches_punctuation() {
        assert_eq!(
            tokenize("How magnets are made?"),
            vec!["how", "magnets", "are", "made", "?"]
        );
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn tokenize_splits_clitics_at_apostrophe() {
        assert_eq!(tokenize("What's AI?"), vec!["what", "'s", "ai", "?"]);
    }

    #[test]
    fn expand_poqr_counts() {
        let q = |id: &str| Question::new(id, id);
        let g = PoqrGroup {
            reference: q("r"),
            paraphrases: vec![q("p1")],
            useful: vec![q("u1"), q("u2")],
            neutral: vec![q("n1")],
        };
        // |P||U| + |U||N| + |P||N| = 2 + 2 + 1 = 5
        let pairs = expand_poqr(&[g]);
        assert_eq!(pairs.len(), 5);
    }

    #[test]
    fn expand_poqr_empty_paraphrases_only_un_pairs() {
        let q = |id: &str| Question::new(id, id);
        let g = PoqrGroup {
            reference: q("r"),
            paraphrases: vec![],
            useful: vec![q("u1"), q("u2")],
            neutral: vec![q("n1"), q("n2")],
        };
        let pairs = expand_poqr(&[g]);
        assert_eq!(pairs.len(), 4);
        assert!(pairs
            .iter()
            .all(|p| p.relation == PoqrRelation::UsefulNeutral));
    }

    #[test]
    fn kfold_balanced_partition() {
        let folds = kfold_split(10, 5, 1).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen: Vec<usize> = folds.iter().flat_map(|(_, t)| t.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert!(folds.iter().all(|(_, t)| t.len() == 2));
        assert!(folds.iter().all(|(tr, _)| tr.len() == 8));
    }

    #[test]
    fn kfold_deterministic_given_seed() {
        assert_eq!(kfold_split(9, 3, 7).unwrap(), kfold_split(9, 3, 7).unwrap());
        assert_ne!(kfold_split(9, 3, 7).unwrap(), kfold_split(9, 3, 8).unwrap());
    }

    #[test]
    fn kfold_uneven_sizes() {
        let folds = kfold_split(7, 3, 0).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(|(_, t)| t.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3]);
    }

    #[test]
    fn kfold_out_of_range_k() {
        assert!(kfold_split(3, 1, 0).is_err());
        assert!(kfold_split(3, 4, 0).is_err());
    }

    #[test]
    fn stratified_folds_spread_labels() {
        let strata: Vec<String> = ["a", "a", "a", "b", "b", "b"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let folds = kfold_split_stratified(&strata, 3, 0).unwrap();
        for (_, test) in &folds {
            let a = test.iter().filter(|&&i| strata[i] == "a").count();
            let b = test.iter().filter(|&&i| strata[i] == "b").count();
            assert_eq!(a, 1);
            assert_eq!(b, 1);
        }
    }

    #[test]
    fn negative_sampler_respects_class_constraint() {
        let mut questions = Vec::new();
        for i in 0..10 {
            let mut q = Question::new(format!("q{i}"), format!("text {i}"));
            q.coarse = Some(if i % 2 == 0 { "Entity" } else { "Description" }.to_string());
            questions.push(q);
        }
        let negs = generate_negatives(&questions, 20, 3);
        assert_eq!(negs.len(), 20);
        for n in &negs {
            assert_ne!(n.q1.coarse, n.q2.coarse);
            assert!(matches!(n.label, MatchLabel::NoMatch));
        }
        // Seeded: same call, same sample.
        let negs2 = generate_negatives(&questions, 20, 3);
        let ids1: Vec<_> = negs.iter().map(|n| (n.q1.id.clone(), n.q2.id.clone())).collect();
        let ids2: Vec<_> = negs2.iter().map(|n| (n.q1.id.clone(), n.q2.id.clone())).collect();
        assert_eq!(ids1, ids2);
    }
}
