//! IR baselines: TF-IDF cosine, Jaccard, and BM25 scoring over corpus
//! statistics, plus threshold-based pair classification.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::MatchLabel;
use crate::error::{Error, Result};

pub const DEFAULT_BM25_K1: f64 = 1.2;
pub const DEFAULT_BM25_B: f64 = 0.75;

/// Document-frequency statistics over a question corpus.
#[derive(Debug, Clone)]
pub struct CorpusStats {
    pub n_docs: usize,
    df: HashMap<String, usize>,
    pub avgdl: f64,
}

impl CorpusStats {
    /// Count distinct-document occurrences per token and the mean document
    /// length.
    pub fn build<T: AsRef<str>>(documents: &[Vec<T>]) -> Result<CorpusStats> {
        if documents.is_empty() {
            return Err(Error::Argument("cannot build stats over an empty corpus".into()));
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut total_len = 0usize;
        for doc in documents {
            total_len += doc.len();
            let distinct: HashSet<&str> = doc.iter().map(|t| t.as_ref()).collect();
            for t in distinct {
                *df.entry(t.to_string()).or_default() += 1;
            }
        }
        Ok(CorpusStats {
            n_docs: documents.len(),
            df,
            avgdl: total_len as f64 / documents.len() as f64,
        })
    }

    pub fn df(&self, token: &str) -> usize {
        self.df.get(token).copied().unwrap_or(0)
    }

    /// Smoothed TF-IDF idf: `ln((1 + N) / (1 + df)) + 1`.
    pub fn tfidf_idf(&self, token: &str) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.df(token) as f64)).ln() + 1.0
    }

    /// BM25 idf: `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    pub fn bm25_idf(&self, token: &str) -> f64 {
        let n = self.n_docs as f64;
        let df = self.df(token) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }
}

fn term_counts<T: AsRef<str>>(tokens: &[T]) -> HashMap<&str, usize> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_ref()).or_default() += 1;
    }
    counts
}

/// Jaccard similarity of the two token sets; 0 when both are empty.
pub fn jaccard<T: AsRef<str>>(q1: &[T], q2: &[T]) -> f64 {
    let a: HashSet<&str> = q1.iter().map(|t| t.as_ref()).collect();
    let b: HashSet<&str> = q2.iter().map(|t| t.as_ref()).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Cosine similarity of the `tf * idf` weighted term vectors.
pub fn tfidf_cosine<T: AsRef<str>>(q1: &[T], q2: &[T], stats: &CorpusStats) -> f64 {
    let c1 = term_counts(q1);
    let c2 = term_counts(q2);
    let weight = |counts: &HashMap<&str, usize>, t: &str| {
        counts.get(t).map(|&c| c as f64 * stats.tfidf_idf(t)).unwrap_or(0.0)
    };
    let mut dot = 0.0;
    for t in c1.keys() {
        dot += weight(&c1, t) * weight(&c2, t);
    }
    let norm = |counts: &HashMap<&str, usize>| {
        counts
            .iter()
            .map(|(t, &c)| {
                let w = c as f64 * stats.tfidf_idf(t);
                w * w
            })
            .sum::<f64>()
            .sqrt()
    };
    let (n1, n2) = (norm(&c1), norm(&c2));
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    dot / (n1 * n2)
}

/// Okapi BM25 of a document against the distinct query terms. Terms missing
/// from the document contribute zero.
pub fn bm25<T: AsRef<str>>(query: &[T], doc: &[T], stats: &CorpusStats, k1: f64, b: f64) -> f64 {
    let doc_counts = term_counts(doc);
    let dl = doc.len() as f64;
    let query_terms: HashSet<&str> = query.iter().map(|t| t.as_ref()).collect();
    let mut score = 0.0;
    for t in query_terms {
        let tf = doc_counts.get(t).map(|&c| c as f64).unwrap_or(0.0);
        if tf == 0.0 {
            continue;
        }
        let idf = stats.bm25_idf(t);
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / stats.avgdl));
    }
    score
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Tfidf,
    Jaccard,
    Bm25,
}

impl std::str::FromStr for BaselineMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<BaselineMethod> {
        match s {
            "tfidf" => Ok(BaselineMethod::Tfidf),
            "jaccard" => Ok(BaselineMethod::Jaccard),
            "bm25" => Ok(BaselineMethod::Bm25),
            other => Err(Error::Argument(format!(
                "method must be tfidf, jaccard, or bm25; got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BaselineMethod::Tfidf => "tfidf",
            BaselineMethod::Jaccard => "jaccard",
            BaselineMethod::Bm25 => "bm25",
        };
        f.write_str(s)
    }
}

/// Per (dataset, method) decision thresholds for pair classification.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThresholdTable {
    entries: BTreeMap<(String, BaselineMethod), f64>,
}

impl ThresholdTable {
    pub fn insert(&mut self, dataset: &str, method: BaselineMethod, threshold: f64) {
        self.entries.insert((dataset.to_string(), method), threshold);
    }

    pub fn get(&self, dataset: &str, method: BaselineMethod) -> Option<f64> {
        self.entries.get(&(dataset.to_string(), method)).copied()
    }

    /// TSV rows of `dataset \t method \t threshold`.
    pub fn load(path: &Path) -> Result<ThresholdTable> {
        let path_str = path.display().to_string();
        let content = std::fs::read_to_string(path)?;
        Self::parse(&content, &path_str)
    }

    fn parse(content: &str, source: &str) -> Result<ThresholdTable> {
        let mut table = ThresholdTable::default();
        for (lineno, line) in content.lines().enumerate() {
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::format(
                    source,
                    lineno,
                    format!("expected 3 tab-separated columns, got {}", cols.len()),
                ));
            }
            let method: BaselineMethod = cols[1]
                .parse()
                .map_err(|e| Error::format(source, lineno, format!("{e}")))?;
            let threshold: f64 = cols[2]
                .parse()
                .map_err(|_| Error::format(source, lineno, format!("bad threshold {:?}", cols[2])))?;
            if !threshold.is_finite() {
                return Err(Error::format(source, lineno, "threshold must be finite"));
            }
            table.insert(cols[0], method, threshold);
        }
        Ok(table)
    }

    /// The published optimal thresholds bundled with the crate.
    pub fn builtin() -> ThresholdTable {
        Self::parse(include_str!("../data/ir_thresholds.tsv"), "builtin")
            .expect("bundled threshold table is valid")
    }
}

/// Match when the score reaches the threshold (boundary inclusive).
pub fn threshold_classify(
    score: f64,
    method: BaselineMethod,
    dataset: &str,
    table: &ThresholdTable,
) -> Result<MatchLabel> {
    let threshold = table.get(dataset, method).ok_or_else(|| {
        Error::Config(format!("no threshold for dataset {dataset:?}, method {method}"))
    })?;
    Ok(if score >= threshold {
        MatchLabel::Match
    } else {
        MatchLabel::NoMatch
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn docs(texts: &[&str]) -> Vec<Vec<String>> {
        texts.iter().map(|t| tokenize(t)).collect()
    }

    #[test]
    fn stats_count_documents_not_occurrences() {
        let d = docs(&["a b", "a"]);
        let s = CorpusStats::build(&d).unwrap();
        assert_eq!(s.n_docs, 2);
        assert_eq!(s.df("a"), 2);
        assert_eq!(s.df("b"), 1);
        assert!((s.avgdl - 1.5).abs() < 1e-15);

        let single = docs(&["x y z"]);
        let s = CorpusStats::build(&single).unwrap();
        assert_eq!(s.avgdl, 3.0);

        let repeated = docs(&["a a a"]);
        let s = CorpusStats::build(&repeated).unwrap();
        assert_eq!(s.df("a"), 1);
    }

    #[test]
    fn stats_reject_empty_corpus() {
        assert!(CorpusStats::build(&Vec::<Vec<String>>::new()).is_err());
    }

    #[test]
    fn jaccard_examples() {
        let a = tokenize("how magnets are made");
        assert_eq!(jaccard(&a, &a), 1.0);
        let b = tokenize("what of");
        assert_eq!(jaccard(&a, &b), 0.0);
        // {how, magnets, are, made} vs {what, are, magnets, made, of}: 3/6.
        let c = tokenize("what are magnets made of");
        assert_eq!(jaccard(&a, &c), 0.5);
        assert_eq!(jaccard(&c, &a), 0.5);
        assert_eq!(jaccard::<String>(&[], &[]), 0.0);
    }

    #[test]
    fn tfidf_identity_and_disjoint() {
        let d = docs(&["a b c", "a d", "b d e"]);
        let s = CorpusStats::build(&d).unwrap();
        let q = tokenize("a b");
        assert!((tfidf_cosine(&q, &q, &s) - 1.0).abs() < 1e-12);
        let other = tokenize("d e");
        assert_eq!(tfidf_cosine(&q, &other, &s), 0.0);
    }

    #[test]
    fn tfidf_matches_hand_computation() {
        // Corpus: two docs. idf(t) = ln((1+2)/(1+df)) + 1.
        let d = docs(&["a b", "a c"]);
        let s = CorpusStats::build(&d).unwrap();
        let idf_a = (3.0f64 / 3.0).ln() + 1.0; // df 2
        let idf_b = (3.0f64 / 2.0).ln() + 1.0; // df 1
        let idf_c = idf_b;
        // q1 = [a, b], q2 = [a, c]: dot = idf_a^2,
        // norms = sqrt(idf_a^2 + idf_b^2), sqrt(idf_a^2 + idf_c^2).
        let expect = idf_a * idf_a
            / ((idf_a * idf_a + idf_b * idf_b).sqrt() * (idf_a * idf_a + idf_c * idf_c).sqrt());
        let got = tfidf_cosine(&tokenize("a b"), &tokenize("a c"), &s);
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn bm25_hand_example_single_doc() {
        // N=1, df=1: idf = ln(1 + 0.5/1.5) = ln(4/3); tf term = 1.
        let d = docs(&["a"]);
        let s = CorpusStats::build(&d).unwrap();
        let score = bm25(&tokenize("a"), &tokenize("a"), &s, DEFAULT_BM25_K1, DEFAULT_BM25_B);
        let expect = (4.0f64 / 3.0).ln();
        assert!((score - expect).abs() < 1e-12, "{score} vs {expect}");
        assert!((score - 0.2876820724517809).abs() < 1e-12);
    }

    #[test]
    fn bm25_no_shared_tokens_is_zero() {
        let d = docs(&["a b", "c d"]);
        let s = CorpusStats::build(&d).unwrap();
        assert_eq!(
            bm25(&tokenize("x y"), &tokenize("a b"), &s, DEFAULT_BM25_K1, DEFAULT_BM25_B),
            0.0
        );
    }

    #[test]
    fn bm25_monotone_in_term_frequency() {
        let d = docs(&["a a a b", "c d e f"]);
        let s = CorpusStats::build(&d).unwrap();
        let q = tokenize("a");
        let mut last = 0.0;
        for reps in 1..=4 {
            let doc: Vec<String> = std::iter::repeat("a".to_string())
                .take(reps)
                .chain(std::iter::repeat("x".to_string()).take(4 - reps))
                .collect();
            let score = bm25(&q, &doc, &s, DEFAULT_BM25_K1, DEFAULT_BM25_B);
            assert!(score > last, "tf {reps}: {score} <= {last}");
            last = score;
        }
    }

    #[test]
    fn builtin_thresholds_reproduce_published_boundaries() {
        let table = ThresholdTable::builtin();
        // Boundary inclusive: score == threshold classifies as match.
        assert_eq!(
            threshold_classify(0.72, BaselineMethod::Tfidf, "semantic-squad", &table).unwrap(),
            MatchLabel::Match
        );
        assert_eq!(
            threshold_classify(13.0, BaselineMethod::Bm25, "quora", &table).unwrap(),
            MatchLabel::NoMatch
        );
        assert_eq!(
            threshold_classify(0.29, BaselineMethod::Jaccard, "semantic-squad", &table).unwrap(),
            MatchLabel::Match
        );
        assert_eq!(
            threshold_classify(12.98, BaselineMethod::Bm25, "semantic-squad", &table).unwrap(),
            MatchLabel::Match
        );
        assert_eq!(
            threshold_classify(0.55, BaselineMethod::Jaccard, "quora", &table).unwrap(),
            MatchLabel::NoMatch
        );
        assert_eq!(
            threshold_classify(0.79, BaselineMethod::Tfidf, "quora", &table).unwrap(),
            MatchLabel::Match
        );
    }

    #[test]
    fn missing_threshold_is_a_config_error() {
        let table = ThresholdTable::builtin();
        assert!(matches!(
            threshold_classify(0.5, BaselineMethod::Tfidf, "nonexistent", &table),
            Err(Error::Config(_))
        ));
    }
}
