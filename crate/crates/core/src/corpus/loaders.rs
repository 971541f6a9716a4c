//! File ingestion: TSV pair files, JSON-lines ranking and POQR files, the
//! taxonomy label TSV, and declared POQR dataset statistics.
//!
//! Loaders are total over their declared format or fail with a line-numbered
//! error; nothing loads partially and silently.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{MatchLabel, PairExample, PoqrGroup, Question, RankingGroup};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PairDataset {
    pub examples: Vec<PairExample>,
    pub n_match: usize,
    pub n_no_match: usize,
    pub warnings: Vec<String>,
}

/// TSV pair loader. Columns: id1, id2, text1, text2, label in {0,1}.
/// Duplicate (id1, id2) rows are kept with a warning.
pub fn load_pairs(path: &Path) -> Result<PairDataset> {
    let path_str = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut examples = Vec::new();
    let mut warnings = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let (mut n_match, mut n_no_match) = (0usize, 0usize);

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::format(
                &path_str,
                lineno,
                format!("expected 5 tab-separated columns, got {}", cols.len()),
            ));
        }
        let label = match cols[4] {
            "1" => MatchLabel::Match,
            "0" => MatchLabel::NoMatch,
            other => {
                return Err(Error::format(
                    &path_str,
                    lineno,
                    format!("label must be 0 or 1, got {other:?}"),
                ))
            }
        };
        match label {
            MatchLabel::Match => n_match += 1,
            MatchLabel::NoMatch => n_no_match += 1,
        }
        let key = (cols[0].to_string(), cols[1].to_string());
        if !seen.insert(key.clone()) {
            warnings.push(format!(
                "line {lineno}: duplicate pair ({}, {}); kept",
                key.0, key.1
            ));
            log::warn!("{path_str}:{lineno}: duplicate pair ({}, {})", key.0, key.1);
        }
        examples.push(PairExample {
            q1: Question::new(cols[0], cols[2]),
            q2: Question::new(cols[1], cols[3]),
            label,
        });
    }
    Ok(PairDataset {
        examples,
        n_match,
        n_no_match,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct RankingDataset {
    pub groups: Vec<RankingGroup>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RankingLine {
    query: QuestionLine,
    #[serde(default)]
    positives: Vec<QuestionLine>,
    #[serde(default)]
    candidates: Vec<QuestionLine>,
}

#[derive(Debug, Deserialize, Serialize)]
struct QuestionLine {
    id: String,
    text: String,
}

impl From<QuestionLine> for Question {
    fn from(q: QuestionLine) -> Question {
        Question::new(q.id, q.text)
    }
}

/// JSON-lines ranking loader: `{query, positives: [...], candidates: [...]}`
/// per line. Negatives are the candidates minus the positives (by id).
/// A positive absent from the candidate list is kept, with a warning.
pub fn load_ranking_groups(path: &Path) -> Result<RankingDataset> {
    let path_str = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut groups = Vec::new();
    let mut warnings = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RankingLine = serde_json::from_str(&line)
            .map_err(|e| Error::format(&path_str, lineno, format!("bad JSON: {e}")))?;
        let positives: Vec<Question> = parsed.positives.into_iter().map(Question::from).collect();
        let candidates: Vec<Question> =
            parsed.candidates.into_iter().map(Question::from).collect();
        let pos_ids: HashSet<&str> = positives.iter().map(|q| q.id.as_str()).collect();
        let cand_ids: HashSet<&str> = candidates.iter().map(|q| q.id.as_str()).collect();
        for p in &positives {
            if !cand_ids.contains(p.id.as_str()) {
                warnings.push(format!(
                    "line {lineno}: positive {:?} not in candidates; kept as positive",
                    p.id
                ));
                log::warn!(
                    "{path_str}:{lineno}: positive {:?} not in candidates; kept",
                    p.id
                );
            }
        }
        let negatives: Vec<Question> = candidates
            .into_iter()
            .filter(|c| !pos_ids.contains(c.id.as_str()))
            .collect();
        groups.push(RankingGroup {
            query: parsed.query.into(),
            positives,
            negatives,
        });
    }
    Ok(RankingDataset { groups, warnings })
}

#[derive(Debug, Deserialize)]
struct PoqrLine {
    #[serde(alias = "reference")]
    r#ref: QuestionLine,
    #[serde(default)]
    paraphrases: Vec<QuestionLine>,
    #[serde(default)]
    useful: Vec<QuestionLine>,
    #[serde(default)]
    neutral: Vec<QuestionLine>,
}

/// JSON-lines POQR loader: `{ref, paraphrases, useful, neutral}` per line.
/// The three candidate lists must be pairwise disjoint.
pub fn load_poqr_groups(path: &Path) -> Result<Vec<PoqrGroup>> {
    let path_str = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut groups = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PoqrLine = serde_json::from_str(&line)
            .map_err(|e| Error::format(&path_str, lineno, format!("bad JSON: {e}")))?;
        let group = PoqrGroup {
            reference: parsed.r#ref.into(),
            paraphrases: parsed.paraphrases.into_iter().map(Question::from).collect(),
            useful: parsed.useful.into_iter().map(Question::from).collect(),
            neutral: parsed.neutral.into_iter().map(Question::from).collect(),
        };
        let mut ids = HashSet::new();
        for q in group
            .paraphrases
            .iter()
            .chain(&group.useful)
            .chain(&group.neutral)
        {
            if !ids.insert(q.id.as_str()) {
                return Err(Error::format(
                    &path_str,
                    lineno,
                    format!("question {:?} appears in more than one list", q.id),
                ));
            }
        }
        groups.push(group);
    }
    Ok(groups)
}

/// Declared statistics of a published POQR dataset. These are reporting
/// metadata, not a checked invariant: the per-group pair totals cannot be
/// re-derived from the aggregate list sizes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PoqrStats {
    pub name: String,
    pub paraphrases: usize,
    pub useful: usize,
    pub neutral: usize,
    pub pairs: usize,
}

pub fn load_poqr_stats(path: &Path) -> Result<Vec<PoqrStats>> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

/// Declared statistics of the four published POQR datasets.
pub fn builtin_poqr_stats() -> Vec<PoqrStats> {
    serde_json::from_str(include_str!("../../data/poqr_stats.json"))
        .expect("bundled poqr_stats.json is valid")
}

/// Taxonomy label TSV loader: question-text, coarse, fine. Produces
/// questions with gold labels attached; ids are the 1-based line numbers.
pub fn load_labeled_questions(path: &Path) -> Result<Vec<Question>> {
    let path_str = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::format(
                &path_str,
                lineno,
                format!("expected 3 tab-separated columns, got {}", cols.len()),
            ));
        }
        let mut q = Question::new(format!("q{lineno}"), cols[0]);
        q.coarse = Some(cols[1].to_string());
        q.fine = Some(cols[2].to_string());
        out.push(q);
    }
    if out.is_empty() {
        return Err(Error::format(&path_str, 0, "no labeled questions"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn pair_loader_counts_labels() {
        let f = write_tmp("a\tb\thow is x?\twhat is x?\t1\nc\td\thow is y?\twho is z?\t0\n");
        let ds = load_pairs(f.path()).unwrap();
        assert_eq!(ds.examples.len(), 2);
        assert_eq!(ds.n_match, 1);
        assert_eq!(ds.n_no_match, 1);
        assert_eq!(ds.examples[0].q1.tokens, vec!["how", "is", "x", "?"]);
    }

    #[test]
    fn pair_loader_rejects_bad_label() {
        let f = write_tmp("a\tb\tx\ty\t2\n");
        let err = load_pairs(f.path()).unwrap_err();
        match err {
            Error::Format { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pair_loader_rejects_bad_column_count() {
        let f = write_tmp("a\tb\tx\t1\n");
        assert!(load_pairs(f.path()).is_err());
    }

    #[test]
    fn pair_loader_keeps_duplicates_with_warning() {
        let f = write_tmp("a\tb\tx\ty\t1\na\tb\tx\ty\t1\nc\td\tu\tv\t0\n");
        let ds = load_pairs(f.path()).unwrap();
        assert_eq!(ds.examples.len(), 3);
        assert_eq!(ds.warnings.len(), 1);
    }

    #[test]
    fn ranking_loader_subtracts_positives() {
        let f = write_tmp(
            r#"{"query":{"id":"q","text":"a?"},"positives":[{"id":"p","text":"b?"}],"candidates":[{"id":"p","text":"b?"},{"id":"n1","text":"c?"},{"id":"n2","text":"d?"}]}"#,
        );
        let ds = load_ranking_groups(f.path()).unwrap();
        assert_eq!(ds.groups.len(), 1);
        assert_eq!(ds.groups[0].negatives.len(), 2);
        assert!(ds.warnings.is_empty());
    }

    #[test]
    fn ranking_loader_accepts_empty_positives() {
        let f = write_tmp(
            r#"{"query":{"id":"q","text":"a?"},"positives":[],"candidates":[{"id":"n1","text":"c?"}]}"#,
        );
        let ds = load_ranking_groups(f.path()).unwrap();
        assert!(ds.groups[0].positives.is_empty());
    }

    #[test]
    fn ranking_loader_warns_on_extra_positive() {
        let f = write_tmp(
            r#"{"query":{"id":"q","text":"a?"},"positives":[{"id":"p","text":"b?"}],"candidates":[{"id":"n1","text":"c?"}]}"#,
        );
        let ds = load_ranking_groups(f.path()).unwrap();
        assert_eq!(ds.groups[0].positives.len(), 1);
        assert_eq!(ds.warnings.len(), 1);
    }

    #[test]
    fn ranking_loader_reports_json_error_line() {
        let f = write_tmp("{\"query\":{\"id\":\"q\",\"text\":\"a\"},\"candidates\":[]}\nnot json\n");
        let err = load_ranking_groups(f.path()).unwrap_err();
        match err {
            Error::Format { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn poqr_loader_rejects_overlapping_lists() {
        let f = write_tmp(
            r#"{"ref":{"id":"r","text":"a?"},"paraphrases":[{"id":"x","text":"b?"}],"useful":[{"id":"x","text":"b?"}],"neutral":[]}"#,
        );
        assert!(load_poqr_groups(f.path()).is_err());
    }

    #[test]
    fn builtin_poqr_stats_match_published_table() {
        let stats = builtin_poqr_stats();
        let simple1 = stats.iter().find(|s| s.name == "Simple-1").unwrap();
        assert_eq!(simple1.paraphrases, 164);
        assert_eq!(simple1.useful, 775);
        assert_eq!(simple1.neutral, 594);
        assert_eq!(simple1.pairs, 11015);
        assert_eq!(stats.len(), 4);
    }

    #[test]
    fn labeled_question_loader() {
        let f = write_tmp("How many kids?\tQuantification\tNumber\nWho is he?\tEntity\tPerson\n");
        let qs = load_labeled_questions(f.path()).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].coarse.as_deref(), Some("Quantification"));
        assert_eq!(qs[1].fine.as_deref(), Some("Person"));
    }
}
