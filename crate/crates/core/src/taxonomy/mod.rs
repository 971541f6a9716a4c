//! The two-layer question taxonomy: label data, the CNN + BiGRU + softmax
//! question classifier, and the taxonomy feature block consumed by the
//! fusion classifier.

mod model;
mod train;

pub use model::{TaxonomyConfig, TaxonomyModel, TaxonomyPrediction};
pub use train::{train_classifier, ClassifierReport, ClsEpochStats};

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which classifier head a label or model refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Coarse,
    Fine,
}

impl std::str::FromStr for Head {
    type Err = Error;
    fn from_str(s: &str) -> Result<Head> {
        match s {
            "coarse" => Ok(Head::Coarse),
            "fine" => Ok(Head::Fine),
            other => Err(Error::Argument(format!(
                "head must be coarse or fine, got {other:?}"
            ))),
        }
    }
}

/// The ordered coarse and fine label inventory. Fine labels are unique
/// within their coarse class; the fine head predicts over all
/// (coarse, fine) pairs jointly, addressed as `"Coarse/Fine"`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    coarse: Vec<String>,
    /// `(coarse index, fine name)` in file order.
    fine: Vec<(usize, String)>,
}

impl LabelSet {
    /// Parse TSV rows of `coarse \t fine`.
    pub fn from_rows(rows: &[(String, String)], source: &str) -> Result<LabelSet> {
        let mut coarse: Vec<String> = Vec::new();
        let mut fine: Vec<(usize, String)> = Vec::new();
        for (lineno, (c, f)) in rows.iter().enumerate() {
            let ci = match coarse.iter().position(|x| x == c) {
                Some(i) => i,
                None => {
                    coarse.push(c.clone());
                    coarse.len() - 1
                }
            };
            if fine.iter().any(|(fci, fname)| *fci == ci && fname == f) {
                return Err(Error::format(
                    source,
                    lineno + 1,
                    format!("duplicate fine label {f:?} under coarse {c:?}"),
                ));
            }
            fine.push((ci, f.clone()));
        }
        if coarse.is_empty() {
            return Err(Error::format(source, 0, "no labels"));
        }
        Ok(LabelSet { coarse, fine })
    }

    pub fn load(path: &Path) -> Result<LabelSet> {
        let path_str = path.display().to_string();
        let reader = BufReader::new(File::open(path)?);
        let mut rows = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 2 {
                return Err(Error::format(
                    &path_str,
                    lineno + 1,
                    format!("expected 2 tab-separated columns, got {}", cols.len()),
                ));
            }
            rows.push((cols[0].to_string(), cols[1].to_string()));
        }
        LabelSet::from_rows(&rows, &path_str)
    }

    /// The label inventory bundled with the crate.
    pub fn builtin() -> LabelSet {
        let rows: Vec<(String, String)> = include_str!("../../data/taxonomy_labels.tsv")
            .lines()
            .filter(|l| !l.is_empty())
            .map(|l| {
                let mut it = l.split('\t');
                (
                    it.next().unwrap().to_string(),
                    it.next().unwrap().to_string(),
                )
            })
            .collect();
        LabelSet::from_rows(&rows, "builtin").expect("bundled label file is valid")
    }

    pub fn n_coarse(&self) -> usize {
        self.coarse.len()
    }

    pub fn n_fine(&self) -> usize {
        self.fine.len()
    }

    pub fn coarse_labels(&self) -> &[String] {
        &self.coarse
    }

    /// Qualified fine labels, `"Coarse/Fine"`, in file order.
    pub fn fine_labels(&self) -> Vec<String> {
        self.fine
            .iter()
            .map(|(ci, f)| format!("{}/{}", self.coarse[*ci], f))
            .collect()
    }

    pub fn labels_for(&self, head: Head) -> Vec<String> {
        match head {
            Head::Coarse => self.coarse.clone(),
            Head::Fine => self.fine_labels(),
        }
    }

    pub fn n_labels(&self, head: Head) -> usize {
        match head {
            Head::Coarse => self.n_coarse(),
            Head::Fine => self.n_fine(),
        }
    }

    pub fn coarse_index(&self, label: &str) -> Option<usize> {
        self.coarse.iter().position(|c| c == label)
    }

    /// Index of a (coarse, fine) pair in the joint fine inventory.
    pub fn fine_index(&self, coarse: &str, fine: &str) -> Option<usize> {
        let ci = self.coarse_index(coarse)?;
        self.fine
            .iter()
            .position(|(fci, fname)| *fci == ci && fname == fine)
    }

    /// Index of a qualified `"Coarse/Fine"` label.
    pub fn fine_index_qualified(&self, qualified: &str) -> Option<usize> {
        let (coarse, fine) = qualified.split_once('/')?;
        // Fine names may themselves contain '/', so retry with longer
        // coarse prefixes if the first split does not resolve.
        if let Some(i) = self.fine_index(coarse, fine) {
            return Some(i);
        }
        let mut split_at = coarse.len() + 1;
        while let Some(rest) = qualified.get(split_at..) {
            match rest.find('/') {
                Some(p) => {
                    let c = &qualified[..split_at + p];
                    let f = &qualified[split_at + p + 1..];
                    if let Some(i) = self.fine_index(c, f) {
                        return Some(i);
                    }
                    split_at += p + 1;
                }
                None => break,
            }
        }
        None
    }

    /// Coarse label owning the fine label at `index`.
    pub fn coarse_of_fine(&self, index: usize) -> &str {
        &self.coarse[self.fine[index].0]
    }

    pub fn fine_under(&self, coarse: &str) -> Vec<&str> {
        match self.coarse_index(coarse) {
            Some(ci) => self
                .fine
                .iter()
                .filter(|(fci, _)| *fci == ci)
                .map(|(_, f)| f.as_str())
                .collect(),
            None => Vec::new(),
        }
    }
}

/// The Algorithm-1 taxonomy feature block for a question pair:
/// one-hot(coarse_p) ++ one-hot(fine_p) ++ one-hot(coarse_q) ++
/// one-hot(fine_q) ++ [coarse_match, fine_match].
/// Length is `2 * (n_coarse + n_fine) + 2`.
pub fn taxonomy_features(
    pred_p: &PairPrediction,
    pred_q: &PairPrediction,
    labels: &LabelSet,
) -> Vec<f64> {
    let nc = labels.n_coarse();
    let nf = labels.n_fine();
    let mut out = vec![0.0; 2 * (nc + nf) + 2];
    let mut one_hot = |base: usize, idx: Option<usize>| {
        if let Some(i) = idx {
            out[base + i] = 1.0;
        }
    };
    one_hot(0, pred_p.coarse_index);
    one_hot(nc, pred_p.fine_index);
    one_hot(nc + nf, pred_q.coarse_index);
    one_hot(2 * nc + nf, pred_q.fine_index);
    let coarse_match = pred_p.coarse_index.is_some() && pred_p.coarse_index == pred_q.coarse_index;
    let fine_match = pred_p.fine_index.is_some() && pred_p.fine_index == pred_q.fine_index;
    out[2 * (nc + nf)] = f64::from(coarse_match);
    out[2 * (nc + nf) + 1] = f64::from(fine_match);
    out
}

/// Coarse and fine predictions for one question, as label-inventory indices.
#[derive(Debug, Clone, Default)]
pub struct PairPrediction {
    pub coarse_index: Option<usize>,
    pub fine_index: Option<usize>,
}

impl PairPrediction {
    pub fn new(coarse_index: usize, fine_index: usize) -> Self {
        PairPrediction {
            coarse_index: Some(coarse_index),
            fine_index: Some(fine_index),
        }
    }
}
