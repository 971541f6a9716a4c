//! End-to-end question matching: assemble the per-pair feature vector
//! `[sim, taxonomy block, fsim]`, train a linear max-margin classifier for
//! the match/no-match task and a pairwise ranker for ordered-pair data, and
//! predict.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{MatchLabel, Question};
use crate::embeddings::EmbeddingTable;
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::focus::{focus_similarity, FocusResult};
use crate::numerics::Tensor;
use crate::seed::component_rng;
use crate::taxonomy::{taxonomy_features, LabelSet, PairPrediction, TaxonomyModel};

/// Which feature blocks are active. Deactivated blocks are zero-filled so
/// the feature length never changes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AblationFlags {
    pub sim: bool,
    /// Coarse one-hot blocks and the coarse-match flag.
    pub coarse: bool,
    /// Fine one-hot blocks and the fine-match flag.
    pub fine: bool,
    /// The focus-similarity feature.
    pub focus: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            sim: true,
            coarse: true,
            fine: true,
            focus: true,
        }
    }
}

/// The per-pair feature record: encoder similarity, the taxonomy block, and
/// focus similarity. Total length `2 + 2 * (n_coarse + n_fine) + 2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureVector {
    pub sim: f64,
    pub taxonomy: Vec<f64>,
    pub fsim: f64,
}

impl FeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.taxonomy.len() + 2);
        v.push(self.sim);
        v.extend_from_slice(&self.taxonomy);
        v.push(self.fsim);
        v
    }

    pub fn len(&self) -> usize {
        self.taxonomy.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Focus-extraction results keyed by the question's parse reference (falling
/// back to the question id).
#[derive(Debug, Clone, Default)]
pub struct FocusStore {
    by_key: HashMap<String, FocusResult>,
}

impl FocusStore {
    pub fn from_results(results: Vec<FocusResult>) -> Self {
        FocusStore {
            by_key: results
                .into_iter()
                .map(|r| (r.question_id.clone(), r))
                .collect(),
        }
    }

    pub fn insert(&mut self, result: FocusResult) {
        self.by_key.insert(result.question_id.clone(), result);
    }

    pub fn get(&self, question: &Question) -> Option<&FocusResult> {
        let key = question.parse_ref.as_deref().unwrap_or(&question.id);
        self.by_key.get(key)
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }
}

/// The loaded component models the matching pipeline runs on.
pub struct MatchComponents {
    pub encoder: EncoderModel,
    pub coarse: TaxonomyModel,
    pub fine: TaxonomyModel,
    pub labels: LabelSet,
    pub focus_store: FocusStore,
    pub table: Arc<EmbeddingTable>,
}

impl MatchComponents {
    /// The Algorithm-1 feature vector for one pair. Blocks deactivated by
    /// `flags` are zero-filled in place.
    pub fn build_features(
        &self,
        p: &Question,
        q: &Question,
        flags: &AblationFlags,
    ) -> Result<FeatureVector> {
        let sim = if flags.sim {
            self.encoder.similarity(p, q)?
        } else {
            0.0
        };

        let mut pred_p = PairPrediction::default();
        let mut pred_q = PairPrediction::default();
        if flags.coarse {
            pred_p.coarse_index = Some(self.coarse.classify(p, &self.labels)?.index);
            pred_q.coarse_index = Some(self.coarse.classify(q, &self.labels)?.index);
        }
        if flags.fine {
            pred_p.fine_index = Some(self.fine.classify(p, &self.labels)?.index);
            pred_q.fine_index = Some(self.fine.classify(q, &self.labels)?.index);
        }
        let taxonomy = taxonomy_features(&pred_p, &pred_q, &self.labels);

        let fsim = if flags.focus {
            let need = |question: &Question| {
                self.focus_store.get(question).ok_or_else(|| {
                    Error::Data(format!(
                        "question {:?} has no parse in the focus store",
                        question.id
                    ))
                })
            };
            focus_similarity(&self.table, need(p)?, need(q)?)
        } else {
            0.0
        };

        Ok(FeatureVector {
            sim,
            taxonomy,
            fsim,
        })
    }
}

/// Linear decision model over feature vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(len: usize) -> Self {
        LinearModel {
            weights: vec![0.0; len],
            bias: 0.0,
        }
    }

    pub fn margin(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.weights.len() {
            return Err(Error::dimension(
                "predict",
                format!("{} features", self.weights.len()),
                format!("{}", features.len()),
            ));
        }
        Ok(crate::numerics::dot(&self.weights, features) + self.bias)
    }

    /// Match when the margin is non-negative (boundary counts as match).
    pub fn predict(&self, features: &[f64]) -> Result<(MatchLabel, f64)> {
        let margin = self.margin(features)?;
        let label = if margin >= 0.0 {
            MatchLabel::Match
        } else {
            MatchLabel::NoMatch
        };
        Ok((label, margin))
    }

    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        let w = Tensor::vector(self.weights.clone());
        let b = Tensor::scalar(self.bias);
        crate::checkpoint::save_tensors(dir, &[("weights", &w), ("bias", &b)])
    }

    pub fn load(dir: &std::path::Path) -> Result<Self> {
        let tensors = crate::checkpoint::load_tensors(dir)?;
        let mut weights = None;
        let mut bias = None;
        for (name, t) in tensors {
            match name.as_str() {
                "weights" => weights = Some(t.data().to_vec()),
                "bias" => bias = Some(t.data()[0]),
                other => {
                    return Err(Error::Data(format!(
                        "unexpected tensor {other:?} in linear model checkpoint"
                    )))
                }
            }
        }
        match (weights, bias) {
            (Some(weights), Some(bias)) => Ok(LinearModel { weights, bias }),
            _ => Err(Error::Data("linear model checkpoint incomplete".into())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearTrainConfig {
    /// L2 regularization strength.
    pub reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LinearTrainConfig {
    fn default() -> Self {
        LinearTrainConfig {
            reg: 1e-3,
            epochs: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearTrainReport {
    pub train_accuracy: f64,
    pub epochs: usize,
}

fn check_uniform_length(features: &[Vec<f64>]) -> Result<usize> {
    let len = features
        .first()
        .map(|f| f.len())
        .ok_or_else(|| Error::Argument("no training features".into()))?;
    for (i, f) in features.iter().enumerate() {
        if f.len() != len {
            return Err(Error::dimension(
                "train",
                format!("{len} features"),
                format!("{} at row {i}", f.len()),
            ));
        }
    }
    Ok(len)
}

/// L2-regularized hinge loss minimized by seeded stochastic subgradient
/// descent (step size `1 / (reg * t)`).
pub fn train_pair_classifier(
    features: &[Vec<f64>],
    labels: &[MatchLabel],
    cfg: &LinearTrainConfig,
) -> Result<(LinearModel, LinearTrainReport)> {
    if features.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let len = check_uniform_length(features)?;
    let n_match = labels.iter().filter(|l| matches!(l, MatchLabel::Match)).count();
    if n_match == 0 || n_match == labels.len() {
        return Err(Error::Data(
            "training data contains a single class; both match and no-match are required".into(),
        ));
    }

    let y: Vec<f64> = labels
        .iter()
        .map(|l| match l {
            MatchLabel::Match => 1.0,
            MatchLabel::NoMatch => -1.0,
        })
        .collect();

    let mut model = LinearModel::zeros(len);
    let mut rng = component_rng(cfg.seed, "pair-classifier");
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.reg * t as f64);
            let margin = y[i] * model.margin(&features[i])?;
            let shrink = 1.0 - (eta * cfg.reg).min(1.0);
            model.weights.iter_mut().for_each(|w| *w *= shrink);
            if margin < 1.0 {
                for (w, x) in model.weights.iter_mut().zip(&features[i]) {
                    *w += eta * y[i] * x;
                }
                model.bias += eta * y[i];
            }
        }
    }

    let mut correct = 0usize;
    for (f, l) in features.iter().zip(labels) {
        if model.predict(f)?.0 == *l {
            correct += 1;
        }
    }
    Ok((
        model,
        LinearTrainReport {
            train_accuracy: correct as f64 / features.len() as f64,
            epochs: cfg.epochs,
        },
    ))
}

/// Pairwise ranking trainer: hinge on `w . (x_better - x_worse) >= 1` over
/// ordered feature pairs, same subgradient scheme, no bias (only deltas
/// matter).
pub fn train_pair_ranker(
    pairs: &[(Vec<f64>, Vec<f64>)],
    cfg: &LinearTrainConfig,
) -> Result<(LinearModel, LinearTrainReport)> {
    if pairs.is_empty() {
        return Err(Error::Argument("no ordered pairs to train on".into()));
    }
    let deltas: Vec<Vec<f64>> = pairs
        .iter()
        .map(|(b, w)| b.iter().zip(w).map(|(x, y)| x - y).collect())
        .collect();
    let len = check_uniform_length(&deltas)?;
    for (i, (b, w)) in pairs.iter().enumerate() {
        if b.len() != w.len() {
            return Err(Error::dimension(
                "train_pair_ranker",
                format!("{} features", b.len()),
                format!("{} in pair {i}", w.len()),
            ));
        }
    }

    let mut model = LinearModel::zeros(len);
    let mut rng = component_rng(cfg.seed, "pair-ranker");
    let mut order: Vec<usize> = (0..deltas.len()).collect();
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.reg * t as f64);
            let margin = model.margin(&deltas[i])?;
            let shrink = 1.0 - (eta * cfg.reg).min(1.0);
            model.weights.iter_mut().for_each(|w| *w *= shrink);
            if margin < 1.0 {
                for (w, x) in model.weights.iter_mut().zip(&deltas[i]) {
                    *w += eta * x;
                }
            }
        }
    }

    let mut correct = 0.0;
    for d in &deltas {
        let m = model.margin(d)?;
        if m > 0.0 {
            correct += 1.0;
        } else if m == 0.0 {
            correct += 0.5;
        }
    }
    Ok((
        model,
        LinearTrainReport {
            train_accuracy: correct / deltas.len() as f64,
            epochs: cfg.epochs,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn feature_vector_flattens_in_order() {
        let f = FeatureVector {
            sim: 0.5,
            taxonomy: vec![1.0, 0.0, 1.0],
            fsim: -0.25,
        };
        assert_eq!(f.to_vec(), vec![0.5, 1.0, 0.0, 1.0, -0.25]);
        assert_eq!(f.len(), 5);
    }

    fn separable_set(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<MatchLabel>) {
        let mut rng = component_rng(seed, "separable");
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let positive = i % 2 == 0;
            let base = if positive { 1.0 } else { -1.0 };
            features.push(vec![
                base + 0.2 * (rng.gen::<f64>() - 0.5),
                0.5 * base + 0.2 * (rng.gen::<f64>() - 0.5),
                rng.gen::<f64>(),
            ]);
            labels.push(if positive {
                MatchLabel::Match
            } else {
                MatchLabel::NoMatch
            });
        }
        (features, labels)
    }

    #[test]
    fn classifier_fits_a_separable_toy_set() {
        let (features, labels) = separable_set(20, 1);
        let (model, report) =
            train_pair_classifier(&features, &labels, &LinearTrainConfig::default()).unwrap();
        assert_eq!(report.train_accuracy, 1.0);
        for (f, l) in features.iter().zip(&labels) {
            assert_eq!(model.predict(f).unwrap().0, *l);
        }
    }

    #[test]
    fn identical_features_with_mixed_labels_cap_at_the_prior() {
        let features = vec![vec![1.0, 2.0]; 10];
        let labels: Vec<MatchLabel> = (0..10)
            .map(|i| {
                if i < 7 {
                    MatchLabel::Match
                } else {
                    MatchLabel::NoMatch
                }
            })
            .collect();
        let (_, report) =
            train_pair_classifier(&features, &labels, &LinearTrainConfig::default()).unwrap();
        assert!(report.train_accuracy <= 0.7 + 1e-12);
    }

    #[test]
    fn classifier_is_seed_deterministic() {
        let (features, labels) = separable_set(20, 2);
        let cfg = LinearTrainConfig::default();
        let (m1, _) = train_pair_classifier(&features, &labels, &cfg).unwrap();
        let (m2, _) = train_pair_classifier(&features, &labels, &cfg).unwrap();
        assert_eq!(m1.weights, m2.weights);
        assert_eq!(m1.bias, m2.bias);
    }

    #[test]
    fn classifier_rejects_single_class() {
        let features = vec![vec![1.0], vec![2.0]];
        let labels = vec![MatchLabel::Match, MatchLabel::Match];
        assert!(matches!(
            train_pair_classifier(&features, &labels, &LinearTrainConfig::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn zero_model_classifies_boundary_as_match() {
        let model = LinearModel::zeros(3);
        let (label, margin) = model.predict(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(label, MatchLabel::Match);
        assert_eq!(margin, 0.0);
    }

    #[test]
    fn margin_increases_with_positively_weighted_feature() {
        let model = LinearModel {
            weights: vec![2.0, -1.0],
            bias: 0.1,
        };
        let m1 = model.margin(&[1.0, 0.0]).unwrap();
        let m2 = model.margin(&[1.5, 0.0]).unwrap();
        assert!(m2 > m1);
    }

    #[test]
    fn predict_rejects_length_mismatch() {
        let model = LinearModel::zeros(3);
        assert!(matches!(
            model.predict(&[1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    fn planted_pairs(n: usize, dim: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = component_rng(seed, "planted");
        let planted: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut pairs = Vec::new();
        while pairs.len() < n {
            let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sa = crate::numerics::dot(&planted, &a);
            let sb = crate::numerics::dot(&planted, &b);
            if (sa - sb).abs() < 0.1 {
                continue; // keep the ordering unambiguous
            }
            if sa > sb {
                pairs.push((a, b));
            } else {
                pairs.push((b, a));
            }
        }
        pairs
    }

    #[test]
    fn ranker_recovers_a_planted_ordering() {
        let pairs = planted_pairs(120, 6, 3);
        let (model, report) = train_pair_ranker(&pairs, &LinearTrainConfig::default()).unwrap();
        assert!(report.train_accuracy >= 0.99, "{}", report.train_accuracy);
        // Antisymmetry: swapping better/worse flips the margin sign exactly.
        let (b, w) = &pairs[0];
        let d1: Vec<f64> = b.iter().zip(w).map(|(x, y)| x - y).collect();
        let d2: Vec<f64> = w.iter().zip(b).map(|(x, y)| x - y).collect();
        assert_eq!(model.margin(&d1).unwrap(), -model.margin(&d2).unwrap());
    }

    #[test]
    fn ranker_single_pair_converges() {
        let pairs = vec![(vec![1.0, 0.0], vec![0.0, 1.0])];
        let (model, _) = train_pair_ranker(&pairs, &LinearTrainConfig::default()).unwrap();
        let delta = vec![1.0, -1.0];
        assert!(model.margin(&delta).unwrap() > 0.0);
    }

    #[test]
    fn ranker_invariant_under_feature_translation() {
        let pairs = planted_pairs(40, 4, 5);
        let shifted: Vec<(Vec<f64>, Vec<f64>)> = pairs
            .iter()
            .map(|(b, w)| {
                (
                    b.iter().map(|x| x + 37.5).collect(),
                    w.iter().map(|x| x + 37.5).collect(),
                )
            })
            .collect();
        let cfg = LinearTrainConfig::default();
        let (m1, _) = train_pair_ranker(&pairs, &cfg).unwrap();
        let (m2, _) = train_pair_ranker(&shifted, &cfg).unwrap();
        // Deltas agree up to rounding of (x + c) - (y + c).
        for (a, b) in m1.weights.iter().zip(&m2.weights) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn ranker_rejects_empty_input() {
        assert!(matches!(
            train_pair_ranker(&[], &LinearTrainConfig::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn linear_model_checkpoint_round_trip() {
        let model = LinearModel {
            weights: vec![0.25, -1.5, 3.0],
            bias: 0.125,
        };
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let loaded = LinearModel::load(dir.path()).unwrap();
        assert_eq!(model.weights, loaded.weights);
        assert_eq!(model.bias, loaded.bias);
    }
}
