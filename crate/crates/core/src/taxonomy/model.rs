//! The question classification network: zero-padded convolution over token
//! embeddings, per-position max pooling, a bidirectional GRU, and a softmax
//! head over the selected label inventory.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::rnn::{gru_cell, GruVars};
use crate::seed::component_rng;
use crate::taxonomy::{Head, LabelSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaxonomyConfig {
    /// Embedding dimension (must match the table).
    pub dim: usize,
    /// Number of convolution filters.
    pub filters: usize,
    /// Convolution feature width; even widths align left.
    pub width: usize,
    /// BiGRU hidden size per direction.
    pub hidden: usize,
    pub lr: f64,
    pub dropout_keep: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TaxonomyConfig {
    fn default() -> Self {
        TaxonomyConfig {
            dim: 300,
            filters: 100,
            width: 2,
            hidden: 150,
            lr: 0.01,
            dropout_keep: 0.5,
            batch: 50,
            epochs: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ClsMode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct Ids {
    conv_f: ParamId,
    fwd: [ParamId; 9],
    bwd: [ParamId; 9],
    ff_w: ParamId,
    ff_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

/// Prediction of one head for one question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaxonomyPrediction {
    pub label: String,
    pub probability: f64,
    /// Full distribution in label-inventory order.
    pub distribution: Vec<f64>,
    /// Index of `label` in the inventory.
    pub index: usize,
}

/// One trained classifier head (coarse or fine).
#[derive(Debug, Clone)]
pub struct TaxonomyModel {
    pub config: TaxonomyConfig,
    pub head: Head,
    n_labels: usize,
    store: ParamStore,
    ids: Ids,
    table: Arc<EmbeddingTable>,
}

impl TaxonomyModel {
    pub fn new(
        config: TaxonomyConfig,
        head: Head,
        labels: &LabelSet,
        table: Arc<EmbeddingTable>,
    ) -> Result<Self> {
        if table.dim() != config.dim {
            return Err(Error::dimension(
                "taxonomy",
                format!("embedding dim {}", config.dim),
                format!("{}", table.dim()),
            ));
        }
        if config.filters == 0 || config.width == 0 || config.hidden == 0 {
            return Err(Error::Argument(
                "filters, width, and hidden must all be >= 1".into(),
            ));
        }
        let n_labels = labels.n_labels(head);
        let (d, k, m, g) = (config.dim, config.filters, config.width, config.hidden);
        let mut rng = component_rng(config.seed, "taxonomy-init");
        let mut store = ParamStore::new();

        // Glorot-uniform weights, zero biases.
        let glorot = |shape: &[usize]| (6.0 / (shape[0] + shape[1]) as f64).sqrt();
        let dense = |store: &mut ParamStore, name: &str, shape: &[usize], rng: &mut ChaCha8Rng| {
            store.add_uniform(name, shape, glorot(shape), rng)
        };

        let conv_f = dense(&mut store, "conv.f", &[k, m * d], &mut rng)?;
        let gru = |store: &mut ParamStore, prefix: &str, rng: &mut ChaCha8Rng| {
            Ok::<[ParamId; 9], Error>([
                dense(store, &format!("{prefix}.w_z"), &[g, k], rng)?,
                dense(store, &format!("{prefix}.u_z"), &[g, g], rng)?,
                store.add(&format!("{prefix}.b_z"), Tensor::zeros(&[g]))?,
                dense(store, &format!("{prefix}.w_r"), &[g, k], rng)?,
                dense(store, &format!("{prefix}.u_r"), &[g, g], rng)?,
                store.add(&format!("{prefix}.b_r"), Tensor::zeros(&[g]))?,
                dense(store, &format!("{prefix}.w_h"), &[g, k], rng)?,
                dense(store, &format!("{prefix}.u_h"), &[g, g], rng)?,
                store.add(&format!("{prefix}.b_h"), Tensor::zeros(&[g]))?,
            ])
        };
        let fwd = gru(&mut store, "gru_fwd", &mut rng)?;
        let bwd = gru(&mut store, "gru_bwd", &mut rng)?;
        let ff_w = dense(&mut store, "ff.w", &[g, 2 * g], &mut rng)?;
        let ff_b = store.add("ff.b", Tensor::zeros(&[g]))?;
        let out_w = dense(&mut store, "out.w", &[n_labels, g], &mut rng)?;
        let out_b = store.add("out.b", Tensor::zeros(&[n_labels]))?;

        Ok(TaxonomyModel {
            config,
            head,
            n_labels,
            store,
            ids: Ids {
                conv_f,
                fwd,
                bwd,
                ff_w,
                ff_b,
                out_w,
                out_b,
            },
            table,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    fn lease_gru(&self, store: &ParamStore, tape: &mut Tape, ids: &[ParamId; 9]) -> GruVars {
        [
            tape.param(store, ids[0]),
            tape.param(store, ids[1]),
            tape.param(store, ids[2]),
            tape.param(store, ids[3]),
            tape.param(store, ids[4]),
            tape.param(store, ids[5]),
            tape.param(store, ids[6]),
            tape.param(store, ids[7]),
            tape.param(store, ids[8]),
        ]
    }

    /// Convolution feature columns c_1..c_n (each `[filters]`) over the
    /// zero-padded embedding sequence. Windows of odd width center on t;
    /// even widths cover `t-width+1 ..= t`.
    fn conv_on_tape(
        &self,
        tape: &mut Tape,
        conv_f: Var,
        embeds: &[Var],
    ) -> Result<Vec<Var>> {
        let d = self.config.dim;
        let m = self.config.width;
        let n = embeds.len();
        let offsets: Vec<isize> = if m % 2 == 1 {
            let half = (m / 2) as isize;
            (-half..=half).collect()
        } else {
            ((1 - m as isize)..=0).collect()
        };
        let zero = tape.constant(Tensor::zeros(&[d]));
        let mut cols = Vec::with_capacity(n);
        for t in 0..n as isize {
            let mut window: Option<Var> = None;
            for &off in &offsets {
                let idx = t + off;
                let v = if idx >= 0 && (idx as usize) < n {
                    embeds[idx as usize]
                } else {
                    zero
                };
                window = Some(match window {
                    None => v,
                    Some(w) => tape.concat(w, v)?,
                });
            }
            let pre = tape.matvec(conv_f, window.unwrap())?;
            cols.push(tape.tanh(pre));
        }
        Ok(cols)
    }

    /// Taped forward to the logit vector.
    pub(crate) fn logits_on_tape(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        tokens: &[String],
        mode: ClsMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::Argument("cannot classify an empty question".into()));
        }
        let conv_f = tape.param(store, self.ids.conv_f);
        let fwd = self.lease_gru(store, tape, &self.ids.fwd);
        let bwd = self.lease_gru(store, tape, &self.ids.bwd);
        let ff_w = tape.param(store, self.ids.ff_w);
        let ff_b = tape.param(store, self.ids.ff_b);
        let out_w = tape.param(store, self.ids.out_w);
        let out_b = tape.param(store, self.ids.out_b);

        let mut embeds = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let v = tape.constant(Tensor::vector(self.table.lookup(tok)));
            let v = if mode == ClsMode::Train && self.config.dropout_keep < 1.0 {
                tape.dropout(v, self.config.dropout_keep, rng)?
            } else {
                v
            };
            embeds.push(v);
        }

        let conv_cols = self.conv_on_tape(tape, conv_f, &embeds)?;
        let c = tape.hstack(&conv_cols)?;
        let pooled = tape.window_max(c, self.config.width)?;

        let n = tokens.len();
        let g = self.config.hidden;
        let mut h_f = tape.constant(Tensor::zeros(&[g]));
        for t in 0..n {
            let x = tape.col(pooled, t)?;
            h_f = gru_cell(tape, &fwd, x, h_f)?;
        }
        let mut h_b = tape.constant(Tensor::zeros(&[g]));
        for t in (0..n).rev() {
            let x = tape.col(pooled, t)?;
            h_b = gru_cell(tape, &bwd, x, h_b)?;
        }
        let h = tape.concat(h_f, h_b)?;

        let ff_pre = tape.matvec(ff_w, h)?;
        let ff_pre = tape.add(ff_pre, ff_b)?;
        let ff = tape.tanh(ff_pre);
        let logits = tape.matvec(out_w, ff)?;
        tape.add(logits, out_b)
    }

    /// Taped cross-entropy of one labeled question; the entry point for
    /// gradient verification (evaluation mode, no dropout).
    pub fn cross_entropy_taped(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        tokens: &[String],
        gold: usize,
    ) -> Result<Var> {
        let mut rng = component_rng(0, "classify-eval");
        let logits = self.logits_on_tape(store, tape, tokens, ClsMode::Eval, &mut rng)?;
        let log_probs = tape.log_softmax(logits)?;
        let picked = tape.pick(log_probs, gold)?;
        Ok(tape.neg(picked))
    }

    /// Classify a token sequence. The distribution is a softmax over the
    /// head's label inventory; the label is the argmax with ties broken by
    /// inventory order.
    pub fn classify_tokens(&self, tokens: &[String], labels: &LabelSet) -> Result<TaxonomyPrediction> {
        if labels.n_labels(self.head) != self.n_labels {
            return Err(Error::Argument(format!(
                "label set has {} {:?} labels, model was built for {}",
                labels.n_labels(self.head),
                self.head,
                self.n_labels
            )));
        }
        let mut tape = Tape::new();
        let mut rng = component_rng(0, "classify-eval");
        let logits = self.logits_on_tape(&self.store, &mut tape, tokens, ClsMode::Eval, &mut rng)?;
        let probs = tape.softmax(logits)?;
        let distribution = tape.value(probs).data().to_vec();
        let mut index = 0;
        for (i, &p) in distribution.iter().enumerate() {
            if p > distribution[index] {
                index = i;
            }
        }
        let names = labels.labels_for(self.head);
        Ok(TaxonomyPrediction {
            label: names[index].clone(),
            probability: distribution[index],
            distribution,
            index,
        })
    }

    /// Classify a [`crate::corpus::Question`].
    pub fn classify(
        &self,
        question: &crate::corpus::Question,
        labels: &LabelSet,
    ) -> Result<TaxonomyPrediction> {
        self.classify_tokens(&question.tokens, labels)
    }

    /// Checkpoint parameters plus config/head as `taxonomy.json`.
    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        crate::checkpoint::save_params(dir, &self.store)?;
        let meta = serde_json::json!({
            "config": self.config,
            "head": self.head,
            "n_labels": self.n_labels,
        });
        std::fs::write(dir.join("taxonomy.json"), serde_json::to_vec_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(
        dir: &std::path::Path,
        labels: &LabelSet,
        table: Arc<EmbeddingTable>,
    ) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            config: TaxonomyConfig,
            head: Head,
            n_labels: usize,
        }
        let meta: Meta = serde_json::from_slice(&std::fs::read(dir.join("taxonomy.json"))?)?;
        if labels.n_labels(meta.head) != meta.n_labels {
            return Err(Error::Data(format!(
                "checkpoint expects {} labels for head {:?}, label set has {}",
                meta.n_labels,
                meta.head,
                labels.n_labels(meta.head)
            )));
        }
        let mut model = TaxonomyModel::new(meta.config, meta.head, labels, table)?;
        crate::checkpoint::load_params(dir, &mut model.store)?;
        Ok(model)
    }
}
