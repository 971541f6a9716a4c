//! Question encoders: GRU and RCNN recurrences over token embeddings, an
//! optional cross-attention layer, average pooling, and the max-margin
//! ranking loss.

mod train;

pub use train::{train_encoder, EncoderTrainReport, EpochStats};

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Question, RankingGroup};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::seed::component_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Gru,
    Rcnn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub attention: bool,
    /// Hidden state and embedding size.
    pub dim: usize,
    pub dropout_keep: f64,
    /// Number of stacked gated convolution layers in the RCNN.
    pub rcnn_width: usize,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Margin of the max-margin loss.
    pub margin: f64,
    /// Update the embedding matrix during training (frozen by default).
    pub train_embeddings: bool,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Gru,
            attention: true,
            dim: 300,
            dropout_keep: 0.5,
            rcnn_width: 2,
            lr: 0.01,
            batch: 50,
            epochs: 30,
            margin: 1.0,
            train_embeddings: false,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Argument("encoder dim must be >= 1".into()));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::Argument("dropout_keep must be in (0, 1]".into()));
        }
        if self.kind == EncoderKind::Rcnn && self.rcnn_width == 0 {
            return Err(Error::Argument("rcnn_width must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct GruIds {
    w_z: ParamId,
    u_z: ParamId,
    b_z: ParamId,
    w_r: ParamId,
    u_r: ParamId,
    b_r: ParamId,
    w_h: ParamId,
    u_h: ParamId,
    b_h: ParamId,
}

#[derive(Debug, Clone)]
struct RcnnIds {
    w_lambda: ParamId,
    u_lambda: ParamId,
    b_lambda: ParamId,
    /// One input projection per stacked layer.
    w_layers: Vec<ParamId>,
    b_out: ParamId,
}

#[derive(Debug, Clone)]
enum KindIds {
    Gru(GruIds),
    Rcnn(RcnnIds),
}

#[derive(Debug, Clone)]
struct AttnIds {
    w_h: ParamId,
    w_v: ParamId,
    w: ParamId,
}

/// A question encoder: recurrent parameters, optional attention projections,
/// and a reference to the embedding table.
#[derive(Debug, Clone)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    store: ParamStore,
    kind: KindIds,
    attn: Option<AttnIds>,
    emb_param: Option<ParamId>,
    table: Arc<EmbeddingTable>,
}

/// Leased parameter vars for one forward pass.
struct Leased {
    gru: Option<[Var; 9]>,
    rcnn: Option<(Var, Var, Var, Vec<Var>, Var)>,
    attn: Option<(Var, Var, Var)>,
    emb: Option<Var>,
}

impl EncoderModel {
    /// Fresh model with parameters drawn uniformly from (-0.05, 0.05),
    /// seeded from `config.seed`.
    pub fn new(config: EncoderConfig, table: Arc<EmbeddingTable>) -> Result<Self> {
        config.validate()?;
        if table.dim() != config.dim {
            return Err(Error::dimension(
                "encoder",
                format!("embedding dim {}", config.dim),
                format!("{}", table.dim()),
            ));
        }
        let d = config.dim;
        let mut rng = component_rng(config.seed, "encoder-init");
        let mut store = ParamStore::new();
        const SCALE: f64 = 0.05;

        let kind = match config.kind {
            EncoderKind::Gru => KindIds::Gru(GruIds {
                w_z: store.add_uniform("gru.w_z", &[d, d], SCALE, &mut rng)?,
                u_z: store.add_uniform("gru.u_z", &[d, d], SCALE, &mut rng)?,
                b_z: store.add("gru.b_z", Tensor::zeros(&[d]))?,
                w_r: store.add_uniform("gru.w_r", &[d, d], SCALE, &mut rng)?,
                u_r: store.add_uniform("gru.u_r", &[d, d], SCALE, &mut rng)?,
                b_r: store.add("gru.b_r", Tensor::zeros(&[d]))?,
                w_h: store.add_uniform("gru.w_h", &[d, d], SCALE, &mut rng)?,
                u_h: store.add_uniform("gru.u_h", &[d, d], SCALE, &mut rng)?,
                b_h: store.add("gru.b_h", Tensor::zeros(&[d]))?,
            }),
            EncoderKind::Rcnn => {
                let w_lambda = store.add_uniform("rcnn.w_lambda", &[d, d], SCALE, &mut rng)?;
                let u_lambda = store.add_uniform("rcnn.u_lambda", &[d, d], SCALE, &mut rng)?;
                let b_lambda = store.add("rcnn.b_lambda", Tensor::zeros(&[d]))?;
                let mut w_layers = Vec::with_capacity(config.rcnn_width);
                for i in 1..=config.rcnn_width {
                    w_layers.push(store.add_uniform(
                        &format!("rcnn.w{i}"),
                        &[d, d],
                        SCALE,
                        &mut rng,
                    )?);
                }
                let b_out = store.add("rcnn.b_out", Tensor::zeros(&[d]))?;
                KindIds::Rcnn(RcnnIds {
                    w_lambda,
                    u_lambda,
                    b_lambda,
                    w_layers,
                    b_out,
                })
            }
        };

        let attn = if config.attention {
            Some(AttnIds {
                w_h: store.add_uniform("attn.w_h", &[d, d], SCALE, &mut rng)?,
                w_v: store.add_uniform("attn.w_v", &[d, d], SCALE, &mut rng)?,
                w: store.add_uniform("attn.w", &[d], SCALE, &mut rng)?,
            })
        } else {
            None
        };

        let emb_param = if config.train_embeddings {
            Some(store.add("embeddings.matrix", table.matrix())?)
        } else {
            None
        };

        Ok(EncoderModel {
            config,
            store,
            kind,
            attn,
            emb_param,
            table,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn table(&self) -> &Arc<EmbeddingTable> {
        &self.table
    }

    /// After training with trainable embeddings, the updated matrix.
    pub fn trained_embedding_matrix(&self) -> Option<&Tensor> {
        self.emb_param.map(|id| &self.store.get(id).value)
    }

    /// Lease the parameters onto a tape. `store` is normally the model's own
    /// store; gradient checking passes a perturbed copy with the same layout.
    fn lease(&self, store: &ParamStore, tape: &mut Tape) -> Leased {
        let gru = match &self.kind {
            KindIds::Gru(g) => Some([
                tape.param(store, g.w_z),
                tape.param(store, g.u_z),
                tape.param(store, g.b_z),
                tape.param(store, g.w_r),
                tape.param(store, g.u_r),
                tape.param(store, g.b_r),
                tape.param(store, g.w_h),
                tape.param(store, g.u_h),
                tape.param(store, g.b_h),
            ]),
            KindIds::Rcnn(_) => None,
        };
        let rcnn = match &self.kind {
            KindIds::Rcnn(r) => Some((
                tape.param(store, r.w_lambda),
                tape.param(store, r.u_lambda),
                tape.param(store, r.b_lambda),
                r.w_layers.iter().map(|&id| tape.param(store, id)).collect(),
                tape.param(store, r.b_out),
            )),
            KindIds::Gru(_) => None,
        };
        let attn = self.attn.as_ref().map(|a| {
            (
                tape.param(store, a.w_h),
                tape.param(store, a.w_v),
                tape.param(store, a.w),
            )
        });
        let emb = self.emb_param.map(|id| tape.param(store, id));
        Leased {
            gru,
            rcnn,
            attn,
            emb,
        }
    }

    /// Token embeddings as tape vars; dropout on the inputs in training mode.
    fn embed_tokens(
        &self,
        tape: &mut Tape,
        leased: &Leased,
        tokens: &[String],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Var>> {
        let mut out = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let v = match (leased.emb, self.table.resolve(tok)) {
                (Some(matrix), Some(row)) => tape.row(matrix, row)?,
                _ => tape.constant(Tensor::vector(self.table.lookup(tok))),
            };
            let v = if mode == Mode::Train && self.config.dropout_keep < 1.0 {
                tape.dropout(v, self.config.dropout_keep, rng)?
            } else {
                v
            };
            out.push(v);
        }
        Ok(out)
    }

    fn rcnn_step(
        &self,
        tape: &mut Tape,
        p: &(Var, Var, Var, Vec<Var>, Var),
        v: Var,
        c_prev: &[Var],
    ) -> Result<(Vec<Var>, Var)> {
        let (w_lambda, u_lambda, b_lambda, w_layers, b_out) = p;
        // The gate sees the previous top-layer state.
        let h_prev = *c_prev.last().expect("rcnn has at least one layer");
        let lx = tape.matvec(*w_lambda, v)?;
        let lh = tape.matvec(*u_lambda, h_prev)?;
        let lambda = {
            let s = tape.add(lx, lh)?;
            let s = tape.add(s, *b_lambda)?;
            tape.sigmoid(s)
        };
        let neg_l = tape.neg(lambda);
        let one_minus_l = tape.add_scalar(neg_l, 1.0);

        let mut c_new = Vec::with_capacity(c_prev.len());
        for (i, &w_i) in w_layers.iter().enumerate() {
            let wx = tape.matvec(w_i, v)?;
            let input = if i == 0 {
                wx
            } else {
                tape.add(c_prev[i - 1], wx)?
            };
            let carry = tape.mul(lambda, c_prev[i])?;
            let fresh = tape.mul(one_minus_l, input)?;
            c_new.push(tape.add(carry, fresh)?);
        }
        let top = *c_new.last().unwrap();
        let pre = tape.add(top, *b_out)?;
        let h = tape.tanh(pre);
        Ok((c_new, h))
    }

    /// Hidden states h_1..h_n for a token sequence, starting from h_0 = 0.
    fn recur(&self, tape: &mut Tape, leased: &Leased, inputs: &[Var]) -> Result<Vec<Var>> {
        let d = self.config.dim;
        let mut states = Vec::with_capacity(inputs.len());
        match &self.kind {
            KindIds::Gru(_) => {
                let p = leased.gru.as_ref().unwrap();
                let mut h = tape.constant(Tensor::zeros(&[d]));
                for &v in inputs {
                    h = crate::rnn::gru_cell(tape, p, v, h)?;
                    states.push(h);
                }
            }
            KindIds::Rcnn(_) => {
                let p = leased.rcnn.as_ref().unwrap();
                let mut c: Vec<Var> = (0..self.config.rcnn_width)
                    .map(|_| tape.constant(Tensor::zeros(&[d])))
                    .collect();
                for &v in inputs {
                    let (c_new, h) = self.rcnn_step(tape, p, v, &c)?;
                    c = c_new;
                    states.push(h);
                }
            }
        }
        Ok(states)
    }

    /// Taped encoding of one question: embeddings, hidden-state matrix H
    /// (d x n), and the mean-pooled vector.
    fn encode_on_tape(
        &self,
        tape: &mut Tape,
        leased: &Leased,
        tokens: &[String],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<Var>, Var, Var)> {
        if tokens.is_empty() {
            return Err(Error::Argument("cannot encode an empty question".into()));
        }
        let embeds = self.embed_tokens(tape, leased, tokens, mode, rng)?;
        let states = self.recur(tape, leased, &embeds)?;
        let h = tape.hstack(&states)?;
        let pooled = tape.mean_pool(h)?;
        Ok((embeds, h, pooled))
    }

    /// Encode a question in evaluation mode. Returns the hidden-state matrix
    /// `H` (d x n, column t is the state after token t) and the pooled
    /// vector.
    pub fn encode(&self, question: &Question) -> Result<(Tensor, Vec<f64>)> {
        let mut tape = Tape::new();
        let leased = self.lease(&self.store, &mut tape);
        let mut rng = component_rng(0, "encode-eval");
        let (_, h, pooled) =
            self.encode_on_tape(&mut tape, &leased, &question.tokens, Mode::Eval, &mut rng)?;
        Ok((tape.value(h).clone(), tape.value(pooled).data().to_vec()))
    }

    /// One attention read: weights over the columns of `h` for context
    /// vector `v_t`, and the weighted hidden representation.
    fn attend_on_tape(
        &self,
        tape: &mut Tape,
        attn: (Var, Var, Var),
        h: Var,
        wh_h: Var,
        v_t: Var,
    ) -> Result<(Var, Var)> {
        let (_, w_v, w) = attn;
        let n = tape.value(h).cols();
        let wv_v = tape.matvec(w_v, v_t)?;
        let tiled = tape.broadcast_col(wv_v, n)?;
        let pre = tape.add(wh_h, tiled)?;
        let c = tape.tanh(pre);
        let scores = tape.vecmat(w, c)?;
        let alpha = tape.softmax(scores)?;
        let r = tape.matvec(h, alpha)?;
        Ok((alpha, r))
    }

    /// Attention weights and weighted representation for one context vector.
    /// `h` is the hidden-state matrix of the question being represented;
    /// `v_t` is a token embedding of the other question.
    pub fn attend(&self, h: &Tensor, v_t: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let attn = self.attn.as_ref().ok_or_else(|| {
            Error::Contract("attention is disabled for this model; use encode".into())
        })?;
        if !h.is_matrix() || h.rows() != self.config.dim || v_t.len() != self.config.dim {
            return Err(Error::dimension(
                "attend",
                format!("H [d={}, n], v_t [d]", self.config.dim),
                format!("H {:?}, v_t [{}]", h.shape(), v_t.len()),
            ));
        }
        let mut tape = Tape::new();
        let h_var = tape.constant(h.clone());
        let w_h = tape.param(&self.store, attn.w_h);
        let w_v = tape.param(&self.store, attn.w_v);
        let w = tape.param(&self.store, attn.w);
        let wh_h = tape.matmul(w_h, h_var)?;
        let v = tape.constant(Tensor::vector(v_t.to_vec()));
        let (alpha, r) = self.attend_on_tape(&mut tape, (w_h, w_v, w), h_var, wh_h, v)?;
        Ok((
            tape.value(alpha).data().to_vec(),
            tape.value(r).data().to_vec(),
        ))
    }

    /// Attentive pair representations: each question is represented by the
    /// mean of attention reads over its own hidden states, driven by the
    /// other question's token embeddings.
    fn encode_pair_on_tape(
        &self,
        tape: &mut Tape,
        leased: &Leased,
        p_tokens: &[String],
        q_tokens: &[String],
        mode: Mode,
        rng: &mut ChaCha8Rng,
        alpha_sink: &mut Option<&mut Vec<Vec<f64>>>,
    ) -> Result<(Var, Var)> {
        let attn = leased
            .attn
            .ok_or_else(|| Error::Contract("attention is disabled for this model; use encode".into()))?;
        let (p_embeds, h_p, _) = self.encode_on_tape(tape, leased, p_tokens, mode, rng)?;
        let (q_embeds, h_q, _) = self.encode_on_tape(tape, leased, q_tokens, mode, rng)?;
        let (w_h, _, _) = attn;
        let wh_hp = tape.matmul(w_h, h_p)?;
        let wh_hq = tape.matmul(w_h, h_q)?;

        // vec_q: attend over H_q once per token of p.
        let mut reads_q = Vec::with_capacity(p_embeds.len());
        for &v_t in &p_embeds {
            let (alpha, r) = self.attend_on_tape(tape, attn, h_q, wh_hq, v_t)?;
            if let Some(sink) = alpha_sink.as_deref_mut() {
                sink.push(tape.value(alpha).data().to_vec());
            }
            reads_q.push(r);
        }
        let stacked_q = tape.hstack(&reads_q)?;
        let vec_q = tape.mean_pool(stacked_q)?;

        // vec_p: roles swapped.
        let mut reads_p = Vec::with_capacity(q_embeds.len());
        for &v_t in &q_embeds {
            let (_, r) = self.attend_on_tape(tape, attn, h_p, wh_hp, v_t)?;
            reads_p.push(r);
        }
        let stacked_p = tape.hstack(&reads_p)?;
        let vec_p = tape.mean_pool(stacked_p)?;

        Ok((vec_p, vec_q))
    }

    /// Attentive pair encoding in evaluation mode: `(vec_p, vec_q)`.
    pub fn encode_pair_attentive(&self, p: &Question, q: &Question) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let leased = self.lease(&self.store, &mut tape);
        let mut rng = component_rng(0, "encode-eval");
        let (vec_p, vec_q) = self.encode_pair_on_tape(
            &mut tape,
            &leased,
            &p.tokens,
            &q.tokens,
            Mode::Eval,
            &mut rng,
            &mut None,
        )?;
        Ok((
            tape.value(vec_p).data().to_vec(),
            tape.value(vec_q).data().to_vec(),
        ))
    }

    fn similarity_on_tape(
        &self,
        tape: &mut Tape,
        leased: &Leased,
        p_tokens: &[String],
        q_tokens: &[String],
        mode: Mode,
        rng: &mut ChaCha8Rng,
        alpha_sink: &mut Option<&mut Vec<Vec<f64>>>,
    ) -> Result<Var> {
        if self.config.attention {
            let (vec_p, vec_q) =
                self.encode_pair_on_tape(tape, leased, p_tokens, q_tokens, mode, rng, alpha_sink)?;
            tape.cosine(vec_p, vec_q)
        } else {
            let (_, _, pooled_p) = self.encode_on_tape(tape, leased, p_tokens, mode, rng)?;
            let (_, _, pooled_q) = self.encode_on_tape(tape, leased, q_tokens, mode, rng)?;
            tape.cosine(pooled_p, pooled_q)
        }
    }

    /// Cosine similarity of independently pooled encodings, regardless of
    /// whether the model carries attention parameters. The non-attentive
    /// ranking mode for attentively trained models.
    pub fn similarity_independent(&self, p: &Question, q: &Question) -> Result<f64> {
        let mut tape = Tape::new();
        let leased = self.lease(&self.store, &mut tape);
        let mut rng = component_rng(0, "encode-eval");
        let (_, _, pooled_p) =
            self.encode_on_tape(&mut tape, &leased, &p.tokens, Mode::Eval, &mut rng)?;
        let (_, _, pooled_q) =
            self.encode_on_tape(&mut tape, &leased, &q.tokens, Mode::Eval, &mut rng)?;
        let sim = tape.cosine(pooled_p, pooled_q)?;
        Ok(tape.value(sim).item())
    }

    /// Cosine similarity of the two final question representations
    /// (attentive pair encoding when attention is on, independent pooled
    /// encodings otherwise). Deterministic: evaluation mode.
    pub fn similarity(&self, p: &Question, q: &Question) -> Result<f64> {
        let mut tape = Tape::new();
        let leased = self.lease(&self.store, &mut tape);
        let mut rng = component_rng(0, "encode-eval");
        let sim = self.similarity_on_tape(
            &mut tape,
            &leased,
            &p.tokens,
            &q.tokens,
            Mode::Eval,
            &mut rng,
            &mut None,
        )?;
        Ok(tape.value(sim).item())
    }

    /// Per-pair attention matrix (rows: tokens of `p`, columns: tokens of
    /// `q`): the weights over `q`'s hidden states for each token of `p`.
    pub fn attention_matrix(&self, p: &Question, q: &Question) -> Result<AttentionDump> {
        if self.attn.is_none() {
            return Err(Error::Contract(
                "attention is disabled for this model; use encode".into(),
            ));
        }
        let mut tape = Tape::new();
        let leased = self.lease(&self.store, &mut tape);
        let mut rng = component_rng(0, "encode-eval");
        let mut alpha = Vec::new();
        {
            let mut sink = Some(&mut alpha);
            self.encode_pair_on_tape(
                &mut tape,
                &leased,
                &p.tokens,
                &q.tokens,
                Mode::Eval,
                &mut rng,
                &mut sink,
            )?;
        }
        Ok(AttentionDump {
            tokens_p: p.tokens.clone(),
            tokens_q: q.tokens.clone(),
            alpha,
        })
    }

    /// Taped max-margin loss for one ranking group; see [`max_margin_loss`].
    fn margin_loss_on_tape(
        &self,
        tape: &mut Tape,
        leased: &Leased,
        group: &RankingGroup,
        margin: f64,
        mode: Mode,
        rng: &mut ChaCha8Rng,
        alpha_sink: &mut Option<&mut Vec<Vec<f64>>>,
    ) -> Result<Var> {
        if group.positives.is_empty() {
            return Err(Error::Argument("ranking group has no positives".into()));
        }
        if group.negatives.is_empty() {
            return Err(Error::Argument("ranking group has no negatives".into()));
        }
        let query = &group.query.tokens;
        let mut scores: Vec<Var> = Vec::new();
        for cand in group.candidates() {
            let s = self.similarity_on_tape(
                tape,
                leased,
                query,
                &cand.tokens,
                mode,
                rng,
                alpha_sink,
            )?;
            scores.push(s);
        }
        let n_pos = group.positives.len();

        // For each positive: max over that positive and the negatives of
        // f(q, p) - f(q, p+) + margin * [p != p+]. The p = p+ term is exactly
        // zero, so the maximum never drops below zero and the loss vanishes
        // exactly when every negative trails every positive by the margin.
        // Ties keep the earliest candidate, preferring the zero-gradient p+
        // term at the boundary.
        let mut per_positive = Vec::with_capacity(n_pos);
        for (pi, &pos_score) in scores[..n_pos].iter().enumerate() {
            let mut best: Option<(f64, Var)> = None;
            for (ci, &cand_score) in scores.iter().enumerate() {
                if ci < n_pos && ci != pi {
                    continue; // other positives are not competitors
                }
                let lambda = if ci == pi { 0.0 } else { margin };
                let value = tape.value(cand_score).item() - tape.value(pos_score).item() + lambda;
                let replace = match &best {
                    None => true,
                    Some((bv, _)) => value > *bv,
                };
                if replace {
                    let diff = tape.sub(cand_score, pos_score)?;
                    let term = tape.add_scalar(diff, lambda);
                    best = Some((value, term));
                }
            }
            per_positive.push(best.unwrap().1);
        }
        let mut total = per_positive[0];
        for &t in &per_positive[1..] {
            total = tape.add(total, t)?;
        }
        Ok(tape.scale(total, 1.0 / n_pos as f64))
    }

    /// Max-margin ranking loss of one group (evaluation mode). The loss is
    /// the mean over positives of
    /// `max_p [f(q, p) - f(q, p+) + margin * [p != p+]]`,
    /// which is zero exactly when every negative trails every positive by at
    /// least the margin.
    pub fn max_margin_loss(&self, group: &RankingGroup, margin: f64) -> Result<f64> {
        let mut tape = Tape::new();
        let leased = self.lease(&self.store, &mut tape);
        let mut rng = component_rng(0, "encode-eval");
        let loss = self.margin_loss_on_tape(
            &mut tape,
            &leased,
            group,
            margin,
            Mode::Eval,
            &mut rng,
            &mut None,
        )?;
        Ok(tape.value(loss).item())
    }

    /// Checkpoint the parameters (manifest + tensors) plus the config as
    /// `encoder.json`.
    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        crate::checkpoint::save_params(dir, &self.store)?;
        std::fs::write(
            dir.join("encoder.json"),
            serde_json::to_vec_pretty(&self.config)?,
        )?;
        Ok(())
    }

    /// Load a checkpoint saved by [`EncoderModel::save`].
    pub fn load(dir: &std::path::Path, table: Arc<EmbeddingTable>) -> Result<Self> {
        let config: EncoderConfig =
            serde_json::from_slice(&std::fs::read(dir.join("encoder.json"))?)?;
        let mut model = EncoderModel::new(config, table)?;
        crate::checkpoint::load_params(dir, &mut model.store)?;
        Ok(model)
    }

    /// Taped max-margin loss reading parameters from `store` (which must
    /// have this model's layout). Runs in evaluation mode, so the forward is
    /// a deterministic function of the store — the entry point for gradient
    /// verification.
    pub fn margin_loss_taped(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        group: &RankingGroup,
        margin: f64,
    ) -> Result<Var> {
        let leased = self.lease(store, tape);
        let mut rng = component_rng(0, "encode-eval");
        self.margin_loss_on_tape(tape, &leased, group, margin, Mode::Eval, &mut rng, &mut None)
    }
}

/// Score-level max-margin loss: `scores[..n_positives]` are the positives'
/// similarities to the query, the rest are the negatives'. Mean over
/// positives of `max(0, max_neg [f- - f+ + margin])`; zero exactly when
/// every negative trails every positive by at least the margin.
pub fn max_margin_loss_from_scores(
    scores: &[f64],
    n_positives: usize,
    margin: f64,
) -> Result<f64> {
    if n_positives == 0 || n_positives > scores.len() {
        return Err(Error::Argument(format!(
            "n_positives {} out of range for {} scores",
            n_positives,
            scores.len()
        )));
    }
    if n_positives == scores.len() {
        return Err(Error::Argument("no negatives in the score list".into()));
    }
    let mut total = 0.0;
    for &pos in &scores[..n_positives] {
        let mut best = 0.0f64; // the p = p+ term
        for &neg in &scores[n_positives..] {
            best = best.max(neg - pos + margin);
        }
        total += best;
    }
    Ok(total / n_positives as f64)
}

/// Machine-readable attention dump for one question pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionDump {
    pub tokens_p: Vec<String>,
    pub tokens_q: Vec<String>,
    /// `alpha[t][i]`: weight of `tokens_q[i]`'s hidden state when reading
    /// token `t` of `p`.
    pub alpha: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::OovPolicy;

    fn tiny_table() -> Arc<EmbeddingTable> {
        Arc::new(
            EmbeddingTable::from_entries(
                &[
                    ("alpha", vec![0.6, -0.2]),
                    ("beta", vec![-0.4, 0.8]),
                    ("gamma", vec![0.1, 0.3]),
                    ("delta", vec![-0.7, -0.5]),
                ],
                OovPolicy::Zero,
            )
            .unwrap(),
        )
    }

    fn tiny_config(kind: EncoderKind, attention: bool) -> EncoderConfig {
        EncoderConfig {
            kind,
            attention,
            dim: 2,
            dropout_keep: 1.0,
            rcnn_width: 2,
            seed: 9,
            ..Default::default()
        }
    }

    fn zero_params(model: &mut EncoderModel) {
        for p in model.store_mut().iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn zero_weight_gru_keeps_hidden_at_zero() {
        let mut model =
            EncoderModel::new(tiny_config(EncoderKind::Gru, false), tiny_table()).unwrap();
        zero_params(&mut model);
        let q = Question::new("q", "alpha beta gamma");
        let (h, pooled) = model.encode(&q).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
        assert!(pooled.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_token_pooled_equals_column() {
        let model = EncoderModel::new(tiny_config(EncoderKind::Gru, false), tiny_table()).unwrap();
        let q = Question::new("q", "alpha");
        let (h, pooled) = model.encode(&q).unwrap();
        assert_eq!(h.cols(), 1);
        assert_eq!(h.col(0), pooled);
    }

    #[test]
    fn empty_question_is_an_argument_error() {
        let model = EncoderModel::new(tiny_config(EncoderKind::Gru, false), tiny_table()).unwrap();
        let q = Question::new("q", "");
        assert!(model.encode(&q).is_err());
    }

    #[test]
    fn gru_states_stay_inside_unit_box() {
        // h_t is a convex combination of h_{t-1} and a tanh, so |h| < 1.
        for seed in 0..5 {
            let mut cfg = tiny_config(EncoderKind::Gru, false);
            cfg.seed = seed;
            let model = EncoderModel::new(cfg, tiny_table()).unwrap();
            let q = Question::new("q", "alpha beta gamma delta alpha beta");
            let (h, _) = model.encode(&q).unwrap();
            assert!(h.data().iter().all(|&v| v.abs() < 1.0));
        }
    }

    #[test]
    fn rcnn_encodes_and_is_deterministic() {
        let model = EncoderModel::new(tiny_config(EncoderKind::Rcnn, false), tiny_table()).unwrap();
        let q = Question::new("q", "alpha beta gamma");
        let (h1, p1) = model.encode(&q).unwrap();
        let (h2, p2) = model.encode(&q).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
        assert_eq!(h1.cols(), 3);
    }

    #[test]
    fn attend_single_column_gives_unit_weight() {
        let model = EncoderModel::new(tiny_config(EncoderKind::Gru, true), tiny_table()).unwrap();
        let h = Tensor::from_rows(&[vec![0.3], vec![-0.4]]).unwrap();
        let (alpha, r) = model.attend(&h, &[0.1, 0.2]).unwrap();
        assert_eq!(alpha, vec![1.0]);
        assert_eq!(r, vec![0.3, -0.4]);
    }

    #[test]
    fn attend_zero_score_vector_gives_uniform_weights() {
        let mut model =
            EncoderModel::new(tiny_config(EncoderKind::Gru, true), tiny_table()).unwrap();
        let id = model.store().id_of("attn.w").unwrap();
        model
            .store_mut()
            .get_mut(id)
            .value
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 0.0);
        let h = Tensor::from_rows(&[vec![0.3, 1.0, -0.2], vec![-0.4, 0.5, 0.9]]).unwrap();
        let (alpha, _) = model.attend(&h, &[0.1, 0.2]).unwrap();
        for a in alpha {
            assert!((a - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attend_matches_hand_computed_oracle() {
        // d=2, n=2, W_H = W_v = I, w = [1, 0], v_t = 0:
        // C = tanh(H), scores = first row of C, alpha = softmax(scores),
        // r = H alpha.
        let mut model =
            EncoderModel::new(tiny_config(EncoderKind::Gru, true), tiny_table()).unwrap();
        let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        for name in ["attn.w_h", "attn.w_v"] {
            let id = model.store().id_of(name).unwrap();
            model.store_mut().get_mut(id).value = eye.clone();
        }
        let id = model.store().id_of("attn.w").unwrap();
        model.store_mut().get_mut(id).value = Tensor::vector(vec![1.0, 0.0]);

        let h = Tensor::from_rows(&[vec![0.5, -1.0], vec![0.25, 0.75]]).unwrap();
        let (alpha, r) = model.attend(&h, &[0.0, 0.0]).unwrap();

        let s0 = 0.5f64.tanh();
        let s1 = (-1.0f64).tanh();
        let m = s0.max(s1);
        let e0 = (s0 - m).exp();
        let e1 = (s1 - m).exp();
        let a0 = e0 / (e0 + e1);
        let a1 = e1 / (e0 + e1);
        assert!((alpha[0] - a0).abs() < 1e-12);
        assert!((alpha[1] - a1).abs() < 1e-12);
        assert!((r[0] - (0.5 * a0 - 1.0 * a1)).abs() < 1e-12);
        assert!((r[1] - (0.25 * a0 + 0.75 * a1)).abs() < 1e-12);
    }

    #[test]
    fn attend_requires_attention_enabled() {
        let model = EncoderModel::new(tiny_config(EncoderKind::Gru, false), tiny_table()).unwrap();
        let h = Tensor::zeros(&[2, 1]);
        assert!(matches!(
            model.attend(&h, &[0.0, 0.0]),
            Err(Error::Contract(_))
        ));
        let p = Question::new("p", "alpha");
        let q = Question::new("q", "beta");
        assert!(matches!(
            model.encode_pair_attentive(&p, &q),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn identical_questions_give_identical_pair_vectors() {
        let model = EncoderModel::new(tiny_config(EncoderKind::Gru, true), tiny_table()).unwrap();
        let q = Question::new("q", "alpha beta");
        let (vp, vq) = model.encode_pair_attentive(&q, &q).unwrap();
        assert_eq!(vp, vq);
    }

    #[test]
    fn single_token_pair_read_is_the_only_column() {
        let model = EncoderModel::new(tiny_config(EncoderKind::Gru, true), tiny_table()).unwrap();
        let p = Question::new("p", "alpha");
        let q = Question::new("q", "beta");
        let (_, vq) = model.encode_pair_attentive(&p, &q).unwrap();
        let (h_q, _) = model.encode(&q).unwrap();
        for (a, b) in vq.iter().zip(h_q.col(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_is_length_covariant() {
        // Truncating a question leaves the surviving columns untouched.
        let model = EncoderModel::new(tiny_config(EncoderKind::Gru, false), tiny_table()).unwrap();
        let full = Question::new("q", "alpha beta gamma delta");
        let cut = Question::new("q", "alpha beta");
        let (h_full, _) = model.encode(&full).unwrap();
        let (h_cut, _) = model.encode(&cut).unwrap();
        for t in 0..2 {
            assert_eq!(h_full.col(t), h_cut.col(t));
        }
    }

    #[test]
    fn tied_negative_loses_exactly_the_margin() {
        // f- == f+ gives loss = margin through the score-level route.
        let loss = max_margin_loss_from_scores(&[0.7, 0.7], 1, 1.0).unwrap();
        assert_eq!(loss, 1.0);
        let loss = max_margin_loss_from_scores(&[0.7, 0.7], 1, 0.25).unwrap();
        assert_eq!(loss, 0.25);
    }

    #[test]
    fn independent_similarity_works_with_attention_enabled() {
        let model = EncoderModel::new(tiny_config(EncoderKind::Gru, true), tiny_table()).unwrap();
        let p = Question::new("p", "alpha beta");
        let q = Question::new("q", "gamma delta");
        let s = model.similarity_independent(&p, &q).unwrap();
        assert!((-1.0..=1.0).contains(&s));
        let self_sim = model.similarity_independent(&p, &p).unwrap();
        assert!((self_sim - 1.0).abs() < 1e-9);
        // The attentive and independent routes are genuinely different.
        let attentive = model.similarity(&p, &q).unwrap();
        assert_ne!(s, attentive);
    }

    #[test]
    fn similarity_self_is_one_and_bounded() {
        for attention in [false, true] {
            let model =
                EncoderModel::new(tiny_config(EncoderKind::Gru, attention), tiny_table()).unwrap();
            let q = Question::new("q", "alpha beta gamma");
            let s = model.similarity(&q, &q).unwrap();
            assert!((s - 1.0).abs() < 1e-9, "self-similarity {s}");
            let p = Question::new("p", "delta gamma");
            let s = model.similarity(&p, &q).unwrap();
            assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn similarity_invariant_to_scaling_final_representations() {
        // Cosine scale invariance, checked through the raw vectors.
        let model = EncoderModel::new(tiny_config(EncoderKind::Gru, true), tiny_table()).unwrap();
        let p = Question::new("p", "alpha beta");
        let q = Question::new("q", "gamma delta");
        let (vp, vq) = model.encode_pair_attentive(&p, &q).unwrap();
        let base = crate::numerics::cosine_value(&vp, &vq);
        let scaled_p: Vec<f64> = vp.iter().map(|v| 3.5 * v).collect();
        let scaled_q: Vec<f64> = vq.iter().map(|v| 0.02 * v).collect();
        let scaled = crate::numerics::cosine_value(&scaled_p, &scaled_q);
        assert!((base - scaled).abs() < 1e-12);
    }

    fn group_with_scores(model: &EncoderModel) -> RankingGroup {
        // Build a group from the vocabulary; scores come from the model.
        let _ = model;
        RankingGroup {
            query: Question::new("q", "alpha beta"),
            positives: vec![Question::new("p", "alpha gamma")],
            negatives: vec![
                Question::new("n1", "delta delta"),
                Question::new("n2", "beta delta"),
            ],
        }
    }

    #[test]
    fn margin_loss_is_nonnegative_and_needs_candidates() {
        let model = EncoderModel::new(tiny_config(EncoderKind::Gru, true), tiny_table()).unwrap();
        let group = group_with_scores(&model);
        let loss = model.max_margin_loss(&group, 1.0).unwrap();
        assert!(loss >= 0.0);

        let no_neg = RankingGroup {
            query: group.query.clone(),
            positives: group.positives.clone(),
            negatives: vec![],
        };
        assert!(model.max_margin_loss(&no_neg, 1.0).is_err());
        let no_pos = RankingGroup {
            query: group.query.clone(),
            positives: vec![],
            negatives: group.negatives.clone(),
        };
        assert!(model.max_margin_loss(&no_pos, 1.0).is_err());
    }

    #[test]
    fn checkpoint_round_trip_preserves_values() {
        let model = EncoderModel::new(tiny_config(EncoderKind::Gru, true), tiny_table()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let loaded = EncoderModel::load(dir.path(), tiny_table()).unwrap();
        for ((_, a), (_, b)) in model.store().iter().zip(loaded.store().iter()) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.value.data().iter().zip(b.value.data()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }
}
