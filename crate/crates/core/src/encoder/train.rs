use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::RankingGroup;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{mrr, RankedQuery, RankingRun};
use crate::numerics::{Adam, Tape};
use crate::seed::component_rng;

use super::{EncoderConfig, EncoderModel, Mode};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_mrr: Option<f64>,
    /// Largest |sum(alpha) - 1| over every attention read this epoch.
    pub alpha_row_sum_max_dev: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EncoderTrainReport {
    pub epochs: Vec<EpochStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_dev_mrr: Option<f64>,
    /// Largest |sum(alpha) - 1| over the whole run.
    pub alpha_row_sum_max_dev: f64,
}

/// Rank every dev group's candidates by model similarity and return MRR.
pub(crate) fn dev_mrr(model: &EncoderModel, dev: &[RankingGroup]) -> Result<f64> {
    let mut queries = Vec::with_capacity(dev.len());
    for g in dev {
        let mut candidates = Vec::new();
        for c in g.candidates() {
            candidates.push((c.id.clone(), model.similarity(&g.query, c)?));
        }
        queries.push(RankedQuery {
            query_id: g.query.id.clone(),
            candidates,
            relevant: g.positives.iter().map(|p| p.id.clone()).collect(),
        });
    }
    mrr(&RankingRun::new(queries))
}

/// Mini-batch Adam over shuffled ranking groups. Per-epoch dev MRR is
/// logged when dev groups are supplied and the best-dev parameters are the
/// ones returned. Fully deterministic given `config.seed`.
pub fn train_encoder(
    config: EncoderConfig,
    groups: &[RankingGroup],
    table: Arc<EmbeddingTable>,
    dev_groups: Option<&[RankingGroup]>,
) -> Result<(EncoderModel, EncoderTrainReport)> {
    if groups.is_empty() {
        return Err(Error::Argument("no training groups".into()));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.positives.is_empty() {
            return Err(Error::Data(format!(
                "training group {i} (query {:?}) has no positives",
                g.query.id
            )));
        }
        if g.negatives.is_empty() {
            return Err(Error::Data(format!(
                "training group {i} (query {:?}) has no negatives",
                g.query.id
            )));
        }
    }

    let mut model = EncoderModel::new(config.clone(), table)?;
    let mut adam = Adam::new(config.lr);
    let mut shuffle_rng = component_rng(config.seed, "encoder-shuffle");
    let mut dropout_rng = component_rng(config.seed, "encoder-dropout");

    let mut report = EncoderTrainReport::default();
    let mut best: Option<(f64, crate::numerics::ParamStore)> = None;
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        let mut alpha_dev: f64 = 0.0;
        for batch in order.chunks(config.batch.max(1)) {
            step += 1;
            model.store_mut().zero_grads();
            let inv = 1.0 / batch.len() as f64;
            for &gi in batch {
                let group = &groups[gi];
                let mut tape = Tape::new();
                let leased = model.lease(model.store(), &mut tape);
                let mut alphas: Vec<Vec<f64>> = Vec::new();
                let loss = {
                    let mut sink = if config.attention {
                        Some(&mut alphas)
                    } else {
                        None
                    };
                    model.margin_loss_on_tape(
                        &mut tape,
                        &leased,
                        group,
                        config.margin,
                        Mode::Train,
                        &mut dropout_rng,
                        &mut sink,
                    )?
                };
                for row in &alphas {
                    let dev = (row.iter().sum::<f64>() - 1.0).abs();
                    alpha_dev = alpha_dev.max(dev);
                }
                let loss_val = tape.value(loss).item();
                if !loss_val.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        step,
                        msg: format!("non-finite loss for group {:?}", group.query.id),
                    });
                }
                epoch_loss += loss_val;
                let scaled = tape.scale(loss, inv);
                tape.backward(scaled, model.store_mut())?;
            }
            model.store_mut().clip_grad_norm(5.0);
            adam.step(model.store_mut())?;
        }

        let epoch_dev_mrr = match dev_groups {
            Some(dev) if !dev.is_empty() => Some(dev_mrr(&model, dev)?),
            _ => None,
        };
        if let Some(m) = epoch_dev_mrr {
            let better = best.as_ref().map(|(b, _)| m > *b).unwrap_or(true);
            if better {
                best = Some((m, model.store().clone()));
                report.best_epoch = Some(epoch);
                report.best_dev_mrr = Some(m);
            }
        }

        report.alpha_row_sum_max_dev = report.alpha_row_sum_max_dev.max(alpha_dev);
        let stats = EpochStats {
            epoch,
            mean_loss: epoch_loss / groups.len() as f64,
            dev_mrr: epoch_dev_mrr,
            alpha_row_sum_max_dev: alpha_dev,
        };
        log::info!(
            "epoch {}: loss {:.6}{}",
            epoch,
            stats.mean_loss,
            stats
                .dev_mrr
                .map(|m| format!(", dev mrr {m:.4}"))
                .unwrap_or_default()
        );
        report.epochs.push(stats);
    }

    if let Some((_, store)) = best {
        *model.store_mut() = store;
    }
    Ok((model, report))
}
