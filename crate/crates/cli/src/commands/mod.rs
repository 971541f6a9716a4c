pub mod baseline;
pub mod cluster_eval;
pub mod focus;
pub mod gradcheck;
pub mod match_cmd;
pub mod poqr;
pub mod rank;
pub mod train_encoder;
pub mod train_taxonomy;

use std::path::Path;
use std::sync::Arc;

use qmatch::embeddings::EmbeddingTable;
use qmatch::encoder::{EncoderConfig, EncoderKind, EncoderModel};
use qmatch::taxonomy::{Head, LabelSet, TaxonomyConfig, TaxonomyModel};
use qmatch::{Error, Result};

use crate::util::require_file;

pub(crate) fn parse_kind(s: &str) -> Result<EncoderKind> {
    match s {
        "gru" => Ok(EncoderKind::Gru),
        "rcnn" => Ok(EncoderKind::Rcnn),
        other => Err(Error::Config(format!(
            "--kind must be gru or rcnn, got {other:?}"
        ))),
    }
}

/// Load an encoder checkpoint, or initialize a fresh seeded model.
pub(crate) fn encoder_from(
    ckpt: Option<&Path>,
    cfg: EncoderConfig,
    table: Arc<EmbeddingTable>,
) -> Result<EncoderModel> {
    match ckpt {
        Some(dir) => {
            require_file(&dir.join("encoder.json"), "encoder-ckpt")?;
            EncoderModel::load(dir, table)
        }
        None => EncoderModel::new(cfg, table),
    }
}

/// Load a classifier checkpoint, or initialize a fresh seeded model.
pub(crate) fn taxonomy_from(
    ckpt: Option<&Path>,
    cfg: TaxonomyConfig,
    head: Head,
    labels: &LabelSet,
    table: Arc<EmbeddingTable>,
    flag: &str,
) -> Result<TaxonomyModel> {
    match ckpt {
        Some(dir) => {
            if !dir.join("taxonomy.json").exists() {
                return Err(Error::Config(format!(
                    "--{flag}: {} is not a taxonomy checkpoint",
                    dir.display()
                )));
            }
            TaxonomyModel::load(dir, labels, table)
        }
        None => TaxonomyModel::new(cfg, head, labels, table),
    }
}

/// Label set from a TSV path, or the bundled default.
pub(crate) fn labels_from(path: Option<&Path>) -> Result<LabelSet> {
    match path {
        Some(p) => {
            require_file(p, "labels")?;
            LabelSet::load(p)
        }
        None => Ok(LabelSet::builtin()),
    }
}
