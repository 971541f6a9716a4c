use std::path::PathBuf;

use qmatch::corpus::load_ranking_groups;
use qmatch::encoder::{train_encoder, EncoderConfig};
use qmatch::Result;

use crate::config::ConfigFile;
use crate::util::{load_table, parse_oov, require_file, OutDir};

const SECTION: &str = "train-encoder";

#[derive(clap::Args)]
pub struct Args {
    /// Ranking groups, JSON-lines.
    #[arg(long)]
    data: PathBuf,
    /// Held-out ranking groups for per-epoch MRR tracking.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Word vectors, whitespace text format.
    #[arg(long)]
    embeddings: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Encoder family: gru or rcnn.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    attention: Option<bool>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    dropout_keep: Option<f64>,
    #[arg(long)]
    rcnn_width: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    train_embeddings: Option<bool>,
    /// OOV policy: zero or learned-unk.
    #[arg(long)]
    oov: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: Args, file: &ConfigFile) -> Result<()> {
    require_file(&args.data, "data")?;
    require_file(&args.embeddings, "embeddings")?;

    let defaults = EncoderConfig::default();
    let kind_str = file.get(args.kind, SECTION, "kind", "gru".to_string())?;
    let oov_str = file.get(args.oov, SECTION, "oov", "zero".to_string())?;
    let config = EncoderConfig {
        kind: super::parse_kind(&kind_str)?,
        attention: file.get(args.attention, SECTION, "attention", defaults.attention)?,
        dim: file.get(args.dim, SECTION, "dim", defaults.dim)?,
        dropout_keep: file.get(args.dropout_keep, SECTION, "dropout_keep", defaults.dropout_keep)?,
        rcnn_width: file.get(args.rcnn_width, SECTION, "rcnn_width", defaults.rcnn_width)?,
        lr: file.get(args.lr, SECTION, "lr", defaults.lr)?,
        batch: file.get(args.batch, SECTION, "batch", defaults.batch)?,
        epochs: file.get(args.epochs, SECTION, "epochs", defaults.epochs)?,
        margin: file.get(args.margin, SECTION, "margin", defaults.margin)?,
        train_embeddings: file.get(
            args.train_embeddings,
            SECTION,
            "train_embeddings",
            defaults.train_embeddings,
        )?,
        seed: file.get(args.seed, SECTION, "seed", defaults.seed)?,
    };

    let out = OutDir::create(&args.out)?;
    out.echo_config(&serde_json::json!({
        "subcommand": SECTION,
        "data": args.data,
        "dev": args.dev,
        "embeddings": args.embeddings,
        "oov": oov_str,
        "encoder": config,
    }))?;

    let table = load_table(&args.embeddings, "embeddings", parse_oov(&oov_str)?)?;
    let dataset = load_ranking_groups(&args.data)?;
    let dev = match &args.dev {
        Some(p) => {
            require_file(p, "dev")?;
            Some(load_ranking_groups(p)?.groups)
        }
        None => None,
    };

    let (model, report) = train_encoder(config, &dataset.groups, table, dev.as_deref())?;
    model.save(&out.join("checkpoint"))?;
    out.write_json("report.json", &report)?;
    log::info!(
        "trained on {} groups; checkpoint at {}",
        dataset.groups.len(),
        out.join("checkpoint").display()
    );
    Ok(())
}
