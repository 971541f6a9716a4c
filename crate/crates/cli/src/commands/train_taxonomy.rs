use std::path::PathBuf;
use std::str::FromStr;

use qmatch::corpus::load_labeled_questions;
use qmatch::taxonomy::{train_classifier, Head, TaxonomyConfig};
use qmatch::Result;

use crate::config::ConfigFile;
use crate::util::{load_table, parse_oov, require_file, OutDir};

const SECTION: &str = "train-taxonomy";

#[derive(clap::Args)]
pub struct Args {
    /// Which head to train: coarse or fine.
    #[arg(long)]
    head: String,
    /// Labeled questions, TSV: text, coarse, fine.
    #[arg(long)]
    data: PathBuf,
    /// Held-out labeled questions.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Word vectors, whitespace text format.
    #[arg(long)]
    embeddings: PathBuf,
    /// Label inventory TSV (bundled default when omitted).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout_keep: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    oov: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: Args, file: &ConfigFile) -> Result<()> {
    require_file(&args.data, "data")?;
    require_file(&args.embeddings, "embeddings")?;
    let head = Head::from_str(&args.head)
        .map_err(|e| qmatch::Error::Config(format!("--head: {e}")))?;

    let defaults = TaxonomyConfig::default();
    let oov_str = file.get(args.oov, SECTION, "oov", "zero".to_string())?;
    let config = TaxonomyConfig {
        dim: file.get(args.dim, SECTION, "dim", defaults.dim)?,
        filters: file.get(args.filters, SECTION, "filters", defaults.filters)?,
        width: file.get(args.width, SECTION, "width", defaults.width)?,
        hidden: file.get(args.hidden, SECTION, "hidden", defaults.hidden)?,
        lr: file.get(args.lr, SECTION, "lr", defaults.lr)?,
        dropout_keep: file.get(args.dropout_keep, SECTION, "dropout_keep", defaults.dropout_keep)?,
        batch: file.get(args.batch, SECTION, "batch", defaults.batch)?,
        epochs: file.get(args.epochs, SECTION, "epochs", defaults.epochs)?,
        seed: file.get(args.seed, SECTION, "seed", defaults.seed)?,
    };

    let out = OutDir::create(&args.out)?;
    out.echo_config(&serde_json::json!({
        "subcommand": SECTION,
        "head": head,
        "data": args.data,
        "dev": args.dev,
        "embeddings": args.embeddings,
        "labels": args.labels,
        "oov": oov_str,
        "classifier": config,
    }))?;

    let labels = super::labels_from(args.labels.as_deref())?;
    let table = load_table(&args.embeddings, "embeddings", parse_oov(&oov_str)?)?;
    let questions = load_labeled_questions(&args.data)?;
    let dev = match &args.dev {
        Some(p) => {
            require_file(p, "dev")?;
            Some(load_labeled_questions(p)?)
        }
        None => None,
    };

    let (model, report) =
        train_classifier(config, &questions, &labels, head, table, dev.as_deref())?;
    model.save(&out.join("checkpoint"))?;
    out.write_json("report.json", &report)?;
    log::info!(
        "trained {head:?} head on {} questions; final accuracy {:.4}",
        questions.len(),
        report.final_train_accuracy
    );
    Ok(())
}
