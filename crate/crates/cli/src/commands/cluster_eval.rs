use std::collections::HashMap;
use std::path::PathBuf;

use qmatch::corpus::{load_pairs, MatchLabel};
use qmatch::encoder::EncoderConfig;
use qmatch::eval::kmeans_cluster_recall;
use qmatch::{Error, Result};

use crate::config::ConfigFile;
use crate::util::{load_table, parse_oov, require_file, OutDir};

const SECTION: &str = "cluster-eval";

#[derive(clap::Args)]
pub struct Args {
    /// Question pairs, TSV; rows labeled 1 are the similar-question pairs.
    #[arg(long)]
    pairs: PathBuf,
    /// Word vectors, whitespace text format.
    #[arg(long)]
    embeddings: PathBuf,
    /// Encoder checkpoint; mean word vectors when omitted.
    #[arg(long)]
    encoder_ckpt: Option<PathBuf>,
    /// Number of clusters.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    attention: Option<bool>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    oov: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args, file: &ConfigFile) -> Result<()> {
    require_file(&args.pairs, "pairs")?;
    let k = file.get(args.k, SECTION, "k", 2usize)?;
    let seed = file.get(args.seed, SECTION, "seed", 0u64)?;
    let oov = file.get(args.oov.clone(), SECTION, "oov", "zero".to_string())?;

    let out = OutDir::create(&args.out)?;
    out.echo_config(&serde_json::json!({
        "subcommand": SECTION,
        "pairs": args.pairs,
        "embeddings": args.embeddings,
        "encoder_ckpt": args.encoder_ckpt,
        "k": k,
        "seed": seed,
    }))?;

    let table = load_table(&args.embeddings, "embeddings", parse_oov(&oov)?)?;
    let encoder = match file.get_path(args.encoder_ckpt.clone(), SECTION, "encoder_ckpt") {
        Some(dir) => {
            let kind_str = file.get(args.kind.clone(), SECTION, "kind", "gru".to_string())?;
            let cfg = EncoderConfig {
                kind: super::parse_kind(&kind_str)?,
                attention: file.get(args.attention, SECTION, "attention", true)?,
                dim: file.get(args.dim, SECTION, "dim", table.dim())?,
                seed,
                ..Default::default()
            };
            Some(super::encoder_from(Some(&dir), cfg, table.clone())?)
        }
        None => None,
    };

    let dataset = load_pairs(&args.pairs)?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for p in &dataset.examples {
        if p.label != MatchLabel::Match {
            continue;
        }
        let mut embed = |q: &qmatch::corpus::Question| -> Result<usize> {
            if let Some(&i) = index.get(&q.id) {
                return Ok(i);
            }
            let v = match &encoder {
                Some(model) => model.encode(q)?.1,
                None => table.compose_average(&q.tokens),
            };
            points.push(v);
            index.insert(q.id.clone(), points.len() - 1);
            Ok(points.len() - 1)
        };
        let a = embed(&p.q1)?;
        let b = embed(&p.q2)?;
        pairs.push((a, b));
    }
    if points.is_empty() {
        return Err(Error::Data(
            "no similar-question pairs (label 1) in the input".into(),
        ));
    }

    let outcome = kmeans_cluster_recall(&points, &pairs, k, seed)?;
    out.write_json(
        "report.json",
        &serde_json::json!({
            "k": k,
            "n_points": points.len(),
            "n_pairs": pairs.len(),
            "recall": outcome.recall,
            "iterations": outcome.iterations,
            "representation": if encoder.is_some() { "encoder" } else { "mean-word-vector" },
        }),
    )?;
    log::info!("clustering recall {:.2} at k={k}", outcome.recall);
    Ok(())
}
