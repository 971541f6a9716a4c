use std::fmt::Write as _;
use std::path::PathBuf;

use qmatch::baselines::{bm25, jaccard, tfidf_cosine, CorpusStats, DEFAULT_BM25_B, DEFAULT_BM25_K1};
use qmatch::corpus::{load_ranking_groups, RankingGroup};
use qmatch::encoder::EncoderConfig;
use qmatch::eval::{MetricsReport, RankedQuery, RankingRun};
use qmatch::{Error, Result};

use crate::config::ConfigFile;
use crate::util::{load_table, parse_oov, require_file, OutDir};

const SECTION: &str = "rank";

#[derive(clap::Args)]
pub struct Args {
    /// Ranking groups, JSON-lines.
    #[arg(long)]
    groups: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Scorer: encoder, tfidf, jaccard, or bm25.
    #[arg(long)]
    scorer: Option<String>,
    /// Word vectors (encoder scorer only).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Encoder checkpoint (fresh seeded model when omitted).
    #[arg(long)]
    encoder_ckpt: Option<PathBuf>,
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
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Rank with independently pooled encodings even for attentive models.
    #[arg(long)]
    pooled: Option<bool>,
}

fn score_group_ir(
    group: &RankingGroup,
    scorer: &str,
    k1: f64,
    b: f64,
) -> Result<Vec<(String, f64)>> {
    // Ranking mode indexes the candidate pool as the corpus.
    let pool: Vec<Vec<String>> = group.candidates().map(|c| c.tokens.clone()).collect();
    let stats = CorpusStats::build(&pool)?;
    group
        .candidates()
        .map(|c| {
            let score = match scorer {
                "tfidf" => tfidf_cosine(&group.query.tokens, &c.tokens, &stats),
                "jaccard" => jaccard(&group.query.tokens, &c.tokens),
                "bm25" => bm25(&group.query.tokens, &c.tokens, &stats, k1, b),
                other => {
                    return Err(Error::Config(format!(
                        "--scorer must be encoder, tfidf, jaccard, or bm25; got {other:?}"
                    )))
                }
            };
            Ok((c.id.clone(), score))
        })
        .collect()
}

pub fn run(args: Args, file: &ConfigFile) -> Result<()> {
    require_file(&args.groups, "groups")?;
    let scorer = file.get(args.scorer.clone(), SECTION, "scorer", "encoder".to_string())?;
    let k1 = file.get(args.k1, SECTION, "k1", DEFAULT_BM25_K1)?;
    let b = file.get(args.b, SECTION, "b", DEFAULT_BM25_B)?;
    let seed = file.get(args.seed, SECTION, "seed", 0u64)?;
    let pooled = file.get(args.pooled, SECTION, "pooled", false)?;

    let out = OutDir::create(&args.out)?;
    out.echo_config(&serde_json::json!({
        "subcommand": SECTION,
        "groups": args.groups,
        "scorer": scorer,
        "embeddings": args.embeddings,
        "encoder_ckpt": args.encoder_ckpt,
        "k1": k1,
        "b": b,
        "seed": seed,
        "pooled": pooled,
    }))?;

    let dataset = load_ranking_groups(&args.groups)?;

    let encoder = if scorer == "encoder" {
        let emb = file
            .get_path(args.embeddings.clone(), SECTION, "embeddings")
            .ok_or_else(|| Error::Config("--embeddings is required for the encoder scorer".into()))?;
        let oov = file.get(args.oov.clone(), SECTION, "oov", "zero".to_string())?;
        let table = load_table(&emb, "embeddings", parse_oov(&oov)?)?;
        let kind_str = file.get(args.kind.clone(), SECTION, "kind", "gru".to_string())?;
        let cfg = EncoderConfig {
            kind: super::parse_kind(&kind_str)?,
            attention: file.get(args.attention, SECTION, "attention", true)?,
            dim: file.get(args.dim, SECTION, "dim", table.dim())?,
            seed,
            ..Default::default()
        };
        Some(super::encoder_from(
            file.get_path(args.encoder_ckpt.clone(), SECTION, "encoder_ckpt")
                .as_deref(),
            cfg,
            table,
        )?)
    } else {
        None
    };

    let mut queries = Vec::with_capacity(dataset.groups.len());
    for group in &dataset.groups {
        let candidates = match &encoder {
            Some(model) => group
                .candidates()
                .map(|c| {
                    let score = if pooled {
                        model.similarity_independent(&group.query, c)?
                    } else {
                        model.similarity(&group.query, c)?
                    };
                    Ok((c.id.clone(), score))
                })
                .collect::<Result<Vec<_>>>()?,
            None => score_group_ir(group, &scorer, k1, b)?,
        };
        queries.push(RankedQuery {
            query_id: group.query.id.clone(),
            candidates,
            relevant: group.positives.iter().map(|p| p.id.clone()).collect(),
        });
    }
    let run = RankingRun::new(queries);

    // TSV dump: query_id, candidate_id, score, rank.
    let mut tsv = String::new();
    for q in &run.queries {
        for (rank, (id, score)) in q.ranking().iter().enumerate() {
            writeln!(tsv, "{}\t{}\t{}\t{}", q.query_id, id, score, rank + 1)
                .expect("string writes cannot fail");
        }
    }
    out.write_text("run.tsv", &tsv)?;

    let mut report = MetricsReport::for_run(&run)?;
    report.config = Some(serde_json::json!({ "scorer": scorer, "seed": seed, "pooled": pooled }));
    out.write_json("metrics.json", &report)?;
    out.write_text("metrics.txt", &(report.to_table() + "\n"))?;
    log::info!("ranked {} queries with scorer {scorer}", run.queries.len());
    Ok(())
}
