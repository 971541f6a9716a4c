use std::collections::HashSet;
use std::path::PathBuf;
use std::str::FromStr;

use qmatch::baselines::{
    bm25, jaccard, tfidf_cosine, threshold_classify, BaselineMethod, CorpusStats, ThresholdTable,
    DEFAULT_BM25_B, DEFAULT_BM25_K1,
};
use qmatch::corpus::{load_pairs, MatchLabel};
use qmatch::Result;
use serde::Serialize;

use crate::config::ConfigFile;
use crate::util::{require_file, OutDir};

const SECTION: &str = "baseline";

#[derive(clap::Args)]
pub struct Args {
    /// Question pairs, TSV: id1, id2, text1, text2, label.
    #[arg(long)]
    pairs: PathBuf,
    /// Scoring method: tfidf, jaccard, or bm25.
    #[arg(long)]
    method: String,
    /// Dataset name for the threshold lookup (e.g. semantic-squad, quora).
    #[arg(long)]
    dataset: Option<String>,
    /// Threshold table TSV (bundled defaults when omitted).
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Serialize)]
struct Row {
    id1: String,
    id2: String,
    score: f64,
    decision: MatchLabel,
    gold: MatchLabel,
}

pub fn run(args: Args, file: &ConfigFile) -> Result<()> {
    require_file(&args.pairs, "pairs")?;
    let method = BaselineMethod::from_str(&args.method)
        .map_err(|e| qmatch::Error::Config(format!("--method: {e}")))?;
    let dataset = file.get(
        args.dataset.clone(),
        SECTION,
        "dataset",
        "semantic-squad".to_string(),
    )?;
    let k1 = file.get(args.k1, SECTION, "k1", DEFAULT_BM25_K1)?;
    let b = file.get(args.b, SECTION, "b", DEFAULT_BM25_B)?;

    let table = match file.get_path(args.thresholds.clone(), SECTION, "thresholds") {
        Some(p) => {
            require_file(&p, "thresholds")?;
            ThresholdTable::load(&p)?
        }
        None => ThresholdTable::builtin(),
    };

    let out = OutDir::create(&args.out)?;
    out.echo_config(&serde_json::json!({
        "subcommand": SECTION,
        "pairs": args.pairs,
        "method": method,
        "dataset": dataset,
        "thresholds": args.thresholds,
        "k1": k1,
        "b": b,
        // Classification mode builds stats over the union of the pair file's
        // questions.
        "stats_scope": "union-of-pair-questions",
    }))?;

    let pairs = load_pairs(&args.pairs)?;

    // Distinct questions (by id) form the statistics corpus.
    let mut seen: HashSet<&str> = HashSet::new();
    let mut corpus: Vec<Vec<String>> = Vec::new();
    for p in &pairs.examples {
        for q in [&p.q1, &p.q2] {
            if seen.insert(&q.id) {
                corpus.push(q.tokens.clone());
            }
        }
    }
    let stats = CorpusStats::build(&corpus)?;

    let mut rows = Vec::with_capacity(pairs.examples.len());
    let mut correct = 0usize;
    for p in &pairs.examples {
        let score = match method {
            BaselineMethod::Tfidf => tfidf_cosine(&p.q1.tokens, &p.q2.tokens, &stats),
            BaselineMethod::Jaccard => jaccard(&p.q1.tokens, &p.q2.tokens),
            BaselineMethod::Bm25 => bm25(&p.q1.tokens, &p.q2.tokens, &stats, k1, b),
        };
        let decision = threshold_classify(score, method, &dataset, &table)?;
        if decision == p.label {
            correct += 1;
        }
        rows.push(Row {
            id1: p.q1.id.clone(),
            id2: p.q2.id.clone(),
            score,
            decision,
            gold: p.label,
        });
    }
    out.write_jsonl("scores.jsonl", &rows)?;
    out.write_json(
        "report.json",
        &serde_json::json!({
            "method": method,
            "dataset": dataset,
            "threshold": table.get(&dataset, method),
            "n_pairs": rows.len(),
            "accuracy": correct as f64 / rows.len().max(1) as f64,
            "stats_scope": "union-of-pair-questions",
            "stats_docs": stats.n_docs,
        }),
    )?;
    log::info!("scored {} pairs with {method}", rows.len());
    Ok(())
}
