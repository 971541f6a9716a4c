use std::collections::HashMap;
use std::path::{Path, PathBuf};

use qmatch::baselines::{
    bm25, jaccard, tfidf_cosine, CorpusStats, DEFAULT_BM25_B, DEFAULT_BM25_K1,
};
use qmatch::corpus::{expand_poqr, kfold_split, load_poqr_groups, OrderedPair, Question};
use qmatch::eval::{annotator_averaged, poqr_pair_accuracy};
use qmatch::fusion::{train_pair_ranker, AblationFlags, LinearTrainConfig, MatchComponents};
use qmatch::{Error, Result};

use crate::config::ConfigFile;
use crate::util::{require_file, OutDir};

use super::match_cmd::{build_components, parse_ablation, ComponentArgs};

const SECTION: &str = "poqr";

#[derive(clap::Args)]
pub struct Args {
    /// POQR groups, JSON-lines: {ref, paraphrases, useful, neutral}.
    #[arg(long)]
    groups: PathBuf,
    /// Second annotator's groups; reports the annotator average.
    #[arg(long)]
    groups2: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Feature source: `ir` (tfidf/jaccard/bm25 scores) or `components`
    /// (the full feature pipeline).
    #[arg(long)]
    feature_mode: Option<String>,
    /// Cross-validation folds over the ordered pairs.
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma list of feature blocks to deactivate (components mode).
    #[arg(long)]
    ablate: Option<String>,
    #[command(flatten)]
    components: ComponentArgs,
}

enum Features {
    Ir(CorpusStats, f64, f64),
    Components(Box<MatchComponents>, AblationFlags),
}

impl Features {
    fn vector(&self, reference: &Question, candidate: &Question) -> Result<Vec<f64>> {
        match self {
            Features::Ir(stats, k1, b) => Ok(vec![
                tfidf_cosine(&reference.tokens, &candidate.tokens, stats),
                jaccard(&reference.tokens, &candidate.tokens),
                bm25(&reference.tokens, &candidate.tokens, stats, *k1, *b),
            ]),
            Features::Components(c, flags) => {
                Ok(c.build_features(reference, candidate, flags)?.to_vec())
            }
        }
    }
}

struct AnnotatorOutcome {
    n_groups: usize,
    n_pairs: usize,
    per_fold: Vec<f64>,
    mean: f64,
    stddev: f64,
}

fn run_annotator(
    path: &Path,
    features: &Features,
    folds: usize,
    train_cfg: &LinearTrainConfig,
    out: &OutDir,
    tag: &str,
) -> Result<AnnotatorOutcome> {
    let groups = load_poqr_groups(path)?;
    let pairs = expand_poqr(&groups);
    if pairs.is_empty() {
        return Err(Error::Data(format!(
            "{} expands to zero ordered pairs",
            path.display()
        )));
    }

    // Feature cache per (reference, candidate).
    let mut cache: HashMap<(String, String), Vec<f64>> = HashMap::new();
    for p in &pairs {
        for cand in [&p.better, &p.worse] {
            let key = (p.reference.id.clone(), cand.id.clone());
            if !cache.contains_key(&key) {
                cache.insert(key, features.vector(&p.reference, cand)?);
            }
        }
    }
    let delta_pairs = |idx: &[usize]| -> Vec<(Vec<f64>, Vec<f64>)> {
        idx.iter()
            .map(|&i| {
                let p: &OrderedPair = &pairs[i];
                (
                    cache[&(p.reference.id.clone(), p.better.id.clone())].clone(),
                    cache[&(p.reference.id.clone(), p.worse.id.clone())].clone(),
                )
            })
            .collect()
    };

    let splits = kfold_split(pairs.len(), folds, train_cfg.seed)?;
    let mut per_fold = Vec::with_capacity(folds);
    for (train_idx, test_idx) in &splits {
        let (model, _) = train_pair_ranker(&delta_pairs(train_idx), train_cfg)?;
        let test_pairs: Vec<OrderedPair> = test_idx.iter().map(|&i| pairs[i].clone()).collect();
        let score_fn = |r: &str, c: &str| {
            cache
                .get(&(r.to_string(), c.to_string()))
                .map(|f| model.margin(f).expect("cached features have model length"))
        };
        per_fold.push(poqr_pair_accuracy(&score_fn, &test_pairs)?);
    }
    let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
    let var = per_fold.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / per_fold.len() as f64;

    // A full-data ranker for downstream use.
    let all: Vec<usize> = (0..pairs.len()).collect();
    let (final_model, _) = train_pair_ranker(&delta_pairs(&all), train_cfg)?;
    final_model.save(&out.join(&format!("ranker-{tag}")))?;

    Ok(AnnotatorOutcome {
        n_groups: groups.len(),
        n_pairs: pairs.len(),
        per_fold,
        mean,
        stddev: var.sqrt(),
    })
}

pub fn run(args: Args, file: &ConfigFile) -> Result<()> {
    require_file(&args.groups, "groups")?;
    let feature_mode = file.get(
        args.feature_mode.clone(),
        SECTION,
        "feature_mode",
        "ir".to_string(),
    )?;
    let folds = file.get(args.folds, SECTION, "folds", 10usize)?;
    let defaults = LinearTrainConfig::default();
    let train_cfg = LinearTrainConfig {
        reg: file.get(args.reg, SECTION, "reg", defaults.reg)?,
        epochs: file.get(args.epochs, SECTION, "epochs", defaults.epochs)?,
        seed: file.get(args.components.seed, SECTION, "seed", 0u64)?,
    };

    let out = OutDir::create(&args.out)?;
    out.echo_config(&serde_json::json!({
        "subcommand": SECTION,
        "groups": args.groups,
        "groups2": args.groups2,
        "feature_mode": feature_mode,
        "folds": folds,
        "reg": train_cfg.reg,
        "epochs": train_cfg.epochs,
        "seed": train_cfg.seed,
        "ablate": args.ablate,
    }))?;

    let features = match feature_mode.as_str() {
        "ir" => {
            // Statistics over every question mentioned in the group files.
            let mut corpus: Vec<Vec<String>> = Vec::new();
            let mut push_groups = |path: &Path| -> Result<()> {
                for g in load_poqr_groups(path)? {
                    corpus.push(g.reference.tokens.clone());
                    for q in g.paraphrases.iter().chain(&g.useful).chain(&g.neutral) {
                        corpus.push(q.tokens.clone());
                    }
                }
                Ok(())
            };
            push_groups(&args.groups)?;
            if let Some(g2) = &args.groups2 {
                require_file(g2, "groups2")?;
                push_groups(g2)?;
            }
            Features::Ir(
                CorpusStats::build(&corpus)?,
                DEFAULT_BM25_K1,
                DEFAULT_BM25_B,
            )
        }
        "components" => {
            let flags = parse_ablation(&file.get(
                args.ablate.clone(),
                SECTION,
                "ablate",
                String::new(),
            )?)?;
            Features::Components(
                Box::new(build_components(&args.components, file, SECTION)?),
                flags,
            )
        }
        other => {
            return Err(Error::Config(format!(
                "--feature-mode must be ir or components, got {other:?}"
            )))
        }
    };

    let first = run_annotator(&args.groups, &features, folds, &train_cfg, &out, "1")?;
    let second = match &args.groups2 {
        Some(g2) => Some(run_annotator(g2, &features, folds, &train_cfg, &out, "2")?),
        None => None,
    };

    let averaged = second
        .as_ref()
        .map(|s| annotator_averaged(first.mean, s.mean));
    let annotator_json = |o: &AnnotatorOutcome| {
        serde_json::json!({
            "groups": o.n_groups,
            "ordered_pairs": o.n_pairs,
            "per_fold": o.per_fold,
            "pair_accuracy_mean": o.mean,
            "pair_accuracy_stddev": o.stddev,
        })
    };
    out.write_json(
        "report.json",
        &serde_json::json!({
            "feature_mode": feature_mode,
            "folds": folds,
            "annotator1": annotator_json(&first),
            "annotator2": second.as_ref().map(annotator_json),
            "annotator_averaged": averaged,
        }),
    )?;
    log::info!(
        "pair accuracy {:.4}{}",
        first.mean,
        averaged
            .map(|a| format!(" (annotator average {a:.4})"))
            .unwrap_or_default()
    );
    Ok(())
}
