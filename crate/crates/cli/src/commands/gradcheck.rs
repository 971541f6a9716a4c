use std::path::PathBuf;
use std::sync::Arc;

use qmatch::corpus::{tokenize, Question, RankingGroup};
use qmatch::embeddings::{EmbeddingTable, OovPolicy};
use qmatch::encoder::{EncoderConfig, EncoderKind, EncoderModel};
use qmatch::numerics::{grad_check, GradCheckConfig};
use qmatch::seed::component_rng;
use qmatch::taxonomy::{Head, LabelSet, TaxonomyConfig, TaxonomyModel};
use qmatch::{Error, Result};
use rand::Rng;

use crate::config::ConfigFile;
use crate::util::OutDir;

const SECTION: &str = "gradcheck";

#[derive(clap::Args)]
pub struct Args {
    /// Output directory for the verification report (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn table(dim: usize, seed: u64) -> Arc<EmbeddingTable> {
    let mut rng = component_rng(seed, "gradcheck-table");
    let words = ["how", "what", "red", "blue", "fast", "slow", "cat", "dog"];
    let entries: Vec<(&str, Vec<f64>)> = words
        .iter()
        .map(|w| (*w, (0..dim).map(|_| rng.gen_range(-0.8..0.8)).collect()))
        .collect();
    Arc::new(EmbeddingTable::from_entries(&entries, OovPolicy::Zero).unwrap())
}

pub fn run(args: Args, file: &ConfigFile) -> Result<()> {
    let dim = file.get(args.dim, SECTION, "dim", 8usize)?;
    let cfg = GradCheckConfig {
        eps: file.get(args.eps, SECTION, "eps", 1e-5)?,
        tol: file.get(args.tol, SECTION, "tol", 1e-4)?,
        max_coords_per_param: None,
        seed: file.get(args.seed, SECTION, "seed", 0u64)?,
    };

    let group = RankingGroup {
        query: Question::new("q", "how fast cat red blue dog"),
        positives: vec![Question::new("p", "what slow cat red")],
        negatives: vec![
            Question::new("n1", "blue dog fast"),
            Question::new("n2", "what what red"),
        ],
    };

    let mut checks = Vec::new();
    let mut all_passed = true;

    let encoder_cases = [
        ("gru", EncoderKind::Gru, false),
        ("gru-attention", EncoderKind::Gru, true),
        ("rcnn-attention", EncoderKind::Rcnn, true),
    ];
    for (name, kind, attention) in encoder_cases {
        let model = EncoderModel::new(
            EncoderConfig {
                kind,
                attention,
                dim,
                dropout_keep: 1.0,
                seed: cfg.seed,
                ..Default::default()
            },
            table(dim, 1),
        )?;
        let mut store = model.store().clone();
        let report = grad_check(
            &mut store,
            |s, t| model.margin_loss_taped(s, t, &group, 1.0),
            &cfg,
        )?;
        all_passed &= report.passed();
        checks.push(serde_json::json!({
            "model": name,
            "coordinates": report.checked,
            "failures": report.failures.len(),
            "worst": report.worst,
            "passed": report.passed(),
        }));
    }

    let labels = LabelSet::builtin();
    let cls = TaxonomyModel::new(
        TaxonomyConfig {
            dim,
            filters: 4,
            width: 2,
            hidden: 4,
            dropout_keep: 1.0,
            seed: cfg.seed,
            ..Default::default()
        },
        Head::Coarse,
        &labels,
        table(dim, 2),
    )?;
    let tokens = tokenize("how fast red cat blue dog");
    let mut store = cls.store().clone();
    let report = grad_check(
        &mut store,
        |s, t| cls.cross_entropy_taped(s, t, &tokens, 2),
        &cfg,
    )?;
    all_passed &= report.passed();
    checks.push(serde_json::json!({
        "model": "cnn-bigru-classifier",
        "coordinates": report.checked,
        "failures": report.failures.len(),
        "worst": report.worst,
        "passed": report.passed(),
    }));

    let full = serde_json::json!({
        "eps": cfg.eps,
        "tol": cfg.tol,
        "dim": dim,
        "checks": checks,
        "passed": all_passed,
    });
    match &args.out {
        Some(dir) => {
            let out = OutDir::create(dir)?;
            out.echo_config(&serde_json::json!({
                "subcommand": SECTION,
                "dim": dim,
                "eps": cfg.eps,
                "tol": cfg.tol,
                "seed": cfg.seed,
            }))?;
            out.write_json("gradcheck.json", &full)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&full)?),
    }

    if !all_passed {
        return Err(Error::Training {
            epoch: 0,
            step: 0,
            msg: "gradient verification failed; see the gradcheck report".into(),
        });
    }
    log::info!("all gradient checks passed at tol {}", cfg.tol);
    Ok(())
}
