use std::path::PathBuf;

use qmatch::corpus::{load_pairs, MatchLabel};
use qmatch::encoder::EncoderConfig;
use qmatch::focus::{extract_focus, parse_conllu};
use qmatch::fusion::{AblationFlags, FocusStore, LinearModel, MatchComponents};
use qmatch::taxonomy::{Head, TaxonomyConfig};
use qmatch::{Error, Result};
use serde::Serialize;

use crate::config::ConfigFile;
use crate::util::{load_table, parse_oov, require_file, OutDir};

/// Component-model flags shared by the feature-building subcommands. A
/// missing checkpoint flag means a fresh seeded model.
#[derive(clap::Args, Clone)]
pub struct ComponentArgs {
    /// Word vectors, whitespace text format.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Encoder checkpoint directory.
    #[arg(long)]
    pub encoder_ckpt: Option<PathBuf>,
    /// Coarse classifier checkpoint directory.
    #[arg(long)]
    pub coarse_ckpt: Option<PathBuf>,
    /// Fine classifier checkpoint directory.
    #[arg(long)]
    pub fine_ckpt: Option<PathBuf>,
    /// Label inventory TSV (bundled default when omitted).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// CoNLL-U parses for focus extraction.
    #[arg(long)]
    pub parses: Option<PathBuf>,
    /// Fresh-model knobs (ignored when a checkpoint is given).
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub attention: Option<bool>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub oov: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub(crate) fn build_components(
    args: &ComponentArgs,
    file: &ConfigFile,
    section: &str,
) -> Result<MatchComponents> {
    let embeddings = file
        .get_path(args.embeddings.clone(), section, "embeddings")
        .ok_or_else(|| Error::Config("--embeddings is required".into()))?;
    let oov = file.get(args.oov.clone(), section, "oov", "zero".to_string())?;
    let table = load_table(&embeddings, "embeddings", parse_oov(&oov)?)?;

    let labels = super::labels_from(
        file.get_path(args.labels.clone(), section, "labels").as_deref(),
    )?;
    let dim = file.get(args.dim, section, "dim", table.dim())?;
    let seed = file.get(args.seed, section, "seed", 0u64)?;

    let kind_str = file.get(args.kind.clone(), section, "kind", "gru".to_string())?;
    let encoder_cfg = EncoderConfig {
        kind: super::parse_kind(&kind_str)?,
        attention: file.get(args.attention, section, "attention", true)?,
        dim,
        seed,
        ..Default::default()
    };
    let encoder = super::encoder_from(
        file.get_path(args.encoder_ckpt.clone(), section, "encoder_ckpt")
            .as_deref(),
        encoder_cfg,
        table.clone(),
    )?;

    let cls_cfg = TaxonomyConfig {
        dim,
        filters: file.get(args.filters, section, "filters", 16)?,
        width: file.get(args.width, section, "width", 2)?,
        hidden: file.get(args.hidden, section, "hidden", 16)?,
        seed,
        ..Default::default()
    };
    let coarse = super::taxonomy_from(
        file.get_path(args.coarse_ckpt.clone(), section, "coarse_ckpt")
            .as_deref(),
        cls_cfg.clone(),
        Head::Coarse,
        &labels,
        table.clone(),
        "coarse-ckpt",
    )?;
    let fine = super::taxonomy_from(
        file.get_path(args.fine_ckpt.clone(), section, "fine_ckpt")
            .as_deref(),
        cls_cfg,
        Head::Fine,
        &labels,
        table.clone(),
        "fine-ckpt",
    )?;

    let focus_store = match file.get_path(args.parses.clone(), section, "parses") {
        Some(p) => {
            require_file(&p, "parses")?;
            let parses = parse_conllu(&p)?;
            let mut store = FocusStore::default();
            for parsed in &parses {
                store.insert(extract_focus(parsed)?);
            }
            store
        }
        None => FocusStore::default(),
    };

    Ok(MatchComponents {
        encoder,
        coarse,
        fine,
        labels,
        focus_store,
        table,
    })
}

/// Parse `--ablate cc,fc,focus,sim` into flags.
pub(crate) fn parse_ablation(spec: &str) -> Result<AblationFlags> {
    let mut flags = AblationFlags::default();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part {
            "cc" => flags.coarse = false,
            "fc" => flags.fine = false,
            "focus" => flags.focus = false,
            "sim" => flags.sim = false,
            other => {
                return Err(Error::Config(format!(
                    "--ablate accepts cc, fc, focus, sim; got {other:?}"
                )))
            }
        }
    }
    Ok(flags)
}

const SECTION: &str = "match";

#[derive(clap::Args)]
pub struct Args {
    /// Question pairs, TSV: id1, id2, text1, text2, label.
    #[arg(long)]
    pairs: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Linear decision model checkpoint (zero weights when omitted).
    #[arg(long)]
    classifier_ckpt: Option<PathBuf>,
    /// Comma list of feature blocks to deactivate: cc, fc, focus, sim.
    #[arg(long)]
    ablate: Option<String>,
    /// Also write the per-pair attention matrices to attention.jsonl.
    #[arg(long)]
    dump_attention: Option<bool>,
    #[command(flatten)]
    components: ComponentArgs,
}

#[derive(Serialize)]
struct Row {
    id1: String,
    id2: String,
    sim: f64,
    coarse_p: String,
    fine_p: String,
    coarse_q: String,
    fine_q: String,
    fsim: f64,
    features: Vec<f64>,
    decision: MatchLabel,
    margin: f64,
    gold: MatchLabel,
}

pub fn run(args: Args, file: &ConfigFile) -> Result<()> {
    require_file(&args.pairs, "pairs")?;
    let ablate_str = file.get(args.ablate.clone(), SECTION, "ablate", String::new())?;
    let flags = parse_ablation(&ablate_str)?;
    let dump_attention = file.get(args.dump_attention, SECTION, "dump_attention", false)?;

    let out = OutDir::create(&args.out)?;
    out.echo_config(&serde_json::json!({
        "subcommand": SECTION,
        "pairs": args.pairs,
        "classifier_ckpt": args.classifier_ckpt,
        "ablate": ablate_str,
        "flags": flags,
        "dump_attention": dump_attention,
        "embeddings": args.components.embeddings,
        "encoder_ckpt": args.components.encoder_ckpt,
        "coarse_ckpt": args.components.coarse_ckpt,
        "fine_ckpt": args.components.fine_ckpt,
        "labels": args.components.labels,
        "parses": args.components.parses,
        "seed": args.components.seed,
    }))?;

    let components = build_components(&args.components, file, SECTION)?;
    let feature_len = 2 * (components.labels.n_coarse() + components.labels.n_fine()) + 4;
    let classifier = match file
        .get_path(args.classifier_ckpt.clone(), SECTION, "classifier_ckpt")
    {
        Some(dir) => LinearModel::load(&dir)?,
        None => LinearModel::zeros(feature_len),
    };

    let dataset = load_pairs(&args.pairs)?;
    let mut rows = Vec::with_capacity(dataset.examples.len());
    let mut attention_rows = Vec::new();
    let mut correct = 0usize;
    for pair in &dataset.examples {
        if dump_attention {
            attention_rows.push(components.encoder.attention_matrix(&pair.q1, &pair.q2)?);
        }
        let features = components.build_features(&pair.q1, &pair.q2, &flags)?;
        let flat = features.to_vec();
        let (decision, margin) = classifier.predict(&flat)?;
        if decision == pair.label {
            correct += 1;
        }
        let coarse_p = components.coarse.classify(&pair.q1, &components.labels)?;
        let fine_p = components.fine.classify(&pair.q1, &components.labels)?;
        let coarse_q = components.coarse.classify(&pair.q2, &components.labels)?;
        let fine_q = components.fine.classify(&pair.q2, &components.labels)?;
        rows.push(Row {
            id1: pair.q1.id.clone(),
            id2: pair.q2.id.clone(),
            sim: features.sim,
            coarse_p: coarse_p.label,
            fine_p: fine_p.label,
            coarse_q: coarse_q.label,
            fine_q: fine_q.label,
            fsim: features.fsim,
            features: flat,
            decision,
            margin,
            gold: pair.label,
        });
    }
    out.write_jsonl("matches.jsonl", &rows)?;
    if dump_attention {
        out.write_jsonl("attention.jsonl", &attention_rows)?;
    }
    out.write_json(
        "report.json",
        &serde_json::json!({
            "n_pairs": rows.len(),
            "n_match_gold": dataset.n_match,
            "n_no_match_gold": dataset.n_no_match,
            "accuracy": correct as f64 / rows.len().max(1) as f64,
            "feature_length": feature_len,
        }),
    )?;
    log::info!("matched {} pairs", rows.len());
    Ok(())
}
