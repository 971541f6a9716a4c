use std::path::PathBuf;

use qmatch::focus::{extract_focus, parse_conllu};
use qmatch::Result;
use serde::Serialize;

use crate::config::ConfigFile;
use crate::util::{require_file, OutDir};

#[derive(clap::Args)]
pub struct Args {
    /// Dependency parses, CoNLL-U.
    #[arg(long)]
    parses: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Row {
    id: String,
    question_word: Option<String>,
    focus: String,
    rule_trace: Vec<String>,
}

pub fn run(args: Args, _file: &ConfigFile) -> Result<()> {
    require_file(&args.parses, "parses")?;
    let out = OutDir::create(&args.out)?;
    out.echo_config(&serde_json::json!({
        "subcommand": "focus",
        "parses": args.parses,
    }))?;

    let parses = parse_conllu(&args.parses)?;
    let mut rows = Vec::with_capacity(parses.len());
    for parsed in &parses {
        let r = extract_focus(parsed)?;
        rows.push(Row {
            id: r.question_id.clone(),
            question_word: r.question_word.clone(),
            focus: r.focus_or_unk().to_string(),
            rule_trace: r.rule_trace,
        });
    }
    out.write_jsonl("focus.jsonl", &rows)?;
    log::info!("extracted foci for {} questions", rows.len());
    Ok(())
}
