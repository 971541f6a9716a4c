//! Rule-based question-word, focus, and object extraction over dependency
//! parses, and the focus-similarity feature.
//!
//! The rules walk an offline-produced parse: the question word is the first
//! wh-tagged token (verb-first for imperatives), the focus follows the
//! question word through a fixed priority of dependency relations, and a
//! question whose every branch fails gets the `<unk>` marker.

mod conllu;

pub use conllu::{parse_conllu, parse_conllu_reader};

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::numerics::cosine_value;

/// Marker for a question whose focus cannot be extracted.
pub const UNK_MARKER: &str = "<unk>";

const WH_TAGS: [&str; 4] = ["WDT", "WP", "WP$", "WRB"];
const VB_TAGS: [&str; 4] = ["VB", "VBD", "VBP", "VBZ"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParsedToken {
    pub surface: String,
    pub upos: Option<String>,
    pub xpos: Option<String>,
    pub feats: Option<String>,
    /// 1-based head index; 0 marks the root.
    pub head: usize,
    pub deprel: String,
}

impl ParsedToken {
    /// Penn Treebank tag: the XPOS column when present, otherwise a mapping
    /// from UPOS (interrogatives detected through `PronType=Int`).
    pub fn pos(&self) -> Option<&str> {
        if let Some(x) = &self.xpos {
            return Some(x);
        }
        let wh = self
            .feats
            .as_deref()
            .map(|f| f.contains("PronType=Int"))
            .unwrap_or(false);
        match self.upos.as_deref() {
            Some("VERB") => Some("VB"),
            Some("PRON") if wh => Some("WP"),
            Some("ADV") if wh => Some("WRB"),
            Some("DET") if wh => Some("WDT"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParsedQuestion {
    pub id: String,
    pub tokens: Vec<ParsedToken>,
}

impl ParsedQuestion {
    /// Exactly one root (head 0, deprel "root"); heads in range.
    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::Data(format!("question {:?} has no tokens", self.id)));
        }
        let mut roots = 0usize;
        for (i, t) in self.tokens.iter().enumerate() {
            if t.head > self.tokens.len() {
                return Err(Error::Data(format!(
                    "question {:?}: token {} head {} out of range",
                    self.id,
                    i + 1,
                    t.head
                )));
            }
            if t.head == 0 {
                if t.deprel != "root" {
                    return Err(Error::Data(format!(
                        "question {:?}: token {} has head 0 but deprel {:?}",
                        self.id,
                        i + 1,
                        t.deprel
                    )));
                }
                roots += 1;
            }
        }
        if roots != 1 {
            return Err(Error::Data(format!(
                "question {:?} has {} roots, expected exactly one",
                self.id, roots
            )));
        }
        Ok(())
    }

    /// 0-based index of the root token.
    pub fn root_index(&self) -> Result<usize> {
        self.tokens
            .iter()
            .position(|t| t.head == 0 && t.deprel == "root")
            .ok_or_else(|| Error::Data(format!("question {:?} has no root", self.id)))
    }

    /// Leftmost dependent of `head` (0-based) with exactly this relation.
    fn child(&self, head: usize, rel: &str) -> Option<usize> {
        self.tokens
            .iter()
            .position(|t| t.head == head + 1 && t.deprel == rel)
    }

    /// Leftmost dependent of `head` whose relation starts with `prefix`
    /// (subtyped relations are written `conj:and` and the like).
    fn child_prefixed(&self, head: usize, prefix: &str) -> Option<usize> {
        self.tokens
            .iter()
            .position(|t| t.head == head + 1 && t.deprel.starts_with(prefix))
    }
}

/// Extraction outcome. The focus, when present, is always a surface token of
/// the input; the `<unk>` marker stands for an absent focus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FocusResult {
    pub question_id: String,
    pub question_word: Option<String>,
    pub focus: Option<String>,
    /// Rules fired, in order.
    pub rule_trace: Vec<String>,
}

impl FocusResult {
    pub fn focus_or_unk(&self) -> &str {
        self.focus.as_deref().unwrap_or(UNK_MARKER)
    }

    /// Tokens the focus contributes to embedding composition (empty for
    /// `<unk>`).
    pub fn focus_tokens(&self) -> Vec<String> {
        self.focus
            .iter()
            .map(|f| f.to_lowercase())
            .collect()
    }
}

/// First token (surface order) with a wh tag; otherwise the first with a
/// verb tag; otherwise none.
pub fn question_word(parsed: &ParsedQuestion) -> Option<usize> {
    for (i, t) in parsed.tokens.iter().enumerate() {
        if let Some(pos) = t.pos() {
            if WH_TAGS.contains(&pos) {
                return Some(i);
            }
        }
    }
    for (i, t) in parsed.tokens.iter().enumerate() {
        if let Some(pos) = t.pos() {
            if VB_TAGS.contains(&pos) {
                return Some(i);
            }
        }
    }
    None
}

/// Object extraction from `anchor` (0-based), in priority order: the `det`
/// dependent, the `dobj` dependent, the `dobj` of a `conj:*` dependent, and
/// finally the `dobj` of that conjunct's `ccomp`/`xcomp` dependent.
pub fn extract_object(parsed: &ParsedQuestion, anchor: usize) -> (Option<usize>, Vec<String>) {
    let mut trace = Vec::new();
    if let Some(obj) = parsed.child(anchor, "det") {
        trace.push("object:det".to_string());
        return (Some(obj), trace);
    }
    if let Some(obj) = parsed.child(anchor, "dobj") {
        trace.push("object:dobj".to_string());
        return (Some(obj), trace);
    }
    if let Some(conj) = parsed.child_prefixed(anchor, "conj") {
        if let Some(obj) = parsed.child(conj, "dobj") {
            trace.push("object:conj-dobj".to_string());
            return (Some(obj), trace);
        }
        let comp = parsed
            .child(conj, "ccomp")
            .or_else(|| parsed.child(conj, "xcomp"));
        if let Some(comp) = comp {
            if let Some(obj) = parsed.child(comp, "dobj") {
                trace.push("object:conj-comp-dobj".to_string());
                return (Some(obj), trace);
            }
        }
    }
    trace.push("object:none".to_string());
    (None, trace)
}

/// Focus extraction: route on the question word ("how" reads its `advmod`,
/// verbs read their object, other wh words read their own subject when they
/// are the root and the root's object otherwise). `<unk>` when every branch
/// fails.
pub fn extract_focus(parsed: &ParsedQuestion) -> Result<FocusResult> {
    parsed.validate()?;
    let mut trace = Vec::new();
    let qw = question_word(parsed);
    let mut result = FocusResult {
        question_id: parsed.id.clone(),
        question_word: qw.map(|i| parsed.tokens[i].surface.clone()),
        focus: None,
        rule_trace: Vec::new(),
    };

    let focus_idx: Option<usize> = match qw {
        None => {
            trace.push("question_word:none".to_string());
            None
        }
        Some(qi) => {
            let tok = &parsed.tokens[qi];
            let pos = tok.pos().unwrap_or("");
            if tok.surface.eq_ignore_ascii_case("how") {
                trace.push("question_word:how".to_string());
                // The advmod edge at the question word: a dependent if one
                // exists, otherwise the head it modifies.
                if let Some(child) = parsed.child(qi, "advmod") {
                    trace.push("how:advmod-child".to_string());
                    Some(child)
                } else if tok.deprel == "advmod" && tok.head > 0 {
                    trace.push("how:advmod-head".to_string());
                    Some(tok.head - 1)
                } else {
                    trace.push("how:advmod-none".to_string());
                    None
                }
            } else if VB_TAGS.contains(&pos) {
                trace.push(format!("question_word:verb:{pos}"));
                let (obj, mut sub) = extract_object(parsed, qi);
                trace.append(&mut sub);
                obj
            } else if WH_TAGS.contains(&pos) {
                trace.push(format!("question_word:wh:{pos}"));
                if tok.head == 0 {
                    match parsed.child(qi, "nsubj") {
                        Some(s) => {
                            trace.push("wh:root-nsubj".to_string());
                            Some(s)
                        }
                        None => {
                            trace.push("wh:root-nsubj-none".to_string());
                            None
                        }
                    }
                } else {
                    trace.push("wh:nonroot-object-of-root".to_string());
                    let root = parsed.root_index()?;
                    let (obj, mut sub) = extract_object(parsed, root);
                    trace.append(&mut sub);
                    obj
                }
            } else {
                trace.push(format!("question_word:untagged:{pos}"));
                None
            }
        }
    };

    if focus_idx.is_none() {
        trace.push("fallback:unk".to_string());
    }
    result.focus = focus_idx.map(|i| parsed.tokens[i].surface.clone());
    result.rule_trace = trace;
    Ok(result)
}

/// Cosine similarity of the two foci's averaged embeddings; 0 when either
/// side is `<unk>` or composes to the zero vector. Focus tokens are
/// lowercased to match the table's normalization.
pub fn focus_similarity(table: &EmbeddingTable, f_p: &FocusResult, f_q: &FocusResult) -> f64 {
    let tp = f_p.focus_tokens();
    let tq = f_q.focus_tokens();
    if tp.is_empty() || tq.is_empty() {
        return 0.0;
    }
    cosine_value(&table.compose_average(&tp), &table.compose_average(&tq))
}
