//! CoNLL-U ingestion. The crate does not bundle a dependency parser; parses
//! are produced offline and read here (columns ID, FORM, LEMMA, UPOS, XPOS,
//! FEATS, HEAD, DEPREL, DEPS, MISC; blank-line-separated sentences).

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::focus::{ParsedQuestion, ParsedToken};

fn finish_sentence(
    tokens: Vec<ParsedToken>,
    sent_id: Option<String>,
    index: usize,
    path: &str,
    line: usize,
) -> Result<ParsedQuestion> {
    let q = ParsedQuestion {
        id: sent_id.unwrap_or_else(|| format!("s{index}")),
        tokens,
    };
    q.validate()
        .map_err(|e| Error::format(path, line, format!("{e}")))?;
    Ok(q)
}

pub fn parse_conllu_reader(reader: impl Read, path: &str) -> Result<Vec<ParsedQuestion>> {
    let reader = BufReader::new(reader);
    let mut sentences = Vec::new();
    let mut tokens: Vec<ParsedToken> = Vec::new();
    let mut sent_id: Option<String> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            if !tokens.is_empty() {
                sentences.push(finish_sentence(
                    std::mem::take(&mut tokens),
                    sent_id.take(),
                    sentences.len(),
                    path,
                    lineno,
                )?);
            }
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "sent_id" {
                    sent_id = Some(value.trim().to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::format(
                path,
                lineno,
                format!("expected 10 tab-separated columns, got {}", cols.len()),
            ));
        }
        // Multiword ranges (1-2) and empty nodes (1.1) are not tokens.
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| Error::format(path, lineno, format!("bad token id {:?}", cols[0])))?;
        if id != tokens.len() + 1 {
            return Err(Error::format(
                path,
                lineno,
                format!("token id {} out of sequence (expected {})", id, tokens.len() + 1),
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| Error::format(path, lineno, format!("bad head {:?}", cols[6])))?;
        let blank = |s: &str| if s == "_" { None } else { Some(s.to_string()) };
        tokens.push(ParsedToken {
            surface: cols[1].to_string(),
            upos: blank(cols[3]),
            xpos: blank(cols[4]),
            feats: blank(cols[5]),
            head,
            deprel: cols[7].to_string(),
        });
    }
    if !tokens.is_empty() {
        sentences.push(finish_sentence(tokens, sent_id, sentences.len(), path, 0)?);
    }
    Ok(sentences)
}

pub fn parse_conllu(path: &Path) -> Result<Vec<ParsedQuestion>> {
    parse_conllu_reader(File::open(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# sent_id = ex1
# text = Describe the model
1\tDescribe\t_\tVERB\tVB\t_\t0\troot\t_\t_
2\tthe\t_\tDET\tDT\t_\t3\tdet\t_\t_
3\tmodel\t_\tNOUN\tNN\t_\t1\tdobj\t_\t_

1\tWho\t_\tPRON\tWP\tPronType=Int\t0\troot\t_\t_
2\t?\t_\tPUNCT\t.\t_\t1\tpunct\t_\t_
";

    #[test]
    fn parses_sentences_and_ids() {
        let qs = parse_conllu_reader(SAMPLE.as_bytes(), "test").unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].id, "ex1");
        assert_eq!(qs[1].id, "s1");
        assert_eq!(qs[0].tokens.len(), 3);
        assert_eq!(qs[0].tokens[2].surface, "model");
        assert_eq!(qs[0].tokens[2].head, 1);
    }

    #[test]
    fn missing_root_is_a_format_error() {
        let bad = "1\tfoo\t_\t_\tNN\t_\t2\tdet\t_\t_\n2\tbar\t_\t_\tNN\t_\t1\tnmod\t_\t_\n";
        assert!(parse_conllu_reader(bad.as_bytes(), "test").is_err());
    }

    #[test]
    fn out_of_range_head_is_a_format_error() {
        let bad = "1\tfoo\t_\t_\tNN\t_\t9\troot\t_\t_\n";
        assert!(parse_conllu_reader(bad.as_bytes(), "test").is_err());
    }

    #[test]
    fn multiword_ranges_are_skipped() {
        let s = "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tdo\t_\t_\tVBP\t_\t0\troot\t_\t_\n2\tn't\t_\t_\tRB\t_\t1\tadvmod\t_\t_\n";
        let qs = parse_conllu_reader(s.as_bytes(), "test").unwrap();
        assert_eq!(qs[0].tokens.len(), 2);
    }

    #[test]
    fn bad_column_count_reports_line() {
        let bad = "1\tfoo\tbar\n";
        match parse_conllu_reader(bad.as_bytes(), "test").unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
