//! Pretrained word vectors: text-format loading, OOV policy, and phrase
//! composition by averaging.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// What `lookup` returns for a token missing from the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    /// The zero vector. Default; keeps evaluation reproducible.
    #[default]
    Zero,
    /// One shared unknown-token row (trainable when embeddings are trained).
    LearnedUnk,
}

/// Token-to-vector table. Lookups are total: unknown tokens resolve through
/// the OOV policy instead of failing.
///
/// Storage is row-major. Under `learned-unk` the shared unk vector occupies
/// physical row 0 and tokens start at row 1.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    /// Tokens in file order.
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    flat: Vec<f64>,
    policy: OovPolicy,
    pub warnings: Vec<String>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, policy: OovPolicy) -> Self {
        let flat = match policy {
            OovPolicy::Zero => Vec::new(),
            OovPolicy::LearnedUnk => vec![0.0; dim],
        };
        EmbeddingTable {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            flat,
            policy,
            warnings: Vec::new(),
        }
    }

    pub fn from_entries(entries: &[(&str, Vec<f64>)], policy: OovPolicy) -> Result<EmbeddingTable> {
        let dim = entries
            .first()
            .map(|(_, v)| v.len())
            .ok_or_else(|| Error::Argument("empty embedding entry list".into()))?;
        let mut table = EmbeddingTable::new(dim, policy);
        for (tok, vec) in entries {
            if vec.len() != dim {
                return Err(Error::dimension(
                    "embedding entry",
                    format!("{dim}"),
                    format!("{}", vec.len()),
                ));
            }
            table.push_row(tok, vec);
        }
        Ok(table)
    }

    fn push_row(&mut self, token: &str, vec: &[f64]) {
        debug_assert_eq!(vec.len(), self.dim);
        if self.index.contains_key(token) {
            self.warnings
                .push(format!("duplicate token {token:?}; first occurrence kept"));
            log::warn!("duplicate embedding token {token:?}; first occurrence kept");
            return;
        }
        self.index.insert(token.to_string(), self.tokens.len());
        self.tokens.push(token.to_string());
        self.flat.extend_from_slice(vec);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn policy(&self) -> OovPolicy {
        self.policy
    }

    /// Tokens in deterministic (file) order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    fn unk_offset(&self) -> usize {
        match self.policy {
            OovPolicy::Zero => 0,
            OovPolicy::LearnedUnk => 1,
        }
    }

    /// Physical storage row a token resolves to; `None` only for policy
    /// `zero` misses (which read as the zero vector).
    pub fn resolve(&self, token: &str) -> Option<usize> {
        match self.index.get(token) {
            Some(&row) => Some(row + self.unk_offset()),
            None => match self.policy {
                OovPolicy::Zero => None,
                OovPolicy::LearnedUnk => Some(0),
            },
        }
    }

    /// Number of physical storage rows (vocabulary plus the unk row, if any).
    pub fn storage_rows(&self) -> usize {
        self.tokens.len() + self.unk_offset()
    }

    /// Full storage matrix as a tensor (used to mirror the table as a
    /// trainable parameter).
    pub fn matrix(&self) -> Tensor {
        Tensor::from_vec(&[self.storage_rows(), self.dim], self.flat.clone())
            .expect("flat storage is consistent by construction")
    }

    /// Replace the storage matrix (used to write trained embeddings back).
    pub fn set_matrix(&mut self, matrix: &Tensor) -> Result<()> {
        if matrix.shape() != [self.storage_rows(), self.dim] {
            return Err(Error::dimension(
                "set_matrix",
                format!("[{}, {}]", self.storage_rows(), self.dim),
                format!("{:?}", matrix.shape()),
            ));
        }
        self.flat = matrix.data().to_vec();
        Ok(())
    }

    /// Vector for a token. Total under either OOV policy.
    pub fn lookup(&self, token: &str) -> Vec<f64> {
        match self.resolve(token) {
            Some(row) => self.flat[row * self.dim..(row + 1) * self.dim].to_vec(),
            None => vec![0.0; self.dim],
        }
    }

    /// Arithmetic mean of the looked-up vectors; the zero vector for an
    /// empty token list.
    pub fn compose_average(&self, tokens: &[impl AsRef<str>]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        if tokens.is_empty() {
            return out;
        }
        for tok in tokens {
            for (o, v) in out.iter_mut().zip(self.lookup(tok.as_ref())) {
                *o += v;
            }
        }
        let n = tokens.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
        out
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        let off = self.unk_offset();
        for (i, tok) in self.tokens.iter().enumerate() {
            let start = (i + off) * self.dim;
            let vals: Vec<String> = self.flat[start..start + self.dim]
                .iter()
                .map(|v| format!("{}", *v as f32))
                .collect();
            writeln!(f, "{} {}", tok, vals.join(" "))?;
        }
        Ok(())
    }
}

/// Load whitespace-separated text vectors, one token per line. An optional
/// first line of two integers (`|V| d`) is tolerated and skipped. Duplicate
/// tokens keep the first occurrence and emit a warning.
pub fn load_text_embeddings(path: &Path, policy: OovPolicy) -> Result<EmbeddingTable> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let path_str = path.display().to_string();

    let mut table: Option<EmbeddingTable> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if lineno == 1
            && fields.len() == 2
            && fields[0].parse::<usize>().is_ok()
            && fields[1].parse::<usize>().is_ok()
        {
            continue; // "|V| d" header
        }
        if fields.len() < 2 {
            return Err(Error::format(
                &path_str,
                lineno,
                "expected a token followed by at least one float",
            ));
        }
        let token = fields[0];
        let mut vec = Vec::with_capacity(fields.len() - 1);
        for f in &fields[1..] {
            vec.push(
                f.parse::<f64>()
                    .map_err(|_| Error::format(&path_str, lineno, format!("bad float {f:?}")))?,
            );
        }
        match &mut table {
            None => {
                let mut t = EmbeddingTable::new(vec.len(), policy);
                t.push_row(token, &vec);
                table = Some(t);
            }
            Some(t) => {
                if vec.len() != t.dim {
                    return Err(Error::format(
                        &path_str,
                        lineno,
                        format!("dimension {} but table has dimension {}", vec.len(), t.dim),
                    ));
                }
                t.push_row(token, &vec);
            }
        }
    }
    table.ok_or_else(|| Error::format(&path_str, 0, "empty embedding file"))
}
