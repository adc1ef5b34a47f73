//! Pre-trained word vectors, sentence matrices, and variance-matched random
//! vectors for unknown words.
//!
//! The text format is one vector per line, `token v1 v2 ... vd`, with an
//! optional `V d` header line. Tokens without a pre-trained vector get a
//! vector drawn from `U[-a, a]` per dimension, where `a = sqrt(3 σ²)` and σ²
//! is the variance of all pre-trained components pooled together. Those
//! vectors are appended to the table and cached, so a token resolves to the
//! same row for the lifetime of the table.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};

/// Whether word vectors are frozen or updated by backpropagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    #[default]
    Static,
    Tuned,
}

impl std::str::FromStr for EmbeddingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(EmbeddingMode::Static),
            "tuned" => Ok(EmbeddingMode::Tuned),
            other => Err(Error::Config(format!("unknown embedding mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowSource {
    Pretrained,
    Oov,
    RandomInit,
}

/// Input matrix for one sentence: one embedding row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceMatrix {
    pub tokens: Vec<String>,
    pub matrix: Matrix,
    pub row_sources: Vec<RowSource>,
    /// Table row each sentence row was copied from.
    pub table_rows: Vec<usize>,
}

impl SentenceMatrix {
    /// A sentence matrix not tied to any table, for direct model use.
    pub fn from_matrix(matrix: Matrix) -> Self {
        let s = matrix.rows();
        SentenceMatrix {
            tokens: (0..s).map(|i| format!("t{i}")).collect(),
            matrix,
            row_sources: vec![RowSource::RandomInit; s],
            table_rows: (0..s).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vocab: HashMap<String, usize>,
    row_tokens: Vec<String>,
    matrix: Matrix,
    pretrained_rows: usize,
    oov_bound: f64,
    random_init: bool,
    rng: SeededRng,
    oov_cache: HashMap<String, usize>,
    modified: BTreeSet<usize>,
    duplicates: usize,
}

impl EmbeddingTable {
    /// Table over the given vectors; duplicate tokens keep their first vector.
    pub fn from_vectors<I>(dim: usize, vectors: I, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut table = EmbeddingTable::empty(dim, 0.0, false, seed);
        for (token, v) in vectors {
            if v.len() != dim {
                return Err(Error::shape(format!("vector of dim {dim}"), v.len()));
            }
            table.insert_pretrained(token, &v)?;
        }
        if table.pretrained_rows == 0 {
            return Err(Error::Empty("no embedding vectors".into()));
        }
        table.oov_bound = oov_bound_from_table(&table);
        Ok(table)
    }

    /// The randomly-initialized condition: no pre-trained vocabulary, every
    /// token gets a fresh `U[-bound, bound]` vector.
    pub fn random_init(dim: usize, bound: f64, seed: u64) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::Config(format!("invalid random bound {bound}")));
        }
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable::empty(dim, bound, true, seed))
    }

    fn empty(dim: usize, oov_bound: f64, random_init: bool, seed: u64) -> Self {
        EmbeddingTable {
            dim,
            vocab: HashMap::new(),
            row_tokens: Vec::new(),
            matrix: Matrix::zeros(0, dim),
            pretrained_rows: 0,
            oov_bound,
            random_init,
            rng: SeededRng::new(seed),
            oov_cache: HashMap::new(),
            modified: BTreeSet::new(),
            duplicates: 0,
        }
    }

    fn insert_pretrained(&mut self, token: String, v: &[f64]) -> Result<bool> {
        if self.vocab.contains_key(&token) {
            self.duplicates += 1;
            return Ok(false);
        }
        self.matrix.push_row(v)?;
        self.vocab.insert(token.clone(), self.row_tokens.len());
        self.row_tokens.push(token);
        self.pretrained_rows += 1;
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of rows, pre-trained and materialized OOV.
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn pretrained_len(&self) -> usize {
        self.pretrained_rows
    }

    pub fn oov_len(&self) -> usize {
        self.oov_cache.len()
    }

    pub fn oov_bound(&self) -> f64 {
        self.oov_bound
    }

    /// Overrides the OOV bound, e.g. to reuse the bound of another table.
    pub fn set_oov_bound(&mut self, bound: f64) {
        self.oov_bound = bound;
    }

    pub fn is_random_init(&self) -> bool {
        self.random_init
    }

    /// Duplicate token lines skipped while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn row(&self, index: usize) -> &[f64] {
        self.matrix.row(index)
    }

    /// Mutable access to a row; the row is recorded as modified.
    pub fn row_mut(&mut self, index: usize) -> &mut [f64] {
        self.modified.insert(index);
        self.matrix.row_mut(index)
    }

    pub fn row_token(&self, index: usize) -> &str {
        &self.row_tokens[index]
    }

    /// Rows touched through [`row_mut`](Self::row_mut).
    pub fn modified_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.modified.iter().copied()
    }

    pub fn is_oov_row(&self, index: usize) -> bool {
        index >= self.pretrained_rows
    }

    fn source_of(&self, index: usize) -> RowSource {
        if index < self.pretrained_rows {
            RowSource::Pretrained
        } else if self.random_init {
            RowSource::RandomInit
        } else {
            RowSource::Oov
        }
    }

    /// Resolves a token without materializing: exact match, then the
    /// lowercased form, then previously drawn OOV vectors.
    pub fn lookup(&self, token: &str) -> Option<usize> {
        if let Some(&i) = self.vocab.get(token) {
            return Some(i);
        }
        let lower = token.to_lowercase();
        if lower != token {
            if let Some(&i) = self.vocab.get(&lower) {
                return Some(i);
            }
        }
        self.oov_cache.get(token).copied()
    }

    /// Resolves a token, drawing and caching a new vector if it is unknown.
    pub fn resolve(&mut self, token: &str) -> usize {
        if let Some(i) = self.lookup(token) {
            return i;
        }
        let a = self.oov_bound;
        let v: Vec<f64> = (0..self.dim).map(|_| self.rng.uniform(-a, a)).collect();
        self.append_oov(token, &v)
    }

    fn append_oov(&mut self, token: &str, v: &[f64]) -> usize {
        let index = self.matrix.rows();
        self.matrix
            .push_row(v)
            .expect("OOV vector has table dimension");
        self.row_tokens.push(token.to_string());
        self.oov_cache.insert(token.to_string(), index);
        index
    }

    /// Sets the vector for `token`: overwrites a pre-trained row or installs
    /// an OOV row. Used when restoring tuned or OOV rows from a checkpoint.
    pub fn set_vector(&mut self, token: &str, v: &[f64]) -> Result<usize> {
        if v.len() != self.dim {
            return Err(Error::shape(self.dim, v.len()));
        }
        let index = match self.vocab.get(token).or_else(|| self.oov_cache.get(token)) {
            Some(&i) => i,
            None => return Ok(self.append_oov(token, v)),
        };
        self.matrix.row_mut(index).copy_from_slice(v);
        Ok(index)
    }

    /// Materializes every unknown token in `sentences`, in order, so later
    /// lookups can go through the shared-reference path.
    pub fn warm<'a, I, S>(&mut self, sentences: I)
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        for tokens in sentences {
            for t in tokens.as_ref() {
                self.resolve(t);
            }
        }
    }

    /// Builds the sentence matrix, materializing unknown tokens.
    pub fn embed_sentence(&mut self, tokens: &[String]) -> Result<SentenceMatrix> {
        if tokens.is_empty() {
            return Err(Error::Empty("token list".into()));
        }
        let rows: Vec<usize> = tokens.iter().map(|t| self.resolve(t)).collect();
        Ok(self.assemble(tokens, rows))
    }

    /// Builds the sentence matrix from already-known tokens only.
    pub fn embed_existing(&self, tokens: &[String]) -> Result<SentenceMatrix> {
        if tokens.is_empty() {
            return Err(Error::Empty("token list".into()));
        }
        let rows = tokens
            .iter()
            .map(|t| {
                self.lookup(t)
                    .ok_or_else(|| Error::Invalid(format!("token `{t}` not materialized")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.assemble(tokens, rows))
    }

    fn assemble(&self, tokens: &[String], rows: Vec<usize>) -> SentenceMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in &rows {
            data.extend_from_slice(self.matrix.row(r));
        }
        SentenceMatrix {
            tokens: tokens.to_vec(),
            matrix: Matrix::from_vec(rows.len(), self.dim, data).expect("row-sized data"),
            row_sources: rows.iter().map(|&r| self.source_of(r)).collect(),
            table_rows: rows,
        }
    }
}

/// `a = sqrt(3 σ²)` with σ² the population variance of all pre-trained
/// components, so that `U[-a, a]` has the same variance.
pub fn oov_bound_from_table(table: &EmbeddingTable) -> f64 {
    let data = table.matrix.row_block(0, table.pretrained_rows);
    if data.is_empty() {
        return table.oov_bound;
    }
    (3.0 * pooled_variance(data)).sqrt()
}

pub(crate) fn pooled_variance(data: &[f64]) -> f64 {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Parses the text embedding format. `seed` drives OOV draws.
pub fn load_embeddings<R: BufRead>(
    source: R,
    expected_dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let mut vectors = Vec::new();
    let mut first = true;
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if std::mem::take(&mut first)
            && fields.len() == 2
            && fields.iter().all(|f| f.parse::<u64>().is_ok())
        {
            let header_dim: usize = fields[1].parse().expect("checked integer");
            if header_dim != expected_dim {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("header dimension {header_dim}, expected {expected_dim}"),
                });
            }
            continue;
        }
        if fields.len() != expected_dim + 1 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {expected_dim} values, found {}", fields.len() - 1),
            });
        }
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: lineno,
                        message: format!("bad value `{f}`"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        vectors.push((fields[0].to_string(), values));
    }
    if vectors.is_empty() {
        return Err(Error::Empty("embedding stream".into()));
    }
    let table = EmbeddingTable::from_vectors(expected_dim, vectors, seed)?;
    if table.duplicates > 0 {
        log::warn!("{} duplicate embedding rows skipped", table.duplicates);
    }
    Ok(table)
}
