//! Word-embedding storage: loading text-format embedding files, serving
//! token lookups with the zero-vector out-of-vocabulary policy, and
//! generating random tables.
//!
//! The text format is one entry per line, `token v1 ... vd`, UTF-8,
//! space-separated, with an optional leading `N d` count header (auto-detected
//! as a first line of exactly two integer fields). Lookups are case-sensitive
//! exact matches; datasets are expected to arrive pre-tokenized.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::numerics::{init_matrix, InitScheme, SeededRng};
use crate::{vecio, Error, Result};

/// Where a table's vectors came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TableSource {
    Pretrained,
    Random { scheme: InitScheme, seed: u64 },
}

/// An immutable token → d-dimensional vector store.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vocab: IndexMap<String, usize>,
    matrix: Array2<f64>,
    source: TableSource,
    duplicate_warnings: usize,
}

/// Result of a single token lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Lookup {
    pub vector: Array1<f64>,
    pub oov: bool,
}

/// One row per token of a sentence, in sentence order; OOV rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    rows: Array2<f64>,
}

impl TokenMatrix {
    pub fn new(rows: Array2<f64>) -> Self {
        TokenMatrix { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.vocab.keys().map(|s| s.as_str())
    }

    pub fn source(&self) -> &TableSource {
        &self.source
    }

    /// Duplicate data lines skipped during loading (first occurrence wins).
    pub fn duplicate_warnings(&self) -> usize {
        self.duplicate_warnings
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vocab.contains_key(token)
    }

    /// Stored vector for `token`, or the all-zero vector with the OOV flag set.
    pub fn lookup(&self, token: &str) -> Lookup {
        match self.vocab.get(token) {
            Some(&row) => Lookup {
                vector: self.matrix.row(row).to_owned(),
                oov: false,
            },
            None => Lookup {
                vector: Array1::zeros(self.dim),
                oov: true,
            },
        }
    }

    /// Stack the lookups of `tokens` into an n x d matrix (rows in sentence
    /// order, OOV rows zero). An empty sentence yields a 0 x d matrix.
    pub fn embed_sentence<S: AsRef<str>>(&self, tokens: &[S]) -> TokenMatrix {
        let mut rows = Array2::zeros((tokens.len(), self.dim));
        for (i, token) in tokens.iter().enumerate() {
            if let Some(&row) = self.vocab.get(token.as_ref()) {
                rows.row_mut(i).assign(&self.matrix.row(row));
            }
        }
        TokenMatrix { rows }
    }

    /// Assemble a table from an explicit vocabulary and matrix.
    pub fn from_parts(vocab: Vec<String>, matrix: Array2<f64>, source: TableSource) -> Result<Self> {
        if vocab.len() != matrix.nrows() {
            return Err(Error::Invalid(format!(
                "{} tokens but {} matrix rows",
                vocab.len(),
                matrix.nrows()
            )));
        }
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("non-finite embedding value".into()));
        }
        let mut map = IndexMap::with_capacity(vocab.len());
        for token in vocab {
            let next = map.len();
            if map.insert(token.clone(), next).is_some() {
                return Err(Error::DuplicateToken(token));
            }
        }
        Ok(EmbeddingTable {
            dim: matrix.ncols(),
            vocab: map,
            matrix,
            source,
            duplicate_warnings: 0,
        })
    }

    /// Build a table of random vectors, one row-block draw per token, so the
    /// result is deterministic in `(vocab order, dim, scheme, seed)`.
    pub fn generate_random(
        vocab: &[String],
        dim: usize,
        scheme: InitScheme,
        seed: u64,
    ) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::Invalid("random table needs a non-empty vocab".into()));
        }
        let mut map = IndexMap::with_capacity(vocab.len());
        for token in vocab {
            if map.insert(token.clone(), map.len()).is_some() {
                return Err(Error::DuplicateToken(token.clone()));
            }
        }
        let rng = SeededRng::new(seed, "embed/random");
        let matrix = init_matrix(vocab.len(), dim, scheme, &rng);
        Ok(EmbeddingTable {
            dim,
            vocab: map,
            matrix,
            source: TableSource::Random { scheme, seed },
            duplicate_warnings: 0,
        })
    }

    /// Write the table in the text format (no count header).
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (token, &row) in &self.vocab {
            write!(w, "{token}").map_err(|e| Error::io(path, e))?;
            for v in self.matrix.row(row).iter() {
                write!(w, " {v}").map_err(|e| Error::io(path, e))?;
            }
            writeln!(w).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Write the table in the binary vector format plus a `<base>.vocab.txt`
    /// token list (one token per line, row order).
    pub fn write_binary(&self, base: &Path) -> Result<()> {
        vecio::write_matrix(base, self.matrix.view())?;
        let vpath = vocab_path(base);
        let mut text = String::new();
        for token in self.vocab.keys() {
            text.push_str(token);
            text.push('\n');
        }
        fs::write(&vpath, text).map_err(|e| Error::io(&vpath, e))
    }

    /// Load a table previously written by [`EmbeddingTable::write_binary`].
    pub fn load_binary(base: &Path) -> Result<Self> {
        let matrix = vecio::read_matrix(base)?;
        let vpath = vocab_path(base);
        let text = fs::read_to_string(&vpath).map_err(|e| Error::io(&vpath, e))?;
        let mut vocab = IndexMap::new();
        for line in text.lines() {
            if vocab.insert(line.to_string(), vocab.len()).is_some() {
                return Err(Error::DuplicateToken(line.to_string()));
            }
        }
        if vocab.len() != matrix.nrows() {
            return Err(Error::BadDataset {
                path: vpath,
                message: format!(
                    "vocab has {} tokens but matrix has {} rows",
                    vocab.len(),
                    matrix.nrows()
                ),
            });
        }
        let dim = matrix.ncols();
        Ok(EmbeddingTable {
            dim,
            vocab,
            matrix,
            source: TableSource::Pretrained,
            duplicate_warnings: 0,
        })
    }
}

fn vocab_path(base: &Path) -> std::path::PathBuf {
    let mut name = base.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".vocab.txt");
    base.with_file_name(name)
}

/// Load a text-format embedding file.
///
/// The dimension is inferred from the first data line and must match
/// `expected_dim` when given. Duplicate tokens keep their first occurrence and
/// bump the table's warning count.
pub fn load_embeddings(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().peekable();

    // count header: a first line with exactly two integer fields
    let mut declared: Option<(usize, usize)> = None;
    if let Some((_, first)) = lines.peek() {
        let fields: Vec<&str> = first.split_whitespace().collect();
        if fields.len() == 2 {
            if let (Ok(n), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                declared = Some((n, d));
                lines.next();
            }
        }
    }

    let mut dim: Option<usize> = None;
    let mut vocab: IndexMap<String, usize> = IndexMap::new();
    let mut values: Vec<f64> = Vec::new();
    let mut duplicates = 0usize;

    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line has a first field");
        let mut row: Vec<f64> = Vec::with_capacity(dim.unwrap_or(8));
        for field in fields {
            let v: f64 = field.parse().map_err(|_| {
                Error::parse(path, lineno, format!("non-numeric field `{field}`"))
            })?;
            row.push(v);
        }
        if row.is_empty() {
            return Err(Error::parse(path, lineno, "line has a token but no values"));
        }
        if !row.iter().all(|v| v.is_finite()) {
            return Err(Error::parse(path, lineno, "non-finite embedding value"));
        }
        match dim {
            None => {
                if let Some(expected) = expected_dim {
                    if row.len() != expected {
                        return Err(Error::DimMismatch {
                            expected,
                            found: row.len(),
                        });
                    }
                }
                if let Some((_, d)) = declared {
                    if row.len() != d {
                        return Err(Error::parse(
                            path,
                            lineno,
                            format!("header declares dim {d} but line has {}", row.len()),
                        ));
                    }
                }
                dim = Some(row.len());
            }
            Some(d) if row.len() != d => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected {d} values, found {}", row.len()),
                ));
            }
            _ => {}
        }
        if vocab.contains_key(token) {
            duplicates += 1;
            continue;
        }
        vocab.insert(token.to_string(), vocab.len());
        values.extend_from_slice(&row);
    }

    let dim = dim.ok_or_else(|| Error::EmptyEmbeddingFile { path: path.into() })?;
    if let Some((n, _)) = declared {
        if vocab.len() + duplicates != n {
            return Err(Error::parse(
                path,
                0,
                format!("header declares {n} entries but file has {}", vocab.len() + duplicates),
            ));
        }
    }
    let matrix = Array2::from_shape_vec((vocab.len(), dim), values)
        .expect("row count times dim matches value count");
    Ok(EmbeddingTable {
        dim,
        vocab,
        matrix,
        source: TableSource::Pretrained,
        duplicate_warnings: duplicates,
    })
}
