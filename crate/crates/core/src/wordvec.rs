//! Word-vector tables and the plain-text embedding file format.
//!
//! ```text
//! # space=poincare epsilon=0.00001     (optional comment lines)
//! <count> <dim>
//! <token> <v1> ... <v_dim>
//! ```
//!
//! Values are written with Rust's shortest round-trip `f64` formatting, so a
//! write/read cycle reproduces every bit.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::corpus::UNK;
use crate::error::{Error, Result};

/// Token-indexed dense vectors, the common currency between the word and
/// sentence tiers.
#[derive(Clone, Debug, PartialEq)]
pub struct WordTable {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
    zeros: Vec<f64>,
}

impl WordTable {
    pub fn new(tokens: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != tokens.len() * dim {
            return Err(Error::Dimension {
                op: "word table",
                left: vec![tokens.len(), dim],
                right: vec![data.len()],
            });
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate token `{t}`")));
            }
        }
        Ok(WordTable {
            tokens,
            index,
            dim,
            data,
            zeros: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index_of(token).map(|i| self.row(i))
    }

    /// Vector for `token`, falling back to UNK and then to zeros.
    pub fn lookup(&self, token: &str) -> &[f64] {
        self.get(token).or_else(|| self.get(UNK)).unwrap_or(&self.zeros)
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = (&str, &[f64])> {
        self.tokens.iter().enumerate().map(|(i, t)| (t.as_str(), self.row(i)))
    }
}

pub fn write_vectors<'a>(
    mut w: impl Write,
    comment: Option<&str>,
    dim: usize,
    rows: impl ExactSizeIterator<Item = (&'a str, &'a [f64])>,
) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{} {}", rows.len(), dim)?;
    for (token, v) in rows {
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(Error::Format(format!("token `{token}` cannot be written")));
        }
        debug_assert_eq!(v.len(), dim);
        w.write_all(token.as_bytes())?;
        for x in v {
            write!(w, " {x}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parsed embedding file: leading comments (without `# `) and the table.
pub struct VectorFile {
    pub comments: Vec<String>,
    pub table: WordTable,
}

pub fn read_vectors(reader: impl BufRead, source_name: &str) -> Result<VectorFile> {
    let perr = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut comments = Vec::new();
    let mut header: Option<(usize, usize)> = None;
    let mut tokens = Vec::new();
    let mut data = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        match header {
            None => {
                if let Some(c) = line.strip_prefix('#') {
                    comments.push(c.trim_start().to_string());
                    continue;
                }
                let mut it = line.split_whitespace();
                let mut next = |what: &str| -> Result<usize> {
                    it.next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| perr(lineno, format!("expected {what} in header")))
                };
                let count = next("count")?;
                let dim = next("dim")?;
                header = Some((count, dim));
            }
            Some((_, dim)) => {
                if line.is_empty() {
                    continue;
                }
                let mut it = line.split(' ');
                let token = it.next().unwrap_or_default().to_string();
                let before = data.len();
                for v in it {
                    let x: f64 = v.parse().map_err(|_| perr(lineno, format!("bad value `{v}`")))?;
                    data.push(x);
                }
                if data.len() - before != dim {
                    return Err(perr(
                        lineno,
                        format!("expected {dim} values, got {}", data.len() - before),
                    ));
                }
                tokens.push(token);
            }
        }
    }
    let (count, dim) = header.ok_or_else(|| perr(0, "missing header".into()))?;
    if tokens.len() != count {
        return Err(perr(0, format!("header says {count} rows, found {}", tokens.len())));
    }
    Ok(VectorFile {
        comments,
        table: WordTable::new(tokens, dim, data)?,
    })
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
