//! Dense embedding tables: validation, the two on-disk formats, and seeded
//! synthetic fixtures.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::binio::{self, ByteReader};
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};
use crate::seeded_rng;

/// A vocabulary paired with a dense `|V| x D` row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    name: String,
    vocab: Vec<String>,
    dim: usize,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(name: impl Into<String>, vocab: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("embedding dimension must be at least 1".into()));
        }
        if data.len() != vocab.len() * dim {
            return Err(Error::Shape(format!(
                "{} values for {} tokens of dimension {dim}",
                data.len(),
                vocab.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                format!("row {}, column {}", i / dim, i % dim),
                "non-finite value",
            ));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, tok) in vocab.iter().enumerate() {
            if index.insert(tok.clone(), i).is_some() {
                return Err(Error::DuplicateToken {
                    token: tok.clone(),
                    location: format!("row {i}"),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            vocab,
            dim,
            data,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Mean of all rows, accumulated in f64.
    pub fn mean_row(&self) -> Vec<f64> {
        let mut mean = vec![0.0f64; self.dim];
        for row in self.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// An on-disk encoding of an [`EmbeddingTable`].
pub trait TableFormat: Named + Send + Sync {
    fn decode(&self, bytes: &[u8], name: &str) -> Result<EmbeddingTable>;
    fn encode(&self, table: &EmbeddingTable) -> Result<Vec<u8>>;
}

/// `V D` header line followed by one `token v1 ... vD` line per token.
pub struct TextVec;

impl Named for TextVec {
    fn name(&self) -> &'static str {
        "text-vec"
    }
}

impl TableFormat for TextVec {
    fn decode(&self, bytes: &[u8], name: &str) -> Result<EmbeddingTable> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| Error::format(format!("byte offset {}", e.valid_up_to()), "invalid UTF-8"))?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::format("line 1", "missing `V D` header"))?;
        let mut fields = header.split_whitespace();
        let parse_dim = |f: Option<&str>, what: &str| -> Result<usize> {
            f.and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| Error::format("line 1", format!("malformed header: bad {what}")))
        };
        let v = parse_dim(fields.next(), "V")?;
        let d = parse_dim(fields.next(), "D")?;
        if fields.next().is_some() {
            return Err(Error::format("line 1", "malformed header: expected exactly `V D`"));
        }
        if d == 0 {
            return Err(Error::format("line 1", "malformed header: D must be positive"));
        }

        let mut vocab = Vec::with_capacity(v);
        let mut data = Vec::with_capacity(v.saturating_mul(d));
        let mut seen = HashMap::with_capacity(v);
        for (lineno, line) in lines {
            let lineno = lineno + 1;
            if vocab.len() == v {
                return Err(Error::format(format!("line {lineno}"), format!("more than {v} rows")));
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().unwrap();
            let before = data.len();
            for (col, p) in parts.enumerate() {
                let x: f32 = p.parse().map_err(|_| {
                    Error::format(format!("line {lineno}"), format!("bad float `{p}` in column {}", col + 1))
                })?;
                if !x.is_finite() {
                    return Err(Error::format(format!("line {lineno}"), "non-finite value"));
                }
                data.push(x);
            }
            let got = data.len() - before;
            if got != d {
                return Err(Error::format(
                    format!("line {lineno}"),
                    format!("dimension mismatch: expected {d} values, found {got}"),
                ));
            }
            if seen.insert(token.to_string(), lineno).is_some() {
                return Err(Error::DuplicateToken {
                    token: token.to_string(),
                    location: format!("line {lineno}"),
                });
            }
            vocab.push(token.to_string());
        }
        if vocab.len() != v {
            return Err(Error::format(
                "end of file",
                format!("header declares {v} rows, found {}", vocab.len()),
            ));
        }
        EmbeddingTable::new(name, vocab, d, data)
    }

    fn encode(&self, table: &EmbeddingTable) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        writeln!(out, "{} {}", table.len(), table.dim()).unwrap();
        for (tok, row) in table.vocab().iter().zip(table.rows()) {
            if tok.is_empty() || tok.contains(char::is_whitespace) {
                return Err(Error::format(
                    format!("token `{tok}`"),
                    "text-vec tokens must be non-empty and free of whitespace",
                ));
            }
            out.extend_from_slice(tok.as_bytes());
            for v in row {
                // 9 significant digits round-trip every f32.
                write!(out, " {v:.8e}").unwrap();
            }
            out.push(b'\n');
        }
        Ok(out)
    }
}

/// Binary layout: `EMB1`, V and D as u64 LE, row-major f32 LE values, vocab block.
pub struct RawF32;

impl Named for RawF32 {
    fn name(&self) -> &'static str {
        "raw-f32"
    }
}

pub(crate) const EMB_MAGIC: &[u8; 4] = b"EMB1";

impl TableFormat for RawF32 {
    fn decode(&self, bytes: &[u8], name: &str) -> Result<EmbeddingTable> {
        let mut r = ByteReader::new(bytes);
        r.magic(EMB_MAGIC)?;
        let v = r.count("V")?;
        let d = r.count("D")?;
        if d == 0 {
            return Err(Error::format("byte offset 12", "D must be positive"));
        }
        let n = v
            .checked_mul(d)
            .ok_or_else(|| Error::format("byte offset 4", "V*D overflows"))?;
        let data = r.f32s(n, "matrix")?;
        let vocab_at = r.offset();
        let vocab = r.vocab(v)?;
        r.finish()?;
        EmbeddingTable::new(name, vocab, d, data).map_err(|e| match e {
            Error::DuplicateToken { token, location } => Error::DuplicateToken {
                token,
                location: format!("{location} of vocab block at byte offset {vocab_at}"),
            },
            other => other,
        })
    }

    fn encode(&self, table: &EmbeddingTable) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(20 + 4 * table.data().len());
        out.extend_from_slice(EMB_MAGIC);
        binio::put_u64(&mut out, table.len() as u64);
        binio::put_u64(&mut out, table.dim() as u64);
        binio::put_f32s(&mut out, table.data().iter().copied());
        binio::put_vocab(&mut out, table.vocab());
        Ok(out)
    }
}

/// All built-in table formats, keyed by name.
pub fn formats() -> Registry<dyn TableFormat> {
    let mut reg: Registry<dyn TableFormat> = Registry::new("table format");
    reg.register(Box::new(TextVec));
    reg.register(Box::new(RawF32));
    reg
}

pub fn load_table(path: &Path, format: &str) -> Result<EmbeddingTable> {
    let registry = formats();
    let fmt = registry.get(format)?;
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    fmt.decode(&bytes, &name).map_err(|e| match e {
        Error::Format { location, reason } => Error::Format {
            location: format!("{}: {location}", path.display()),
            reason,
        },
        other => other,
    })
}

pub fn save_table(table: &EmbeddingTable, path: &Path, format: &str) -> Result<()> {
    let registry = formats();
    let bytes = registry.get(format)?.encode(table)?;
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// A table built from known codes and codebooks, so an exact zero-error
/// code assignment is guaranteed to exist.
#[derive(Debug, Clone)]
pub struct PlantedTable {
    pub table: EmbeddingTable,
    pub m: usize,
    pub k: usize,
    /// `V x M`, row-major.
    pub codes: Vec<u32>,
    /// `M x K x D`, row-major.
    pub codebooks: Vec<f32>,
}

impl PlantedTable {
    pub fn code(&self, token: usize, codebook: usize) -> u32 {
        self.codes[token * self.m + codebook]
    }

    pub fn basis(&self, codebook: usize, k: usize) -> &[f32] {
        let d = self.table.dim();
        let start = (codebook * self.k + k) * d;
        &self.codebooks[start..start + d]
    }
}

fn token_names(v: usize) -> Vec<String> {
    (0..v).map(|i| format!("t{i}")).collect()
}

/// Rows are sums of one basis vector per codebook; basis entries are
/// standard normal scaled by `1/sqrt(M)` and codes are uniform.
pub fn synth_planted_table(v: usize, d: usize, m: usize, k: usize, seed: u64) -> Result<PlantedTable> {
    for (field, value) in [("V", v), ("D", d), ("M", m), ("K", k)] {
        if value == 0 {
            return Err(Error::config(field, "must be at least 1"));
        }
    }
    let mut rng = seeded_rng(seed);
    let scale = 1.0 / (m as f64).sqrt();
    let codebooks: Vec<f32> = (0..m * k * d)
        .map(|_| (rng.sample::<f64, _>(StandardNormal) * scale) as f32)
        .collect();
    let codes: Vec<u32> = (0..v * m).map(|_| rng.random_range(0..k as u32)).collect();
    let mut data = vec![0.0f32; v * d];
    for w in 0..v {
        let row = &mut data[w * d..(w + 1) * d];
        for i in 0..m {
            let c = codes[w * m + i] as usize;
            let basis = &codebooks[(i * k + c) * d..(i * k + c + 1) * d];
            for (x, b) in row.iter_mut().zip(basis) {
                *x += b;
            }
        }
    }
    let table = EmbeddingTable::new(format!("planted-{seed}"), token_names(v), d, data)?;
    Ok(PlantedTable {
        table,
        m,
        k,
        codes,
        codebooks,
    })
}

/// I.i.d. standard normal table with tokens `t0..t{V-1}`.
pub fn synth_gaussian_table(v: usize, d: usize, seed: u64) -> Result<EmbeddingTable> {
    gaussian_table_for(token_names(v), d, seed)
}

/// I.i.d. standard normal rows for the given vocabulary.
pub fn gaussian_table_for(vocab: Vec<String>, d: usize, seed: u64) -> Result<EmbeddingTable> {
    let mut rng = seeded_rng(seed);
    let data = (0..vocab.len() * d)
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
        .collect();
    EmbeddingTable::new(format!("gaussian-{seed}"), vocab, d, data)
}
