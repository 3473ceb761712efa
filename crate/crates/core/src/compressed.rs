//! The compressed embedding: `M` codebooks of `K` basis vectors plus one
//! `M`-length discrete code per token.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::binio::{self, ByteReader};
use crate::bitpack::{bits_per_code, pack_codes, row_stride, unpack_codes};
use crate::embedding_io::EmbeddingTable;
use crate::error::{Error, Result};
use crate::learner::{extract_codes, CodeModel};

pub(crate) const CCE_MAGIC: &[u8; 4] = b"CCE1";

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedEmbedding {
    vocab: Vec<String>,
    m: usize,
    k: usize,
    dim: usize,
    codebooks: Vec<f32>,
    codes: Vec<u32>,
}

impl CompressedEmbedding {
    pub fn new(
        vocab: Vec<String>,
        m: usize,
        k: usize,
        dim: usize,
        codebooks: Vec<f32>,
        codes: Vec<u32>,
    ) -> Result<Self> {
        if m == 0 || k == 0 || dim == 0 {
            return Err(Error::Shape("M, K and D must all be positive".into()));
        }
        if codebooks.len() != m * k * dim {
            return Err(Error::Shape(format!(
                "{} codebook values for M={m}, K={k}, D={dim}",
                codebooks.len()
            )));
        }
        if codes.len() != vocab.len() * m {
            return Err(Error::Shape(format!(
                "{} codes for {} tokens and M={m}",
                codes.len(),
                vocab.len()
            )));
        }
        if let Some(i) = codes.iter().position(|&c| c as usize >= k) {
            return Err(Error::CodeOutOfRange {
                token: i / m,
                codebook: i % m,
                code: codes[i],
                k,
            });
        }
        if let Some(i) = codebooks.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(format!("codebook value {i}"), "non-finite value"));
        }
        let mut seen = HashSet::with_capacity(vocab.len());
        for (i, tok) in vocab.iter().enumerate() {
            if !seen.insert(tok.as_str()) {
                return Err(Error::DuplicateToken {
                    token: tok.clone(),
                    location: format!("row {i}"),
                });
            }
        }
        Ok(Self {
            vocab,
            m,
            k,
            dim,
            codebooks,
            codes,
        })
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

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits_per_code(&self) -> u32 {
        bits_per_code(self.k)
    }

    pub fn codebooks(&self) -> &[f32] {
        &self.codebooks
    }

    /// `V x M`, row-major.
    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn token_codes(&self, token: usize) -> &[u32] {
        &self.codes[token * self.m..(token + 1) * self.m]
    }

    pub fn basis(&self, codebook: usize, k: usize) -> &[f32] {
        let start = (codebook * self.k + k) * self.dim;
        &self.codebooks[start..start + self.dim]
    }

    /// Returns a copy with replaced codebooks and the same codes.
    pub fn with_codebooks(&self, codebooks: Vec<f32>) -> Result<Self> {
        Self::new(
            self.vocab.clone(),
            self.m,
            self.k,
            self.dim,
            codebooks,
            self.codes.clone(),
        )
    }

    /// Sum of the selected basis vectors, accumulated in f64 in codebook order.
    pub fn lookup_f64(&self, token: usize) -> Result<Vec<f64>> {
        if token >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: token,
                len: self.len(),
            });
        }
        let mut out = vec![0.0f64; self.dim];
        for (i, &c) in self.token_codes(token).iter().enumerate() {
            for (o, &b) in out.iter_mut().zip(self.basis(i, c as usize)) {
                *o += b as f64;
            }
        }
        Ok(out)
    }

    pub fn lookup(&self, token: usize) -> Result<Vec<f32>> {
        Ok(self.lookup_f64(token)?.into_iter().map(|v| v as f32).collect())
    }

    /// Dense reconstruction of every token.
    pub fn reconstruct(&self) -> Result<EmbeddingTable> {
        let mut data = Vec::with_capacity(self.len() * self.dim);
        for t in 0..self.len() {
            data.extend(self.lookup(t)?);
        }
        EmbeddingTable::new("reconstructed", self.vocab.clone(), self.dim, data)
    }

    pub fn packed_codes(&self) -> Vec<u8> {
        pack_codes(&self.codes, self.m, self.k).expect("codes validated at construction")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CCE_MAGIC);
        for v in [self.len(), self.m, self.k, self.dim] {
            binio::put_u64(&mut out, v as u64);
        }
        binio::put_f32s(&mut out, self.codebooks.iter().copied());
        out.extend_from_slice(&self.packed_codes());
        binio::put_vocab(&mut out, &self.vocab);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(CCE_MAGIC)?;
        let v = r.count("V")?;
        let m = r.count("M")?;
        let k = r.count("K")?;
        let d = r.count("D")?;
        if m == 0 || k == 0 || d == 0 {
            return Err(Error::format("byte offset 4", "M, K and D must be positive"));
        }
        let n = m
            .checked_mul(k)
            .and_then(|x| x.checked_mul(d))
            .ok_or_else(|| Error::format("byte offset 4", "M*K*D overflows"))?;
        let codebooks = r.f32s(n, "codebooks")?;
        let stride = row_stride(m, k);
        let at = r.offset();
        let packed = r.take(v.saturating_mul(stride), "packed codes")?;
        let codes = unpack_codes(packed, v, m, k).map_err(|e| {
            Error::format(format!("byte offset {at}"), e.to_string())
        })?;
        let vocab = r.vocab(v)?;
        r.finish()?;
        Self::new(vocab, m, k, d, codebooks, codes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format { location, reason } => Error::Format {
                location: format!("{}: {location}", path.display()),
                reason,
            },
            other => other,
        })
    }
}

/// Replaces `table` by hard codes from `model` and the model's codebooks.
pub fn compress(table: &EmbeddingTable, model: &CodeModel) -> Result<CompressedEmbedding> {
    let codes = extract_codes(table, model)?;
    let codebooks = model.params.codebooks.iter().map(|&v| v as f32).collect();
    CompressedEmbedding::new(
        table.vocab().to_vec(),
        model.m(),
        model.k(),
        model.dim(),
        codebooks,
        codes,
    )
}
