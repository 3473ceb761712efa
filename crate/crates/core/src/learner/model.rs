//! Learner parameters, the code-logit encoder, and the relaxed
//! reconstruction loss with hand-derived gradients.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use super::relax::{argmax_first, soft_assign, EPS};
use crate::binio::{self, ByteReader};
use crate::embedding_io::EmbeddingTable;
use crate::error::{Error, Result};
use crate::optim::Moments;

/// Trainable tensors, flat and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `M x K x D`.
    pub codebooks: Vec<f64>,
    /// `hidden x D`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `(M*K) x hidden`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Params {
    pub fn zeros(m: usize, k: usize, d: usize, hidden: usize) -> Self {
        Self {
            codebooks: vec![0.0; m * k * d],
            w1: vec![0.0; hidden * d],
            b1: vec![0.0; hidden],
            w2: vec![0.0; m * k * hidden],
            b2: vec![0.0; m * k],
        }
    }

    pub fn tensors(&self) -> [&Vec<f64>; 5] {
        [&self.codebooks, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.codebooks,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Codebooks plus the encoder `softplus(W2 tanh(W1 e + b1) + b2)` that maps
/// a reference embedding to `M x K` positive logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeModel {
    m: usize,
    k: usize,
    dim: usize,
    hidden: usize,
    pub params: Params,
    pub moments: [Moments; 5],
    pub step: u64,
}

/// Activations of one forward pass kept for the backward pass.
struct Forward {
    hidden: Vec<f64>,
    pre: Vec<f64>,
    logits: Vec<f64>,
    assign: Vec<f64>,
    recon: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl CodeModel {
    /// All-zero parameters and fresh optimizer state.
    pub fn zeros(m: usize, k: usize, dim: usize, hidden: usize) -> Self {
        let params = Params::zeros(m, k, dim, hidden);
        let moments = params.tensors().map(|t| Moments::zeros(t.len()));
        Self {
            m,
            k,
            dim,
            hidden,
            params,
            moments,
            step: 0,
        }
    }

    /// Weights drawn from `N(0, (0.01 / sqrt(fan_in))^2)`, biases zero.
    ///
    /// Fan-in is `D` for `W1`, `hidden` for `W2`, and `M` for the codebooks
    /// (each reconstruction sums `M` basis vectors).
    pub fn init<R: Rng + ?Sized>(m: usize, k: usize, dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut model = Self::zeros(m, k, dim, hidden);
        let mut fill = |t: &mut Vec<f64>, fan_in: usize| {
            let std = 0.01 / (fan_in as f64).sqrt();
            for x in t.iter_mut() {
                *x = rng.sample::<f64, _>(StandardNormal) * std;
            }
        };
        fill(&mut model.params.codebooks, m);
        fill(&mut model.params.w1, dim);
        fill(&mut model.params.w2, hidden);
        model
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

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn basis(&self, codebook: usize, k: usize) -> &[f64] {
        let start = (codebook * self.k + k) * self.dim;
        &self.params.codebooks[start..start + self.dim]
    }

    fn encode(&self, row: &[f32]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let h = self.hidden;
        let p = &self.params;
        let hidden: Vec<f64> = (0..h)
            .map(|j| {
                let w = &p.w1[j * d..(j + 1) * d];
                let s: f64 = w.iter().zip(row).map(|(&a, &b)| a * b as f64).sum();
                (s + p.b1[j]).tanh()
            })
            .collect();
        let pre: Vec<f64> = (0..self.m * self.k)
            .map(|o| {
                let w = &p.w2[o * h..(o + 1) * h];
                let s: f64 = w.iter().zip(&hidden).map(|(a, b)| a * b).sum();
                s + p.b2[o]
            })
            .collect();
        let logits = pre.iter().map(|&a| softplus(a)).collect();
        (hidden, pre, logits)
    }

    /// Positive `M x K` logits for one embedding row, flattened row-major.
    pub fn code_logits(&self, row: &[f32]) -> Vec<f64> {
        self.encode(row).2
    }

    fn forward(&self, row: &[f32], gumbel: &[f64], temperature: f64) -> Forward {
        let (hidden, pre, logits) = self.encode(row);
        let assign = soft_assign(&logits, gumbel, self.k, temperature);
        let recon = super::relax::reconstruct_soft(&assign, &self.params.codebooks, self.dim);
        Forward {
            hidden,
            pre,
            logits,
            assign,
            recon,
        }
    }

    fn check_batch(&self, rows: &[&[f32]], gumbel: &[f64]) -> Result<()> {
        if rows.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != self.dim) {
            return Err(Error::Shape(format!(
                "row of width {} for a model of dimension {}",
                r.len(),
                self.dim
            )));
        }
        let mk = self.m * self.k;
        if gumbel.len() != rows.len() * mk {
            return Err(Error::Shape(format!(
                "{} noise values for {} rows of {mk} logits",
                gumbel.len(),
                rows.len()
            )));
        }
        Ok(())
    }

    /// Mean squared reconstruction error of the relaxed assignment under the
    /// given noise (`rows.len() x M x K` values).
    pub fn batch_loss(&self, rows: &[&[f32]], gumbel: &[f64], temperature: f64) -> Result<f64> {
        self.check_batch(rows, gumbel)?;
        let mk = self.m * self.k;
        let mut total = 0.0;
        for (b, row) in rows.iter().enumerate() {
            let f = self.forward(row, &gumbel[b * mk..(b + 1) * mk], temperature);
            let err = sq_err(&f.recon, row);
            if !err.is_finite() {
                return Err(Error::NonFiniteLoss { row: b });
            }
            total += err;
        }
        Ok(total / rows.len() as f64)
    }

    /// Loss and exact gradients of the relaxed objective with the noise held
    /// fixed.
    pub fn batch_loss_and_grads(
        &self,
        rows: &[&[f32]],
        gumbel: &[f64],
        temperature: f64,
    ) -> Result<(f64, Params)> {
        self.check_batch(rows, gumbel)?;
        let (m, k, d, h) = (self.m, self.k, self.dim, self.hidden);
        let mk = m * k;
        let p = &self.params;
        let mut g = Params::zeros(m, k, d, h);
        let scale = 2.0 / rows.len() as f64;
        let mut total = 0.0;

        let mut d_assign = vec![0.0; mk];
        let mut d_pre = vec![0.0; mk];
        let mut d_hidden = vec![0.0; h];

        for (b, row) in rows.iter().enumerate() {
            let f = self.forward(row, &gumbel[b * mk..(b + 1) * mk], temperature);
            let err = sq_err(&f.recon, row);
            if !err.is_finite() {
                return Err(Error::NonFiniteLoss { row: b });
            }
            total += err;

            let d_recon: Vec<f64> = f
                .recon
                .iter()
                .zip(row.iter())
                .map(|(&r, &t)| scale * (r - t as f64))
                .collect();

            // Codebooks receive assignment-weighted residuals; the assignment
            // receives the residual projected on each basis vector.
            for (o, (basis, gbasis)) in p
                .codebooks
                .chunks_exact(d)
                .zip(g.codebooks.chunks_exact_mut(d))
                .enumerate()
            {
                let a = f.assign[o];
                let mut dot = 0.0;
                for ((gb, &bv), &dr) in gbasis.iter_mut().zip(basis).zip(&d_recon) {
                    *gb += a * dr;
                    dot += bv * dr;
                }
                d_assign[o] = dot;
            }

            // Softmax, then z = (ln(l + eps) + g) / tau, then l = softplus(a).
            for i in 0..m {
                let rng = i * k..(i + 1) * k;
                let y = &f.assign[rng.clone()];
                let dy = &d_assign[rng.clone()];
                let inner: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                for o in rng {
                    let dz = f.assign[o] * (d_assign[o] - inner);
                    let dl = dz / (temperature * (f.logits[o] + EPS));
                    d_pre[o] = dl * sigmoid(f.pre[o]);
                }
            }

            d_hidden.iter_mut().for_each(|x| *x = 0.0);
            for o in 0..mk {
                let da = d_pre[o];
                g.b2[o] += da;
                let w = &p.w2[o * h..(o + 1) * h];
                let gw = &mut g.w2[o * h..(o + 1) * h];
                for j in 0..h {
                    gw[j] += da * f.hidden[j];
                    d_hidden[j] += da * w[j];
                }
            }

            for j in 0..h {
                let dp = d_hidden[j] * (1.0 - f.hidden[j] * f.hidden[j]);
                g.b1[j] += dp;
                let gw = &mut g.w1[j * d..(j + 1) * d];
                for (gv, &e) in gw.iter_mut().zip(row.iter()) {
                    *gv += dp * e as f64;
                }
            }
        }
        Ok((total / rows.len() as f64, g))
    }

    /// Hard code of each codebook: the first index of the maximal logit.
    pub fn codes_for_row(&self, row: &[f32]) -> Vec<u32> {
        let logits = self.code_logits(row);
        logits
            .chunks_exact(self.k)
            .map(|r| argmax_first(r) as u32)
            .collect()
    }

    /// Hard composition `sum_i codebook_i[code_i]` in f64.
    pub fn compose(&self, codes: &[u32]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, &c) in codes.iter().enumerate() {
            for (o, &b) in out.iter_mut().zip(self.basis(i, c as usize)) {
                *o += b;
            }
        }
        out
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for v in [self.m, self.k, self.dim, self.hidden] {
            binio::put_u64(&mut out, v as u64);
        }
        binio::put_u64(&mut out, self.step);
        for t in self.params.tensors() {
            binio::put_f32s(&mut out, t.iter().map(|&v| v as f32));
        }
        for mom in &self.moments {
            binio::put_f32s(&mut out, mom.m.iter().map(|&v| v as f32));
            binio::put_f32s(&mut out, mom.v.iter().map(|&v| v as f32));
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let m = r.count("M")?;
        let k = r.count("K")?;
        let dim = r.count("D")?;
        let hidden = r.count("hidden_dim")?;
        let step = r.u64("step")?;
        if m == 0 || k == 0 || dim == 0 || hidden == 0 {
            return Err(Error::format("byte offset 4", "zero-sized checkpoint header field"));
        }
        let mut model = Self::zeros(m, k, dim, hidden);
        model.step = step;
        const NAMES: [&str; 5] = ["codebooks", "encoder_w1", "encoder_b1", "encoder_w2", "encoder_b2"];
        for (t, name) in model.params.tensors_mut().into_iter().zip(NAMES) {
            let vals = r.f32s(t.len(), name)?;
            *t = vals.into_iter().map(f64::from).collect();
        }
        for mom in model.moments.iter_mut() {
            mom.m = r.f32s(mom.m.len(), "adam first moment")?.into_iter().map(f64::from).collect();
            mom.v = r.f32s(mom.v.len(), "adam second moment")?.into_iter().map(f64::from).collect();
        }
        r.finish()?;
        Ok(model)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_bytes())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

pub(crate) const CHECKPOINT_MAGIC: &[u8; 4] = b"CCM1";

fn sq_err(recon: &[f64], target: &[f32]) -> f64 {
    recon
        .iter()
        .zip(target)
        .map(|(&r, &t)| {
            let e = r - t as f64;
            e * e
        })
        .sum()
}

/// `V x M` hard codes for every row of `table`.
pub fn extract_codes(table: &EmbeddingTable, model: &CodeModel) -> Result<Vec<u32>> {
    if table.dim() != model.dim() {
        return Err(Error::Shape(format!(
            "table dimension {} does not match model dimension {}",
            table.dim(),
            model.dim()
        )));
    }
    Ok(table.rows().flat_map(|row| model.codes_for_row(row)).collect())
}
