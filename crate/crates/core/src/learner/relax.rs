//! Gumbel-softmax relaxation of the per-codebook categorical choice.

use rand::Rng;

/// Guard used both when clamping uniforms and inside `log(logit + eps)`.
pub const EPS: f64 = 1e-10;

/// Gumbel(0, 1) sample from a uniform draw, with `u` clamped into `[EPS, 1 - EPS]`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(EPS, 1.0 - EPS);
    -(-u.ln()).ln()
}

pub fn gumbel_noise<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| gumbel_from_uniform(rng.random::<f64>())).collect()
}

/// Row-wise `softmax((log(logits + EPS) + gumbel) / temperature)` over
/// `M` rows of `K` entries each.
pub fn soft_assign(logits: &[f64], gumbel: &[f64], k: usize, temperature: f64) -> Vec<f64> {
    debug_assert_eq!(logits.len(), gumbel.len());
    let mut out: Vec<f64> = logits
        .iter()
        .zip(gumbel)
        .map(|(&l, &g)| ((l + EPS).ln() + g) / temperature)
        .collect();
    for row in out.chunks_exact_mut(k) {
        softmax_in_place(row);
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// `sum_i sum_k assignment[i][k] * codebooks[i][k]`, with codebooks laid out
/// `M x K x D` row-major.
pub fn reconstruct_soft(assignment: &[f64], codebooks: &[f64], dim: usize) -> Vec<f64> {
    debug_assert_eq!(assignment.len() * dim, codebooks.len());
    let mut out = vec![0.0; dim];
    for (&a, basis) in assignment.iter().zip(codebooks.chunks_exact(dim)) {
        if a == 0.0 {
            continue;
        }
        for (o, &b) in out.iter_mut().zip(basis) {
            *o += a * b;
        }
    }
    out
}

/// Index of the first maximal entry.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
