//! Fidelity of a reconstruction against its reference table.

use std::collections::HashSet;

use crate::compressed::CompressedEmbedding;
use crate::embedding_io::EmbeddingTable;
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

pub const DEFAULT_NEIGHBOURS: usize = 20;

fn check_same_shape(a: &EmbeddingTable, b: &EmbeddingTable) -> Result<()> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "tables differ in shape: {}x{} vs {}x{}",
            a.len(),
            a.dim(),
            b.len(),
            b.dim()
        )));
    }
    if a.is_empty() {
        return Err(Error::Shape("tables are empty".into()));
    }
    Ok(())
}

fn row_sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// `(1/V) sum_w ||recon(w) - orig(w)||^2`.
pub fn mse(original: &EmbeddingTable, recon: &EmbeddingTable) -> Result<f64> {
    check_same_shape(original, recon)?;
    let total: f64 = original.rows().zip(recon.rows()).map(|(a, b)| row_sq_dist(a, b)).sum();
    Ok(total / original.len() as f64)
}

/// `(1/V) sum_w ||recon(w) - orig(w)||`.
pub fn mean_euclidean_distance(original: &EmbeddingTable, recon: &EmbeddingTable) -> Result<f64> {
    check_same_shape(original, recon)?;
    let total: f64 = original
        .rows()
        .zip(recon.rows())
        .map(|(a, b)| row_sq_dist(a, b).sqrt())
        .sum();
    Ok(total / original.len() as f64)
}

/// A dissimilarity used to rank neighbours; smaller is closer.
pub trait NeighborMetric: Named + Send + Sync {
    /// Rejects tables on which the metric is undefined.
    fn check(&self, _table: &EmbeddingTable) -> Result<()> {
        Ok(())
    }

    /// Per-row preprocessing applied once before pairwise comparisons.
    fn prepare(&self, row: &[f32]) -> Vec<f64> {
        row.iter().map(|&v| v as f64).collect()
    }

    fn dissimilarity(&self, a: &[f64], b: &[f64]) -> f64;
}

pub struct Euclidean;

impl Named for Euclidean {
    fn name(&self) -> &'static str {
        "euclidean"
    }
}

impl NeighborMetric for Euclidean {
    fn dissimilarity(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }
}

/// Ranks by negated cosine similarity.
pub struct Cosine;

impl Named for Cosine {
    fn name(&self) -> &'static str {
        "cosine"
    }
}

impl NeighborMetric for Cosine {
    fn check(&self, table: &EmbeddingTable) -> Result<()> {
        for (tok, row) in table.vocab().iter().zip(table.rows()) {
            if row.iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroNorm(tok.clone()));
            }
        }
        Ok(())
    }

    fn prepare(&self, row: &[f32]) -> Vec<f64> {
        let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        row.iter().map(|&v| v as f64 / norm).collect()
    }

    fn dissimilarity(&self, a: &[f64], b: &[f64]) -> f64 {
        -a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }
}

pub fn metrics() -> Registry<dyn NeighborMetric> {
    let mut reg: Registry<dyn NeighborMetric> = Registry::new("neighbour metric");
    reg.register(Box::new(Cosine));
    reg.register(Box::new(Euclidean));
    reg
}

/// The `k` nearest other rows of every row, closest first; ties go to the
/// smaller token index.
pub fn top_k_neighbours(table: &EmbeddingTable, k: usize, metric: &dyn NeighborMetric) -> Result<Vec<Vec<usize>>> {
    if table.len() <= k {
        return Err(Error::Shape(format!(
            "need more than k={k} tokens for neighbour lists, table has {}",
            table.len()
        )));
    }
    metric.check(table)?;
    let prepared: Vec<Vec<f64>> = table.rows().map(|r| metric.prepare(r)).collect();
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(table.len());
    let mut out = Vec::with_capacity(table.len());
    for (w, pw) in prepared.iter().enumerate() {
        scored.clear();
        scored.extend(
            prepared
                .iter()
                .enumerate()
                .filter(|&(u, _)| u != w)
                .map(|(u, pu)| (metric.dissimilarity(pw, pu), u)),
        );
        scored.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.push(scored[..k].iter().map(|&(_, u)| u).collect());
    }
    Ok(out)
}

/// Mean size of the intersection of each token's top-`k` neighbour sets in
/// the two tables.
pub fn nn_overlap(original: &EmbeddingTable, recon: &EmbeddingTable, k: usize, metric: &dyn NeighborMetric) -> Result<f64> {
    check_same_shape(original, recon)?;
    let a = top_k_neighbours(original, k, metric)?;
    let b = top_k_neighbours(recon, k, metric)?;
    let total: usize = a
        .iter()
        .zip(&b)
        .map(|(x, y)| {
            let set: HashSet<usize> = x.iter().copied().collect();
            y.iter().filter(|u| set.contains(u)).count()
        })
        .sum();
    Ok(total as f64 / original.len() as f64)
}

pub fn nn_overlap_by_name(original: &EmbeddingTable, recon: &EmbeddingTable, k: usize, metric: &str) -> Result<f64> {
    let reg = metrics();
    nn_overlap(original, recon, k, reg.get(metric)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityReport {
    pub epoch_tag: usize,
    pub mse: f64,
    pub mean_euclidean_distance: f64,
    pub nn_overlap_cosine: f64,
    pub nn_overlap_euclidean: f64,
    pub k: usize,
}

pub const FIDELITY_CSV_HEADER: &str = "epoch,mse,mean_euc_dist,nn_cos,nn_euc";

impl FidelityReport {
    /// One CSV row; floats use the shortest round-trip form so the row parses back exactly.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch_tag, self.mse, self.mean_euclidean_distance, self.nn_overlap_cosine, self.nn_overlap_euclidean
        )
    }

    pub fn parse_csv_row(line: &str, k: usize) -> Result<Self> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 5 {
            return Err(Error::format("fidelity row", format!("expected 5 fields, found {}", fields.len())));
        }
        let f = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::format("fidelity row", format!("bad number `{}`", fields[i])))
        };
        Ok(Self {
            epoch_tag: fields[0]
                .parse()
                .map_err(|_| Error::format("fidelity row", format!("bad epoch `{}`", fields[0])))?,
            mse: f(1)?,
            mean_euclidean_distance: f(2)?,
            nn_overlap_cosine: f(3)?,
            nn_overlap_euclidean: f(4)?,
            k,
        })
    }

    pub fn to_text(&self) -> String {
        format!(
            "epoch {}: mse {:.6}  mean-euc-dist {:.6}  nn-cos@{} {:.3}  nn-euc@{} {:.3}",
            self.epoch_tag,
            self.mse,
            self.mean_euclidean_distance,
            self.k,
            self.nn_overlap_cosine,
            self.k,
            self.nn_overlap_euclidean
        )
    }
}

pub fn fidelity_report(original: &EmbeddingTable, recon: &EmbeddingTable, k: usize, epoch_tag: usize) -> Result<FidelityReport> {
    Ok(FidelityReport {
        epoch_tag,
        mse: mse(original, recon)?,
        mean_euclidean_distance: mean_euclidean_distance(original, recon)?,
        nn_overlap_cosine: nn_overlap(original, recon, k, &Cosine)?,
        nn_overlap_euclidean: nn_overlap(original, recon, k, &Euclidean)?,
        k,
    })
}

/// Reconstructs every token of `ce` and compares against `original`.
pub fn fidelity_suite(original: &EmbeddingTable, ce: &CompressedEmbedding, k: usize, epoch_tag: usize) -> Result<FidelityReport> {
    if original.vocab() != ce.vocab() {
        return Err(Error::Shape("compressed vocabulary does not match the reference table".into()));
    }
    let recon = ce.reconstruct()?;
    fidelity_report(original, &recon, k, epoch_tag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth_gaussian_table;

    fn table(rows: &[&[f32]]) -> EmbeddingTable {
        let d = rows[0].len();
        EmbeddingTable::new(
            "t",
            (0..rows.len()).map(|i| format!("w{i}")).collect(),
            d,
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn hand_distances() {
        let a = table(&[&[0.0, 0.0]]);
        let b = table(&[&[3.0, 4.0]]);
        assert_eq!(mse(&a, &b).unwrap(), 25.0);
        assert_eq!(mean_euclidean_distance(&a, &b).unwrap(), 5.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mean_euclidean_distance(&b, &b).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let a = synth_gaussian_table(3, 2, 1).unwrap();
        let b = synth_gaussian_table(4, 2, 1).unwrap();
        assert!(mse(&a, &b).is_err());
        assert!(nn_overlap(&a, &b, 1, &Euclidean).is_err());
    }

    #[test]
    fn identical_tables_overlap_fully() {
        let a = synth_gaussian_table(30, 4, 2).unwrap();
        for m in metrics().names() {
            assert_eq!(nn_overlap_by_name(&a, &a, 5, m).unwrap(), 5.0);
        }
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let a = synth_gaussian_table(25, 3, 4).unwrap();
        let scaled: Vec<f32> = a.data().iter().map(|v| v * 2.0).collect();
        let b = EmbeddingTable::new("s", a.vocab().to_vec(), 3, scaled).unwrap();
        assert_eq!(nn_overlap(&a, &b, 4, &Cosine).unwrap(), 4.0);
    }

    #[test]
    fn cosine_rejects_zero_rows() {
        let a = table(&[&[1.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]]);
        let err = nn_overlap(&a, &a, 1, &Cosine).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm(ref t) if t == "w1"));
    }

    #[test]
    fn k_must_be_below_vocab() {
        let a = synth_gaussian_table(5, 2, 1).unwrap();
        assert!(nn_overlap(&a, &a, 5, &Euclidean).is_err());
    }

    #[test]
    fn ties_break_to_smaller_index() {
        // Rows 1 and 2 are equidistant from row 0.
        let a = table(&[&[0.0, 0.0], &[1.0, 0.0], &[-1.0, 0.0], &[5.0, 5.0]]);
        let nn = top_k_neighbours(&a, 1, &Euclidean).unwrap();
        assert_eq!(nn[0], vec![1]);
    }

    #[test]
    fn csv_roundtrip() {
        let r = FidelityReport {
            epoch_tag: 300,
            mse: 0.123_456_789_012_345_6,
            mean_euclidean_distance: 1.0 / 3.0,
            nn_overlap_cosine: 4.05,
            nn_overlap_euclidean: 7.0,
            k: 20,
        };
        assert_eq!(FidelityReport::parse_csv_row(&r.csv_row(), 20).unwrap(), r);
        assert!(FidelityReport::parse_csv_row("1,2,3", 20).is_err());
    }
}
