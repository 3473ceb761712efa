use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use ccemb_core::{compress, fidelity_suite, learner::train_with, EmbeddingTable, FidelityReport};

use super::learner_config;
use crate::args::SweepArgs;
use crate::util::{load_any, out_dir, write_file, CliError, CliResult};
use crate::RunContext;

pub const SWEEP_CSV_HEADER: &str = "M,K,epochs,seed,mse,mean_euc_dist,nn_cos,nn_euc,loss,status";
pub const SUMMARY_CSV_HEADER: &str =
    "M,K,epochs,n,mse_mean,mse_std,mse_min,mse_max,nn_cos_mean,nn_cos_std,nn_euc_mean,nn_euc_std";

struct Row {
    m: usize,
    k: usize,
    epochs: usize,
    seed: u64,
    result: Result<(FidelityReport, f64), String>,
}

impl Row {
    fn csv(&self) -> String {
        match &self.result {
            Ok((r, loss)) => format!(
                "{},{},{},{},{},{},{},{},{loss},ok",
                self.m, self.k, self.epochs, self.seed, r.mse, r.mean_euclidean_distance, r.nn_overlap_cosine,
                r.nn_overlap_euclidean
            ),
            Err(msg) => format!(
                "{},{},{},{},,,,,,error: {}",
                self.m,
                self.k,
                self.epochs,
                self.seed,
                msg.replace([',', '\n'], ";")
            ),
        }
    }
}

/// Trains one (M, K, seed) unit to the largest checkpoint and reports every
/// requested checkpoint of the winning attempt.
fn run_unit(
    table: &EmbeddingTable,
    a: &SweepArgs,
    checkpoints: &BTreeSet<usize>,
    m: usize,
    k: usize,
    seed: u64,
) -> Vec<Row> {
    let last = *checkpoints.iter().next_back().expect("nonempty");
    let cfg = learner_config(m, k, last, seed, &a.train);
    let mut snaps: BTreeMap<(usize, usize), FidelityReport> = BTreeMap::new();
    let outcome = cfg.validate().and_then(|_| {
        train_with(table, &cfg, |attempt, epoch, model| {
            if checkpoints.contains(&epoch) {
                let ce = compress(table, model)?;
                snaps.insert((attempt, epoch), fidelity_suite(table, &ce, a.train.neighbours, epoch)?);
            }
            Ok(())
        })
    });
    checkpoints
        .iter()
        .map(|&epochs| Row {
            m,
            k,
            epochs,
            seed,
            result: match &outcome {
                Ok((_, trace)) => Ok((snaps[&(trace.attempt, epochs)], trace.losses[epochs - 1])),
                Err(e) => Err(e.to_string()),
            },
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summary(rows: &[Row]) -> (String, String) {
    let mut cells: BTreeMap<(usize, usize, usize), Vec<FidelityReport>> = BTreeMap::new();
    for r in rows {
        if let Ok((f, _)) = &r.result {
            cells.entry((r.m, r.k, r.epochs)).or_default().push(*f);
        }
    }
    let mut csv = format!("{SUMMARY_CSV_HEADER}\n");
    let mut text = format!(
        "{:>4} {:>4} {:>6} {:>3} {:>24} {:>16} {:>16}\n",
        "M", "K", "epochs", "n", "mse (mean ± std)", "nn-cos", "nn-euc"
    );
    for ((m, k, e), reps) in &cells {
        let mses: Vec<f64> = reps.iter().map(|r| r.mse).collect();
        let cos: Vec<f64> = reps.iter().map(|r| r.nn_overlap_cosine).collect();
        let euc: Vec<f64> = reps.iter().map(|r| r.nn_overlap_euclidean).collect();
        let (mm, ms) = mean_std(&mses);
        let (cm, cs) = mean_std(&cos);
        let (em, es) = mean_std(&euc);
        let min = mses.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = mses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        csv.push_str(&format!(
            "{m},{k},{e},{},{mm},{ms},{min},{max},{cm},{cs},{em},{es}\n",
            reps.len()
        ));
        text.push_str(&format!(
            "{m:>4} {k:>4} {e:>6} {:>3} {:>24} {:>16} {:>16}\n",
            reps.len(),
            format!("{mm:.6} ± {ms:.6}"),
            format!("{cm:.3} ± {cs:.3}"),
            format!("{em:.3} ± {es:.3}")
        ));
    }
    (csv, text)
}

pub fn run(a: &SweepArgs, ctx: &RunContext) -> CliResult<()> {
    for (name, list) in [("M", &a.m), ("K", &a.k), ("epochs", &a.epochs)] {
        if list.is_empty() || list.contains(&0) {
            return Err(CliError::usage(format!("invalid value for `{name}`: entries must be positive")));
        }
    }
    if a.seeds.is_empty() {
        return Err(CliError::usage("invalid value for `seeds`: need at least one seed"));
    }
    let checkpoints: BTreeSet<usize> = a.epochs.iter().copied().collect();
    learner_config(a.m[0], a.k[0], 1, 0, &a.train).validate()?;
    let out = out_dir(&a.common)?;
    let table = load_any(&a.emb)?;

    let mut units = Vec::new();
    for &m in &a.m {
        for &k in &a.k {
            for &seed in &a.seeds {
                units.push((m, k, seed));
            }
        }
    }
    units.sort_unstable();
    units.dedup();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::usage(format!("cannot start worker pool: {e}")))?;
    let mut rows: Vec<Row> = pool.install(|| {
        units
            .par_iter()
            .flat_map_iter(|&(m, k, seed)| run_unit(&table, a, &checkpoints, m, k, seed))
            .collect()
    });
    rows.sort_by_key(|r| (r.m, r.k, r.epochs, r.seed));

    let mut csv = format!("{SWEEP_CSV_HEADER}\n");
    for r in &rows {
        csv.push_str(&r.csv());
        csv.push('\n');
    }
    let (summary_csv, summary_text) = summary(&rows);
    write_file(&out.join("sweep.csv"), csv)?;
    write_file(&out.join("sweep_summary.csv"), summary_csv)?;
    ctx.write_manifest(&out, &[])?;

    print!("{summary_text}");
    let failed: Vec<&Row> = rows.iter().filter(|r| r.result.is_err()).collect();
    for r in &failed {
        if let Err(msg) = &r.result {
            eprintln!(
                "cell M={} K={} epochs={} seed={} failed: {msg}",
                r.m, r.k, r.epochs, r.seed
            );
        }
    }
    println!(
        "{} rows ({} failed); wrote {}",
        rows.len(),
        failed.len(),
        out.display()
    );
    Ok(())
}
