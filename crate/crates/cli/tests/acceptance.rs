//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use ccemb_core::downstream::{EmbeddingSource, JointClassifier, ParsingExample};
use ccemb_core::learner::gumbel_noise;
use ccemb_core::{
    load_table, pack_codes, save_table, seeded_rng, synth_gaussian_table, synth_planted_table, unpack_codes, CodeModel,
    CompressedEmbedding,
};
use common::{ccemb_ok, num, path_str, read_csv, repo_data};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

// name, encoder_mib, emb_params (millions), emb_mib, size_ratio_pct, cc_emb_mib, cc_encoder_mib,
// emb_comp_pct, encoder_comp_pct, as the reference table prints them.
const TABLE_ONE: [(&str, [f64; 8]); 5] = [
    ("RoBERTa-base", [477.94, 38.60, 147.25, 30.81, 2.27, 332.96, 98.46, 30.33]),
    ("BERT-base-uncased", [420.00, 23.44, 89.42, 21.29, 1.97, 332.55, 97.80, 20.82]),
    ("DistilBERT-base-uncased", [255.55, 23.44, 89.42, 34.99, 1.97, 168.10, 97.80, 34.22]),
    ("ALBERT-large-v2", [68.09, 3.84, 14.65, 21.52, 0.71, 54.15, 95.15, 20.47]),
    ("ALBERT-base-v2", [45.05, 3.84, 14.65, 32.52, 0.71, 31.11, 95.15, 30.94]),
];
const COLUMNS: [&str; 8] =
    ["EncoderSize", "EmbParam#", "EmbSize", "SizeRatio", "CCEmbSize", "CCEncoderSize", "EmbComp", "EncoderComp"];

/// The reference values are rounded to two decimals, so the printed table is
/// compared at that precision. The reference derives RoBERTa's EmbSize from
/// the rounded 38.60M parameters (147.25); the exact 50265 x 768 table is
/// 147.2607 MiB and prints as 147.26, one unit in the last place.
fn size_table() -> Outcome {
    let dir = tempdir();
    let stdout = ccemb_ok(&["size", "--paper-table", "--csv", "--out", path_str(dir.path())])?;
    let printed: Vec<Vec<&str>> = stdout.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    ensure(printed.len() == 5, || format!("{} printed rows", printed.len()))?;
    let mut worst_printed: f64 = 0.0;
    for ((name, want), cells) in TABLE_ONE.iter().zip(&printed) {
        ensure(cells.len() == 9 && cells[0] == *name, || format!("unexpected row {cells:?}"))?;
        for (c, (&target, text)) in want.iter().zip(&cells[1..]).enumerate() {
            let got: f64 = text.trim_end_matches(['M', 'B', '%']).parse().map_err(|e| format!("{text}: {e}"))?;
            let tol = if text.ends_with('%') { 0.05 } else { 0.01 };
            let dev = (got - target).abs();
            ensure(dev <= tol + 1e-9, || format!("{name}: {} {got} vs {target}", COLUMNS[c]))?;
            worst_printed = worst_printed.max(dev / tol);
        }
    }
    let rows = read_csv(&dir.path().join("size.csv"))?;
    ensure(num(&rows[0], "emb_params")? == 38_603_520.0, || "RoBERTa parameter count".into())?;
    let exact = num(&rows[0], "emb_mib")?;
    Ok(format!(
        "five rows at printed precision, worst {worst_printed:.2} of tolerance; RoBERTa EmbSize exact {exact:.4} vs reference 147.25"
    ))
}

fn planted_recovery() -> Outcome {
    let (v, d, m, k) = (32, 8, 2, 4);
    let p = synth_planted_table(v, d, m, k, 7).map_err(|e| e.to_string())?;

    // Exhaustive oracle over all K^M tuples with the generator's arithmetic.
    for w in 0..v {
        let exact = (0..k.pow(m as u32)).any(|t| {
            let mut sum = vec![0.0f32; d];
            for i in 0..m {
                let c = (t / k.pow(i as u32)) % k;
                for (x, b) in sum.iter_mut().zip(p.basis(i, c)) {
                    *x += b;
                }
            }
            sum == p.table.row(w)
        });
        ensure(exact, || format!("token {w} has no zero-error code"))?;
    }

    let dir = tempdir();
    let emb = dir.path().join("planted.emb");
    save_table(&p.table, &emb, "raw-f32").map_err(|e| e.to_string())?;
    let out = dir.path().join("run");
    ccemb_ok(&[
        "learn", "--emb", path_str(&emb), "--out", path_str(&out), "--M", "2", "--K", "4", "--epochs", "1000",
        "--seed", "7", "--learning-rate", "1e-2", "--batch-size", "2", "--hidden-dim", "16", "--restarts", "16",
    ])?;
    let trace = read_csv(&out.join("loss.csv"))?;
    let final_loss = num(trace.last().ok_or("empty loss trace")?, "loss")?;
    ensure(trace.len() == 1000, || format!("{} epochs traced", trace.len()))?;
    ensure(final_loss <= 1e-3, || format!("final loss {final_loss}"))?;
    let ce = CompressedEmbedding::load(&out.join("embedding.cce")).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for w in 0..v {
        let recon = ce.lookup_f64(w).map_err(|e| e.to_string())?;
        let err: f64 = recon.iter().zip(p.table.row(w)).map(|(a, &b)| (a - b as f64).powi(2)).sum();
        worst = worst.max(err);
    }
    ensure(worst <= 1e-2, || format!("worst per-token error {worst}"))?;
    Ok(format!("final loss {final_loss:.2e}, worst token error {worst:.2e}"))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn gradients() -> Outcome {
    const H: f64 = 1e-4;
    let mut worst: f64 = 0.0;

    let table = synth_gaussian_table(8, 4, 5).map_err(|e| e.to_string())?;
    let mut rng = seeded_rng(17);
    let mut model = CodeModel::zeros(2, 2, 4, 3);
    for t in model.params.tensors_mut() {
        t.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    }
    let rows: Vec<&[f32]> = table.rows().collect();
    let noise = gumbel_noise(8 * 4, &mut rng);
    let (_, grads) = model.batch_loss_and_grads(&rows, &noise, 1.0).map_err(|e| e.to_string())?;
    for (t, g) in grads.tensors().iter().enumerate() {
        for i in 0..g.len() {
            let mut plus = model.clone();
            plus.params.tensors_mut()[t][i] += H;
            let mut minus = model.clone();
            minus.params.tensors_mut()[t][i] -= H;
            let numeric = (plus.batch_loss(&rows, &noise, 1.0).unwrap() - minus.batch_loss(&rows, &noise, 1.0).unwrap())
                / (2.0 * H);
            worst = worst.max(rel_err(g[i], numeric));
        }
    }

    let codebooks: Vec<f32> = (0..2 * 3 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let codes: Vec<u32> = (0..6 * 2).map(|_| rng.random_range(0..3)).collect();
    let ce = CompressedEmbedding::new((0..6).map(|i| format!("t{i}")).collect(), 2, 3, 4, codebooks, codes)
        .map_err(|e| e.to_string())?;
    let dense = synth_gaussian_table(6, 4, 9).map_err(|e| e.to_string())?;
    let ex = |toks: &[&str], intent, slots: &[usize], mask: &[bool]| ParsingExample {
        tokens: toks.iter().map(|s| s.to_string()).collect(),
        intent,
        slots: slots.to_vec(),
        slot_mask: mask.to_vec(),
    };
    let batch = [
        ex(&["t0", "t1", "t2"], 0, &[0, 1, 2], &[true, true, true]),
        ex(&["t3", "t1"], 2, &[1, 1], &[true, false]),
        ex(&["t4", "t5"], 1, &[3, 0], &[true, true]),
    ];
    let refs: Vec<&ParsingExample> = batch.iter().collect();
    for source in [EmbeddingSource::Dense(dense), EmbeddingSource::Compressed { ce, trainable: true }] {
        let mut model = JointClassifier::new(source, 3, 4, None).map_err(|e| e.to_string())?;
        for t in model.params.tensors_mut().into_iter().take(4) {
            t.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        }
        for smoothing in [0.0, 0.1] {
            let (_, grads) = model.joint_loss_and_grads(&refs, smoothing).map_err(|e| e.to_string())?;
            for (t, g) in grads.tensors().iter().enumerate() {
                for i in 0..g.len() {
                    let mut plus = model.clone();
                    plus.params.tensors_mut()[t][i] += H;
                    let mut minus = model.clone();
                    minus.params.tensors_mut()[t][i] -= H;
                    let numeric = (plus.joint_loss(&refs, smoothing).unwrap()
                        - minus.joint_loss(&refs, smoothing).unwrap())
                        / (2.0 * H);
                    worst = worst.max(rel_err(g[i], numeric));
                }
            }
        }
    }
    ensure(worst < 1e-4, || format!("worst relative error {worst:.2e}"))?;
    Ok(format!("worst relative error {worst:.2e}"))
}

/// Seeded V=128, D=16 Gaussian table shared by the trend criteria.
fn trend_table(dir: &Path) -> Result<String, String> {
    let path = dir.join("gauss.emb");
    let table = synth_gaussian_table(128, 16, 42).map_err(|e| e.to_string())?;
    save_table(&table, &path, "raw-f32").map_err(|e| e.to_string())?;
    Ok(path_str(&path).to_string())
}

fn sweep(dir: &Path, emb: &str, ms: &str, epochs: &str) -> Result<Vec<std::collections::HashMap<String, String>>, String> {
    let out = dir.join(format!("sweep-{ms}-{epochs}"));
    ccemb_ok(&[
        "sweep", "--emb", emb, "--out", path_str(&out), "--M", ms, "--K", "16", "--epochs", epochs, "--seeds",
        "0,1,2", "--learning-rate", "1e-3", "--batch-size", "64", "--neighbours", "20",
    ])?;
    let summary = read_csv(&out.join("sweep_summary.csv"))?;
    for row in &summary {
        ensure(num(row, "n")? == 3.0, || format!("summary row {row:?} averages fewer than 3 seeds"))?;
    }
    Ok(summary)
}

fn epoch_trend() -> Outcome {
    let dir = tempdir();
    let emb = trend_table(dir.path())?;
    let summary = sweep(dir.path(), &emb, "32", "100,300,1000")?;
    ensure(summary.len() == 3, || format!("{} summary rows", summary.len()))?;
    let col = |key: &str| summary.iter().map(|r| num(r, key)).collect::<Result<Vec<f64>, _>>();
    let (mse, cos, euc) = (col("mse_mean")?, col("nn_cos_mean")?, col("nn_euc_mean")?);
    let detail = format!("mse {mse:.4?}, nn_cos {cos:.3?}, nn_euc {euc:.3?}");
    ensure(mse.windows(2).all(|w| w[1] < w[0]), || format!("mse not strictly decreasing: {detail}"))?;
    ensure(cos.windows(2).all(|w| w[1] >= w[0]), || format!("cosine overlap decreases: {detail}"))?;
    ensure(euc.windows(2).all(|w| w[1] >= w[0]), || format!("euclidean overlap decreases: {detail}"))?;
    Ok(detail)
}

fn codebook_trend() -> Outcome {
    let dir = tempdir();
    let emb = trend_table(dir.path())?;
    let summary = sweep(dir.path(), &emb, "8,32", "700")?;
    let mse_for = |m: &str| -> Result<f64, String> {
        let row = summary.iter().find(|r| r["M"] == m).ok_or(format!("no M={m} row"))?;
        num(row, "mse_mean")
    };
    let (m8, m32) = (mse_for("8")?, mse_for("32")?);
    ensure(m32 < m8, || format!("mse M=32 {m32} not below M=8 {m8}"))?;
    Ok(format!("mean mse M=8 {m8:.4}, M=32 {m32:.4}"))
}

fn preservation() -> Outcome {
    let dir = tempdir();
    let out = dir.path();
    let stdout = ccemb_ok(&[
        "eval", "--data", &repo_data("toy_parsing.tsv"), "--emb", &repo_data("toy.vec"), "--out", path_str(out),
    ])?;
    let rows = read_csv(&out.join("eval.csv"))?;
    let em = |split: &str| -> Result<f64, String> {
        num(rows.iter().find(|r| r["split"] == split).ok_or(format!("no {split} row"))?, "em")
    };
    let (orig, comp) = (em("original_test")?, em("compressed_test")?);
    ensure(orig > 0.0, || "original classifier has zero EM".into())?;
    ensure(comp >= 0.975 * orig, || format!("compressed EM {comp} < 0.975 x original {orig}"))?;
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).map_err(|e| e.to_string())?;
    ensure(manifest.contains("trainable-codebooks=true"), || "codebook finetuning was not enabled".into())?;
    let learned = CompressedEmbedding::load(&out.join("embedding.cce")).map_err(|e| e.to_string())?;
    let tuned = CompressedEmbedding::load(&out.join("finetuned.cce")).map_err(|e| e.to_string())?;
    ensure(tuned.packed_codes() == learned.packed_codes(), || "packed codes changed".into())?;
    ensure(tuned.codebooks() != learned.codebooks(), || "codebooks were not finetuned".into())?;
    ensure(stdout.contains("preservation ratio"), || "no ratio printed".into())?;
    Ok(format!("test EM original {orig:.4}, compressed {comp:.4}, ratio {:.4}; codes byte-identical", comp / orig))
}

fn format_bijections() -> Outcome {
    for k in [2usize, 4, 16, 64] {
        let mut rng = seeded_rng(1000 + k as u64);
        for n in 0..1000 {
            let m = rng.random_range(1..=32);
            let v = rng.random_range(1..=20);
            let codes: Vec<u32> = (0..v * m).map(|_| rng.random_range(0..k as u32)).collect();
            let packed = pack_codes(&codes, m, k).map_err(|e| e.to_string())?;
            let back = unpack_codes(&packed, v, m, k).map_err(|e| e.to_string())?;
            ensure(back == codes, || format!("K={k} matrix {n} does not roundtrip"))?;
        }
    }
    let dir = tempdir();
    let mut rng = seeded_rng(3);
    let (v, m, k, d) = (40, 32, 16, 12);
    let codebooks: Vec<f32> = (0..m * k * d).map(|_| f32::from_bits(rng.random::<u32>() & 0xbf7f_ffff)).collect();
    let codes: Vec<u32> = (0..v * m).map(|_| rng.random_range(0..k as u32)).collect();
    let ce = CompressedEmbedding::new((0..v).map(|i| format!("w{i}")).collect(), m, k, d, codebooks, codes)
        .map_err(|e| e.to_string())?;
    let cce = dir.path().join("x.cce");
    ce.save(&cce).map_err(|e| e.to_string())?;
    let back = CompressedEmbedding::load(&cce).map_err(|e| e.to_string())?;
    let bits = |x: &[f32]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(back == ce && bits(back.codebooks()) == bits(ce.codebooks()), || "CCE1 roundtrip differs".into())?;

    let table = synth_gaussian_table(50, 9, 4).map_err(|e| e.to_string())?;
    let raw = dir.path().join("x.emb");
    save_table(&table, &raw, "raw-f32").map_err(|e| e.to_string())?;
    let loaded = load_table(&raw, "raw-f32").map_err(|e| e.to_string())?;
    ensure(loaded.vocab() == table.vocab() && bits(loaded.data()) == bits(table.data()), || {
        "raw-f32 roundtrip differs".into()
    })?;
    Ok("4000 code matrices, CCE1 and raw-f32 bit-exact".into())
}

fn determinism() -> Outcome {
    let dir = tempdir();
    let emb = dir.path().join("g.emb");
    let table = synth_gaussian_table(64, 8, 1).map_err(|e| e.to_string())?;
    save_table(&table, &emb, "raw-f32").map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let out = dir.path().join(name);
        ccemb_ok(&[
            "learn", "--emb", path_str(&emb), "--out", path_str(&out), "--M", "4", "--K", "8", "--epochs", "50",
            "--seed", "3", "--learning-rate", "1e-3",
        ])?;
        let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
        Ok((read("embedding.cce")?, read("loss.csv")?))
    };
    let (a, b) = (run("a")?, run("b")?);
    ensure(a.0 == b.0, || "embedding.cce differs between runs".into())?;
    ensure(a.1 == b.1, || "loss.csv differs between runs".into())?;
    Ok(format!("{} compressed bytes and {} trace bytes identical", a.0.len(), a.1.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("size accounting table", size_table),
        ("planted code recovery", planted_recovery),
        ("analytic gradients", gradients),
        ("fidelity improves with epochs", epoch_trend),
        ("fidelity improves with codebooks", codebook_trend),
        ("downstream preservation", preservation),
        ("format bijections", format_bijections),
        ("learn determinism", determinism),
    ];
    // Numeric arguments select criteria; everything else (libtest flags) is ignored.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {}: {name} ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}: {name} ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
