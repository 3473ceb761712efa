use ccemb_core::analysis::FIDELITY_CSV_HEADER;
use ccemb_core::{compress, fidelity_suite, train};

use super::learner_config;
use crate::args::LearnArgs;
use crate::util::{load_any, out_dir, write_file, CliResult};
use crate::RunContext;

pub fn run(a: &LearnArgs, ctx: &RunContext) -> CliResult<()> {
    let cfg = learner_config(a.m, a.k, a.epochs, a.seed, &a.train);
    cfg.validate()?;
    let out = out_dir(&a.common)?;
    let table = load_any(&a.emb)?;
    let (model, trace) = train(&table, &cfg)?;
    let ce = compress(&table, &model)?;
    let report = fidelity_suite(&table, &ce, a.train.neighbours, a.epochs)?;

    model.save_checkpoint(&out.join("model.ccm"))?;
    ce.save(&out.join("embedding.cce"))?;
    write_file(&out.join("loss.csv"), trace.to_csv())?;
    write_file(
        &out.join("fidelity.csv"),
        format!("{FIDELITY_CSV_HEADER}\n{}\n", report.csv_row()),
    )?;
    ctx.write_manifest(
        &out,
        &[
            ("hidden-dim", cfg.hidden_dim.to_string()),
            ("best-attempt", trace.attempt.to_string()),
        ],
    )?;

    println!(
        "learned M={} K={} for {} tokens of dimension {}",
        cfg.m,
        cfg.k,
        table.len(),
        table.dim()
    );
    if cfg.restarts > 1 {
        println!("best of {} attempts: attempt {}", cfg.restarts, trace.attempt);
    }
    println!("final loss: {}", trace.last().unwrap_or(f64::NAN));
    println!("{}", report.to_text());
    println!("wrote {}", out.display());
    Ok(())
}
