use ccemb_core::analysis::{fidelity_report, FIDELITY_CSV_HEADER};
use ccemb_core::{fidelity_suite, CompressedEmbedding};

use crate::args::AnalyzeArgs;
use crate::util::{load_any, out_dir, write_file, CliError, CliResult};
use crate::RunContext;

pub fn run(a: &AnalyzeArgs, ctx: &RunContext) -> CliResult<()> {
    let original = load_any(&a.emb)?;
    let report = match (&a.compressed, &a.recon) {
        (Some(path), None) => fidelity_suite(&original, &CompressedEmbedding::load(path)?, a.neighbours, 0)?,
        (None, Some(path)) => {
            let recon = load_any(path)?;
            if recon.vocab() != original.vocab() {
                return Err(CliError::data("reconstruction vocabulary does not match the original table"));
            }
            fidelity_report(&original, &recon, a.neighbours, 0)?
        }
        _ => return Err(CliError::usage("analyze needs exactly one of --compressed or --recon")),
    };
    let out = out_dir(&a.common)?;
    write_file(
        &out.join("fidelity.csv"),
        format!("{FIDELITY_CSV_HEADER}\n{}\n", report.csv_row()),
    )?;
    ctx.write_manifest(&out, &[])?;
    println!("{}", report.to_text());
    Ok(())
}
