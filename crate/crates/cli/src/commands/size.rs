use ccemb_core::size::{reports_to_csv, reports_to_text, REFERENCE_ENCODERS};
use ccemb_core::{size_report, CompressedEmbedding};

use crate::args::SizeArgs;
use crate::util::{load_any, out_dir, write_file, CliError, CliResult};
use crate::RunContext;

pub fn run(a: &SizeArgs, ctx: &RunContext) -> CliResult<()> {
    if a.m == 0 || a.k == 0 {
        let field = if a.m == 0 { "M" } else { "K" };
        return Err(CliError::usage(format!("invalid value for `{field}`: must be at least 1")));
    }
    let rows = if a.paper_table {
        REFERENCE_ENCODERS
            .iter()
            .map(|e| (e.name.to_string(), e.report(a.m, a.k)))
            .collect::<Vec<_>>()
    } else {
        let (name, v, d, m, k) = if let Some(path) = &a.compressed {
            let ce = CompressedEmbedding::load(path)?;
            (path.display().to_string(), ce.len() as u64, ce.dim() as u64, ce.m() as u64, ce.k() as u64)
        } else if let Some(path) = &a.emb {
            let t = load_any(path)?;
            (path.display().to_string(), t.len() as u64, t.dim() as u64, a.m, a.k)
        } else {
            match (a.v, a.d) {
                (Some(v), Some(d)) => ("table".to_string(), v, d, a.m, a.k),
                _ => {
                    return Err(CliError::usage(
                        "size needs --V and --D, --emb, --compressed or --paper-table",
                    ))
                }
            }
        };
        if v == 0 || d == 0 {
            return Err(CliError::usage("invalid value for `V`/`D`: must be at least 1"));
        }
        let encoder = a.encoder_params.map(|p| p as f64 * 4.0);
        vec![(name, size_report(v, d, m, k, encoder))]
    };
    let out = out_dir(&a.common)?;
    if a.csv {
        write_file(&out.join("size.csv"), reports_to_csv(&rows))?;
    }
    ctx.write_manifest(&out, &[])?;
    print!("{}", reports_to_text(&rows));
    Ok(())
}
