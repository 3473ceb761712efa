use ccemb_core::{compress, embedding_io::formats, save_table, CodeModel, CompressedEmbedding};

use crate::args::{PackArgs, ReconstructArgs, UnpackArgs};
use crate::util::{load_any, out_dir, write_file, CliResult};
use crate::RunContext;

pub fn pack(a: &PackArgs, ctx: &RunContext) -> CliResult<()> {
    let table = load_any(&a.emb)?;
    let model = CodeModel::load_checkpoint(&a.model)?;
    let ce = compress(&table, &model)?;
    let out = out_dir(&a.common)?;
    let path = out.join("embedding.cce");
    ce.save(&path)?;
    ctx.write_manifest(&out, &[])?;
    println!(
        "packed {} tokens (M={}, K={}, {} bytes of codes) into {}",
        ce.len(),
        ce.m(),
        ce.k(),
        ce.packed_codes().len(),
        path.display()
    );
    Ok(())
}

pub fn unpack(a: &UnpackArgs, ctx: &RunContext) -> CliResult<()> {
    let ce = CompressedEmbedding::load(&a.compressed)?;
    let mut text = String::new();
    for (t, tok) in ce.vocab().iter().enumerate() {
        let codes: Vec<String> = ce.token_codes(t).iter().map(u32::to_string).collect();
        text.push_str(&format!("{tok}\t{}\n", codes.join(" ")));
    }
    let out = out_dir(&a.common)?;
    let path = out.join("codes.txt");
    write_file(&path, text)?;
    ctx.write_manifest(&out, &[])?;
    println!("wrote codes of {} tokens to {}", ce.len(), path.display());
    Ok(())
}

pub fn reconstruct(a: &ReconstructArgs, ctx: &RunContext) -> CliResult<()> {
    // Validate the format name before doing any work.
    formats().get(&a.format)?;
    let ce = CompressedEmbedding::load(&a.compressed)?;
    let table = ce.reconstruct()?;
    let out = out_dir(&a.common)?;
    let ext = if a.format == "raw-f32" { "emb" } else { "vec" };
    let path = out.join(format!("reconstructed.{ext}"));
    save_table(&table, &path, &a.format)?;
    ctx.write_manifest(&out, &[])?;
    println!("wrote {} rows to {}", table.len(), path.display());
    Ok(())
}
