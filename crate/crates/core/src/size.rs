//! Storage accounting for dense versus compressed embeddings.
//!
//! Sizes count information only: `32 V D` bits for the dense table,
//! `32 M K D` bits for the codebooks and `V M ceil(log2 K)` bits for the codes.
//! The per-row byte padding of the packed file format is not included.

use crate::bitpack::bits_per_code;

pub const MIB: f64 = 1_048_576.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderSizes {
    pub total_bytes: f64,
    pub compressed_bytes: f64,
    pub compression_pct: f64,
    /// Share of the encoder taken by the dense embedding table.
    pub embedding_share_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeReport {
    pub vocab_size: u64,
    pub dim: u64,
    pub m: u64,
    pub k: u64,
    pub original_bits: u64,
    pub codebook_bits: u64,
    pub code_bits: u64,
    pub compressed_bits: u64,
    pub emb_compression_pct: f64,
    pub encoder: Option<EncoderSizes>,
}

impl SizeReport {
    pub fn original_bytes(&self) -> f64 {
        self.original_bits as f64 / 8.0
    }

    pub fn compressed_bytes(&self) -> f64 {
        self.compressed_bits as f64 / 8.0
    }

    pub fn original_mib(&self) -> f64 {
        self.original_bytes() / MIB
    }

    pub fn compressed_mib(&self) -> f64 {
        self.compressed_bytes() / MIB
    }

    /// Parameters in the dense table.
    pub fn embedding_params(&self) -> u64 {
        self.vocab_size * self.dim
    }
}

pub fn size_report(v: u64, d: u64, m: u64, k: u64, encoder_total_bytes: Option<f64>) -> SizeReport {
    let original_bits = 32 * v * d;
    let codebook_bits = 32 * m * k * d;
    let code_bits = v * m * bits_per_code(k as usize) as u64;
    let compressed_bits = codebook_bits + code_bits;
    let emb_compression_pct = (100.0 * (1.0 - compressed_bits as f64 / original_bits as f64)).clamp(0.0, 100.0);
    let mut report = SizeReport {
        vocab_size: v,
        dim: d,
        m,
        k,
        original_bits,
        codebook_bits,
        code_bits,
        compressed_bits,
        emb_compression_pct,
        encoder: None,
    };
    report.encoder = encoder_total_bytes.map(|total| {
        let compressed = total - report.original_bytes() + report.compressed_bytes();
        EncoderSizes {
            total_bytes: total,
            compressed_bytes: compressed,
            compression_pct: (100.0 * (1.0 - compressed / total)).clamp(0.0, 100.0),
            embedding_share_pct: 100.0 * report.original_bytes() / total,
        }
    });
    report
}

/// A pretrained encoder whose embedding table size is known.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceEncoder {
    pub name: &'static str,
    pub vocab_size: u64,
    pub dim: u64,
    /// Total parameter count of the encoder, embeddings included.
    pub encoder_params: u64,
}

impl ReferenceEncoder {
    pub fn encoder_bytes(&self) -> f64 {
        self.encoder_params as f64 * 4.0
    }

    pub fn report(&self, m: u64, k: u64) -> SizeReport {
        size_report(self.vocab_size, self.dim, m, k, Some(self.encoder_bytes()))
    }
}

/// Common BERT-family encoders, compressed with `M = 32`, `K = 16` by default.
pub const REFERENCE_ENCODERS: [ReferenceEncoder; 5] = [
    ReferenceEncoder {
        name: "RoBERTa-base",
        vocab_size: 50_265,
        dim: 768,
        encoder_params: 125_290_000,
    },
    ReferenceEncoder {
        name: "BERT-base-uncased",
        vocab_size: 30_522,
        dim: 768,
        encoder_params: 110_100_000,
    },
    ReferenceEncoder {
        name: "DistilBERT-base-uncased",
        vocab_size: 30_522,
        dim: 768,
        encoder_params: 66_990_000,
    },
    ReferenceEncoder {
        name: "ALBERT-large-v2",
        vocab_size: 30_000,
        dim: 128,
        encoder_params: 17_850_000,
    },
    ReferenceEncoder {
        name: "ALBERT-base-v2",
        vocab_size: 30_000,
        dim: 128,
        encoder_params: 11_810_000,
    },
];

const CSV_HEADER: &str = "name,V,D,M,K,emb_params,emb_mib,codebook_bits,code_bits,compressed_bytes,cc_emb_mib,emb_comp_pct,encoder_mib,size_ratio_pct,cc_encoder_mib,encoder_comp_pct";

/// MiB and percentage columns carry four decimals.
pub fn reports_to_csv(rows: &[(String, SizeReport)]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for (name, r) in rows {
        let (enc, ratio, cc_enc, enc_pct) = match r.encoder {
            Some(e) => (
                format!("{:.4}", e.total_bytes / MIB),
                format!("{:.4}", e.embedding_share_pct),
                format!("{:.4}", e.compressed_bytes / MIB),
                format!("{:.4}", e.compression_pct),
            ),
            None => Default::default(),
        };
        out.push_str(&format!(
            "{name},{},{},{},{},{},{:.4},{},{},{},{:.4},{:.4},{enc},{ratio},{cc_enc},{enc_pct}\n",
            r.vocab_size,
            r.dim,
            r.m,
            r.k,
            r.embedding_params(),
            r.original_mib(),
            r.codebook_bits,
            r.code_bits,
            r.compressed_bytes(),
            r.compressed_mib(),
            r.emb_compression_pct,
        ));
    }
    out
}

/// Aligned plain-text rendering, MB meaning MiB.
pub fn reports_to_text(rows: &[(String, SizeReport)]) -> String {
    let headers = [
        "Encoder", "EncoderSize", "EmbParam#", "EmbSize", "SizeRatio", "CCEmbSize", "CCEncoderSize", "EmbComp",
        "EncoderComp",
    ];
    let mut cells: Vec<Vec<String>> = vec![headers.iter().map(|s| s.to_string()).collect()];
    for (name, r) in rows {
        let enc = r.encoder;
        let opt = |f: &dyn Fn(EncoderSizes) -> String| enc.map(f).unwrap_or_else(|| "-".into());
        cells.push(vec![
            name.clone(),
            opt(&|e| format!("{:.2}MB", e.total_bytes / MIB)),
            format!("{:.2}M", r.embedding_params() as f64 / 1e6),
            format!("{:.2}MB", r.original_mib()),
            opt(&|e| format!("{:.2}%", e.embedding_share_pct)),
            format!("{:.2}MB", r.compressed_mib()),
            opt(&|e| format!("{:.2}MB", e.compressed_bytes / MIB)),
            format!("{:.2}%", r.emb_compression_pct),
            opt(&|e| format!("{:.2}%", e.compression_pct)),
        ]);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| if i == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
