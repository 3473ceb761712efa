//! Fixed-width packing of discrete codes.
//!
//! Each code takes `ceil(log2 K)` bits. A token's `M` codes form one
//! contiguous bitstream, least-significant bits first within each byte, and
//! every token row is padded to a whole number of bytes so rows can be
//! addressed directly.

use crate::error::{Error, Result};

/// `ceil(log2 k)`; zero for `k <= 1`.
pub fn bits_per_code(k: usize) -> u32 {
    if k <= 1 {
        0
    } else {
        usize::BITS - (k - 1).leading_zeros()
    }
}

/// Bytes occupied by one token's packed codes.
pub fn row_stride(m: usize, k: usize) -> usize {
    (m * bits_per_code(k) as usize).div_ceil(8)
}

/// Packs a `V x M` row-major code matrix.
pub fn pack_codes(codes: &[u32], m: usize, k: usize) -> Result<Vec<u8>> {
    if m == 0 || codes.len() % m != 0 {
        return Err(Error::Shape(format!("{} codes do not form rows of {m}", codes.len())));
    }
    let bits = bits_per_code(k);
    let stride = row_stride(m, k);
    let v = codes.len() / m;
    let mut out = vec![0u8; v * stride];
    for (t, (row, dst)) in codes.chunks_exact(m).zip(out.chunks_exact_mut(stride.max(1))).enumerate() {
        let mut acc: u64 = 0;
        let mut filled = 0u32;
        let mut pos = 0;
        for (i, &c) in row.iter().enumerate() {
            if c as usize >= k {
                return Err(Error::CodeOutOfRange {
                    token: t,
                    codebook: i,
                    code: c,
                    k,
                });
            }
            acc |= (c as u64) << filled;
            filled += bits;
            while filled >= 8 {
                dst[pos] = acc as u8;
                pos += 1;
                acc >>= 8;
                filled -= 8;
            }
        }
        if filled > 0 {
            dst[pos] = acc as u8;
        }
    }
    if stride == 0 {
        // K = 1 carries no information; still validate every code.
        if let Some(i) = codes.iter().position(|&c| c != 0) {
            return Err(Error::CodeOutOfRange {
                token: i / m,
                codebook: i % m,
                code: codes[i],
                k,
            });
        }
    }
    Ok(out)
}

/// Inverse of [`pack_codes`].
pub fn unpack_codes(bytes: &[u8], v: usize, m: usize, k: usize) -> Result<Vec<u32>> {
    let bits = bits_per_code(k);
    let stride = row_stride(m, k);
    if bytes.len() != v * stride {
        return Err(Error::Shape(format!(
            "packed code block has {} bytes, expected {v} rows of {stride}",
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(v * m);
    if stride == 0 {
        out.resize(v * m, 0);
        return Ok(out);
    }
    let mask = (1u64 << bits) - 1;
    for (t, src) in bytes.chunks_exact(stride).enumerate() {
        let mut acc: u64 = 0;
        let mut avail = 0u32;
        let mut pos = 0;
        for i in 0..m {
            while avail < bits {
                acc |= (src[pos] as u64) << avail;
                pos += 1;
                avail += 8;
            }
            let c = (acc & mask) as u32;
            if c as usize >= k {
                return Err(Error::CodeOutOfRange {
                    token: t,
                    codebook: i,
                    code: c,
                    k,
                });
            }
            out.push(c);
            acc >>= bits;
            avail -= bits;
        }
    }
    Ok(out)
}
