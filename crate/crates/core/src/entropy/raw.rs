use super::{CodedSection, EntropyError};
use crate::geometry::{morton_key, Coord};

/// Packs Morton-sorted coordinates MSB-first at `3 * bit_depth` bits per
/// point (x, then y, then z).
pub fn write_raw_points(coords: &[Coord], bit_depth: u8) -> CodedSection {
    let mut sorted = coords.to_vec();
    sorted.sort_unstable_by_key(|&c| morton_key(c));
    let bits = sorted.len() * 3 * usize::from(bit_depth);
    let mut payload = vec![0u8; bits.div_ceil(8)];
    let mut at = 0usize;
    for c in &sorted {
        for &v in c {
            for b in (0..bit_depth).rev() {
                if v >> b & 1 == 1 {
                    payload[at / 8] |= 0x80 >> (at % 8);
                }
                at += 1;
            }
        }
    }
    CodedSection { payload, symbols: sorted.len() as u64 }
}

pub fn read_raw_points(section: &CodedSection, bit_depth: u8) -> Result<Vec<Coord>, EntropyError> {
    let n = usize::try_from(section.symbols).map_err(|_| EntropyError::Symbol(u32::MAX))?;
    let needed = n
        .checked_mul(3 * usize::from(bit_depth))
        .map(|b| b.div_ceil(8))
        .ok_or(EntropyError::Truncated { needed: usize::MAX, available: section.payload.len() })?;
    if section.payload.len() != needed {
        return Err(EntropyError::Truncated { needed, available: section.payload.len() });
    }
    let mut at = 0usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut c = [0u32; 3];
        for v in &mut c {
            for _ in 0..bit_depth {
                let bit = section.payload[at / 8] >> (7 - at % 8) & 1;
                *v = *v << 1 | u32::from(bit);
                at += 1;
            }
        }
        out.push(c);
    }
    Ok(out)
}
