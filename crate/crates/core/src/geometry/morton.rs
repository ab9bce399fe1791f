use super::{Coord, GeometryError};

const MAX_MORTON_DEPTH: u8 = 21;

#[inline]
fn spread3(v: u32) -> u64 {
    let mut x = u64::from(v) & 0x1f_ffff;
    x = (x | x << 32) & 0x1f_0000_0000_ffff;
    x = (x | x << 16) & 0x1f_0000_ff00_00ff;
    x = (x | x << 8) & 0x100f_00f0_0f00_f00f;
    x = (x | x << 4) & 0x10c3_0c30_c30c_30c3;
    x = (x | x << 2) & 0x1249_2492_4924_9249;
    x
}

#[inline]
fn compact3(code: u64) -> u32 {
    let mut x = code & 0x1249_2492_4924_9249;
    x = (x ^ (x >> 2)) & 0x10c3_0c30_c30c_30c3;
    x = (x ^ (x >> 4)) & 0x100f_00f0_0f00_f00f;
    x = (x ^ (x >> 8)) & 0x1f_0000_ff00_00ff;
    x = (x ^ (x >> 16)) & 0x1f_0000_0000_ffff;
    x = (x ^ (x >> 32)) & 0x1f_ffff;
    x as u32
}

/// Sort key for coordinates below `2^21`; equals [`morton_encode`] at any
/// depth that holds the coordinate.
#[inline]
pub fn morton_key(c: Coord) -> u64 {
    spread3(c[0]) << 2 | spread3(c[1]) << 1 | spread3(c[2])
}

fn check_depth(bit_depth: u8) -> Result<(), GeometryError> {
    if bit_depth == 0 || bit_depth > MAX_MORTON_DEPTH {
        Err(GeometryError::BitDepth(bit_depth))
    } else {
        Ok(())
    }
}

/// Interleaves the bits of `c`, most significant level first, with x in
/// the high bit of each 3-bit group.
pub fn morton_encode(c: Coord, bit_depth: u8) -> Result<u64, GeometryError> {
    check_depth(bit_depth)?;
    for &v in &c {
        if u64::from(v) >> bit_depth != 0 {
            return Err(GeometryError::OutOfRange { value: v.into(), bit_depth });
        }
    }
    Ok(morton_key(c))
}

pub fn morton_decode(code: u64, bit_depth: u8) -> Result<Coord, GeometryError> {
    check_depth(bit_depth)?;
    if 3 * u32::from(bit_depth) < 64 && code >> (3 * u32::from(bit_depth)) != 0 {
        return Err(GeometryError::OutOfRange { value: code, bit_depth });
    }
    Ok([compact3(code >> 2), compact3(code >> 1), compact3(code)])
}

/// Child index of `c` inside its parent: `x_bit << 2 | y_bit << 1 | z_bit`.
#[inline]
pub fn child_index(c: Coord) -> u8 {
    ((c[0] & 1) << 2 | (c[1] & 1) << 1 | (c[2] & 1)) as u8
}

/// Offset of child `k` within its parent, inverse of [`child_index`].
#[inline]
pub fn child_offset(k: u8) -> Coord {
    let k = u32::from(k);
    [(k >> 2) & 1, (k >> 1) & 1, k & 1]
}
