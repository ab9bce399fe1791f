use super::{CodecError, Mode};
use crate::geometry::QuantParams;

pub const HEADER_MAGIC: &[u8; 4] = b"S2CP";
pub const HEADER_VERSION: u8 = 1;

/// Fixed-layout stream header; all integers little-endian.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub mode: Mode,
    pub bit_depth: u8,
    pub grc_start_level: u8,
    pub num_points: u64,
    pub raw_count: u32,
    /// Present exactly in spherical mode: steps then offsets.
    pub quant: Option<QuantParams>,
    /// Digest of the occupancy model, 0 when no network was used.
    pub stage_digest: u64,
    /// Digest of the residual model, 0 when no network was used.
    pub grc_digest: u64,
    /// Framed byte lengths of the stage-wise, residual and raw sections.
    pub section_lengths: [u32; 3],
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CodecError> {
        if self.bytes.len() - self.pos < n {
            return Err(CodecError::Corrupt(format!("header truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Header {
    pub fn encoded_len(&self) -> usize {
        4 + 4 + 8 + 4 + if self.quant.is_some() { 48 } else { 0 } + 16 + 12
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(HEADER_MAGIC);
        out.extend_from_slice(&[HEADER_VERSION, self.mode.code(), self.bit_depth, self.grc_start_level]);
        out.extend_from_slice(&self.num_points.to_le_bytes());
        out.extend_from_slice(&self.raw_count.to_le_bytes());
        if let Some(q) = &self.quant {
            for v in q.step.iter().chain(&q.offset) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.stage_digest.to_le_bytes());
        out.extend_from_slice(&self.grc_digest.to_le_bytes());
        for l in self.section_lengths {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }

    /// Parses a header and returns it with the offset of the first section.
    pub fn parse(bytes: &[u8]) -> Result<(Self, usize), CodecError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).map_err(|_| CodecError::Incompatible("missing magic".into()))? != HEADER_MAGIC {
            return Err(CodecError::Incompatible("bad magic".into()));
        }
        let version = r.u8()?;
        if version != HEADER_VERSION {
            return Err(CodecError::Incompatible(format!("unsupported version {version}")));
        }
        let mode_code = r.u8()?;
        let mode = Mode::from_code(mode_code).ok_or_else(|| CodecError::Incompatible(format!("unknown mode {mode_code}")))?;
        let bit_depth = r.u8()?;
        let grc_start_level = r.u8()?;
        let num_points = r.u64()?;
        let raw_count = r.u32()?;
        let quant = match mode {
            Mode::SphericalLossy => {
                let mut v = [0.0; 6];
                for x in &mut v {
                    *x = r.f64()?;
                }
                let q = QuantParams { step: [v[0], v[1], v[2]], offset: [v[3], v[4], v[5]] };
                q.validate()?;
                Some(q)
            }
            Mode::CartesianLossless => None,
        };
        let stage_digest = r.u64()?;
        let grc_digest = r.u64()?;
        let section_lengths = [r.u32()?, r.u32()?, r.u32()?];
        let h = Self {
            mode,
            bit_depth,
            grc_start_level,
            num_points,
            raw_count,
            quant,
            stage_digest,
            grc_digest,
            section_lengths,
        };
        Ok((h, r.pos))
    }
}
