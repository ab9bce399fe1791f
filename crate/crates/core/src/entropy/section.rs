use super::EntropyError;

/// `u32` payload length plus `u64` symbol count.
pub const SECTION_FRAMING_BYTES: usize = 12;

/// One independently decodable payload.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CodedSection {
    pub payload: Vec<u8>,
    pub symbols: u64,
}

impl CodedSection {
    /// Framed size in bytes.
    pub fn framed_len(&self) -> usize {
        SECTION_FRAMING_BYTES + self.payload.len()
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.symbols.to_le_bytes());
        out.extend_from_slice(&self.payload);
    }
}

/// Reads one framed section starting at `*pos`, advancing it.
pub fn read_section(bytes: &[u8], pos: &mut usize) -> Result<CodedSection, EntropyError> {
    let rest = &bytes[(*pos).min(bytes.len())..];
    if rest.len() < SECTION_FRAMING_BYTES {
        return Err(EntropyError::Truncated { needed: SECTION_FRAMING_BYTES, available: rest.len() });
    }
    let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    let symbols = u64::from_le_bytes(rest[4..12].try_into().unwrap());
    let available = rest.len() - SECTION_FRAMING_BYTES;
    if available < len {
        return Err(EntropyError::Truncated { needed: len, available });
    }
    *pos += SECTION_FRAMING_BYTES + len;
    Ok(CodedSection { payload: rest[SECTION_FRAMING_BYTES..SECTION_FRAMING_BYTES + len].to_vec(), symbols })
}
