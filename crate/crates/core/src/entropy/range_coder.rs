use super::{CodedSection, EntropyError};
use crate::Scalar;

pub const PROB_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;

const TOP: u32 = 1 << 24;
const BOT: u32 = 1 << 16;

/// Probability of a `1` bit in units of `2^-16`, always in `1..=65535`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct QuantizedProb(u16);

impl QuantizedProb {
    pub fn new(p16: u32) -> Self {
        Self(p16.clamp(1, PROB_TOTAL - 1) as u16)
    }

    pub fn from_prob<T: Scalar>(p: T) -> Self {
        let scaled = (p.to_f64_lossy() * f64::from(PROB_TOTAL)).round();
        if scaled.is_nan() {
            return Self(1 << 15);
        }
        Self::new(scaled.clamp(0.0, f64::from(PROB_TOTAL)) as u32)
    }

    pub fn get(self) -> u32 {
        u32::from(self.0)
    }

    /// Ideal cost in bits of coding `bit` with this probability.
    pub fn cost(self, bit: bool) -> f64 {
        let p = f64::from(self.get()) / f64::from(PROB_TOTAL);
        -(if bit { p } else { 1.0 - p }).log2()
    }
}

/// Cumulative frequencies of symbols `1..=8`: `cdf[0] = 0`, `cdf[8] = 65536`,
/// every bin at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cdf8 {
    cdf: [u32; 9],
}

impl Cdf8 {
    pub fn new(cdf: [u32; 9]) -> Result<Self, EntropyError> {
        if cdf[0] != 0 || cdf[8] != PROB_TOTAL || cdf.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EntropyError::Distribution(format!("{cdf:?}")));
        }
        Ok(Self { cdf })
    }

    pub fn uniform() -> Self {
        let mut cdf = [0u32; 9];
        for (k, c) in cdf.iter_mut().enumerate() {
            *c = k as u32 * (PROB_TOTAL / 8);
        }
        Self { cdf }
    }

    /// Quantizes a probability vector: each bin gets `1 + floor(p * 65528)`
    /// (after normalizing) and the remainder goes to the first most probable bin.
    pub fn from_probs<T: Scalar>(probs: &[T]) -> Self {
        assert_eq!(probs.len(), 8);
        let spread = f64::from(PROB_TOTAL - 8);
        let clean = |p: T| {
            let p = p.to_f64_lossy();
            if p.is_finite() { p.max(0.0) } else { 0.0 }
        };
        let sum: f64 = probs.iter().map(|&p| clean(p)).sum();
        let mut freq = [1u32; 8];
        let mut best = 0;
        for k in 0..8 {
            let p = if sum > 0.0 { (clean(probs[k]) / sum).min(1.0) } else { 0.125 };
            freq[k] += (p * spread).floor() as u32;
            if probs[k] > probs[best] {
                best = k;
            }
        }
        let total: u32 = freq.iter().sum();
        freq[best] += PROB_TOTAL - total;
        let mut cdf = [0u32; 9];
        for k in 0..8 {
            cdf[k + 1] = cdf[k] + freq[k];
        }
        Self { cdf }
    }

    pub fn freq(&self, symbol: u8) -> u32 {
        let s = usize::from(symbol);
        self.cdf[s] - self.cdf[s - 1]
    }

    pub fn cost(&self, symbol: u8) -> f64 {
        -(f64::from(self.freq(symbol)) / f64::from(PROB_TOTAL)).log2()
    }

    pub fn table(&self) -> &[u32; 9] {
        &self.cdf
    }
}

/// Carry-less 32-bit range encoder.
#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u32,
    range: u32,
    out: Vec<u8>,
    symbols: u64,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self { low: 0, range: u32::MAX, out: Vec::new(), symbols: 0 }
    }

    fn encode(&mut self, cum: u32, freq: u32) {
        let r = self.range >> PROB_BITS;
        self.low = self.low.wrapping_add(cum * r);
        self.range = freq * r;
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            self.out.push((self.low >> 24) as u8);
            self.low <<= 8;
            self.range <<= 8;
        }
        self.symbols += 1;
    }

    pub fn encode_bit(&mut self, p: QuantizedProb, bit: bool) {
        let p1 = p.get();
        if bit {
            self.encode(0, p1);
        } else {
            self.encode(p1, PROB_TOTAL - p1);
        }
    }

    pub fn encode_symbol8(&mut self, cdf: &Cdf8, symbol: u8) -> Result<(), EntropyError> {
        if !(1..=8).contains(&symbol) {
            return Err(EntropyError::Symbol(symbol.into()));
        }
        let s = usize::from(symbol);
        self.encode(cdf.cdf[s - 1], cdf.cdf[s] - cdf.cdf[s - 1]);
        Ok(())
    }

    /// Bytes emitted so far, excluding the final flush.
    pub fn bytes_written(&self) -> usize {
        self.out.len()
    }

    pub fn finish(mut self) -> CodedSection {
        for _ in 0..4 {
            self.out.push((self.low >> 24) as u8);
            self.low <<= 8;
        }
        CodedSection { payload: self.out, symbols: self.symbols }
    }
}

/// Inverse of [`RangeEncoder`]; never reads past the payload.
#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    low: u32,
    range: u32,
    code: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self, EntropyError> {
        let mut d = Self { data, pos: 0, low: 0, range: u32::MAX, code: 0 };
        for _ in 0..4 {
            d.code = d.code << 8 | u32::from(d.next_byte()?);
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8, EntropyError> {
        let b = *self.data.get(self.pos).ok_or(EntropyError::StreamExhausted(self.pos))?;
        self.pos += 1;
        Ok(b)
    }

    fn target(&self) -> (u32, u32) {
        let r = self.range >> PROB_BITS;
        let v = self.code.wrapping_sub(self.low) / r;
        (v.min(PROB_TOTAL - 1), r)
    }

    fn update(&mut self, cum: u32, freq: u32, r: u32) -> Result<(), EntropyError> {
        self.low = self.low.wrapping_add(cum * r);
        self.range = freq * r;
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            self.code = self.code << 8 | u32::from(self.next_byte()?);
            self.low <<= 8;
            self.range <<= 8;
        }
        Ok(())
    }

    pub fn decode_bit(&mut self, p: QuantizedProb) -> Result<bool, EntropyError> {
        let p1 = p.get();
        let (v, r) = self.target();
        if v < p1 {
            self.update(0, p1, r)?;
            Ok(true)
        } else {
            self.update(p1, PROB_TOTAL - p1, r)?;
            Ok(false)
        }
    }

    pub fn decode_symbol8(&mut self, cdf: &Cdf8) -> Result<u8, EntropyError> {
        let (v, r) = self.target();
        let s = (1..=8).find(|&s| v < cdf.cdf[s]).expect("cdf ends at total");
        self.update(cdf.cdf[s - 1], cdf.cdf[s] - cdf.cdf[s - 1], r)?;
        Ok(s as u8)
    }

    /// Payload bytes read so far, including the 4-byte look-ahead.
    pub fn bytes_consumed(&self) -> usize {
        self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fair_bits_cost_one_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits: Vec<bool> = (0..1024).map(|_| rng.gen()).collect();
        let mut enc = RangeEncoder::new();
        for &b in &bits {
            enc.encode_bit(QuantizedProb::new(1 << 15), b);
        }
        let sec = enc.finish();
        assert!(sec.payload.len() <= 128 + 8, "{}", sec.payload.len());
        let mut dec = RangeDecoder::new(&sec.payload).unwrap();
        for &b in &bits {
            assert_eq!(dec.decode_bit(QuantizedProb::new(1 << 15)).unwrap(), b);
        }
        assert_eq!(dec.bytes_consumed(), sec.payload.len());
    }

    #[test]
    fn near_certain_bits_are_cheap() {
        let mut enc = RangeEncoder::new();
        for _ in 0..10_000 {
            enc.encode_bit(QuantizedProb::new(65535), true);
        }
        let sec = enc.finish();
        assert!(sec.payload.len() <= 16, "{}", sec.payload.len());
        let mut dec = RangeDecoder::new(&sec.payload).unwrap();
        for _ in 0..10_000 {
            assert!(dec.decode_bit(QuantizedProb::new(65535)).unwrap());
        }
    }

    #[test]
    fn uniform_symbols_cost_three_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut enc = RangeEncoder::new();
        for _ in 0..n {
            enc.encode_symbol8(&Cdf8::uniform(), rng.gen_range(1..=8)).unwrap();
        }
        let bits = enc.finish().payload.len() as f64 * 8.0 / n as f64;
        assert!((bits - 3.0).abs() < 0.002, "{bits}");
    }

    #[test]
    fn heavy_symbol_cost() {
        let cdf = Cdf8::new([0, 1, 2, 3, 65532, 65533, 65534, 65535, 65536]).unwrap();
        assert_eq!(cdf.freq(4), 65529);
        let c = cdf.cost(4);
        assert!((c - 0.000154).abs() < 1e-5 && c < 0.0002, "{c}");
    }

    #[test]
    fn bad_cdf_and_symbol() {
        assert!(Cdf8::new([0, 5, 5, 10, 20, 30, 40, 50, 65536]).is_err());
        assert!(Cdf8::new([0, 5, 6, 10, 20, 30, 40, 50, 60000]).is_err());
        let mut enc = RangeEncoder::new();
        assert_eq!(enc.encode_symbol8(&Cdf8::uniform(), 9), Err(EntropyError::Symbol(9)));
    }

    #[test]
    fn exhausted_stream() {
        assert!(matches!(RangeDecoder::new(&[1, 2]), Err(EntropyError::StreamExhausted(2))));
        let mut enc = RangeEncoder::new();
        for _ in 0..64 {
            enc.encode_symbol8(&Cdf8::uniform(), 5).unwrap();
        }
        let sec = enc.finish();
        let mut dec = RangeDecoder::new(&sec.payload[..sec.payload.len() - 6]).unwrap();
        let res: Result<Vec<u8>, _> = (0..64).map(|_| dec.decode_symbol8(&Cdf8::uniform())).collect();
        assert!(matches!(res, Err(EntropyError::StreamExhausted(_))));
    }

    #[test]
    fn cdf_from_probs_is_valid() {
        let p = [0.0f32, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let c = Cdf8::from_probs(&p);
        assert!(Cdf8::new(*c.table()).is_ok());
        assert_eq!(c.freq(2), 65529);
        let q = Cdf8::from_probs(&[0.125f64; 8]);
        assert_eq!(q, Cdf8::uniform());
    }

    proptest! {
        #[test]
        fn mixed_roundtrip(trace in prop::collection::vec((any::<bool>(), 1u32..65536, any::<bool>(), 1u8..=8, prop::array::uniform8(0.0f64..1.0)), 0..400)) {
            let mut enc = RangeEncoder::new();
            for (binary, p, bit, sym, probs) in &trace {
                if *binary {
                    enc.encode_bit(QuantizedProb::new(*p), *bit);
                } else {
                    enc.encode_symbol8(&Cdf8::from_probs(probs), *sym).unwrap();
                }
            }
            let sec = enc.finish();
            prop_assert_eq!(sec.symbols, trace.len() as u64);
            let mut dec = RangeDecoder::new(&sec.payload).unwrap();
            for (binary, p, bit, sym, probs) in &trace {
                if *binary {
                    prop_assert_eq!(dec.decode_bit(QuantizedProb::new(*p)).unwrap(), *bit);
                } else {
                    prop_assert_eq!(dec.decode_symbol8(&Cdf8::from_probs(probs)).unwrap(), *sym);
                }
            }
            prop_assert_eq!(dec.bytes_consumed(), sec.payload.len());
        }
    }
}
