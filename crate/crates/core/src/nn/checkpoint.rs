use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use super::{NnError, ParamStore};
use crate::sparse::ConvSpec;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"S2CW";
const CHECKPOINT_VERSION: u8 = 1;

/// A tensor record: layer path, shape and row-major data.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub path: String,
    pub shape: Vec<u32>,
    pub data: Vec<f32>,
}

/// On-disk model: `key=value` architecture settings, tensor records and
/// the alias table of shared layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: Vec<(String, String)>,
    pub records: Vec<Record>,
    pub aliases: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn from_store<T: crate::Scalar>(config: Vec<(String, String)>, store: &ParamStore<T>) -> Self {
        let mut records = Vec::with_capacity(store.slot_count() * 2);
        for slot in 0..store.slot_count() {
            let spec = store.spec(slot);
            let path = store.canonical_path(slot);
            let k = spec.kernel_size as u32;
            records.push(Record {
                path: format!("{path}.weight"),
                shape: vec![k, k, k, spec.in_channels as u32, spec.out_channels as u32],
                data: spec.weights.iter().map(|w| w.to_f64_lossy() as f32).collect(),
            });
            records.push(Record {
                path: format!("{path}.bias"),
                shape: vec![spec.out_channels as u32],
                data: spec.bias.iter().map(|w| w.to_f64_lossy() as f32).collect(),
            });
        }
        Self { config, records, aliases: store.aliases().to_vec() }
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Copies weights into a freshly built store of the same architecture.
    pub fn load_into<T: crate::Scalar>(&self, store: &mut ParamStore<T>) -> Result<(), NnError> {
        if self.records.len() != 2 * store.slot_count() {
            return Err(NnError::Checkpoint(format!(
                "{} records for {} layers",
                self.records.len(),
                store.slot_count()
            )));
        }
        let mut expected_aliases = store.aliases().to_vec();
        let mut got_aliases = self.aliases.clone();
        expected_aliases.sort();
        got_aliases.sort();
        if expected_aliases != got_aliases {
            return Err(NnError::Checkpoint("sharing table differs from architecture".into()));
        }
        for slot in 0..store.slot_count() {
            let path = store.canonical_path(slot).to_string();
            let spec: &mut ConvSpec<T> = store.spec_mut(slot);
            let k = spec.kernel_size as u32;
            let wshape = [k, k, k, spec.in_channels as u32, spec.out_channels as u32];
            let w = self.find(&format!("{path}.weight"))?;
            let b = self.find(&format!("{path}.bias"))?;
            if w.shape != wshape || b.shape != [spec.out_channels as u32] {
                return Err(NnError::Checkpoint(format!("shape mismatch for {path}")));
            }
            spec.weights = w.data.iter().map(|&v| T::lit(f64::from(v))).collect();
            spec.bias = b.data.iter().map(|&v| T::lit(f64::from(v))).collect();
        }
        Ok(())
    }

    fn find(&self, path: &str) -> Result<&Record, NnError> {
        self.records
            .iter()
            .find(|r| r.path == path)
            .ok_or_else(|| NnError::Checkpoint(format!("missing record {path}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_checkpoint(&mut out, self).expect("writing to memory");
        out
    }

    /// First 8 bytes of the SHA-256 of the serialized checkpoint; never 0.
    pub fn digest(&self) -> u64 {
        let hash = Sha256::digest(self.to_bytes());
        let mut b = [0u8; 8];
        b.copy_from_slice(&hash[..8]);
        u64::from_le_bytes(b).max(1)
    }
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<(), NnError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&[CHECKPOINT_VERSION])?;
    let config: String = ckpt.config.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    put_str(&mut w, &config)?;
    w.write_all(&(ckpt.records.len() as u32).to_le_bytes())?;
    for r in &ckpt.records {
        put_str(&mut w, &r.path)?;
        w.write_all(&[r.shape.len() as u8])?;
        for d in &r.shape {
            w.write_all(&d.to_le_bytes())?;
        }
        for v in &r.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.write_all(&(ckpt.aliases.len() as u32).to_le_bytes())?;
    for (alias, target) in &ckpt.aliases {
        put_str(&mut w, alias)?;
        put_str(&mut w, target)?;
    }
    w.flush()?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_str<R: Read>(r: &mut R) -> Result<String, NnError> {
    let n = get_u32(r)? as usize;
    if n > 1 << 24 {
        return Err(NnError::Checkpoint("string length out of range".into()));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| NnError::Checkpoint("invalid utf-8".into()))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, NnError> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic[..4] != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    if magic[4] != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {}", magic[4])));
    }
    let config = get_str(&mut r)?
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| NnError::Checkpoint(format!("bad config line {l:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let count = get_u32(&mut r)?;
    let mut records = Vec::new();
    for _ in 0..count {
        let path = get_str(&mut r)?;
        let mut nd = [0u8; 1];
        r.read_exact(&mut nd)?;
        let shape = (0..nd[0]).map(|_| get_u32(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let len = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
        let len = match len {
            Some(l) if l <= 1 << 28 => l,
            _ => return Err(NnError::Checkpoint(format!("record {path} too large"))),
        };
        let mut raw = vec![0u8; len * 4];
        r.read_exact(&mut raw)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        records.push(Record { path, shape, data });
    }
    let n_alias = get_u32(&mut r)?;
    let mut aliases = Vec::new();
    for _ in 0..n_alias {
        aliases.push((get_str(&mut r)?, get_str(&mut r)?));
    }
    Ok(Checkpoint { config, records, aliases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store() -> ParamStore<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = ParamStore::new();
        s.add_conv("embed", 3, 1, 8, 4, &mut rng).unwrap();
        s.add_conv("head.c1", 1, 1, 4, 1, &mut rng).unwrap();
        s.alias("stage1.embed", "embed").unwrap();
        s
    }

    #[test]
    fn roundtrip_and_load() {
        let s = store();
        let ck = Checkpoint::from_store(vec![("kind".into(), "stagewise".into())], &s);
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..4], b"S2CW");
        assert_eq!(bytes[4], 1);
        let back = read_checkpoint(&bytes[..]).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.config_value("kind"), Some("stagewise"));
        let mut fresh = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        fresh.add_conv("embed", 3, 1, 8, 4, &mut rng).unwrap();
        fresh.add_conv("head.c1", 1, 1, 4, 1, &mut rng).unwrap();
        fresh.alias("stage1.embed", "embed").unwrap();
        back.load_into(&mut fresh).unwrap();
        assert_eq!(fresh.get("stage1.embed").unwrap().weights[3] as f32, s.get("embed").unwrap().weights[3]);
        assert_ne!(ck.digest(), 0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_checkpoint(&b"S2CX\x01"[..]).is_err());
        let bytes = Checkpoint::from_store(vec![], &store()).to_bytes();
        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut other = ParamStore::<f32>::new();
        other.insert("embed", ConvSpec::zeros(3, 1, 8, 4)).unwrap();
        other.insert("head.c1", ConvSpec::zeros(1, 1, 4, 2)).unwrap();
        other.alias("stage1.embed", "embed").unwrap();
        assert!(read_checkpoint(&bytes[..]).unwrap().load_into(&mut other).is_err());
    }
}
