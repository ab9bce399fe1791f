use std::collections::BTreeMap;

use rand::Rng;

use super::NnError;
use crate::sparse::{ConvGrad, ConvSpec};
use crate::Scalar;

/// Convolution weights addressed by layer path. Several paths may alias
/// one slot; all of them then read and write the same storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    slots: Vec<ConvSpec<T>>,
    canonical: Vec<String>,
    lookup: BTreeMap<String, usize>,
    aliases: Vec<(String, String)>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self { slots: Vec::new(), canonical: Vec::new(), lookup: BTreeMap::new(), aliases: Vec::new() }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a conv layer with uniform(+-sqrt(6/(fan_in+fan_out)))
    /// weights and zero bias.
    pub fn add_conv<R: Rng>(
        &mut self,
        path: &str,
        kernel_size: usize,
        dilation: u32,
        cin: usize,
        cout: usize,
        rng: &mut R,
    ) -> Result<usize, NnError> {
        let mut spec = ConvSpec::zeros(kernel_size, dilation, cin, cout);
        spec.check()?;
        let vol = spec.volume();
        let bound = (6.0 / ((vol * cin + vol * cout) as f64)).sqrt();
        for w in &mut spec.weights {
            *w = T::lit(rng.gen_range(-bound..bound));
        }
        self.insert(path, spec)
    }

    pub fn insert(&mut self, path: &str, spec: ConvSpec<T>) -> Result<usize, NnError> {
        if self.lookup.contains_key(path) {
            return Err(NnError::Configuration(format!("duplicate layer path {path}")));
        }
        let slot = self.slots.len();
        self.slots.push(spec);
        self.canonical.push(path.to_string());
        self.lookup.insert(path.to_string(), slot);
        Ok(slot)
    }

    /// Makes `alias` refer to the storage of `target`.
    pub fn alias(&mut self, alias: &str, target: &str) -> Result<usize, NnError> {
        let slot = self.slot(target)?;
        if self.lookup.contains_key(alias) {
            return Err(NnError::Configuration(format!("duplicate layer path {alias}")));
        }
        self.lookup.insert(alias.to_string(), slot);
        self.aliases.push((alias.to_string(), self.canonical[slot].clone()));
        Ok(slot)
    }

    /// Aliases every layer under `target.` as the same name under `alias.`.
    pub fn alias_prefix(&mut self, alias: &str, target: &str) -> Result<(), NnError> {
        let prefix = format!("{target}.");
        let matching: Vec<String> = self.canonical.iter().filter(|p| p.starts_with(&prefix)).cloned().collect();
        if matching.is_empty() {
            return Err(NnError::UnknownLayer(target.to_string()));
        }
        for path in matching {
            self.alias(&format!("{alias}.{}", &path[prefix.len()..]), &path)?;
        }
        Ok(())
    }

    pub fn slot(&self, path: &str) -> Result<usize, NnError> {
        self.lookup.get(path).copied().ok_or_else(|| NnError::UnknownLayer(path.to_string()))
    }

    pub fn get(&self, path: &str) -> Result<&ConvSpec<T>, NnError> {
        Ok(&self.slots[self.slot(path)?])
    }

    pub fn get_mut(&mut self, path: &str) -> Result<&mut ConvSpec<T>, NnError> {
        let slot = self.slot(path)?;
        Ok(&mut self.slots[slot])
    }

    pub fn spec(&self, slot: usize) -> &ConvSpec<T> {
        &self.slots[slot]
    }

    pub fn spec_mut(&mut self, slot: usize) -> &mut ConvSpec<T> {
        &mut self.slots[slot]
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn canonical_path(&self, slot: usize) -> &str {
        &self.canonical[slot]
    }

    pub fn aliases(&self) -> &[(String, String)] {
        &self.aliases
    }

    pub fn param_count(&self) -> usize {
        self.slots.iter().map(|s| s.weights.len() + s.bias.len()).sum()
    }

    /// Flat view over every parameter: weights then bias, slot by slot.
    pub fn flat_get(&self, mut index: usize) -> T {
        for s in &self.slots {
            if index < s.weights.len() {
                return s.weights[index];
            }
            index -= s.weights.len();
            if index < s.bias.len() {
                return s.bias[index];
            }
            index -= s.bias.len();
        }
        panic!("flat parameter index out of range")
    }

    pub fn flat_set(&mut self, mut index: usize, value: T) {
        for s in &mut self.slots {
            if index < s.weights.len() {
                s.weights[index] = value;
                return;
            }
            index -= s.weights.len();
            if index < s.bias.len() {
                s.bias[index] = value;
                return;
            }
            index -= s.bias.len();
        }
        panic!("flat parameter index out of range")
    }

    /// Same weights in another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            slots: self
                .slots
                .iter()
                .map(|s| ConvSpec {
                    kernel_size: s.kernel_size,
                    dilation: s.dilation,
                    in_channels: s.in_channels,
                    out_channels: s.out_channels,
                    weights: s.weights.iter().map(|w| U::lit(w.to_f64_lossy())).collect(),
                    bias: s.bias.iter().map(|w| U::lit(w.to_f64_lossy())).collect(),
                })
                .collect(),
            canonical: self.canonical.clone(),
            lookup: self.lookup.clone(),
            aliases: self.aliases.clone(),
        }
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads {
            slots: self
                .slots
                .iter()
                .map(|s| ConvGrad { weights: vec![T::zero(); s.weights.len()], bias: vec![T::zero(); s.bias.len()] })
                .collect(),
        }
    }
}

/// Gradient accumulator aligned with a [`ParamStore`]'s slots. Aliased
/// layers accumulate into one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub slots: Vec<ConvGrad<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn accumulate(&mut self, slot: usize, g: &ConvGrad<T>) {
        let dst = &mut self.slots[slot];
        for (a, &b) in dst.weights.iter_mut().zip(&g.weights) {
            *a += b;
        }
        for (a, &b) in dst.bias.iter_mut().zip(&g.bias) {
            *a += b;
        }
    }

    pub fn flat_get(&self, mut index: usize) -> T {
        for s in &self.slots {
            if index < s.weights.len() {
                return s.weights[index];
            }
            index -= s.weights.len();
            if index < s.bias.len() {
                return s.bias[index];
            }
            index -= s.bias.len();
        }
        panic!("flat gradient index out of range")
    }

    pub fn scale(&mut self, factor: T) {
        for s in &mut self.slots {
            s.weights.iter_mut().chain(s.bias.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.slots.iter().all(|s| s.weights.iter().chain(&s.bias).all(|v| *v == T::zero()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alias_shares_storage() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f32>::new();
        store.add_conv("stage0.embed", 3, 1, 8, 4, &mut rng).unwrap();
        store.alias("stage1.embed", "stage0.embed").unwrap();
        store.get_mut("stage1.embed").unwrap().bias[2] = 5.0;
        assert_eq!(store.get("stage0.embed").unwrap().bias[2], 5.0);
        assert_eq!(store.slot("stage0.embed").unwrap(), store.slot("stage1.embed").unwrap());
        assert_eq!(store.aliases(), &[("stage1.embed".to_string(), "stage0.embed".to_string())]);
        assert!(store.alias("stage1.embed", "stage0.embed").is_err());
        assert!(matches!(store.get("nope"), Err(NnError::UnknownLayer(_))));
    }

    #[test]
    fn init_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f64>::new();
        store.add_conv("a", 3, 1, 4, 6, &mut rng).unwrap();
        let bound = (6.0f64 / (27.0 * 10.0)).sqrt();
        let s = store.get("a").unwrap();
        assert!(s.weights.iter().all(|w| w.abs() <= bound));
        assert!(s.bias.iter().all(|&b| b == 0.0));
        assert_eq!(store.param_count(), 27 * 24 + 6);
        store.flat_set(27 * 24 + 1, 3.0);
        assert_eq!(store.get("a").unwrap().bias[1], 3.0);
    }
}
