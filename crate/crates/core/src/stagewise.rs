//! Stage-wise occupancy coding: each parent voxel carries its eight
//! sub-voxel occupancies in eight feature channels (`+1` occupied, `-1`
//! empty, `0` not yet coded), predicted and coded one channel per stage.

use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::entropy::{EntropyError, QuantizedProb, RangeDecoder, RangeEncoder};
use crate::geometry::{child_offset, Coord, LevelSlice};
use crate::nn::{
    bce_bits_from_logits, clamp_prob, sigmoid, Adam, AdamConfig, Checkpoint, Conv, ConvCache, Dfa, DfaCache,
    Head, HeadCache, HeadKind, NnError, ParamStore, TrainConfig, TrainLog,
};
use crate::sparse::{self, MapCache, SparseError, SparseTensor};
use crate::Scalar;

pub const STAGES: usize = 8;

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error("stage state has {0} channels, expected 8")]
    Channels(usize),
    #[error("{got} decoded bits for {expected} parents")]
    Alignment { got: usize, expected: usize },
    #[error("all eight stages are already coded")]
    Finished,
    #[error("state is incomplete at stage {0}")]
    Incomplete(usize),
}

/// Parents of one level with their partially decoded occupancy channels.
#[derive(Debug, Clone, PartialEq)]
pub struct StageState<T> {
    tensor: SparseTensor<T>,
    stage: usize,
}

impl<T: Scalar> StageState<T> {
    pub fn new(parents: Arc<[Coord]>) -> Self {
        Self { tensor: SparseTensor::filled(parents, STAGES, T::zero()), stage: 0 }
    }

    /// State before `stage` with channels `< stage` set from true occupancy.
    pub fn teacher_forced(parents: Arc<[Coord]>, occupancy: &[u8], stage: usize) -> Self {
        let mut s = Self::new(parents);
        for (i, &occ) in occupancy.iter().enumerate() {
            for k in 0..stage {
                s.tensor.features_mut()[[i, k]] = if occ >> k & 1 == 1 { T::one() } else { -T::one() };
            }
        }
        s.stage = stage;
        s
    }

    pub fn from_tensor(tensor: SparseTensor<T>, stage: usize) -> Result<Self, StageError> {
        if tensor.channels() != STAGES {
            return Err(StageError::Channels(tensor.channels()));
        }
        Ok(Self { tensor, stage })
    }

    pub fn tensor(&self) -> &SparseTensor<T> {
        &self.tensor
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn coords(&self) -> &Arc<[Coord]> {
        self.tensor.coords()
    }

    /// Writes the decoded bits of the current stage and advances.
    pub fn update(&mut self, bits: &[bool]) -> Result<(), StageError> {
        if self.stage >= STAGES {
            return Err(StageError::Finished);
        }
        if bits.len() != self.tensor.len() {
            return Err(StageError::Alignment { got: bits.len(), expected: self.tensor.len() });
        }
        let k = self.stage;
        let f = self.tensor.features_mut();
        for (i, &b) in bits.iter().enumerate() {
            f[[i, k]] = if b { T::one() } else { -T::one() };
        }
        self.stage += 1;
        Ok(())
    }
}

/// Children of a fully decoded state, Morton-sorted.
pub fn feature_to_point<T: Scalar>(state: &StageState<T>) -> Result<Vec<Coord>, StageError> {
    let f = state.tensor.features();
    if state.stage < STAGES {
        return Err(StageError::Incomplete(state.stage));
    }
    let mut out = Vec::new();
    for (i, p) in state.coords().iter().enumerate() {
        for k in 0..STAGES {
            let v = f[[i, k]];
            if v == T::zero() {
                return Err(StageError::Incomplete(k));
            }
            if v > T::zero() {
                let o = child_offset(k as u8);
                out.push([2 * p[0] + o[0], 2 * p[1] + o[1], 2 * p[2] + o[2]]);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageNetConfig {
    pub channels: usize,
    pub kernel_size: usize,
    /// Share one prediction head across the eight stages.
    pub share_head: bool,
}

impl Default for StageNetConfig {
    fn default() -> Self {
        Self { channels: 32, kernel_size: 3, share_head: false }
    }
}

impl StageNetConfig {
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("kind".into(), "stagewise".into()),
            ("channels".into(), self.channels.to_string()),
            ("kernel".into(), self.kernel_size.to_string()),
            ("share_head".into(), self.share_head.to_string()),
        ]
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        if ck.config_value("kind") != Some("stagewise") {
            return Err(NnError::Checkpoint("not a stage-wise checkpoint".into()));
        }
        let get = |k: &str| {
            ck.config_value(k).ok_or_else(|| NnError::Checkpoint(format!("missing config key {k}")))
        };
        let bad = |k: &str| NnError::Checkpoint(format!("bad value for {k}"));
        Ok(Self {
            channels: get("channels")?.parse().map_err(|_| bad("channels"))?,
            kernel_size: get("kernel")?.parse().map_err(|_| bad("kernel"))?,
            share_head: get("share_head")?.parse().map_err(|_| bad("share_head"))?,
        })
    }
}

/// Shared embedding and first DFA, per-stage second DFA and sigmoid head.
#[derive(Debug, Clone)]
pub struct StageNet<T> {
    pub store: ParamStore<T>,
    pub config: StageNetConfig,
    embed: Vec<Conv>,
    shared: Vec<Dfa>,
    stage_dfa: Vec<Dfa>,
    heads: Vec<Head>,
}

struct StageForward<T> {
    embed: ConvCache<T>,
    embed_pre: SparseTensor<T>,
    shared: DfaCache<T>,
    shared_out: SparseTensor<T>,
    stage: DfaCache<T>,
    head: HeadCache<T>,
    logits: Vec<T>,
}

impl<T: Scalar> StageNet<T> {
    pub fn new(config: StageNetConfig, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, k) = (config.channels, config.kernel_size);
        let mut store = ParamStore::new();
        Conv::create(&mut store, "stage0.embed", k, 1, STAGES, c, &mut rng)?;
        Dfa::create(&mut store, "stage0.dfa0", c, k, [1, 1, 1], &mut rng)?;
        for s in 0..STAGES {
            Dfa::create(&mut store, &format!("stage{s}.dfa1"), c, k, [1, 1, 1], &mut rng)?;
            if s == 0 || !config.share_head {
                Head::create(&mut store, &format!("stage{s}.head"), c, HeadKind::Sigmoid, &mut rng)?;
            }
        }
        for s in 1..STAGES {
            store.alias(&format!("stage{s}.embed"), "stage0.embed")?;
            store.alias_prefix(&format!("stage{s}.dfa0"), "stage0.dfa0")?;
            if config.share_head {
                store.alias_prefix(&format!("stage{s}.head"), "stage0.head")?;
            }
        }
        Self::bind(store, config)
    }

    fn bind(store: ParamStore<T>, config: StageNetConfig) -> Result<Self, NnError> {
        let mut embed = Vec::new();
        let mut shared = Vec::new();
        let mut stage_dfa = Vec::new();
        let mut heads = Vec::new();
        for s in 0..STAGES {
            embed.push(Conv::bind(&store, &format!("stage{s}.embed"))?);
            shared.push(Dfa::bind(&store, &format!("stage{s}.dfa0"))?);
            stage_dfa.push(Dfa::bind(&store, &format!("stage{s}.dfa1"))?);
            heads.push(Head::bind(&store, &format!("stage{s}.head"), HeadKind::Sigmoid)?);
        }
        Ok(Self { store, config, embed, shared, stage_dfa, heads })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        let config = StageNetConfig::from_checkpoint(ck)?;
        let mut net = Self::new(config, 0)?;
        ck.load_into(&mut net.store)?;
        Ok(net)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(self.config.to_pairs(), &self.store)
    }

    /// Same network in another scalar type.
    pub fn cast<U: Scalar>(&self) -> StageNet<U> {
        StageNet {
            store: self.store.cast(),
            config: self.config,
            embed: self.embed.clone(),
            shared: self.shared.clone(),
            stage_dfa: self.stage_dfa.clone(),
            heads: self.heads.clone(),
        }
    }

    fn forward(&self, x: &SparseTensor<T>, stage: usize, maps: &MapCache) -> Result<StageForward<T>, NnError> {
        let store = &self.store;
        let (embed_pre, embed) = self.embed[stage].forward(store, maps, x)?;
        let (shared_out, shared) = self.shared[stage].forward(store, maps, &sparse::relu(&embed_pre))?;
        let (v, stage_cache) = self.stage_dfa[stage].forward(store, maps, &sparse::relu(&shared_out))?;
        let (logits, _, head) = self.heads[stage].forward(store, maps, &v)?;
        let logits = logits.features().column(0).to_vec();
        Ok(StageForward { embed, embed_pre, shared, shared_out, stage: stage_cache, head, logits })
    }

    fn backward(
        &self,
        fwd: &StageForward<T>,
        stage: usize,
        grad_logits: &[T],
        maps: &MapCache,
        grads: &mut crate::nn::Grads<T>,
    ) -> Result<Array2<T>, NnError> {
        let store = &self.store;
        let g = Array2::from_shape_vec((grad_logits.len(), 1), grad_logits.to_vec()).expect("column");
        let g = self.heads[stage].backward(store, maps, &fwd.head, &g, None, grads)?;
        let g = self.stage_dfa[stage].backward(store, maps, &fwd.stage, &g, grads)?;
        let g = sparse::relu_backward(&fwd.shared_out, &g);
        let g = self.shared[stage].backward(store, maps, &fwd.shared, &g, grads)?;
        let g = sparse::relu_backward(&fwd.embed_pre, &g);
        self.embed[stage].backward(store, maps, &fwd.embed, &g, grads)
    }

    /// Raw logits of sub-voxel `stage` for every parent.
    pub fn stage_logits(&self, state: &StageState<T>, maps: &MapCache) -> Result<Vec<T>, StageError> {
        if state.stage >= STAGES {
            return Err(StageError::Finished);
        }
        Ok(self.forward(&state.tensor, state.stage, maps)?.logits)
    }

    /// Summed binary cross-entropy in bits of all eight stages under
    /// teacher forcing, with its gradient accumulated into `grads`.
    pub fn level_loss(
        &self,
        slice: &LevelSlice,
        maps: &MapCache,
        grads: Option<&mut crate::nn::Grads<T>>,
    ) -> Result<f64, StageError> {
        let coords = maps.coords().clone();
        let mut total = 0.0;
        let mut grads = grads;
        for stage in 0..STAGES {
            let state = StageState::teacher_forced(coords.clone(), &slice.occupancy, stage);
            let fwd = self.forward(&state.tensor, stage, maps)?;
            let truth: Vec<bool> = slice.occupancy.iter().map(|&o| o >> stage & 1 == 1).collect();
            let (loss, g) = bce_bits_from_logits(&fwd.logits, &truth);
            total += loss;
            if let Some(grads) = grads.as_deref_mut() {
                self.backward(&fwd, stage, &g, maps, grads)?;
            }
        }
        Ok(total)
    }
}

/// Occupancy probability source for the stage-wise coder.
#[derive(Debug, Clone)]
pub enum OccupancyModel {
    Uniform,
    /// Context-free per-stage probability of occupancy.
    Marginal([f32; STAGES]),
    Network(Box<StageNet<f32>>),
}

impl OccupancyModel {
    /// Probability that sub-voxel `state.stage()` of every parent is occupied.
    pub fn predict(&self, state: &StageState<f32>, maps: &MapCache) -> Result<Vec<f32>, StageError> {
        if state.channels_ok() {
            match self {
                OccupancyModel::Uniform => Ok(vec![0.5; state.tensor.len()]),
                OccupancyModel::Marginal(p) => Ok(vec![clamp_prob(p[state.stage.min(STAGES - 1)]); state.tensor.len()]),
                OccupancyModel::Network(net) => {
                    Ok(net.stage_logits(state, maps)?.into_iter().map(|z| clamp_prob(sigmoid(z))).collect())
                }
            }
        } else {
            Err(StageError::Channels(state.tensor.channels()))
        }
    }

    pub fn digest(&self) -> u64 {
        match self {
            OccupancyModel::Uniform => 0,
            OccupancyModel::Marginal(p) => {
                let ck = Checkpoint {
                    config: vec![("kind".into(), "marginal".into())],
                    records: vec![crate::nn::Record { path: "p".into(), shape: vec![STAGES as u32], data: p.to_vec() }],
                    aliases: vec![],
                };
                ck.digest()
            }
            OccupancyModel::Network(net) => net.to_checkpoint().digest(),
        }
    }
}

impl<T: Scalar> StageState<T> {
    fn channels_ok(&self) -> bool {
        self.tensor.channels() == STAGES
    }
}

/// Probabilities and coordinates seen at each stage of one level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelTrace {
    pub stage_coords: Vec<Arc<[Coord]>>,
    pub stage_probs: Vec<Vec<QuantizedProb>>,
}

/// Codes all eight occupancy bits of every parent, stage by stage.
pub fn encode_level(
    slice: &LevelSlice,
    model: &OccupancyModel,
    enc: &mut RangeEncoder,
    mut trace: Option<&mut LevelTrace>,
) -> Result<(), StageError> {
    let coords: Arc<[Coord]> = slice.parent_coords.clone().into();
    let maps = MapCache::new(coords.clone());
    let mut state = StageState::<f32>::new(coords);
    for stage in 0..STAGES {
        let probs: Vec<QuantizedProb> =
            model.predict(&state, &maps)?.into_iter().map(QuantizedProb::from_prob).collect();
        let bits: Vec<bool> = slice.occupancy.iter().map(|&o| o >> stage & 1 == 1).collect();
        for (&p, &b) in probs.iter().zip(&bits) {
            enc.encode_bit(p, b);
        }
        if let Some(t) = trace.as_deref_mut() {
            t.stage_coords.push(state.coords().clone());
            t.stage_probs.push(probs);
        }
        state.update(&bits)?;
    }
    Ok(())
}

/// Decodes one level and returns the child coordinates.
pub fn decode_level(
    parents: &[Coord],
    model: &OccupancyModel,
    dec: &mut RangeDecoder<'_>,
    mut trace: Option<&mut LevelTrace>,
) -> Result<Vec<Coord>, StageError> {
    let coords: Arc<[Coord]> = parents.to_vec().into();
    let maps = MapCache::new(coords.clone());
    let mut state = StageState::<f32>::new(coords);
    for _ in 0..STAGES {
        let probs: Vec<QuantizedProb> =
            model.predict(&state, &maps)?.into_iter().map(QuantizedProb::from_prob).collect();
        let bits = probs.iter().map(|&p| dec.decode_bit(p)).collect::<Result<Vec<_>, _>>()?;
        if let Some(t) = trace.as_deref_mut() {
            t.stage_coords.push(state.coords().clone());
            t.stage_probs.push(probs);
        }
        state.update(&bits)?;
    }
    feature_to_point(&state)
}

/// Per-stage occupancy frequencies over a set of level slices.
pub fn marginal_frequencies(slices: &[LevelSlice]) -> [f32; STAGES] {
    let mut ones = [0u64; STAGES];
    let mut total = 0u64;
    for s in slices {
        total += s.occupancy.len() as u64;
        for &o in &s.occupancy {
            for (k, c) in ones.iter_mut().enumerate() {
                *c += u64::from(o >> k & 1);
            }
        }
    }
    let mut p = [0.5f32; STAGES];
    if total > 0 {
        for k in 0..STAGES {
            p[k] = ((ones[k] as f64 + 0.5) / (total as f64 + 1.0)) as f32;
        }
    }
    p
}

/// Adam over level slices in shuffled order, one step per slice.
pub fn train_stage_net(
    net: &mut StageNet<f32>,
    slices: &[LevelSlice],
    config: &TrainConfig,
) -> Result<TrainLog, StageError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let caches: Vec<MapCache> = slices.iter().map(|s| MapCache::new(s.parent_coords.clone().into())).collect();
    let coded: f64 = slices.iter().map(|s| (s.len() * STAGES) as f64).sum::<f64>().max(1.0);
    let mut log = TrainLog::default();
    let mut initial = 0.0;
    for (s, m) in slices.iter().zip(&caches) {
        initial += net.level_loss(s, m, None)?;
    }
    log.initial_loss = initial / coded;
    let mut adam = Adam::new(&net.store, AdamConfig::default());
    let mut order: Vec<usize> = (0..slices.len()).collect();
    let lr = config.schedule(order.len());
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch = 0.0;
        for &i in &order {
            let mut grads = net.store.zero_grads();
            let loss = net.level_loss(&slices[i], &caches[i], Some(&mut grads))?;
            if !loss.is_finite() {
                return Err(NnError::NonFinite("stage-wise loss".into()).into());
            }
            epoch += loss;
            grads.scale(1.0 / (slices[i].len() * STAGES) as f32);
            adam.step(&mut net.store, &grads, lr.at(step))?;
            step += 1;
        }
        log.epoch_loss.push(epoch / coded);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_parent_level, morton_key};

    fn slice(children: Vec<Coord>, level: u8) -> LevelSlice {
        let mut c = children;
        c.sort_by_key(|&x| morton_key(x));
        c.dedup();
        build_parent_level(&c, level).unwrap()
    }

    #[test]
    fn state_updates() {
        let coords: Arc<[Coord]> = vec![[0, 0, 0], [1, 0, 0]].into();
        let mut s = StageState::<f32>::new(coords);
        s.update(&[true, true]).unwrap();
        assert_eq!(s.tensor().features().column(0).to_vec(), vec![1.0, 1.0]);
        assert!(matches!(s.update(&[true]), Err(StageError::Alignment { .. })));
        for _ in 1..8 {
            s.update(&[false, true]).unwrap();
        }
        assert!(s.tensor().features().iter().all(|&v| v != 0.0));
        assert!(matches!(s.update(&[true, true]), Err(StageError::Finished)));
    }

    #[test]
    fn feature_to_point_example() {
        let coords: Arc<[Coord]> = vec![[3, 5, 7]].into();
        let mut s = StageState::<f32>::new(coords);
        for k in 0..8 {
            s.update(&[k == 0 || k == 5]).unwrap();
        }
        assert_eq!(feature_to_point(&s).unwrap(), vec![[6, 10, 14], [7, 10, 15]]);
        let partial = StageState::<f32>::new(vec![[0, 0, 0]].into());
        assert!(matches!(feature_to_point(&partial), Err(StageError::Incomplete(0))));
        let mut empty = StageState::<f32>::new(vec![[0, 0, 0]].into());
        for _ in 0..8 {
            empty.update(&[false]).unwrap();
        }
        assert!(feature_to_point(&empty).unwrap().is_empty());
    }

    #[test]
    fn decoded_state_of_children_zero_and_seven() {
        let s = slice(vec![[0, 0, 0], [1, 1, 1]], 1);
        let mut enc = RangeEncoder::new();
        encode_level(&s, &OccupancyModel::Uniform, &mut enc, None).unwrap();
        let sec = enc.finish();
        let mut dec = RangeDecoder::new(&sec.payload).unwrap();
        let coords: Arc<[Coord]> = s.parent_coords.clone().into();
        let maps = MapCache::new(coords.clone());
        let mut state = StageState::<f32>::new(coords);
        for _ in 0..8 {
            let p = OccupancyModel::Uniform.predict(&state, &maps).unwrap();
            let b = dec.decode_bit(QuantizedProb::from_prob(p[0])).unwrap();
            state.update(&[b]).unwrap();
        }
        assert_eq!(
            state.tensor().features().row(0).to_vec(),
            vec![1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, 1.0]
        );
    }

    #[test]
    fn uniform_model_costs_eight_bits_per_parent() {
        let children: Vec<Coord> = (0..400u32).map(|i| [i % 20 * 2, i / 20 * 2, (i * 7) % 13]).collect();
        let s = slice(children, 6);
        let mut enc = RangeEncoder::new();
        encode_level(&s, &OccupancyModel::Uniform, &mut enc, None).unwrap();
        let bits = enc.finish().payload.len() as i64 * 8;
        assert!((bits - 8 * s.len() as i64).abs() <= 64, "{bits} vs {}", 8 * s.len());
    }

    #[test]
    fn network_predictions_are_probabilities_and_equivariant() {
        let net = StageNet::<f32>::new(StageNetConfig { channels: 8, kernel_size: 3, share_head: false }, 1).unwrap();
        let model = OccupancyModel::Network(Box::new(net));
        let s = slice((0..60u32).map(|i| [i % 7, (i * 3) % 11, i % 5]).collect(), 4);
        let coords: Arc<[Coord]> = s.parent_coords.clone().into();
        let mut state = StageState::teacher_forced(coords.clone(), &s.occupancy, 3);
        let maps = MapCache::new(coords.clone());
        let p = model.predict(&state, &maps).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        // reversing the parent order reverses the predictions
        let rev: Vec<Coord> = coords.iter().rev().copied().collect();
        let rev_occ: Vec<u8> = s.occupancy.iter().rev().copied().collect();
        let rev_state = StageState::teacher_forced(rev.clone().into(), &rev_occ, 3);
        let rp = model.predict(&rev_state, &MapCache::new(rev.into())).unwrap();
        let mut back = rp.clone();
        back.reverse();
        assert_eq!(back, p);
        state.update(&vec![true; s.len()]).unwrap();
        assert_eq!(state.stage(), 4);
    }
}
