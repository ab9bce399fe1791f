//! Residual probability network: the voxels are split into two
//! interleaved groups; the second group is predicted with the decoded
//! first group as extra context.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GrcError, GroupSplit};
use crate::entropy::{Cdf8, RangeDecoder, RangeEncoder};
use crate::geometry::Coord;
use crate::nn::{
    softmax_ce_bits, softmax_rows, Adam, AdamConfig, Checkpoint, Conv, ConvCache, Dfa, DfaCache, Grads, Head,
    HeadCache, HeadKind, NnError, ParamStore, Record, TrainConfig, TrainLog,
};
use crate::sparse::{self, MapCache, SparseTensor};
use crate::Scalar;

const LARGE_DILATIONS: [u32; 3] = [1, 2, 3];

/// Coordinates, group split and kernel maps of one residual chain. The
/// coordinates stay fixed for every column of the chain.
#[derive(Debug)]
pub struct RpaContext {
    pub split: GroupSplit,
    full: MapCache,
    group1: MapCache,
    group2: MapCache,
}

impl RpaContext {
    pub fn new(coords: Arc<[Coord]>) -> Self {
        let split = GroupSplit::new(&coords);
        let pick = |idx: &[usize]| -> Arc<[Coord]> { idx.iter().map(|&i| coords[i]).collect() };
        let group1 = MapCache::new(pick(&split.group1));
        let group2 = MapCache::new(pick(&split.group2));
        Self { split, full: MapCache::new(coords), group1, group2 }
    }

    pub fn coords(&self) -> &Arc<[Coord]> {
        self.full.coords()
    }

    pub fn len(&self) -> usize {
        self.coords().len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RpaNetConfig {
    pub channels: usize,
    pub kernel_size: usize,
    /// Number of previous residual columns fed back as context.
    pub history: usize,
}

impl Default for RpaNetConfig {
    fn default() -> Self {
        Self { channels: 32, kernel_size: 9, history: 3 }
    }
}

impl RpaNetConfig {
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("kind".into(), "rpa".into()),
            ("channels".into(), self.channels.to_string()),
            ("kernel".into(), self.kernel_size.to_string()),
            ("history".into(), self.history.to_string()),
        ]
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        if ck.config_value("kind") != Some("rpa") {
            return Err(NnError::Checkpoint("not a residual network checkpoint".into()));
        }
        let get = |k: &str| -> Result<usize, NnError> {
            ck.config_value(k)
                .ok_or_else(|| NnError::Checkpoint(format!("missing config key {k}")))?
                .parse()
                .map_err(|_| NnError::Checkpoint(format!("bad value for {k}")))
        };
        Ok(Self { channels: get("channels")?, kernel_size: get("kernel")?, history: get("history")? })
    }
}

#[derive(Debug, Clone)]
pub struct RpaNet<T> {
    pub store: ParamStore<T>,
    pub config: RpaNetConfig,
    embed: Conv,
    dfa_a: Dfa,
    dfa_b: Dfa,
    head1: Head,
    sym: Conv,
    proj: Conv,
    dfa_c: Dfa,
    head2: Head,
}

/// Everything computed before the first group is coded.
pub struct Group1Pass<T> {
    embed: ConvCache<T>,
    embed_pre: SparseTensor<T>,
    dfa_a: DfaCache<T>,
    t0: SparseTensor<T>,
    dfa_b: DfaCache<T>,
    head1: HeadCache<T>,
    feature: SparseTensor<T>,
    pub logits: Array2<T>,
}

pub struct Group2Pass<T> {
    sym: ConvCache<T>,
    sym_pre: SparseTensor<T>,
    proj: ConvCache<T>,
    dfa_c: DfaCache<T>,
    head2: HeadCache<T>,
    pub logits: Array2<T>,
}

/// One-hot of 1-based symbols, 8 channels.
fn one_hot<T: Scalar>(symbols: &[u8]) -> Array2<T> {
    let mut f = Array2::zeros((symbols.len(), 8));
    for (i, &s) in symbols.iter().enumerate() {
        f[[i, usize::from(s) - 1]] = T::one();
    }
    f
}

/// Most recent `window` columns one-hot, newest first, zero when absent.
fn history_features<T: Scalar>(rows: usize, history: &[Vec<u8>], window: usize) -> Array2<T> {
    let mut f = Array2::zeros((rows, 8 * window.max(1)));
    for h in 0..window.min(history.len()) {
        let col = &history[history.len() - 1 - h];
        for (i, &s) in col.iter().enumerate() {
            f[[i, 8 * h + usize::from(s) - 1]] = T::one();
        }
    }
    f
}

impl<T: Scalar> RpaNet<T> {
    pub fn new(config: RpaNetConfig, seed: u64) -> Result<Self, NnError> {
        if config.history == 0 {
            return Err(NnError::Configuration("history window must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, k) = (config.channels, config.kernel_size);
        let mut store = ParamStore::new();
        let embed = Conv::create(&mut store, "embed", 1, 1, 8 * config.history, c, &mut rng)?;
        let dfa_a = Dfa::create(&mut store, "dfa_a", c, k, LARGE_DILATIONS, &mut rng)?;
        let dfa_b = Dfa::create(&mut store, "dfa_b", c, k, LARGE_DILATIONS, &mut rng)?;
        let head1 = Head::create(&mut store, "head1", c, HeadKind::Softmax8, &mut rng)?;
        let sym = Conv::create(&mut store, "sym", k, 1, 8, c, &mut rng)?;
        let proj = Conv::create(&mut store, "proj", 1, 1, 2 * c, c, &mut rng)?;
        let dfa_c = Dfa::create(&mut store, "dfa_c", c, k, LARGE_DILATIONS, &mut rng)?;
        let head2 = Head::create(&mut store, "head2", c, HeadKind::Softmax8, &mut rng)?;
        Ok(Self { store, config, embed, dfa_a, dfa_b, head1, sym, proj, dfa_c, head2 })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        let mut net = Self::new(RpaNetConfig::from_checkpoint(ck)?, 0)?;
        ck.load_into(&mut net.store)?;
        Ok(net)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(self.config.to_pairs(), &self.store)
    }

    pub fn cast<U: Scalar>(&self) -> RpaNet<U> {
        RpaNet {
            store: self.store.cast(),
            config: self.config,
            embed: self.embed,
            dfa_a: self.dfa_a.clone(),
            dfa_b: self.dfa_b.clone(),
            head1: self.head1,
            sym: self.sym,
            proj: self.proj,
            dfa_c: self.dfa_c.clone(),
            head2: self.head2,
        }
    }

    /// Group-1 logits from the previously decoded columns.
    pub fn group1(&self, ctx: &RpaContext, history: &[Vec<u8>]) -> Result<Group1Pass<T>, GrcError> {
        let s = &self.store;
        let x = SparseTensor::new(
            ctx.coords().clone(),
            history_features(ctx.len(), history, self.config.history),
        )?;
        let (embed_pre, embed) = self.embed.forward(s, &ctx.full, &x)?;
        let (t0, dfa_a) = self.dfa_a.forward(s, &ctx.full, &sparse::relu(&embed_pre))?;
        let g1 = sparse::gather_rows(&t0, &ctx.split.group1, ctx.group1.coords().clone())?;
        let (u, dfa_b) = self.dfa_b.forward(s, &ctx.group1, &g1)?;
        let (logits, feature, head1) = self.head1.forward(s, &ctx.group1, &u)?;
        Ok(Group1Pass { embed, embed_pre, dfa_a, t0, dfa_b, head1, feature, logits: logits.into_features() })
    }

    /// Group-2 logits given the decoded group-1 symbols.
    pub fn group2(&self, ctx: &RpaContext, g1: &Group1Pass<T>, symbols1: &[u8]) -> Result<Group2Pass<T>, GrcError> {
        let s = &self.store;
        let oh = SparseTensor::new(ctx.group1.coords().clone(), one_hot(symbols1))?;
        let (sym_pre, sym) = self.sym.forward(s, &ctx.group1, &oh)?;
        let cat = sparse::concat_channels(&sparse::relu(&sym_pre), &g1.feature)?;
        let (fused, proj) = self.proj.forward(s, &ctx.group1, &cat)?;
        let t0 = sparse::replace_rows(&g1.t0, &ctx.split.group1, fused.features())?;
        let (v, dfa_c) = self.dfa_c.forward(s, &ctx.full, &t0)?;
        let g2 = sparse::gather_rows(&v, &ctx.split.group2, ctx.group2.coords().clone())?;
        let (logits, _, head2) = self.head2.forward(s, &ctx.group2, &g2)?;
        Ok(Group2Pass { sym, sym_pre, proj, dfa_c, head2, logits: logits.into_features() })
    }

    /// Accumulates parameter gradients given logit gradients of both groups.
    pub fn backward(
        &self,
        ctx: &RpaContext,
        g1: &Group1Pass<T>,
        g2: &Group2Pass<T>,
        grad1: &Array2<T>,
        grad2: &Array2<T>,
        grads: &mut Grads<T>,
    ) -> Result<(), GrcError> {
        let s = &self.store;
        let g = self.head2.backward(s, &ctx.group2, &g2.head2, grad2, None, grads)?;
        let g = sparse::gather_rows_backward(&g, &ctx.split.group2, ctx.len());
        let g = self.dfa_c.backward(s, &ctx.full, &g2.dfa_c, &g, grads)?;
        let (mut g_t0, g_fused) = sparse::replace_rows_backward(&g, &ctx.split.group1);
        let g_cat = self.proj.backward(s, &ctx.group1, &g2.proj, &g_fused, grads)?;
        let (g_sym, g_feature) = sparse::concat_backward(&g_cat, self.config.channels);
        self.sym.backward(s, &ctx.group1, &g2.sym, &sparse::relu_backward(&g2.sym_pre, &g_sym), grads)?;
        let g = self.head1.backward(s, &ctx.group1, &g1.head1, grad1, Some(&g_feature), grads)?;
        let g = self.dfa_b.backward(s, &ctx.group1, &g1.dfa_b, &g, grads)?;
        g_t0 += &sparse::gather_rows_backward(&g, &ctx.split.group1, ctx.len());
        let g = self.dfa_a.backward(s, &ctx.full, &g1.dfa_a, &g_t0, grads)?;
        self.embed.backward(s, &ctx.full, &g1.embed, &sparse::relu_backward(&g1.embed_pre, &g), grads)?;
        Ok(())
    }

    /// Cross-entropy in bits of every column of a chain under teacher
    /// forcing, accumulating gradients when `grads` is given.
    pub fn chain_loss(
        &self,
        ctx: &RpaContext,
        columns: &[Vec<u8>],
        mut grads: Option<&mut Grads<T>>,
    ) -> Result<f64, GrcError> {
        let mut total = 0.0;
        for n in 0..columns.len() {
            let col = &columns[n];
            let t1: Vec<u8> = ctx.split.group1.iter().map(|&i| col[i]).collect();
            let t2: Vec<u8> = ctx.split.group2.iter().map(|&i| col[i]).collect();
            let p1 = self.group1(ctx, &columns[..n])?;
            let p2 = self.group2(ctx, &p1, &t1)?;
            let (l1, g1) = softmax_ce_bits(&p1.logits, &t1);
            let (l2, g2) = softmax_ce_bits(&p2.logits, &t2);
            total += l1 + l2;
            if let Some(gr) = grads.as_deref_mut() {
                self.backward(ctx, &p1, &p2, &g1, &g2, gr)?;
            }
        }
        Ok(total)
    }
}

/// Residual symbol distribution source.
#[derive(Debug, Clone)]
pub enum ResidualModel {
    Uniform,
    /// Context-free symbol frequencies.
    Marginal([f32; 8]),
    Network(Box<RpaNet<f32>>),
}

enum Pending {
    None,
    Network(Box<Group1Pass<f32>>),
}

fn cdfs(logits: &Array2<f32>) -> Vec<Cdf8> {
    softmax_rows(logits).axis_iter(Axis(0)).map(|row| Cdf8::from_probs(&row.to_vec())).collect()
}

impl ResidualModel {
    fn group1(&self, ctx: &RpaContext, history: &[Vec<u8>]) -> Result<(Vec<Cdf8>, Pending), GrcError> {
        let n = ctx.split.group1.len();
        Ok(match self {
            ResidualModel::Uniform => (vec![Cdf8::uniform(); n], Pending::None),
            ResidualModel::Marginal(p) => (vec![Cdf8::from_probs(p); n], Pending::None),
            ResidualModel::Network(net) => {
                let pass = net.group1(ctx, history)?;
                (cdfs(&pass.logits), Pending::Network(Box::new(pass)))
            }
        })
    }

    fn group2(&self, ctx: &RpaContext, pending: &Pending, symbols1: &[u8]) -> Result<Vec<Cdf8>, GrcError> {
        let n = ctx.split.group2.len();
        Ok(match (self, pending) {
            (ResidualModel::Network(net), Pending::Network(p1)) => cdfs(&net.group2(ctx, p1, symbols1)?.logits),
            (ResidualModel::Marginal(p), _) => vec![Cdf8::from_probs(p); n],
            _ => vec![Cdf8::uniform(); n],
        })
    }

    pub fn digest(&self) -> u64 {
        match self {
            ResidualModel::Uniform => 0,
            ResidualModel::Marginal(p) => Checkpoint {
                config: vec![("kind".into(), "residual_marginal".into())],
                records: vec![Record { path: "p".into(), shape: vec![8], data: p.to_vec() }],
                aliases: vec![],
            }
            .digest(),
            ResidualModel::Network(net) => net.to_checkpoint().digest(),
        }
    }
}

/// Distributions used for each group of one column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnTrace {
    pub group1: Vec<[u32; 9]>,
    pub group2: Vec<[u32; 9]>,
}

fn trace_of(c1: &[Cdf8], c2: &[Cdf8]) -> ColumnTrace {
    ColumnTrace { group1: c1.iter().map(|c| *c.table()).collect(), group2: c2.iter().map(|c| *c.table()).collect() }
}

/// Codes column `history.len()` given the earlier columns, group 1 first.
pub fn encode_column(
    ctx: &RpaContext,
    history: &[Vec<u8>],
    col: &[u8],
    model: &ResidualModel,
    enc: &mut RangeEncoder,
) -> Result<ColumnTrace, GrcError> {
    if col.len() != ctx.len() {
        return Err(GrcError::Alignment { column: history.len(), got: col.len(), expected: ctx.len() });
    }
    if let Some(&bad) = col.iter().find(|r| !(1..=8).contains(*r)) {
        return Err(GrcError::Symbol(bad));
    }
    let (c1, pending) = model.group1(ctx, history)?;
    let s1: Vec<u8> = ctx.split.group1.iter().map(|&i| col[i]).collect();
    for (cdf, &s) in c1.iter().zip(&s1) {
        enc.encode_symbol8(cdf, s)?;
    }
    let c2 = model.group2(ctx, &pending, &s1)?;
    for (cdf, &i) in c2.iter().zip(&ctx.split.group2) {
        enc.encode_symbol8(cdf, col[i])?;
    }
    Ok(trace_of(&c1, &c2))
}

/// Inverse of [`encode_column`].
pub fn decode_column(
    ctx: &RpaContext,
    history: &[Vec<u8>],
    model: &ResidualModel,
    dec: &mut RangeDecoder<'_>,
) -> Result<(Vec<u8>, ColumnTrace), GrcError> {
    let (c1, pending) = model.group1(ctx, history)?;
    let s1 = c1.iter().map(|c| dec.decode_symbol8(c)).collect::<Result<Vec<_>, _>>()?;
    let c2 = model.group2(ctx, &pending, &s1)?;
    let mut col = vec![0u8; ctx.len()];
    for (&i, &s) in ctx.split.group1.iter().zip(&s1) {
        col[i] = s;
    }
    for (cdf, &i) in c2.iter().zip(&ctx.split.group2) {
        col[i] = dec.decode_symbol8(cdf)?;
    }
    Ok((col, trace_of(&c1, &c2)))
}

/// Codes every residual column in order.
pub fn encode_residuals(
    ctx: &RpaContext,
    columns: &[Vec<u8>],
    model: &ResidualModel,
    enc: &mut RangeEncoder,
    mut trace: Option<&mut Vec<ColumnTrace>>,
) -> Result<(), GrcError> {
    for (n, col) in columns.iter().enumerate() {
        let t = encode_column(ctx, &columns[..n], col, model, enc)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(t);
        }
    }
    Ok(())
}

/// Decodes `count` residual columns.
pub fn decode_residuals(
    ctx: &RpaContext,
    count: usize,
    model: &ResidualModel,
    dec: &mut RangeDecoder<'_>,
    mut trace: Option<&mut Vec<ColumnTrace>>,
) -> Result<Vec<Vec<u8>>, GrcError> {
    let mut columns: Vec<Vec<u8>> = Vec::with_capacity(count);
    for _ in 0..count {
        let (col, t) = decode_column(ctx, &columns, model, dec)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(t);
        }
        columns.push(col);
    }
    Ok(columns)
}

/// Symbol frequencies over residual columns, add-half smoothed.
pub fn marginal_residual_frequencies<'a>(columns: impl IntoIterator<Item = &'a Vec<u8>>) -> [f32; 8] {
    let mut counts = [0.5f64; 8];
    for col in columns {
        for &s in col {
            counts[usize::from(s) - 1] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    counts.map(|c| (c / total) as f32)
}

/// One training chain.
#[derive(Debug)]
pub struct RpaSample {
    pub ctx: RpaContext,
    pub columns: Vec<Vec<u8>>,
}

impl RpaSample {
    fn symbols(&self) -> usize {
        self.ctx.len() * self.columns.len()
    }
}

/// Adam over chains in shuffled order, one step per chain.
pub fn train_rpa(net: &mut RpaNet<f32>, samples: &[RpaSample], config: &TrainConfig) -> Result<TrainLog, GrcError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let coded = samples.iter().map(|s| s.symbols() as f64).sum::<f64>().max(1.0);
    let mut log = TrainLog::default();
    let mut initial = 0.0;
    for s in samples {
        initial += net.chain_loss(&s.ctx, &s.columns, None)?;
    }
    log.initial_loss = initial / coded;
    let mut adam = Adam::new(&net.store, AdamConfig::default());
    let mut order: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].symbols() > 0).collect();
    let lr = config.schedule(order.len());
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch = 0.0;
        for &i in &order {
            let s = &samples[i];
            let mut grads = net.store.zero_grads();
            let loss = net.chain_loss(&s.ctx, &s.columns, Some(&mut grads))?;
            if !loss.is_finite() {
                return Err(NnError::NonFinite("residual loss".into()).into());
            }
            epoch += loss;
            grads.scale(1.0 / s.symbols() as f32);
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
    use rand::Rng;

    fn random_chain(n: usize, m: usize, seed: u64) -> (RpaContext, Vec<Vec<u8>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coords: Vec<Coord> = (0..n).map(|_| [rng.gen_range(0..16), rng.gen_range(0..16), rng.gen_range(0..16)]).collect();
        coords.sort_by_key(|&c| crate::geometry::morton_key(c));
        coords.dedup();
        let cols = (0..m).map(|_| (0..coords.len()).map(|_| rng.gen_range(1..=8)).collect()).collect();
        (RpaContext::new(coords.into()), cols)
    }

    fn small_net() -> RpaNet<f32> {
        RpaNet::new(RpaNetConfig { channels: 8, kernel_size: 3, history: 2 }, 7).unwrap()
    }

    #[test]
    fn uniform_costs_three_bits_per_symbol() {
        let (ctx, cols) = random_chain(600, 3, 1);
        let mut enc = RangeEncoder::new();
        encode_residuals(&ctx, &cols, &ResidualModel::Uniform, &mut enc, None).unwrap();
        let bits = enc.finish().payload.len() as f64 * 8.0;
        let expected = 3.0 * (ctx.len() * 3) as f64;
        assert!((bits - expected).abs() <= 64.0, "{bits} vs {expected}");
    }

    #[test]
    fn network_round_trip_and_trace_match() {
        let (ctx, cols) = random_chain(150, 3, 2);
        let model = ResidualModel::Network(Box::new(small_net()));
        let mut enc = RangeEncoder::new();
        let mut etrace = Vec::new();
        encode_residuals(&ctx, &cols, &model, &mut enc, Some(&mut etrace)).unwrap();
        let sec = enc.finish();
        let mut dec = RangeDecoder::new(&sec.payload).unwrap();
        let mut dtrace = Vec::new();
        let out = decode_residuals(&ctx, 3, &model, &mut dec, Some(&mut dtrace)).unwrap();
        assert_eq!(out, cols);
        assert_eq!(etrace, dtrace);
        assert_eq!(dec.bytes_consumed(), sec.payload.len());
    }

    #[test]
    fn group_two_does_not_depend_on_its_own_symbols() {
        let (ctx, cols) = random_chain(120, 1, 3);
        let model = ResidualModel::Network(Box::new(small_net()));
        let mut changed = cols.clone();
        for &i in &ctx.split.group2 {
            changed[0][i] = changed[0][i] % 8 + 1;
        }
        let mut t1 = Vec::new();
        let mut t2 = Vec::new();
        encode_residuals(&ctx, &cols, &model, &mut RangeEncoder::new(), Some(&mut t1)).unwrap();
        encode_residuals(&ctx, &changed, &model, &mut RangeEncoder::new(), Some(&mut t2)).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn bad_symbols_are_rejected() {
        let (ctx, mut cols) = random_chain(10, 1, 4);
        cols[0][0] = 9;
        let err = encode_residuals(&ctx, &cols, &ResidualModel::Uniform, &mut RangeEncoder::new(), None);
        assert!(matches!(err, Err(GrcError::Symbol(9))));
    }

    #[test]
    fn initial_loss_is_near_three_bits() {
        let (ctx, cols) = random_chain(200, 2, 5);
        let loss = small_net().chain_loss(&ctx, &cols, None).unwrap() / (ctx.len() * 2) as f64;
        assert!((loss - 3.0).abs() < 0.5, "{loss}");
    }

    #[test]
    fn history_window_is_newest_first() {
        let f: Array2<f32> = history_features(1, &[vec![1], vec![8]], 3);
        assert_eq!(f[[0, 7]], 1.0);
        assert_eq!(f[[0, 8]], 1.0);
        assert_eq!(f.sum(), 2.0);
    }
}
