use std::collections::BTreeMap;
use std::sync::Arc;

use super::{CodecConfig, CodecError, Header, Mode};
use crate::entropy::{read_raw_points, read_section, write_raw_points, CodedSection, RangeDecoder, RangeEncoder};
use crate::geometry::{
    build_parent_level, cart_to_spherical, coords_at_level, level_point_counts, spherical_to_cart, to_spherical_real,
    Coord, CoordSystem, PointCloud, QuantParams,
};
use crate::grc::{decode_column, encode_column, extract_residual_levels, reconstruct_coords, ColumnTrace, ResidualModel, RpaContext};
use crate::stagewise::{decode_level, encode_level, LevelTrace, OccupancyModel, STAGES};

/// Parents above this level are coded with a uniform model.
const FIRST_MODELLED_PARENT_LEVEL: u8 = 2;

/// Probability sources for both coded sections.
#[derive(Debug, Clone)]
pub struct CodecModels {
    pub occupancy: OccupancyModel,
    pub residual: ResidualModel,
}

impl Default for CodecModels {
    fn default() -> Self {
        Self { occupancy: OccupancyModel::Uniform, residual: ResidualModel::Uniform }
    }
}

/// Payload bits attributed to one octree level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelBits {
    pub level: u8,
    pub stage_bits: u64,
    pub residual_bits: u64,
    pub raw_bits: u64,
}

impl LevelBits {
    pub fn total(&self) -> u64 {
        self.stage_bits + self.residual_bits + self.raw_bits
    }
}

/// Per-symbol distributions seen while coding, for paired-run checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamTrace {
    pub levels: Vec<LevelTrace>,
    pub columns: Vec<ColumnTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamReport {
    pub header: Header,
    pub header_bytes: usize,
    /// Payload bytes of the stage-wise, residual and raw sections.
    pub payload_bytes: [usize; 3],
    pub levels: Vec<LevelBits>,
    pub trace: Option<StreamTrace>,
}

impl StreamReport {
    pub fn total_bytes(&self) -> usize {
        self.header_bytes + self.header.section_lengths.iter().map(|&l| l as usize).sum::<usize>()
    }

    /// Bits per input point of the stage-wise, residual and raw payloads and
    /// of the remaining header and framing bytes; these sum to the total.
    pub fn bpp_breakdown(&self) -> [f64; 4] {
        let n = self.header.num_points.max(1) as f64;
        let payload: usize = self.payload_bytes.iter().sum();
        let overhead = self.total_bytes() - payload;
        [
            8.0 * self.payload_bytes[0] as f64 / n,
            8.0 * self.payload_bytes[1] as f64 / n,
            8.0 * self.payload_bytes[2] as f64 / n,
            8.0 * overhead as f64 / n,
        ]
    }

    pub fn bpp(&self) -> f64 {
        8.0 * self.total_bytes() as f64 / self.header.num_points.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub report: StreamReport,
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub cloud: PointCloud,
    /// Dequantized Cartesian points in spherical mode.
    pub points: Option<Vec<[f64; 3]>>,
    pub report: StreamReport,
}

/// Smallest level whose occupied voxel count reaches `saturation * |pc|`,
/// or the bit depth when none does.
pub fn select_start_level(pc: &PointCloud, saturation: f64) -> u8 {
    let target = saturation * pc.len() as f64;
    level_point_counts(pc)
        .into_iter()
        .find(|&(_, c)| c as f64 >= target)
        .map_or(pc.bit_depth(), |(l, _)| l)
}

fn occupancy_model(models: &CodecModels, parent_level: u8) -> &OccupancyModel {
    if parent_level < FIRST_MODELLED_PARENT_LEVEL {
        &OccupancyModel::Uniform
    } else {
        &models.occupancy
    }
}

fn used_digests(models: &CodecModels, start: u8, depth: u8, points: u64) -> (u64, u64) {
    let stage = if points > 0 && start > FIRST_MODELLED_PARENT_LEVEL { models.occupancy.digest() } else { 0 };
    let grc = if points > 0 && start < depth { models.residual.digest() } else { 0 };
    (stage, grc)
}

struct Ledger(BTreeMap<u8, LevelBits>);

impl Ledger {
    fn new(depth: u8) -> Self {
        Self(
            (1..=depth)
                .map(|l| (l, LevelBits { level: l, stage_bits: 0, residual_bits: 0, raw_bits: 0 }))
                .collect(),
        )
    }

    /// Splits a section payload across levels from the byte position
    /// reached after each level; the last level takes the remainder.
    fn split(&mut self, ends: &[(u8, usize)], payload: usize, field: fn(&mut LevelBits) -> &mut u64) {
        let mut prev = 0;
        for (k, &(level, end)) in ends.iter().enumerate() {
            let end = if k + 1 == ends.len() { payload } else { end.min(payload) };
            *field(self.0.get_mut(&level).expect("level in range")) += 8 * (end - prev) as u64;
            prev = end;
        }
    }

    fn into_vec(self) -> Vec<LevelBits> {
        self.0.into_values().collect()
    }
}

/// Encodes a cloud; spherical clouds are coded in lossy mode.
pub fn encode(pc: &PointCloud, config: &CodecConfig, models: &CodecModels, trace: bool) -> Result<Encoded, CodecError> {
    config.validate()?;
    let depth = pc.bit_depth();
    if depth != config.bit_depth {
        return Err(CodecError::Config(format!("cloud depth {depth} differs from configured {}", config.bit_depth)));
    }
    let mode = match pc.system() {
        CoordSystem::Cartesian => Mode::CartesianLossless,
        CoordSystem::Spherical => Mode::SphericalLossy,
    };
    if mode != config.mode {
        return Err(CodecError::Config(format!("{mode:?} cloud under {:?} configuration", config.mode)));
    }
    let n = pc.len() as u64;
    let start = if pc.is_empty() {
        depth
    } else {
        config.grc_start_level.unwrap_or_else(|| select_start_level(pc, config.saturation))
    };
    let mut st = trace.then(StreamTrace::default);
    let mut ledger = Ledger::new(depth);

    // stage-wise levels 1..=start
    let mut stage = CodedSection::default();
    if !pc.is_empty() {
        let mut enc = RangeEncoder::new();
        let mut ends = Vec::new();
        let mut symbols = 0u64;
        for level in 1..=start {
            let children = coords_at_level(pc.coords(), depth, level);
            let slice = build_parent_level(&children, level)?;
            symbols += (slice.len() * STAGES) as u64;
            let mut lt = LevelTrace::default();
            encode_level(&slice, occupancy_model(models, level - 1), &mut enc, st.is_some().then_some(&mut lt))?;
            if let Some(t) = st.as_mut() {
                t.levels.push(lt);
            }
            ends.push((level, enc.bytes_written()));
        }
        stage = enc.finish();
        stage.symbols = symbols;
        ledger.split(&ends, stage.payload.len(), |l| &mut l.stage_bits);
    }

    // residual chains start+1..=depth
    let mut grc = CodedSection::default();
    let mut extras = Vec::new();
    if !pc.is_empty() && start < depth {
        let levels = extract_residual_levels(pc, start)?;
        extras = levels.extras;
        let ctx = RpaContext::new(levels.base.into());
        let mut enc = RangeEncoder::new();
        let mut ends = Vec::new();
        for (k, col) in levels.columns.iter().enumerate() {
            let t = encode_column(&ctx, &levels.columns[..k], col, &models.residual, &mut enc)?;
            if let Some(tr) = st.as_mut() {
                tr.columns.push(t);
            }
            ends.push((start + 1 + k as u8, enc.bytes_written()));
        }
        grc = enc.finish();
        grc.symbols = (ctx.len() * levels.columns.len()) as u64;
        ledger.split(&ends, grc.payload.len(), |l| &mut l.residual_bits);
    }

    let raw = write_raw_points(&extras, depth);
    ledger.split(&[(depth, raw.payload.len())], raw.payload.len(), |l| &mut l.raw_bits);

    let (stage_digest, grc_digest) = used_digests(models, start, depth, n);
    let header = Header {
        mode,
        bit_depth: depth,
        grc_start_level: start,
        num_points: n,
        raw_count: u32::try_from(extras.len()).map_err(|_| CodecError::Config("too many raw points".into()))?,
        quant: pc.quant_params().copied(),
        stage_digest,
        grc_digest,
        section_lengths: [stage.framed_len(), grc.framed_len(), raw.framed_len()].map(|l| l as u32),
    };
    let mut bytes = Vec::new();
    header.write_to(&mut bytes);
    let header_bytes = bytes.len();
    for s in [&stage, &grc, &raw] {
        s.write_to(&mut bytes);
    }
    let report = StreamReport {
        header,
        header_bytes,
        payload_bytes: [stage.payload.len(), grc.payload.len(), raw.payload.len()],
        levels: ledger.into_vec(),
        trace: st,
    };
    Ok(Encoded { bytes, report })
}

/// Encodes real-valued points: integer-valued input in lossless mode, or
/// quantized spherical coordinates in lossy mode.
pub fn encode_points(
    points: &[[f64; 3]],
    config: &CodecConfig,
    models: &CodecModels,
    trace: bool,
) -> Result<Encoded, CodecError> {
    config.validate()?;
    let pc = match config.mode {
        Mode::CartesianLossless => {
            let limit = f64::from(1u32 << config.bit_depth);
            let coords = points
                .iter()
                .map(|p| {
                    if p.iter().all(|v| v.fract() == 0.0 && *v >= 0.0 && *v < limit) {
                        Ok(p.map(|v| v as u32))
                    } else {
                        Err(CodecError::Config(format!(
                            "lossless input must be integers in [0, {limit}), got {p:?}"
                        )))
                    }
                })
                .collect::<Result<Vec<Coord>, _>>()?;
            PointCloud::new(coords, config.bit_depth)?
        }
        Mode::SphericalLossy => {
            let sph: Vec<[f64; 3]> = points.iter().map(|&p| to_spherical_real(p)).collect();
            let params = QuantParams::fit(&sph, config.bit_depth);
            cart_to_spherical(points, params, config.bit_depth)?
        }
    };
    encode(&pc, config, models, trace)
}

fn check_digest(name: &str, stored: u64, expected: u64) -> Result<(), CodecError> {
    if stored != expected {
        return Err(CodecError::Incompatible(format!(
            "{name} model digest {expected:016x} does not match stream {stored:016x}"
        )));
    }
    Ok(())
}

/// Decodes a stream produced by [`encode`] with the same models.
pub fn decode(bytes: &[u8], models: &CodecModels, trace: bool) -> Result<Decoded, CodecError> {
    let (header, mut pos) = Header::parse(bytes)?;
    let header_bytes = pos;
    let depth = header.bit_depth;
    if depth == 0 || depth > crate::geometry::MAX_BIT_DEPTH {
        return Err(CodecError::Corrupt(format!("bit depth {depth}")));
    }
    let start = header.grc_start_level;
    if start == 0 || start > depth {
        return Err(CodecError::Corrupt(format!("start level {start} at depth {depth}")));
    }
    let (sd, gd) = used_digests(models, start, depth, header.num_points);
    check_digest("occupancy", header.stage_digest, sd)?;
    check_digest("residual", header.grc_digest, gd)?;

    let mut sections = Vec::with_capacity(3);
    for (k, &len) in header.section_lengths.iter().enumerate() {
        let before = pos;
        let s = read_section(bytes, &mut pos)?;
        if pos - before != len as usize {
            return Err(CodecError::Corrupt(format!("section {k} length differs from header")));
        }
        sections.push(s);
    }
    if pos != bytes.len() {
        return Err(CodecError::Corrupt(format!("{} trailing bytes", bytes.len() - pos)));
    }
    let (stage, grc, raw) = (&sections[0], &sections[1], &sections[2]);
    let mut st = trace.then(StreamTrace::default);
    let mut ledger = Ledger::new(depth);

    let mut coords: Vec<Coord> = Vec::new();
    if header.num_points > 0 {
        let mut dec = RangeDecoder::new(&stage.payload)?;
        let mut ends = Vec::new();
        let mut current = vec![[0u32; 3]];
        for level in 1..=start {
            let mut lt = LevelTrace::default();
            current = decode_level(&current, occupancy_model(models, level - 1), &mut dec, st.is_some().then_some(&mut lt))?;
            if let Some(t) = st.as_mut() {
                t.levels.push(lt);
            }
            ends.push((level, dec.bytes_consumed() - 4));
        }
        if dec.bytes_consumed() != stage.payload.len() {
            return Err(CodecError::Corrupt("stage-wise section not fully consumed".into()));
        }
        ledger.split(&ends, stage.payload.len(), |l| &mut l.stage_bits);

        if start < depth {
            let ctx = RpaContext::new(Arc::from(current));
            let mut dec = RangeDecoder::new(&grc.payload)?;
            let mut ends = Vec::new();
            let mut columns: Vec<Vec<u8>> = Vec::new();
            for k in 0..usize::from(depth - start) {
                let (col, t) = decode_column(&ctx, &columns, &models.residual, &mut dec)?;
                if let Some(tr) = st.as_mut() {
                    tr.columns.push(t);
                }
                columns.push(col);
                ends.push((start + 1 + k as u8, dec.bytes_consumed() - 4));
            }
            if dec.bytes_consumed() != grc.payload.len() {
                return Err(CodecError::Corrupt("residual section not fully consumed".into()));
            }
            ledger.split(&ends, grc.payload.len(), |l| &mut l.residual_bits);
            coords = reconstruct_coords(ctx.coords(), &columns)?;
        } else {
            coords = current;
        }
    } else if !stage.payload.is_empty() || !grc.payload.is_empty() {
        return Err(CodecError::Corrupt("payload in an empty stream".into()));
    }

    if raw.symbols != u64::from(header.raw_count) {
        return Err(CodecError::Corrupt("raw point count differs from header".into()));
    }
    let extras = read_raw_points(raw, depth)?;
    ledger.split(&[(depth, raw.payload.len())], raw.payload.len(), |l| &mut l.raw_bits);
    coords.extend(extras);
    if coords.len() as u64 != header.num_points {
        return Err(CodecError::Corrupt(format!("{} points decoded, header says {}", coords.len(), header.num_points)));
    }
    let (cloud, points) = match header.quant {
        Some(q) => {
            let pc = PointCloud::spherical(coords, depth, q)?;
            let pts = spherical_to_cart::<f64>(&pc)?;
            (pc, Some(pts))
        }
        None => (PointCloud::new(coords, depth)?, None),
    };
    if cloud.len() as u64 != header.num_points {
        return Err(CodecError::Corrupt("decoded points are not distinct".into()));
    }
    let report = StreamReport {
        payload_bytes: [stage.payload.len(), grc.payload.len(), raw.payload.len()],
        header,
        header_bytes,
        levels: ledger.into_vec(),
        trace: st,
    };
    Ok(Decoded { cloud, points, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grc::{RpaNet, RpaNetConfig};
    use crate::stagewise::{StageNet, StageNetConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, depth: u8, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = 1u32 << depth;
        let coords = (0..n).map(|_| [rng.gen_range(0..m), rng.gen_range(0..m), rng.gen_range(0..m)]).collect();
        PointCloud::new(coords, depth).unwrap()
    }

    fn net_models() -> CodecModels {
        CodecModels {
            occupancy: OccupancyModel::Network(Box::new(
                StageNet::new(StageNetConfig { channels: 8, kernel_size: 3, share_head: false }, 1).unwrap(),
            )),
            residual: ResidualModel::Network(Box::new(
                RpaNet::new(RpaNetConfig { channels: 8, kernel_size: 3, history: 2 }, 2).unwrap(),
            )),
        }
    }

    #[test]
    fn start_level_examples() {
        let one = PointCloud::new(vec![[5, 6, 7]], 8).unwrap();
        assert_eq!(select_start_level(&one, 0.99), 1);
        let cube: Vec<Coord> = (0..64u32).map(|i| [i & 3, i >> 2 & 3, i >> 4]).collect();
        let dense = PointCloud::new(cube, 2).unwrap();
        assert_eq!(select_start_level(&dense, 0.99), 2);
    }

    #[test]
    fn uniform_round_trip_and_accounting() {
        let pc = random_cloud(500, 8, 3);
        let cfg = CodecConfig::lossless(8);
        let enc = encode(&pc, &cfg, &CodecModels::default(), false).unwrap();
        let dec = decode(&enc.bytes, &CodecModels::default(), false).unwrap();
        assert_eq!(dec.cloud, pc);
        assert_eq!(dec.report.levels, enc.report.levels);
        assert_eq!(enc.report.total_bytes(), enc.bytes.len());
        let level_bits: u64 = enc.report.levels.iter().map(|l| l.total()).sum();
        assert_eq!(level_bits, 8 * enc.report.payload_bytes.iter().sum::<usize>() as u64);
        let bpp: f64 = enc.report.bpp_breakdown().iter().sum();
        assert!((bpp - enc.report.bpp()).abs() < 1e-9);
    }

    #[test]
    fn network_round_trip_with_matching_traces() {
        let pc = random_cloud(300, 7, 4);
        let mut cfg = CodecConfig::lossless(7);
        cfg.grc_start_level = Some(5);
        let models = net_models();
        let enc = encode(&pc, &cfg, &models, true).unwrap();
        let dec = decode(&enc.bytes, &models, true).unwrap();
        assert_eq!(dec.cloud, pc);
        assert_eq!(dec.report.trace, enc.report.trace);
        assert!(enc.report.header.raw_count > 0 || enc.report.payload_bytes[2] == 0);
        assert!(matches!(decode(&enc.bytes, &CodecModels::default(), false), Err(CodecError::Incompatible(_))));
    }

    #[test]
    fn pure_stage_wise_and_empty_streams() {
        let pc = random_cloud(200, 6, 5);
        let mut cfg = CodecConfig::lossless(6);
        cfg.grc_start_level = Some(6);
        let enc = encode(&pc, &cfg, &CodecModels::default(), false).unwrap();
        assert_eq!(enc.report.payload_bytes[1], 0);
        assert_eq!(enc.report.payload_bytes[2], 0);
        assert_eq!(decode(&enc.bytes, &CodecModels::default(), false).unwrap().cloud, pc);

        let empty = PointCloud::new(vec![], 6).unwrap();
        let enc = encode(&empty, &cfg, &CodecModels::default(), false).unwrap();
        assert!(decode(&enc.bytes, &CodecModels::default(), false).unwrap().cloud.is_empty());
    }

    #[test]
    fn corrupted_streams_error_cleanly() {
        let pc = random_cloud(100, 6, 6);
        let enc = encode(&pc, &CodecConfig::lossless(6), &CodecModels::default(), false).unwrap();
        let mut bad = enc.bytes.clone();
        bad[1] = b'X';
        assert!(matches!(decode(&bad, &CodecModels::default(), false), Err(CodecError::Incompatible(_))));
        assert!(decode(&enc.bytes[..enc.bytes.len() - 3], &CodecModels::default(), false).is_err());
        let mut extra = enc.bytes.clone();
        extra.push(0);
        assert!(decode(&extra, &CodecModels::default(), false).is_err());
    }

    #[test]
    fn lossless_points_must_be_integers() {
        let cfg = CodecConfig::lossless(4);
        assert!(encode_points(&[[1.0, 2.0, 3.0]], &cfg, &CodecModels::default(), false).is_ok());
        assert!(encode_points(&[[1.5, 2.0, 3.0]], &cfg, &CodecModels::default(), false).is_err());
        assert!(encode_points(&[[16.0, 2.0, 3.0]], &cfg, &CodecModels::default(), false).is_err());
    }

    #[test]
    fn lossy_round_trip_stays_within_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<[f64; 3]> =
            (0..400).map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-1.0..1.0)]).collect();
        let cfg = CodecConfig::lossy(12);
        let enc = encode_points(&pts, &cfg, &CodecModels::default(), false).unwrap();
        let dec = decode(&enc.bytes, &CodecModels::default(), false).unwrap();
        let rec = dec.points.unwrap();
        assert!(rec.len() <= pts.len() && rec.len() > 390);
        for p in &pts {
            let best = rec
                .iter()
                .map(|q| (0..3).map(|d| (p[d] - q[d]).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!(best.sqrt() < 0.05, "{p:?} {best}");
        }
    }
}
