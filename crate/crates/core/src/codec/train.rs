use super::{select_start_level, CodecConfig, CodecError};
use crate::geometry::{build_parent_level, coords_at_level, LevelSlice, PointCloud};
use crate::grc::{extract_residual_levels, train_rpa, RpaContext, RpaNet, RpaSample};
use crate::nn::{TrainConfig, TrainLog};
use crate::stagewise::{train_stage_net, StageNet};

fn start_level(pc: &PointCloud, config: &CodecConfig) -> u8 {
    config.grc_start_level.unwrap_or_else(|| select_start_level(pc, config.saturation))
}

/// Level slices the occupancy network codes: parents at level 2 and
/// below, down to each cloud's start level.
pub fn stage_slices(clouds: &[PointCloud], config: &CodecConfig) -> Result<Vec<LevelSlice>, CodecError> {
    let mut out = Vec::new();
    for pc in clouds.iter().filter(|pc| !pc.is_empty()) {
        let start = start_level(pc, config);
        for level in 3..=start {
            let children = coords_at_level(pc.coords(), pc.bit_depth(), level);
            out.push(build_parent_level(&children, level)?);
        }
    }
    Ok(out)
}

/// Residual chains below each cloud's start level.
pub fn residual_samples(clouds: &[PointCloud], config: &CodecConfig) -> Result<Vec<RpaSample>, CodecError> {
    let mut out = Vec::new();
    for pc in clouds.iter().filter(|pc| !pc.is_empty()) {
        let start = start_level(pc, config);
        if start >= pc.bit_depth() {
            continue;
        }
        let levels = extract_residual_levels(pc, start)?;
        out.push(RpaSample { ctx: RpaContext::new(levels.base.into()), columns: levels.columns });
    }
    Ok(out)
}

/// Trains an occupancy network from `config.stage_net` on a cloud set.
pub fn train_stagewise(
    clouds: &[PointCloud],
    config: &CodecConfig,
    train: &TrainConfig,
) -> Result<(StageNet<f32>, TrainLog), CodecError> {
    let slices = stage_slices(clouds, config)?;
    let mut net = StageNet::new(config.stage_net, train.seed)?;
    let log = train_stage_net(&mut net, &slices, train)?;
    Ok((net, log))
}

/// Trains a residual network from `config.rpa_net` on a cloud set.
pub fn train_grc(
    clouds: &[PointCloud],
    config: &CodecConfig,
    train: &TrainConfig,
) -> Result<(RpaNet<f32>, TrainLog), CodecError> {
    let samples = residual_samples(clouds, config)?;
    let mut net = RpaNet::new(config.rpa_net, train.seed)?;
    let log = train_rpa(&mut net, &samples, train)?;
    Ok((net, log))
}
