//! PLY input/output, geometry quality metrics and per-level statistics.

mod kdtree;
mod metrics;
mod ply;
mod stats;

pub use kdtree::KdTree;
pub use metrics::{estimate_normals, psnr_d1, psnr_d2, psnr_from_mse, DistortionReport, MetricError, Metrics, DEFAULT_PSNR_CAP, PEAK_DENSE, PEAK_LIDAR};
pub use ply::{parse_ply, read_ply, write_ply, write_ply_ascii, PlyError};
pub use stats::{cloud_from_points, level_stats, stats_csv, LevelStat};
