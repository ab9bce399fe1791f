//! `s2c`: encode, decode, train, analyze and evaluate point clouds.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use s2c_core::codec::{self, CodecConfig, CodecModels, Mode};
use s2c_core::eval::{self, Metrics};
use s2c_core::geometry::{cart_to_spherical, to_spherical_real, PointCloud, QuantParams};
use s2c_core::grc::{ResidualModel, RpaNet};
use s2c_core::nn::{read_checkpoint, write_checkpoint, TrainConfig};
use s2c_core::stagewise::{OccupancyModel, StageNet};

const STAGE_CKPT: &str = "stagewise.s2cw";
const GRC_CKPT: &str = "grc.s2cw";

#[derive(Parser)]
#[command(name = "s2c", version, about = "Point cloud geometry codec with space-to-channel context models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a PLY file.
    Encode(EncodeArgs),
    /// Decompress a stream to PLY.
    Decode(DecodeArgs),
    /// Train a context model on a directory of PLY files.
    Train(TrainArgs),
    /// Per-level occupancy counts, and coded bits when a stream is given.
    Stats(StatsArgs),
    /// Rate and distortion of a reconstruction.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Lossless,
    Lossy,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Stagewise,
    Grc,
}

#[derive(Args)]
struct CodecFlags {
    /// Line-based `key = value` settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    depth: Option<u8>,
    /// Directory holding stagewise.s2cw and/or grc.s2cw.
    #[arg(long)]
    ckpt: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    codec: CodecFlags,
    /// Residual coding start level; chosen automatically when absent.
    #[arg(long)]
    start_level: Option<u8>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    ckpt: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Directory of training PLY files.
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    kernel: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8e-4)]
    lr_start: f64,
    #[arg(long)]
    lr_end: Option<f64>,
    #[command(flatten)]
    codec: CodecFlags,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Stream of the same cloud for per-level bits.
    #[arg(long)]
    stream: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    csv: PathBuf,
    /// Grid depth when no stream is given.
    #[arg(long, default_value_t = 12)]
    depth: u8,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    rec: PathBuf,
    #[arg(long)]
    stream: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// PSNR peak, e.g. 59.70 for dense objects or 30000 for LiDAR.
    #[arg(long, default_value_t = eval::PEAK_DENSE)]
    peak: f64,
    /// Also report point-to-plane PSNR.
    #[arg(long)]
    d2: bool,
}

fn codec_config(flags: &CodecFlags) -> Result<CodecConfig> {
    let mode = flags.mode.map(|m| match m {
        ModeArg::Lossless => Mode::CartesianLossless,
        ModeArg::Lossy => Mode::SphericalLossy,
    });
    let mut cfg = match mode {
        Some(Mode::SphericalLossy) => CodecConfig::lossy(12),
        _ => CodecConfig::lossless(12),
    };
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text)?;
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(d) = flags.depth {
        cfg.bit_depth = d;
    }
    if let Some(dir) = &flags.ckpt {
        cfg.checkpoint_dir = Some(dir.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_models(dir: Option<&Path>) -> Result<CodecModels> {
    let mut models = CodecModels::default();
    let Some(dir) = dir else { return Ok(models) };
    if !dir.is_dir() {
        bail!("checkpoint directory {} does not exist", dir.display());
    }
    let stage = dir.join(STAGE_CKPT);
    if stage.exists() {
        let ck = read_checkpoint(std::io::BufReader::new(fs::File::open(&stage)?)).with_context(|| format!("loading {}", stage.display()))?;
        models.occupancy = OccupancyModel::Network(Box::new(StageNet::from_checkpoint(&ck)?));
    }
    let grc = dir.join(GRC_CKPT);
    if grc.exists() {
        let ck = read_checkpoint(std::io::BufReader::new(fs::File::open(&grc)?)).with_context(|| format!("loading {}", grc.display()))?;
        models.residual = ResidualModel::Network(Box::new(RpaNet::from_checkpoint(&ck)?));
    }
    Ok(models)
}

fn read_points(path: &Path) -> Result<Vec<[f64; 3]>> {
    eval::read_ply(path).with_context(|| format!("reading {}", path.display()))
}

fn encode(args: &EncodeArgs) -> Result<()> {
    let mut cfg = codec_config(&args.codec)?;
    if args.start_level.is_some() {
        cfg.grc_start_level = args.start_level;
    }
    cfg.validate()?;
    let models = load_models(cfg.checkpoint_dir.as_deref())?;
    let points = read_points(&args.input)?;
    let enc = codec::encode_points(&points, &cfg, &models, false)?;
    fs::write(&args.output, &enc.bytes).with_context(|| format!("writing {}", args.output.display()))?;
    let r = &enc.report;
    println!(
        "{} points, {} bytes, {:.4} bpp, start level {}, {} raw points",
        r.header.num_points,
        enc.bytes.len(),
        r.bpp(),
        r.header.grc_start_level,
        r.header.raw_count
    );
    Ok(())
}

fn decode(args: &DecodeArgs) -> Result<()> {
    let models = load_models(args.ckpt.as_deref())?;
    let bytes = fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let dec = codec::decode(&bytes, &models, false)?;
    let points = match dec.points {
        Some(p) => p,
        None => dec.cloud.coords().iter().map(|c| c.map(f64::from)).collect(),
    };
    eval::write_ply(&args.output, &points).with_context(|| format!("writing {}", args.output.display()))?;
    println!("{} points decoded", points.len());
    Ok(())
}

fn training_clouds(dir: &Path, cfg: &CodecConfig) -> Result<Vec<PointCloud>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ply")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .ply files in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let pts = read_points(p)?;
            Ok(match cfg.mode {
                Mode::CartesianLossless => eval::cloud_from_points(&pts, cfg.bit_depth)?,
                Mode::SphericalLossy => {
                    let sph: Vec<[f64; 3]> = pts.iter().map(|&q| to_spherical_real(q)).collect();
                    cart_to_spherical(&pts, QuantParams::fit(&sph, cfg.bit_depth), cfg.bit_depth)?
                }
            })
        })
        .collect()
}

fn train(args: &TrainArgs) -> Result<()> {
    let mut cfg = codec_config(&args.codec)?;
    match args.kind {
        KindArg::Stagewise => {
            if let Some(c) = args.channels {
                cfg.stage_net.channels = c;
            }
            if let Some(k) = args.kernel {
                cfg.stage_net.kernel_size = k;
            }
        }
        KindArg::Grc => {
            if let Some(c) = args.channels {
                cfg.rpa_net.channels = c;
            }
            if let Some(k) = args.kernel {
                cfg.rpa_net.kernel_size = k;
            }
        }
    }
    let default_end = match args.kind {
        KindArg::Stagewise => 2e-5,
        KindArg::Grc => 2.5e-5,
    };
    let tc = TrainConfig {
        epochs: args.epochs,
        lr_start: args.lr_start,
        lr_end: args.lr_end.unwrap_or(default_end),
        seed: args.seed,
    };
    let clouds = training_clouds(&args.data, &cfg)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let (ck, log, file) = match args.kind {
        KindArg::Stagewise => {
            let (net, log) = codec::train_stagewise(&clouds, &cfg, &tc)?;
            (net.to_checkpoint(), log, STAGE_CKPT)
        }
        KindArg::Grc => {
            let (net, log) = codec::train_grc(&clouds, &cfg, &tc)?;
            (net.to_checkpoint(), log, GRC_CKPT)
        }
    };
    let path = args.out.join(file);
    let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    write_checkpoint(std::io::BufWriter::new(file), &ck)?;
    println!("initial loss {:.4} bits", log.initial_loss);
    for (e, l) in log.epoch_loss.iter().enumerate() {
        println!("epoch {} loss {:.4} bits", e + 1, l);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn stats(args: &StatsArgs) -> Result<()> {
    let points = read_points(&args.input)?;
    let (depth, report) = match &args.stream {
        Some(path) => {
            let models = load_models(args.ckpt.as_deref())?;
            let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let dec = codec::decode(&bytes, &models, false)?;
            (dec.report.header.bit_depth, Some(dec.report))
        }
        None => (args.depth, None),
    };
    let rows = eval::level_stats(&points, depth, report.as_ref())?;
    fs::write(&args.csv, eval::stats_csv(&rows)).with_context(|| format!("writing {}", args.csv.display()))?;
    println!("wrote {} levels to {}", rows.len(), args.csv.display());
    Ok(())
}

fn evaluate(args: &EvalArgs) -> Result<()> {
    let reference = read_points(&args.reference)?;
    let rec = read_points(&args.rec)?;
    let d1 = eval::psnr_d1(&reference, &rec, args.peak)?;
    let d2 = if args.d2 { Some(eval::psnr_d2(&reference, &rec, args.peak, None)?.psnr) } else { None };
    let (bpp, section_bpp) = match &args.stream {
        Some(path) => {
            let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let bpp = 8.0 * bytes.len() as f64 / reference.len() as f64;
            let models = load_models(args.ckpt.as_deref())?;
            let sections = match codec::decode(&bytes, &models, false) {
                Ok(dec) => dec.report.bpp_breakdown().map(|b| b * dec.report.header.num_points as f64 / reference.len() as f64),
                Err(_) => [f64::NAN; 4],
            };
            (bpp, sections)
        }
        None => (f64::NAN, [f64::NAN; 4]),
    };
    let m = Metrics { bpp, d1_psnr: d1.psnr, d2_psnr: d2, section_bpp };
    println!("bpp {:.6}", m.bpp);
    println!(
        "section_bpp stagewise {:.6} residual {:.6} raw {:.6} overhead {:.6}",
        m.section_bpp[0], m.section_bpp[1], m.section_bpp[2], m.section_bpp[3]
    );
    println!("d1_psnr {:.4} dB (mse {:.6e}, max error {:.6})", m.d1_psnr, d1.mse, d1.max_error);
    if let Some(d2) = m.d2_psnr {
        println!("d2_psnr {d2:.4} dB");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Train(a) => train(a),
        Command::Stats(a) => stats(a),
        Command::Eval(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
