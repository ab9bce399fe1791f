use std::path::Path;
use std::process::{Command, Output};

use s2c_core::codec::{generate_synthetic_points, SyntheticKind};
use s2c_core::eval::{read_ply, write_ply, write_ply_ascii};

fn s2c(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_s2c")).args(args).output().expect("run s2c")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn integer_cloud(n: usize, depth: u8, seed: u64) -> Vec<[f64; 3]> {
    let scale = f64::from(1u32 << depth);
    let mut pts: Vec<[f64; 3]> = generate_synthetic_points(SyntheticKind::Sphere, seed, n)
        .into_iter()
        .map(|v| v.map(|c| ((c + 1.0) / 2.0 * scale).floor()))
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts
}

#[test]
fn lossless_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ply");
    let stream = dir.path().join("out.s2c");
    let output = dir.path().join("dec.ply");
    let pts = integer_cloud(3000, 9, 1);
    write_ply_ascii(&input, &pts).unwrap();

    let msg = ok(&s2c(&["encode", "-i", p(&input), "-o", p(&stream), "--mode", "lossless", "--depth", "9"]));
    assert!(msg.contains("bpp"));
    ok(&s2c(&["decode", "-i", p(&stream), "-o", p(&output)]));

    let mut dec = read_ply(&output).unwrap();
    dec.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(dec, pts);

    let eval = ok(&s2c(&["eval", "--ref", p(&input), "--rec", p(&output), "--stream", p(&stream), "--peak", "511"]));
    assert!(eval.contains("d1_psnr 200.0000"), "{eval}");
}

#[test]
fn lossy_encode_with_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("lidar.ply");
    let cfg = dir.path().join("codec.cfg");
    let stream = dir.path().join("out.s2c");
    let output = dir.path().join("dec.ply");
    let pts = generate_synthetic_points(SyntheticKind::LidarRings, 3, 4000);
    write_ply(&input, &pts).unwrap();
    std::fs::write(&cfg, "# lossy setup\nmode = lossy\ndepth = 8\ntau = 0.9\n").unwrap();

    ok(&s2c(&["encode", "-i", p(&input), "-o", p(&stream), "--config", p(&cfg), "--depth", "11"]));
    ok(&s2c(&["decode", "-i", p(&stream), "-o", p(&output)]));
    assert!(!read_ply(&output).unwrap().is_empty());
    let eval = ok(&s2c(&["eval", "--ref", p(&input), "--rec", p(&output), "--peak", "2", "--d2"]));
    assert!(eval.contains("d2_psnr"));
}

#[test]
fn train_then_code_with_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ckpt = dir.path().join("ckpt");
    std::fs::create_dir(&data).unwrap();
    for s in 0..2 {
        write_ply(&data.join(format!("c{s}.ply")), &integer_cloud(600, 7, 10 + s)).unwrap();
    }
    let depth = ["--depth", "7"];
    let mut args = vec!["train", "--kind", "stagewise", "--data", p(&data), "--out", p(&ckpt)];
    args.extend(["--epochs", "1", "--channels", "4", "--kernel", "3"]);
    args.extend(depth);
    let log = ok(&s2c(&args));
    assert!(log.contains("epoch 1 loss"));
    let mut args = vec!["train", "--kind", "grc", "--data", p(&data), "--out", p(&ckpt)];
    args.extend(["--epochs", "0", "--channels", "4", "--kernel", "3", "--config"]);
    let cfg = dir.path().join("grc.cfg");
    std::fs::write(&cfg, "grc_start_level = 4\n").unwrap();
    args.push(p(&cfg));
    args.extend(depth);
    ok(&s2c(&args));
    assert!(ckpt.join("stagewise.s2cw").exists() && ckpt.join("grc.s2cw").exists());

    let input = dir.path().join("in.ply");
    let stream = dir.path().join("out.s2c");
    let output = dir.path().join("dec.ply");
    let pts = integer_cloud(800, 7, 99);
    write_ply(&input, &pts).unwrap();
    let mut args = vec!["encode", "-i", p(&input), "-o", p(&stream), "--ckpt", p(&ckpt)];
    args.extend(["--start-level", "5"]);
    args.extend(depth);
    ok(&s2c(&args));
    ok(&s2c(&["decode", "-i", p(&stream), "-o", p(&output), "--ckpt", p(&ckpt)]));
    let mut dec = read_ply(&output).unwrap();
    dec.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(dec, pts);

    // without the checkpoints the digests do not match
    let out = s2c(&["decode", "-i", p(&stream), "-o", p(&output)]);
    assert!(!out.status.success());

    let csv = dir.path().join("stats.csv");
    let args = ["stats", "-i", p(&input), "--stream", p(&stream), "--ckpt", p(&ckpt), "--csv", p(&csv)];
    ok(&s2c(&args));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("level,count_cart,count_spher,bits_level"));
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn errors_are_one_line_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ply");
    let out = s2c(&["encode", "-i", p(&missing), "-o", p(&dir.path().join("x.s2c"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error:"));

    let garbage = dir.path().join("garbage.s2c");
    std::fs::write(&garbage, b"not a stream").unwrap();
    let out = s2c(&["decode", "-i", p(&garbage), "-o", p(&dir.path().join("y.ply"))]);
    assert!(!out.status.success());

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    let input = dir.path().join("in.ply");
    write_ply(&input, &integer_cloud(100, 6, 0)).unwrap();
    let out = s2c(&["encode", "-i", p(&input), "-o", p(&garbage), "--config", p(&cfg)]);
    assert!(!out.status.success());
}
