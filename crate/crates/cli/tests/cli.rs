use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nervpp::config::CodecConfig;
use nervpp::metrics::{self, write_rd_csv, RdRow};
use nervpp::model::count_params;
use nervpp::video::{read_frames, synthetic_clip, write_frames, FrameFormat, RawGeometry};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nervpp"));
    c.env_remove("NRVPP_SEED");
    c
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn nervpp");
    if !out.status.success() {
        panic!(
            "nervpp failed ({:?})\nstdout:\n{}\nstderr:\n{}",
            out.status.code(),
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Value after `key: ` on the first matching stdout line, unit stripped.
fn field(text: &str, key: &str) -> f64 {
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` in:\n{text}"));
    line.split_whitespace().next().unwrap().trim_end_matches('%').parse().unwrap()
}

struct Clip {
    _dir: TempDir,
    dir: PathBuf,
    raw: PathBuf,
    frames: usize,
    size: usize,
}

fn clip(frames: usize, size: usize) -> Clip {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("clip.rgb");
    write_frames(&synthetic_clip(frames, size, size), &raw, FrameFormat::RawRgb24).unwrap();
    Clip {
        dir: dir.path().to_path_buf(),
        _dir: dir,
        raw,
        frames,
        size,
    }
}

impl Clip {
    fn geometry(&self, cmd: &mut Command) {
        cmd.arg("--frames")
            .arg(self.frames.to_string())
            .arg("--height")
            .arg(self.size.to_string())
            .arg("--width")
            .arg(self.size.to_string());
    }

    fn encode(&self, config: &Path, out: &str, extra: &[&str]) -> (PathBuf, String) {
        let path = self.dir.join(out);
        let mut cmd = bin();
        cmd.arg("encode").arg("--input").arg(&self.raw);
        self.geometry(&mut cmd);
        cmd.arg("--config").arg(config).arg("--output").arg(&path).args(extra);
        let o = run(&mut cmd);
        (path, stdout(&o))
    }

    fn decode(&self, stream: &Path, out: &str) -> PathBuf {
        let path = self.dir.join(out);
        run(bin().arg("decode").arg("--input").arg(stream).arg("--output").arg(&path));
        path
    }

    fn read(&self, path: &Path) -> nervpp::video::VideoFrames {
        let g = RawGeometry {
            frames: self.frames,
            height: self.size,
            width: self.size,
        };
        read_frames(path, FrameFormat::RawRgb24, Some(g)).unwrap()
    }
}

#[test]
fn encode_is_deterministic_and_decode_reproduces_reported_psnr() {
    let c = clip(3, 16);
    let cfg = data("tiny16.toml");
    let (a, out) = c.encode(&cfg, "a.nrv", &["--seed", "7"]);
    let (b, _) = c.encode(&cfg, "b.nrv", &["--seed", "7"]);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(field(&out, "bytes") as usize, bytes.len());
    assert_eq!(field(&out, "bpp"), format!("{:.6}", 8.0 * bytes.len() as f64 / (3.0 * 256.0)).parse().unwrap());

    let d1 = c.decode(&a, "d1.rgb");
    let d2 = c.decode(&a, "d2.rgb");
    let raw = std::fs::read(&d1).unwrap();
    assert_eq!(raw.len(), 3 * 3 * 16 * 16);
    assert_eq!(raw, std::fs::read(&d2).unwrap());

    let reference = c.read(&c.raw);
    let decoded = c.read(&d1);
    let p = metrics::psnr(&reference.to_tensor(), &decoded.to_tensor()).unwrap();
    assert!((p - field(&out, "psnr")).abs() <= 1e-6, "{p} vs {out}");
}

#[test]
fn seed_changes_the_stream_and_env_var_is_the_fallback() {
    let c = clip(2, 16);
    let cfg = data("tiny16.toml");
    let (flag, _) = c.encode(&cfg, "flag.nrv", &["--seed", "7"]);
    let (other, _) = c.encode(&cfg, "other.nrv", &["--seed", "8"]);

    let env_out = c.dir.join("env.nrv");
    let mut cmd = bin();
    cmd.env("NRVPP_SEED", "7").arg("encode").arg("--input").arg(&c.raw);
    c.geometry(&mut cmd);
    cmd.arg("--config").arg(&cfg).arg("--output").arg(&env_out);
    run(&mut cmd);

    let flag = std::fs::read(flag).unwrap();
    assert_eq!(flag, std::fs::read(env_out).unwrap());
    assert_ne!(flag, std::fs::read(other).unwrap());
}

#[test]
fn zero_prune_ratio_skips_finetune() {
    let c = clip(2, 16);
    let log = c.dir.join("log.csv");
    let (_, out) = c.encode(
        &data("tiny16.toml"),
        "s.nrv",
        &["--prune-ratio", "0", "--log", log.to_str().unwrap()],
    );
    assert!(!out.contains("finetuned psnr"), "{out}");
    let text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().next(), Some("epoch,lr,loss,psnr"));
    assert_eq!(text.lines().count(), 1 + 4);

    let log2 = c.dir.join("log2.csv");
    let (_, out) = c.encode(&data("tiny16.toml"), "p.nrv", &["--epochs", "10", "--log", log2.to_str().unwrap()]);
    assert!(out.contains("finetuned psnr"), "{out}");
    // ten training epochs, then one fine-tune epoch numbered 11
    let text = std::fs::read_to_string(&log2).unwrap();
    assert_eq!(text.lines().count(), 1 + 10 + 1);
    assert!(text.lines().last().unwrap().starts_with("11,"));
}

#[test]
fn info_matches_config_and_hand_count() {
    let c = clip(2, 16);
    let cfg = data("tiny16.toml");
    let (stream, _) = c.encode(&cfg, "i.nrv", &[]);
    let out = stdout(&run(bin().arg("info").arg("--input").arg(&stream)));
    let arch = CodecConfig::load(&cfg).unwrap().arch().unwrap();
    assert_eq!(field(&out, "params") as usize, count_params(&arch));
    assert_eq!(field(&out, "frames"), 2.0);
    assert_eq!(field(&out, "bytes") as u64, std::fs::metadata(&stream).unwrap().len());
    assert!(out.contains("block 1: stride 2 out_channels 4 dw_kernel 3 expansion 2"), "{out}");
}

#[test]
fn eval_of_a_clip_against_itself() {
    let c = clip(2, 16);
    let mut cmd = bin();
    cmd.arg("eval").arg("--input").arg(&c.raw).arg("--distorted").arg(&c.raw);
    c.geometry(&mut cmd);
    let out = stdout(&run(&mut cmd));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines, ["frame,psnr,ssim,msssim", "0,inf,1,1", "1,inf,1,1", "all,inf,1,1"]);
}

#[test]
fn bdrate_of_identical_curves_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    let rows: Vec<RdRow> = [(0.05, 28.0, 0.90), (0.1, 31.0, 0.94), (0.2, 33.5, 0.96), (0.4, 35.0, 0.975)]
        .iter()
        .enumerate()
        .map(|(i, &(bpp, psnr, msssim))| RdRow {
            label: format!("p{i}"),
            bpp,
            psnr,
            msssim,
        })
        .collect();
    write_rd_csv(&path, &rows).unwrap();
    let out = stdout(&run(bin().arg("bdrate").arg("--anchor").arg(&path).arg("--test").arg(&path)));
    for key in ["bd-rate (psnr)", "bd-psnr (psnr)", "bd-rate (msssim)", "bd-psnr (msssim)"] {
        assert_eq!(field(&out, key), 0.0, "{out}");
    }
}

#[test]
fn rd_sweep_writes_labelled_rows() {
    let c = clip(2, 16);
    let csv = c.dir.join("rd.csv");
    let mut cmd = bin();
    cmd.arg("rd-sweep").arg("--input").arg(&c.raw);
    c.geometry(&mut cmd);
    cmd.args(["--sizes", "xsmall", "--epochs", "2", "--star", "--output"]).arg(&csv);
    run(&mut cmd);
    let rows = metrics::read_rd_csv(&csv).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].label, "xsmall*");
    assert!(rows[0].bpp > 0.0 && rows[0].psnr.is_finite());
}

#[test]
fn exit_codes() {
    let code = |cmd: &mut Command| cmd.output().unwrap().status.code();
    assert_eq!(code(&mut bin()), Some(1));
    assert_eq!(code(bin().arg("--help")), Some(0));
    assert_eq!(code(bin().arg("--version")), Some(0));
    assert_eq!(code(bin().args(["encode", "--bogus"])), Some(1));
    assert_eq!(code(bin().args(["info", "--input", "/nonexistent/x.nrv"])), Some(2));

    let c = clip(2, 16);
    let garbage = c.dir.join("garbage.nrv");
    std::fs::write(&garbage, b"NRVP\x07junk").unwrap();
    assert_eq!(code(bin().arg("decode").arg("--input").arg(&garbage).arg("--output").arg(c.dir.join("o"))), Some(2));

    // wrong geometry for the file size
    let mut cmd = bin();
    cmd.arg("encode").arg("--input").arg(&c.raw);
    cmd.args(["--frames", "5", "--height", "16", "--width", "16", "--output"]).arg(c.dir.join("x.nrv"));
    assert_eq!(code(&mut cmd), Some(2));

    let mut cmd = bin();
    cmd.arg("encode").arg("--input").arg(&c.raw);
    c.geometry(&mut cmd);
    cmd.arg("--config").arg(data("tiny16.toml")).args(["--prune-ratio", "1.5", "--output"]).arg(c.dir.join("y.nrv"));
    assert_eq!(code(&mut cmd), Some(2));

    // an absurd learning rate overflows the weights
    let cfg = std::fs::read_to_string(data("tiny16.toml")).unwrap().replace("lr = 2e-3", "lr = 1e300");
    let hot = c.dir.join("hot.toml");
    std::fs::write(&hot, cfg).unwrap();
    let mut cmd = bin();
    cmd.arg("encode").arg("--input").arg(&c.raw);
    c.geometry(&mut cmd);
    cmd.arg("--config").arg(&hot).arg("--output").arg(c.dir.join("z.nrv"));
    let o = cmd.output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!c.dir.join("z.nrv").exists());
}

/// Sub-0.5 bpp at 30 dB or better on the 64-frame 64x64 synthetic clip.
#[test]
fn low_rate_target_on_synthetic_clip() {
    let c = clip(64, 64);
    let (stream, out) = c.encode(&data("low_rate64.toml"), "lr.nrv", &["--seed", "1"]);
    let bpp = field(&out, "bpp");
    let psnr = field(&out, "psnr");
    assert!(bpp <= 0.5, "bpp {bpp}");
    assert!(psnr >= 30.0, "psnr {psnr}");

    let decoded = c.read(&c.decode(&stream, "lr.rgb"));
    let p = metrics::psnr(&c.read(&c.raw).to_tensor(), &decoded.to_tensor()).unwrap();
    assert!((p - psnr).abs() <= 1e-6);
}
