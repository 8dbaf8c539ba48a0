use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nvv::config::RunConfig;
use nvv::dataset::make_dataset;
use nvv::pipeline::{ablation_configs, decode_frame, read_nvv, AblationRow};
use nvv_core::model::{FieldShapes, LevelSpec};
use nvv_core::scene::{BlobScene, Rig};
use nvv_core::train::{encode_sequence, FrameParams};

fn nvv(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvv")).args(args).current_dir(cwd).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const TINY: &str = "iters_intra=20\niters_pred=5\ngof_length=2\nrays_per_batch=32\nsamples=8\n\
coef_dims=4\ncoef_channels=4\nlevels=4:2:1,4:2:2\nhidden=8\ndirection_octaves=0\ndataset=ds\n";

fn tiny_dataset(dir: &Path, frames: usize) {
    let out = nvv(
        &["synth", "--out", "ds", "--frames", &frames.to_string(), "--resolution", "8", "--views", "4", "--test-views", "1", "--gt-samples", "16"],
        dir,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    fs::write(dir.join("run.cfg"), TINY).unwrap();
}

#[test]
fn encode_decode_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_dataset(d, 3);
    assert_eq!(code(&nvv(&["encode", "--config", "run.cfg", "--out", "a.nvv"], d)), 0);
    let bytes = fs::read(d.join("a.nvv")).unwrap();
    let stream = read_nvv(&d.join("a.nvv")).unwrap();
    assert_eq!(stream.frame_kinds(), "IPI");
    assert_eq!(stream.breakdown().total(), bytes.len());

    let out = nvv(&["decode", "a.nvv", "--out-dir", "dec", "--dataset", "ds"], d);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read_dir(d.join("dec")).unwrap().count(), 3 + 3 * 4 + 1);
    let raw = fs::read(d.join("dec/t0001.f32")).unwrap();
    let f = decode_frame(&stream, 1).unwrap();
    assert_eq!(raw.len(), 4 * (f.coef.len() + f.basis.entry_count() + f.mlp.params().len()));

    assert_eq!(code(&nvv(&["render", "2", "3", "--stream", "a.nvv", "--dataset", "ds", "--out", "r.ppm"], d)), 0);
    assert!(fs::read(d.join("r.ppm")).unwrap().starts_with(b"P6"));
    assert_eq!(code(&nvv(&["render", "7", "0", "--stream", "a.nvv", "--dataset", "ds", "--out", "r.ppm"], d)), 1);

    let out = nvv(&["eval", "--stream", "a.nvv", "--dataset", "ds", "--curve", "c.csv", "--check", "--min-train", "99"], d);
    assert_eq!(code(&out), 3);
    let out = nvv(&["eval", "--stream", "a.nvv", "--dataset", "ds", "--curve", "c.csv", "--check", "--min-train", "0", "--min-test", "0"], d);
    assert_eq!(code(&out), 0);
    let curve = fs::read_to_string(d.join("c.csv")).unwrap();
    assert!(curve.starts_with("rate_bits,psnr_train,psnr_test\n"));
    assert_eq!(curve.lines().count(), 3);
    let rate: f64 = curve.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert_eq!(rate, 8.0 * bytes.len() as f64 / 3.0);
}

#[test]
fn seeded_cli_encodes_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_dataset(d, 2);
    assert_eq!(code(&nvv(&["encode", "--config", "run.cfg", "--out", "a.nvv"], d)), 0);
    assert_eq!(code(&nvv(&["encode", "--config", "run.cfg", "--out", "b.nvv"], d)), 0);
    assert_eq!(fs::read(d.join("a.nvv")).unwrap(), fs::read(d.join("b.nvv")).unwrap());
    assert_eq!(code(&nvv(&["encode", "--config", "run.cfg", "--set", "seed=3", "--out", "c.nvv"], d)), 0);
    assert_ne!(fs::read(d.join("a.nvv")).unwrap(), fs::read(d.join("c.nvv")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&nvv(&[], d)), 1);
    assert_eq!(code(&nvv(&["frobnicate"], d)), 1);
    assert_eq!(code(&nvv(&["--help"], d)), 0);
    assert_eq!(code(&nvv(&["--version"], d)), 0);
    fs::write(d.join("bad.nvv"), b"NVVC\x07garbage").unwrap();
    assert_eq!(code(&nvv(&["decode", "bad.nvv", "--out-dir", "x"], d)), 2);
    assert_eq!(code(&nvv(&["decode", "missing.nvv", "--out-dir", "x"], d)), 1);
    fs::write(d.join("bad.cfg"), "lambda_rate = many\n").unwrap();
    assert_eq!(code(&nvv(&["encode", "--config", "bad.cfg", "--out", "a.nvv"], d)), 2);
    assert_eq!(code(&nvv(&["encode", "--out", "a.nvv", "--set", "nonsense"], d)), 1);
    fs::write(d.join("a.csv"), "rate_bits,psnr_train,psnr_test\n1000,30,29\n2000,33,32\n4000,36,35\n8000,38,37\n").unwrap();
    fs::write(d.join("b.csv"), "rate_bits,psnr_train,psnr_test\n2000,30,29\n4000,33,32\n8000,36,35\n16000,38,37\n").unwrap();
    let out = nvv(&["bdrate", "a.csv", "b.csv"], d);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("+100.00%"));
    fs::write(d.join("c.csv"), "rate,psnr\n1,2\n").unwrap();
    assert_eq!(code(&nvv(&["bdrate", "a.csv", "c.csv"], d)), 2);
}

#[test]
fn single_frame_ablation_rows_share_their_model() {
    let dir = tempfile::tempdir().unwrap();
    let ds = make_dataset(&BlobScene::acceptance(1), &Rig { views: 4, ..Rig::acceptance(8) }, 1, 16, dir.path()).unwrap();
    let mut cfg = RunConfig::default();
    cfg.shapes = FieldShapes {
        coef_dims: [4; 3],
        coef_channels: 4,
        levels: vec![LevelSpec { dims: [4; 3], channels: 4, frequency: 2 }],
        hidden: vec![8],
        direction_octaves: 0,
        feature_scale: 0.25,
    };
    cfg.train.iters_intra = 10;
    cfg.train.rays_per_batch = 16;
    cfg.train.samples = 8;
    let [baseline, dynamic, joint] = ablation_configs(&cfg.train);
    assert_eq!((baseline.gof_length, baseline.lambda_rate), (1, 0.0));
    assert_eq!((dynamic.gof_length, dynamic.lambda_rate), (cfg.train.gof_length, 0.0));
    assert_eq!(joint, cfg.train);
    let trained = |t| {
        let mut p: Option<FrameParams> = None;
        encode_sequence(&ds, &cfg.shapes, &t, &mut |r| p = Some(r.trained.clone())).unwrap();
        p.unwrap()
    };
    assert_eq!(trained(baseline), trained(dynamic));

    let rows = nvv::pipeline::ablate(&ds, &cfg, None).unwrap();
    let labels: Vec<&str> = rows.iter().map(|r: &AblationRow| r.label).collect();
    assert_eq!(labels, ["baseline", "+dynamic", "+joint"]);
    for r in &rows {
        assert_eq!(r.point.rate_bits, 8.0 * r.total_bytes as f64);
    }
}
