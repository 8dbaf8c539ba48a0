//! End-to-end acceptance run on the blob scene at desk scale. Prints one
//! line per criterion and exits non-zero if any fails. Artifacts (curves,
//! tables, logs) land in `target/tmp/acceptance`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nvv::config::RunConfig;
use nvv::curves::{format_table, write_curve, write_table};
use nvv::dataset::{make_dataset, Dataset};
use nvv::pipeline::{self, ablation_rows, AblationRow, ABLATION_HEADER};
use nvv_core::codec::{decode_sequence, range_decode, range_encode, record_table, write_stream, Stream};
use nvv_core::eval::{AllocationReport, RdCurve, SequenceReport};
use nvv_core::grid::BasisPyramid;
use nvv_core::model::{FieldSet, FieldShapes, LevelSpec};
use nvv_core::rate::{rounded_bits, LaplaceModel};
use nvv_core::render::{composite, render_image, Camera};
use nvv_core::rng::{seeded, uniform, unit, Rng};
use nvv_core::scene::{BlobScene, Rig};
use nvv_core::train::{
    effective_basis, encode_sequence, gradient_errors, init_intra, Objective, RayTarget, Stage, TrainConfig,
};

const FRAMES: usize = 40;
const RESOLUTION: usize = 48;
const GT_SAMPLES: usize = 256;
const LAMBDAS: [f64; 4] = [1e-4, 5e-4, 2e-3, 5e-3];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

// ---------------------------------------------------------------- gradients

fn gradient_shapes() -> FieldShapes {
    FieldShapes {
        coef_dims: [8; 3],
        coef_channels: 6,
        levels: vec![LevelSpec { dims: [8; 3], channels: 3, frequency: 1 }, LevelSpec { dims: [8; 3], channels: 3, frequency: 2 }],
        hidden: vec![16],
        direction_octaves: 1,
        feature_scale: 0.25,
    }
}

fn gradient_rays(n: usize, r: &mut Rng) -> Vec<RayTarget> {
    let mut out = Vec::new();
    while out.len() < n {
        let eye = [uniform(r, -2.0, 3.0), uniform(r, 1.5, 3.0), uniform(r, -2.0, 3.0)];
        let target = [uniform(r, 0.3, 0.7), uniform(r, 0.3, 0.7), uniform(r, 0.3, 0.7)];
        let cam = Camera::look_at(eye, target, [0.0, 1.0, 0.0], 0.5, 3, 3).unwrap();
        if let Some(ray) = cam.ray(4) {
            out.push(RayTarget { ray, rgb: [unit(r), unit(r), unit(r)] });
        }
    }
    out
}

fn random_frame(s: &FieldShapes, r: &mut Rng, basis_scale: f64) -> nvv_core::train::FrameParams {
    let cfg = TrainConfig { basis_init: basis_scale, ..TrainConfig::default() };
    let mut p = init_intra(s, &cfg, r).unwrap();
    p.coef.values_mut().iter_mut().for_each(|v| *v = uniform(r, -3.0, 3.0));
    for m in &mut p.models {
        *m = LaplaceModel::new(uniform(r, -1.0, 1.0), uniform(r, 0.3, 3.0));
    }
    p
}

fn criterion_gradients() -> Outcome {
    let s = gradient_shapes();
    let obj = Objective {
        rate_weight: 0.01,
        reg_weight: 0.05,
        prior_scale: 0.5,
        samples: 16,
        background: [1.0, 0.9, 0.8],
        feature_noise: true,
        stratified: true,
        stop_transmittance: 0.0,
    };
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        let mut r = seeded(1000 + seed);
        let p = random_frame(&s, &mut r, 2.0);
        let rays = gradient_rays(6, &mut r);
        let intra = gradient_errors(&p, Stage::Intra, &s.zero_basis().unwrap(), &rays, &obj, seed, 1e-6).unwrap();
        let prev: BasisPyramid = effective_basis(&p, Stage::Intra, &s.zero_basis().unwrap()).unwrap();
        let mut q = random_frame(&s, &mut r, 0.7);
        for g in &mut q.grids {
            // residual entries away from the kink of |x|
            g.values_mut().iter_mut().filter(|v| v.abs() < 1e-3).for_each(|v| *v = 0.01);
        }
        let pred = gradient_errors(&q, Stage::Predicted { prev: &prev }, &prev, &rays, &obj, seed + 7, 1e-6).unwrap();
        worst = worst.max(intra.worst()).max(pred.worst());
        lines.push(format!("intra {:.1e} predicted {:.1e}", intra.worst(), pred.worst()));
    }
    outcome(worst < 1e-4, format!("worst relative error {:.2e} < 1e-4 ({})", worst, lines.join("; ")))
}

// ------------------------------------------------------------- compositing

fn criterion_compositing() -> Outcome {
    let mut r = seeded(2);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let n = 1 + (unit(&mut r) * 256.0) as usize;
        let sig: Vec<f64> = (0..n).map(|_| (uniform(&mut r, -6.0, 6.0)).exp()).collect();
        let del: Vec<f64> = (0..n).map(|_| uniform(&mut r, 0.0, 0.05)).collect();
        let col: Vec<[f64; 3]> = (0..n).map(|_| [unit(&mut r), unit(&mut r), unit(&mut r)]).collect();
        let c = composite(&col, &sig, &del, [1.0; 3]).unwrap();
        worst = worst.max((c.weights.iter().sum::<f64>() + c.residual - 1.0).abs());
    }
    outcome(worst <= 1e-12, format!("max |sum w + T - 1| = {:.2e} over 10^4 rays", worst))
}

// ------------------------------------------------------------ entropy coder

fn laplace_draw(r: &mut Rng, mu: f64, b: f64) -> f64 {
    let u = unit(r) - 0.5;
    mu - b * u.signum() * (1.0 - 2.0 * u.abs()).max(1e-300).ln()
}

fn criterion_coder() -> Outcome {
    let mut r = seeded(3);
    let (mut failures, mut symbols, mut worst_excess) = (0, 0usize, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let n = (unit(&mut r) * (1e5f64).ln()).exp().round().clamp(1.0, 1e5) as usize;
        let mu = uniform(&mut r, -50.0, 50.0);
        let b = uniform(&mut r, (0.01f64).ln(), (500.0f64).ln()).exp();
        let values: Vec<i32> = (0..n).map(|_| laplace_draw(&mut r, mu, b).round() as i32).collect();
        let (vmin, vmax) = (*values.iter().min().unwrap(), *values.iter().max().unwrap());
        let table = record_table(mu as f32, b as f32, vmin, vmax).unwrap();
        let payload = range_encode(&values, &table).unwrap();
        if range_decode(&payload, &table, n).unwrap() != values {
            failures += 1;
        }
        let ce = table.cross_entropy_bits(&values);
        let bits = 8.0 * payload.len() as f64;
        worst_excess = worst_excess.max(bits - (ce * 1.001 + 128.0));
        symbols += n;
    }
    outcome(
        failures == 0 && worst_excess <= 0.0,
        format!(
            "{} mismatches, {} symbols; worst payload minus (cross-entropy + 0.1% + 128) = {:.1} bits",
            failures, symbols, worst_excess
        ),
    )
}

// ---------------------------------------------------------- sequence runs

struct Encoded {
    stream: Stream,
    bytes: Vec<u8>,
    encoder_side: Vec<FieldSet>,
    /// (actual payload bits, rounded estimate) per coded tensor.
    tensor_bits: Vec<(f64, f64)>,
    /// Smoothed loss at iteration 10 and at the end, per frame.
    loss_drop: Vec<(f64, f64)>,
}

fn encode_run(ds: &Dataset, cfg: &RunConfig, keep_fields: bool) -> Encoded {
    let mut encoder_side = Vec::new();
    let mut tensor_bits = Vec::new();
    let mut loss_drop = Vec::new();
    let start = Instant::now();
    let stream = encode_sequence(ds, &cfg.shapes, &cfg.train, &mut |r| {
        if keep_fields {
            encoder_side.push(r.decoded.clone());
        }
        let p = r.trained;
        for (rec, grid) in r.record.tensors.iter().zip(std::iter::once(&p.coef).chain(&p.grids)) {
            let est = rounded_bits(grid.values(), &LaplaceModel::from_f32(rec.mu, rec.b));
            tensor_bits.push((8.0 * rec.payload.len() as f64, est));
        }
        let mut ema = r.trace[0].loss;
        let mut early = ema;
        for (i, s) in r.trace.iter().enumerate() {
            ema = 0.9 * ema + 0.1 * s.loss;
            if i == 10 {
                early = ema;
            }
        }
        loss_drop.push((early, ema));
        eprintln!("  frame {:>2} {} {:>7} bytes  [{:.0?}]", r.index, r.kind.letter(), r.record.encoded_len(), start.elapsed());
    })
    .unwrap();
    let bytes = write_stream(&stream).unwrap();
    Encoded { stream, bytes, encoder_side, tensor_bits, loss_drop }
}

fn criterion_rate_fidelity(run: &Encoded) -> Outcome {
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut worst_pair = (0.0, 0.0);
    let (mut actual, mut est) = (0.0, 0.0);
    for &(a, e) in &run.tensor_bits {
        let excess = (a - e).abs() - (0.05 * e + 256.0);
        if excess > worst {
            worst = excess;
            worst_pair = (a, e);
        }
        actual += a;
        est += e;
    }
    outcome(
        worst <= 0.0,
        format!(
            "{} tensors, total payload {:.0} bits vs estimate {:.0}; tightest tensor {:.0} vs {:.0} bits",
            run.tensor_bits.len(),
            actual,
            est,
            worst_pair.0,
            worst_pair.1
        ),
    )
}

fn criterion_closed_loop(run: &Encoded, ds: &Dataset) -> Outcome {
    let decoded = decode_sequence(&run.stream).unwrap();
    let settings = pipeline::settings_of(&run.stream);
    let mut basis_mismatch = Vec::new();
    let mut render_mismatch = Vec::new();
    let bytes_of = |b: &BasisPyramid| -> Vec<u8> {
        b.levels().iter().flat_map(|l| l.grid.values().iter().flat_map(|v| v.to_le_bytes())).collect()
    };
    for (t, (enc, dec)) in run.encoder_side.iter().zip(&decoded).enumerate() {
        if bytes_of(&enc.basis) != bytes_of(&dec.fields.basis) || enc != &dec.fields {
            basis_mismatch.push(t);
        }
        for &v in &ds.manifest.test_views {
            let a = render_image(enc, &ds.cameras[v], settings);
            let b = render_image(&dec.fields, &ds.cameras[v], settings);
            let same = a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits());
            if !same || a.to_rgb8() != b.to_rgb8() {
                render_mismatch.push((t, v));
            }
        }
    }
    outcome(
        decoded.len() == FRAMES && basis_mismatch.is_empty() && render_mismatch.is_empty(),
        format!(
            "{} frames ({}); basis mismatches {:?}; render mismatches {:?}",
            decoded.len(),
            run.stream.frame_kinds(),
            basis_mismatch,
            render_mismatch
        ),
    )
}

fn criterion_monotone(reports: &[(f64, SequenceReport)]) -> Outcome {
    let mut ok = true;
    for w in reports.windows(2) {
        let (a, b) = (&w[0].1.point, &w[1].1.point);
        ok &= b.rate_bits < a.rate_bits;
        ok &= b.psnr_train <= a.psnr_train + 0.1;
    }
    let pts: Vec<String> = reports
        .iter()
        .map(|(l, r)| format!("{:.0e}: {:.0} b/f {:.2} dB", l, r.point.rate_bits, r.point.psnr_train))
        .collect();
    outcome(ok, pts.join(" | "))
}

fn criterion_ablation(rows: &[AblationRow; 3]) -> Outcome {
    let [b, d, j] = rows;
    let (rb, rd, rj) = (b.point.rate_bits, d.point.rate_bits, j.point.rate_bits);
    let strictly = rb > rd && rd > rj;
    let dyn_gain = rb / rd;
    let joint_gain = rd / rj;
    let psnr_gap = (d.point.psnr_train - j.point.psnr_train).abs();
    outcome(
        strictly && dyn_gain >= 2.0 && joint_gain >= 1.3 && psnr_gap <= 1.0,
        format!(
            "bits/frame {:.0} -> {:.0} -> {:.0}; dynamic {:.2}x (>= 2), joint {:.2}x (>= 1.3) at train PSNR {:.2} vs {:.2} dB (gap {:.2} <= 1)",
            rb, rd, rj, dyn_gain, joint_gain, d.point.psnr_train, j.point.psnr_train, psnr_gap
        ),
    )
}

fn criterion_fit(report: &SequenceReport, iters: usize) -> Outcome {
    let f = &report.frames[0];
    outcome(
        f.psnr_train >= 30.0 && f.psnr_test >= 27.0,
        format!("I-frame after {} iterations: train {:.2} dB (>= 30), test {:.2} dB (>= 27)", iters, f.psnr_train, f.psnr_test),
    )
}

fn criterion_determinism(ds: &Dataset, cfg: &RunConfig) -> Outcome {
    let short = ds.truncated(3);
    let cfg = RunConfig { train: TrainConfig { gof_length: 2, ..cfg.train.clone() }, ..cfg.clone() };
    let a = encode_run(&short, &cfg, false);
    let b = encode_run(&short, &cfg, false);
    outcome(
        a.bytes == b.bytes,
        format!("two seeded encodes of frames 0-2 ({}): {} and {} bytes, identical: {}", a.stream.frame_kinds(), a.bytes.len(), b.bytes.len(), a.bytes == b.bytes),
    )
}

fn artifacts() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn main() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let out = artifacts();
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut notes = String::new();
    let report = |results: &mut Vec<(usize, &'static str, Outcome)>, id, name, o: Outcome| {
        eprintln!("[{:.0?}] criterion {} done: {}", started.elapsed(), id, if o.passed { "pass" } else { "FAIL" });
        results.push((id, name, o));
    };

    report(&mut results, 1, "gradient correctness", criterion_gradients());
    report(&mut results, 2, "compositing conservation", criterion_compositing());
    report(&mut results, 3, "entropy-coder round trip", criterion_coder());

    let ds_dir = out.join("dataset");
    let _ = fs::remove_dir_all(&ds_dir);
    let ds = make_dataset(&BlobScene::acceptance(FRAMES), &Rig::acceptance(RESOLUTION), 4, GT_SAMPLES, &ds_dir).unwrap();
    eprintln!("[{:.0?}] dataset ready", started.elapsed());
    let base = RunConfig { dataset: Some(ds_dir.clone()), ..RunConfig::desk() };
    fs::write(out.join("desk.cfg"), base.to_text()).unwrap();

    let mut reports = Vec::new();
    let mut main_run = None;
    for &lambda in &LAMBDAS {
        let cfg = RunConfig { train: TrainConfig { lambda_rate: lambda, ..base.train.clone() }, ..base.clone() };
        eprintln!("[{:.0?}] encoding at lambda {}", started.elapsed(), lambda);
        let run = encode_run(&ds, &cfg, lambda == LAMBDAS[0]);
        let rep = pipeline::evaluate(&run.stream, &ds).unwrap();
        fs::write(out.join(format!("lambda_{}.nvv", lambda)), &run.bytes).unwrap();
        let drops = run.loss_drop.iter().filter(|(early, end)| end >= early).count();
        let _ = writeln!(
            notes,
            "lambda {:.0e}: {} bytes, {:.0} bits/frame, train {:.2} dB, test {:.2} dB, frames without loss decrease: {}",
            lambda, rep.stream_bytes, rep.point.rate_bits, rep.point.psnr_train, rep.point.psnr_test, drops
        );
        if lambda == LAMBDAS[0] {
            fs::write(out.join("frames_lambda_1e-4.txt"), pipeline::frame_table(&rep)).unwrap();
            let alloc = AllocationReport::new(&run.stream);
            let rows: Vec<Vec<String>> =
                alloc.rows().iter().map(|(n, b, p)| vec![n.to_string(), b.to_string(), format!("{:.1}", p)]).collect();
            let _ = write!(notes, "allocation over the stream:\n{}", format_table(&["component", "bytes", "percent"], &rows));
            let intra = Stream { header: run.stream.header.clone(), frames: vec![run.stream.frames[0].clone()] };
            let rows: Vec<Vec<String>> = AllocationReport::new(&intra)
                .rows()
                .iter()
                .map(|(n, b, p)| vec![n.to_string(), b.to_string(), format!("{:.1}", p)])
                .collect();
            let _ = write!(notes, "allocation of the first I-frame:\n{}", format_table(&["component", "bytes", "percent"], &rows));
            main_run = Some(run);
        }
        reports.push((lambda, rep));
    }
    let main_run = main_run.unwrap();
    let curve = RdCurve { label: "desk".into(), points: reports.iter().map(|(_, r)| r.point).collect() };
    write_curve(&curve, &out.join("rd_curve.csv")).unwrap();

    report(&mut results, 4, "rate-estimate fidelity", criterion_rate_fidelity(&main_run));
    report(&mut results, 5, "closed loop, no drift", criterion_closed_loop(&main_run, &ds));
    report(&mut results, 6, "RD monotonicity", criterion_monotone(&reports));

    eprintln!("[{:.0?}] ablation", started.elapsed());
    let rows = pipeline::ablate(&ds, &base, Some(&main_run.stream)).unwrap();
    let table = ablation_rows(&rows);
    write_table(&ABLATION_HEADER, &table, &out.join("ablation.csv")).unwrap();
    let _ = write!(notes, "ablation:\n{}", format_table(&ABLATION_HEADER, &table));
    report(&mut results, 7, "ablation direction", criterion_ablation(&rows));
    report(&mut results, 8, "fit quality", criterion_fit(&reports[0].1, base.train.iters_intra));
    report(&mut results, 9, "determinism", criterion_determinism(&ds, &base));

    fs::write(out.join("notes.txt"), &notes).unwrap();
    println!("{}", notes);
    let mut failed = 0;
    for (id, name, o) in &results {
        println!("criterion {} {:<26} {}  {}", id, name, if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} of {} criteria passed in {:.0?}; artifacts in {}", results.len() - failed, results.len(), started.elapsed(), out.display());
    if failed > 0 {
        std::process::exit(1);
    }
}
