use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nvv::config::{split_overrides, RunConfig};
use nvv::curves::{format_table, read_curve, write_curve, write_table};
use nvv::dataset::{make_dataset, Dataset};
use nvv::pipeline::{self, ABLATION_HEADER};
use nvv::ppm::write_ppm;
use nvv::{Error, Result};
use nvv_core::eval::{bd_rate, AllocationReport, Quality, RdCurve};
use nvv_core::scene::{BlobScene, Rig};

#[derive(Parser)]
#[command(name = "nvv", version, about = "Volumetric video codec on grid-factorized radiance fields")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Configuration file of key=value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory, overriding the configuration.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Use only the first N frames.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum QualityArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Render the blob scene into a dataset directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        frames: usize,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[arg(long, default_value_t = 20)]
        views: usize,
        #[arg(long, default_value_t = 4)]
        test_views: usize,
        #[arg(long, default_value_t = 256)]
        gt_samples: usize,
        /// Freeze the blobs at their first-frame positions.
        #[arg(long = "static")]
        frozen: bool,
    },
    /// Train on a dataset and write a .nvv stream.
    Encode {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a stream into raw per-frame fields, optionally rendering every view.
    Decode {
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Render the cameras of this dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Render one decoded frame from one dataset view to a PPM file.
    Render {
        frame: usize,
        view: usize,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode, render and report PSNR, rate and byte allocation.
    Eval {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Append the operating point to this RD curve CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Write the per-frame table as CSV.
        #[arg(long)]
        frames_csv: Option<PathBuf>,
        /// Exit with status 3 unless the PSNR thresholds are met.
        #[arg(long)]
        check: bool,
        #[arg(long, default_value_t = 30.0)]
        min_train: f64,
        #[arg(long, default_value_t = 27.0)]
        min_test: f64,
    },
    /// Bjøntegaard delta rate of curve B against anchor curve A.
    Bdrate {
        anchor: PathBuf,
        test: PathBuf,
        #[arg(long, value_enum, default_value_t = QualityArg::Test)]
        quality: QualityArg,
    },
    /// Baseline, dynamic-modeling and joint-optimization rows on one dataset.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_run(run: &RunArgs) -> Result<(RunConfig, Dataset)> {
    let mut cfg = match &run.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(split_overrides(&run.overrides)?)?;
    if let Some(d) = &run.dataset {
        cfg.dataset = Some(d.clone());
    }
    cfg.validate()?;
    let root = cfg.dataset.clone().ok_or_else(|| Error::Usage("no dataset: pass --dataset or set dataset= in the config".into()))?;
    let mut ds = Dataset::open(&root)?;
    if let Some(n) = run.frames {
        ds = ds.truncated(n);
    }
    Ok((cfg, ds))
}

/// Ok(false) when a check failed.
fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Synth { out, frames, resolution, views, test_views, gt_samples, frozen } => {
            let mut scene = BlobScene::acceptance(frames);
            if frozen {
                scene = scene.frozen();
            }
            let rig = Rig { views, ..Rig::acceptance(resolution) };
            let ds = make_dataset(&scene, &rig, test_views, gt_samples, &out)?;
            println!("wrote {} frames x {} views to {}", ds.manifest.frames, ds.manifest.views, out.display());
        }
        Command::Encode { run, out } => {
            let (cfg, ds) = load_run(&run)?;
            let stream = pipeline::encode(&ds, &cfg)?;
            let bytes = pipeline::write_nvv(&stream, &out)?;
            println!("{} frames ({}), {} bytes -> {}", stream.frames.len(), stream.frame_kinds(), bytes.len(), out.display());
        }
        Command::Decode { input, out_dir, dataset } => {
            let stream = pipeline::read_nvv(&input)?;
            let ds = dataset.as_deref().map(Dataset::open).transpose()?;
            pipeline::decode_to_dir(&stream, &out_dir, ds.as_ref())?;
            println!("decoded {} frames to {}", stream.frames.len(), out_dir.display());
        }
        Command::Render { frame, view, stream, dataset, out } => {
            let stream = pipeline::read_nvv(&stream)?;
            let ds = Dataset::open(&dataset)?;
            write_ppm(&out, &pipeline::render_view(&stream, &ds, frame, view)?)?;
        }
        Command::Eval { stream, dataset, curve, frames_csv, check, min_train, min_test } => {
            let s = pipeline::read_nvv(&stream)?;
            let ds = Dataset::open(&dataset)?.truncated(s.frames.len());
            let report = pipeline::evaluate(&s, &ds)?;
            print!("{}", pipeline::frame_table(&report));
            let alloc = AllocationReport::new(&s);
            let rows: Vec<Vec<String>> =
                alloc.rows().iter().map(|(n, b, p)| vec![n.to_string(), b.to_string(), format!("{:.1}%", p)]).collect();
            print!("\n{}", format_table(&["component", "bytes", "share"], &rows));
            let p = report.point;
            println!(
                "\n{} bytes, {:.1} bits/frame, PSNR train {:.2} dB, test {:.2} dB",
                report.stream_bytes, p.rate_bits, p.psnr_train, p.psnr_test
            );
            if let Some(path) = frames_csv {
                let rows: Vec<Vec<String>> = report
                    .frames
                    .iter()
                    .map(|f| {
                        vec![
                            f.frame.to_string(),
                            f.kind.letter().to_string(),
                            f.bits.to_string(),
                            f.psnr_train.to_string(),
                            f.psnr_test.to_string(),
                        ]
                    })
                    .collect();
                write_table(&["frame", "kind", "bits", "psnr_train", "psnr_test"], &rows, &path)?;
            }
            if let Some(path) = curve {
                let mut c = if path.exists() { read_curve(&path)? } else { RdCurve::default() };
                c.points.push(p);
                write_curve(&c, &path)?;
            }
            if check {
                let ok = p.psnr_train >= min_train && p.psnr_test >= min_test;
                println!(
                    "check {}: train {:.2} >= {:.2}, test {:.2} >= {:.2}",
                    if ok { "passed" } else { "FAILED" },
                    p.psnr_train,
                    min_train,
                    p.psnr_test,
                    min_test
                );
                return Ok(ok);
            }
        }
        Command::Bdrate { anchor, test, quality } => {
            let q = match quality {
                QualityArg::Train => Quality::Train,
                QualityArg::Test => Quality::Test,
            };
            let (a, b) = (read_curve(&anchor)?, read_curve(&test)?);
            let d = bd_rate(&a, &b, q)?;
            println!("BD-rate of {} against {}: {:+.2}%", label(&b, &test), label(&a, &anchor), d);
        }
        Command::Ablate { run, out } => {
            let (cfg, ds) = load_run(&run)?;
            let rows = pipeline::ablate(&ds, &cfg, None)?;
            let table = pipeline::ablation_rows(&rows);
            print!("{}", format_table(&ABLATION_HEADER, &table));
            if let Some(path) = out {
                write_table(&ABLATION_HEADER, &table, &path)?;
            }
        }
    }
    Ok(true)
}

fn label(c: &RdCurve, path: &Path) -> String {
    if c.label.is_empty() {
        path.display().to_string()
    } else {
        c.label.clone()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
