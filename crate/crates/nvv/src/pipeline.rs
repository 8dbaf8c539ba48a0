//! Encode, decode, render, evaluate and ablate on datasets and `.nvv` files.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use flate2::write::ZlibEncoder;
use flate2::Compression;
use nvv_core::codec::{read_stream, write_stream, SequenceDecoder, Stream};
use nvv_core::eval::{evaluate_stream, mean_psnr, summarize, FrameMetrics, RdPoint, SequenceReport};
use nvv_core::grid::BasisPyramid;
use nvv_core::model::{FieldSet, FieldShapes};
use nvv_core::render::{render_image, Image, RenderSettings};
use nvv_core::train::{encode_sequence, FrameParams, FrameReport, FrameSource, TrainConfig};

use crate::config::RunConfig;
use crate::curves::format_table;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ppm::write_ppm;

pub fn read_nvv(path: &Path) -> Result<Stream> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    Ok(read_stream(&bytes)?)
}

pub fn write_nvv(stream: &Stream, path: &Path) -> Result<Vec<u8>> {
    let bytes = write_stream(stream)?;
    fs::write(path, &bytes).map_err(Error::io(path))?;
    Ok(bytes)
}

fn log_frame(r: &FrameReport) {
    if let Some(last) = r.trace.last() {
        log::info!(
            "frame {:>3} {}  {:>8} bytes  loss {:.4e}  est bits {:.0}",
            r.index,
            r.kind.letter(),
            r.record.encoded_len(),
            last.loss,
            last.rate_bits
        );
    }
}

/// Train and code every frame of `source`.
pub fn encode(source: &dyn FrameSource, cfg: &RunConfig) -> Result<Stream> {
    Ok(encode_sequence(source, &cfg.shapes, &cfg.train, &mut |r| log_frame(r))?)
}

pub fn settings_of(stream: &Stream) -> RenderSettings {
    RenderSettings { samples: stream.header.render_samples as usize, background: stream.header.background }
}

/// Decode frames up to and including `frame`.
pub fn decode_frame(stream: &Stream, frame: usize) -> Result<FieldSet> {
    if frame >= stream.frames.len() {
        return Err(Error::Usage(format!("frame {} out of range, stream has {}", frame, stream.frames.len())));
    }
    let mut dec = SequenceDecoder::new(FieldShapes::from_header(&stream.header)?);
    let mut last = None;
    for f in &stream.frames[..=frame] {
        last = Some(dec.decode_frame(f)?);
    }
    Ok(last.expect("at least one frame").fields)
}

/// Little-endian `f32` dump: coefficient grid, basis levels in order, MLP parameters.
pub fn raw_fields(f: &FieldSet) -> Vec<u8> {
    let mut out = Vec::new();
    let mut push = |vals: &[f64]| {
        for v in vals {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    };
    push(f.coef.values());
    for l in f.basis.levels() {
        push(l.grid.values());
    }
    push(f.mlp.params());
    out
}

/// Write `tFFFF.f32` per frame and a `frames.csv` index to `dir`; with a
/// dataset, also render every view to `tFFFF_vVV.ppm`.
pub fn decode_to_dir(stream: &Stream, dir: &Path, views: Option<&Dataset>) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut dec = SequenceDecoder::new(FieldShapes::from_header(&stream.header)?);
    let mut rows = Vec::new();
    for (t, rec) in stream.frames.iter().enumerate() {
        let frame = dec.decode_frame(rec)?;
        let p = dir.join(format!("t{:04}.f32", t));
        fs::write(&p, raw_fields(&frame.fields)).map_err(Error::io(&p))?;
        if let Some(ds) = views {
            for (v, cam) in ds.cameras.iter().enumerate() {
                let img = render_image(&frame.fields, cam, settings_of(stream));
                write_ppm(&dir.join(format!("t{:04}_v{:02}.ppm", t, v)), &img)?;
            }
        }
        rows.push(vec![t.to_string(), rec.kind.letter().to_string(), rec.encoded_len().to_string()]);
    }
    crate::curves::write_table(&["frame", "kind", "bytes"], &rows, &dir.join("frames.csv"))
}

/// Render one decoded frame from one dataset camera.
pub fn render_view(stream: &Stream, ds: &Dataset, frame: usize, view: usize) -> Result<Image> {
    let cam = ds
        .cameras
        .get(view)
        .ok_or_else(|| Error::Usage(format!("view {} out of range, dataset has {}", view, ds.cameras.len())))?;
    Ok(render_image(&decode_frame(stream, frame)?, cam, settings_of(stream)))
}

pub fn evaluate(stream: &Stream, ds: &Dataset) -> Result<SequenceReport> {
    Ok(evaluate_stream(stream, ds)?)
}

pub fn frame_table(report: &SequenceReport) -> String {
    let rows: Vec<Vec<String>> = report
        .frames
        .iter()
        .map(|f| {
            vec![
                f.frame.to_string(),
                f.kind.letter().to_string(),
                f.bits.to_string(),
                format!("{:.2}", f.psnr_train),
                format!("{:.2}", f.psnr_test),
            ]
        })
        .collect();
    format_table(&["frame", "kind", "bits", "psnr_train", "psnr_test"], &rows)
}

/// One row of the step-by-step comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub label: &'static str,
    pub total_bytes: usize,
    pub point: RdPoint,
}

pub const ABLATION_LABELS: [&str; 3] = ["baseline", "+dynamic", "+joint"];

/// Training settings of the three rows: independent unrated frames,
/// unrated groups of frames, and the configuration as given.
pub fn ablation_configs(cfg: &TrainConfig) -> [TrainConfig; 3] {
    let baseline = TrainConfig { gof_length: 1, lambda_rate: 0.0, ..cfg.clone() };
    let dynamic = TrainConfig { lambda_rate: 0.0, ..cfg.clone() };
    [baseline, dynamic, cfg.clone()]
}

fn trained_fields(p: &FrameParams, shapes: &FieldShapes) -> Result<FieldSet> {
    let mut basis: BasisPyramid = shapes.zero_basis()?;
    for (lvl, g) in basis.levels_mut().iter_mut().zip(&p.grids) {
        lvl.grid = g.clone();
        lvl.grid.values_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
    let mut coef = p.coef.clone();
    coef.values_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
    let mut mlp = p.mlp.clone();
    mlp.round_to_f32();
    Ok(FieldSet::new(coef, basis, mlp)?)
}

/// Independent intra frames stored as raw `f32` parameters and compressed
/// as one zlib container.
pub fn baseline_row(ds: &Dataset, cfg: &RunConfig) -> Result<AblationRow> {
    let [baseline, _, _] = ablation_configs(&cfg.train);
    let mut fields = Vec::new();
    let mut failure = None;
    encode_sequence(ds, &cfg.shapes, &baseline, &mut |r| {
        log_frame(r);
        match trained_fields(r.trained, &cfg.shapes) {
            Ok(f) => fields.push(f),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut z = ZlibEncoder::new(Vec::new(), Compression::best());
    for f in &fields {
        z.write_all(&raw_fields(f)).expect("writing to memory");
    }
    let packed = z.finish().expect("writing to memory");
    let settings = RenderSettings { samples: baseline.samples, background: baseline.background };
    let mut frames = Vec::with_capacity(fields.len());
    for (t, f) in fields.iter().enumerate() {
        let train = ds.views(t, &ds.manifest.train_views())?;
        let test = ds.views(t, &ds.manifest.test_views)?;
        frames.push(FrameMetrics {
            frame: t,
            kind: nvv_core::codec::FrameKind::Intra,
            bits: 0,
            psnr_train: mean_psnr(f, &train, settings)?,
            psnr_test: mean_psnr(f, &test, settings)?,
        });
    }
    Ok(AblationRow { label: ABLATION_LABELS[0], total_bytes: packed.len(), point: summarize(&frames, packed.len()) })
}

fn coded_row(label: &'static str, stream: &Stream, ds: &Dataset) -> Result<AblationRow> {
    let r = evaluate(stream, ds)?;
    Ok(AblationRow { label, total_bytes: r.stream_bytes, point: r.point })
}

/// All three rows. A stream already coded with the full configuration can
/// stand in for the last row.
pub fn ablate(ds: &Dataset, cfg: &RunConfig, full: Option<&Stream>) -> Result<[AblationRow; 3]> {
    let [_, dynamic, _] = ablation_configs(&cfg.train);
    let baseline = baseline_row(ds, cfg)?;
    let dyn_cfg = RunConfig { train: dynamic, ..cfg.clone() };
    let dynamic = coded_row(ABLATION_LABELS[1], &encode(ds, &dyn_cfg)?, ds)?;
    let joint = match full {
        Some(s) => coded_row(ABLATION_LABELS[2], s, ds)?,
        None => coded_row(ABLATION_LABELS[2], &encode(ds, cfg)?, ds)?,
    };
    Ok([baseline, dynamic, joint])
}

pub fn ablation_rows(rows: &[AblationRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.label.to_string(),
                r.total_bytes.to_string(),
                format!("{:.1}", r.point.rate_bits),
                format!("{:.2}", r.point.psnr_train),
                format!("{:.2}", r.point.psnr_test),
            ]
        })
        .collect()
}

pub const ABLATION_HEADER: [&str; 5] = ["row", "total_bytes", "rate_bits", "psnr_train", "psnr_test"];
