//! Grid and frame coding on top of the range coder, and sequence decoding
//! with the decoded frame buffer.

use alloc::format;
use alloc::vec::Vec;

use super::bitstream::{FrameKind, FrameRecord, Stream, TensorKind, TensorRecord};
use super::freq::{build_freq_table, FreqTable};
use super::quant::{dequantize, quantize};
use super::range::{range_decode, range_encode};
use crate::error::{bail, Result};
use crate::grid::{apply_residual, BasisPyramid, Grid3D, ResidualPyramid};
use crate::mlp::TinyMlp;
use crate::model::{FieldSet, FieldShapes};
use crate::rate::LaplaceModel;

/// The coding table of a record, built from its stored `f32` parameters.
pub fn record_table(mu: f32, b: f32, vmin: i32, vmax: i32) -> Result<FreqTable> {
    if !(b > 0.0) || !b.is_finite() || !mu.is_finite() {
        bail!(Format, "invalid Laplace parameters mu={} b={}", mu, b);
    }
    build_freq_table(mu as f64, b as f64, vmin, vmax)
}

/// Quantize and entropy code one grid. Returns the record and the grid as
/// the decoder will see it.
pub fn encode_grid(kind: TensorKind, level: u8, grid: &Grid3D, model: &LaplaceModel) -> Result<(TensorRecord, Grid3D)> {
    let q = quantize(grid)?;
    let (mu, b) = model.to_f32();
    let table = record_table(mu, b, q.vmin, q.vmax)?;
    let payload = range_encode(&q.values, &table)?;
    let rec = TensorRecord { kind, level, mu, b, vmin: q.vmin, vmax: q.vmax, payload };
    Ok((rec, dequantize(&q)))
}

/// Decode one grid of the given shape.
pub fn decode_grid(rec: &TensorRecord, dims: [usize; 3], channels: usize) -> Result<Grid3D> {
    let n = dims.iter().product::<usize>() * channels;
    let table = record_table(rec.mu, rec.b, rec.vmin, rec.vmax)?;
    let symbols = range_decode(&rec.payload, &table, n)?;
    Grid3D::from_values(dims, channels, symbols.into_iter().map(|s| s as f64).collect())
}

/// Frame-to-frame state shared by encoder and decoder: the reconstructed
/// basis of the previous frame and the MLP of the current group.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFrameBuffer {
    pub basis: BasisPyramid,
    pub mlp: TinyMlp,
}

/// One decoded frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFrame {
    pub kind: FrameKind,
    pub fields: FieldSet,
}

fn find<'a>(f: &'a FrameRecord, kind: TensorKind, level: usize) -> Result<&'a TensorRecord> {
    let mut it = f.tensors.iter().filter(|t| t.kind == kind && t.level as usize == level);
    let first = it.next().ok_or_else(|| crate::Error::Format(format!("missing {:?} grid for level {}", kind, level)))?;
    if it.next().is_some() {
        bail!(Format, "duplicate {:?} grid for level {}", kind, level);
    }
    Ok(first)
}

/// Applies frame records in order, maintaining the decoded frame buffer.
pub struct SequenceDecoder {
    shapes: FieldShapes,
    buffer: Option<DecodedFrameBuffer>,
}

impl SequenceDecoder {
    pub fn new(shapes: FieldShapes) -> Self {
        Self { shapes, buffer: None }
    }

    pub fn buffer(&self) -> Option<&DecodedFrameBuffer> {
        self.buffer.as_ref()
    }

    pub fn decode_frame(&mut self, f: &FrameRecord) -> Result<DecodedFrame> {
        let s = &self.shapes;
        let expected = 1 + s.levels.len();
        if f.tensors.len() != expected {
            bail!(Format, "frame carries {} grids, expected {}", f.tensors.len(), expected);
        }
        let coef = decode_grid(find(f, TensorKind::Coefficient, 0)?, s.coef_dims, s.coef_channels)?;
        let (basis, mlp) = match f.kind {
            FrameKind::Intra => {
                let mut basis = s.zero_basis()?;
                for (i, (lvl, spec)) in basis.levels_mut().iter_mut().zip(&s.levels).enumerate() {
                    lvl.grid = decode_grid(find(f, TensorKind::Basis, i)?, spec.dims, spec.channels)?;
                }
                let raw = f.mlp.as_ref().ok_or_else(|| crate::Error::Format("intra frame without MLP".into()))?;
                let mlp = TinyMlp::from_params(s.mlp_arch(), raw.iter().map(|p| *p as f64).collect())
                    .map_err(|e| crate::Error::Format(format!("MLP record: {}", e)))?;
                (basis, mlp)
            }
            FrameKind::Predicted => {
                let Some(buf) = &self.buffer else {
                    bail!(Format, "predicted frame before any intra frame");
                };
                let mut levels = Vec::with_capacity(s.levels.len());
                for (i, spec) in s.levels.iter().enumerate() {
                    levels.push(decode_grid(find(f, TensorKind::Residual, i)?, spec.dims, spec.channels)?);
                }
                let basis = apply_residual(&buf.basis, &ResidualPyramid::new(levels))?;
                (basis, buf.mlp.clone())
            }
        };
        self.buffer = Some(DecodedFrameBuffer { basis: basis.clone(), mlp: mlp.clone() });
        Ok(DecodedFrame { kind: f.kind, fields: FieldSet::new(coef, basis, mlp)? })
    }
}

/// Decode every frame of a stream.
pub fn decode_sequence(stream: &Stream) -> Result<Vec<DecodedFrame>> {
    let mut dec = SequenceDecoder::new(FieldShapes::from_header(&stream.header)?);
    stream.frames.iter().map(|f| dec.decode_frame(f)).collect()
}
