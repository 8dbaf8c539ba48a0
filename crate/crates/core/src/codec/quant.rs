use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::grid::Grid3D;
use crate::math;

/// Largest magnitude accepted by [`quantize`]; beyond it the run has diverged.
pub const QUANT_LIMIT: f64 = (1u64 << 30) as f64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedGrid {
    pub dims: [usize; 3],
    pub channels: usize,
    pub values: Vec<i32>,
    pub vmin: i32,
    pub vmax: i32,
}

/// Round every entry half away from zero (unit step).
pub fn quantize(grid: &Grid3D) -> Result<QuantizedGrid> {
    let mut values = Vec::with_capacity(grid.len());
    for v in grid.values() {
        if !(math::abs(*v) <= QUANT_LIMIT) {
            bail!(Range, "grid value {} cannot be quantized", v);
        }
        values.push(math::round(*v) as i32);
    }
    let vmin = values.iter().copied().min().unwrap_or(0);
    let vmax = values.iter().copied().max().unwrap_or(0);
    Ok(QuantizedGrid { dims: grid.dims(), channels: grid.channels(), values, vmin, vmax })
}

pub fn dequantize(q: &QuantizedGrid) -> Grid3D {
    Grid3D::from_values(q.dims, q.channels, q.values.iter().map(|v| *v as f64).collect())
        .expect("quantized grid shape is valid")
}
