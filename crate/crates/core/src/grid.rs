//! Dense 3D feature grids over the unit cube.
//!
//! A [`Grid3D`] stores `nx * ny * nz` voxels with `channels` features each,
//! channels innermost. Node `i` along an axis of size `n` sits at `i / (n - 1)`.
//! Points outside the cube are clamped before sampling and receive no
//! coordinate gradient along the clamped axis.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math::{self, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid3D {
    dims: [usize; 3],
    channels: usize,
    values: Vec<f64>,
}

/// The eight voxels around a point and their trilinear weights.
///
/// `offsets` index the first channel of each corner; corner `k` uses bit 0
/// for x, bit 1 for y and bit 2 for z.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stencil {
    pub offsets: [usize; 8],
    pub weights: [f64; 8],
}

#[derive(Debug, Clone, Copy)]
struct AxisCell {
    lo: usize,
    hi: usize,
    frac: f64,
    /// d(frac)/d(coordinate); zero when the coordinate was clamped.
    slope: f64,
}

#[inline]
fn axis_cell(p: f64, n: usize) -> AxisCell {
    if n == 1 {
        return AxisCell { lo: 0, hi: 0, frac: 0.0, slope: 0.0 };
    }
    let inside = (0.0..=1.0).contains(&p);
    let u = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = (math::floor(u) as usize).min(n - 2);
    AxisCell {
        lo,
        hi: lo + 1,
        frac: u - lo as f64,
        slope: if inside { (n - 1) as f64 } else { 0.0 },
    }
}

/// A batch of per-point features, row-major (`width` values per point).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureBatch {
    pub fn zeros(points: usize, width: usize) -> Self {
        Self { width, data: vec![0.0; points * width] }
    }

    pub fn len(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }
}

impl Grid3D {
    pub fn zeros(dims: [usize; 3], channels: usize) -> Result<Self> {
        Self::check_shape(dims, channels)?;
        let len = dims[0] * dims[1] * dims[2] * channels;
        Ok(Self { dims, channels, values: vec![0.0; len] })
    }

    pub fn from_values(dims: [usize; 3], channels: usize, values: Vec<f64>) -> Result<Self> {
        Self::check_shape(dims, channels)?;
        let len = dims[0] * dims[1] * dims[2] * channels;
        if values.len() != len {
            bail!(Config, "grid {:?}x{} needs {} values, got {}", dims, channels, len, values.len());
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            bail!(Range, "grid value {} is not finite", i);
        }
        Ok(Self { dims, channels, values })
    }

    fn check_shape(dims: [usize; 3], channels: usize) -> Result<()> {
        if dims.iter().any(|&d| d == 0) || channels == 0 {
            bail!(Config, "grid dims {:?} and channels {} must be positive", dims, channels);
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_shape(&self, other: &Grid3D) -> bool {
        self.dims == other.dims && self.channels == other.channels
    }

    /// Offset of the first channel of voxel `(x, y, z)`.
    #[inline]
    pub fn offset(&self, x: usize, y: usize, z: usize) -> usize {
        ((z * self.dims[1] + y) * self.dims[0] + x) * self.channels
    }

    #[inline]
    pub fn stencil(&self, p: Vec3) -> Stencil {
        let cx = axis_cell(p[0], self.dims[0]);
        let cy = axis_cell(p[1], self.dims[1]);
        let cz = axis_cell(p[2], self.dims[2]);
        let mut st = Stencil::default();
        for k in 0..8 {
            let (ix, wx) = if k & 1 == 0 { (cx.lo, 1.0 - cx.frac) } else { (cx.hi, cx.frac) };
            let (iy, wy) = if k & 2 == 0 { (cy.lo, 1.0 - cy.frac) } else { (cy.hi, cy.frac) };
            let (iz, wz) = if k & 4 == 0 { (cz.lo, 1.0 - cz.frac) } else { (cz.hi, cz.frac) };
            st.offsets[k] = self.offset(ix, iy, iz);
            st.weights[k] = wx * wy * wz;
        }
        st
    }

    /// Weighted sum of the stencil corners into `out` (length `channels`).
    #[inline]
    pub fn gather(&self, st: &Stencil, out: &mut [f64]) {
        let c = self.channels;
        out[..c].fill(0.0);
        for k in 0..8 {
            let w = st.weights[k];
            let v = &self.values[st.offsets[k]..st.offsets[k] + c];
            for (o, x) in out[..c].iter_mut().zip(v) {
                *o += w * x;
            }
        }
    }

    /// Scatter-add `grad_feat` through the stencil weights into `grad_values`,
    /// a buffer shaped like this grid's values.
    #[inline]
    pub fn scatter(channels: usize, st: &Stencil, grad_feat: &[f64], grad_values: &mut [f64]) {
        for k in 0..8 {
            let w = st.weights[k];
            let g = &mut grad_values[st.offsets[k]..st.offsets[k] + channels];
            for (gv, gf) in g.iter_mut().zip(&grad_feat[..channels]) {
                *gv += w * gf;
            }
        }
    }

    /// Trilinear interpolation of one point.
    pub fn sample_point(&self, p: Vec3, out: &mut [f64]) {
        let st = self.stencil(p);
        self.gather(&st, out);
    }

    /// Trilinear interpolation of a point batch.
    pub fn sample(&self, pts: &[Vec3]) -> FeatureBatch {
        let mut out = FeatureBatch::zeros(pts.len(), self.channels);
        for (i, p) in pts.iter().enumerate() {
            self.sample_point(*p, out.row_mut(i));
        }
        out
    }

    /// As [`Grid3D::sample`], rejecting a grid whose channel count differs from
    /// the feature width the caller expects.
    pub fn sample_checked(&self, pts: &[Vec3], width: usize) -> Result<FeatureBatch> {
        if width != self.channels {
            bail!(Config, "grid has {} channels, expected feature width {}", self.channels, width);
        }
        Ok(self.sample(pts))
    }

    /// Backward pass of [`Grid3D::sample`]: returns the gradient wrt the grid
    /// values (scatter-add of trilinear weights) and wrt each point.
    pub fn sample_backward(&self, pts: &[Vec3], grad: &FeatureBatch) -> Result<(Vec<f64>, Vec<Vec3>)> {
        if grad.width != self.channels || grad.len() != pts.len() {
            bail!(Config, "gradient batch {}x{} does not match {} points x {} channels",
                grad.len(), grad.width, pts.len(), self.channels);
        }
        let mut gv = vec![0.0; self.values.len()];
        let mut gp = Vec::with_capacity(pts.len());
        for (i, p) in pts.iter().enumerate() {
            let g = grad.row(i);
            let st = self.stencil(*p);
            Self::scatter(self.channels, &st, g, &mut gv);
            gp.push(self.point_gradient(*p, g));
        }
        Ok((gv, gp))
    }

    /// d(g . feature(p))/dp for a fixed upstream gradient `g`.
    pub fn point_gradient(&self, p: Vec3, g: &[f64]) -> Vec3 {
        let cells = [
            axis_cell(p[0], self.dims[0]),
            axis_cell(p[1], self.dims[1]),
            axis_cell(p[2], self.dims[2]),
        ];
        let mut out = [0.0; 3];
        for k in 0..8 {
            let idx = [
                if k & 1 == 0 { cells[0].lo } else { cells[0].hi },
                if k & 2 == 0 { cells[1].lo } else { cells[1].hi },
                if k & 4 == 0 { cells[2].lo } else { cells[2].hi },
            ];
            let off = self.offset(idx[0], idx[1], idx[2]);
            let proj: f64 = self.values[off..off + self.channels].iter().zip(g).map(|(v, g)| v * g).sum();
            let w: [f64; 3] = core::array::from_fn(|a| {
                if k >> a & 1 == 0 { 1.0 - cells[a].frac } else { cells[a].frac }
            });
            for a in 0..3 {
                let sign = if k >> a & 1 == 0 { -1.0 } else { 1.0 };
                let others: f64 = (0..3).filter(|&b| b != a).map(|b| w[b]).product();
                out[a] += proj * sign * others * cells[a].slope;
            }
        }
        out
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| math::abs(*v)).sum()
    }
}

/// Periodic coordinate wrap used to index the basis: `frac(x * frequency)`
/// per axis, after clamping `x` to the unit cube. Output lies in `[0, 1)`.
#[inline]
pub fn sawtooth(p: Vec3, frequency: u32) -> Vec3 {
    let f = frequency as f64;
    core::array::from_fn(|a| {
        let u = p[a].clamp(0.0, 1.0) * f;
        let w = u - math::floor(u);
        // u - floor(u) can round up to exactly 1.0 for tiny negative inputs
        if w >= 1.0 { 0.0 } else { w }
    })
}

pub fn sawtooth_map(pts: &[Vec3], frequency: u32) -> Result<Vec<Vec3>> {
    if frequency < 1 {
        bail!(Config, "sawtooth frequency must be >= 1");
    }
    Ok(pts.iter().map(|p| sawtooth(*p, frequency)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisLevel {
    pub grid: Grid3D,
    pub frequency: u32,
}

/// Multi-scale basis grids, each indexed through [`sawtooth`] at its own
/// frequency. Level features are concatenated in level order.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisPyramid {
    levels: Vec<BasisLevel>,
}

impl BasisPyramid {
    pub fn new(levels: Vec<BasisLevel>) -> Result<Self> {
        if levels.is_empty() {
            bail!(Config, "basis pyramid needs at least one level");
        }
        if levels[0].frequency < 1 {
            bail!(Config, "basis frequency must be >= 1");
        }
        if levels.windows(2).any(|w| w[1].frequency <= w[0].frequency) {
            bail!(Config, "basis frequencies must be strictly increasing");
        }
        Ok(Self { levels })
    }

    pub fn zeros(shapes: &[([usize; 3], usize, u32)]) -> Result<Self> {
        let levels = shapes
            .iter()
            .map(|&(dims, ch, f)| Ok(BasisLevel { grid: Grid3D::zeros(dims, ch)?, frequency: f }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels)
    }

    pub fn levels(&self) -> &[BasisLevel] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [BasisLevel] {
        &mut self.levels
    }

    pub fn channels(&self) -> usize {
        self.levels.iter().map(|l| l.grid.channels()).sum()
    }

    pub fn entry_count(&self) -> usize {
        self.levels.iter().map(|l| l.grid.len()).sum()
    }

    /// Compute the per-level stencils of `p` into `stencils`.
    #[inline]
    pub fn stencils(&self, p: Vec3, stencils: &mut [Stencil]) {
        for (lvl, st) in self.levels.iter().zip(stencils.iter_mut()) {
            *st = lvl.grid.stencil(sawtooth(p, lvl.frequency));
        }
    }

    #[inline]
    pub fn gather(&self, stencils: &[Stencil], out: &mut [f64]) {
        let mut at = 0;
        for (lvl, st) in self.levels.iter().zip(stencils) {
            let c = lvl.grid.channels();
            lvl.grid.gather(st, &mut out[at..at + c]);
            at += c;
        }
    }

    pub fn sample_point(&self, p: Vec3, out: &mut [f64]) {
        let mut at = 0;
        for lvl in &self.levels {
            let c = lvl.grid.channels();
            lvl.grid.sample_point(sawtooth(p, lvl.frequency), &mut out[at..at + c]);
            at += c;
        }
    }

    pub fn sample(&self, pts: &[Vec3]) -> FeatureBatch {
        let mut out = FeatureBatch::zeros(pts.len(), self.channels());
        for (i, p) in pts.iter().enumerate() {
            self.sample_point(*p, out.row_mut(i));
        }
        out
    }

    /// Backward pass of [`BasisPyramid::sample`]: one value-gradient buffer per level.
    pub fn sample_backward(&self, pts: &[Vec3], grad: &FeatureBatch) -> Result<Vec<Vec<f64>>> {
        if grad.width != self.channels() || grad.len() != pts.len() {
            bail!(Config, "gradient batch does not match basis pyramid");
        }
        let mut out: Vec<Vec<f64>> = self.levels.iter().map(|l| vec![0.0; l.grid.len()]).collect();
        for (i, p) in pts.iter().enumerate() {
            let g = grad.row(i);
            let mut at = 0;
            for (lvl, buf) in self.levels.iter().zip(out.iter_mut()) {
                let c = lvl.grid.channels();
                let st = lvl.grid.stencil(sawtooth(*p, lvl.frequency));
                Grid3D::scatter(c, &st, &g[at..at + c], buf);
                at += c;
            }
        }
        Ok(out)
    }
}

/// Per-frame additive update of a basis pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPyramid {
    levels: Vec<Grid3D>,
}

impl ResidualPyramid {
    pub fn zeros_like(basis: &BasisPyramid) -> Self {
        let levels = basis
            .levels()
            .iter()
            .map(|l| Grid3D { dims: l.grid.dims, channels: l.grid.channels, values: vec![0.0; l.grid.len()] })
            .collect();
        Self { levels }
    }

    pub fn new(levels: Vec<Grid3D>) -> Self {
        Self { levels }
    }

    pub fn levels(&self) -> &[Grid3D] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [Grid3D] {
        &mut self.levels
    }

    pub fn entry_count(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    pub fn check_congruent(&self, basis: &BasisPyramid) -> Result<()> {
        if self.levels.len() != basis.levels().len() {
            bail!(Config, "residual has {} levels, basis has {}", self.levels.len(), basis.levels().len());
        }
        for (i, (r, b)) in self.levels.iter().zip(basis.levels()).enumerate() {
            if !r.same_shape(&b.grid) {
                bail!(Config, "residual level {} shape differs from basis", i);
            }
        }
        Ok(())
    }
}

/// `B_t = B_prev + R_t`, level by level. Neither input is modified.
pub fn apply_residual(prev: &BasisPyramid, res: &ResidualPyramid) -> Result<BasisPyramid> {
    res.check_congruent(prev)?;
    let mut out = prev.clone();
    for (lvl, r) in out.levels.iter_mut().zip(&res.levels) {
        for (v, d) in lvl.grid.values.iter_mut().zip(&r.values) {
            *v += d;
        }
    }
    Ok(out)
}

/// Write `prev + res` into `out` without allocating. All three must be congruent.
pub fn apply_residual_into(prev: &BasisPyramid, res: &ResidualPyramid, out: &mut BasisPyramid) {
    for ((o, p), r) in out.levels.iter_mut().zip(&prev.levels).zip(&res.levels) {
        for ((o, p), r) in o.grid.values.iter_mut().zip(&p.grid.values).zip(&r.values) {
            *o = p + r;
        }
    }
}

/// L1 norm of the residual and its subgradient (`sign`, zero at zero).
pub fn l1_penalty(res: &ResidualPyramid) -> (f64, ResidualPyramid) {
    let mut total = 0.0;
    let mut grad = res.clone();
    for (g, r) in grad.levels.iter_mut().zip(&res.levels) {
        for (gv, v) in g.values.iter_mut().zip(&r.values) {
            total += math::abs(*v);
            *gv = sign(*v);
        }
    }
    (total, grad)
}

#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Hadamard product of coefficient and basis features.
pub fn fuse(coef: &FeatureBatch, basis: &FeatureBatch) -> Result<FeatureBatch> {
    if coef.width != basis.width || coef.data.len() != basis.data.len() {
        bail!(Config, "cannot fuse features of width {} and {}", coef.width, basis.width);
    }
    let data = coef.data.iter().zip(&basis.data).map(|(a, b)| a * b).collect();
    Ok(FeatureBatch { width: coef.width, data })
}

/// Backward of [`fuse`]: each input's gradient is the upstream gradient
/// scaled by the other input.
pub fn fuse_backward(
    coef: &FeatureBatch,
    basis: &FeatureBatch,
    grad: &FeatureBatch,
) -> Result<(FeatureBatch, FeatureBatch)> {
    if coef.width != basis.width || grad.width != coef.width || grad.data.len() != coef.data.len() {
        bail!(Config, "fuse backward shapes differ");
    }
    let gc = grad.data.iter().zip(&basis.data).map(|(g, b)| g * b).collect();
    let gb = grad.data.iter().zip(&coef.data).map(|(g, c)| g * c).collect();
    Ok((FeatureBatch { width: coef.width, data: gc }, FeatureBatch { width: coef.width, data: gb }))
}
