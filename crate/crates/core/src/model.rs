//! A renderable frame: coefficient grid, basis pyramid and MLP.

use alloc::vec;
use alloc::vec::Vec;

use crate::codec::{LevelShape, StreamHeader};
use crate::error::{bail, Result};
use crate::grid::{BasisPyramid, Grid3D, Stencil};
use crate::math::Vec3;
use crate::mlp::{DirectionEncoding, MlpArch, PointRadiance, TinyMlp};
use crate::render::RadianceField;

/// Shape of one basis level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelSpec {
    pub dims: [usize; 3],
    pub channels: usize,
    pub frequency: u32,
}

/// Grid and network shapes shared by every frame of a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldShapes {
    pub coef_dims: [usize; 3],
    pub coef_channels: usize,
    pub levels: Vec<LevelSpec>,
    pub hidden: Vec<usize>,
    pub direction_octaves: usize,
    pub feature_scale: f64,
}

impl Default for FieldShapes {
    fn default() -> Self {
        Self {
            coef_dims: [64; 3],
            coef_channels: 12,
            levels: vec![
                LevelSpec { dims: [16; 3], channels: 4, frequency: 2 },
                LevelSpec { dims: [24; 3], channels: 4, frequency: 4 },
                LevelSpec { dims: [32; 3], channels: 4, frequency: 8 },
            ],
            hidden: vec![64, 64],
            direction_octaves: 2,
            feature_scale: 1.0 / 16.0,
        }
    }
}

impl FieldShapes {
    pub fn validate(&self) -> Result<()> {
        let basis_channels: usize = self.levels.iter().map(|l| l.channels).sum();
        if self.coef_channels == 0 || basis_channels != self.coef_channels {
            bail!(
                Config,
                "coefficient channels ({}) must equal the summed basis channels ({})",
                self.coef_channels,
                basis_channels
            );
        }
        if self.coef_dims.iter().chain(self.levels.iter().flat_map(|l| l.dims.iter())).any(|d| *d < 2) {
            bail!(Config, "every grid axis needs at least two nodes");
        }
        if self.levels.is_empty() || self.levels.iter().any(|l| l.channels == 0) {
            bail!(Config, "basis levels need positive channel counts");
        }
        if self.levels.len() > 255 {
            bail!(Config, "at most 255 basis levels");
        }
        self.mlp_arch().validate()
    }

    pub fn mlp_arch(&self) -> MlpArch {
        MlpArch {
            feature_width: self.coef_channels,
            direction: DirectionEncoding { octaves: self.direction_octaves },
            hidden: self.hidden.clone(),
            feature_scale: self.feature_scale,
        }
    }

    pub fn coef_entries(&self) -> usize {
        self.coef_dims.iter().product::<usize>() * self.coef_channels
    }

    pub fn basis_entries(&self) -> usize {
        self.levels.iter().map(|l| l.dims.iter().product::<usize>() * l.channels).sum()
    }

    pub fn zero_basis(&self) -> Result<BasisPyramid> {
        let shapes: Vec<_> = self.levels.iter().map(|l| (l.dims, l.channels, l.frequency)).collect();
        BasisPyramid::zeros(&shapes)
    }

    pub fn to_header(&self, gof_length: usize, background: [f64; 3], render_samples: usize) -> StreamHeader {
        StreamHeader {
            coef_dims: self.coef_dims.map(|d| d as u32),
            coef_channels: self.coef_channels as u32,
            levels: self
                .levels
                .iter()
                .map(|l| LevelShape { dims: l.dims.map(|d| d as u32), channels: l.channels as u32, frequency: l.frequency })
                .collect(),
            hidden: self.hidden.iter().map(|h| *h as u32).collect(),
            direction_octaves: self.direction_octaves as u32,
            feature_scale: self.feature_scale,
            gof_length: gof_length as u32,
            background,
            render_samples: render_samples as u32,
        }
    }

    pub fn from_header(h: &StreamHeader) -> Result<Self> {
        let s = Self {
            coef_dims: h.coef_dims.map(|d| d as usize),
            coef_channels: h.coef_channels as usize,
            levels: h
                .levels
                .iter()
                .map(|l| LevelSpec { dims: l.dims.map(|d| d as usize), channels: l.channels as usize, frequency: l.frequency })
                .collect(),
            hidden: h.hidden.iter().map(|x| *x as usize).collect(),
            direction_octaves: h.direction_octaves as usize,
            feature_scale: h.feature_scale,
        };
        s.validate().map_err(|e| crate::Error::Format(alloc::format!("header describes an invalid model: {}", e)))?;
        Ok(s)
    }
}

/// Everything needed to render one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    pub coef: Grid3D,
    pub basis: BasisPyramid,
    pub mlp: TinyMlp,
}

impl FieldSet {
    pub fn new(coef: Grid3D, basis: BasisPyramid, mlp: TinyMlp) -> Result<Self> {
        if coef.channels() != basis.channels() || coef.channels() != mlp.arch().feature_width {
            bail!(
                Config,
                "coefficient ({}), basis ({}) and MLP ({}) feature widths differ",
                coef.channels(),
                basis.channels(),
                mlp.arch().feature_width
            );
        }
        Ok(Self { coef, basis, mlp })
    }

    /// Fused features `c(x) * b(x)` at one point.
    pub fn fused(&self, p: Vec3, out: &mut [f64]) {
        let w = self.coef.channels();
        let mut b = vec![0.0; w];
        self.coef.sample_point(p, out);
        self.basis.sample_point(p, &mut b);
        for (o, bv) in out.iter_mut().zip(&b) {
            *o *= bv;
        }
    }
}

impl RadianceField for FieldSet {
    fn radiance(&self, pts: &[Vec3], dir: Vec3, out: &mut [PointRadiance]) {
        let w = self.coef.channels();
        let ctx = self.mlp.ray_context(dir);
        let mut tape = vec![0.0; self.mlp.arch().tape_len()];
        let mut c = vec![0.0; w];
        let mut b = vec![0.0; w];
        let mut st = vec![Stencil::default(); self.basis.levels().len()];
        for (p, o) in pts.iter().zip(out.iter_mut()) {
            let cs = self.coef.stencil(*p);
            self.coef.gather(&cs, &mut c);
            self.basis.stencils(*p, &mut st);
            self.basis.gather(&st, &mut b);
            for (cv, bv) in c.iter_mut().zip(&b) {
                *cv *= bv;
            }
            *o = self.mlp.forward(&ctx, &c, &mut tape);
        }
    }
}
