//! Tiny MLP mapping fused grid features and view direction to color and density.
//!
//! Input is `[feature_scale * fused | encode_direction(d)]`; hidden layers use
//! ReLU; the four outputs are color pre-activations (sigmoid) and a density
//! pre-activation (softplus). Parameters live in one flat vector so the
//! optimizer and the bitstream treat them as a single tensor.
//!
//! The direction part of the first layer is the same for every sample of a
//! ray, so it is folded into a per-ray bias by [`RayContext`].

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{bail, Result};
use crate::grid::FeatureBatch;
use crate::math::{self, Vec3};
use crate::rng::uniform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRadiance {
    pub rgb: [f64; 3],
    pub sigma: f64,
}

/// Direction encoding with `octaves` sin/cos frequency bands (no pi factor).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectionEncoding {
    pub octaves: usize,
}

impl DirectionEncoding {
    pub fn width(&self) -> usize {
        3 + 6 * self.octaves
    }

    /// `[d, sin(2^0 d), cos(2^0 d), sin(2^1 d), cos(2^1 d), ...]`.
    /// A non-unit direction is normalized and logged.
    pub fn encode_into(&self, d: Vec3, out: &mut [f64]) {
        let n = math::norm(d);
        let d = if (n - 1.0).abs() > 1e-6 {
            log::warn!("direction {:?} is not unit length; normalizing", d);
            math::scale(d, 1.0 / n)
        } else {
            d
        };
        out[..3].copy_from_slice(&d);
        let mut freq = 1.0;
        for k in 0..self.octaves {
            let base = 3 + 6 * k;
            for a in 0..3 {
                out[base + a] = math::sin(freq * d[a]);
                out[base + 3 + a] = math::cos(freq * d[a]);
            }
            freq *= 2.0;
        }
    }

    pub fn encode(&self, d: Vec3) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        self.encode_into(d, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpArch {
    /// Width of the fused grid features.
    pub feature_width: usize,
    pub direction: DirectionEncoding,
    pub hidden: Vec<usize>,
    /// Fixed multiplier applied to fused features before the first layer.
    pub feature_scale: f64,
}

impl MlpArch {
    pub fn input_width(&self) -> usize {
        self.feature_width + self.direction.width()
    }

    /// `(fan_in, fan_out)` of each layer, output layer last.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input_width();
        for &h in &self.hidden {
            out.push((fan_in, h));
            fan_in = h;
        }
        out.push((fan_in, 4));
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.len() > 14 {
            bail!(Config, "at most 14 hidden layers");
        }
        if self.feature_width == 0 || self.hidden.iter().any(|&h| h == 0) {
            bail!(Config, "MLP widths must be positive");
        }
        if !(self.feature_scale.is_finite() && self.feature_scale > 0.0) {
            bail!(Config, "feature scale must be positive");
        }
        Ok(())
    }

    /// Length of the per-sample activation tape.
    pub fn tape_len(&self) -> usize {
        self.feature_width + self.hidden.iter().sum::<usize>() + 4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyMlp {
    arch: MlpArch,
    layout: Vec<LayerLayout>,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerLayout {
    fan_in: usize,
    fan_out: usize,
    /// Weights are stored input-major: `w[i * fan_out + j]`.
    weights: usize,
    bias: usize,
}

/// Per-ray state: the first-layer bias with the direction term folded in.
#[derive(Debug, Clone)]
pub struct RayContext {
    dir_enc: Vec<f64>,
    first_bias: Vec<f64>,
    /// Accumulated d(loss)/d(first-layer pre-activation) over the ray's samples.
    first_grad: Vec<f64>,
}

impl TinyMlp {
    pub fn zeros(arch: MlpArch) -> Result<Self> {
        arch.validate()?;
        let layout = Self::layout(&arch);
        let n = arch.param_count();
        Ok(Self { arch, layout, params: vec![0.0; n] })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: MlpArch, rng: &mut impl RngCore) -> Result<Self> {
        let mut mlp = Self::zeros(arch)?;
        for l in mlp.layout.clone() {
            let a = math::sqrt(6.0 / (l.fan_in + l.fan_out) as f64);
            for w in &mut mlp.params[l.weights..l.weights + l.fan_in * l.fan_out] {
                *w = uniform(rng, -a, a);
            }
        }
        Ok(mlp)
    }

    pub fn from_params(arch: MlpArch, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            bail!(Config, "MLP expects {} parameters, got {}", arch.param_count(), params.len());
        }
        if params.iter().any(|p| !p.is_finite()) {
            bail!(Range, "non-finite MLP parameter");
        }
        let layout = Self::layout(&arch);
        Ok(Self { arch, layout, params })
    }

    fn layout(arch: &MlpArch) -> Vec<LayerLayout> {
        let mut at = 0;
        arch.layers()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let l = LayerLayout { fan_in, fan_out, weights: at, bias: at + fan_in * fan_out };
                at += fan_in * fan_out + fan_out;
                l
            })
            .collect()
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Round every parameter through `f32`, the precision stored in the bitstream.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            *p = *p as f32 as f64;
        }
    }

    pub fn ray_context(&self, dir: Vec3) -> RayContext {
        let enc = self.arch.direction.encode(dir);
        let l0 = self.layout[0];
        let f = self.arch.feature_width;
        let mut first_bias = self.params[l0.bias..l0.bias + l0.fan_out].to_vec();
        for (i, e) in enc.iter().enumerate() {
            let row = l0.weights + (f + i) * l0.fan_out;
            axpy(*e, &self.params[row..row + l0.fan_out], &mut first_bias);
        }
        RayContext { dir_enc: enc, first_bias, first_grad: vec![0.0; l0.fan_out] }
    }

    /// Forward one sample, recording activations in `tape` (length
    /// [`MlpArch::tape_len`]).
    #[inline]
    pub fn forward(&self, ctx: &RayContext, fused: &[f64], tape: &mut [f64]) -> PointRadiance {
        let f = self.arch.feature_width;
        let (x, mut rest) = tape.split_at_mut(f);
        for (xi, v) in x.iter_mut().zip(fused) {
            *xi = v * self.arch.feature_scale;
        }
        let mut input: &[f64] = x;
        let mut relu_input = false;
        for (li, l) in self.layout.iter().enumerate() {
            let (z, tail) = rest.split_at_mut(l.fan_out);
            if li == 0 {
                z.copy_from_slice(&ctx.first_bias);
            } else {
                z.copy_from_slice(&self.params[l.bias..l.bias + l.fan_out]);
            }
            let rows = if li == 0 { f } else { l.fan_in };
            for i in 0..rows {
                let a = if relu_input { input[i].max(0.0) } else { input[i] };
                if a != 0.0 {
                    let row = l.weights + i * l.fan_out;
                    axpy(a, &self.params[row..row + l.fan_out], z);
                }
            }
            input = z;
            relu_input = true;
            rest = tail;
        }
        let o = input;
        PointRadiance {
            rgb: [math::sigmoid(o[0]), math::sigmoid(o[1]), math::sigmoid(o[2])],
            sigma: math::softplus(o[3]),
        }
    }

    /// Backward one sample given d(loss)/d(rgb) and d(loss)/d(sigma).
    ///
    /// Parameter gradients are added to `grads`; d(loss)/d(fused) is written
    /// to `d_fused`. The first-layer bias and direction weights are settled
    /// once per ray by [`TinyMlp::finish_ray`]. `scratch` must hold at least
    /// twice the widest layer.
    #[inline]
    pub fn backward(
        &self,
        ctx: &mut RayContext,
        tape: &[f64],
        d_rgb: [f64; 3],
        d_sigma: f64,
        grads: &mut [f64],
        d_fused: &mut [f64],
        scratch: &mut [f64],
    ) {
        let f = self.arch.feature_width;
        let nl = self.layout.len();
        // offsets of each layer's pre-activation inside the tape
        let mut starts = [0usize; 16];
        let mut at = f;
        for (i, l) in self.layout.iter().enumerate() {
            starts[i] = at;
            at += l.fan_out;
        }
        let o = &tape[starts[nl - 1]..starts[nl - 1] + 4];
        let (cur, next) = scratch.split_at_mut(scratch.len() / 2);
        for c in 0..3 {
            let s = math::sigmoid(o[c]);
            cur[c] = d_rgb[c] * s * (1.0 - s);
        }
        cur[3] = d_sigma * math::sigmoid(o[3]);
        let (mut cur, mut next) = (cur, next);
        for li in (0..nl).rev() {
            let l = self.layout[li];
            let g_out = &cur[..l.fan_out];
            if li == 0 {
                for (a, g) in ctx.first_grad.iter_mut().zip(g_out) {
                    *a += g;
                }
                let x = &tape[..f];
                for i in 0..f {
                    let row = l.weights + i * l.fan_out;
                    let w = &self.params[row..row + l.fan_out];
                    axpy(x[i], g_out, &mut grads[row..row + l.fan_out]);
                    d_fused[i] = self.arch.feature_scale * dotp(w, g_out);
                }
            } else {
                let z_in = &tape[starts[li - 1]..starts[li - 1] + l.fan_in];
                for (gb, g) in grads[l.bias..l.bias + l.fan_out].iter_mut().zip(g_out) {
                    *gb += g;
                }
                for i in 0..l.fan_in {
                    let row = l.weights + i * l.fan_out;
                    if z_in[i] > 0.0 {
                        axpy(z_in[i], g_out, &mut grads[row..row + l.fan_out]);
                        next[i] = dotp(&self.params[row..row + l.fan_out], g_out);
                    } else {
                        next[i] = 0.0;
                    }
                }
                core::mem::swap(&mut cur, &mut next);
            }
        }
    }

    /// Apply the accumulated first-layer gradient of a ray to the bias and
    /// the direction-encoding weights, then clear it.
    pub fn finish_ray(&self, ctx: &mut RayContext, grads: &mut [f64]) {
        let l0 = self.layout[0];
        let f = self.arch.feature_width;
        for (gb, g) in grads[l0.bias..l0.bias + l0.fan_out].iter_mut().zip(&ctx.first_grad) {
            *gb += g;
        }
        for (i, e) in ctx.dir_enc.iter().enumerate() {
            let row = l0.weights + (f + i) * l0.fan_out;
            axpy(*e, &ctx.first_grad, &mut grads[row..row + l0.fan_out]);
        }
        ctx.first_grad.fill(0.0);
    }

    pub fn scratch_len(&self) -> usize {
        2 * self.layout.iter().map(|l| l.fan_out.max(l.fan_in)).max().unwrap_or(4)
    }

    /// Evaluate a single point without a tape.
    pub fn eval(&self, fused: &[f64], dir: Vec3) -> PointRadiance {
        let ctx = self.ray_context(dir);
        let mut tape = vec![0.0; self.arch.tape_len()];
        self.forward(&ctx, fused, &mut tape)
    }

    /// Evaluate a batch of fused features sharing one view direction.
    pub fn eval_batch(&self, fused: &FeatureBatch, dir: Vec3) -> Result<Vec<PointRadiance>> {
        if fused.width != self.arch.feature_width {
            bail!(Config, "MLP expects {} features, got {}", self.arch.feature_width, fused.width);
        }
        let ctx = self.ray_context(dir);
        let mut tape = vec![0.0; self.arch.tape_len()];
        Ok((0..fused.len()).map(|i| self.forward(&ctx, fused.row(i), &mut tape)).collect())
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dotp(a: &[f64], b: &[f64]) -> f64 {
    // four independent partial sums; fixed order keeps results reproducible
    let mut s = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for l in 0..4 {
            s[l] += a[4 * k + l] * b[4 * k + l];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}
