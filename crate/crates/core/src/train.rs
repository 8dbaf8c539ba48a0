//! Per-frame rate-distortion training and the group-of-frames encoder.
//!
//! An intra frame trains the coefficient grid, the basis pyramid and the MLP
//! from scratch. A predicted frame trains a coefficient grid and a residual
//! pyramid on top of the decoded basis of the previous frame, with the MLP
//! frozen. The objective for a batch of rays is
//!
//! ```text
//! sum_batch |C - C_hat|^2 + (batch / pool) * (rate_weight * bits + reg_weight * sum |R|)
//! ```
//!
//! where `pool` is the number of training rays of the frame, so the two
//! weights trade bits and residual magnitude against the squared error summed
//! over every training pixel.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::codec::{encode_grid, FrameKind, FrameRecord, Stream, TensorKind};
use crate::error::{bail, Result};
use crate::grid::{apply_residual, apply_residual_into, BasisPyramid, Grid3D, ResidualPyramid, Stencil};
use crate::math;
use crate::mlp::TinyMlp;
use crate::model::{FieldSet, FieldShapes};
use crate::optim::{AdamConfig, AdamState};
use crate::rate::{accumulate_rate, fit_laplace, rounded_bits, LaplaceModel};
use crate::render::{composite_backward, composite_into, sample_ray_into, Camera, Image, Ray};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the estimated bits.
    pub lambda_rate: f64,
    /// Weight of the residual L1 penalty.
    pub lambda_reg: f64,
    pub gof_length: usize,
    pub iters_intra: usize,
    pub iters_pred: usize,
    pub rays_per_batch: usize,
    pub samples: usize,
    pub lr_grid: f64,
    pub lr_mlp: f64,
    pub lr_laplace: f64,
    /// Learning rates decay geometrically to this fraction at the last iteration.
    pub lr_final_ratio: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Start each predicted frame from the previous trained coefficient grid.
    pub warm_start: bool,
    pub background: [f64; 3],
    /// Coefficient grids start near this value.
    pub coef_init: f64,
    /// Basis grids start uniform in `[-basis_init, basis_init]`.
    pub basis_init: f64,
    pub laplace_b_init: f64,
    /// Add uniform noise to interpolated features on the distortion path.
    pub feature_noise: bool,
    /// Rays stop marching once transmittance falls below this.
    pub stop_transmittance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_rate: 1e-4,
            lambda_reg: 1e-4,
            gof_length: 20,
            iters_intra: 4000,
            iters_pred: 1500,
            rays_per_batch: 4096,
            samples: 64,
            lr_grid: 0.02,
            lr_mlp: 1e-3,
            lr_laplace: 1e-3,
            lr_final_ratio: 1.0,
            adam: AdamConfig::default(),
            seed: 0,
            warm_start: true,
            background: [1.0; 3],
            coef_init: 1.0,
            basis_init: 1.0,
            laplace_b_init: 0.01,
            feature_noise: true,
            stop_transmittance: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_rate >= 0.0) || !(self.lambda_reg >= 0.0) {
            bail!(Config, "rate and regularization weights must be non-negative");
        }
        if self.gof_length == 0 || self.rays_per_batch == 0 || self.samples == 0 {
            bail!(Config, "gof length, rays per batch and samples must be positive");
        }
        for (name, lr) in [("grid", self.lr_grid), ("mlp", self.lr_mlp), ("laplace", self.lr_laplace)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                bail!(Config, "{} learning rate must be finite and non-negative", name);
            }
        }
        if !(self.lr_final_ratio > 0.0 && self.lr_final_ratio <= 1.0) {
            bail!(Config, "lr_final_ratio must lie in (0, 1]");
        }
        if !(self.laplace_b_init > 0.0) {
            bail!(Config, "initial Laplace scale must be positive");
        }
        Ok(())
    }

    fn lr_factor(&self, it: usize, iters: usize) -> f64 {
        if iters <= 1 {
            return 1.0;
        }
        libm::pow(self.lr_final_ratio, it as f64 / (iters - 1) as f64)
    }
}

/// A training view: camera plus ground-truth image.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub image: Image,
}

/// Training views of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameViews {
    pub views: Vec<View>,
}

/// Ordered frames to encode.
pub trait FrameSource {
    fn frame_count(&self) -> usize;
    fn train_views(&self, frame: usize) -> Result<FrameViews>;
}

/// A ray through the cube with its target color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayTarget {
    pub ray: Ray,
    pub rgb: [f64; 3],
}

/// Every training ray of a frame that hits the cube.
pub fn ray_pool(views: &FrameViews) -> Result<Vec<RayTarget>> {
    let mut pool = Vec::new();
    for v in &views.views {
        if v.image.width != v.camera.width || v.image.height != v.camera.height {
            bail!(Config, "image {}x{} does not match its camera", v.image.width, v.image.height);
        }
        for p in 0..v.camera.pixel_count() {
            if let Some(ray) = v.camera.ray(p) {
                pool.push(RayTarget { ray, rgb: v.image.pixel(p) });
            }
        }
    }
    Ok(pool)
}

/// Trainable state of one frame. `grids` are basis levels for intra frames
/// and residual levels for predicted frames; `models` holds the coefficient
/// model first, then one per level.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameParams {
    pub coef: Grid3D,
    pub grids: Vec<Grid3D>,
    pub mlp: TinyMlp,
    pub models: Vec<LaplaceModel>,
}

/// Gradients matching [`FrameParams`]; model gradients are wrt `(mu, log_b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub coef: Vec<f64>,
    pub grids: Vec<Vec<f64>>,
    pub mlp: Vec<f64>,
    pub models: Vec<[f64; 2]>,
}

impl Grads {
    pub fn zeros_like(p: &FrameParams) -> Self {
        Self {
            coef: vec![0.0; p.coef.len()],
            grids: p.grids.iter().map(|g| vec![0.0; g.len()]).collect(),
            mlp: vec![0.0; p.mlp.params().len()],
            models: vec![[0.0; 2]; p.models.len()],
        }
    }

    fn clear(&mut self) {
        self.coef.fill(0.0);
        for g in &mut self.grids {
            g.fill(0.0);
        }
        self.mlp.fill(0.0);
        self.models.fill([0.0; 2]);
    }
}

/// Which frame type is being trained.
#[derive(Debug, Clone, Copy)]
pub enum Stage<'a> {
    Intra,
    /// The basis is `prev + residual`; the MLP is frozen.
    Predicted { prev: &'a BasisPyramid },
}

/// Weights and rendering settings of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub rate_weight: f64,
    pub reg_weight: f64,
    /// Multiplier of the rate and regularization terms (batch size over pool size).
    pub prior_scale: f64,
    pub samples: usize,
    pub background: [f64; 3],
    pub feature_noise: bool,
    pub stratified: bool,
    pub stop_transmittance: f64,
}

/// Loss components of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    /// Sum of squared color errors over the batch.
    pub distortion: f64,
    /// Estimated bits of all coded grids.
    pub rate_bits: f64,
    /// Sum of absolute residual values.
    pub reg: f64,
    pub loss: f64,
}

/// Squared error plus weighted rate and regularization terms.
pub fn total_loss(distortion: f64, rate_bits: f64, reg: f64, obj: &Objective) -> f64 {
    distortion + obj.prior_scale * (obj.rate_weight * rate_bits + obj.reg_weight * reg)
}

struct Workspace {
    t: Vec<f64>,
    delta: Vec<f64>,
    tapes: Vec<f64>,
    c: Vec<f64>,
    b: Vec<f64>,
    cst: Vec<Stencil>,
    bst: Vec<Stencil>,
    colors: Vec<[f64; 3]>,
    sigmas: Vec<f64>,
    weights: Vec<f64>,
    d_colors: Vec<[f64; 3]>,
    d_sigmas: Vec<f64>,
    d_fused: Vec<f64>,
    d_part: Vec<f64>,
    fused: Vec<f64>,
    scratch: Vec<f64>,
    noise: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, width: usize, levels: usize, mlp: &TinyMlp) -> Self {
        Self {
            t: vec![0.0; n],
            delta: vec![0.0; n],
            tapes: vec![0.0; n * mlp.arch().tape_len()],
            c: vec![0.0; n * width],
            b: vec![0.0; n * width],
            cst: vec![Stencil::default(); n],
            bst: vec![Stencil::default(); n * levels],
            colors: vec![[0.0; 3]; n],
            sigmas: vec![0.0; n],
            weights: vec![0.0; n],
            d_colors: vec![[0.0; 3]; n],
            d_sigmas: vec![0.0; n],
            d_fused: vec![0.0; width],
            d_part: vec![0.0; width],
            fused: vec![0.0; width],
            scratch: vec![0.0; mlp.scratch_len()],
            noise: vec![0.0; 2 * n * width],
        }
    }
}

/// Loss and gradients of one ray batch. `basis` is the effective basis
/// (equal to `params.grids` for intra frames, `prev + params.grids`
/// otherwise). Gradients are added to `grads`, which is cleared first.
pub fn evaluate_batch(
    params: &FrameParams,
    basis: &BasisPyramid,
    stage: Stage,
    rays: &[RayTarget],
    obj: &Objective,
    rng: &mut Rng,
    grads: &mut Grads,
) -> StepStats {
    grads.clear();
    let n = obj.samples;
    let width = params.coef.channels();
    let levels = basis.levels().len();
    let tl = params.mlp.arch().tape_len();
    let mut ws = Workspace::new(n, width, levels, &params.mlp);
    let mut distortion = 0.0;

    for target in rays {
        let ray = &target.ray;
        if obj.stratified {
            sample_ray_into(ray, n, Some(rng), &mut ws.t, &mut ws.delta);
        } else {
            sample_ray_into(ray, n, None, &mut ws.t, &mut ws.delta);
        }
        if obj.feature_noise {
            for z in ws.noise.iter_mut() {
                *z = rng::unit(rng) - 0.5;
            }
        }
        let mut ctx = params.mlp.ray_context(ray.dir);
        let mut trans = 1.0;
        let mut m = n;
        for k in 0..n {
            let p = ray.at(ws.t[k]);
            let c = &mut ws.c[k * width..(k + 1) * width];
            let b = &mut ws.b[k * width..(k + 1) * width];
            ws.cst[k] = params.coef.stencil(p);
            params.coef.gather(&ws.cst[k], c);
            let bst = &mut ws.bst[k * levels..(k + 1) * levels];
            basis.stencils(p, bst);
            basis.gather(bst, b);
            if obj.feature_noise {
                let z = &ws.noise[2 * k * width..2 * (k + 1) * width];
                for j in 0..width {
                    c[j] += z[j];
                    b[j] += z[width + j];
                }
            }
            for j in 0..width {
                ws.fused[j] = c[j] * b[j];
            }
            let out = params.mlp.forward(&ctx, &ws.fused, &mut ws.tapes[k * tl..(k + 1) * tl]);
            ws.colors[k] = out.rgb;
            ws.sigmas[k] = out.sigma;
            trans *= math::exp(-out.sigma * ws.delta[k]);
            if trans < obj.stop_transmittance {
                m = k + 1;
                break;
            }
        }
        let (rgb, residual) = composite_into(&ws.colors[..m], &ws.sigmas[..m], &ws.delta[..m], obj.background, &mut ws.weights[..m]);
        let mut g = [0.0; 3];
        for c in 0..3 {
            let e = rgb[c] - target.rgb[c];
            distortion += e * e;
            g[c] = 2.0 * e;
        }
        composite_backward(
            &ws.colors[..m],
            &ws.delta[..m],
            &ws.weights[..m],
            residual,
            obj.background,
            g,
            &mut ws.d_colors[..m],
            &mut ws.d_sigmas[..m],
        );
        for k in 0..m {
            params.mlp.backward(
                &mut ctx,
                &ws.tapes[k * tl..(k + 1) * tl],
                ws.d_colors[k],
                ws.d_sigmas[k],
                &mut grads.mlp,
                &mut ws.d_fused,
                &mut ws.scratch,
            );
            let c = &ws.c[k * width..(k + 1) * width];
            let b = &ws.b[k * width..(k + 1) * width];
            for j in 0..width {
                ws.d_part[j] = ws.d_fused[j] * b[j];
            }
            Grid3D::scatter(width, &ws.cst[k], &ws.d_part, &mut grads.coef);
            for j in 0..width {
                ws.d_part[j] = ws.d_fused[j] * c[j];
            }
            let mut at = 0;
            for (l, lvl) in basis.levels().iter().enumerate() {
                let ch = lvl.grid.channels();
                Grid3D::scatter(ch, &ws.bst[k * levels + l], &ws.d_part[at..at + ch], &mut grads.grids[l]);
                at += ch;
            }
        }
        params.mlp.finish_ray(&mut ctx, &mut grads.mlp);
    }

    let w_rate = obj.prior_scale * obj.rate_weight;
    let mut rate_bits = 0.0;
    let tensors = core::iter::once(&params.coef).chain(params.grids.iter());
    let grad_bufs = core::iter::once(&mut grads.coef).chain(grads.grids.iter_mut());
    for (((grid, model), gbuf), mg) in tensors.zip(&params.models).zip(grad_bufs).zip(grads.models.iter_mut()) {
        let (bits, gmu, glb) = accumulate_rate(grid.values(), model, w_rate, rng, gbuf);
        rate_bits += bits;
        *mg = [gmu, glb];
    }

    let mut reg = 0.0;
    if let Stage::Predicted { .. } = stage {
        let w_reg = obj.prior_scale * obj.reg_weight;
        for (grid, gbuf) in params.grids.iter().zip(grads.grids.iter_mut()) {
            for (v, gv) in grid.values().iter().zip(gbuf.iter_mut()) {
                reg += math::abs(*v);
                *gv += w_reg * crate::grid::sign(*v);
            }
        }
    }
    let loss = total_loss(distortion, rate_bits, reg, obj);
    StepStats { distortion, rate_bits, reg, loss }
}

/// The basis a stage renders with: `params.grids` for intra frames,
/// `prev + params.grids` for predicted ones. `template` supplies the level
/// frequencies of intra frames.
pub fn effective_basis(params: &FrameParams, stage: Stage, template: &BasisPyramid) -> Result<BasisPyramid> {
    match stage {
        Stage::Intra => {
            let mut basis = template.clone();
            if basis.levels().len() != params.grids.len() {
                bail!(Config, "{} basis grids for {} levels", params.grids.len(), basis.levels().len());
            }
            for (lvl, g) in basis.levels_mut().iter_mut().zip(&params.grids) {
                if !lvl.grid.same_shape(g) {
                    bail!(Config, "basis grid shape differs from its level");
                }
                lvl.grid = g.clone();
            }
            Ok(basis)
        }
        Stage::Predicted { prev } => apply_residual(prev, &ResidualPyramid::new(params.grids.clone())),
    }
}

/// Relative L2 error between analytic gradients and central differences,
/// per parameter class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradientErrors {
    pub coef: f64,
    pub grids: f64,
    pub mlp: f64,
    pub mu: f64,
    pub log_b: f64,
}

impl GradientErrors {
    pub fn worst(&self) -> f64 {
        [self.coef, self.grids, self.mlp, self.mu, self.log_b].into_iter().fold(0.0, f64::max)
    }
}

/// Check [`evaluate_batch`] against central differences of its own loss with
/// step `h`. Every evaluation replays the generator seeded with `seed`, so
/// stratified offsets and noise are the same for all of them.
pub fn gradient_errors(
    params: &FrameParams,
    stage: Stage,
    template: &BasisPyramid,
    rays: &[RayTarget],
    obj: &Objective,
    seed: u64,
    h: f64,
) -> Result<GradientErrors> {
    let loss = |p: &FrameParams| -> Result<f64> {
        let basis = effective_basis(p, stage, template)?;
        let mut g = Grads::zeros_like(p);
        Ok(evaluate_batch(p, &basis, stage, rays, obj, &mut rng::seeded(seed), &mut g).loss)
    };
    let basis = effective_basis(params, stage, template)?;
    let mut analytic = Grads::zeros_like(params);
    evaluate_batch(params, &basis, stage, rays, obj, &mut rng::seeded(seed), &mut analytic);

    let mut p = params.clone();
    let central = |p: &mut FrameParams, get: &dyn Fn(&mut FrameParams) -> &mut f64| -> Result<f64> {
        let x = *get(p);
        *get(p) = x + h;
        let up = loss(p)?;
        *get(p) = x - h;
        let down = loss(p)?;
        *get(p) = x;
        Ok((up - down) / (2.0 * h))
    };
    let rel = |a: &[f64], n: &[f64]| {
        let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum();
        let scale: f64 = n.iter().map(|y| y * y).sum();
        math::sqrt(diff) / math::sqrt(scale).max(1e-300)
    };

    let mut num = Vec::with_capacity(p.coef.len());
    for i in 0..p.coef.len() {
        num.push(central(&mut p, &|q| &mut q.coef.values_mut()[i])?);
    }
    let coef = rel(&analytic.coef, &num);

    let (mut a_all, mut n_all) = (Vec::new(), Vec::new());
    for l in 0..p.grids.len() {
        for i in 0..p.grids[l].len() {
            n_all.push(central(&mut p, &|q| &mut q.grids[l].values_mut()[i])?);
        }
        a_all.extend_from_slice(&analytic.grids[l]);
    }
    let grids = rel(&a_all, &n_all);

    let mut num = Vec::with_capacity(p.mlp.params().len());
    for i in 0..p.mlp.params().len() {
        num.push(central(&mut p, &|q| &mut q.mlp.params_mut()[i])?);
    }
    let mlp = rel(&analytic.mlp, &num);

    let (mut n_mu, mut n_lb) = (Vec::new(), Vec::new());
    for m in 0..p.models.len() {
        n_mu.push(central(&mut p, &|q| &mut q.models[m].mu)?);
        n_lb.push(central(&mut p, &|q| &mut q.models[m].log_b)?);
    }
    let a_mu: Vec<f64> = analytic.models.iter().map(|g| g[0]).collect();
    let a_lb: Vec<f64> = analytic.models.iter().map(|g| g[1]).collect();
    Ok(GradientErrors { coef, grids, mlp, mu: rel(&a_mu, &n_mu), log_b: rel(&a_lb, &n_lb) })
}

/// Result of training one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedFrame {
    pub params: FrameParams,
    pub trace: Vec<StepStats>,
}

fn objective(cfg: &TrainConfig, pool: usize) -> Objective {
    Objective {
        rate_weight: cfg.lambda_rate,
        reg_weight: cfg.lambda_reg,
        prior_scale: cfg.rays_per_batch as f64 / pool.max(1) as f64,
        samples: cfg.samples,
        background: cfg.background,
        feature_noise: cfg.feature_noise,
        stratified: true,
        stop_transmittance: cfg.stop_transmittance,
    }
}

struct Optimizers {
    coef: AdamState,
    grids: Vec<AdamState>,
    mlp: Option<AdamState>,
    models: Vec<AdamState>,
}

fn optimize(
    mut params: FrameParams,
    stage: Stage,
    template: BasisPyramid,
    pool: &[RayTarget],
    cfg: &TrainConfig,
    iters: usize,
    rng: &mut Rng,
) -> Result<TrainedFrame> {
    if pool.is_empty() {
        bail!(Config, "no training ray hits the scene volume");
    }
    let obj = objective(cfg, pool.len());
    let mut opt = Optimizers {
        coef: AdamState::new(params.coef.len(), cfg.adam),
        grids: params.grids.iter().map(|g| AdamState::new(g.len(), cfg.adam)).collect(),
        mlp: match stage {
            Stage::Intra => Some(AdamState::new(params.mlp.params().len(), cfg.adam)),
            Stage::Predicted { .. } => None,
        },
        models: params.models.iter().map(|_| AdamState::new(2, cfg.adam)).collect(),
    };
    let mut grads = Grads::zeros_like(&params);
    // same level shapes and frequencies as the trained grids; values are refreshed every iteration
    let mut basis = template;
    let mut batch = Vec::with_capacity(cfg.rays_per_batch);
    let mut trace = Vec::with_capacity(iters);
    for it in 0..iters {
        match stage {
            Stage::Intra => {
                for (lvl, g) in basis.levels_mut().iter_mut().zip(&params.grids) {
                    lvl.grid.values_mut().copy_from_slice(g.values());
                }
            }
            Stage::Predicted { prev } => {
                apply_residual_into(prev, &ResidualPyramid::new(params.grids.clone()), &mut basis);
            }
        }
        batch.clear();
        for _ in 0..cfg.rays_per_batch {
            batch.push(pool[rng::below(rng, pool.len())]);
        }
        let stats = evaluate_batch(&params, &basis, stage, &batch, &obj, rng, &mut grads);
        if !stats.loss.is_finite() {
            bail!(Range, "training diverged at iteration {}", it);
        }
        trace.push(stats);
        let f = cfg.lr_factor(it, iters);
        opt.coef.step(params.coef.values_mut(), &grads.coef, cfg.lr_grid * f)?;
        for ((g, o), gr) in params.grids.iter_mut().zip(opt.grids.iter_mut()).zip(&grads.grids) {
            o.step(g.values_mut(), gr, cfg.lr_grid * f)?;
        }
        if let Some(o) = &mut opt.mlp {
            o.step(params.mlp.params_mut(), &grads.mlp, cfg.lr_mlp * f)?;
        }
        for ((m, o), gm) in params.models.iter_mut().zip(opt.models.iter_mut()).zip(&grads.models) {
            let mut p = [m.mu, m.log_b];
            o.step(&mut p, gm, cfg.lr_laplace * f)?;
            m.mu = p[0];
            m.log_b = p[1];
            m.clamp();
        }
        if it % 100 == 0 || it + 1 == iters {
            log::debug!(
                "iter {:5} loss {:.5} distortion {:.5} bits {:.0} reg {:.1}",
                it,
                stats.loss,
                stats.distortion,
                stats.rate_bits,
                stats.reg
            );
        }
    }
    Ok(TrainedFrame { params, trace })
}

fn uniform_grid(dims: [usize; 3], channels: usize, lo: f64, hi: f64, rng: &mut Rng) -> Result<Grid3D> {
    let n = dims.iter().product::<usize>() * channels;
    Grid3D::from_values(dims, channels, (0..n).map(|_| rng::uniform(rng, lo, hi)).collect())
}

/// Fresh intra-frame parameters.
pub fn init_intra(shapes: &FieldShapes, cfg: &TrainConfig, rng: &mut Rng) -> Result<FrameParams> {
    shapes.validate()?;
    let c0 = cfg.coef_init;
    let coef = uniform_grid(shapes.coef_dims, shapes.coef_channels, 0.9 * c0, 1.1 * c0, rng)?;
    let grids = shapes
        .levels
        .iter()
        .map(|l| uniform_grid(l.dims, l.channels, -cfg.basis_init, cfg.basis_init, rng))
        .collect::<Result<Vec<_>>>()?;
    let mlp = TinyMlp::init(shapes.mlp_arch(), rng)?;
    let models = vec![LaplaceModel::new(0.0, cfg.laplace_b_init); 1 + shapes.levels.len()];
    Ok(FrameParams { coef, grids, mlp, models })
}

/// Train an intra frame from scratch.
pub fn train_iframe(views: &FrameViews, shapes: &FieldShapes, cfg: &TrainConfig, rng: &mut Rng) -> Result<TrainedFrame> {
    cfg.validate()?;
    if views.views.is_empty() {
        bail!(Config, "an intra frame needs at least one training view");
    }
    let pool = ray_pool(views)?;
    let params = init_intra(shapes, cfg, rng)?;
    optimize(params, Stage::Intra, shapes.zero_basis()?, &pool, cfg, cfg.iters_intra, rng)
}

/// Starting point of a predicted frame's coefficient grid and its model.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub coef: Grid3D,
    pub model: LaplaceModel,
}

/// Train a predicted frame against the decoded buffer. The buffer is only read.
pub fn train_pframe(
    views: &FrameViews,
    buffer: Option<&DecodedFrameBuffer>,
    shapes: &FieldShapes,
    warm: Option<&WarmStart>,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainedFrame> {
    cfg.validate()?;
    let Some(buffer) = buffer else {
        bail!(Contract, "a predicted frame needs a decoded frame buffer");
    };
    if views.views.is_empty() {
        bail!(Config, "a predicted frame needs at least one training view");
    }
    let pool = ray_pool(views)?;
    let (coef, coef_model) = match warm {
        Some(w) if cfg.warm_start => (w.coef.clone(), w.model),
        _ => {
            let c0 = cfg.coef_init;
            (
                uniform_grid(shapes.coef_dims, shapes.coef_channels, 0.9 * c0, 1.1 * c0, rng)?,
                LaplaceModel::new(0.0, cfg.laplace_b_init),
            )
        }
    };
    let residual = ResidualPyramid::zeros_like(&buffer.basis);
    let mut models = vec![coef_model];
    models.extend(core::iter::repeat(LaplaceModel::new(0.0, cfg.laplace_b_init)).take(shapes.levels.len()));
    let params = FrameParams { coef, grids: residual.levels().to_vec(), mlp: buffer.mlp.clone(), models };
    optimize(params, Stage::Predicted { prev: &buffer.basis }, buffer.basis.clone(), &pool, cfg, cfg.iters_pred, rng)
}

pub use crate::codec::DecodedFrameBuffer;

/// What the encoder knows about a finished frame.
pub struct FrameReport<'a> {
    pub index: usize,
    pub kind: FrameKind,
    /// The frame exactly as the decoder will reconstruct it.
    pub decoded: &'a FieldSet,
    /// Trained (unquantized) parameters.
    pub trained: &'a FrameParams,
    pub record: &'a FrameRecord,
    pub trace: &'a [StepStats],
}

/// Estimated bits of each trained grid with noise replaced by rounding, under
/// the `f32` models written to the stream. Coefficient grid first.
pub fn rounded_rate(params: &FrameParams) -> Vec<f64> {
    core::iter::once(&params.coef)
        .chain(params.grids.iter())
        .zip(&params.models)
        .map(|(g, m)| {
            let (mu, b) = m.to_f32();
            let stored = LaplaceModel { mu: mu as f64, log_b: math::ln(b as f64) };
            rounded_bits(g.values(), &stored)
        })
        .collect()
}

/// Encode a whole sequence, calling `observe` after every frame.
pub fn encode_sequence(
    source: &dyn FrameSource,
    shapes: &FieldShapes,
    cfg: &TrainConfig,
    observe: &mut dyn FnMut(&FrameReport),
) -> Result<Stream> {
    cfg.validate()?;
    shapes.validate()?;
    let frames = source.frame_count();
    let header = shapes.to_header(cfg.gof_length, cfg.background, cfg.samples);
    let mut records = Vec::with_capacity(frames);
    let mut buffer: Option<DecodedFrameBuffer> = None;
    let mut warm: Option<WarmStart> = None;
    for t in 0..frames {
        let views = source.train_views(t)?;
        let mut rng = rng::substream(cfg.seed, t as u64);
        let kind = if t % cfg.gof_length == 0 { FrameKind::Intra } else { FrameKind::Predicted };
        log::info!("frame {} ({}) training", t, kind.letter());
        let mut trained = match kind {
            FrameKind::Intra => train_iframe(&views, shapes, cfg, &mut rng)?,
            FrameKind::Predicted => train_pframe(&views, buffer.as_ref(), shapes, warm.as_ref(), cfg, &mut rng)?,
        };
        if cfg.lambda_rate == 0.0 {
            // without a rate term the models never moved; fit them to the result
            let p = &mut trained.params;
            let fitted: Vec<LaplaceModel> =
                core::iter::once(&p.coef).chain(p.grids.iter()).map(|g| fit_laplace(g.values())).collect();
            p.models = fitted;
        }
        let p = &trained.params;
        let (coef_rec, coef_dec) = encode_grid(TensorKind::Coefficient, 0, &p.coef, &p.models[0])?;
        let mut tensors = vec![coef_rec];
        let mut decoded_levels = Vec::with_capacity(p.grids.len());
        let tensor_kind = if kind == FrameKind::Intra { TensorKind::Basis } else { TensorKind::Residual };
        for (l, (g, m)) in p.grids.iter().zip(&p.models[1..]).enumerate() {
            let (rec, dec) = encode_grid(tensor_kind, l as u8, g, m)?;
            tensors.push(rec);
            decoded_levels.push(dec);
        }
        let (basis, mlp, mlp_raw) = match kind {
            FrameKind::Intra => {
                let mut basis = shapes.zero_basis()?;
                for (lvl, g) in basis.levels_mut().iter_mut().zip(decoded_levels) {
                    lvl.grid = g;
                }
                let mut mlp = p.mlp.clone();
                mlp.round_to_f32();
                let raw: Vec<f32> = mlp.params().iter().map(|v| *v as f32).collect();
                (basis, mlp, Some(raw))
            }
            FrameKind::Predicted => {
                let prev = buffer.as_ref().expect("predicted frames follow a buffer");
                let basis = apply_residual(&prev.basis, &ResidualPyramid::new(decoded_levels))?;
                (basis, prev.mlp.clone(), None)
            }
        };
        let record = FrameRecord { kind, tensors, mlp: mlp_raw };
        let decoded = FieldSet::new(coef_dec, basis.clone(), mlp.clone())?;
        log::debug!("frame {} ({}) coded in {} bytes", t, kind.letter(), record.encoded_len());
        observe(&FrameReport { index: t, kind, decoded: &decoded, trained: p, record: &record, trace: &trained.trace });
        buffer = Some(DecodedFrameBuffer { basis, mlp });
        warm = Some(WarmStart { coef: p.coef.clone(), model: p.models[0] });
        records.push(record);
    }
    Ok(Stream { header, frames: records })
}

/// Exponential moving average of the loss trace.
pub fn smoothed_loss(trace: &[StepStats], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(trace.len());
    let mut acc = None;
    for s in trace {
        let v = match acc {
            None => s.loss,
            Some(a) => alpha * s.loss + (1.0 - alpha) * a,
        };
        acc = Some(v);
        out.push(v);
    }
    out
}

/// An in-memory frame source.
pub struct MemorySource {
    pub frames: Vec<FrameViews>,
}

impl FrameSource for MemorySource {
    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn train_views(&self, frame: usize) -> Result<FrameViews> {
        self.frames.get(frame).cloned().ok_or_else(|| crate::Error::Config(alloc::format!("no frame {}", frame)))
    }
}

/// Boxed closure frame source, convenient for generated data.
pub struct FnSource<'a> {
    pub count: usize,
    pub make: Box<dyn Fn(usize) -> Result<FrameViews> + 'a>,
}

impl FrameSource for FnSource<'_> {
    fn frame_count(&self) -> usize {
        self.count
    }

    fn train_views(&self, frame: usize) -> Result<FrameViews> {
        (self.make)(frame)
    }
}
