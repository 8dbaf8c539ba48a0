//! Pinhole cameras, ray marching through the unit cube and alpha compositing.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{bail, Result};
use crate::math::{self, Vec3};
use crate::mlp::PointRadiance;

/// Pinhole camera. Camera space looks down `-z` with `+y` up; pixel rows grow
/// downwards. `rotation` is world-from-camera (columns are the camera axes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        intrinsics: [f64; 4],
        rotation: [[f64; 3]; 3],
        translation: Vec3,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let [fx, fy, cx, cy] = intrinsics;
        if !(fx > 0.0 && fy > 0.0) {
            bail!(Config, "focal lengths must be positive");
        }
        if width == 0 || height == 0 {
            bail!(Config, "image size must be positive");
        }
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| rotation[k][i] * rotation[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > 1e-6 {
                    bail!(Config, "camera rotation is not orthonormal");
                }
            }
        }
        Ok(Self { fx, fy, cx, cy, rotation, translation, width, height })
    }

    /// Camera at `eye` looking at `target`, square pixels with the given
    /// horizontal field of view (radians) and the principal point centered.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_x: f64, width: usize, height: usize) -> Result<Self> {
        let back = math::normalize(math::sub(eye, target));
        let right = math::normalize(math::cross(up, back));
        let cam_up = math::cross(back, right);
        let rotation = [
            [right[0], cam_up[0], back[0]],
            [right[1], cam_up[1], back[1]],
            [right[2], cam_up[2], back[2]],
        ];
        let f = 0.5 * width as f64 / libm::tan(0.5 * fov_x);
        Self::new([f, f, 0.5 * width as f64, 0.5 * height as f64], rotation, eye, width, height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// World-space unit direction through the center of pixel `(u, v)`.
    pub fn pixel_direction(&self, u: usize, v: usize) -> Vec3 {
        let d = [
            (u as f64 + 0.5 - self.cx) / self.fx,
            -(v as f64 + 0.5 - self.cy) / self.fy,
            -1.0,
        ];
        let r = &self.rotation;
        math::normalize([
            r[0][0] * d[0] + r[0][1] * d[1] + r[0][2] * d[2],
            r[1][0] * d[0] + r[1][1] * d[1] + r[1][2] * d[2],
            r[2][0] * d[0] + r[2][1] * d[1] + r[2][2] * d[2],
        ])
    }

    pub fn ray(&self, pixel: usize) -> Option<Ray> {
        let dir = self.pixel_direction(pixel % self.width, pixel / self.width);
        let (near, far) = intersect_unit_cube(self.translation, dir)?;
        Some(Ray { origin: self.translation, dir, near, far, pixel })
    }
}

/// Slab test against `[0,1]^3`. Returns the entry/exit distances (entry
/// clamped to zero for origins inside the cube), or `None` on a miss.
pub fn intersect_unit_cube(origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < 0.0 || origin[a] > 1.0 {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut ta, mut tb) = ((0.0 - origin[a]) * inv, (1.0 - origin[a]) * inv);
        if ta > tb {
            core::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
    }
    let t0 = t0.max(0.0);
    if t0 < t1 {
        Some((t0, t1))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub near: f64,
    pub far: f64,
    pub pixel: usize,
}

impl Ray {
    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        [
            self.origin[0] + t * self.dir[0],
            self.origin[1] + t * self.dir[1],
            self.origin[2] + t * self.dir[2],
        ]
    }
}

/// Rays through the given pixel centers. Rays that miss the cube are dropped.
pub fn generate_rays(cam: &Camera, pixels: &[usize]) -> Result<Vec<Ray>> {
    if let Some(p) = pixels.iter().find(|&&p| p >= cam.pixel_count()) {
        bail!(Contract, "pixel {} outside a {}x{} image", p, cam.width, cam.height);
    }
    Ok(pixels.iter().filter_map(|&p| cam.ray(p)).collect())
}

/// Ordered samples along one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySamples {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
}

/// Fill `t`/`delta` with `n` samples on `[near, far]`: bin midpoints when
/// `rng` is `None`, one uniform draw per bin otherwise. The last spacing runs
/// to `far`.
#[inline]
pub fn sample_ray_into(ray: &Ray, n: usize, rng: Option<&mut dyn RngCore>, t: &mut [f64], delta: &mut [f64]) {
    let h = (ray.far - ray.near) / n as f64;
    match rng {
        None => {
            for (i, ti) in t[..n].iter_mut().enumerate() {
                *ti = ray.near + (i as f64 + 0.5) * h;
            }
        }
        Some(rng) => {
            for (i, ti) in t[..n].iter_mut().enumerate() {
                *ti = ray.near + (i as f64 + crate::rng::unit(rng)) * h;
            }
        }
    }
    for i in 0..n - 1 {
        delta[i] = t[i + 1] - t[i];
    }
    delta[n - 1] = ray.far - t[n - 1];
}

pub fn sample_points(rays: &[Ray], n: usize, mut rng: Option<&mut dyn RngCore>) -> Result<Vec<RaySamples>> {
    if n == 0 {
        bail!(Config, "need at least one sample per ray");
    }
    Ok(rays
        .iter()
        .map(|r| {
            let mut s = RaySamples { t: vec![0.0; n], delta: vec![0.0; n] };
            match rng.as_deref_mut() {
                Some(g) => sample_ray_into(r, n, Some(g), &mut s.t, &mut s.delta),
                None => sample_ray_into(r, n, None, &mut s.t, &mut s.delta),
            }
            s
        })
        .collect())
}

/// Result of compositing one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub rgb: [f64; 3],
    pub weights: Vec<f64>,
    /// Transmittance left after the last sample.
    pub residual: f64,
}

/// `C = sum_i T_i a_i c_i + T_{N+1} bg` with `a_i = 1 - exp(-sigma_i delta_i)`
/// and `T_i = prod_{j<i} (1 - a_j)`.
pub fn composite(colors: &[[f64; 3]], sigmas: &[f64], deltas: &[f64], background: [f64; 3]) -> Result<Composite> {
    if colors.len() != sigmas.len() || sigmas.len() != deltas.len() {
        bail!(Contract, "composite inputs have different lengths");
    }
    if sigmas.iter().chain(deltas).any(|v| !(*v >= 0.0)) {
        bail!(Contract, "negative density or spacing");
    }
    let mut weights = vec![0.0; sigmas.len()];
    let (rgb, residual) = composite_into(colors, sigmas, deltas, background, &mut weights);
    Ok(Composite { rgb, weights, residual })
}

/// Allocation-free compositing. Weights are `T_i - T_{i+1}`, which keeps the
/// total `sum w + T_{N+1}` equal to one up to rounding.
#[inline]
pub fn composite_into(
    colors: &[[f64; 3]],
    sigmas: &[f64],
    deltas: &[f64],
    background: [f64; 3],
    weights: &mut [f64],
) -> ([f64; 3], f64) {
    let mut rgb = [0.0; 3];
    let mut trans = 1.0;
    for i in 0..sigmas.len() {
        let next = trans * math::exp(-sigmas[i] * deltas[i]);
        let w = trans - next;
        weights[i] = w;
        for c in 0..3 {
            rgb[c] += w * colors[i][c];
        }
        trans = next;
    }
    for c in 0..3 {
        rgb[c] += trans * background[c];
    }
    (rgb, trans)
}

/// Backward of [`composite_into`] for upstream gradient `g = dL/dC`.
/// Writes `dL/dc_i` (which is `w_i g`) and `dL/dsigma_i`.
#[inline]
pub fn composite_backward(
    colors: &[[f64; 3]],
    deltas: &[f64],
    weights: &[f64],
    residual: f64,
    background: [f64; 3],
    g: [f64; 3],
    d_colors: &mut [[f64; 3]],
    d_sigmas: &mut [f64],
) {
    let n = weights.len();
    // suffix = sum_{i>k} w_i (g . c_i) + T_{N+1} (g . bg)
    let mut suffix = residual * (g[0] * background[0] + g[1] * background[1] + g[2] * background[2]);
    // T_{k+1} = T_{N+1} + sum_{i>k} w_i
    let mut t_next = residual;
    for k in (0..n).rev() {
        let gc = g[0] * colors[k][0] + g[1] * colors[k][1] + g[2] * colors[k][2];
        d_sigmas[k] = deltas[k] * (t_next * gc - suffix);
        d_colors[k] = [weights[k] * g[0], weights[k] * g[1], weights[k] * g[2]];
        suffix += weights[k] * gc;
        t_next += weights[k];
    }
}

/// An RGB image with values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn pixel(&self, i: usize) -> [f64; 3] {
        [self.data[3 * i], self.data[3 * i + 1], self.data[3 * i + 2]]
    }

    pub fn set_pixel(&mut self, i: usize, rgb: [f64; 3]) {
        for c in 0..3 {
            self.data[3 * i + c] = rgb[c].clamp(0.0, 1.0);
        }
    }

    /// `round(255 v)` clamped to a byte.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|v| math::round(255.0 * v).clamp(0.0, 255.0) as u8).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            bail!(Format, "expected {} bytes for a {}x{} image", width * height * 3, width, height);
        }
        Ok(Self { width, height, data: bytes.iter().map(|b| *b as f64 / 255.0).collect() })
    }
}

/// Peak signal-to-noise ratio with peak 1.0, capped at 99 dB.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if a.width != b.width || a.height != b.height || a.data.len() != b.data.len() {
        bail!(Contract, "cannot compare {}x{} with {}x{}", a.width, a.height, b.width, b.height);
    }
    Ok(psnr_from_mse(mse(&a.data, &b.data)))
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < 1e-10 {
        99.0
    } else {
        (10.0 * math::log10(1.0 / mse)).min(99.0)
    }
}

/// Anything that yields color and density at points along a ray.
pub trait RadianceField {
    /// Evaluate the points of one ray sharing the view direction `dir`.
    fn radiance(&self, pts: &[Vec3], dir: Vec3, out: &mut [PointRadiance]);
}

/// Deterministic renderer: bin-midpoint sampling with `samples` per ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub samples: usize,
    pub background: [f64; 3],
}

/// Render selected pixels; each entry is `(pixel, rgb)`. Pixels whose ray
/// misses the cube get the background.
pub fn render_pixels(field: &dyn RadianceField, cam: &Camera, pixels: &[usize], settings: RenderSettings) -> Vec<[f64; 3]> {
    let n = settings.samples.max(1);
    let mut t = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut pts = vec![[0.0; 3]; n];
    let mut rad = vec![PointRadiance { rgb: [0.0; 3], sigma: 0.0 }; n];
    let mut colors = vec![[0.0; 3]; n];
    let mut sigmas = vec![0.0; n];
    let mut weights = vec![0.0; n];
    pixels
        .iter()
        .map(|&p| match cam.ray(p) {
            None => settings.background,
            Some(ray) => {
                sample_ray_into(&ray, n, None, &mut t, &mut delta);
                for (pt, ti) in pts.iter_mut().zip(&t) {
                    *pt = ray.at(*ti);
                }
                field.radiance(&pts, ray.dir, &mut rad);
                for i in 0..n {
                    colors[i] = rad[i].rgb;
                    sigmas[i] = rad[i].sigma;
                }
                composite_into(&colors, &sigmas, &delta, settings.background, &mut weights).0
            }
        })
        .collect()
}

/// Full-frame render, processing pixels in batches of `batch` (the result
/// does not depend on the batch size).
pub fn render_image_batched(field: &dyn RadianceField, cam: &Camera, settings: RenderSettings, batch: usize) -> Image {
    let mut img = Image::filled(cam.width, cam.height, settings.background);
    let all: Vec<usize> = (0..cam.pixel_count()).collect();
    for chunk in all.chunks(batch.max(1)) {
        for (p, rgb) in chunk.iter().zip(render_pixels(field, cam, chunk, settings)) {
            img.set_pixel(*p, rgb);
        }
    }
    img
}

pub fn render_image(field: &dyn RadianceField, cam: &Camera, settings: RenderSettings) -> Image {
    render_image_batched(field, cam, settings, 4096)
}
