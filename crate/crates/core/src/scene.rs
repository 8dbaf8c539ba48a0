//! Analytic dynamic scene of moving Gaussian density blobs, its ground-truth
//! renderer and the fixed camera rig used for synthetic datasets.

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math::{self, Vec3};
use crate::mlp::PointRadiance;
use crate::render::{render_image, Camera, Image, RadianceField, RenderSettings};

/// A blob whose center follows `base + amplitude * sin(omega * t + phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub base: Vec3,
    pub amplitude: Vec3,
    /// Angular speed in radians per frame.
    pub omega: f64,
    pub phase: f64,
    pub peak: f64,
    pub radius: f64,
    pub color: [f64; 3],
}

impl Blob {
    pub fn center(&self, t: f64) -> Vec3 {
        let s = math::sin(self.omega * t + self.phase);
        [
            self.base[0] + self.amplitude[0] * s,
            self.base[1] + self.amplitude[1] * s,
            self.base[2] + self.amplitude[2] * s,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobScene {
    pub blobs: Vec<Blob>,
    pub background: [f64; 3],
    pub frames: usize,
}

impl BlobScene {
    pub fn new(blobs: Vec<Blob>, background: [f64; 3], frames: usize) -> Result<Self> {
        for (i, b) in blobs.iter().enumerate() {
            if !(b.radius > 0.0) || !(b.peak >= 0.0) {
                bail!(Config, "blob {} needs a positive radius and non-negative peak", i);
            }
            // the sinusoid reaches base +- amplitude, so checking both ends covers every frame
            for a in 0..3 {
                let reach = b.amplitude[a].abs();
                if b.base[a] - reach < 0.0 || b.base[a] + reach > 1.0 {
                    bail!(Config, "blob {} leaves the unit cube", i);
                }
            }
        }
        Ok(Self { blobs, background, frames })
    }

    /// The three-blob scene used for acceptance runs.
    pub fn acceptance(frames: usize) -> Self {
        let w = 2.0 * core::f64::consts::PI / 40.0;
        let blobs = alloc::vec![
            Blob {
                base: [0.38, 0.50, 0.45],
                amplitude: [0.10, 0.05, 0.0],
                omega: w,
                phase: 0.0,
                peak: 30.0,
                radius: 0.11,
                color: [0.90, 0.25, 0.15],
            },
            Blob {
                base: [0.62, 0.45, 0.56],
                amplitude: [0.0, 0.08, 0.08],
                omega: w,
                phase: 1.0,
                peak: 25.0,
                radius: 0.12,
                color: [0.20, 0.75, 0.30],
            },
            Blob {
                base: [0.50, 0.66, 0.48],
                amplitude: [0.08, 0.0, -0.06],
                omega: w,
                phase: 2.0,
                peak: 40.0,
                radius: 0.09,
                color: [0.20, 0.30, 0.90],
            },
        ];
        Self { blobs, background: [1.0; 3], frames }
    }

    /// The same blobs frozen in place.
    pub fn frozen(&self) -> Self {
        let mut s = self.clone();
        for b in &mut s.blobs {
            b.base = b.center(0.0);
            b.amplitude = [0.0; 3];
        }
        s
    }

    /// Largest center displacement between consecutive frames.
    pub fn max_step(&self) -> f64 {
        let mut m: f64 = 0.0;
        for t in 1..self.frames.max(1) {
            for b in &self.blobs {
                m = m.max(math::norm(math::sub(b.center(t as f64), b.center((t - 1) as f64))));
            }
        }
        m
    }
}

/// Color and density of the scene at `x` and frame `t`.
pub fn oracle_field(scene: &BlobScene, x: Vec3, t: f64) -> PointRadiance {
    let mut sigma = 0.0;
    let mut rgb = [0.0; 3];
    for b in &scene.blobs {
        let d = math::sub(x, b.center(t));
        let s = b.peak * math::exp(-math::dot(d, d) / (2.0 * b.radius * b.radius));
        sigma += s;
        for c in 0..3 {
            rgb[c] += s * b.color[c];
        }
    }
    if sigma < 1e-9 {
        return PointRadiance { rgb: scene.background, sigma };
    }
    for c in &mut rgb {
        *c /= sigma;
    }
    PointRadiance { rgb, sigma }
}

/// The scene at one instant as a [`RadianceField`].
pub struct OracleField<'a> {
    pub scene: &'a BlobScene,
    pub t: f64,
}

impl RadianceField for OracleField<'_> {
    fn radiance(&self, pts: &[Vec3], _dir: Vec3, out: &mut [PointRadiance]) {
        for (p, o) in pts.iter().zip(out.iter_mut()) {
            *o = oracle_field(self.scene, *p, self.t);
        }
    }
}

/// Ground-truth image: the model's compositing with `samples` midpoints.
pub fn oracle_render(scene: &BlobScene, cam: &Camera, t: usize, samples: usize) -> Image {
    let field = OracleField { scene, t: t as f64 };
    render_image(&field, cam, RenderSettings { samples, background: scene.background })
}

/// Camera ring geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rig {
    pub views: usize,
    pub radius: f64,
    /// Elevations of the two rings, radians.
    pub elevations: [f64; 2],
    pub fov_x: f64,
    pub width: usize,
    pub height: usize,
}

impl Rig {
    pub fn acceptance(resolution: usize) -> Self {
        Self { views: 20, radius: 2.5, elevations: [0.25, 0.75], fov_x: 0.8, width: resolution, height: resolution }
    }

    /// Views around the cube center. View `k` takes azimuth slot
    /// `(7k) mod views` and the ring given by the slot's parity, so any run
    /// of consecutive view indices (in particular the held-out tail) is
    /// spread around the scene.
    pub fn cameras(&self) -> Result<Vec<Camera>> {
        if self.views == 0 {
            bail!(Config, "rig needs at least one view");
        }
        let center = [0.5; 3];
        let step = if self.views % 7 == 0 { 1 } else { 7 };
        (0..self.views)
            .map(|k| {
                let slot = (k * step) % self.views;
                let az = 2.0 * core::f64::consts::PI * slot as f64 / self.views as f64;
                let el = self.elevations[slot % 2];
                let eye = [
                    center[0] + self.radius * math::cos(el) * math::sin(az),
                    center[1] + self.radius * math::sin(el),
                    center[2] + self.radius * math::cos(el) * math::cos(az),
                ];
                Camera::look_at(eye, center, [0.0, 1.0, 0.0], self.fov_x, self.width, self.height)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn single(peak: f64) -> BlobScene {
        BlobScene::new(
            vec![Blob { base: [0.5; 3], amplitude: [0.0; 3], omega: 0.0, phase: 0.0, peak, radius: 0.1, color: [1.0, 0.0, 0.0] }],
            [1.0; 3],
            1,
        )
        .unwrap()
    }

    #[test]
    fn field_examples() {
        let s = single(7.0);
        assert!(oracle_field(&s, [0.0, 0.0, 0.0], 0.0).sigma < 1e-9);
        assert_eq!(oracle_field(&s, [0.0, 0.0, 0.0], 0.0).rgb, [1.0; 3]);
        assert_eq!(oracle_field(&s, [0.5; 3], 0.0).sigma, 7.0);
        let mut two = s.clone();
        two.blobs.push(Blob { base: [0.6, 0.5, 0.5], ..s.blobs[0].clone() });
        let x = [0.55, 0.5, 0.5];
        let want = 2.0 * 7.0 * (-(0.05f64 * 0.05) / (2.0 * 0.01)).exp();
        assert!((oracle_field(&two, x, 0.0).sigma - want).abs() < 1e-12);
    }

    #[test]
    fn rejects_escaping_blobs() {
        let mut b = single(1.0).blobs[0].clone();
        b.amplitude = [0.6, 0.0, 0.0];
        assert!(BlobScene::new(vec![b.clone()], [1.0; 3], 3).is_err());
        b.amplitude = [0.0; 3];
        b.radius = 0.0;
        assert!(BlobScene::new(vec![b], [1.0; 3], 3).is_err());
    }

    #[test]
    fn acceptance_scene_moves_slowly() {
        let s = BlobScene::acceptance(40);
        assert!(BlobScene::new(s.blobs.clone(), s.background, 40).is_ok());
        assert!(s.max_step() <= 0.02 && s.max_step() > 0.0);
        assert_eq!(s.frozen().max_step(), 0.0);
    }

    #[test]
    fn empty_scene_renders_background() {
        let s = BlobScene::new(vec![], [0.2, 0.4, 0.6], 1).unwrap();
        let cam = Rig::acceptance(8).cameras().unwrap()[0];
        let img = oracle_render(&s, &cam, 0, 16);
        assert_eq!(img, Image::filled(8, 8, [0.2, 0.4, 0.6]));
    }

    #[test]
    fn quadrature_has_converged() {
        let s = BlobScene::acceptance(2);
        let cams = Rig::acceptance(24).cameras().unwrap();
        for cam in [&cams[0], &cams[17]] {
            let a = oracle_render(&s, cam, 1, 256);
            let b = oracle_render(&s, cam, 1, 512);
            let worst = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-3, "{worst}");
        }
    }

    #[test]
    fn centred_blob_is_radially_symmetric() {
        let s = single(30.0);
        let cam = Camera::look_at([0.5, 0.5, 3.0], [0.5; 3], [0.0, 1.0, 0.0], 0.6, 21, 21).unwrap();
        let img = oracle_render(&s, &cam, 0, 128);
        let px = |u: usize, v: usize| img.pixel(v * 21 + u);
        for (du, dv) in [(3usize, 0usize), (2, 5), (6, 1)] {
            let a = px(10 + du, 10 + dv);
            for b in [px(10 - du, 10 - dv), px(10 + dv, 10 + du), px(10 - dv, 10 + du)] {
                for c in 0..3 {
                    assert!((a[c] - b[c]).abs() < 1e-9, "{a:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn rig_spreads_views() {
        let cams = Rig::acceptance(16).cameras().unwrap();
        assert_eq!(cams.len(), 20);
        for c in &cams {
            let d = math::norm(math::sub(c.translation, [0.5; 3]));
            assert!((d - 2.5).abs() < 1e-12);
            assert!(c.translation[1] > 0.5);
        }
        // held-out tail covers different azimuth quadrants
        let quadrant = |c: &Camera| ((libm::atan2(c.translation[0] - 0.5, c.translation[2] - 0.5) + 4.0) / 1.5708) as i32;
        let mut q: Vec<i32> = cams[16..].iter().map(quadrant).collect();
        q.sort();
        q.dedup();
        assert!(q.len() >= 3);
    }
}
