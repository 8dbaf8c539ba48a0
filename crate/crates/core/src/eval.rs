//! Rate-distortion bookkeeping: per-frame metrics, RD curves, Bjøntegaard
//! delta rate and bitrate allocation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::codec::{decode_sequence, ByteBreakdown, FrameKind, Stream};
use crate::error::{bail, Result};
use crate::math;
use crate::render::{psnr, render_image, RenderSettings};
use crate::train::View;

/// One operating point: mean bits per frame and mean PSNR on train and test views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub rate_bits: f64,
    pub psnr_train: f64,
    pub psnr_test: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RdCurve {
    pub label: String,
    pub points: Vec<RdPoint>,
}

/// Which PSNR a comparison uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quality {
    Train,
    Test,
}

impl RdPoint {
    pub fn quality(&self, q: Quality) -> f64 {
        match q {
            Quality::Train => self.psnr_train,
            Quality::Test => self.psnr_test,
        }
    }
}

/// Least-squares polynomial `sum c_k x^k` of the given degree.
fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    let m = degree + 1;
    let mut a = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for (&xi, &yi) in x.iter().zip(y) {
        let mut pows = vec![1.0; 2 * m];
        for k in 1..2 * m {
            pows[k] = pows[k - 1] * xi;
        }
        for r in 0..m {
            rhs[r] += pows[r] * yi;
            for c in 0..m {
                a[r * m + c] += pows[r + c];
            }
        }
    }
    // Gaussian elimination with partial pivoting
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i * m + col].abs().total_cmp(&a[j * m + col].abs())).unwrap_or(col);
        if a[piv * m + col].abs() < 1e-300 {
            bail!(Contract, "degenerate curve: repeated quality values");
        }
        if piv != col {
            for c in 0..m {
                a.swap(piv * m + c, col * m + c);
            }
            rhs.swap(piv, col);
        }
        for r in col + 1..m {
            let f = a[r * m + col] / a[col * m + col];
            for c in col..m {
                a[r * m + c] -= f * a[col * m + c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut coef = vec![0.0; m];
    for r in (0..m).rev() {
        let mut s = rhs[r];
        for c in r + 1..m {
            s -= a[r * m + c] * coef[c];
        }
        coef[r] = s / a[r * m + r];
    }
    Ok(coef)
}

fn poly_integral(coef: &[f64], lo: f64, hi: f64) -> f64 {
    let anti = |x: f64| coef.iter().enumerate().rev().fold(0.0, |acc, (k, c)| acc * x + c / (k + 1) as f64) * x;
    anti(hi) - anti(lo)
}

/// Log-rate fit of a curve against quality, in centred coordinates.
struct Fit {
    coef: Vec<f64>,
    lo: f64,
    hi: f64,
}

fn fit_curve(c: &RdCurve, q: Quality, center: f64) -> Result<Fit> {
    if c.points.len() < 2 {
        bail!(Contract, "curve '{}' needs at least two points", c.label);
    }
    if c.points.iter().any(|p| !(p.rate_bits > 0.0) || !p.quality(q).is_finite()) {
        bail!(Contract, "curve '{}' has a non-positive rate or non-finite quality", c.label);
    }
    let x: Vec<f64> = c.points.iter().map(|p| p.quality(q) - center).collect();
    let y: Vec<f64> = c.points.iter().map(|p| math::ln(p.rate_bits)).collect();
    let degree = (c.points.len() - 1).min(3);
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Fit { coef: polyfit(&x, &y, degree)?, lo, hi })
}

/// Bjøntegaard delta rate of `test` against `anchor` in percent: cubic fits
/// of log rate over PSNR, averaged over the common PSNR interval. Negative
/// means `test` needs fewer bits for the same quality.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve, q: Quality) -> Result<f64> {
    for c in [anchor, test] {
        if c.points.len() < 4 {
            log::warn!("curve '{}' has {} points; BD-rate is more reliable with four or more", c.label, c.points.len());
        }
    }
    let all = anchor.points.iter().chain(&test.points).map(|p| p.quality(q));
    let n = (anchor.points.len() + test.points.len()).max(1) as f64;
    let center = all.sum::<f64>() / n;
    let a = fit_curve(anchor, q, center)?;
    let t = fit_curve(test, q, center)?;
    let lo = a.lo.max(t.lo);
    let hi = a.hi.min(t.hi);
    if !(hi > lo) {
        bail!(Contract, "curves '{}' and '{}' share no PSNR interval", anchor.label, test.label);
    }
    let diff = (poly_integral(&t.coef, lo, hi) - poly_integral(&a.coef, lo, hi)) / (hi - lo);
    Ok(100.0 * (math::exp(diff) - 1.0))
}

/// Bytes per stream component with percentages of the total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationReport {
    pub bytes: ByteBreakdown,
}

impl AllocationReport {
    pub fn new(stream: &Stream) -> Self {
        Self { bytes: stream.breakdown() }
    }

    /// `(name, bytes, percent)` rows in the order meta, MLP, coefficient, basis.
    pub fn rows(&self) -> [(&'static str, usize, f64); 4] {
        let b = &self.bytes;
        let total = b.total().max(1) as f64;
        let pct = |x: usize| 100.0 * x as f64 / total;
        [
            ("meta", b.meta, pct(b.meta)),
            ("mlp", b.mlp, pct(b.mlp)),
            ("coefficient", b.coefficient, pct(b.coefficient)),
            ("basis", b.basis, pct(b.basis)),
        ]
    }
}

/// Metrics of one decoded frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    pub frame: usize,
    pub kind: FrameKind,
    /// Bits of the frame record.
    pub bits: u64,
    pub psnr_train: f64,
    pub psnr_test: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub frames: Vec<FrameMetrics>,
    /// Length of the serialized stream.
    pub stream_bytes: usize,
    pub point: RdPoint,
}

/// Ground truth for evaluation.
pub trait EvalSource {
    fn frame_count(&self) -> usize;
    /// Train and test views of a frame.
    fn eval_views(&self, frame: usize) -> Result<(Vec<View>, Vec<View>)>;
}

/// Mean PSNR of a field rendered from each view; NaN without views.
pub fn mean_psnr(field: &crate::model::FieldSet, views: &[View], settings: RenderSettings) -> Result<f64> {
    if views.is_empty() {
        return Ok(f64::NAN);
    }
    let mut s = 0.0;
    for v in views {
        s += psnr(&render_image(field, &v.camera, settings), &v.image)?;
    }
    Ok(s / views.len() as f64)
}

/// Decode a stream, render every frame from the train and test views and
/// average the PSNRs. The rate is the serialized stream size over the frame
/// count, so header bytes are included.
pub fn evaluate_stream(stream: &Stream, source: &dyn EvalSource) -> Result<SequenceReport> {
    if source.frame_count() != stream.frames.len() {
        bail!(Contract, "stream has {} frames, dataset has {}", stream.frames.len(), source.frame_count());
    }
    let settings = RenderSettings { samples: stream.header.render_samples as usize, background: stream.header.background };
    let decoded = decode_sequence(stream)?;
    let mut frames = Vec::with_capacity(decoded.len());
    for (i, (d, rec)) in decoded.iter().zip(&stream.frames).enumerate() {
        let (train, test) = source.eval_views(i)?;
        frames.push(FrameMetrics {
            frame: i,
            kind: d.kind,
            bits: rec.bits(),
            psnr_train: mean_psnr(&d.fields, &train, settings)?,
            psnr_test: mean_psnr(&d.fields, &test, settings)?,
        });
        log::debug!("evaluated frame {}: {:.2} / {:.2} dB", i, frames[i].psnr_train, frames[i].psnr_test);
    }
    let stream_bytes = stream.breakdown().total();
    Ok(SequenceReport { point: summarize(&frames, stream_bytes), frames, stream_bytes })
}

/// Mean PSNRs of per-frame metrics; the rate is `8 * total_bytes / frames`.
pub fn summarize(frames: &[FrameMetrics], total_bytes: usize) -> RdPoint {
    let n = frames.len().max(1) as f64;
    RdPoint {
        rate_bits: 8.0 * total_bytes as f64 / n,
        psnr_train: frames.iter().map(|f| f.psnr_train).sum::<f64>() / n,
        psnr_test: frames.iter().map(|f| f.psnr_test).sum::<f64>() / n,
    }
}
