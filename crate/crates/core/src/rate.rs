//! Simulated quantization and the Laplace rate estimate.
//!
//! Training replaces rounding by additive uniform noise and charges each
//! grid entry `-log2 P(y)` bits, where `P` is the mass a Laplace(mu, b)
//! assigns to the unit bin around the noisy value. Each tensor owns its own
//! model; `b` is kept in log space so that gradient steps cannot make it
//! negative.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::math;
use crate::rng::unit;

/// Smallest probability charged for a symbol (32 bits).
pub const P_MIN: f64 = 1.0 / 4_294_967_296.0;
pub const B_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceModel {
    pub mu: f64,
    /// Natural log of the scale.
    pub log_b: f64,
}

impl LaplaceModel {
    pub fn new(mu: f64, b: f64) -> Self {
        Self { mu, log_b: math::ln(b.max(B_MIN)) }
    }

    pub fn b(&self) -> f64 {
        math::exp(self.log_b).max(B_MIN)
    }

    pub fn clamp(&mut self) {
        let lo = math::ln(B_MIN);
        if self.log_b < lo {
            self.log_b = lo;
        }
    }

    /// The model as it travels in the bitstream (both fields as `f32`).
    pub fn to_f32(&self) -> (f32, f32) {
        (self.mu as f32, self.b() as f32)
    }

    pub fn from_f32(mu: f32, b: f32) -> Self {
        Self::new(mu as f64, b as f64)
    }
}

impl Default for LaplaceModel {
    /// `mu = 0`, `b = 0.01`.
    fn default() -> Self {
        Self::new(0.0, 0.01)
    }
}

pub fn laplace_cdf(x: f64, mu: f64, b: f64) -> f64 {
    let z = (x - mu) / b;
    if z < 0.0 {
        0.5 * math::exp(z)
    } else {
        1.0 - 0.5 * math::exp(-z)
    }
}

/// Mass of the unit bin centred on `y`, `F(y + 1/2) - F(y - 1/2)`.
///
/// Evaluated on the lower half of the distribution (reflecting `y` about
/// `mu`) so the upper tail does not cancel catastrophically; the result is
/// exactly symmetric about `mu`. Not floored.
#[inline]
pub fn bin_mass(y: f64, mu: f64, b: f64) -> f64 {
    bin_mass_grad(y, mu, b).0
}

/// [`bin_mass`] with its partial derivatives `(p, dp/dy, dp/dmu, dp/db)`.
#[inline]
pub fn bin_mass_grad(y: f64, mu: f64, b: f64) -> (f64, f64, f64, f64) {
    let d = y - mu;
    let z = -math::abs(d);
    let hi = z + 0.5;
    let lo = z - 0.5;
    // lower endpoint is always below the mean
    let e_lo = math::exp(lo / b);
    let g_lo = 0.5 * e_lo / b;
    let (c_hi, g_hi) = if hi < 0.0 {
        let e = math::exp(hi / b);
        (0.5 * e, 0.5 * e / b)
    } else {
        let e = math::exp(-hi / b);
        (1.0 - 0.5 * e, 0.5 * e / b)
    };
    let p = c_hi - 0.5 * e_lo;
    let dp_dz = g_hi - g_lo;
    let dp_dd = if d > 0.0 {
        -dp_dz
    } else if d < 0.0 {
        dp_dz
    } else {
        0.0
    };
    // dF(x)/db = -x f(x) / b on both halves
    let dp_db = (-hi * g_hi + lo * g_lo) / b;
    (p, dp_dd, -dp_dd, dp_db)
}

/// Probability the model assigns to the quantized value, floored at [`P_MIN`].
pub fn pmf(y_tilde: f64, model: &LaplaceModel) -> f64 {
    bin_mass(y_tilde, model.mu, model.b()).max(P_MIN)
}

/// `y + U[-1/2, 1/2)` per entry.
pub fn simulate_quantize(values: &[f64], rng: &mut impl RngCore) -> Vec<f64> {
    values.iter().map(|v| v + unit(rng) - 0.5).collect()
}

/// A named tensor subject to the rate loss, with its entropy model.
#[derive(Debug, Clone)]
pub struct BundleEntry<'a> {
    pub name: String,
    pub values: &'a [f64],
    pub model: LaplaceModel,
}

/// All tensors whose rate is charged for one frame.
#[derive(Debug, Clone, Default)]
pub struct TensorBundle<'a> {
    pub entries: Vec<BundleEntry<'a>>,
}

impl<'a> TensorBundle<'a> {
    pub fn push(&mut self, name: impl Into<String>, values: &'a [f64], model: LaplaceModel) {
        self.entries.push(BundleEntry { name: name.into(), values, model });
    }

    pub fn entry_count(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }
}

/// Rate estimate and its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RateLoss {
    /// Mean bits per entry over the whole bundle.
    pub bits_per_entry: f64,
    /// Total estimated bits (`bits_per_entry * N`).
    pub total_bits: f64,
    /// Per tensor estimated bits.
    pub tensor_bits: Vec<f64>,
    /// d(bits_per_entry)/d(entry), one buffer per tensor.
    pub value_grads: Vec<Vec<f64>>,
    /// d(bits_per_entry)/d(mu) and d(bits_per_entry)/d(log b) per tensor.
    pub model_grads: Vec<(f64, f64)>,
}

const INV_LN2: f64 = core::f64::consts::LOG2_E;

/// Accumulate bits and gradients for one tensor at the given (already
/// perturbed or rounded) values. Gradients are of total bits, unscaled.
fn tensor_bits_grad(values: &[f64], noise: Option<&[f64]>, model: &LaplaceModel, grad: &mut [f64]) -> (f64, f64, f64) {
    let b = model.b();
    let mu = model.mu;
    let mut bits = 0.0;
    let mut g_mu = 0.0;
    let mut g_b = 0.0;
    for (i, v) in values.iter().enumerate() {
        let y = match noise {
            Some(n) => v + n[i],
            None => *v,
        };
        let (p, dy, dmu, db) = bin_mass_grad(y, mu, b);
        if p > P_MIN {
            bits -= math::log2(p);
            let s = -INV_LN2 / p;
            grad[i] = s * dy;
            g_mu += s * dmu;
            g_b += s * db;
        } else {
            bits += 32.0;
            grad[i] = 0.0;
        }
    }
    // chain through b = exp(log_b); the clamp at B_MIN has zero slope
    let g_log_b = if math::exp(model.log_b) > B_MIN { g_b * b } else { 0.0 };
    (bits, g_mu, g_log_b)
}

/// Mean bits per entry of the bundle under simulated quantization, with
/// gradients wrt every entry (through the noisy value) and every model.
pub fn rate_loss(bundle: &TensorBundle, rng: &mut impl RngCore) -> RateLoss {
    let noise: Vec<Vec<f64>> = bundle
        .entries
        .iter()
        .map(|e| (0..e.values.len()).map(|_| unit(rng) - 0.5).collect())
        .collect();
    rate_loss_with_noise(bundle, Some(&noise))
}

/// [`rate_loss`] with explicit noise (`None` evaluates the values as given).
pub fn rate_loss_with_noise(bundle: &TensorBundle, noise: Option<&[Vec<f64>]>) -> RateLoss {
    let n = bundle.entry_count().max(1) as f64;
    let mut out = RateLoss {
        bits_per_entry: 0.0,
        total_bits: 0.0,
        tensor_bits: Vec::with_capacity(bundle.entries.len()),
        value_grads: Vec::with_capacity(bundle.entries.len()),
        model_grads: Vec::with_capacity(bundle.entries.len()),
    };
    for (k, e) in bundle.entries.iter().enumerate() {
        let mut g = vec![0.0; e.values.len()];
        let nz = noise.map(|n| n[k].as_slice());
        let (bits, g_mu, g_lb) = tensor_bits_grad(e.values, nz, &e.model, &mut g);
        for v in &mut g {
            *v /= n;
        }
        out.total_bits += bits;
        out.tensor_bits.push(bits);
        out.value_grads.push(g);
        out.model_grads.push((g_mu / n, g_lb / n));
    }
    out.bits_per_entry = out.total_bits / n;
    out
}

/// Estimated bits of a tensor with noise replaced by true rounding.
pub fn rounded_bits(values: &[f64], model: &LaplaceModel) -> f64 {
    let b = model.b();
    values
        .iter()
        .map(|v| -math::log2(bin_mass(math::round(*v), model.mu, b).max(P_MIN)))
        .sum()
}

/// Post-hoc model for an already trained tensor: the median of the rounded
/// values and the scale minimizing [`rounded_bits`] (golden-section search
/// over `log b`).
pub fn fit_laplace(values: &[f64]) -> LaplaceModel {
    if values.is_empty() {
        return LaplaceModel::default();
    }
    let mut sorted: Vec<f64> = values.iter().map(|v| math::round(*v)).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mu = sorted[sorted.len() / 2];
    let cost = |log_b: f64| rounded_bits(values, &LaplaceModel { mu, log_b });
    let (mut lo, mut hi) = (math::ln(1e-3), math::ln(1e4));
    let g = (math::sqrt(5.0) - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..48 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = cost(x2);
        }
    }
    LaplaceModel { mu, log_b: if f1 <= f2 { x1 } else { x2 } }
}

/// Per-tensor constants for fast bit costs under one Laplace model.
///
/// Outside the central bin the cost is affine in the distance to the mean,
/// `(d - 1/2) / (b ln 2) - log2((1 - exp(-1/b)) / 2)`, so only entries whose
/// bin straddles the mean need transcendental functions.
#[derive(Debug, Clone, Copy)]
pub struct BinCost {
    mu: f64,
    b: f64,
    slope: f64,
    tail: f64,
    tail_db: f64,
}

impl BinCost {
    pub fn new(model: &LaplaceModel) -> Self {
        let b = model.b();
        let e = math::exp(-1.0 / b);
        let q = -libm::expm1(-1.0 / b);
        Self {
            mu: model.mu,
            b,
            slope: INV_LN2 / b,
            tail: 1.0 - math::log2(q),
            tail_db: INV_LN2 * e / (b * b * q),
        }
    }

    /// `(bits, d bits/dy, d bits/db)` of the bin centred on `y`, with the
    /// probability floored at [`P_MIN`] (zero gradient there).
    #[inline]
    pub fn eval(&self, y: f64) -> (f64, f64, f64) {
        let diff = y - self.mu;
        let d = math::abs(diff);
        let sgn = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        let b = self.b;
        if d >= 0.5 {
            let bits = (d - 0.5) * self.slope + self.tail;
            if bits >= 32.0 {
                return (32.0, 0.0, 0.0);
            }
            let db = -(d - 0.5) * self.slope / b + self.tail_db;
            (bits, sgn * self.slope, db)
        } else {
            let a = math::exp((d - 0.5) / b);
            let c = math::exp(-(d + 0.5) / b);
            let p = 1.0 - 0.5 * (a + c);
            if p <= P_MIN {
                return (32.0, 0.0, 0.0);
            }
            let dp_dd = -(a - c) / (2.0 * b);
            let dp_db = -0.5 * (a * (0.5 - d) + c * (d + 0.5)) / (b * b);
            let s = -INV_LN2 / p;
            (-math::log2(p), s * sgn * dp_dd, s * dp_db)
        }
    }
}

/// Accumulate total-bit gradients for one tensor in place, for the training
/// loop: adds `weight * d(bits)/d(entry)` to `grad` and returns
/// `(bits, weight * d/dmu, weight * d/dlog_b)`.
pub fn accumulate_rate(
    values: &[f64],
    model: &LaplaceModel,
    weight: f64,
    rng: &mut impl RngCore,
    grad: &mut [f64],
) -> (f64, f64, f64) {
    let cost = BinCost::new(model);
    let mut bits = 0.0;
    let mut g_mu = 0.0;
    let mut g_b = 0.0;
    for (v, gv) in values.iter().zip(grad.iter_mut()) {
        let y = v + unit(rng) - 0.5;
        let (e, dy, db) = cost.eval(y);
        bits += e;
        *gv += weight * dy;
        g_mu -= dy;
        g_b += db;
    }
    let g_log_b = if math::exp(model.log_b) > B_MIN { g_b * cost.b } else { 0.0 };
    (bits, weight * g_mu, weight * g_log_b)
}
