use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::error::{bail, Result};
use crate::math;
use crate::rate::bin_mass;

pub const FREQ_BITS: u32 = 16;
pub const FREQ_TOTAL: u32 = 1 << FREQ_BITS;

/// Integer frequencies over the symbol range `[vmin, vmax]`, summing to
/// [`FREQ_TOTAL`], each at least one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreqTable {
    vmin: i32,
    freqs: Vec<u32>,
    /// `cum[i]` is the sum of `freqs[..i]`; `cum.len() == freqs.len() + 1`.
    cum: Vec<u32>,
}

impl FreqTable {
    pub fn from_freqs(vmin: i32, freqs: Vec<u32>) -> Result<Self> {
        if freqs.is_empty() || freqs.iter().any(|f| *f == 0) {
            bail!(Config, "frequencies must be non-empty and positive");
        }
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        cum.push(0);
        for f in &freqs {
            acc = acc.checked_add(*f).ok_or_else(|| crate::Error::Config("frequency overflow".into()))?;
            cum.push(acc);
        }
        if acc != FREQ_TOTAL {
            bail!(Config, "frequencies sum to {}, expected {}", acc, FREQ_TOTAL);
        }
        Ok(Self { vmin, freqs, cum })
    }

    pub fn vmin(&self) -> i32 {
        self.vmin
    }

    pub fn vmax(&self) -> i32 {
        self.vmin + self.freqs.len() as i32 - 1
    }

    pub fn symbols(&self) -> usize {
        self.freqs.len()
    }

    pub fn freqs(&self) -> &[u32] {
        &self.freqs
    }

    /// `(cumulative start, frequency)` of a symbol, `None` when out of range.
    #[inline]
    pub fn lookup(&self, symbol: i32) -> Option<(u32, u32)> {
        let i = symbol.checked_sub(self.vmin)?;
        if i < 0 || i as usize >= self.freqs.len() {
            return None;
        }
        let i = i as usize;
        Some((self.cum[i], self.freqs[i]))
    }

    /// Symbol whose cumulative interval contains `target` (< FREQ_TOTAL).
    #[inline]
    pub fn find(&self, target: u32) -> (i32, u32, u32) {
        // first index with cum > target, minus one
        let i = self.cum.partition_point(|c| *c <= target) - 1;
        (self.vmin + i as i32, self.cum[i], self.freqs[i])
    }

    /// Cross-entropy in bits of `symbols` under this table.
    pub fn cross_entropy_bits(&self, symbols: &[i32]) -> f64 {
        symbols
            .iter()
            .map(|s| {
                let (_, f) = self.lookup(*s).expect("symbol in range");
                FREQ_BITS as f64 - math::log2(f as f64)
            })
            .sum()
    }
}

/// Discretize Laplace(mu, b) over the integer symbols `[vmin, vmax]`.
///
/// Bin masses are evaluated in double precision in symbol order, scaled to
/// [`FREQ_TOTAL`] by largest-remainder apportionment (ties to the lower
/// symbol), then every zero is raised to one by taking units from the
/// currently largest frequency. Encoder and decoder both call this with the
/// `f32`-rounded model, so their tables are identical.
pub fn build_freq_table(mu: f64, b: f64, vmin: i32, vmax: i32) -> Result<FreqTable> {
    if vmin > vmax {
        bail!(Config, "empty symbol range [{}, {}]", vmin, vmax);
    }
    if !(b > 0.0) || !mu.is_finite() || !b.is_finite() {
        bail!(Config, "invalid Laplace parameters mu={} b={}", mu, b);
    }
    let n = (vmax as i64 - vmin as i64 + 1) as usize;
    if n > FREQ_TOTAL as usize {
        bail!(Range, "symbol range of {} values exceeds {} frequencies", n, FREQ_TOTAL);
    }
    let mut mass: Vec<f64> = (0..n).map(|i| bin_mass((vmin as i64 + i as i64) as f64, mu, b)).collect();
    let mut total = 0.0;
    for m in &mass {
        total += m;
    }
    if !(total >= f64::MIN_POSITIVE) || !total.is_finite() {
        // every bin (nearly) underflowed: fall back to a flat table
        mass.fill(1.0);
        total = n as f64;
    }

    let mut freqs = vec![0u32; n];
    let mut rems = Vec::with_capacity(n);
    let mut assigned: u64 = 0;
    for (i, m) in mass.iter().enumerate() {
        let ideal = m / total * FREQ_TOTAL as f64;
        let fl = math::floor(ideal);
        freqs[i] = fl as u32;
        assigned += fl as u64;
        rems.push((ideal - fl, i));
    }
    let left = (FREQ_TOTAL as u64 - assigned) as usize;
    distribute_remainders(&mut freqs, rems, left);

    let zeros = freqs.iter().filter(|f| **f == 0).count();
    if zeros > 0 {
        let mut heap: BinaryHeap<(u32, Reverse<usize>)> =
            freqs.iter().enumerate().filter(|(_, f)| **f > 1).map(|(i, f)| (*f, Reverse(i))).collect();
        for f in freqs.iter_mut().filter(|f| **f == 0) {
            *f = 1;
        }
        for _ in 0..zeros {
            let (f, Reverse(i)) = heap.pop().expect("enough mass to lend");
            freqs[i] = f - 1;
            if f - 1 > 1 {
                heap.push((f - 1, Reverse(i)));
            }
        }
    }
    FreqTable::from_freqs(vmin, freqs)
}

/// Hand out `left` single units by descending remainder. Symbols with equal
/// remainders are served together or not at all, so symmetric masses stay
/// symmetric; a leftover unit is moved from the last served singleton to
/// complete a pair when that is possible. Each symbol gains at most one.
fn distribute_remainders(freqs: &mut [u32], mut rems: Vec<(f64, usize)>, mut left: usize) {
    if left == 0 {
        return;
    }
    rems.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let mut groups: Vec<&[(f64, usize)]> = Vec::new();
    let mut start = 0;
    for i in 1..=rems.len() {
        if i == rems.len() || rems[i].0 != rems[start].0 {
            groups.push(&rems[start..i]);
            start = i;
        }
    }
    let mut served = vec![false; groups.len()];
    for (g, group) in groups.iter().enumerate() {
        if left == 0 {
            break;
        }
        if group.len() <= left {
            served[g] = true;
            left -= group.len();
        }
    }
    if left > 0 {
        let last_single = (0..groups.len()).rev().find(|&g| served[g] && groups[g].len() == 1);
        let pending = (0..groups.len()).find(|&g| !served[g] && groups[g].len() == left + 1);
        if let (Some(s), Some(p)) = (last_single, pending) {
            served[s] = false;
            served[p] = true;
            left = 0;
        }
    }
    for (g, group) in groups.iter().enumerate() {
        if served[g] {
            for (_, i) in group.iter() {
                freqs[*i] += 1;
            }
        }
    }
    // last resort, breaks ties by symbol order
    for (g, group) in groups.iter().enumerate() {
        if served[g] {
            continue;
        }
        for (_, i) in group.iter() {
            if left == 0 {
                return;
            }
            freqs[*i] += 1;
            left -= 1;
        }
    }
}
