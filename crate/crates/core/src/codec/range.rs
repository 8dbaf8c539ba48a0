//! Byte-oriented range coder with carry propagation over 16-bit frequency
//! tables. The coding loop is integer-only.

use alloc::vec;
use alloc::vec::Vec;

use super::freq::{FreqTable, FREQ_BITS};
use crate::error::{bail, Result};

const TOP: u64 = 1 << 56;

pub struct RangeEncoder {
    low: u128,
    range: u64,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self { low: 0, range: u64::MAX, cache: 0, cache_size: 1, out: Vec::new() }
    }

    #[inline]
    pub fn encode(&mut self, cum: u32, freq: u32) {
        let r = self.range >> FREQ_BITS;
        self.low += r as u128 * cum as u128;
        self.range = r * freq as u64;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u64) < 0xFF00_0000_0000_0000 || (self.low >> 64) != 0 {
            let carry = (self.low >> 64) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 56) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF_FFFF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..9 {
            self.shift_low();
        }
        // the first emitted byte is always the initial zero cache
        self.out.remove(0);
        self.out
    }
}

pub struct RangeDecoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    code: u64,
    range: u64,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self> {
        if bytes.len() < 8 {
            bail!(Decode, "range payload of {} bytes is truncated", bytes.len());
        }
        let mut head = [0u8; 8];
        head.copy_from_slice(&bytes[..8]);
        Ok(Self { bytes, pos: 8, code: u64::from_be_bytes(head), range: u64::MAX })
    }

    #[inline]
    pub fn decode(&mut self, table: &FreqTable) -> Result<i32> {
        let r = self.range >> FREQ_BITS;
        let target = (self.code / r).min((1 << FREQ_BITS) - 1) as u32;
        let (sym, cum, freq) = table.find(target);
        self.code -= r * cum as u64;
        self.range = r * freq as u64;
        if self.code >= self.range {
            bail!(Decode, "range payload inconsistent with its frequency table");
        }
        while self.range < TOP {
            let Some(&b) = self.bytes.get(self.pos) else {
                bail!(Decode, "range payload truncated at byte {}", self.pos);
            };
            self.pos += 1;
            self.code = (self.code << 8) | b as u64;
            self.range <<= 8;
        }
        Ok(sym)
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

/// Encode `symbols` under `table`. Empty inputs and single-symbol tables
/// carry no information and produce an empty payload.
pub fn range_encode(symbols: &[i32], table: &FreqTable) -> Result<Vec<u8>> {
    for s in symbols {
        if table.lookup(*s).is_none() {
            bail!(Range, "symbol {} outside table range [{}, {}]", s, table.vmin(), table.vmax());
        }
    }
    if symbols.is_empty() || table.symbols() == 1 {
        return Ok(Vec::new());
    }
    let mut enc = RangeEncoder::new();
    for s in symbols {
        let (cum, freq) = table.lookup(*s).expect("checked above");
        enc.encode(cum, freq);
    }
    Ok(enc.finish())
}

/// Decode exactly `n` symbols; the payload must be consumed exactly.
pub fn range_decode(bytes: &[u8], table: &FreqTable, n: usize) -> Result<Vec<i32>> {
    if n == 0 || table.symbols() == 1 {
        if !bytes.is_empty() {
            bail!(Decode, "expected an empty payload, found {} bytes", bytes.len());
        }
        return Ok(vec![table.vmin(); n]);
    }
    let mut dec = RangeDecoder::new(bytes)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(dec.decode(table)?);
    }
    if dec.consumed() != bytes.len() {
        bail!(Decode, "{} trailing bytes after range payload", bytes.len() - dec.consumed());
    }
    Ok(out)
}
