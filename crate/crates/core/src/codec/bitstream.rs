//! The `.nvv` container: a stream header followed by frame records. All
//! integers are little-endian. See FORMAT.md for the byte layout.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{bail, Result};

pub const MAGIC: [u8; 4] = *b"NVVC";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelShape {
    pub dims: [u32; 3],
    pub channels: u32,
    pub frequency: u32,
}

impl LevelShape {
    pub fn entries(&self) -> usize {
        self.dims.iter().map(|d| *d as usize).product::<usize>() * self.channels as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub coef_dims: [u32; 3],
    pub coef_channels: u32,
    pub levels: Vec<LevelShape>,
    pub hidden: Vec<u32>,
    pub direction_octaves: u32,
    pub feature_scale: f64,
    pub gof_length: u32,
    pub background: [f64; 3],
    pub render_samples: u32,
}

impl StreamHeader {
    pub fn coef_entries(&self) -> usize {
        self.coef_dims.iter().map(|d| *d as usize).product::<usize>() * self.coef_channels as usize
    }

    fn encoded_len(&self) -> usize {
        4 + 2 + 12 + 4 + 1 + 20 * self.levels.len() + 1 + 4 * self.hidden.len() + 4 + 8 + 4 + 24 + 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Intra,
    Predicted,
}

impl FrameKind {
    fn code(self) -> u8 {
        match self {
            FrameKind::Intra => 0,
            FrameKind::Predicted => 1,
        }
    }

    pub fn letter(self) -> char {
        match self {
            FrameKind::Intra => 'I',
            FrameKind::Predicted => 'P',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Coefficient,
    Basis,
    Residual,
}

impl TensorKind {
    fn code(self) -> u8 {
        match self {
            TensorKind::Coefficient => 0,
            TensorKind::Basis => 1,
            TensorKind::Residual => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => TensorKind::Coefficient,
            1 => TensorKind::Basis,
            2 => TensorKind::Residual,
            _ => bail!(Format, "unknown tensor kind {}", c),
        })
    }
}

/// One entropy-coded grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub kind: TensorKind,
    /// Pyramid level for basis and residual grids, zero otherwise.
    pub level: u8,
    pub mu: f32,
    pub b: f32,
    pub vmin: i32,
    pub vmax: i32,
    pub payload: Vec<u8>,
}

/// Bytes of a tensor sub-record that are not payload.
pub const TENSOR_META_BYTES: usize = 1 + 1 + 4 + 4 + 4 + 4 + 4;
/// Bytes of a frame record before its tensors.
pub const FRAME_META_BYTES: usize = 1 + 4 + 2;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub kind: FrameKind,
    pub tensors: Vec<TensorRecord>,
    /// Raw MLP parameters, present on intra frames only.
    pub mlp: Option<Vec<f32>>,
}

impl FrameRecord {
    /// Size of the record on disk.
    pub fn encoded_len(&self) -> usize {
        FRAME_META_BYTES
            + self.tensors.iter().map(|t| TENSOR_META_BYTES + t.payload.len()).sum::<usize>()
            + self.mlp.as_ref().map_or(0, |m| 4 + 4 * m.len())
    }

    pub fn bits(&self) -> u64 {
        8 * self.encoded_len() as u64
    }
}

struct Writer<'a>(&'a mut Vec<u8>);

impl Writer<'_> {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

/// Bounds-checked little-endian reader.
pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            bail!(Format, "truncated {} at byte {}: need {}, have {}", what, self.pos, n, self.remaining());
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N, what)?);
        Ok(a)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
    fn i32(&mut self, what: &str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array(what)?))
    }
    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array(what)?))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }
}

pub fn write_header(h: &StreamHeader, out: &mut Vec<u8>) -> Result<()> {
    if h.levels.len() > u8::MAX as usize || h.hidden.len() > u8::MAX as usize {
        bail!(Config, "too many pyramid levels or hidden layers for the header");
    }
    let mut w = Writer(out);
    w.0.extend_from_slice(&MAGIC);
    w.u16(FORMAT_VERSION);
    for d in h.coef_dims {
        w.u32(d);
    }
    w.u32(h.coef_channels);
    w.u8(h.levels.len() as u8);
    for l in &h.levels {
        for d in l.dims {
            w.u32(d);
        }
        w.u32(l.channels);
        w.u32(l.frequency);
    }
    w.u8(h.hidden.len() as u8);
    for x in &h.hidden {
        w.u32(*x);
    }
    w.u32(h.direction_octaves);
    w.f64(h.feature_scale);
    w.u32(h.gof_length);
    for c in h.background {
        w.f64(c);
    }
    w.u32(h.render_samples);
    Ok(())
}

pub fn read_header(r: &mut Reader) -> Result<StreamHeader> {
    let magic: [u8; 4] = r.array("magic")?;
    if magic != MAGIC {
        bail!(Format, "bad magic {:?}", magic);
    }
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        bail!(Format, "unsupported format version {}", version);
    }
    let coef_dims = [r.u32("coef dims")?, r.u32("coef dims")?, r.u32("coef dims")?];
    let coef_channels = r.u32("coef channels")?;
    let nl = r.u8("level count")? as usize;
    let mut levels = Vec::with_capacity(nl);
    for _ in 0..nl {
        let dims = [r.u32("level dims")?, r.u32("level dims")?, r.u32("level dims")?];
        levels.push(LevelShape { dims, channels: r.u32("level channels")?, frequency: r.u32("level frequency")? });
    }
    let nh = r.u8("hidden count")? as usize;
    let mut hidden = Vec::with_capacity(nh);
    for _ in 0..nh {
        hidden.push(r.u32("hidden width")?);
    }
    let h = StreamHeader {
        coef_dims,
        coef_channels,
        levels,
        hidden,
        direction_octaves: r.u32("direction octaves")?,
        feature_scale: r.f64("feature scale")?,
        gof_length: r.u32("gof length")?,
        background: [r.f64("background")?, r.f64("background")?, r.f64("background")?],
        render_samples: r.u32("render samples")?,
    };
    if h.coef_dims.iter().chain(h.levels.iter().flat_map(|l| l.dims.iter())).any(|d| *d < 2) {
        bail!(Format, "grid dimensions below 2 in header");
    }
    if h.gof_length == 0 || h.render_samples == 0 {
        bail!(Format, "zero gof length or sample count in header");
    }
    Ok(h)
}

pub fn write_frame(f: &FrameRecord, out: &mut Vec<u8>) -> Result<()> {
    if f.tensors.len() > u16::MAX as usize {
        bail!(Config, "too many tensors in one frame");
    }
    if (f.kind == FrameKind::Intra) != f.mlp.is_some() {
        bail!(Contract, "MLP parameters must accompany exactly the intra frames");
    }
    let len = f.encoded_len();
    let mut w = Writer(out);
    w.u8(f.kind.code());
    w.u32((len - 5) as u32);
    w.u16(f.tensors.len() as u16);
    for t in &f.tensors {
        w.u8(t.kind.code());
        w.u8(t.level);
        w.f32(t.mu);
        w.f32(t.b);
        w.i32(t.vmin);
        w.i32(t.vmax);
        w.u32(t.payload.len() as u32);
        w.0.extend_from_slice(&t.payload);
    }
    if let Some(m) = &f.mlp {
        w.u32(m.len() as u32);
        for p in m {
            w.f32(*p);
        }
    }
    Ok(())
}

pub fn read_frame(r: &mut Reader) -> Result<FrameRecord> {
    let kind = match r.u8("frame kind")? {
        0 => FrameKind::Intra,
        1 => FrameKind::Predicted,
        k => bail!(Format, "unknown frame kind {}", k),
    };
    let len = r.u32("frame length")? as usize;
    let body = r.take(len, "frame record")?;
    let mut r = Reader::new(body);
    let nt = r.u16("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(nt);
    for _ in 0..nt {
        let kind = TensorKind::from_code(r.u8("tensor kind")?)?;
        let level = r.u8("tensor level")?;
        let mu = r.f32("mu")?;
        let b = r.f32("b")?;
        let vmin = r.i32("vmin")?;
        let vmax = r.i32("vmax")?;
        if vmin > vmax {
            bail!(Format, "empty symbol range [{}, {}]", vmin, vmax);
        }
        let n = r.u32("payload length")? as usize;
        let payload = r.take(n, "payload")?.to_vec();
        tensors.push(TensorRecord { kind, level, mu, b, vmin, vmax, payload });
    }
    let mlp = match kind {
        FrameKind::Intra => {
            let n = r.u32("MLP parameter count")? as usize;
            if n > r.remaining() / 4 {
                bail!(Format, "MLP parameter count {} exceeds the record", n);
            }
            let mut m = Vec::with_capacity(n);
            for _ in 0..n {
                m.push(r.f32("MLP parameter")?);
            }
            Some(m)
        }
        FrameKind::Predicted => None,
    };
    if r.remaining() != 0 {
        bail!(Format, "{} unread bytes inside frame record", r.remaining());
    }
    Ok(FrameRecord { kind, tensors, mlp })
}

/// Byte counts of a stream by role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ByteBreakdown {
    pub meta: usize,
    pub mlp: usize,
    pub coefficient: usize,
    pub basis: usize,
}

impl ByteBreakdown {
    pub fn total(&self) -> usize {
        self.meta + self.mlp + self.coefficient + self.basis
    }
}

/// A parsed `.nvv` stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub header: StreamHeader,
    pub frames: Vec<FrameRecord>,
}

impl Stream {
    pub fn breakdown(&self) -> ByteBreakdown {
        let mut b = ByteBreakdown { meta: self.header.encoded_len() + 4, ..Default::default() };
        for f in &self.frames {
            b.meta += FRAME_META_BYTES;
            for t in &f.tensors {
                b.meta += TENSOR_META_BYTES;
                match t.kind {
                    TensorKind::Coefficient => b.coefficient += t.payload.len(),
                    TensorKind::Basis | TensorKind::Residual => b.basis += t.payload.len(),
                }
            }
            if let Some(m) = &f.mlp {
                b.meta += 4;
                b.mlp += 4 * m.len();
            }
        }
        b
    }

    pub fn frame_kinds(&self) -> String {
        self.frames.iter().map(|f| f.kind.letter()).collect()
    }
}

pub fn write_stream(stream: &Stream) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_header(&stream.header, &mut out)?;
    out.extend_from_slice(&(stream.frames.len() as u32).to_le_bytes());
    for f in &stream.frames {
        write_frame(f, &mut out)?;
    }
    Ok(out)
}

pub fn read_stream(bytes: &[u8]) -> Result<Stream> {
    let mut r = Reader::new(bytes);
    let header = read_header(&mut r)?;
    let n = r.u32("frame count")? as usize;
    let mut frames = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        frames.push(read_frame(&mut r)?);
    }
    if r.remaining() != 0 {
        bail!(Format, "{} trailing bytes after the last frame", r.remaining());
    }
    Ok(Stream { header, frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn header() -> StreamHeader {
        StreamHeader {
            coef_dims: [4, 5, 6],
            coef_channels: 8,
            levels: vec![
                LevelShape { dims: [3, 3, 3], channels: 4, frequency: 2 },
                LevelShape { dims: [5, 5, 5], channels: 4, frequency: 4 },
            ],
            hidden: vec![16, 16],
            direction_octaves: 2,
            feature_scale: 0.125,
            gof_length: 20,
            background: [1.0, 1.0, 1.0],
            render_samples: 32,
        }
    }

    fn iframe() -> FrameRecord {
        FrameRecord {
            kind: FrameKind::Intra,
            tensors: vec![
                TensorRecord { kind: TensorKind::Coefficient, level: 0, mu: 0.5, b: 2.0, vmin: -3, vmax: 9, payload: vec![1, 2, 3] },
                TensorRecord { kind: TensorKind::Basis, level: 1, mu: -0.25, b: 0.01, vmin: 0, vmax: 0, payload: vec![] },
            ],
            mlp: Some(vec![0.5, -1.25, 3.0e-7]),
        }
    }

    fn pframe() -> FrameRecord {
        FrameRecord {
            kind: FrameKind::Predicted,
            tensors: vec![TensorRecord { kind: TensorKind::Residual, level: 0, mu: 0.0, b: 1.0, vmin: -1, vmax: 1, payload: vec![9; 40] }],
            mlp: None,
        }
    }

    #[test]
    fn frame_round_trip_is_byte_identical() {
        let f = iframe();
        let mut bytes = Vec::new();
        write_frame(&f, &mut bytes).unwrap();
        assert_eq!(bytes.len(), f.encoded_len());
        assert_eq!(f.bits(), 8 * bytes.len() as u64);
        let back = read_frame(&mut Reader::new(&bytes)).unwrap();
        assert_eq!(back, f);
        let mut again = Vec::new();
        write_frame(&back, &mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn stream_round_trip_and_accounting() {
        let s = Stream { header: header(), frames: vec![iframe(), pframe(), pframe()] };
        let bytes = write_stream(&s).unwrap();
        assert_eq!(read_stream(&bytes).unwrap(), s);
        assert_eq!(s.breakdown().total(), bytes.len());
        assert_eq!(s.frame_kinds(), "IPP");
    }

    #[test]
    fn corrupted_streams_rejected() {
        let s = Stream { header: header(), frames: vec![iframe()] };
        let bytes = write_stream(&s).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_stream(&bad), Err(crate::Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(read_stream(&bad).is_err());
        assert!(read_stream(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(read_stream(&long).is_err());
    }

    #[test]
    fn mlp_only_on_intra_frames() {
        let mut f = pframe();
        f.mlp = Some(vec![1.0]);
        assert!(write_frame(&f, &mut Vec::new()).is_err());
    }
}
