//! RD curves and report tables as CSV.

use std::fs;
use std::path::Path;

use nvv_core::eval::{RdCurve, RdPoint};

use crate::error::{Error, Result};

pub const CURVE_HEADER: [&str; 3] = ["rate_bits", "psnr_train", "psnr_test"];

/// Write a curve; the label is not stored, readers take it from the file name.
pub fn write_curve(curve: &RdCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::parse(path, e.to_string());
    w.write_record(CURVE_HEADER).map_err(err)?;
    for p in &curve.points {
        w.write_record([p.rate_bits.to_string(), p.psnr_train.to_string(), p.psnr_test.to_string()]).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::parse(path, e.to_string()))?;
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn parse_curve(text: &str, label: &str, path: &Path) -> Result<RdCurve> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| Error::parse(path, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != CURVE_HEADER {
        return Err(Error::parse(path, format!("header must be {}", CURVE_HEADER.join(","))));
    }
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let mut v = [0.0; 3];
        for (k, slot) in v.iter_mut().enumerate() {
            let field = rec.get(k).ok_or_else(|| Error::parse(path, format!("row {} has {} fields", i + 2, rec.len())))?;
            *slot = field.parse().map_err(|_| Error::parse(path, format!("row {}: {:?} is not a number", i + 2, field)))?;
        }
        points.push(RdPoint { rate_bits: v[0], psnr_train: v[1], psnr_test: v[2] });
    }
    Ok(RdCurve { label: label.to_string(), points })
}

pub fn read_curve(path: &Path) -> Result<RdCurve> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_curve(&text, &label, path)
}

/// Write rows of a plain table with a header line.
pub fn write_table(header: &[&str], rows: &[Vec<String>], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::parse(path, e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::parse(path, e.to_string()))?;
    fs::write(path, bytes).map_err(Error::io(path))
}

/// Left-aligned plain-text table.
pub fn format_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{:<w$}", c, w = *w)).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for r in rows {
        out += &line(r.iter().map(|s| s.as_str()).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ours.csv");
        let c = RdCurve {
            label: "ours".into(),
            points: vec![
                RdPoint { rate_bits: 12345.678, psnr_train: 38.123456789, psnr_test: 36.0 },
                RdPoint { rate_bits: 0.1 + 0.2, psnr_train: 1e-7, psnr_test: -3.5 },
            ],
        };
        write_curve(&c, &p).unwrap();
        assert_eq!(read_curve(&p).unwrap(), c);
    }

    #[test]
    fn malformed_curves_are_rejected() {
        let p = Path::new("x.csv");
        assert!(parse_curve("rate,psnr\n1,2\n", "x", p).is_err());
        assert!(parse_curve("rate_bits,psnr_train,psnr_test\n1,2\n", "x", p).is_err());
        assert!(parse_curve("rate_bits,psnr_train,psnr_test\n1,abc,3\n", "x", p).is_err());
        let c = parse_curve("rate_bits, psnr_train, psnr_test\n 10, 30, 29\n", "x", p).unwrap();
        assert_eq!(c.points[0], RdPoint { rate_bits: 10.0, psnr_train: 30.0, psnr_test: 29.0 });
    }

    #[test]
    fn table_columns_align() {
        let t = format_table(&["a", "bbb"], &[vec!["long".into(), "1".into()]]);
        assert_eq!(t, "a     bbb\nlong  1\n");
    }
}
