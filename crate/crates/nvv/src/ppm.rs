//! Binary PPM (P6, maxval 255) images.

use std::fs;
use std::path::Path;

use nvv_core::render::Image;

use crate::error::{Error, Result};

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.to_rgb8());
    out
}

pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    fs::write(path, encode_ppm(img)).map_err(Error::io(path))
}

/// Parse a P6 image. Comments (`#` to end of line) are allowed in the header.
pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PPM header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P6" {
        return Err(format!("unsupported image type {:?}", fields[0]));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad PPM header field {:?}", s));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(format!("unsupported maxval {}", maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = w.checked_mul(h).and_then(|n| n.checked_mul(3)).ok_or("image too large")?;
    if bytes.len() < pos || bytes.len() - pos != need {
        return Err(format!("expected {} raster bytes, found {}", need, bytes.len().saturating_sub(pos)));
    }
    Image::from_rgb8(w, h, &bytes[pos..]).map_err(|e| e.to_string())
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode_ppm(&bytes).map_err(|m| Error::parse(path, m))
}
