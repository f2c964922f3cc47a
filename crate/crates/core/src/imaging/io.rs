//! PGM (binary P5) and PNG reading/writing for single-channel images.
//!
//! Readers normalize to `[0, 1]` by dividing by the format's maximum value
//! (255 or 65535). Writers for signed or out-of-range data record the affine
//! mapping as a `# thermoface offset=<o> scale=<s>` header comment, so that
//! `value = offset + scale * code / maxval`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Mask, ThermalImage};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Affine code-to-value mapping recorded in a PGM header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueMapping {
    pub offset: f64,
    pub scale: f64,
}

impl Default for ValueMapping {
    fn default() -> Self {
        Self { offset: 0.0, scale: 1.0 }
    }
}

pub fn read_image<T: Real>(path: impl AsRef<Path>) -> Result<ThermalImage<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes).map(|(img, _)| img)
    } else {
        decode_png(&bytes)
    }
}

/// Reads a PGM and applies a recorded value mapping, if any.
pub fn read_pgm_mapped<T: Real>(path: impl AsRef<Path>) -> Result<(ThermalImage<T>, ValueMapping)> {
    let bytes = fs::read(path)?;
    let (img, mapping) = decode_pgm::<T>(&bytes)?;
    let (off, sc) = (T::lit(mapping.offset), T::lit(mapping.scale));
    Ok((img.map(|v| off + sc * v), mapping))
}

fn decode_png<T: Real>(bytes: &[u8]) -> Result<ThermalImage<T>> {
    let dynimg = image::load_from_memory(bytes)?;
    let (w, h, data) = match dynimg {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            (w, h, g.into_raw().into_iter().map(|v| T::lit(v as f64 / 255.0)).collect())
        }
        other => {
            let g = other.into_luma16();
            let (w, h) = g.dimensions();
            (w, h, g.into_raw().into_iter().map(|v| T::lit(v as f64 / 65535.0)).collect())
        }
    };
    ThermalImage::new(w as usize, h as usize, data)
}

fn decode_pgm<T: Real>(bytes: &[u8]) -> Result<(ThermalImage<T>, ValueMapping)> {
    let mut pos = 2usize;
    let mut fields = Vec::with_capacity(3);
    let mut mapping = ValueMapping::default();
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(Error::Format("truncated PGM header".into()));
        }
        if bytes[pos] == b'#' {
            let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |e| pos + e);
            let line = String::from_utf8_lossy(&bytes[pos + 1..end]).to_string();
            parse_mapping_comment(&line, &mut mapping);
            pos = end;
            continue;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        let token = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        let value: usize = token.parse().map_err(|_| Error::Format(format!("bad PGM header field {token:?}")))?;
        fields.push(value);
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let wide = maxval > 255;
    let need = w * h * if wide { 2 } else { 1 };
    if bytes.len() < pos + need {
        return Err(Error::Format("truncated PGM raster".into()));
    }
    let raster = &bytes[pos..pos + need];
    let m = maxval as f64;
    let data: Vec<T> = if wide {
        raster.chunks_exact(2).map(|c| T::lit(u16::from_be_bytes([c[0], c[1]]) as f64 / m)).collect()
    } else {
        raster.iter().map(|&b| T::lit(b as f64 / m)).collect()
    };
    Ok((ThermalImage::new(w, h, data)?, mapping))
}

fn parse_mapping_comment(line: &str, mapping: &mut ValueMapping) {
    let mut it = line.split_whitespace();
    if it.next() != Some("thermoface") {
        return;
    }
    for kv in it {
        if let Some((k, v)) = kv.split_once('=') {
            if let Ok(x) = v.parse::<f64>() {
                match k {
                    "offset" => mapping.offset = x,
                    "scale" => mapping.scale = x,
                    _ => {}
                }
            }
        }
    }
}

fn encode_pgm(w: usize, h: usize, maxval: u16, codes: &[u16], mapping: Option<ValueMapping>) -> Vec<u8> {
    let mut out = Vec::with_capacity(codes.len() * 2 + 64);
    out.extend_from_slice(b"P5\n");
    if let Some(m) = mapping {
        out.extend_from_slice(format!("# thermoface offset={:?} scale={:?}\n", m.offset, m.scale).as_bytes());
    }
    out.extend_from_slice(format!("{w} {h}\n{maxval}\n").as_bytes());
    if maxval > 255 {
        for &c in codes {
            out.extend_from_slice(&c.to_be_bytes());
        }
    } else {
        out.extend(codes.iter().map(|&c| c as u8));
    }
    out
}

fn quantize<T: Real>(img: &ThermalImage<T>, mapping: ValueMapping, maxval: f64) -> Vec<u16> {
    img.data()
        .iter()
        .map(|v| {
            let unit = (v.as_f64() - mapping.offset) / mapping.scale;
            (unit.clamp(0.0, 1.0) * maxval).round() as u16
        })
        .collect()
}

/// 16-bit PGM of intensities assumed to lie in `[0, 1]` (values are clamped).
pub fn write_pgm16<T: Real>(img: &ThermalImage<T>, path: impl AsRef<Path>) -> Result<()> {
    let codes = quantize(img, ValueMapping::default(), 65535.0);
    write_bytes(path, &encode_pgm(img.width(), img.height(), 65535, &codes, None))
}

/// 8-bit PGM of intensities assumed to lie in `[0, 1]`.
pub fn write_pgm8<T: Real>(img: &ThermalImage<T>, path: impl AsRef<Path>) -> Result<()> {
    let codes = quantize(img, ValueMapping::default(), 255.0);
    write_bytes(path, &encode_pgm(img.width(), img.height(), 255, &codes, None))
}

/// 16-bit PGM spanning the image's value range, with the mapping recorded in
/// the header. Used for signed detail images.
pub fn write_pgm16_rescaled<T: Real>(img: &ThermalImage<T>, path: impl AsRef<Path>) -> Result<ValueMapping> {
    let (lo, hi) = img.min_max();
    let (lo, hi) = (lo.as_f64(), hi.as_f64());
    let scale = if hi > lo { hi - lo } else { 1.0 };
    let mapping = ValueMapping { offset: lo, scale };
    let codes = quantize(img, mapping, 65535.0);
    write_bytes(path, &encode_pgm(img.width(), img.height(), 65535, &codes, Some(mapping)))?;
    Ok(mapping)
}

/// 8-bit PGM mask: 255 foreground, 0 background.
pub fn write_mask_pgm(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let codes: Vec<u16> = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_bytes(path, &encode_pgm(mask.width(), mask.height(), 255, &codes, None))
}

/// Reads a mask written by [`write_mask_pgm`] (any nonzero pixel is foreground).
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let img: ThermalImage<f64> = read_image(path)?;
    Mask::new(img.width(), img.height(), img.data().iter().map(|&v| v > 0.0).collect())
}

/// 16-bit grayscale PNG of intensities in `[0, 1]`.
pub fn write_png16<T: Real>(img: &ThermalImage<T>, path: impl AsRef<Path>) -> Result<()> {
    let codes = quantize(img, ValueMapping::default(), 65535.0);
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(img.width() as u32, img.height() as u32, codes)
        .ok_or_else(|| Error::Format("PNG buffer size".into()))?;
    buf.save(path)?;
    Ok(())
}

/// Writes by extension: `.png` as 16-bit PNG, anything else as 16-bit PGM.
pub fn write_image<T: Real>(img: &ThermalImage<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("png") => write_png16(img, path),
        _ => write_pgm16(img, path),
    }
}

fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}
