//! On-disk formats.
//!
//! * TNSR: `TNSR <H> <W> <C>\n` then `H·W·C` little-endian f64.
//! * LAT: `LAT <d>\n` then `d` little-endian f64.
//! * PPM (P6, maxval 255) previews; `v ∈ [-1, 1]` maps to `round((v+1)/2·255)`.
//! * Middlebury `.flo`: f32 tag 202021.25, i32 width, i32 height, then
//!   interleaved `(u, v)` f32 rows.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::generator::{LatentCode, SemanticDirection};
use crate::scalar::Scalar;
use crate::tensor::{FlowField, ImageTensor};

pub const FLO_TAG: f32 = 202021.25;

/// Splits `<magic> <n>… \n` off the front of `bytes`, returning the integer
/// fields and the payload offset.
fn parse_header<'a>(
    bytes: &'a [u8],
    magic: &str,
    fields: usize,
) -> Result<(Vec<usize>, &'a [u8], usize)> {
    let nl = bytes
        .iter()
        .take(256)
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(0, format!("missing {magic} header line")))?;
    let line =
        std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::format(0, "header is not ASCII"))?;
    let mut parts = line.split(' ');
    if parts.next() != Some(magic) {
        return Err(Error::format(0, format!("expected magic {magic:?}")));
    }
    let mut values = Vec::with_capacity(fields);
    let mut offset = magic.len() + 1;
    for part in parts {
        let v = part
            .parse::<usize>()
            .map_err(|_| Error::format(offset, format!("bad header field {part:?}")))?;
        values.push(v);
        offset += part.len() + 1;
    }
    if values.len() != fields {
        return Err(Error::format(
            0,
            format!(
                "{magic} header needs {fields} fields, found {}",
                values.len()
            ),
        ));
    }
    Ok((values, &bytes[nl + 1..], nl + 1))
}

fn read_f64s(payload: &[u8], count: usize, base: usize) -> Result<Vec<f64>> {
    let need = count * 8;
    if payload.len() < need {
        return Err(Error::format(
            base + payload.len(),
            format!(
                "truncated payload: expected {need} bytes, found {}",
                payload.len()
            ),
        ));
    }
    if payload.len() > need {
        return Err(Error::format(base + need, "trailing bytes after payload"));
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn encode_tnsr<T: Scalar>(image: &ImageTensor<T>) -> Vec<u8> {
    let (h, w, c) = image.shape();
    let mut out = format!("TNSR {h} {w} {c}\n").into_bytes();
    out.reserve(image.len() * 8);
    for v in image.data() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out
}

pub fn decode_tnsr<T: Scalar>(bytes: &[u8]) -> Result<ImageTensor<T>> {
    let (dims, payload, base) = parse_header(bytes, "TNSR", 3)?;
    let (h, w, c) = (dims[0], dims[1], dims[2]);
    let values = read_f64s(payload, h * w * c, base)?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(base + i * 8, "non-finite tensor value"));
    }
    ImageTensor::new(h, w, c, values.into_iter().map(T::lit).collect())
}

pub fn write_tnsr<T: Scalar>(path: impl AsRef<Path>, image: &ImageTensor<T>) -> Result<()> {
    fs::write(path, encode_tnsr(image))?;
    Ok(())
}

pub fn read_tnsr<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageTensor<T>> {
    decode_tnsr(&fs::read(path)?)
}

pub fn encode_lat<T: Scalar>(values: &[T]) -> Vec<u8> {
    let mut out = format!("LAT {}\n", values.len()).into_bytes();
    for v in values {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out
}

pub fn decode_lat<T: Scalar>(bytes: &[u8]) -> Result<Vec<T>> {
    let (dims, payload, base) = parse_header(bytes, "LAT", 1)?;
    if dims[0] == 0 {
        return Err(Error::format(4, "latent dimension must be >= 1"));
    }
    let values = read_f64s(payload, dims[0], base)?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(base + i * 8, "non-finite latent value"));
    }
    Ok(values.into_iter().map(T::lit).collect())
}

pub fn write_latent<T: Scalar>(path: impl AsRef<Path>, code: &LatentCode<T>) -> Result<()> {
    fs::write(path, encode_lat(&code.0))?;
    Ok(())
}

pub fn read_latent<T: Scalar>(path: impl AsRef<Path>) -> Result<LatentCode<T>> {
    Ok(LatentCode(decode_lat(&fs::read(path)?)?))
}

pub fn write_direction<T: Scalar>(
    path: impl AsRef<Path>,
    dir: &SemanticDirection<T>,
) -> Result<()> {
    fs::write(path, encode_lat(&dir.0))?;
    Ok(())
}

pub fn read_direction<T: Scalar>(path: impl AsRef<Path>) -> Result<SemanticDirection<T>> {
    Ok(SemanticDirection(decode_lat(&fs::read(path)?)?))
}

/// 8-bit preview value for an intensity in `[-1, 1]` (clamped).
pub fn to_u8<T: Scalar>(v: T) -> u8 {
    let v = v.as_f64().clamp(-1.0, 1.0);
    ((v + 1.0) / 2.0 * 255.0).round() as u8
}

/// Binary P6 preview. Single-channel images are replicated to grey RGB;
/// images with more than three channels keep the first three.
pub fn encode_ppm<T: Scalar>(image: &ImageTensor<T>) -> Vec<u8> {
    let (h, w, c) = image.shape();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for k in 0..3 {
                let ch = if c >= 3 { k } else { 0 };
                out.push(to_u8(image.get(x, y, ch)));
            }
        }
    }
    out
}

pub fn write_ppm<T: Scalar>(path: impl AsRef<Path>, image: &ImageTensor<T>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_ppm(image))?;
    Ok(())
}

pub fn encode_flo<T: Scalar>(flow: &FlowField<T>) -> Vec<u8> {
    let (h, w) = (flow.height(), flow.width());
    let mut out = Vec::with_capacity(12 + h * w * 8);
    out.extend_from_slice(&FLO_TAG.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for (u, v) in flow.u().iter().zip(flow.v()) {
        out.extend_from_slice(&(u.as_f64() as f32).to_le_bytes());
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

pub fn decode_flo<T: Scalar>(bytes: &[u8]) -> Result<FlowField<T>> {
    if bytes.len() < 12 {
        return Err(Error::format(bytes.len(), "truncated .flo header"));
    }
    let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().unwrap() };
    if f32::from_le_bytes(word(0)) != FLO_TAG {
        return Err(Error::format(0, "bad .flo tag (expected PIEH)"));
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w <= 0 || h <= 0 {
        return Err(Error::format(4, format!("bad .flo dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let need = 12 + w * h * 8;
    if bytes.len() != need {
        return Err(Error::format(
            bytes.len().min(need),
            format!(
                "expected {need} bytes for {w}x{h} flow, found {}",
                bytes.len()
            ),
        ));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for (i, pair) in bytes[12..].chunks_exact(8).enumerate() {
        let a = f32::from_le_bytes(pair[..4].try_into().unwrap());
        let b = f32::from_le_bytes(pair[4..].try_into().unwrap());
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::format(12 + i * 8, "non-finite flow value"));
        }
        u.push(T::lit(a as f64));
        v.push(T::lit(b as f64));
    }
    FlowField::new(h, w, u, v)
}

pub fn write_flo<T: Scalar>(path: impl AsRef<Path>, flow: &FlowField<T>) -> Result<()> {
    fs::write(path, encode_flo(flow))?;
    Ok(())
}

pub fn read_flo<T: Scalar>(path: impl AsRef<Path>) -> Result<FlowField<T>> {
    decode_flo(&fs::read(path)?)
}
