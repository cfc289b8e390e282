//! Binary containers for images and sinograms, plus 16-bit PGM previews.
//!
//! Both containers share a 24-byte little-endian header: a 4-byte magic, two
//! `u32` extents, a reserved `u32` (zero) and one `f64` geometry scalar,
//! followed by row-major `f64` samples.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{Image, Sinogram, SinogramGrid, TruncationMask};

const SINO_MAGIC: &[u8; 4] = b"SINO";
const IMG_MAGIC: &[u8; 4] = b"IMG2";
const HEADER_LEN: usize = 24;

fn encode(magic: &[u8; 4], a: usize, b: usize, scalar: f64, data: &Array2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * data.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(a as u32).to_le_bytes());
    out.extend_from_slice(&(b as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&scalar.to_le_bytes());
    for v in data.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode(magic: &[u8; 4], bytes: &[u8]) -> Result<(usize, usize, f64, Vec<f64>)> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != magic {
        return Err(Error::Format(format!("missing {} header", String::from_utf8_lossy(magic))));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (a, b) = (u32_at(4), u32_at(8));
    let scalar = f64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let body = &bytes[HEADER_LEN..];
    let expected = a.checked_mul(b).and_then(|n| n.checked_mul(8));
    if expected != Some(body.len()) {
        return Err(Error::Format(format!("expected {a}x{b} samples, found {} bytes", body.len())));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((a, b, scalar, data))
}

/// Sinogram container. The scalar holds the ROI radius of the mask the
/// data was measured with (`inf` for untruncated data).
pub fn sinogram_to_bytes(f: &Sinogram, mu: f64) -> Vec<u8> {
    encode(SINO_MAGIC, f.grid.n_bins(), f.grid.n_angles(), mu, &f.data)
}

pub fn sinogram_from_bytes(bytes: &[u8]) -> Result<(Sinogram, f64)> {
    let (n_bins, n_angles, mu, data) = decode(SINO_MAGIC, bytes)?;
    let grid = SinogramGrid::parallel(n_angles, n_bins)?;
    let arr = Array2::from_shape_vec((n_angles, n_bins), data).expect("checked length");
    Ok((Sinogram::from_array(&grid, arr)?, mu))
}

pub fn image_to_bytes(u: &Image) -> Vec<u8> {
    encode(IMG_MAGIC, u.width(), u.height(), u.pixel_size, &u.data)
}

pub fn image_from_bytes(bytes: &[u8]) -> Result<Image> {
    let (w, h, pixel_size, data) = decode(IMG_MAGIC, bytes)?;
    let arr = Array2::from_shape_vec((h, w), data).expect("checked length");
    Ok(Image { pixel_size, data: arr })
}

pub fn write_sinogram(path: &Path, f: &Sinogram, mu: f64) -> Result<()> {
    Ok(fs::write(path, sinogram_to_bytes(f, mu))?)
}

pub fn read_sinogram(path: &Path) -> Result<(Sinogram, f64)> {
    sinogram_from_bytes(&fs::read(path)?)
}

pub fn write_image(path: &Path, u: &Image) -> Result<()> {
    Ok(fs::write(path, image_to_bytes(u))?)
}

pub fn read_image(path: &Path) -> Result<Image> {
    image_from_bytes(&fs::read(path)?)
}

/// Binary 16-bit PGM of `data` mapped linearly from `[lo, hi]`.
pub fn pgm16_bytes(data: &Array2<f64>, lo: f64, hi: f64) -> Vec<u8> {
    let (rows, cols) = data.dim();
    let mut out = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    let span = if hi > lo { hi - lo } else { 1.0 };
    for v in data.iter() {
        let q = (((v - lo) / span).clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn write_pgm16(path: &Path, data: &Array2<f64>, lo: f64, hi: f64) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&pgm16_bytes(data, lo, hi))?;
    Ok(())
}

/// Plain-text mask description; the mask itself is recomputed from the grid.
pub fn mask_to_text(mask: &TruncationMask) -> String {
    format!(
        "n_angles {}\nn_bins {}\nmu {}\nkept {}\n",
        mask.grid.n_angles(),
        mask.grid.n_bins(),
        mask.mu,
        mask.count()
    )
}

pub fn mask_from_text(text: &str) -> Result<TruncationMask> {
    let mut fields = std::collections::HashMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let mut parts = line.split_whitespace();
        if let (Some(k), Some(v)) = (parts.next(), parts.next()) {
            fields.insert(k.to_owned(), v.to_owned());
        }
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| Error::Format(format!("mask file lacks '{k}'")));
    let bad = |k: &str| Error::Format(format!("mask field '{k}' is malformed"));
    let n_angles: usize = get("n_angles")?.parse().map_err(|_| bad("n_angles"))?;
    let n_bins: usize = get("n_bins")?.parse().map_err(|_| bad("n_bins"))?;
    let mu: f64 = get("mu")?.parse().map_err(|_| bad("mu"))?;
    let grid = SinogramGrid::parallel(n_angles, n_bins)?;
    if mu.is_infinite() {
        Ok(TruncationMask::full(&grid))
    } else {
        TruncationMask::new(&grid, mu)
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    fs::File::open(path)?.read_to_string(&mut s)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinogram_round_trip() {
        let grid = SinogramGrid::parallel(3, 4).unwrap();
        let data = Array2::from_shape_fn((3, 4), |(i, j)| i as f64 * 10.0 + j as f64 + 0.25);
        let f = Sinogram::from_array(&grid, data).unwrap();
        let bytes = sinogram_to_bytes(&f, 0.5);
        assert_eq!(bytes.len(), 24 + 12 * 8);
        assert_eq!(&bytes[..4], b"SINO");
        let (back, mu) = sinogram_from_bytes(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(mu, 0.5);
    }

    #[test]
    fn image_round_trip_and_corruption() {
        let u = Image::from_array(Array2::from_shape_fn((5, 5), |(i, j)| (i * j) as f64));
        let bytes = image_to_bytes(&u);
        assert_eq!(image_from_bytes(&bytes).unwrap(), u);
        assert!(image_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(sinogram_from_bytes(&bytes).is_err());
    }

    #[test]
    fn pgm_header_and_range() {
        let d = Array2::from_shape_vec((1, 3), vec![-1.0, 0.5, 2.0]).unwrap();
        let b = pgm16_bytes(&d, 0.0, 1.0);
        let header = b"P5\n3 1\n65535\n";
        assert_eq!(&b[..header.len()], header);
        assert_eq!(&b[header.len()..], &[0, 0, 0x80, 0x00, 0xff, 0xff]);
    }

    #[test]
    fn mask_text_round_trip() {
        let grid = SinogramGrid::parallel(6, 16).unwrap();
        let m = TruncationMask::new(&grid, 0.5).unwrap();
        assert_eq!(mask_from_text(&mask_to_text(&m)).unwrap(), m);
        let full = TruncationMask::full(&grid);
        assert_eq!(mask_from_text(&mask_to_text(&full)).unwrap(), full);
        assert!(mask_from_text("n_angles 3\n").is_err());
    }
}
