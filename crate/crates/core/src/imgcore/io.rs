//! Image file I/O: PFM for float images, PNG 8/16-bit with an explicit
//! transfer function, and 8-bit PNG masks.
//!
//! PFM is read verbatim as linear radiance and written little-endian with
//! scale -1.0. PNG samples are mapped to [0,1] and optionally sRGB-decoded;
//! saving inverts the chosen transfer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::types::{LinearImage, ValidMask};
use super::{ImageError, Result};

/// Transfer function applied when loading from / saving to PNG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transfer {
    Linear,
    Srgb,
}

impl std::str::FromStr for Transfer {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "linear" => Ok(Transfer::Linear),
            "srgb" => Ok(Transfer::Srgb),
            other => Err(format!("unknown transfer '{other}', expected linear|srgb")),
        }
    }
}

/// sRGB electro-optical transfer: encoded value in [0,1] to linear.
pub fn srgb_decode(u: f64) -> f64 {
    if u <= 0.04045 {
        u / 12.92
    } else {
        ((u + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse of [`srgb_decode`] on [0,1].
pub fn srgb_encode(v: f64) -> f64 {
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn io_err(path: &Path, source: std::io::Error) -> ImageError {
    ImageError::Io { path: path.display().to_string(), source }
}

fn malformed(path: &Path, detail: impl Into<String>) -> ImageError {
    ImageError::Malformed { path: path.display().to_string(), detail: detail.into() }
}

/// Load a PFM or PNG file as linear radiance. The transfer applies to PNG
/// only; PFM data is always taken as linear.
pub fn load_image(path: impl AsRef<Path>, transfer: Transfer) -> Result<LinearImage> {
    let path = path.as_ref();
    match extension(path) {
        Some("pfm") => load_pfm(path),
        Some("png") => load_png(path, transfer),
        other => Err(ImageError::UnsupportedFormat {
            path: path.display().to_string(),
            detail: format!("extension {:?}, expected .pfm or .png", other.unwrap_or("")),
        }),
    }
}

/// Save linear radiance to PFM or PNG (16-bit RGB), chosen by extension.
pub fn save_image(img: &LinearImage, path: impl AsRef<Path>, transfer: Transfer) -> Result<()> {
    let path = path.as_ref();
    match extension(path) {
        Some("pfm") => save_pfm(img, path),
        Some("png") => save_png16(img, path, transfer),
        other => Err(ImageError::UnsupportedFormat {
            path: path.display().to_string(),
            detail: format!("extension {:?}, expected .pfm or .png", other.unwrap_or("")),
        }),
    }
}

fn extension(path: &Path) -> Option<&str> {
    path.extension().and_then(|e| e.to_str())
}

// ---------------------------------------------------------------------------
// PFM
// ---------------------------------------------------------------------------

fn read_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return None;
    }
    let tok = String::from_utf8_lossy(&bytes[start..*pos]).into_owned();
    // consume exactly one whitespace byte after the token
    if *pos < bytes.len() {
        *pos += 1;
    }
    Some(tok)
}

fn load_pfm(path: &Path) -> Result<LinearImage> {
    let mut bytes = Vec::new();
    File::open(path).map_err(|e| io_err(path, e))?.read_to_end(&mut bytes).map_err(|e| io_err(path, e))?;

    let mut pos = 0usize;
    let magic = read_token(&bytes, &mut pos).ok_or_else(|| malformed(path, "missing magic"))?;
    match magic.as_str() {
        "PF" => {}
        "Pf" => {
            return Err(ImageError::UnsupportedFormat {
                path: path.display().to_string(),
                detail: "grayscale PFM (Pf) is not supported, expected color PF".into(),
            })
        }
        other => return Err(malformed(path, format!("bad magic '{other}'"))),
    }
    let width: usize = read_token(&bytes, &mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| malformed(path, "bad width"))?;
    let height: usize = read_token(&bytes, &mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| malformed(path, "bad height"))?;
    let scale: f64 = read_token(&bytes, &mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| malformed(path, "bad scale"))?;
    if width == 0 || height == 0 {
        return Err(malformed(path, format!("degenerate dims {width}x{height}")));
    }
    let little_endian = scale < 0.0;
    let expected = height * width * 3 * 4;
    let payload = &bytes[pos..];
    if payload.len() != expected {
        return Err(malformed(
            path,
            format!("dimension mismatch: payload {} bytes, header implies {expected}", payload.len()),
        ));
    }

    // rows are stored bottom-to-top
    let mut data = vec![0.0f64; height * width * 3];
    for row in 0..height {
        let y = height - 1 - row;
        for x in 0..width {
            for c in 0..3 {
                let off = ((row * width + x) * 3 + c) * 4;
                let raw: [u8; 4] = payload[off..off + 4].try_into().expect("bounds checked");
                let v = if little_endian { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
                let v = v as f64;
                if v.is_nan() {
                    return Err(malformed(path, format!("NaN at pixel ({x},{y}) channel {c}")));
                }
                if !v.is_finite() {
                    return Err(malformed(path, format!("non-finite value at pixel ({x},{y}) channel {c}")));
                }
                if v < 0.0 {
                    return Err(malformed(path, format!("negative radiance {v} at pixel ({x},{y}) channel {c}")));
                }
                data[(y * width + x) * 3 + c] = v;
            }
        }
    }
    LinearImage::from_parts(height, width, data)
}

fn save_pfm(img: &LinearImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "PF\n{} {}\n-1.0\n", img.width(), img.height()).map_err(|e| io_err(path, e))?;
    let (height, width) = (img.height(), img.width());
    let mut row = vec![0u8; width * 3 * 4];
    for y in (0..height).rev() {
        for x in 0..width {
            let px = img.pixel(x, y);
            for c in 0..3 {
                let b = (px[c] as f32).to_le_bytes();
                row[(x * 3 + c) * 4..(x * 3 + c) * 4 + 4].copy_from_slice(&b);
            }
        }
        w.write_all(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

fn load_png(path: &Path, transfer: Transfer) -> Result<LinearImage> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| malformed(path, e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or_else(|| malformed(path, "image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(|e| malformed(path, e.to_string()))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => {
            return Err(ImageError::UnsupportedFormat {
                path: path.display().to_string(),
                detail: format!("PNG color type {other:?}"),
            })
        }
    };
    let sixteen = match info.bit_depth {
        png::BitDepth::Eight => false,
        png::BitDepth::Sixteen => true,
        other => {
            return Err(ImageError::UnsupportedFormat {
                path: path.display().to_string(),
                detail: format!("PNG bit depth {other:?}, expected 8 or 16"),
            })
        }
    };
    let maxval = if sixteen { 65535.0 } else { 255.0 };
    let sample = |i: usize| -> f64 {
        if sixteen {
            u16::from_be_bytes([buf[i * 2], buf[i * 2 + 1]]) as f64 / maxval
        } else {
            buf[i] as f64 / maxval
        }
    };
    let mut data = vec![0.0f64; height * width * 3];
    for p in 0..height * width {
        let rgb = match channels {
            1 | 2 => [sample(p * channels); 3],
            _ => [sample(p * channels), sample(p * channels + 1), sample(p * channels + 2)],
        };
        for c in 0..3 {
            let v = rgb[c];
            data[p * 3 + c] = match transfer {
                Transfer::Linear => v,
                Transfer::Srgb => srgb_decode(v),
            };
        }
    }
    LinearImage::from_parts(height, width, data)
}

fn save_png16(img: &LinearImage, path: &Path, transfer: Transfer) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width() as u32, img.height() as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder.write_header().map_err(|e| malformed(path, e.to_string()))?;
    let mut buf = vec![0u8; img.height() * img.width() * 3 * 2];
    for (i, &v) in img.data().iter().enumerate() {
        let encoded = match transfer {
            Transfer::Linear => v,
            Transfer::Srgb => srgb_encode(v),
        };
        let q = (encoded.clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf[i * 2..i * 2 + 2].copy_from_slice(&q.to_be_bytes());
    }
    writer.write_image_data(&buf).map_err(|e| malformed(path, e.to_string()))?;
    Ok(())
}

/// Write a validity mask as an 8-bit grayscale PNG (0 / 255).
pub fn save_mask_png(mask: &ValidMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), mask.width() as u32, mask.height() as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| malformed(path, e.to_string()))?;
    let buf: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    writer.write_image_data(&buf).map_err(|e| malformed(path, e.to_string()))?;
    Ok(())
}

/// Load an 8-bit grayscale PNG as a validity mask (>= 128 is valid).
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<ValidMask> {
    let path = path.as_ref();
    let img = load_png(path, Transfer::Linear)?;
    let bits: Vec<bool> = img.data().chunks_exact(3).map(|px| px[0] >= 128.0 / 255.0).collect();
    ValidMask::new(img.height(), img.width(), bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn tmpdir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("lumisplit_io_{tag}_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn pfm_roundtrip_bit_identical() {
        let dir = tmpdir("pfm");
        let mut rng = Rng::new(42);
        let data: Vec<f64> = (0..5 * 7 * 3).map(|_| (rng.uniform() * 4.0 * 1e6).round() as f32 as f64).collect();
        let img = LinearImage::from_parts(5, 7, data).unwrap();
        let path = dir.join("rt.pfm");
        save_image(&img, &path, Transfer::Linear).unwrap();
        let back = load_image(&path, Transfer::Linear).unwrap();
        assert_eq!(img.data(), back.data());
    }

    #[test]
    fn pfm_rejects_nan_and_negative() {
        let dir = tmpdir("pfm_bad");
        let path = dir.join("bad.pfm");
        let mut payload = Vec::new();
        payload.extend_from_slice(b"PF\n1 1\n-1.0\n");
        payload.extend_from_slice(&f32::NAN.to_le_bytes());
        payload.extend_from_slice(&1.0f32.to_le_bytes());
        payload.extend_from_slice(&1.0f32.to_le_bytes());
        std::fs::write(&path, &payload).unwrap();
        let err = load_image(&path, Transfer::Linear).unwrap_err();
        assert!(err.to_string().contains("NaN"), "{err}");

        let mut payload = Vec::new();
        payload.extend_from_slice(b"PF\n1 1\n-1.0\n");
        payload.extend_from_slice(&(-0.5f32).to_le_bytes());
        payload.extend_from_slice(&1.0f32.to_le_bytes());
        payload.extend_from_slice(&1.0f32.to_le_bytes());
        std::fs::write(&path, &payload).unwrap();
        let err = load_image(&path, Transfer::Linear).unwrap_err();
        assert!(err.to_string().contains("negative"), "{err}");
    }

    #[test]
    fn pfm_dimension_mismatch() {
        let dir = tmpdir("pfm_dim");
        let path = dir.join("short.pfm");
        let mut payload = Vec::new();
        payload.extend_from_slice(b"PF\n2 2\n-1.0\n");
        payload.extend_from_slice(&1.0f32.to_le_bytes()); // far too few bytes
        std::fs::write(&path, &payload).unwrap();
        let err = load_image(&path, Transfer::Linear).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");
    }

    #[test]
    fn pfm_big_endian_read() {
        let dir = tmpdir("pfm_be");
        let path = dir.join("be.pfm");
        let mut payload = Vec::new();
        payload.extend_from_slice(b"PF\n1 1\n1.0\n");
        for v in [0.25f32, 0.5, 0.75] {
            payload.extend_from_slice(&v.to_be_bytes());
        }
        std::fs::write(&path, &payload).unwrap();
        let img = load_image(&path, Transfer::Linear).unwrap();
        assert_eq!(img.pixel(0, 0), [0.25, 0.5, 0.75]);
    }

    #[test]
    fn png16_linear_roundtrip_quantization_bound() {
        let dir = tmpdir("png16");
        let mut rng = Rng::new(7);
        let data: Vec<f64> = (0..4 * 4 * 3).map(|_| rng.uniform()).collect();
        let img = LinearImage::from_parts(4, 4, data).unwrap();
        let path = dir.join("rt.png");
        save_image(&img, &path, Transfer::Linear).unwrap();
        let back = load_image(&path, Transfer::Linear).unwrap();
        let err = img.raster().max_abs_diff(back.raster()).unwrap();
        assert!(err <= 1.0 / 65535.0, "max abs err {err}");
    }

    // Independent evaluation of the standard sRGB transfer at 8-bit code 188.
    #[test]
    fn srgb_decode_of_188() {
        let u = 188.0 / 255.0;
        let independent = ((u + 0.055) / 1.055f64).powf(2.4);
        assert!((srgb_decode(u) - independent).abs() < 1e-15);
        assert!((srgb_decode(u) - 0.5029).abs() < 5e-4, "got {}", srgb_decode(u));
    }

    #[test]
    fn srgb_transfer_inverts() {
        for i in 0..=100 {
            let v = i as f64 / 100.0;
            assert!((srgb_decode(srgb_encode(v)) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn png8_srgb_load() {
        // write an 8-bit sRGB-encoded PNG by hand, decode through the loader
        let dir = tmpdir("png8");
        let path = dir.join("srgb.png");
        let file = File::create(&path).unwrap();
        let mut encoder = png::Encoder::new(BufWriter::new(file), 1, 1);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().unwrap();
        writer.write_image_data(&[188, 0, 255]).unwrap();
        drop(writer);
        let img = load_image(&path, Transfer::Srgb).unwrap();
        let px = img.pixel(0, 0);
        assert!((px[0] - srgb_decode(188.0 / 255.0)).abs() < 1e-12);
        assert_eq!(px[1], 0.0);
        assert!((px[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mask_png_roundtrip() {
        let dir = tmpdir("mask");
        let m = ValidMask::new(2, 3, vec![true, false, true, false, true, false]).unwrap();
        let path = dir.join("m.png");
        save_mask_png(&m, &path).unwrap();
        let back = load_mask_png(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn unsupported_extension() {
        let err = load_image("/nonexistent/file.exr", Transfer::Linear).unwrap_err();
        assert!(matches!(err, ImageError::UnsupportedFormat { .. }));
    }
}
