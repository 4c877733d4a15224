//! Image files: 8/16-bit PNG for displayable images and masks, PFM for
//! float maps.
//!
//! PNG color handling: a file with a gAMA chunk of exactly 1.0 loads as
//! linear; everything else loads as sRGB. Linear maps are written with
//! that gAMA chunk, sRGB maps with an sRGB chunk. Masks are plain gray
//! values without any transfer curve.

use crate::imagecore::{ColorSpace, ImageError, MaskMap, PixelMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Image(#[from] ImageError),
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl ToString) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

const LINEAR_GAMMA: u32 = 100_000;

pub fn read_png(path: &Path) -> Result<PixelMap, IoError> {
    let file = File::open(path).map_err(file_err(path))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| format_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| format_err(path, e))?;
    let linear = reader
        .info()
        .gama_chunk
        .is_some_and(|g| g.into_scaled() == LINEAR_GAMMA);
    let (w, h) = (info.width as usize, info.height as usize);
    let src_channels = info.color_type.samples();
    let values: Vec<f64> = match info.bit_depth {
        png::BitDepth::Sixteen => buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
            .collect(),
        png::BitDepth::Eight => buf[..info.buffer_size()].iter().map(|&b| b as f64 / 255.0).collect(),
        other => return Err(format_err(path, format!("unsupported bit depth {other:?}"))),
    };
    // gray+alpha becomes RGBA so every map has 1, 3 or 4 channels
    let (channels, data) = if src_channels == 2 {
        let d = values.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0], p[1]]).collect();
        (4, d)
    } else {
        (src_channels, values)
    };
    let space = if linear { ColorSpace::Linear } else { ColorSpace::Srgb };
    Ok(PixelMap::new(w, h, channels, data, space)?)
}

fn encode_png<W: Write>(
    out: W,
    w: usize,
    h: usize,
    channels: usize,
    samples: &[f64],
    depth: BitDepth,
    space: Option<ColorSpace>,
) -> Result<(), png::EncodingError> {
    let mut enc = png::Encoder::new(out, w as u32, h as u32);
    enc.set_color(match channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        _ => png::ColorType::Rgba,
    });
    match space {
        Some(ColorSpace::Srgb) => enc.set_source_srgb(png::SrgbRenderingIntent::Perceptual),
        Some(ColorSpace::Linear) => enc.set_source_gamma(png::ScaledFloat::from_scaled(LINEAR_GAMMA)),
        _ => {}
    }
    let bytes: Vec<u8> = match depth {
        BitDepth::Eight => {
            enc.set_depth(png::BitDepth::Eight);
            samples
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect()
        }
        BitDepth::Sixteen => {
            enc.set_depth(png::BitDepth::Sixteen);
            samples
                .iter()
                .flat_map(|v| ((v.clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes())
                .collect()
        }
    };
    let mut writer = enc.write_header()?;
    writer.write_image_data(&bytes)?;
    writer.finish()
}

/// Writes the map's values as stored, tagged with its color space. Values
/// are clamped to `[0, 1]`; raw maps carry no color chunk.
pub fn write_png(path: &Path, img: &PixelMap, depth: BitDepth) -> Result<(), IoError> {
    let file = File::create(path).map_err(file_err(path))?;
    encode_png(
        BufWriter::new(file),
        img.width(),
        img.height(),
        img.channels(),
        img.data(),
        depth,
        Some(img.space()),
    )
    .map_err(|e| format_err(path, e))
}

/// PNG bytes of `img`, as `write_png` would store them.
pub fn encode_png_bytes(img: &PixelMap, depth: BitDepth) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    encode_png(
        &mut out,
        img.width(),
        img.height(),
        img.channels(),
        img.data(),
        depth,
        Some(img.space()),
    )
    .map_err(|e| format_err(Path::new("<memory>"), e))?;
    Ok(out)
}

/// 8-bit gray PNG bytes of a mask.
pub fn encode_mask_png(mask: &MaskMap) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    encode_png(
        &mut out,
        mask.width(),
        mask.height(),
        1,
        mask.data(),
        BitDepth::Eight,
        None,
    )
    .map_err(|e| format_err(Path::new("<memory>"), e))?;
    Ok(out)
}

/// First channel of a PNG as a mask, without any transfer curve.
pub fn read_mask_png(path: &Path) -> Result<MaskMap, IoError> {
    let img = read_png(path)?;
    let c = img.channels();
    let data = img.data().chunks_exact(c).map(|p| p[0]).collect();
    Ok(MaskMap::new(img.width(), img.height(), data)?)
}

pub fn write_mask_png(path: &Path, mask: &MaskMap) -> Result<(), IoError> {
    let file = File::create(path).map_err(file_err(path))?;
    encode_png(
        BufWriter::new(file),
        mask.width(),
        mask.height(),
        1,
        mask.data(),
        BitDepth::Eight,
        None,
    )
    .map_err(|e| format_err(path, e))
}

/// PFM bytes: `PF` (RGB) or `Pf` (gray), little-endian scale `-1.0`,
/// rows stored bottom to top. Alpha is dropped.
pub fn encode_pfm(img: &PixelMap) -> Vec<u8> {
    let (w, h, c) = img.dims();
    let (tag, out_c) = if c == 1 { ("Pf", 1) } else { ("PF", 3) };
    let mut out = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * out_c * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            for ch in 0..out_c {
                out.extend_from_slice(&(img.get(x, y, ch) as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Parses PFM bytes into a raw-space map. Either endianness is accepted;
/// the scale magnitude is ignored.
pub fn decode_pfm(bytes: &[u8]) -> Result<PixelMap, String> {
    let mut pos = 0;
    let mut token = || -> Result<&str, String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        std::str::from_utf8(&bytes[start..pos]).map_err(|_| "header is not ascii".to_string())
    };
    let channels = match token()? {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(format!("unknown PFM tag {other:?}")),
    };
    let w: usize = token()?.parse().map_err(|_| "bad width")?;
    let h: usize = token()?.parse().map_err(|_| "bad height")?;
    let scale: f64 = token()?.parse().map_err(|_| "bad scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err("scale must be nonzero".into());
    }
    // exactly one whitespace byte separates the header from the data
    pos += 1;
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(channels))
        .ok_or("size overflow")?;
    let data_bytes = bytes.get(pos..).unwrap_or(&[]);
    if data_bytes.len() != n * 4 {
        return Err(format!("expected {} data bytes, found {}", n * 4, data_bytes.len()));
    }
    let mut data = vec![0.0; n];
    for (i, chunk) in data_bytes.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row, rest) = (i / (w * channels), i % (w * channels));
        data[(h - 1 - row) * w * channels + rest] = v as f64;
    }
    PixelMap::new(w, h, channels, data, ColorSpace::Raw).map_err(|e| e.to_string())
}

pub fn write_pfm(path: &Path, img: &PixelMap) -> Result<(), IoError> {
    std::fs::write(path, encode_pfm(img)).map_err(file_err(path))
}

pub fn read_pfm(path: &Path) -> Result<PixelMap, IoError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(file_err(path))?;
    decode_pfm(&bytes).map_err(|m| format_err(path, m))
}

/// Reads a float map by extension: `.pfm` as raw floats, anything else as
/// PNG with its first channel taken verbatim.
pub fn read_scalar_map(path: &Path) -> Result<PixelMap, IoError> {
    let img = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pfm") => read_pfm(path)?,
        _ => read_png(path)?,
    };
    let c = img.channels();
    let data = img.data().chunks_exact(c).map(|p| p[0]).collect();
    Ok(PixelMap::new(img.width(), img.height(), 1, data, ColorSpace::Raw)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pfm_round_trip_and_layout() {
        let img = PixelMap::from_fn(3, 2, 3, ColorSpace::Raw, |x, y, c| (x * 10 + y * 100 + c) as f64 - 50.5).unwrap();
        let bytes = encode_pfm(&img);
        assert!(bytes.starts_with(b"PF\n3 2\n-1.0\n"));
        // first stored row is the bottom image row
        let first = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
        assert_eq!(first as f64, img.get(0, 1, 0));
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
    }

    #[test]
    fn pfm_big_endian_and_errors() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_be_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().data(), &[1.5, -2.0]);
        assert!(decode_pfm(b"P6\n1 1\n255\n").is_err());
        assert!(decode_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0").is_err());
    }

    proptest! {
        #[test]
        fn pfm_gray_round_trip(w in 1usize..6, h in 1usize..6, seed in any::<u64>()) {
            let img = PixelMap::from_fn(w, h, 1, ColorSpace::Raw, |x, y, _| {
                let v = seed.wrapping_mul(31 + x as u64).wrapping_add(y as u64 * 7919) % 10_000;
                v as f32 as f64 / 7.0
            }).unwrap();
            let back = decode_pfm(&encode_pfm(&img)).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert_eq!(*a as f32, *b as f32);
            }
        }
    }

    #[test]
    fn png_round_trips_keep_space() {
        let dir = tempfile::tempdir().unwrap();
        let lin = PixelMap::from_fn(5, 4, 3, ColorSpace::Linear, |x, y, c| {
            ((x + y * 5) * 3 + c) as f64 / 60.0
        })
        .unwrap();
        let p = dir.path().join("lin.png");
        write_png(&p, &lin, BitDepth::Sixteen).unwrap();
        let back = read_png(&p).unwrap();
        assert_eq!(back.space(), ColorSpace::Linear);
        assert!(back
            .data()
            .iter()
            .zip(lin.data())
            .all(|(a, b)| (a - b).abs() <= 0.5 / 65535.0 + 1e-12));

        let s = lin.clone().with_space(ColorSpace::Srgb).unwrap();
        let p = dir.path().join("s.png");
        write_png(&p, &s, BitDepth::Eight).unwrap();
        let back = read_png(&p).unwrap();
        assert_eq!(back.space(), ColorSpace::Srgb);
        assert!(back
            .data()
            .iter()
            .zip(s.data())
            .all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-12));
    }

    #[test]
    fn masks_are_stored_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let m = MaskMap::from_fn(4, 3, |x, y| if (x + y) % 2 == 0 { 1.0 } else { 0.0 }).unwrap();
        let p = dir.path().join("m.png");
        write_mask_png(&p, &m).unwrap();
        assert_eq!(read_mask_png(&p).unwrap(), m);
        let first = std::fs::read(&p).unwrap();
        write_mask_png(&p, &m).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first);
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_png(Path::new("/nonexistent/bg.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/bg.png"));
    }
}
