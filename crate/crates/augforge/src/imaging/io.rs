//! 8-bit PNG I/O. Values map to bytes by `round(v * 255)` and back by `v / 255`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Cursor, Seek, Write};
use std::path::Path;

use super::{Image, ImageError, Mask};

/// Byte to channel value.
#[inline]
pub fn dequantize(b: u8) -> f32 {
    b as f32 / 255.0
}

/// Channel value to byte, rounding half away from zero.
#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

struct Decoded {
    width: usize,
    height: usize,
    channels: usize,
    bytes: Vec<u8>,
}

fn decode<R: BufRead + Seek>(reader: R, path: &str) -> Result<Decoded, ImageError> {
    let err = |reason: String| ImageError::Decode {
        path: path.to_string(),
        reason,
    };
    let mut decoder = png::Decoder::new(reader);
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| err(e.to_string()))?;
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight {
        return Err(err(format!("unsupported bit depth {depth:?}, expected 8")));
    }
    let channels = match color {
        png::ColorType::Rgb => 3,
        png::ColorType::Grayscale => 1,
        other => return Err(err(format!("unsupported color type {other:?}"))),
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| err("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| err(e.to_string()))?;
    let (width, height) = (info.width as usize, info.height as usize);
    buf.truncate(info.buffer_size());
    if width == 0 || height == 0 {
        return Err(err("zero-sized image".into()));
    }
    // Rows may carry padding when line_size exceeds width * channels.
    let line = info.line_size;
    let bytes = if line == width * channels {
        buf
    } else {
        buf.chunks(line)
            .flat_map(|row| row[..width * channels].iter().copied())
            .collect()
    };
    Ok(Decoded {
        width,
        height,
        channels,
        bytes,
    })
}

fn open(path: &Path) -> Result<BufReader<File>, ImageError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| ImageError::Decode {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
}

fn to_image(d: Decoded) -> Image {
    let data = match d.channels {
        3 => d.bytes.iter().map(|b| dequantize(*b)).collect(),
        _ => d
            .bytes
            .iter()
            .flat_map(|b| {
                let v = dequantize(*b);
                [v, v, v]
            })
            .collect(),
    };
    Image::from_raw(d.width, d.height, data).expect("dequantized values are in range")
}

/// Loads an 8-bit RGB or grayscale PNG; grayscale is replicated to three channels.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    let path = path.as_ref();
    let d = decode(open(path)?, &path.display().to_string())?;
    Ok(to_image(d))
}

/// Decodes an image from in-memory PNG bytes.
pub fn decode_image(bytes: &[u8]) -> Result<Image, ImageError> {
    decode(Cursor::new(bytes), "<memory>").map(to_image)
}

/// Loads a single-channel mask PNG; any byte above zero is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask, ImageError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let d = decode(open(path)?, &name)?;
    if d.channels != 1 {
        return Err(ImageError::Decode {
            path: name,
            reason: "mask must be a single-channel PNG".into(),
        });
    }
    Mask::from_raw(d.width, d.height, d.bytes.iter().map(|b| *b > 0).collect())
}

fn encode<W: Write>(w: W, width: usize, height: usize, color: png::ColorType, bytes: &[u8], path: &str) -> Result<(), ImageError> {
    let err = |e: png::EncodingError| ImageError::Encode {
        path: path.to_string(),
        reason: e.to_string(),
    };
    let mut enc = png::Encoder::new(w, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(err)?;
    writer.write_image_data(bytes).map_err(err)?;
    writer.finish().map_err(err)
}

fn create(path: &Path) -> Result<BufWriter<File>, ImageError> {
    File::create(path).map(BufWriter::new).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes an 8-bit RGB PNG.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.data().iter().map(|v| quantize(*v)).collect();
    encode(create(path)?, img.width(), img.height(), png::ColorType::Rgb, &bytes, &path.display().to_string())
}

/// Encodes an image as 8-bit RGB PNG bytes.
pub fn encode_image(img: &Image) -> Result<Vec<u8>, ImageError> {
    let bytes: Vec<u8> = img.data().iter().map(|v| quantize(*v)).collect();
    let mut out = Vec::new();
    encode(&mut out, img.width(), img.height(), png::ColorType::Rgb, &bytes, "<memory>")?;
    Ok(out)
}

/// Writes a mask as a grayscale PNG with foreground 255 and background 0.
pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes: Vec<u8> = mask.data().iter().map(|v| if *v { 255 } else { 0 }).collect();
    encode(create(path)?, mask.width(), mask.height(), png::ColorType::Grayscale, &bytes, &path.display().to_string())
}
