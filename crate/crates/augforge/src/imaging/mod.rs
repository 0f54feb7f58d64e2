//! Raster, annotation and randomness types shared by the rest of the crate.
//!
//! Images are stored as row-major, interleaved RGB `f32` values in `[0, 1]`.
//! Quantization to 8 bits only happens at the PNG boundary (see [`io`]).

mod image;
pub mod io;
mod rng;

pub use self::image::{BBox, Image, Mask, Sample};
pub use self::io::{decode_image, encode_image, load_image, load_mask, save_image, save_mask};
pub use self::rng::{derive_stream, sample_key, RngStream};

use thiserror::Error;

/// Errors raised by raster construction and PNG I/O.
#[derive(Debug, Error)]
pub enum ImageError {
    #[error("failed to decode {path}: {reason}")]
    Decode { path: String, reason: String },
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to encode {path}: {reason}")]
    Encode { path: String, reason: String },
    #[error("invalid raster: {0}")]
    Invalid(String),
}

/// Rec. 601 luma weights, used wherever a scalar brightness is needed.
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

#[inline]
pub fn luminance(rgb: [f32; 3]) -> f32 {
    LUMA[0] * rgb[0] + LUMA[1] * rgb[1] + LUMA[2] * rgb[2]
}
