use std::path::Path;

use crate::imaging::{load_image, luminance, Image, RngStream, Sample};

use super::kernel::{convolve, motion_kernel};
use super::noise::plasma_field;
use super::params::SeverityParams;
use super::AugmentError;

/// Replacement backgrounds, drawn uniformly per application.
#[derive(Debug, Clone)]
pub struct BackgroundPool {
    images: Vec<Image>,
}

impl BackgroundPool {
    pub fn from_images(images: Vec<Image>) -> Result<Self, AugmentError> {
        if images.is_empty() {
            return Err(AugmentError::Config("background pool is empty".into()));
        }
        Ok(Self { images })
    }

    /// Loads every `*.png` in `dir`, in file-name order.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, AugmentError> {
        let dir = dir.as_ref();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| AugmentError::Config(format!("background pool {}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        paths.sort();
        let images = paths.iter().map(load_image).collect::<Result<Vec<_>, _>>()?;
        Self::from_images(images)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }
}

/// Replaces background pixels (mask = 0) with a pool image resized to the sample.
pub fn apply_background(s: &Sample, pool: &BackgroundPool, rng: &mut RngStream) -> Result<Sample, AugmentError> {
    let mask = s
        .mask
        .as_ref()
        .ok_or_else(|| AugmentError::Config(format!("background requires a mask on sample {}", s.id)))?;
    if pool.is_empty() {
        return Err(AugmentError::Config("background pool is empty".into()));
    }
    let (w, h) = s.image.dims();
    let bg = rng.choose(pool.images()).resize(w, h);
    let mut out = s.clone();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                out.image.set_pixel(x, y, bg.pixel(x, y));
            }
        }
    }
    Ok(out)
}

fn severity(rng: &mut RngStream, p: &SeverityParams) -> usize {
    rng.int_inclusive(p.severity[0] as i64, p.severity[1] as i64) as usize
}

/// Screen blend of a plasma layer, `1 - (1 - v) * (1 - strength * plasma)`,
/// evaluated as `v + strength * plasma * (1 - v)` so it never darkens.
///
/// Severity 1 uses strength 0.5, severity 2 uses 0.65; both use a wibble decay of 2.
pub fn fog(img: &Image, p: &SeverityParams, rng: &mut RngStream) -> Image {
    const STRENGTH: [f32; 2] = [0.5, 0.65];
    let s = STRENGTH[severity(rng, p) - 1];
    let (w, h) = img.dims();
    let plasma = plasma_field(w, h, 2.0, rng);
    let mut out = img.clone();
    for (px, f) in out.data_mut().chunks_exact_mut(3).zip(&plasma) {
        for v in px.iter_mut() {
            *v += s * f * (1.0 - *v);
        }
    }
    out.clamp();
    out
}

struct SnowLevel {
    loc: f64,
    scale: f64,
    zoom: f64,
    threshold: f32,
    blur_radius: usize,
    keep: f32,
}

/// Sparse bright speckles, motion-blurred along a random direction.
///
/// A normal(loc, scale) field is drawn at `1/zoom` resolution, upsampled,
/// thresholded, and smeared with a line kernel of length `2 * blur_radius + 1`
/// at an angle in [-135, -45] degrees. The base image is lifted towards
/// `1.5 * gray + 0.5` with weight `1 - keep`, then the layer and its 180-degree
/// rotation are added.
pub fn snow(img: &Image, p: &SeverityParams, rng: &mut RngStream) -> Image {
    const LEVELS: [SnowLevel; 2] = [
        SnowLevel {
            loc: 0.1,
            scale: 0.3,
            zoom: 3.0,
            threshold: 0.5,
            blur_radius: 10,
            keep: 0.8,
        },
        SnowLevel {
            loc: 0.2,
            scale: 0.3,
            zoom: 2.0,
            threshold: 0.5,
            blur_radius: 12,
            keep: 0.7,
        },
    ];
    let lvl = &LEVELS[severity(rng, p) - 1];
    let (w, h) = img.dims();
    let lw = ((w as f64 / lvl.zoom).ceil() as usize).max(1);
    let lh = ((h as f64 / lvl.zoom).ceil() as usize).max(1);
    let small = Image::from_fn(lw, lh, |_, _| [rng.normal(lvl.loc, lvl.scale) as f32; 3]);
    let mut layer = small.resize(w, h);
    for v in layer.data_mut() {
        if *v < lvl.threshold {
            *v = 0.0;
        }
    }
    let k = 2 * lvl.blur_radius + 1;
    let angle = rng.range(-135.0, -45.0);
    let layer = convolve(&layer, &motion_kernel(k, angle), k, k);

    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let px = img.pixel(x, y);
            let lifted = (1.5 * luminance(px) + 0.5).min(1.0);
            let flake = layer.pixel(x, y)[0] + layer.pixel(w - 1 - x, h - 1 - y)[0];
            let o = px.map(|v| lvl.keep * v + (1.0 - lvl.keep) * v.max(lifted) + flake);
            out.set_pixel(x, y, o);
        }
    }
    out.clamp();
    out
}
