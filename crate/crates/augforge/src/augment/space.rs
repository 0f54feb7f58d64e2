//! Lighting effects tied to the target: a specular bloom and deepened shadows.

use crate::imaging::{luminance, Image, Mask, RngStream};

use super::params::{ShadowParams, SpecularParams};
use super::AugmentError;

fn require_foreground(img: &Image, mask: &Mask) -> Result<(), AugmentError> {
    if mask.dims() != img.dims() {
        return Err(AugmentError::Precondition(format!(
            "mask {:?} does not match image {:?}",
            mask.dims(),
            img.dims()
        )));
    }
    if mask.count() == 0 {
        return Err(AugmentError::Precondition("mask has no foreground pixels".into()));
    }
    Ok(())
}

/// Draws the bloom center: uniform among the brightest tenth (rounded up) of
/// the foreground pixels, ranked by luminance with ties in raster order.
pub fn sample_specular_center(img: &Image, mask: &Mask, rng: &mut RngStream) -> Result<(usize, usize), AugmentError> {
    require_foreground(img, mask)?;
    let w = img.width();
    let mut fg: Vec<(f32, usize)> = mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .map(|(i, _)| (img.luminance(i % w, i / w), i))
        .collect();
    fg.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let top = fg.len().div_ceil(10);
    let (_, i) = fg[rng.index(top)];
    Ok((i % w, i / w))
}

/// Adds `peak * exp(-d^2 / (2 sigma^2))` around `center`, clamped to 1.
pub(crate) fn bloom(img: &Image, center: (usize, usize), sigma: f64, peak: f64) -> Image {
    let mut out = img.clone();
    let (cx, cy) = (center.0 as f64, center.1 as f64);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            let add = if sigma > 0.0 {
                peak * (-d2 / (2.0 * sigma * sigma)).exp()
            } else if d2 == 0.0 {
                peak
            } else {
                0.0
            };
            if add > 0.0 {
                let px = img.pixel(x, y).map(|v| (v as f64 + add).min(1.0) as f32);
                out.set_pixel(x, y, px);
            }
        }
    }
    out
}

/// A white Gaussian bloom centered on a bright foreground pixel.
///
/// Sigma is `sigma_frac` times the diagonal of the foreground's bounding box.
pub fn apply_specular(img: &Image, mask: &Mask, p: &SpecularParams, rng: &mut RngStream) -> Result<Image, AugmentError> {
    let center = sample_specular_center(img, mask, rng)?;
    let (x0, y0, x1, y1) = mask.hull().expect("non-empty mask has a hull");
    let sigma = p.sigma_frac * (x1 - x0).hypot(y1 - y0);
    Ok(bloom(img, center, sigma, p.peak))
}

/// Darkens foreground pixels with luminance below `threshold` by `factor`;
/// bright foreground and the whole background are left bit-identical.
pub fn apply_shadow(img: &Image, mask: &Mask, p: &ShadowParams, _rng: &mut RngStream) -> Result<Image, AugmentError> {
    require_foreground(img, mask)?;
    let mut out = img.clone();
    let f = p.factor as f32;
    for y in 0..img.height() {
        for x in 0..img.width() {
            let px = img.pixel(x, y);
            if mask.get(x, y) && (luminance(px) as f64) < p.threshold {
                out.set_pixel(x, y, px.map(|v| v * f));
            }
        }
    }
    Ok(out)
}
