use crate::imaging::{luminance, Image, RngStream};

use super::params::{ChannelRangeParams, InvertParams, RangeParams, SeverityParams};

fn draw(rng: &mut RngStream, r: [f64; 2]) -> f32 {
    rng.range(r[0], r[1]) as f32
}

/// One draw, or one per channel.
fn draw_channels(rng: &mut RngStream, p: &ChannelRangeParams) -> [f32; 3] {
    if p.per_channel {
        [draw(rng, p.range), draw(rng, p.range), draw(rng, p.range)]
    } else {
        let v = draw(rng, p.range);
        [v; 3]
    }
}

fn map_pixels(img: &Image, f: impl Fn([f32; 3]) -> [f32; 3]) -> Image {
    let mut out = img.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        let r = f([px[0], px[1], px[2]]);
        px.copy_from_slice(&r);
    }
    out.clamp();
    out
}

fn draw_severity(rng: &mut RngStream, p: &SeverityParams) -> usize {
    rng.int_inclusive(p.severity[0] as i64, p.severity[1] as i64) as usize
}

pub(crate) fn rgb_to_hsv([r, g, b]: [f32; 3]) -> [f32; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    } / 6.0;
    let s = if max == 0.0 { 0.0 } else { delta / max };
    [h, s, max]
}

pub(crate) fn hsv_to_rgb([h, s, v]: [f32; 3]) -> [f32; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = (h6.floor() as i32).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

pub fn add_value(img: &Image, p: &ChannelRangeParams, rng: &mut RngStream) -> Image {
    let d = draw_channels(rng, p);
    map_pixels(img, |px| [px[0] + d[0], px[1] + d[1], px[2] + d[2]])
}

pub fn multiply(img: &Image, p: &ChannelRangeParams, rng: &mut RngStream) -> Image {
    let m = draw_channels(rng, p);
    map_pixels(img, |px| [px[0] * m[0], px[1] * m[1], px[2] * m[2]])
}

/// `1 - v` on all channels, or on a random subset when `per_channel`.
pub fn invert(img: &Image, p: &InvertParams, rng: &mut RngStream) -> Image {
    let flip = if p.per_channel {
        [rng.bernoulli(0.5), rng.bernoulli(0.5), rng.bernoulli(0.5)]
    } else {
        [true; 3]
    };
    map_pixels(img, |px| {
        let mut o = px;
        for c in 0..3 {
            if flip[c] {
                o[c] = 1.0 - px[c];
            }
        }
        o
    })
}

/// Scales the HSV value channel.
pub fn multiply_brightness(img: &Image, p: &RangeParams, rng: &mut RngStream) -> Image {
    let m = draw(rng, p.range);
    map_pixels(img, |px| {
        let [h, s, v] = rgb_to_hsv(px);
        hsv_to_rgb([h, s, (v * m).clamp(0.0, 1.0)])
    })
}

/// Moves each pixel away from (f > 1) or towards (f < 1) its gray value.
pub fn enhance_color(img: &Image, p: &RangeParams, rng: &mut RngStream) -> Image {
    let f = draw(rng, p.range);
    map_pixels(img, |px| {
        let g = luminance(px);
        [g + f * (px[0] - g), g + f * (px[1] - g), g + f * (px[2] - g)]
    })
}

/// Overlays the gray version with strength `alpha`.
pub fn grayscale(img: &Image, p: &RangeParams, rng: &mut RngStream) -> Image {
    let a = draw(rng, p.range);
    map_pixels(img, |px| {
        let g = luminance(px);
        [a * g + (1.0 - a) * px[0], a * g + (1.0 - a) * px[1], a * g + (1.0 - a) * px[2]]
    })
}

/// Corruption-benchmark contrast: compress every channel towards its image mean.
pub fn contrast(img: &Image, p: &SeverityParams, rng: &mut RngStream) -> Image {
    const LEVELS: [f32; 2] = [0.4, 0.3];
    let c = LEVELS[draw_severity(rng, p) - 1];
    let mean = img.mean();
    map_pixels(img, |px| {
        [
            (px[0] - mean[0]) * c + mean[0],
            (px[1] - mean[1]) * c + mean[1],
            (px[2] - mean[2]) * c + mean[2],
        ]
    })
}

/// `0.5 + alpha * (v - 0.5)`.
pub fn linear_contrast(img: &Image, p: &RangeParams, rng: &mut RngStream) -> Image {
    let a = draw(rng, p.range);
    map_pixels(img, |px| px.map(|v| 0.5 + a * (v - 0.5)))
}

/// Blend against the mean gray level with factor `f`.
pub fn enhance_contrast(img: &Image, p: &RangeParams, rng: &mut RngStream) -> Image {
    let f = draw(rng, p.range);
    let m = luminance(img.mean());
    map_pixels(img, |px| px.map(|v| m + f * (v - m)))
}

/// Corruption-benchmark saturate: HSV saturation scaled by the severity's factor.
pub fn saturate(img: &Image, p: &SeverityParams, rng: &mut RngStream) -> Image {
    const LEVELS: [(f32, f32); 2] = [(0.3, 0.0), (0.1, 0.0)];
    let (scale, shift) = LEVELS[draw_severity(rng, p) - 1];
    map_pixels(img, |px| {
        let [h, s, v] = rgb_to_hsv(px);
        hsv_to_rgb([h, (s * scale + shift).clamp(0.0, 1.0), v])
    })
}

/// Blend against black with factor `f`.
pub fn enhance_brightness(img: &Image, p: &RangeParams, rng: &mut RngStream) -> Image {
    let f = draw(rng, p.range);
    map_pixels(img, |px| px.map(|v| v * f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::derive_stream;

    fn fixed(v: f64) -> RangeParams {
        RangeParams { range: [v, v] }
    }

    #[test]
    fn multiply_by_two() {
        let img = Image::filled(3, 2, [0.3; 3]);
        let p = ChannelRangeParams {
            range: [2.0, 2.0],
            per_channel: false,
        };
        let out = multiply(&img, &p, &mut derive_stream(0, 0, 0, 0));
        assert!(out.data().iter().all(|v| (v - 0.6).abs() < 1e-6));
    }

    #[test]
    fn invert_twice_is_identity() {
        let img = Image::from_fn(5, 5, |x, y| [x as f32 / 8.0, y as f32 / 8.0, 0.5]);
        let p = InvertParams { per_channel: false };
        let mut rng = derive_stream(1, 0, 0, 0);
        let twice = invert(&invert(&img, &p, &mut rng), &p, &mut rng);
        for (a, b) in twice.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn hsv_round_trip() {
        for px in [[0.2, 0.4, 0.6], [1.0, 0.0, 0.0], [0.3, 0.3, 0.3], [0.9, 0.1, 0.5], [0.0; 3]] {
            let back = hsv_to_rgb(rgb_to_hsv(px));
            for c in 0..3 {
                assert!((back[c] - px[c]).abs() < 1e-6, "{px:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn brightness_scales_value_channel() {
        let img = Image::filled(2, 2, [0.2, 0.4, 0.3]);
        let out = multiply_brightness(&img, &fixed(2.0), &mut derive_stream(0, 0, 0, 0));
        let px = out.pixel(0, 0);
        assert!((px[0] - 0.4).abs() < 1e-6 && (px[1] - 0.8).abs() < 1e-6 && (px[2] - 0.6).abs() < 1e-6);
    }

    #[test]
    fn unit_factors_are_identity() {
        let img = Image::from_fn(4, 4, |x, y| [x as f32 / 4.0, y as f32 / 4.0, 0.3]);
        let mut rng = derive_stream(0, 0, 0, 0);
        for out in [
            enhance_color(&img, &fixed(1.0), &mut rng),
            enhance_brightness(&img, &fixed(1.0), &mut rng),
            enhance_contrast(&img, &fixed(1.0), &mut rng),
            linear_contrast(&img, &fixed(1.0), &mut rng),
            grayscale(&img, &fixed(0.0), &mut rng),
        ] {
            for (a, b) in out.data().iter().zip(img.data()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn contrast_preserves_channel_means() {
        let img = Image::from_fn(6, 6, |x, y| [x as f32 / 6.0, y as f32 / 6.0, 0.4]);
        let out = contrast(&img, &SeverityParams { severity: [1, 1] }, &mut derive_stream(0, 0, 0, 0));
        let (a, b) = (img.mean(), out.mean());
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() < 1e-5);
        }
        // severity 1 scales deviations by 0.4
        let dev_in = img.pixel(0, 0)[0] - a[0];
        let dev_out = out.pixel(0, 0)[0] - b[0];
        assert!((dev_out - 0.4 * dev_in).abs() < 1e-5);
    }

    #[test]
    fn saturate_reduces_saturation() {
        let img = Image::filled(2, 2, [0.9, 0.2, 0.1]);
        let out = saturate(&img, &SeverityParams::default(), &mut derive_stream(0, 0, 0, 0));
        assert!(rgb_to_hsv(out.pixel(0, 0))[1] < rgb_to_hsv(img.pixel(0, 0))[1]);
    }
}
