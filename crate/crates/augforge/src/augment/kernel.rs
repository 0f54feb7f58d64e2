//! Convolution-based augmentations. Borders replicate the edge pixel.

use crate::imaging::{Image, RngStream};

use super::params::{ChannelRangeParams, EmbossParams, KernelSizeParams, MotionBlurParams, RangeParams};

/// Dense `kw x kh` correlation, anchored at the kernel center.
pub(crate) fn convolve(img: &Image, kernel: &[f32], kw: usize, kh: usize) -> Image {
    debug_assert_eq!(kernel.len(), kw * kh);
    let (w, h) = img.dims();
    let (rx, ry) = ((kw / 2) as i64, (kh / 2) as i64);
    let src = img.data();
    let mut out = Image::new(w, h);
    let dst = out.data_mut();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = [0f32; 3];
            for ky in 0..kh as i64 {
                let sy = (y + ky - ry).clamp(0, h as i64 - 1) as usize;
                for kx in 0..kw as i64 {
                    let k = kernel[(ky as usize) * kw + kx as usize];
                    if k == 0.0 {
                        continue;
                    }
                    let sx = (x + kx - rx).clamp(0, w as i64 - 1) as usize;
                    let i = (sy * w + sx) * 3;
                    acc[0] += k * src[i];
                    acc[1] += k * src[i + 1];
                    acc[2] += k * src[i + 2];
                }
            }
            let o = (y as usize * w + x as usize) * 3;
            dst[o..o + 3].copy_from_slice(&acc);
        }
    }
    out.clamp();
    out
}

/// Horizontal then vertical pass with the same 1-D kernel.
fn separable(img: &Image, k: &[f32]) -> Image {
    let horizontal = convolve(img, k, k.len(), 1);
    convolve(&horizontal, k, 1, k.len())
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let r = (3.0 * sigma).ceil().max(1.0) as i32;
    let mut k: Vec<f32> = (-r..=r).map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

pub fn gaussian_blur(img: &Image, p: &RangeParams, rng: &mut RngStream) -> Image {
    let sigma = rng.range(p.range[0], p.range[1]) as f32;
    if sigma <= 0.0 {
        return img.clone();
    }
    separable(img, &gaussian_kernel(sigma))
}

pub fn average_blur(img: &Image, p: &KernelSizeParams, rng: &mut RngStream) -> Image {
    let k = *rng.choose(&p.sizes);
    if k <= 1 {
        return img.clone();
    }
    separable(img, &vec![1.0 / k as f32; k])
}

pub fn median_blur(img: &Image, p: &KernelSizeParams, rng: &mut RngStream) -> Image {
    let k = *rng.choose(&p.sizes);
    if k <= 1 {
        return img.clone();
    }
    let (w, h) = img.dims();
    let r = (k / 2) as i64;
    let mut out = Image::new(w, h);
    let mut window = Vec::with_capacity(k * k);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut px = [0f32; 3];
            for (c, slot) in px.iter_mut().enumerate() {
                window.clear();
                for dy in -r..=r {
                    let sy = (y + dy).clamp(0, h as i64 - 1) as usize;
                    for dx in -r..=r {
                        let sx = (x + dx).clamp(0, w as i64 - 1) as usize;
                        window.push(img.pixel(sx, sy)[c]);
                    }
                }
                let mid = window.len() / 2;
                let (_, m, _) = window.select_nth_unstable_by(mid, f32::total_cmp);
                *slot = *m;
            }
            out.set_pixel(x as usize, y as usize, px);
        }
    }
    out
}

/// Normalized line kernel of side `k` through the center at `angle_deg`.
pub(crate) fn motion_kernel(k: usize, angle_deg: f64) -> Vec<f32> {
    let mut kern = vec![0f32; k * k];
    let c = (k / 2) as f64;
    let (s, co) = angle_deg.to_radians().sin_cos();
    let steps = 4 * k;
    for i in 0..=steps {
        let t = -c + 2.0 * c * i as f64 / steps as f64;
        let x = (c + t * co).round().clamp(0.0, (k - 1) as f64) as usize;
        let y = (c + t * s).round().clamp(0.0, (k - 1) as f64) as usize;
        kern[y * k + x] = 1.0;
    }
    let sum: f32 = kern.iter().sum();
    kern.iter_mut().for_each(|v| *v /= sum);
    kern
}

pub fn motion_blur(img: &Image, p: &MotionBlurParams, rng: &mut RngStream) -> Image {
    let k = *rng.choose(&p.sizes);
    let angle = rng.range(p.angle_range_deg[0], p.angle_range_deg[1]);
    convolve(img, &motion_kernel(k, angle), k, k)
}

pub fn emboss(img: &Image, p: &EmbossParams, rng: &mut RngStream) -> Image {
    let alpha = rng.range(p.alpha[0], p.alpha[1]) as f32;
    let s = rng.range(p.strength[0], p.strength[1]) as f32;
    #[rustfmt::skip]
    let k = [
        -1.0 - s, -s, 0.0,
        -s, 1.0, s,
        0.0, s, 1.0 + s,
    ];
    img.blend(&convolve(img, &k, 3, 3), alpha)
}

#[rustfmt::skip]
const LAPLACIAN: [f32; 9] = [
    0.0, 1.0, 0.0,
    1.0, -4.0, 1.0,
    0.0, 1.0, 0.0,
];

/// The clamped Laplacian edge image; zero on constant regions.
pub fn edge_response(img: &Image) -> Image {
    convolve(img, &LAPLACIAN, 3, 3)
}

pub fn edge_detect(img: &Image, p: &RangeParams, rng: &mut RngStream) -> Image {
    let alpha = rng.range(p.range[0], p.range[1]) as f32;
    img.blend(&edge_response(img), alpha)
}

/// Blend against a smoothed copy: `smooth + f * (img - smooth)`. The outermost ring is left as is.
pub fn enhance_sharpness(img: &Image, p: &RangeParams, rng: &mut RngStream) -> Image {
    let f = rng.range(p.range[0], p.range[1]) as f32;
    #[rustfmt::skip]
    let k = [
        1.0 / 13.0, 1.0 / 13.0, 1.0 / 13.0,
        1.0 / 13.0, 5.0 / 13.0, 1.0 / 13.0,
        1.0 / 13.0, 1.0 / 13.0, 1.0 / 13.0,
    ];
    let smooth = convolve(img, &k, 3, 3);
    let (w, h) = img.dims();
    let mut out = img.clone();
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let (s, o) = (smooth.pixel(x, y), img.pixel(x, y));
            out.set_pixel(x, y, [0, 1, 2].map(|c| s[c] + f * (o[c] - s[c])));
        }
    }
    out.clamp();
    out
}

/// Elementwise N(0, sigma) noise with sigma drawn per application.
pub fn additive_gaussian_noise(img: &Image, p: &ChannelRangeParams, rng: &mut RngStream) -> Image {
    let sigma = rng.range(p.range[0], p.range[1]);
    let mut out = img.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        if p.per_channel {
            for v in px.iter_mut() {
                *v += rng.normal(0.0, sigma) as f32;
            }
        } else {
            let n = rng.normal(0.0, sigma) as f32;
            px.iter_mut().for_each(|v| *v += n);
        }
    }
    out.clamp();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::derive_stream;

    fn ramp() -> Image {
        Image::from_fn(9, 7, |x, y| [x as f32 / 9.0, y as f32 / 7.0, ((x * y) % 5) as f32 / 5.0])
    }

    #[test]
    fn blurs_preserve_constant_images() {
        let img = Image::filled(8, 6, [0.4, 0.5, 0.6]);
        let mut rng = derive_stream(0, 0, 0, 0);
        let outs = [
            gaussian_blur(&img, &RangeParams { range: [1.5, 1.5] }, &mut rng),
            average_blur(&img, &KernelSizeParams { sizes: vec![5] }, &mut rng),
            median_blur(&img, &KernelSizeParams { sizes: vec![3] }, &mut rng),
            motion_blur(&img, &MotionBlurParams::default(), &mut rng),
        ];
        for out in outs {
            for (a, b) in out.data().iter().zip(img.data()) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn edge_response_is_zero_on_constant() {
        let img = Image::filled(5, 5, [0.7; 3]);
        assert!(edge_response(&img).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn median_removes_isolated_spike() {
        let mut img = Image::new(5, 5);
        img.set_pixel(2, 2, [1.0; 3]);
        let out = median_blur(&img, &KernelSizeParams { sizes: vec![3] }, &mut derive_stream(0, 0, 0, 0));
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn motion_kernel_is_normalized_line() {
        for (k, a) in [(3, 0.0), (5, 45.0), (7, 123.0)] {
            let kern = motion_kernel(k, a);
            let s: f32 = kern.iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
            assert!(kern[(k / 2) * k + k / 2] > 0.0, "center tap must be on the line");
        }
        let horiz = motion_kernel(3, 0.0);
        assert_eq!(horiz.iter().filter(|v| **v > 0.0).count(), 3);
        assert!(horiz[3..6].iter().all(|v| *v > 0.0));
    }

    #[test]
    fn sharpness_unit_factor_is_identity() {
        let img = ramp();
        let out = enhance_sharpness(&img, &RangeParams { range: [1.0, 1.0] }, &mut derive_stream(0, 0, 0, 0));
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn emboss_zero_alpha_is_identity() {
        let img = ramp();
        let p = EmbossParams {
            alpha: [0.0, 0.0],
            strength: [1.0, 1.0],
        };
        assert_eq!(emboss(&img, &p, &mut derive_stream(0, 0, 0, 0)), img);
    }

    #[test]
    fn noise_has_requested_spread() {
        let img = Image::filled(100, 100, [0.5; 3]);
        let p = ChannelRangeParams {
            range: [0.05, 0.05],
            per_channel: true,
        };
        let out = additive_gaussian_noise(&img, &p, &mut derive_stream(3, 0, 0, 0));
        let n = out.data().len() as f64;
        let var: f64 = out.data().iter().map(|v| (*v as f64 - 0.5).powi(2)).sum::<f64>() / n;
        assert!((var.sqrt() - 0.05).abs() < 0.003, "std {}", var.sqrt());
    }
}
