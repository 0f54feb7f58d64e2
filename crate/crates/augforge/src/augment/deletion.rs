use crate::imaging::{Image, RngStream};

use super::kernel::edge_response;
use super::noise::simplex_field;
use super::params::{ChannelRangeParams, CoarseDropoutParams, SimplexNoiseParams, SuperPixelsParams};

/// Zeroes a drawn fraction of pixels (or of individual channel values when `per_channel`).
pub fn dropout(img: &Image, p: &ChannelRangeParams, rng: &mut RngStream) -> Image {
    let frac = rng.range(p.range[0], p.range[1]);
    let mut out = img.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        if p.per_channel {
            for v in px.iter_mut() {
                if rng.bernoulli(frac) {
                    *v = 0.0;
                }
            }
        } else if rng.bernoulli(frac) {
            px.fill(0.0);
        }
    }
    out
}

/// Zeroes a few random rectangles.
pub fn coarse_dropout(img: &Image, p: &CoarseDropoutParams, rng: &mut RngStream) -> Image {
    let (w, h) = img.dims();
    let n = rng.int_inclusive(p.count[0] as i64, p.count[1] as i64);
    let max_w = ((p.max_size_frac * w as f64).floor() as i64).max(1);
    let max_h = ((p.max_size_frac * h as f64).floor() as i64).max(1);
    let mut out = img.clone();
    for _ in 0..n {
        let rw = rng.int_inclusive(1, max_w) as usize;
        let rh = rng.int_inclusive(1, max_h) as usize;
        let x0 = rng.int_inclusive(0, (w - rw) as i64) as usize;
        let y0 = rng.int_inclusive(0, (h - rh) as i64) as usize;
        let channel = p.per_channel.then(|| rng.index(3));
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                let mut px = out.pixel(x, y);
                match channel {
                    Some(c) => px[c] = 0.0,
                    None => px = [0.0; 3],
                }
                out.set_pixel(x, y, px);
            }
        }
    }
    out
}

/// Pixel-wise `m * edges(img) + (1 - m) * img` for a blend mask `m` in `[0, 1]`.
pub fn blend_with_edges(img: &Image, mask: &[f32]) -> Image {
    assert_eq!(mask.len(), img.width() * img.height());
    let edges = edge_response(img);
    let mut out = img.clone();
    for ((o, e), m) in out
        .data_mut()
        .chunks_exact_mut(3)
        .zip(edges.data().chunks_exact(3))
        .zip(mask)
    {
        for c in 0..3 {
            o[c] = m * e[c] + (1.0 - m) * o[c];
        }
    }
    out.clamp();
    out
}

/// Blends the image with its edge response through a fractal simplex mask.
pub fn apply_simplex_noise(img: &Image, p: &SimplexNoiseParams, rng: &mut RngStream) -> Image {
    let (w, h) = img.dims();
    let mask = simplex_field(w, h, p.octaves, p.feature_scale, rng);
    blend_with_edges(img, &mask)
}

/// Grid-seeded local k-means over color and position; returns one label per pixel.
fn cluster(img: &Image, n_segments: usize) -> Vec<usize> {
    const ITERATIONS: usize = 4;
    // Weight of spatial distance relative to color distance.
    const COMPACTNESS: f64 = 0.1;

    let (w, h) = img.dims();
    let step = ((w * h) as f64 / n_segments as f64).sqrt().max(1.0);
    let nx = ((w as f64 / step).round() as usize).clamp(1, w);
    let ny = ((h as f64 / step).round() as usize).clamp(1, h);

    // center: [x, y, r, g, b]
    let mut centers: Vec<[f64; 5]> = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = ((i as f64 + 0.5) * w as f64 / nx as f64).floor().min((w - 1) as f64);
            let y = ((j as f64 + 0.5) * h as f64 / ny as f64).floor().min((h - 1) as f64);
            let c = img.pixel(x as usize, y as usize);
            centers.push([x, y, c[0] as f64, c[1] as f64, c[2] as f64]);
        }
    }

    let mut labels: Vec<usize> = (0..w * h)
        .map(|idx| {
            let (x, y) = (idx % w, idx / w);
            let i = (x * nx / w).min(nx - 1);
            let j = (y * ny / h).min(ny - 1);
            j * nx + i
        })
        .collect();
    let mut dist = vec![f64::INFINITY; w * h];
    let reach = (2.0 * step).ceil() as i64;
    let spatial = (COMPACTNESS / step).powi(2);

    for _ in 0..ITERATIONS {
        dist.fill(f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let (cx, cy) = (c[0].round() as i64, c[1].round() as i64);
            let y_lo = (cy - reach).max(0) as usize;
            let y_hi = ((cy + reach) as usize).min(h - 1);
            let x_lo = (cx - reach).max(0) as usize;
            let x_hi = ((cx + reach) as usize).min(w - 1);
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    let p = img.pixel(x, y);
                    let dc = (p[0] as f64 - c[2]).powi(2) + (p[1] as f64 - c[3]).powi(2) + (p[2] as f64 - c[4]).powi(2);
                    let ds = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2);
                    let d = dc + spatial * ds;
                    let idx = y * w + x;
                    if d < dist[idx] {
                        dist[idx] = d;
                        labels[idx] = k;
                    }
                }
            }
        }
        let mut acc = vec![[0f64; 6]; centers.len()];
        for (idx, &l) in labels.iter().enumerate() {
            let p = img.pixel(idx % w, idx / w);
            let a = &mut acc[l];
            a[0] += (idx % w) as f64;
            a[1] += (idx / w) as f64;
            a[2] += p[0] as f64;
            a[3] += p[1] as f64;
            a[4] += p[2] as f64;
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                for d in 0..5 {
                    c[d] = a[d] / a[5];
                }
            }
        }
    }
    connected_components(&labels, w, h)
}

/// Relabels so that every 4-connected region of equal label gets its own id,
/// numbered in raster order of first appearance.
fn connected_components(labels: &[usize], w: usize, h: usize) -> Vec<usize> {
    let mut out = vec![usize::MAX; w * h];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if out[start] != usize::MAX {
            continue;
        }
        let l = labels[start];
        out[start] = next;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            let mut visit = |n: usize| {
                if out[n] == usize::MAX && labels[n] == l {
                    out[n] = next;
                    stack.push(n);
                }
            };
            if x > 0 {
                visit(idx - 1);
            }
            if x + 1 < w {
                visit(idx + 1);
            }
            if y > 0 {
                visit(idx - w);
            }
            if y + 1 < h {
                visit(idx + w);
            }
        }
        next += 1;
    }
    out
}

/// Partitions into roughly `n_segments` contiguous cells and replaces each
/// cell by its mean color with probability `replace_prob`.
pub fn apply_super_pixels(img: &Image, p: &SuperPixelsParams, rng: &mut RngStream) -> Image {
    if p.replace_prob <= 0.0 {
        return img.clone();
    }
    let labels = cluster(img, p.n_segments);
    let n_cells = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![[0f64; 4]; n_cells];
    for (idx, &l) in labels.iter().enumerate() {
        let px = img.pixel(idx % img.width(), idx / img.width());
        let s = &mut sums[l];
        for c in 0..3 {
            s[c] += px[c] as f64;
        }
        s[3] += 1.0;
    }
    let replace: Vec<bool> = (0..n_cells).map(|_| rng.bernoulli(p.replace_prob)).collect();
    let mut out = img.clone();
    for (idx, &l) in labels.iter().enumerate() {
        if replace[l] {
            let s = sums[l];
            let mean = [(s[0] / s[3]) as f32, (s[1] / s[3]) as f32, (s[2] / s[3]) as f32];
            out.set_pixel(idx % img.width(), idx / img.width(), mean);
        }
    }
    out.clamp();
    out
}
