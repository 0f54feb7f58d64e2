//! Procedural noise fields: 2-D simplex noise and diamond-square plasma.

use crate::imaging::RngStream;

const GRAD2: [[f64; 2]; 8] = [
    [1.0, 0.0],
    [-1.0, 0.0],
    [0.0, 1.0],
    [0.0, -1.0],
    [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
    [-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
    [std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2],
    [-std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2],
];

/// Seeded 2-D simplex noise with output in roughly `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Simplex2 {
    perm: [u8; 512],
}

impl Simplex2 {
    pub fn new(rng: &mut RngStream) -> Self {
        let mut p: Vec<u8> = (0..=255u8).collect();
        for i in (1..256).rev() {
            let j = rng.index(i + 1);
            p.swap(i, j);
        }
        let mut perm = [0u8; 512];
        for i in 0..512 {
            perm[i] = p[i & 255];
        }
        Self { perm }
    }

    fn grad(&self, i: i64, j: i64) -> [f64; 2] {
        let a = self.perm[(i & 255) as usize] as i64;
        GRAD2[(self.perm[((a + j) & 255) as usize] & 7) as usize]
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let f2 = 0.5 * (3f64.sqrt() - 1.0);
        let g2 = (3.0 - 3f64.sqrt()) / 6.0;
        let s = (x + y) * f2;
        let i = (x + s).floor();
        let j = (y + s).floor();
        let t = (i + j) * g2;
        let x0 = x - (i - t);
        let y0 = y - (j - t);
        let (i1, j1) = if x0 > y0 { (1, 0) } else { (0, 1) };
        let x1 = x0 - i1 as f64 + g2;
        let y1 = y0 - j1 as f64 + g2;
        let x2 = x0 - 1.0 + 2.0 * g2;
        let y2 = y0 - 1.0 + 2.0 * g2;
        let (ii, jj) = (i as i64, j as i64);
        let corner = |dx: f64, dy: f64, g: [f64; 2]| {
            let t = 0.5 - dx * dx - dy * dy;
            if t < 0.0 {
                0.0
            } else {
                let t2 = t * t;
                t2 * t2 * (g[0] * dx + g[1] * dy)
            }
        };
        let n = corner(x0, y0, self.grad(ii, jj))
            + corner(x1, y1, self.grad(ii + i1, jj + j1))
            + corner(x2, y2, self.grad(ii + 1, jj + 1));
        70.0 * n
    }
}

/// Fractal simplex field on a `w x h` grid, mapped to `[0, 1]`.
///
/// `feature_scale` is the wavelength of the first octave in pixels; each
/// further octave halves the wavelength and the amplitude.
pub fn simplex_field(w: usize, h: usize, octaves: u32, feature_scale: f64, rng: &mut RngStream) -> Vec<f32> {
    let noise = Simplex2::new(rng);
    let ox = rng.range(0.0, 1024.0);
    let oy = rng.range(0.0, 1024.0);
    let mut out = Vec::with_capacity(w * h);
    let norm: f64 = (0..octaves).map(|o| 0.5f64.powi(o as i32)).sum();
    for y in 0..h {
        for x in 0..w {
            let mut v = 0.0;
            let mut freq = 1.0 / feature_scale;
            let mut amp = 1.0;
            for _ in 0..octaves {
                v += amp * noise.sample(x as f64 * freq + ox, y as f64 * freq + oy);
                freq *= 2.0;
                amp *= 0.5;
            }
            out.push((0.5 * (v / norm + 1.0)).clamp(0.0, 1.0) as f32);
        }
    }
    out
}

/// Diamond-square plasma fractal on a `w x h` grid, normalized to `[0, 1]`.
///
/// `wibble_decay` controls how quickly the random displacement shrinks per
/// subdivision; larger values give smoother fields.
pub fn plasma_field(w: usize, h: usize, wibble_decay: f64, rng: &mut RngStream) -> Vec<f32> {
    let size = w.max(h).next_power_of_two().max(2);
    let n = size + 1;
    let mut grid = vec![0f64; n * n];
    let at = |x: usize, y: usize| (y % size) * n + (x % size);
    let mut step = size;
    let mut wibble = 100.0;
    while step >= 2 {
        let half = step / 2;
        // square step: centers of squares
        for y in (0..size).step_by(step) {
            for x in (0..size).step_by(step) {
                let avg = (grid[at(x, y)] + grid[at(x + step, y)] + grid[at(x, y + step)] + grid[at(x + step, y + step)])
                    / 4.0;
                grid[at(x + half, y + half)] = avg + wibble * rng.range(-1.0, 1.0);
            }
        }
        // diamond step: edge midpoints, wrapping around
        for y in (0..size).step_by(half) {
            let start = if (y / half).is_multiple_of(2) { half } else { 0 };
            for x in (start..size).step_by(step) {
                let l = grid[at((x + size - half) % size, y)];
                let r = grid[at(x + half, y)];
                let u = grid[at(x, (y + size - half) % size)];
                let d = grid[at(x, y + half)];
                grid[at(x, y)] = (l + r + u + d) / 4.0 + wibble * rng.range(-1.0, 1.0);
            }
        }
        step = half;
        wibble /= wibble_decay;
    }
    let mut out: Vec<f64> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| grid[at(x, y)]).collect();
    let (lo, hi) = out
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let span = hi - lo;
    for v in &mut out {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
    out.into_iter().map(|v| v as f32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::derive_stream;

    #[test]
    fn simplex_is_bounded_and_deterministic() {
        let a = simplex_field(40, 30, 3, 8.0, &mut derive_stream(1, 2, 3, 4));
        let b = simplex_field(40, 30, 3, 8.0, &mut derive_stream(1, 2, 3, 4));
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        let spread = a.iter().cloned().fold(0f32, f32::max) - a.iter().cloned().fold(1f32, f32::min);
        assert!(spread > 0.3, "field should vary, spread {spread}");
    }

    #[test]
    fn simplex_is_continuous() {
        let n = Simplex2::new(&mut derive_stream(0, 0, 0, 0));
        for k in 0..200 {
            let x = k as f64 * 0.173;
            let y = k as f64 * 0.091;
            assert!((n.sample(x, y) - n.sample(x + 1e-4, y)).abs() < 1e-2);
        }
    }

    #[test]
    fn plasma_spans_unit_interval() {
        let p = plasma_field(33, 20, 2.0, &mut derive_stream(5, 0, 0, 0));
        assert_eq!(p.len(), 33 * 20);
        let max = p.iter().cloned().fold(0f32, f32::max);
        let min = p.iter().cloned().fold(1f32, f32::min);
        assert!(min >= 0.0 && max <= 1.0 && max - min > 0.5);
    }
}
