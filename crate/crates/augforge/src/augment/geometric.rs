//! Annotation-aware geometric transforms. Coordinates are continuous with
//! pixel `(i, j)` covering `[i, i + 1) x [j, j + 1)`.

use crate::imaging::{BBox, Image, Mask, RngStream, Sample};

use super::params::{AffineParams, RandomCropParams};

const CROP_ATTEMPTS: usize = 20;

pub fn apply_affine(s: &Sample, p: &AffineParams, rng: &mut RngStream) -> Sample {
    let angle = rng.range(p.rotation_range_deg[0], p.rotation_range_deg[1]);
    rotate_sample(s, angle)
}

/// Rotates about the image center by `angle_deg` (counter-clockwise on screen).
///
/// A point maps as `x' = cx + cos·dx + sin·dy`, `y' = cy - sin·dx + cos·dy`.
/// The image is resampled bilinearly with zero padding, the mask by nearest
/// neighbour. Each box becomes the pixel extent of its rotated outline inside
/// the frame: the pixels whose centers map back into the box, as for the
/// mask. Boxes that cover no pixel center are dropped.
pub fn rotate_sample(s: &Sample, angle_deg: f64) -> Sample {
    if angle_deg == 0.0 {
        return s.clone();
    }
    let (w, h) = s.image.dims();
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let forward = |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        (cx + cos * dx + sin * dy, cy - sin * dx + cos * dy)
    };
    let inverse = |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        (cx + cos * dx - sin * dy, cy + sin * dx + cos * dy)
    };

    let image = Image::from_fn(w, h, |x, y| {
        let (sx, sy) = inverse(x as f64 + 0.5, y as f64 + 0.5);
        s.image.sample_bilinear(sx - 0.5, sy - 0.5, true)
    });
    let mask = s.mask.as_ref().map(|m| {
        Mask::from_fn(w, h, |x, y| {
            let (sx, sy) = inverse(x as f64 + 0.5, y as f64 + 0.5);
            let (fx, fy) = (sx.floor(), sy.floor());
            fx >= 0.0 && fy >= 0.0 && (fx as usize) < w && (fy as usize) < h && m.get(fx as usize, fy as usize)
        })
    });
    let boxes = s
        .boxes
        .iter()
        .filter_map(|b| {
            let ring = [
                forward(b.x_min, b.y_min),
                forward(b.x_max, b.y_min),
                forward(b.x_max, b.y_max),
                forward(b.x_min, b.y_max),
            ];
            let (x0, y0, x1, y1) = visible_hull(&ring, w as f64, h as f64)?;
            // pixels whose centers map back into the box, the rule the mask follows
            let mut hull: Option<(usize, usize, usize, usize)> = None;
            for y in (y0.floor() as usize)..(y1.ceil() as usize).min(h) {
                for x in (x0.floor() as usize)..(x1.ceil() as usize).min(w) {
                    let (sx, sy) = inverse(x as f64 + 0.5, y as f64 + 0.5);
                    if sx >= b.x_min && sx < b.x_max && sy >= b.y_min && sy < b.y_max {
                        hull = Some(hull.map_or((x, y, x, y), |(a, c, d, e)| (a.min(x), c.min(y), d.max(x), e.max(y))));
                    }
                }
            }
            hull.map(|(a, c, d, e)| BBox {
                x_min: a as f64,
                y_min: c as f64,
                x_max: d as f64 + 1.0,
                y_max: e as f64 + 1.0,
                class_id: b.class_id,
            })
        })
        .collect();
    Sample {
        id: s.id.clone(),
        image,
        mask,
        boxes,
    }
}

/// Clips a convex polygon to `[0, w] x [0, h]` (Sutherland-Hodgman) and
/// returns the bounding box of what is left.
fn visible_hull(ring: &[(f64, f64)], w: f64, h: f64) -> Option<(f64, f64, f64, f64)> {
    let mut poly = ring.to_vec();
    // (axis, bound, keep the side below the bound)
    for (axis, bound, below) in [(0, 0.0, false), (0, w, true), (1, 0.0, false), (1, h, true)] {
        let coord = |p: (f64, f64)| if axis == 0 { p.0 } else { p.1 };
        let inside = |p: (f64, f64)| if below { coord(p) <= bound } else { coord(p) >= bound };
        let mut next = Vec::with_capacity(poly.len() + 1);
        for (i, &cur) in poly.iter().enumerate() {
            let prev = poly[(i + poly.len() - 1) % poly.len()];
            if inside(cur) != inside(prev) {
                let t = (bound - coord(prev)) / (coord(cur) - coord(prev));
                next.push((prev.0 + t * (cur.0 - prev.0), prev.1 + t * (cur.1 - prev.1)));
            }
            if inside(cur) {
                next.push(cur);
            }
        }
        poly = next;
        if poly.is_empty() {
            return None;
        }
    }
    let x_min = poly.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).max(0.0);
    let y_min = poly.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).max(0.0);
    let x_max = poly.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).min(w);
    let y_max = poly.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).min(h);
    (x_max > x_min && y_max > y_min).then_some((x_min, y_min, x_max, y_max))
}

/// Integer crop window `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CropWindow {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    fn as_box(&self) -> BBox {
        BBox {
            x_min: self.x0 as f64,
            y_min: self.y0 as f64,
            x_max: self.x1 as f64,
            y_max: self.y1 as f64,
            class_id: 0,
        }
    }
}

/// Crops to `win` and resizes back to the original size.
///
/// Boxes map as `(x - x0) * w / cw` and are clipped; boxes that vanish are dropped.
pub fn crop_sample(s: &Sample, win: CropWindow) -> Sample {
    let (w, h) = s.image.dims();
    assert!(win.x0 < win.x1 && win.x1 <= w && win.y0 < win.y1 && win.y1 <= h, "crop window out of frame");
    if win == (CropWindow { x0: 0, y0: 0, x1: w, y1: h }) {
        return s.clone();
    }
    let sx = w as f64 / win.width() as f64;
    let sy = h as f64 / win.height() as f64;
    let image = s.image.crop(win.x0, win.y0, win.x1, win.y1).resize(w, h);
    let mask = s
        .mask
        .as_ref()
        .map(|m| m.crop(win.x0, win.y0, win.x1, win.y1).resize(w, h));
    let boxes = s
        .boxes
        .iter()
        .filter_map(|b| {
            BBox {
                x_min: (b.x_min - win.x0 as f64) * sx,
                y_min: (b.y_min - win.y0 as f64) * sy,
                x_max: (b.x_max - win.x0 as f64) * sx,
                y_max: (b.y_max - win.y0 as f64) * sy,
                class_id: b.class_id,
            }
            .clip(w as f64, h as f64)
        })
        .collect();
    Sample {
        id: s.id.clone(),
        image,
        mask,
        boxes,
    }
}

/// Proposes up to 20 windows and takes the first that keeps at least
/// `min_visible` of every box's area; falls back to the identity.
pub fn apply_random_crop(s: &Sample, p: &RandomCropParams, rng: &mut RngStream) -> Sample {
    let (w, h) = s.image.dims();
    for _ in 0..CROP_ATTEMPTS {
        let scale = rng.range(p.scale_range[0], p.scale_range[1]);
        let cw = ((scale * w as f64).round() as usize).clamp(1, w);
        let ch = ((scale * h as f64).round() as usize).clamp(1, h);
        let x0 = rng.int_inclusive(0, (w - cw) as i64) as usize;
        let y0 = rng.int_inclusive(0, (h - ch) as i64) as usize;
        let win = CropWindow {
            x0,
            y0,
            x1: x0 + cw,
            y1: y0 + ch,
        };
        let frame = win.as_box();
        let keeps = s
            .boxes
            .iter()
            .all(|b| b.intersection_area(&frame) >= p.min_visible * b.area());
        if keeps {
            return crop_sample(s, win);
        }
    }
    s.clone()
}
