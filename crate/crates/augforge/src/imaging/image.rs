use serde::{Deserialize, Serialize};

use super::ImageError;

/// An RGB raster with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    /// A black image.
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds an image from interleaved RGB data, rejecting out-of-range values.
    pub fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Invalid(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(ImageError::Invalid(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImageError::Invalid(format!("value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set_pixel(x, y, f(x, y));
            }
        }
        img.clamp();
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access to the raw buffer. Callers are expected to [`clamp`](Self::clamp) afterwards.
    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    #[inline]
    pub fn luminance(&self, x: usize, y: usize) -> f32 {
        super::luminance(self.pixel(x, y))
    }

    /// Clamps every value into `[0, 1]`; non-finite values become 0.
    pub fn clamp(&mut self) {
        for v in &mut self.data {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
    }

    pub fn map_values(&self, f: impl Fn(f32) -> f32) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = f(*v);
        }
        out.clamp();
        out
    }

    /// Pixel-wise `alpha * other + (1 - alpha) * self`.
    pub fn blend(&self, other: &Image, alpha: f32) -> Self {
        assert_eq!(self.dims(), other.dims());
        let mut out = self.clone();
        for (o, b) in out.data.iter_mut().zip(&other.data) {
            *o = alpha * b + (1.0 - alpha) * *o;
        }
        out.clamp();
        out
    }

    /// Per-pixel luminance as a single-channel plane.
    pub fn luma_plane(&self) -> Vec<f32> {
        self.data
            .chunks_exact(3)
            .map(|p| super::luminance([p[0], p[1], p[2]]))
            .collect()
    }

    pub fn mean(&self) -> [f32; 3] {
        let mut acc = [0f64; 3];
        for p in self.data.chunks_exact(3) {
            for c in 0..3 {
                acc[c] += p[c] as f64;
            }
        }
        let n = (self.width * self.height) as f64;
        [(acc[0] / n) as f32, (acc[1] / n) as f32, (acc[2] / n) as f32]
    }

    /// Copies the integer window `[x0, x1) x [y0, y1)`.
    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        assert!(x0 < x1 && x1 <= self.width && y0 < y1 && y1 <= self.height);
        let w = x1 - x0;
        let mut data = Vec::with_capacity(w * (y1 - y0) * 3);
        for y in y0..y1 {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Self {
            width: w,
            height: y1 - y0,
            data,
        }
    }

    /// Bilinear sample at index-space coordinates (pixel `i` has its center at `i`).
    /// Taps outside the raster read as zero when `zero_pad`, otherwise the edge is replicated.
    pub fn sample_bilinear(&self, fx: f64, fy: f64, zero_pad: bool) -> [f32; 3] {
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = (fx - x0) as f32;
        let ty = (fy - y0) as f32;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let tap = |x: i64, y: i64| -> [f32; 3] {
            let inside = x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height;
            if inside {
                self.pixel(x as usize, y as usize)
            } else if zero_pad {
                [0.0; 3]
            } else {
                let cx = x.clamp(0, self.width as i64 - 1) as usize;
                let cy = y.clamp(0, self.height as i64 - 1) as usize;
                self.pixel(cx, cy)
            }
        };
        let p00 = tap(x0, y0);
        if tx == 0.0 && ty == 0.0 {
            return p00;
        }
        let p10 = tap(x0 + 1, y0);
        let p01 = tap(x0, y0 + 1);
        let p11 = tap(x0 + 1, y0 + 1);
        let mut out = [0f32; 3];
        for c in 0..3 {
            let top = p00[c] * (1.0 - tx) + p10[c] * tx;
            let bottom = p01[c] * (1.0 - tx) + p11[c] * tx;
            out[c] = top * (1.0 - ty) + bottom * ty;
        }
        out
    }

    /// Bilinear resize with pixel-center alignment and edge replication.
    pub fn resize(&self, width: usize, height: usize) -> Self {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = Self::new(width, height);
        for y in 0..height {
            let fy = (y as f64 + 0.5) * sy - 0.5;
            for x in 0..width {
                let fx = (x as f64 + 0.5) * sx - 0.5;
                out.set_pixel(x, y, self.sample_bilinear(fx, fy, false));
            }
        }
        out.clamp();
        out
    }
}

/// Binary foreground mask paired with an [`Image`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be positive");
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<bool>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(ImageError::Invalid(format!(
                "mask buffer of {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.set(x, y, f(x, y));
            }
        }
        m
    }

    /// A mask whose foreground is exactly the pixels covered by `boxes`.
    pub fn from_boxes(width: usize, height: usize, boxes: &[BBox]) -> Self {
        Self::from_fn(width, height, |x, y| {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            boxes
                .iter()
                .any(|b| cx >= b.x_min && cx < b.x_max && cy >= b.y_min && cy < b.y_max)
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        assert!(x0 < x1 && x1 <= self.width && y0 < y1 && y1 <= self.height);
        Self::from_fn(x1 - x0, y1 - y0, |x, y| self.get(x + x0, y + y0))
    }

    /// Nearest-neighbour resize with pixel-center alignment.
    pub fn resize(&self, width: usize, height: usize) -> Self {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Self::from_fn(width, height, |x, y| {
            let src_x = (((x as f64 + 0.5) * sx) as usize).min(self.width - 1);
            let src_y = (((y as f64 + 0.5) * sy) as usize).min(self.height - 1);
            self.get(src_x, src_y)
        })
    }

    /// Half-open hull of the foreground pixels, or `None` for an empty mask.
    pub fn hull(&self) -> Option<(f64, f64, f64, f64)> {
        let mut hull: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    hull = Some(match hull {
                        None => (x, y, x, y),
                        Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
                    });
                }
            }
        }
        hull.map(|(a, b, c, d)| (a as f64, b as f64, c as f64 + 1.0, d as f64 + 1.0))
    }
}

/// Axis-aligned box in half-open floating pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    #[serde(default)]
    pub class_id: u32,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, class_id: u32) -> Result<Self, ImageError> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
            class_id,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(ImageError::Invalid(format!(
                "degenerate box ({x_min}, {y_min}, {x_max}, {y_max})"
            )))
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Clips to `[0, w] x [0, h]`; `None` if nothing is left.
    pub fn clip(&self, width: f64, height: f64) -> Option<BBox> {
        let b = BBox {
            x_min: self.x_min.clamp(0.0, width),
            y_min: self.y_min.clamp(0.0, height),
            x_max: self.x_max.clamp(0.0, width),
            y_max: self.y_max.clamp(0.0, height),
            class_id: self.class_id,
        };
        b.is_valid().then_some(b)
    }
}

/// One unit of augmentation work: an image with its annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub mask: Option<Mask>,
    pub boxes: Vec<BBox>,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: Image) -> Self {
        Self {
            id: id.into(),
            image,
            mask: None,
            boxes: Vec::new(),
        }
    }

    pub fn with_mask(mut self, mask: Mask) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn with_boxes(mut self, boxes: Vec<BBox>) -> Self {
        self.boxes = boxes;
        self
    }

    /// Checks the mask dimensions and box validity.
    pub fn validate(&self) -> Result<(), ImageError> {
        if let Some(m) = &self.mask {
            if m.dims() != self.image.dims() {
                return Err(ImageError::Invalid(format!(
                    "sample {}: mask {:?} does not match image {:?}",
                    self.id,
                    m.dims(),
                    self.image.dims()
                )));
            }
        }
        if let Some(b) = self.boxes.iter().find(|b| !b.is_valid()) {
            return Err(ImageError::Invalid(format!("sample {}: invalid box {b:?}", self.id)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_raw_rejects_out_of_range() {
        assert!(Image::from_raw(1, 1, vec![0.0, 0.5, 1.5]).is_err());
        assert!(Image::from_raw(1, 1, vec![0.0, 0.5]).is_err());
        assert!(Image::from_raw(1, 1, vec![0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn box_geometry() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0, 0).unwrap();
        let b = BBox::new(5.0, 0.0, 15.0, 10.0, 0).unwrap();
        assert_eq!(a.area(), 100.0);
        assert_eq!(a.intersection_area(&b), 50.0);
        assert!(BBox::new(1.0, 0.0, 1.0, 2.0, 0).is_err());
        assert_eq!(b.clip(12.0, 8.0).unwrap(), BBox::new(5.0, 0.0, 12.0, 8.0, 0).unwrap());
        assert!(a.clip(0.0, 5.0).is_none());
    }

    #[test]
    fn mask_from_boxes_hull_matches_integral_box() {
        let b = BBox::new(3.0, 2.0, 7.0, 9.0, 0).unwrap();
        let m = Mask::from_boxes(12, 12, &[b]);
        assert_eq!(m.count(), 4 * 7);
        assert_eq!(m.hull(), Some((3.0, 2.0, 7.0, 9.0)));
    }

    #[test]
    fn resize_identity_and_upsample_constant() {
        let img = Image::from_fn(4, 3, |x, y| [x as f32 / 4.0, y as f32 / 3.0, 0.5]);
        assert_eq!(img.resize(4, 3), img);
        let c = Image::filled(3, 3, [0.25, 0.5, 0.75]).resize(7, 5);
        assert!(c.data().chunks(3).all(|p| p == [0.25, 0.5, 0.75]));
    }

    #[test]
    fn crop_copies_window() {
        let img = Image::from_fn(5, 4, |x, y| [x as f32 / 5.0, y as f32 / 4.0, 0.0]);
        let c = img.crop(1, 1, 4, 3);
        assert_eq!(c.dims(), (3, 2));
        assert_eq!(c.pixel(0, 0), img.pixel(1, 1));
        assert_eq!(c.pixel(2, 1), img.pixel(3, 2));
    }
}
