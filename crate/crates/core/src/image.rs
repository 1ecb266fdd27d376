//! Raster containers shared across the pipeline.
//!
//! Pixel `(col, row)` has its center at continuous coordinates `(col, row)`.

use serde::{Deserialize, Serialize};

/// Interleaved RGB raster with channel values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Luma with Rec. 601 weights.
    pub fn to_gray(&self) -> GrayImage {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        GrayImage { width: self.width, height: self.height, data }
    }

    pub fn same_size(&self, other: &RgbImage) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Single-channel raster.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with edge replication.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample with edge replication.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let ax = x - x0;
        let ay = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.get_clamped(xi, yi);
        let b = self.get_clamped(xi + 1, yi);
        let c = self.get_clamped(xi, yi + 1);
        let d = self.get_clamped(xi + 1, yi + 1);
        (a * (1.0 - ax) + b * ax) * (1.0 - ay) + (c * (1.0 - ax) + d * ax) * ay
    }
}

/// Binary raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![true; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-bounds coordinates read as unset.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn complement(&self) -> Mask {
        Mask { width: self.width, height: self.height, data: self.data.iter().map(|b| !b).collect() }
    }

    pub fn union_with(&mut self, other: &Mask) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a |= *b;
        }
    }

    /// Mask grown by one pixel in the 8-neighbourhood.
    pub fn dilate(&self) -> Mask {
        Mask::from_fn(self.width, self.height, |x, y| {
            (-1..=1).any(|dy| {
                (-1..=1).any(|dx| self.get_signed(x as isize + dx, y as isize + dy))
            })
        })
    }

    /// Row-major iterator over set pixel coordinates.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }
}

/// `n × h × w × 3` video.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<RgbImage>,
}

impl FrameSequence {
    pub fn new(frames: Vec<RgbImage>) -> Self {
        let (width, height) = frames.first().map(|f| (f.width, f.height)).unwrap_or((0, 0));
        Self { width, height, frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Per-frame masks of one semantic layer over its lifetime `[t_start, t_end]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerMaskTrack {
    pub layer_id: u32,
    pub t_start: usize,
    pub t_end: usize,
    /// `masks[k]` is the mask of frame `t_start + k`.
    pub masks: Vec<Mask>,
}

impl LayerMaskTrack {
    /// Mask at absolute frame `t`, or `None` outside the lifetime.
    pub fn at(&self, t: usize) -> Option<&Mask> {
        if t < self.t_start || t > self.t_end {
            return None;
        }
        self.masks.get(t - self.t_start)
    }

    pub fn covers(&self, t: usize, x: usize, y: usize) -> bool {
        self.at(t).is_some_and(|m| m.get(x, y))
    }

    /// Builds a track from full-length per-frame masks, trimming to the first and
    /// last non-empty frame. Returns `None` when every frame is empty.
    pub fn from_full(layer_id: u32, masks: Vec<Mask>) -> Option<Self> {
        let first = masks.iter().position(|m| !m.is_empty())?;
        let last = masks.iter().rposition(|m| !m.is_empty())?;
        let masks = masks[first..=last].to_vec();
        Some(Self { layer_id, t_start: first, t_end: last, masks })
    }
}

/// Layer metadata that survives serialization without the raster payload.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpan {
    pub layer_id: u32,
    pub t_start: usize,
    pub t_end: usize,
}

/// Builds the background track (layer 0) as the complement of the union of the
/// foreground masks, spanning all `n_frames`.
pub fn background_track(width: usize, height: usize, n_frames: usize, fg: &[LayerMaskTrack]) -> LayerMaskTrack {
    let masks = (0..n_frames)
        .map(|t| {
            let mut union = Mask::new(width, height);
            for l in fg {
                if let Some(m) = l.at(t) {
                    union.union_with(m);
                }
            }
            union.complement()
        })
        .collect();
    LayerMaskTrack { layer_id: 0, t_start: 0, t_end: n_frames.saturating_sub(1), masks }
}
