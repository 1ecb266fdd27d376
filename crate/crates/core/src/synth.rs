//! Synthetic layered scenes with analytic motion.
//!
//! Every foreground layer is a textured shape defined in its own canonical
//! frame and mapped into the image by a per-frame similarity transform. The
//! generator returns the composited frames, exact visible-region masks, the
//! motion model (ground truth for [`crate::tracking::OracleTracker`]) and the
//! clean background.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::image::{FrameSequence, LayerMaskTrack, Mask, RgbImage};
use crate::par;

/// Supersampling factor per axis.
pub const SUPERSAMPLE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    Invalid(String),
}

/// `p = m · u + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine2 {
    pub m: [[f64; 2]; 2],
    pub t: [f64; 2],
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 { m: [[1.0, 0.0], [0.0, 1.0]], t: [0.0, 0.0] };

    pub fn similarity(center: [f64; 2], angle: f64, scale: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { m: [[scale * c, -scale * s], [scale * s, scale * c]], t: center }
    }

    #[inline]
    pub fn apply(&self, p: &Point2) -> Point2 {
        Point2::new(
            self.m[0][0] * p.x + self.m[0][1] * p.y + self.t[0],
            self.m[1][0] * p.x + self.m[1][1] * p.y + self.t[1],
        )
    }

    pub fn inverse(&self) -> Self {
        let [[a, b], [c, d]] = self.m;
        let det = a * d - b * c;
        let m = [[d / det, -b / det], [-c / det, a / det]];
        let t = [-(m[0][0] * self.t[0] + m[0][1] * self.t[1]), -(m[1][0] * self.t[0] + m[1][1] * self.t[1])];
        Self { m, t }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    /// Constant-rate translation, rotation and scaling.
    Affine {
        start: [f64; 2],
        #[serde(default)]
        velocity: [f64; 2],
        #[serde(default)]
        angle: f64,
        #[serde(default)]
        angular_velocity: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        scale_rate: f64,
    },
    /// Catmull-Rom path through waypoints spread uniformly over the video.
    Path {
        waypoints: Vec<[f64; 2]>,
        #[serde(default)]
        angular_velocity: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Motion {
    /// Transform at continuous time `t` for a video of `n_frames` frames.
    pub fn at(&self, t: f64, n_frames: usize) -> Affine2 {
        match self {
            Motion::Affine { start, velocity, angle, angular_velocity, scale, scale_rate } => Affine2::similarity(
                [start[0] + velocity[0] * t, start[1] + velocity[1] * t],
                angle + angular_velocity * t,
                scale + scale_rate * t,
            ),
            Motion::Path { waypoints, angular_velocity } => {
                let n = waypoints.len();
                if n == 1 {
                    return Affine2::similarity(waypoints[0], angular_velocity * t, 1.0);
                }
                let span = (n_frames.max(2) - 1) as f64;
                let s = (t / span).clamp(0.0, 1.0) * (n - 1) as f64;
                let i = (s.floor() as usize).min(n - 2);
                let u = s - i as f64;
                let p = |k: isize| waypoints[k.clamp(0, n as isize - 1) as usize];
                let (p0, p1, p2, p3) = (p(i as isize - 1), p(i as isize), p(i as isize + 1), p(i as isize + 2));
                let cr = |a: f64, b: f64, c: f64, d: f64| {
                    0.5 * (2.0 * b + (-a + c) * u + (2.0 * a - 5.0 * b + 4.0 * c - d) * u * u
                        + (-a + 3.0 * b - 3.0 * c + d) * u * u * u)
                };
                Affine2::similarity(
                    [cr(p0[0], p1[0], p2[0], p3[0]), cr(p0[1], p1[1], p2[1], p3[1])],
                    angular_velocity * t,
                    1.0,
                )
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Disk { radius: f64 },
    Rectangle { width: f64, height: f64 },
    /// Star-shaped blob `r(φ) = radius · (1 + wobble · sin(lobes · φ))`.
    Sprite { radius: f64, wobble: f64, lobes: u32 },
}

impl Shape {
    pub fn contains(&self, u: &Point2) -> bool {
        match *self {
            Shape::Disk { radius } => u.x * u.x + u.y * u.y <= radius * radius,
            Shape::Rectangle { width, height } => u.x.abs() <= width / 2.0 && u.y.abs() <= height / 2.0,
            Shape::Sprite { radius, wobble, lobes } => {
                let r = radius * (1.0 + wobble * (lobes as f64 * u.y.atan2(u.x)).sin());
                u.x * u.x + u.y * u.y <= r * r
            }
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let ok = match *self {
            Shape::Disk { radius } => radius > 0.0,
            Shape::Rectangle { width, height } => width > 0.0 && height > 0.0,
            Shape::Sprite { radius, wobble, .. } => radius > 0.0 && (0.0..1.0).contains(&wobble),
        };
        if ok { Ok(()) } else { Err(SynthError::Invalid(format!("bad shape {self:?}"))) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    Constant { color: [f64; 3] },
    Checker { size: f64, a: [f64; 3], b: [f64; 3] },
    /// Smooth multi-octave lattice noise per channel around `base`.
    ValueNoise { scale: f64, octaves: u32, base: [f64; 3], amplitude: f64, seed: u64 },
    /// Linear ramp from `from` to `to` along `direction`, spanning `length` px
    /// centred on the origin.
    LinearGradient { from: [f64; 3], to: [f64; 3], direction: [f64; 2], length: f64 },
    /// Piecewise-constant random cells.
    Noise { cell: f64, base: [f64; 3], amplitude: f64, seed: u64 },
}

fn hash2(x: i64, y: i64, seed: u64) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    h = h.wrapping_add((x as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    h ^= h >> 31;
    h = h.wrapping_add((y as u64).wrapping_mul(0x94D0_49BB_1331_11EB));
    h ^= h >> 29;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 32;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (s(fx), s(fy));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = hash2(ix, iy, seed);
    let b = hash2(ix + 1, iy, seed);
    let c = hash2(ix, iy + 1, seed);
    let d = hash2(ix + 1, iy + 1, seed);
    (a * (1.0 - sx) + b * sx) * (1.0 - sy) + (c * (1.0 - sx) + d * sx) * sy
}

impl Texture {
    pub fn eval(&self, u: &Point2) -> [f64; 3] {
        match self {
            Texture::Constant { color } => *color,
            Texture::Checker { size, a, b } => {
                let k = (u.x / size).floor() as i64 + (u.y / size).floor() as i64;
                if k.rem_euclid(2) == 0 { *a } else { *b }
            }
            Texture::ValueNoise { scale, octaves, base, amplitude, seed } => {
                let mut out = *base;
                for (c, o) in out.iter_mut().enumerate() {
                    let mut v = 0.0;
                    let mut norm = 0.0;
                    let mut amp = 1.0;
                    let mut freq = 1.0 / scale;
                    for oct in 0..(*octaves).max(1) {
                        let s = seed.wrapping_mul(31).wrapping_add(c as u64 * 7919 + oct as u64 * 104_729);
                        v += amp * value_noise(u.x * freq, u.y * freq, s);
                        norm += amp;
                        amp *= 0.5;
                        freq *= 2.0;
                    }
                    *o = (*o + amplitude * 2.0 * (v / norm - 0.5)).clamp(0.0, 1.0);
                }
                out
            }
            Texture::LinearGradient { from, to, direction, length } => {
                let n = direction[0].hypot(direction[1]).max(1e-12);
                let s = ((u.x * direction[0] + u.y * direction[1]) / n / length + 0.5).clamp(0.0, 1.0);
                [0, 1, 2].map(|c| from[c] + (to[c] - from[c]) * s)
            }
            Texture::Noise { cell, base, amplitude, seed } => {
                let (ix, iy) = ((u.x / cell).floor() as i64, (u.y / cell).floor() as i64);
                [0, 1, 2].map(|c| {
                    (base[c] + amplitude * 2.0 * (hash2(ix, iy, seed.wrapping_add(c as u64)) - 0.5)).clamp(0.0, 1.0)
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub shape: Shape,
    pub texture: Texture,
    pub motion: Motion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub background: Texture,
    /// Foreground layers, back to front; layer id = index + 1.
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width == 0 || self.height == 0 || self.n_frames == 0 {
            return Err(SynthError::Invalid("resolution and frame count must be positive".into()));
        }
        for l in &self.layers {
            l.shape.validate()?;
            if let Motion::Path { waypoints, .. } = &l.motion {
                if waypoints.is_empty() {
                    return Err(SynthError::Invalid("path motion needs waypoints".into()));
                }
            }
        }
        Ok(())
    }

    fn reseeded(&self, tex: &Texture, salt: u64) -> Texture {
        match tex.clone() {
            Texture::ValueNoise { scale, octaves, base, amplitude, seed } => Texture::ValueNoise {
                scale,
                octaves,
                base,
                amplitude,
                seed: seed ^ self.seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(salt),
            },
            Texture::Noise { cell, base, amplitude, seed } => Texture::Noise {
                cell,
                base,
                amplitude,
                seed: seed ^ self.seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(salt),
            },
            t => t,
        }
    }
}

/// Per-layer, per-frame transforms from canonical to image coordinates.
/// Layer 0 (background) is static.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionModel {
    pub transforms: Vec<Vec<Affine2>>,
}

impl MotionModel {
    pub fn from_spec(spec: &SceneSpec) -> Self {
        let mut transforms = vec![vec![Affine2::IDENTITY; spec.n_frames]];
        for l in &spec.layers {
            transforms.push((0..spec.n_frames).map(|t| l.motion.at(t as f64, spec.n_frames)).collect());
        }
        Self { transforms }
    }

    pub fn transform(&self, layer: usize, frame: usize) -> Affine2 {
        self.transforms[layer][frame]
    }
}

/// Output of [`generate`].
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub frames: FrameSequence,
    /// Visible-region masks; index 0 is the background, then one entry per
    /// foreground layer that is visible in at least one frame.
    pub tracks: Vec<LayerMaskTrack>,
    pub motion: MotionModel,
    pub clean_background: FrameSequence,
}

struct Sampler {
    spec: SceneSpec,
    textures: Vec<Texture>,
    inverse_cache: Vec<Affine2>,
}

impl Sampler {
    fn new(spec: &SceneSpec, t: f64) -> Self {
        let mut textures = vec![spec.reseeded(&spec.background, 0)];
        for (i, l) in spec.layers.iter().enumerate() {
            textures.push(spec.reseeded(&l.texture, i as u64 + 1));
        }
        let inverse_cache = spec.layers.iter().map(|l| l.motion.at(t, spec.n_frames).inverse()).collect();
        Self { spec: spec.clone(), textures, inverse_cache }
    }

    /// Top layer index (0 = background) and colour at image point `p`.
    fn sample(&self, p: &Point2, background_only: bool) -> (usize, [f64; 3]) {
        if !background_only {
            for (i, l) in self.spec.layers.iter().enumerate().rev() {
                let u = self.inverse_cache[i].apply(p);
                if l.shape.contains(&u) {
                    return (i + 1, self.textures[i + 1].eval(&u));
                }
            }
        }
        (0, self.textures[0].eval(p))
    }

    /// Supersampled pixel colour plus per-layer hit counts.
    fn pixel(&self, x: usize, y: usize, background_only: bool) -> ([f64; 3], Vec<u32>) {
        let mut acc = [0.0; 3];
        let mut hits = vec![0u32; self.spec.layers.len() + 1];
        let n = SUPERSAMPLE;
        for j in 0..n {
            for i in 0..n {
                let p = Point2::new(
                    x as f64 + (i as f64 + 0.5) / n as f64 - 0.5,
                    y as f64 + (j as f64 + 0.5) / n as f64 - 0.5,
                );
                let (l, c) = self.sample(&p, background_only);
                hits[l] += 1;
                for k in 0..3 {
                    acc[k] += c[k];
                }
            }
        }
        let inv = 1.0 / (n * n) as f64;
        ([acc[0] * inv, acc[1] * inv, acc[2] * inv], hits)
    }
}

/// Renders the scene at continuous time `t` (colour only).
pub fn render_at(spec: &SceneSpec, t: f64) -> RgbImage {
    render_with_labels(spec, t).0
}

/// Colour plus per-pixel owning layer (the layer with the most supersample
/// hits; ties go to the nearer layer).
fn render_with_labels(spec: &SceneSpec, t: f64) -> (RgbImage, Vec<usize>) {
    let sampler = Sampler::new(spec, t);
    let (w, h) = (spec.width, spec.height);
    let rows = par::map_range(h, |y| {
        (0..w)
            .map(|x| {
                let (c, hits) = sampler.pixel(x, y, false);
                let mut best = 0;
                for (l, &n) in hits.iter().enumerate() {
                    if n >= hits[best] {
                        best = l;
                    }
                }
                (c, best)
            })
            .collect::<Vec<_>>()
    });
    let mut img = RgbImage::new(w, h);
    let mut labels = vec![0; w * h];
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (c, l)) in row.into_iter().enumerate() {
            img.set(x, y, c);
            labels[y * w + x] = l;
        }
    }
    (img, labels)
}

pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let (w, h, n) = (spec.width, spec.height, spec.n_frames);
    let mut frames = Vec::with_capacity(n);
    let mut per_layer: Vec<Vec<Mask>> = vec![Vec::with_capacity(n); spec.layers.len() + 1];
    for t in 0..n {
        let (img, labels) = render_with_labels(spec, t as f64);
        frames.push(img);
        for (l, masks) in per_layer.iter_mut().enumerate() {
            masks.push(Mask { width: w, height: h, data: labels.iter().map(|&x| x == l).collect() });
        }
    }
    let background_masks = per_layer.remove(0);
    let mut tracks = vec![LayerMaskTrack { layer_id: 0, t_start: 0, t_end: n - 1, masks: background_masks }];
    for (i, masks) in per_layer.into_iter().enumerate() {
        if let Some(tr) = LayerMaskTrack::from_full(i as u32 + 1, masks) {
            tracks.push(tr);
        }
    }
    let sampler = Sampler::new(spec, 0.0);
    let bg_rows = par::map_range(h, |y| (0..w).map(|x| sampler.pixel(x, y, true).0).collect::<Vec<_>>());
    let mut bg = RgbImage::new(w, h);
    for (y, row) in bg_rows.into_iter().enumerate() {
        for (x, c) in row.into_iter().enumerate() {
            bg.set(x, y, c);
        }
    }
    Ok(SyntheticScene {
        spec: spec.clone(),
        frames: FrameSequence::new(frames),
        tracks,
        motion: MotionModel::from_spec(spec),
        clean_background: FrameSequence::new(vec![bg; n]),
    })
}

fn noise(scale: f64, base: [f64; 3], amplitude: f64, seed: u64) -> Texture {
    Texture::ValueNoise { scale, octaves: 2, base, amplitude, seed }
}

/// Fixed evaluation suite S1-S6 (version 1).
pub fn standard_suite() -> Vec<SceneSpec> {
    let bg = |seed| noise(16.0, [0.45, 0.5, 0.4], 0.25, seed);
    let mover = |shape, texture, start: [f64; 2], velocity: [f64; 2], angular_velocity: f64, scale_rate: f64| LayerSpec {
        shape,
        texture,
        motion: Motion::Affine { start, velocity, angle: 0.0, angular_velocity, scale: 1.0, scale_rate },
    };
    vec![
        SceneSpec {
            name: "S1".into(),
            width: 64,
            height: 64,
            n_frames: 8,
            background: bg(11),
            layers: vec![],
            seed: 1,
        },
        SceneSpec {
            name: "S2".into(),
            width: 64,
            height: 64,
            n_frames: 16,
            background: bg(12),
            layers: vec![mover(
                Shape::Rectangle { width: 20.0, height: 20.0 },
                noise(8.0, [0.75, 0.35, 0.3], 0.2, 21),
                [16.0, 20.0],
                [1.5, 0.75],
                0.0,
                0.0,
            )],
            seed: 2,
        },
        SceneSpec {
            name: "S3".into(),
            width: 96,
            height: 96,
            n_frames: 24,
            background: bg(13),
            layers: vec![mover(
                Shape::Disk { radius: 18.0 },
                noise(10.0, [0.3, 0.4, 0.75], 0.2, 31),
                [34.0, 40.0],
                [1.0, 0.5],
                0.04,
                0.008,
            )],
            seed: 3,
        },
        SceneSpec {
            name: "S4".into(),
            width: 64,
            height: 64,
            n_frames: 16,
            background: bg(14),
            layers: vec![mover(
                Shape::Rectangle { width: 16.0, height: 24.0 },
                noise(8.0, [0.8, 0.6, 0.25], 0.2, 41),
                [24.0, 32.0],
                [3.5, 0.0],
                0.0,
                0.0,
            )],
            seed: 4,
        },
        SceneSpec {
            name: "S5".into(),
            width: 64,
            height: 64,
            n_frames: 16,
            background: bg(15),
            layers: vec![
                mover(
                    Shape::Disk { radius: 10.0 },
                    noise(8.0, [0.25, 0.7, 0.35], 0.2, 51),
                    [12.0, 28.0],
                    [2.5, 0.0],
                    0.0,
                    0.0,
                ),
                mover(
                    Shape::Rectangle { width: 16.0, height: 16.0 },
                    noise(8.0, [0.75, 0.3, 0.6], 0.2, 52),
                    [52.0, 38.0],
                    [-2.5, 0.0],
                    0.0,
                    0.0,
                ),
            ],
            seed: 5,
        },
        SceneSpec {
            name: "S6".into(),
            width: 96,
            height: 64,
            n_frames: 6,
            background: bg(16),
            layers: vec![mover(
                Shape::Rectangle { width: 16.0, height: 16.0 },
                noise(8.0, [0.7, 0.7, 0.25], 0.2, 61),
                [12.0, 32.0],
                [12.0, 0.0],
                0.0,
                0.0,
            )],
            seed: 6,
        },
    ]
}

/// Looks up a suite scene by name (`"S1"`..`"S6"`, case-insensitive).
pub fn suite_scene(name: &str) -> Option<SceneSpec> {
    standard_suite().into_iter().find(|s| s.name.eq_ignore_ascii_case(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centroid(m: &Mask) -> (f64, f64) {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for (x, y) in m.pixels() {
            sx += x as f64;
            sy += y as f64;
            n += 1.0;
        }
        (sx / n, sy / n)
    }

    #[test]
    fn suite_has_six_entries_and_is_reproducible() {
        let suite = standard_suite();
        assert_eq!(suite.len(), 6);
        let a = generate(&suite[1]).unwrap();
        let b = generate(&suite[1]).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.tracks, b.tracks);
    }

    #[test]
    fn static_scene_frames_identical() {
        let s = generate(&standard_suite()[0]).unwrap();
        assert!(s.frames.frames.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(s.tracks.len(), 1);
        assert!(s.tracks[0].masks.iter().all(|m| m.count() == 64 * 64));
    }

    #[test]
    fn translating_disk_centroid_advances() {
        let spec = SceneSpec {
            name: "disk".into(),
            width: 80,
            height: 48,
            n_frames: 8,
            background: Texture::Constant { color: [0.1, 0.1, 0.1] },
            layers: vec![LayerSpec {
                shape: Shape::Disk { radius: 8.0 },
                texture: Texture::Constant { color: [0.9, 0.9, 0.9] },
                motion: Motion::Affine { start: [15.3, 24.0], velocity: [2.0, 0.0], angle: 0.0, angular_velocity: 0.0, scale: 1.0, scale_rate: 0.0 },
            }],
            seed: 0,
        };
        let s = generate(&spec).unwrap();
        let c: Vec<(f64, f64)> = s.tracks[1].masks.iter().map(centroid).collect();
        for w in c.windows(2) {
            assert!((w[1].0 - w[0].0 - 2.0).abs() <= 0.1, "{:?}", w);
        }
    }

    #[test]
    fn occlusion_events_match_motion_model() {
        let spec = &standard_suite()[4];
        let s = generate(spec).unwrap();
        // probe pixel on the disk's path
        let (px, py) = (30usize, 28usize);
        let observed = (0..spec.n_frames).filter(|&t| !s.tracks[0].covers(t, px, py)).count();
        // analytic: pixel covered when inside either shape (majority of supersamples)
        let predicted = (0..spec.n_frames)
            .filter(|&t| {
                let mut hits = 0;
                for j in 0..SUPERSAMPLE {
                    for i in 0..SUPERSAMPLE {
                        let p = Point2::new(
                            px as f64 + (i as f64 + 0.5) / 4.0 - 0.5,
                            py as f64 + (j as f64 + 0.5) / 4.0 - 0.5,
                        );
                        let covered = spec.layers.iter().any(|l| {
                            l.shape.contains(&l.motion.at(t as f64, spec.n_frames).inverse().apply(&p))
                        });
                        hits += covered as usize;
                    }
                }
                hits * 2 > SUPERSAMPLE * SUPERSAMPLE
            })
            .count();
        assert!(observed > 0);
        assert_eq!(observed, predicted);
    }

    #[test]
    fn masks_partition_the_frame() {
        let s = generate(&standard_suite()[4]).unwrap();
        for t in 0..16 {
            for y in 0..64 {
                for x in 0..64 {
                    let n = s.tracks.iter().filter(|tr| tr.covers(t, x, y)).count();
                    assert_eq!(n, 1);
                }
            }
        }
    }

    #[test]
    fn affine_inverse_round_trip() {
        let a = Affine2::similarity([3.0, -2.0], 0.7, 1.3);
        let p = Point2::new(5.0, 9.0);
        let q = a.inverse().apply(&a.apply(&p));
        assert!(q.dist(&p) < 1e-12);
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = standard_suite()[1].clone();
        spec.n_frames = 0;
        assert!(generate(&spec).is_err());
        let mut spec = standard_suite()[1].clone();
        spec.layers[0].shape = Shape::Disk { radius: -1.0 };
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        for s in standard_suite() {
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<SceneSpec>(&j).unwrap(), s);
        }
    }
}
