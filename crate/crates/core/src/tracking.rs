//! Point-trajectory estimation behind a single [`Tracker`] interface.
//!
//! Three backends: [`OracleTracker`] evaluates a synthetic scene's analytic
//! motion, [`LkTracker`] runs pyramidal Lucas-Kanade on the frames, and
//! [`TrajectoryTracker`] replays precomputed trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::image::{FrameSequence, GrayImage, LayerMaskTrack};
use crate::par;
use crate::synth::MotionModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("frame {frame} out of range (video has {n_frames} frames)")]
    FrameOutOfRange { frame: usize, n_frames: usize },
    #[error("point {index} ({x}, {y}) is not inside any layer at frame {frame}")]
    PointNotInLayer { index: usize, x: f64, y: f64, frame: usize },
    #[error("no trajectories cover layer {0:?} between the requested frames")]
    NoTrajectories(Option<u32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerQuery {
    pub source_frame: usize,
    pub target_frame: usize,
    pub points: Vec<Point2>,
    /// Layer the points belong to, when the caller knows it.
    pub layer: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerResult {
    pub points: Vec<Point2>,
    /// Per-point match quality in `[0, 1]`.
    pub confidence: Vec<f64>,
}

impl TrackerResult {
    fn identity(points: &[Point2]) -> Self {
        Self { points: points.to_vec(), confidence: vec![1.0; points.len()] }
    }
}

pub trait Tracker: Send + Sync {
    fn track(&self, query: &TrackerQuery, video: &FrameSequence) -> Result<TrackerResult, TrackError>;

    /// Results at every frame from `source` to `target` inclusive, in visiting
    /// order. The default issues one direct query per frame.
    fn track_path(
        &self,
        source: usize,
        target: usize,
        points: &[Point2],
        layer: Option<u32>,
        video: &FrameSequence,
    ) -> Result<Vec<TrackerResult>, TrackError> {
        frame_path(source, target)
            .map(|t| {
                let q = TrackerQuery { source_frame: source, target_frame: t, points: points.to_vec(), layer };
                self.track(&q, video)
            })
            .collect()
    }
}

fn frame_path(source: usize, target: usize) -> Box<dyn Iterator<Item = usize>> {
    if target >= source { Box::new(source..=target) } else { Box::new((target..=source).rev()) }
}

fn check_frames(q: &TrackerQuery, video: &FrameSequence) -> Result<(), TrackError> {
    let n = video.len();
    for f in [q.source_frame, q.target_frame] {
        if f >= n {
            return Err(TrackError::FrameOutOfRange { frame: f, n_frames: n });
        }
    }
    Ok(())
}

/// Ground-truth tracker for synthetic scenes.
#[derive(Clone, Debug)]
pub struct OracleTracker {
    pub motion: MotionModel,
    /// Visible-region masks, indexed by layer id (index 0 is the background).
    pub masks: Vec<LayerMaskTrack>,
}

impl OracleTracker {
    pub fn new(motion: MotionModel, masks: Vec<LayerMaskTrack>) -> Self {
        Self { motion, masks }
    }

    fn layer_at(&self, p: &Point2, t: usize) -> Option<u32> {
        let (x, y) = (p.x.round(), p.y.round());
        if x < 0.0 || y < 0.0 {
            return None;
        }
        self.masks.iter().rev().find(|m| m.at(t).is_some_and(|mask| {
            (x as usize) < mask.width && (y as usize) < mask.height && mask.get(x as usize, y as usize)
        })).map(|m| m.layer_id)
    }

    /// Visible unless inside the frame of a nearer layer's mask or off-frame.
    fn visible(&self, layer: u32, p: &Point2, t: usize) -> bool {
        let (x, y) = (p.x.round(), p.y.round());
        let Some(m0) = self.masks.first().and_then(|m| m.masks.first()) else {
            return true;
        };
        if x < 0.0 || y < 0.0 || x as usize >= m0.width || y as usize >= m0.height {
            return false;
        }
        !self.masks.iter().filter(|m| m.layer_id > layer).any(|m| m.covers(t, x as usize, y as usize))
    }
}

impl Tracker for OracleTracker {
    fn track(&self, q: &TrackerQuery, video: &FrameSequence) -> Result<TrackerResult, TrackError> {
        check_frames(q, video)?;
        if q.source_frame == q.target_frame {
            return Ok(TrackerResult::identity(&q.points));
        }
        let mut points = Vec::with_capacity(q.points.len());
        let mut confidence = Vec::with_capacity(q.points.len());
        for (i, p) in q.points.iter().enumerate() {
            let layer = match q.layer {
                Some(l) => l,
                None => self.layer_at(p, q.source_frame).ok_or(TrackError::PointNotInLayer {
                    index: i,
                    x: p.x,
                    y: p.y,
                    frame: q.source_frame,
                })?,
            };
            let canon = self.motion.transform(layer as usize, q.source_frame).inverse().apply(p);
            let out = self.motion.transform(layer as usize, q.target_frame).apply(&canon);
            confidence.push(if self.visible(layer, &out, q.target_frame) { 1.0 } else { 0.0 });
            points.push(out);
        }
        Ok(TrackerResult { points, confidence })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LkParams {
    pub levels: usize,
    /// Odd window side length (px).
    pub window: usize,
    pub iters: usize,
    /// Structure-tensor eigenvalue mapped to confidence 1.
    pub eig_ref: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self { levels: 3, window: 15, iters: 10, eig_ref: 0.01 }
    }
}

/// Pyramidal Lucas-Kanade tracker. Multi-frame queries are chained hop by hop.
#[derive(Clone, Debug, Default)]
pub struct LkTracker {
    pub params: LkParams,
}

fn downsample(img: &GrayImage) -> GrayImage {
    const K: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
    let w = img.width.div_ceil(2).max(1);
    let h = img.height.div_ceil(2).max(1);
    GrayImage::from_fn(w, h, |x, y| {
        let (cx, cy) = (2 * x as isize, 2 * y as isize);
        let mut acc = 0.0;
        for (j, ky) in K.iter().enumerate() {
            for (i, kx) in K.iter().enumerate() {
                acc += kx * ky * img.get_clamped(cx + i as isize - 2, cy + j as isize - 2);
            }
        }
        acc / 256.0
    })
}

fn pyramid(img: GrayImage, levels: usize) -> Vec<GrayImage> {
    let mut out = vec![img];
    for _ in 1..levels.max(1) {
        let next = downsample(out.last().unwrap());
        out.push(next);
    }
    out
}

impl LkTracker {
    pub fn new(params: LkParams) -> Self {
        Self { params }
    }

    /// Tracks one point between two pyramids; returns position and confidence.
    fn track_point(&self, prev: &[GrayImage], next: &[GrayImage], p: &Point2) -> (Point2, f64) {
        let half = (self.params.window / 2) as isize;
        let mut g = (0.0, 0.0);
        let mut min_eig0 = 0.0;
        let mut ok = true;
        for l in (0..prev.len()).rev() {
            let scale = (1usize << l) as f64;
            let (px, py) = (p.x / scale, p.y / scale);
            let (i_img, j_img) = (&prev[l], &next[l]);
            let mut tpl = Vec::with_capacity(((2 * half + 1) * (2 * half + 1)) as usize);
            let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
            for dy in -half..=half {
                for dx in -half..=half {
                    let (x, y) = (px + dx as f64, py + dy as f64);
                    let ix = (i_img.sample(x + 1.0, y) - i_img.sample(x - 1.0, y)) * 0.5;
                    let iy = (i_img.sample(x, y + 1.0) - i_img.sample(x, y - 1.0)) * 0.5;
                    gxx += ix * ix;
                    gxy += ix * iy;
                    gyy += iy * iy;
                    tpl.push((dx as f64, dy as f64, i_img.sample(x, y), ix, iy));
                }
            }
            let det = gxx * gyy - gxy * gxy;
            let tr = gxx + gyy;
            let min_eig = 0.5 * (tr - ((gxx - gyy).powi(2) + 4.0 * gxy * gxy).sqrt());
            if l == 0 {
                min_eig0 = min_eig;
            }
            let mut d = (0.0, 0.0);
            if det.abs() > 1e-12 {
                for _ in 0..self.params.iters {
                    let (mut bx, mut by) = (0.0, 0.0);
                    for &(dx, dy, t, ix, iy) in &tpl {
                        let j = j_img.sample(px + g.0 + d.0 + dx, py + g.1 + d.1 + dy);
                        let diff = t - j;
                        bx += diff * ix;
                        by += diff * iy;
                    }
                    let ex = (gyy * bx - gxy * by) / det;
                    let ey = (gxx * by - gxy * bx) / det;
                    d.0 += ex;
                    d.1 += ey;
                    if !d.0.is_finite() || !d.1.is_finite() {
                        ok = false;
                        d = (0.0, 0.0);
                        break;
                    }
                    if ex * ex + ey * ey < 1e-4 {
                        break;
                    }
                }
            } else if l == 0 {
                ok = false;
            }
            g = if l > 0 { (2.0 * (g.0 + d.0), 2.0 * (g.1 + d.1)) } else { (g.0 + d.0, g.1 + d.1) };
        }
        let (w, h) = (prev[0].width as f64, prev[0].height as f64);
        let out = Point2::new(p.x + g.0, p.y + g.1);
        let inside = out.x >= 0.0 && out.y >= 0.0 && out.x <= w - 1.0 && out.y <= h - 1.0;
        if !ok || !inside {
            let clamped = Point2::new(out.x.clamp(0.0, w - 1.0), out.y.clamp(0.0, h - 1.0));
            let clamped = if clamped.is_finite() { clamped } else { *p };
            return (clamped, 0.0);
        }
        (out, (min_eig0 / self.params.eig_ref).clamp(0.0, 1.0))
    }
}

impl LkTracker {
    fn chain(&self, source: usize, target: usize, points: &[Point2], video: &FrameSequence) -> Vec<TrackerResult> {
        let mut out = vec![TrackerResult::identity(points)];
        if source == target {
            return out;
        }
        let step: isize = if target > source { 1 } else { -1 };
        let mut t = source as isize;
        let mut prev = pyramid(video.frames[source].to_gray(), self.params.levels);
        while t != target as isize {
            let next = pyramid(video.frames[(t + step) as usize].to_gray(), self.params.levels);
            let last = out.last().unwrap();
            let hop = par::map_slice(&last.points, |p| self.track_point(&prev, &next, p));
            let mut r = TrackerResult { points: Vec::with_capacity(hop.len()), confidence: Vec::with_capacity(hop.len()) };
            for (k, (p, c)) in hop.into_iter().enumerate() {
                r.points.push(p);
                r.confidence.push(f64::min(last.confidence[k], c));
            }
            out.push(r);
            prev = next;
            t += step;
        }
        out
    }
}

impl Tracker for LkTracker {
    fn track(&self, q: &TrackerQuery, video: &FrameSequence) -> Result<TrackerResult, TrackError> {
        check_frames(q, video)?;
        Ok(self.chain(q.source_frame, q.target_frame, &q.points, video).pop().unwrap())
    }

    fn track_path(
        &self,
        source: usize,
        target: usize,
        points: &[Point2],
        layer: Option<u32>,
        video: &FrameSequence,
    ) -> Result<Vec<TrackerResult>, TrackError> {
        check_frames(&TrackerQuery { source_frame: source, target_frame: target, points: vec![], layer }, video)?;
        Ok(self.chain(source, target, points, video))
    }
}

/// Node trajectories of one layer, frame-minor (the `.pvt` payload).
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySet {
    pub layer_id: u32,
    pub t_start: usize,
    pub n_frames: usize,
    /// `g * n_frames` positions, node-major.
    pub positions: Vec<[f32; 2]>,
    /// `g * n_frames` confidences, node-major.
    pub confidence: Vec<f32>,
}

impl TrajectorySet {
    pub fn node_count(&self) -> usize {
        if self.n_frames == 0 { 0 } else { self.positions.len() / self.n_frames }
    }

    pub fn covers(&self, t: usize) -> bool {
        t >= self.t_start && t < self.t_start + self.n_frames
    }

    pub fn at(&self, node: usize, t: usize) -> (Point2, f64) {
        let i = node * self.n_frames + (t - self.t_start);
        let p = self.positions[i];
        (Point2::new(p[0] as f64, p[1] as f64), self.confidence[i] as f64)
    }
}

/// Replays externally computed trajectories. Query points that coincide with a
/// stored node (within 1e-3 px) return that node's trajectory; other points
/// move with the inverse-distance weighted displacement of the four nearest
/// stored nodes and are reported at half confidence.
#[derive(Clone, Debug, Default)]
pub struct TrajectoryTracker {
    pub sets: Vec<TrajectorySet>,
}

impl TrajectoryTracker {
    pub fn new(sets: Vec<TrajectorySet>) -> Self {
        Self { sets }
    }
}

impl Tracker for TrajectoryTracker {
    fn track(&self, q: &TrackerQuery, video: &FrameSequence) -> Result<TrackerResult, TrackError> {
        check_frames(q, video)?;
        if q.source_frame == q.target_frame {
            return Ok(TrackerResult::identity(&q.points));
        }
        let sets: Vec<&TrajectorySet> = self
            .sets
            .iter()
            .filter(|s| q.layer.is_none_or(|l| l == s.layer_id) && s.covers(q.source_frame) && s.covers(q.target_frame))
            .collect();
        if sets.is_empty() {
            return Err(TrackError::NoTrajectories(q.layer));
        }
        let mut points = Vec::with_capacity(q.points.len());
        let mut confidence = Vec::with_capacity(q.points.len());
        for p in &q.points {
            let mut near: Vec<(f64, Point2, f64)> = Vec::new();
            for s in &sets {
                for n in 0..s.node_count() {
                    let (src, _) = s.at(n, q.source_frame);
                    let (dst, c) = s.at(n, q.target_frame);
                    near.push((src.dist(p), Point2::new(dst.x - src.x, dst.y - src.y), c));
                }
            }
            near.sort_by(|a, b| a.0.total_cmp(&b.0));
            if near[0].0 <= 1e-3 {
                points.push(Point2::new(p.x + near[0].1.x, p.y + near[0].1.y));
                confidence.push(near[0].2);
                continue;
            }
            let (mut wx, mut wy, mut ws) = (0.0, 0.0, 0.0);
            for (d, disp, _) in near.iter().take(4) {
                let w = 1.0 / d;
                wx += w * disp.x;
                wy += w * disp.y;
                ws += w;
            }
            points.push(Point2::new(p.x + wx / ws, p.y + wy / ws));
            confidence.push(0.5);
        }
        Ok(TrackerResult { points, confidence })
    }
}
