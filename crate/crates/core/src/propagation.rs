//! Full proxy-node trajectories for one layer: seed propagation, coverage
//! supplementation at chosen frames, bidirectional propagation of new nodes
//! and a neighbour-displacement fallback for unreliable tracks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::image::{FrameSequence, LayerMaskTrack, Mask};
use crate::par;
use crate::tracking::{TrackError, Tracker, TrajectorySet};
use crate::vectorizer::SeedNodes;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error("seeds are at frame {seed_frame} but layer {layer_id} starts at frame {t_start}")]
    SeedFrame { layer_id: u32, seed_frame: usize, t_start: usize },
    #[error("layer {0} has no seed nodes")]
    NoSeeds(u32),
}

/// Which frames receive supplementation after round 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Last frame, then every intermediate frame in order.
    #[default]
    Full,
    /// Seeds from the first frame only.
    First,
    /// First frame plus one supplementation round at the last frame.
    FirstLast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    /// Non-proxy distance threshold (px).
    pub eps_d: f64,
    /// Neighbours averaged by the occlusion fallback.
    pub k_nn: usize,
    /// Tracks below this confidence are treated as unreliable.
    pub conf_threshold: f64,
    pub max_nodes: usize,
    pub schedule: Schedule,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self { eps_d: 30.0, k_nn: 8, conf_threshold: 0.2, max_nodes: 20_000, schedule: Schedule::Full }
    }
}

/// Node trajectories of one layer over its lifetime.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyLayer {
    pub layer_id: u32,
    pub t_start: usize,
    pub t_end: usize,
    /// `g * n_frames` positions, node-major.
    pub positions: Vec<Point2>,
    /// `g * n_frames` tracker confidences, node-major.
    pub confidence: Vec<f64>,
    /// Supplementation round that created each node (0 = seeds).
    pub round_tag: Vec<u32>,
    /// Absolute frame at which each node was created.
    pub source_frame: Vec<usize>,
}

impl ProxyLayer {
    pub fn n_frames(&self) -> usize {
        self.t_end + 1 - self.t_start
    }

    pub fn node_count(&self) -> usize {
        self.round_tag.len()
    }

    pub fn covers(&self, t: usize) -> bool {
        t >= self.t_start && t <= self.t_end
    }

    #[inline]
    pub fn position(&self, node: usize, t: usize) -> Point2 {
        self.positions[node * self.n_frames() + t - self.t_start]
    }

    /// All node positions at absolute frame `t`.
    pub fn positions_at(&self, t: usize) -> Vec<Point2> {
        (0..self.node_count()).map(|n| self.position(n, t)).collect()
    }

    /// Linearly interpolated positions at continuous time `t` (clamped to the
    /// lifetime). Integer times return the stored positions unchanged.
    pub fn positions_at_time(&self, t: f64) -> Vec<Point2> {
        let t = t.clamp(self.t_start as f64, self.t_end as f64);
        let f = t.floor();
        let a = t - f;
        if a == 0.0 {
            return self.positions_at(f as usize);
        }
        let (p0, p1) = (self.positions_at(f as usize), self.positions_at(f as usize + 1));
        p0.iter().zip(&p1).map(|(p, q)| Point2::new(p.x + a * (q.x - p.x), p.y + a * (q.y - p.y))).collect()
    }

    /// Number of supplementation rounds that added nodes.
    pub fn rounds(&self) -> u32 {
        self.round_tag.iter().copied().max().unwrap_or(0)
    }

    /// Trajectories in exchange form (float32 storage).
    pub fn to_trajectories(&self) -> TrajectorySet {
        TrajectorySet {
            layer_id: self.layer_id,
            t_start: self.t_start,
            n_frames: self.n_frames(),
            positions: self.positions.iter().map(|p| [p.x as f32, p.y as f32]).collect(),
            confidence: self.confidence.iter().map(|&c| c as f32).collect(),
        }
    }

    /// Rounds every stored value through `f32` so that the layer survives the
    /// on-disk format unchanged.
    pub fn quantize(&mut self) {
        for p in &mut self.positions {
            *p = Point2::new(p.x as f32 as f64, p.y as f32 as f64);
        }
        for c in &mut self.confidence {
            *c = *c as f32 as f64;
        }
    }
}

/// Distance from every pixel to its nearest node, plus the in-mask pixels at
/// distance `>= eps_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct NonProxy {
    pub dist: Vec<f64>,
    pub pixels: Vec<(usize, usize)>,
}

fn nearest_dist(p: &Point2, nodes: &[Point2]) -> f64 {
    nodes.iter().fold(f64::INFINITY, |m, q| m.min(q.dist2(p))).sqrt()
}

/// Exact per-pixel nearest-node distances (row-parallel brute force).
pub fn distance_field(width: usize, height: usize, nodes: &[Point2]) -> Vec<f64> {
    par::map_range(height, |y| {
        (0..width).map(|x| nearest_dist(&Point2::new(x as f64, y as f64), nodes)).collect::<Vec<_>>()
    })
    .concat()
}

pub fn find_non_proxy(mask: &Mask, nodes: &[Point2], eps_d: f64) -> NonProxy {
    let dist = distance_field(mask.width, mask.height, nodes);
    let pixels = mask.pixels().filter(|&(x, y)| dist[y * mask.width + x] >= eps_d).collect();
    NonProxy { dist, pixels }
}

/// Farthest-point supplementation: repeatedly adds the in-mask pixel with the
/// largest nearest-node distance (first in scanline order on ties) until no
/// pixel is `eps_d` or more away from a node. At most `limit` nodes are added.
pub fn supplement(mask: &Mask, existing: &[Point2], eps_d: f64, limit: usize) -> Vec<Point2> {
    let pix: Vec<(usize, usize)> = mask.pixels().collect();
    let mut d: Vec<f64> = par::map_slice(&pix, |&(x, y)| nearest_dist(&Point2::new(x as f64, y as f64), existing));
    let mut out = Vec::new();
    while out.len() < limit {
        let mut best = None;
        let mut bd = f64::NEG_INFINITY;
        for (i, &v) in d.iter().enumerate() {
            if v > bd {
                bd = v;
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        if bd < eps_d {
            break;
        }
        let q = Point2::new(pix[i].0 as f64, pix[i].1 as f64);
        out.push(q);
        for (k, &(x, y)) in pix.iter().enumerate() {
            let dd = q.dist(&Point2::new(x as f64, y as f64));
            if dd < d[k] {
                d[k] = dd;
            }
        }
    }
    out
}

/// One supplementation round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub frame: usize,
    pub nodes: usize,
}

/// Per-layer diagnostics emitted by [`build_layer`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    pub layer_id: u32,
    pub seed_nodes: usize,
    pub rounds: Vec<RoundReport>,
    /// Frames at which coverage was checked and enforced (round 0 frame
    /// included).
    pub checked_frames: Vec<usize>,
    /// Per-frame maximum in-mask distance to the nearest node, from `t_start`.
    pub coverage: Vec<f64>,
    pub fallback_applied: usize,
    /// Low-confidence entries left at the raw tracked position for lack of
    /// co-visible neighbours.
    pub fallback_skipped: usize,
    pub max_nodes_reached: bool,
    /// Frames whose coverage exceeds `eps_d` (plus drift away from checked frames).
    pub uncovered_frames: Vec<usize>,
}

struct Builder<'a> {
    tracker: &'a dyn Tracker,
    video: &'a FrameSequence,
    track: &'a LayerMaskTrack,
    cfg: &'a PropagationConfig,
    query_layer: Option<u32>,
    nf: usize,
    pos: Vec<Vec<Point2>>,
    conf: Vec<Vec<f64>>,
    tag: Vec<u32>,
    src: Vec<usize>,
    fallback_applied: usize,
    fallback_skipped: usize,
}

impl<'a> Builder<'a> {
    fn rel(&self, t: usize) -> usize {
        t - self.track.t_start
    }

    /// Adds nodes created at absolute frame `frame`, tracked to both ends of
    /// the lifetime, then repairs their unreliable entries.
    fn add_nodes(&mut self, points: &[Point2], frame: usize, tag: u32) -> Result<(), PropagationError> {
        if points.is_empty() {
            return Ok(());
        }
        let g0 = self.pos.len();
        let g = points.len();
        let mut pos = vec![vec![Point2::new(0.0, 0.0); self.nf]; g];
        let mut conf = vec![vec![0.0; self.nf]; g];
        for (i, p) in points.iter().enumerate() {
            pos[i][self.rel(frame)] = *p;
            conf[i][self.rel(frame)] = 1.0;
        }
        for end in [self.track.t_start, self.track.t_end] {
            if end == frame {
                continue;
            }
            let path = self.tracker.track_path(frame, end, points, self.query_layer, self.video)?;
            let step: isize = if end > frame { 1 } else { -1 };
            for (h, r) in path.iter().enumerate().skip(1) {
                let t = (frame as isize + step * h as isize) as usize;
                for i in 0..g {
                    pos[i][self.rel(t)] = r.points[i];
                    conf[i][self.rel(t)] = r.confidence[i].clamp(0.0, 1.0);
                }
            }
        }
        self.pos.extend(pos);
        self.conf.extend(conf);
        self.tag.extend(std::iter::repeat_n(tag, g));
        self.src.extend(std::iter::repeat_n(frame, g));
        for n in g0..g0 + g {
            for k in 0..self.nf {
                if self.conf[n][k] < self.cfg.conf_threshold && k != self.rel(self.src[n]) {
                    match occlusion_fallback(&self.pos, &self.conf, &self.src, self.track.t_start, n, k, self.cfg) {
                        Some(p) => {
                            self.pos[n][k] = p;
                            self.fallback_applied += 1;
                        }
                        None => self.fallback_skipped += 1,
                    }
                }
            }
        }
        Ok(())
    }

    fn positions_at(&self, t: usize) -> Vec<Point2> {
        let k = self.rel(t);
        self.pos.iter().map(|p| p[k]).collect()
    }
}

/// Neighbour-displacement estimate for node `node` at relative frame `k`.
///
/// `pos` and `conf` are per-node arrays over the lifetime starting at
/// `t_start`; `src` holds absolute creation frames. Returns `None` when fewer
/// than `k_nn` co-visible neighbours exist.
pub fn occlusion_fallback(
    pos: &[Vec<Point2>],
    conf: &[Vec<f64>],
    src: &[usize],
    t_start: usize,
    node: usize,
    k: usize,
    cfg: &PropagationConfig,
) -> Option<Point2> {
    let s = src[node] - t_start;
    let anchor = pos[node][s];
    let mut cand: Vec<(f64, usize)> = (0..pos.len())
        .filter(|&m| m != node && conf[m][s] >= cfg.conf_threshold && conf[m][k] >= cfg.conf_threshold)
        .map(|m| (pos[m][s].dist(&anchor), m))
        .collect();
    if cand.len() < cfg.k_nn.max(1) {
        return None;
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.truncate(cfg.k_nn.max(1));
    let disp = |m: usize| (pos[m][k].x - pos[m][s].x, pos[m][k].y - pos[m][s].y);
    if cand[0].0 < 1e-12 {
        let (dx, dy) = disp(cand[0].1);
        return Some(Point2::new(anchor.x + dx, anchor.y + dy));
    }
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for &(d, m) in &cand {
        let w = 1.0 / d;
        let (dx, dy) = disp(m);
        sx += w * dx;
        sy += w * dy;
        sw += w;
    }
    Some(Point2::new(anchor.x + sx / sw, anchor.y + sy / sw))
}

/// Round-0 trajectories: seeds tracked from the layer's first frame to its
/// last, with the occlusion fallback applied.
pub fn propagate_seeds(
    seeds: &SeedNodes,
    track: &LayerMaskTrack,
    tracker: &dyn Tracker,
    video: &FrameSequence,
    cfg: &PropagationConfig,
    query_layer: Option<u32>,
) -> Result<ProxyLayer, PropagationError> {
    let only_seeds = PropagationConfig { schedule: Schedule::First, ..cfg.clone() };
    build_layer(seeds, track, tracker, video, &only_seeds, query_layer).map(|(l, _)| l)
}

/// Trajectories of `points` created at `frame`, tracked backward to
/// `t_start` and forward to `t_end`. Returns per-point positions and
/// confidences over `[t_start, t_end]`.
pub fn propagate_bidirectional(
    points: &[Point2],
    frame: usize,
    t_start: usize,
    t_end: usize,
    tracker: &dyn Tracker,
    video: &FrameSequence,
    query_layer: Option<u32>,
) -> Result<(Vec<Vec<Point2>>, Vec<Vec<f64>>), PropagationError> {
    let nf = t_end + 1 - t_start;
    let mut pos = vec![vec![Point2::new(0.0, 0.0); nf]; points.len()];
    let mut conf = vec![vec![0.0; nf]; points.len()];
    for (i, p) in points.iter().enumerate() {
        pos[i][frame - t_start] = *p;
        conf[i][frame - t_start] = 1.0;
    }
    for end in [t_start, t_end] {
        if end == frame {
            continue;
        }
        let path = tracker.track_path(frame, end, points, query_layer, video)?;
        let step: isize = if end > frame { 1 } else { -1 };
        for (h, r) in path.iter().enumerate().skip(1) {
            let t = (frame as isize + step * h as isize) as usize - t_start;
            for i in 0..points.len() {
                pos[i][t] = r.points[i];
                conf[i][t] = r.confidence[i];
            }
        }
    }
    Ok((pos, conf))
}

/// Runs the full schedule for one layer.
///
/// `query_layer` is passed to the tracker with every query; `None` lets the
/// tracker infer the layer of each point.
pub fn build_layer(
    seeds: &SeedNodes,
    track: &LayerMaskTrack,
    tracker: &dyn Tracker,
    video: &FrameSequence,
    cfg: &PropagationConfig,
    query_layer: Option<u32>,
) -> Result<(ProxyLayer, LayerDiagnostics), PropagationError> {
    if seeds.frame != track.t_start {
        return Err(PropagationError::SeedFrame { layer_id: track.layer_id, seed_frame: seeds.frame, t_start: track.t_start });
    }
    let seed_points = seeds.all();
    if seed_points.is_empty() {
        return Err(PropagationError::NoSeeds(track.layer_id));
    }
    let mut b = Builder {
        tracker,
        video,
        track,
        cfg,
        query_layer,
        nf: track.t_end + 1 - track.t_start,
        pos: Vec::new(),
        conf: Vec::new(),
        tag: Vec::new(),
        src: Vec::new(),
        fallback_applied: 0,
        fallback_skipped: 0,
    };
    let mut seed_points = seed_points;
    let mut max_reached = seed_points.len() > cfg.max_nodes;
    seed_points.truncate(cfg.max_nodes);
    b.add_nodes(&seed_points, track.t_start, 0)?;

    let frames: Vec<usize> = match cfg.schedule {
        Schedule::First => vec![],
        Schedule::FirstLast => vec![track.t_end],
        Schedule::Full => std::iter::once(track.t_end).chain(track.t_start + 1..track.t_end).collect(),
    };
    let mut checked = vec![track.t_start];
    let mut rounds = Vec::new();
    let mut next_tag = 1;
    for t in frames {
        if t == track.t_start || checked.contains(&t) {
            continue;
        }
        if b.pos.len() >= cfg.max_nodes {
            max_reached = true;
            break;
        }
        checked.push(t);
        let mask = track.at(t).expect("frame inside lifetime");
        let limit = cfg.max_nodes - b.pos.len();
        let new = supplement(mask, &b.positions_at(t), cfg.eps_d, limit);
        if new.is_empty() {
            continue;
        }
        if new.len() == limit && !find_non_proxy(mask, &[b.positions_at(t), new.clone()].concat(), cfg.eps_d).pixels.is_empty() {
            max_reached = true;
        }
        b.add_nodes(&new, t, next_tag)?;
        rounds.push(RoundReport { round: next_tag, frame: t, nodes: new.len() });
        next_tag += 1;
    }

    let g = b.pos.len();
    let mut layer = ProxyLayer {
        layer_id: track.layer_id,
        t_start: track.t_start,
        t_end: track.t_end,
        positions: Vec::with_capacity(g * b.nf),
        confidence: Vec::with_capacity(g * b.nf),
        round_tag: b.tag.clone(),
        source_frame: b.src.clone(),
    };
    for n in 0..g {
        layer.positions.extend_from_slice(&b.pos[n]);
        layer.confidence.extend_from_slice(&b.conf[n]);
    }
    layer.quantize();

    let coverage = layer_coverage(&layer, track);
    checked.sort_unstable();
    let uncovered_frames = (track.t_start..=track.t_end)
        .filter(|t| {
            let bound = if checked.binary_search(t).is_ok() { cfg.eps_d } else { cfg.eps_d + 2.0 };
            coverage[t - track.t_start] > bound
        })
        .collect();
    let diag = LayerDiagnostics {
        layer_id: track.layer_id,
        seed_nodes: seed_points.len(),
        rounds,
        checked_frames: checked,
        coverage,
        fallback_applied: b.fallback_applied,
        fallback_skipped: b.fallback_skipped,
        max_nodes_reached: max_reached,
        uncovered_frames,
    };
    Ok((layer, diag))
}

/// Per-frame maximum in-mask distance to the nearest node.
pub fn layer_coverage(layer: &ProxyLayer, track: &LayerMaskTrack) -> Vec<f64> {
    (layer.t_start..=layer.t_end)
        .map(|t| {
            let nodes = layer.positions_at(t);
            let Some(mask) = track.at(t) else { return 0.0 };
            let pix: Vec<(usize, usize)> = mask.pixels().collect();
            par::map_slice(&pix, |&(x, y)| nearest_dist(&Point2::new(x as f64, y as f64), &nodes))
                .into_iter()
                .fold(0.0, f64::max)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, Affine2, LayerSpec, Motion, SceneSpec, Shape, Texture};
    use crate::tracking::{LkTracker, OracleTracker};
    use crate::vectorizer::{vectorize_layer, VectorizeConfig};

    fn brute_max_dist(mask: &Mask, nodes: &[Point2]) -> f64 {
        let mut m: f64 = 0.0;
        for (x, y) in mask.pixels() {
            let mut best = f64::INFINITY;
            for q in nodes {
                best = best.min(((x as f64 - q.x).powi(2) + (y as f64 - q.y).powi(2)).sqrt());
            }
            m = m.max(best);
        }
        m
    }

    #[test]
    fn non_proxy_dense_nodes_empty() {
        let mask = Mask::full(10, 10);
        let nodes: Vec<Point2> = mask.pixels().map(|(x, y)| Point2::new(x as f64, y as f64)).collect();
        assert!(find_non_proxy(&mask, &nodes, 0.5).pixels.is_empty());
    }

    #[test]
    fn non_proxy_single_center_node() {
        let mask = Mask::full(100, 100);
        let c = Point2::new(50.0, 50.0);
        let np = find_non_proxy(&mask, &[c], 30.0);
        let mut expect = 0;
        for y in 0..100 {
            for x in 0..100 {
                let d = ((x as f64 - 50.0).powi(2) + (y as f64 - 50.0).powi(2)).sqrt();
                if d >= 30.0 {
                    expect += 1;
                }
            }
        }
        assert_eq!(np.pixels.len(), expect);
    }

    #[test]
    fn non_proxy_empty_mask() {
        assert!(find_non_proxy(&Mask::new(8, 8), &[Point2::new(0.0, 0.0)], 1.0).pixels.is_empty());
    }

    #[test]
    fn supplement_covers_and_is_minimal() {
        let mask = Mask::full(90, 90);
        let nodes = supplement(&mask, &[], 30.0, usize::MAX);
        assert!(brute_max_dist(&mask, &nodes) < 30.0);
        for skip in 0..nodes.len() {
            let rest: Vec<Point2> = nodes.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, p)| *p).collect();
            assert!(brute_max_dist(&mask, &rest) >= 30.0, "node {skip} is redundant");
        }
    }

    #[test]
    fn supplement_noop_when_covered() {
        let mask = Mask::full(20, 20);
        assert!(supplement(&mask, &[Point2::new(10.0, 10.0)], 30.0, usize::MAX).is_empty());
    }

    #[test]
    fn fallback_constant_and_symmetric_fields() {
        let cfg = PropagationConfig { k_nn: 2, ..Default::default() };
        // node 0 occluded at frame 1; two neighbours
        let pos = vec![
            vec![Point2::new(0.0, 0.0), Point2::new(99.0, 99.0)],
            vec![Point2::new(1.0, 0.0), Point2::new(3.0, 0.0)],
            vec![Point2::new(-1.0, 0.0), Point2::new(-1.0, 2.0)],
        ];
        let conf = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        let p = occlusion_fallback(&pos, &conf, &[0, 0, 0], 0, 0, 1, &cfg).unwrap();
        assert!((p.x - 1.0).abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12);

        let pos = vec![
            vec![Point2::new(0.0, 0.0), Point2::new(99.0, 99.0)],
            vec![Point2::new(1.0, 0.0), Point2::new(3.5, -1.0)],
            vec![Point2::new(-4.0, 2.0), Point2::new(-1.5, 1.0)],
        ];
        let p = occlusion_fallback(&pos, &conf, &[0, 0, 0], 0, 0, 1, &cfg).unwrap();
        assert!((p.x - 2.5).abs() < 1e-12 && (p.y + 1.0).abs() < 1e-12);

        let few = PropagationConfig { k_nn: 3, ..Default::default() };
        assert!(occlusion_fallback(&pos, &conf, &[0, 0, 0], 0, 0, 1, &few).is_none());
    }

    fn translating_scene(n: usize) -> synth::SyntheticScene {
        synth::generate(&SceneSpec {
            name: "t".into(),
            width: 64,
            height: 48,
            n_frames: n,
            background: Texture::ValueNoise { scale: 8.0, octaves: 2, base: [0.5; 3], amplitude: 0.3, seed: 3 },
            layers: vec![LayerSpec {
                shape: Shape::Rectangle { width: 20.0, height: 16.0 },
                texture: Texture::ValueNoise { scale: 6.0, octaves: 2, base: [0.6, 0.3, 0.3], amplitude: 0.3, seed: 4 },
                motion: Motion::Affine { start: [14.0, 24.0], velocity: [2.0, 0.0], angle: 0.0, angular_velocity: 0.0, scale: 1.0, scale_rate: 0.0 },
            }],
            seed: 0,
        })
        .unwrap()
    }

    #[test]
    fn oracle_translation_is_exact() {
        let s = translating_scene(10);
        let oracle = OracleTracker::new(s.motion.clone(), s.tracks.clone());
        let seeds = vectorize_layer(&s.frames.frames[0], &s.tracks[1].masks[0], 0, &VectorizeConfig { spacing: 4.0, ..Default::default() }).unwrap();
        let cfg = PropagationConfig { eps_d: 8.0, ..Default::default() };
        let layer = propagate_seeds(&seeds, &s.tracks[1], &oracle, &s.frames, &cfg, Some(1)).unwrap();
        for (n, p) in seeds.all().iter().enumerate() {
            for t in 0..10 {
                assert_eq!(layer.position(n, t), Point2::new(p.x + 2.0 * t as f64, p.y));
            }
        }
    }

    #[test]
    fn single_frame_video_keeps_seeds() {
        let s = translating_scene(1);
        let oracle = OracleTracker::new(s.motion.clone(), s.tracks.clone());
        let seeds = vectorize_layer(&s.frames.frames[0], &s.tracks[0].masks[0], 0, &VectorizeConfig::default()).unwrap();
        let (layer, _) = build_layer(&seeds, &s.tracks[0], &oracle, &s.frames, &PropagationConfig::default(), Some(0)).unwrap();
        assert_eq!(layer.positions, seeds.all());
    }

    #[test]
    fn lk_translation_drift_below_one_pixel() {
        let s = translating_scene(10);
        let seeds = vectorize_layer(&s.frames.frames[0], &s.tracks[1].masks[0], 0, &VectorizeConfig { spacing: 4.0, ..Default::default() }).unwrap();
        let interior: Vec<Point2> = seeds.interior_points.clone();
        let (pos, _) = propagate_bidirectional(&interior, 0, 0, 9, &LkTracker::default(), &s.frames, None).unwrap();
        let mut worst: f64 = 0.0;
        for (p, traj) in interior.iter().zip(&pos) {
            // keep to points well inside the square so the window sees the object only
            if (p.x - 14.0).abs() > 4.0 || (p.y - 24.0).abs() > 3.0 {
                continue;
            }
            worst = worst.max(traj[9].dist(&Point2::new(p.x + 18.0, p.y)));
        }
        assert!(worst < 1.0, "drift {worst}");
    }

    #[test]
    fn bidirectional_anchor_and_inverse_motion() {
        let s = translating_scene(8);
        let oracle = OracleTracker::new(s.motion.clone(), s.tracks.clone());
        let pts = vec![Point2::new(20.0, 25.0), Point2::new(22.5, 21.0)];
        let (pos, _) = propagate_bidirectional(&pts, 4, 0, 7, &oracle, &s.frames, Some(1)).unwrap();
        assert_eq!(pos[0][4], pts[0]);
        assert_eq!(pos[1][4], pts[1]);
        for t in 0..8 {
            let a = s.motion.transform(1, t);
            let b: Affine2 = s.motion.transform(1, 4).inverse();
            let e = a.apply(&b.apply(&pts[1]));
            assert!(pos[1][t].dist(&e) < 1e-9);
        }
        let (pos, _) = propagate_bidirectional(&pts, 7, 0, 7, &oracle, &s.frames, Some(1)).unwrap();
        assert_eq!(pos[0][7], pts[0]);
        assert_eq!(pos[0][0], Point2::new(pts[0].x - 14.0, pts[0].y));
    }

    #[test]
    fn static_scene_needs_no_supplement() {
        let spec = synth::standard_suite()[0].clone();
        let s = synth::generate(&spec).unwrap();
        let oracle = OracleTracker::new(s.motion.clone(), s.tracks.clone());
        let seeds = vectorize_layer(&s.frames.frames[0], &s.tracks[0].masks[0], 0, &VectorizeConfig { spacing: 4.0, ..Default::default() }).unwrap();
        let cfg = PropagationConfig { eps_d: 8.0, ..Default::default() };
        let (layer, diag) = build_layer(&seeds, &s.tracks[0], &oracle, &s.frames, &cfg, Some(0)).unwrap();
        assert_eq!(layer.rounds(), 0);
        assert!(diag.rounds.is_empty());
        assert!(diag.uncovered_frames.is_empty());
    }

    #[test]
    fn revealed_background_gets_supplemented() {
        let s = translating_scene(12);
        let oracle = OracleTracker::new(s.motion.clone(), s.tracks.clone());
        let bg = &s.tracks[0];
        let seeds = vectorize_layer(&s.frames.frames[0], &bg.masks[0], 0, &VectorizeConfig { spacing: 4.0, ..Default::default() }).unwrap();
        let cfg = PropagationConfig { eps_d: 6.0, ..Default::default() };
        let (layer, diag) = build_layer(&seeds, bg, &oracle, &s.frames, &cfg, Some(0)).unwrap();
        assert!(layer.rounds() >= 1);
        // new nodes are created on pixels covered by the object at frame 0
        let fg0 = &s.tracks[1].masks[0];
        for n in 0..layer.node_count() {
            if layer.round_tag[n] > 0 {
                let p = layer.position(n, layer.source_frame[n]);
                assert!(bg.covers(layer.source_frame[n], p.x as usize, p.y as usize));
                let near_revealed = fg0.dilate().dilate().get(p.x as usize, p.y as usize);
                assert!(near_revealed || layer.source_frame[n] == 11, "node {n} at {p:?}");
            }
        }
        for t in 0..12 {
            let m = brute_max_dist(bg.at(t).unwrap(), &layer.positions_at(t));
            assert!((m - diag.coverage[t]).abs() < 1e-9);
            assert!(m <= 6.0 + 2.0);
        }
        // round tags are consecutive and match the report
        let tags: Vec<u32> = diag.rounds.iter().map(|r| r.round).collect();
        assert_eq!(tags, (1..=layer.rounds()).collect::<Vec<_>>());
        for r in &diag.rounds {
            let count = layer.round_tag.iter().zip(&layer.source_frame).filter(|(&g, &f)| g == r.round && f == r.frame).count();
            assert_eq!(count, r.nodes);
        }
    }

    #[test]
    fn occluded_background_node_follows_background() {
        // static background, disk crossing it: background nodes under the disk
        // at later frames must stay put
        let spec = SceneSpec {
            name: "occ".into(),
            width: 64,
            height: 48,
            n_frames: 8,
            background: Texture::ValueNoise { scale: 8.0, octaves: 2, base: [0.5; 3], amplitude: 0.3, seed: 5 },
            layers: vec![LayerSpec {
                shape: Shape::Disk { radius: 8.0 },
                texture: Texture::Constant { color: [0.9, 0.1, 0.1] },
                motion: Motion::Affine { start: [10.0, 24.0], velocity: [6.0, 0.0], angle: 0.0, angular_velocity: 0.0, scale: 1.0, scale_rate: 0.0 },
            }],
            seed: 0,
        };
        let s = synth::generate(&spec).unwrap();
        let oracle = OracleTracker::new(s.motion.clone(), s.tracks.clone());
        let seeds = vectorize_layer(&s.frames.frames[0], &s.tracks[0].masks[0], 0, &VectorizeConfig { spacing: 4.0, ..Default::default() }).unwrap();
        let cfg = PropagationConfig { eps_d: 8.0, ..Default::default() };
        let (layer, diag) = build_layer(&seeds, &s.tracks[0], &oracle, &s.frames, &cfg, Some(0)).unwrap();
        assert!(diag.fallback_applied > 0);
        for n in 0..layer.node_count() {
            let s0 = layer.position(n, layer.source_frame[n]);
            for t in 0..8 {
                assert!(layer.position(n, t).dist(&s0) <= 2.0);
            }
        }
    }
}
