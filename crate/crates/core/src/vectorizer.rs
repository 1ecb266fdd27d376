//! Per-layer seed nodes: contour control points plus gradient-ranked interior
//! points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::image::{GrayImage, Mask, RgbImage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VectorizeError {
    #[error("empty layer")]
    EmptyLayer,
    #[error("image is {0}x{1} but mask is {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VectorizeConfig {
    /// Douglas-Peucker tolerance (px).
    pub simplify_tol: f64,
    /// Minimum spacing between interior seeds (px).
    pub spacing: f64,
    pub max_seed_nodes: usize,
    /// Components (and holes) smaller than this many pixels are ignored.
    pub min_area: usize,
}

impl Default for VectorizeConfig {
    fn default() -> Self {
        Self { simplify_tol: 2.0, spacing: 15.0, max_seed_nodes: 2000, min_area: 16 }
    }
}

/// Closed boundary polyline through pixel centers.
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    pub points: Vec<Point2>,
    pub is_hole: bool,
}

impl Contour {
    /// Shoelace signed area in pixel coordinates. Outer boundaries are
    /// positive, holes negative.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.points)
    }
}

pub fn signed_area(p: &[Point2]) -> f64 {
    let n = p.len();
    let mut a = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        a += p[i].x * p[j].y - p[j].x * p[i].y;
    }
    a / 2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedNodes {
    pub frame: usize,
    pub edge_points: Vec<Point2>,
    pub interior_points: Vec<Point2>,
}

impl SeedNodes {
    pub fn all(&self) -> Vec<Point2> {
        self.edge_points.iter().chain(&self.interior_points).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.edge_points.len() + self.interior_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

// Clockwise on screen (y down), starting west.
const DIRS: [(isize, isize); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

fn dir_index(dx: isize, dy: isize) -> usize {
    DIRS.iter().position(|&d| d == (dx, dy)).expect("neighbour offset")
}

/// Moore-neighbour boundary following from `start`, whose background
/// neighbour in direction `back` seeds the sweep. Stops on the first repeated
/// (pixel, backtrack) state.
fn moore_trace(mask: &Mask, start: (isize, isize), back: usize) -> Vec<(isize, isize)> {
    let mut out = vec![start];
    let mut cur = start;
    let mut bdir = back;
    let mut seen = std::collections::HashSet::new();
    seen.insert((cur, bdir));
    let limit = 4 * mask.width * mask.height + 8;
    for _ in 0..limit {
        let mut next = None;
        for k in 1..=8 {
            let d = (bdir + k) % 8;
            let q = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            if mask.get_signed(q.0, q.1) {
                let pd = (bdir + k - 1) % 8;
                let prev = (cur.0 + DIRS[pd].0, cur.1 + DIRS[pd].1);
                next = Some((q, dir_index(prev.0 - q.0, prev.1 - q.1)));
                break;
            }
        }
        let Some((q, nb)) = next else {
            break; // isolated pixel
        };
        if !seen.insert((q, nb)) || (q == start && nb == back) {
            break;
        }
        cur = q;
        bdir = nb;
        out.push(cur);
    }
    // Moore tracing can revisit the start pixel before the state repeats.
    while out.len() > 1 && out.last() == Some(&start) {
        out.pop();
    }
    out
}

fn label(mask: &Mask, value: bool, eight: bool) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![u32::MAX; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if mask.data[start] != value || labels[start] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        labels[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in DIRS {
                if !eight && dx != 0 && dy != 0 {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.data[j] == value && labels[j] == u32::MAX {
                    labels[j] = id;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Boundary polylines of every 8-connected component of at least `min_area`
/// pixels, plus the inner boundaries of its (4-connected) holes of at least
/// `min_area` pixels. Outer boundaries have positive signed area, holes
/// negative. Components are reported in scanline order of their first pixel.
pub fn trace_contours(mask: &Mask, min_area: usize) -> Result<Vec<Contour>, VectorizeError> {
    if mask.is_empty() {
        return Err(VectorizeError::EmptyLayer);
    }
    let (w, h) = (mask.width, mask.height);
    let (fg_labels, fg_sizes) = label(mask, true, true);
    let (bg_labels, bg_sizes) = label(mask, false, false);

    let mut touches_border = vec![false; bg_sizes.len()];
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                let l = bg_labels[y * w + x];
                if l != u32::MAX {
                    touches_border[l as usize] = true;
                }
            }
        }
    }

    let mut out = Vec::new();
    let mut fg_done = vec![false; fg_sizes.len()];
    let mut bg_done = vec![false; bg_sizes.len()];
    for i in 0..w * h {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        if mask.data[i] {
            let l = fg_labels[i] as usize;
            if fg_done[l] {
                continue;
            }
            fg_done[l] = true;
            if fg_sizes[l] < min_area {
                continue;
            }
            let pts = moore_trace(mask, (x, y), 0);
            out.push(oriented(pts, false));
        } else {
            let l = bg_labels[i] as usize;
            if bg_done[l] {
                continue;
            }
            bg_done[l] = true;
            if touches_border[l] || bg_sizes[l] < min_area {
                continue;
            }
            // the pixel above the first hole pixel belongs to the enclosing component
            let owner = fg_labels[i - w] as usize;
            if fg_sizes[owner] < min_area {
                continue;
            }
            let pts = moore_trace(mask, (x, y - 1), 6);
            out.push(oriented(pts, true));
        }
    }
    Ok(out)
}

fn oriented(pts: Vec<(isize, isize)>, is_hole: bool) -> Contour {
    let mut points: Vec<Point2> = pts.into_iter().map(|(x, y)| Point2::new(x as f64, y as f64)).collect();
    let a = signed_area(&points);
    if (a < 0.0 && !is_hole) || (a > 0.0 && is_hole) {
        points[1..].reverse();
    }
    Contour { points, is_hole }
}

fn seg_dist(p: &Point2, a: &Point2, b: &Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(&Point2::new(a.x + t * dx, a.y + t * dy))
}

/// Douglas-Peucker on an open polyline; returns kept indices (ascending,
/// endpoints included).
fn dp_open(pts: &[Point2], tol: f64) -> Vec<usize> {
    let n = pts.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0, n - 1)];
    while let Some((s, e)) = stack.pop() {
        let mut best = -1.0;
        let mut idx = s;
        for i in s + 1..e {
            let d = seg_dist(&pts[i], &pts[s], &pts[e]);
            if d > best {
                best = d;
                idx = i;
            }
        }
        if best > tol {
            keep[idx] = true;
            stack.push((s, idx));
            stack.push((idx, e));
        }
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// Douglas-Peucker simplification of a closed polyline. The first point is
/// always kept; the polygon is split at the vertex farthest from it.
pub fn simplify_polyline(poly: &[Point2], tol: f64) -> Vec<Point2> {
    let n = poly.len();
    if n < 3 {
        return poly.to_vec();
    }
    let mut far = 0;
    let mut best = 0.0;
    for (i, p) in poly.iter().enumerate() {
        let d = p.dist2(&poly[0]);
        if d > best {
            best = d;
            far = i;
        }
    }
    if far == 0 {
        return vec![poly[0]];
    }
    let left = dp_open(&poly[..=far], tol);
    let mut closing: Vec<Point2> = poly[far..].to_vec();
    closing.push(poly[0]);
    let right = dp_open(&closing, tol);
    let mut out: Vec<Point2> = left.iter().map(|&i| poly[i]).collect();
    // skip the shared split vertex and the closing copy of poly[0]
    out.extend(right[1..right.len() - 1].iter().map(|&i| closing[i]));
    out
}

/// Sobel gradient magnitude with edge replication; zero outside `mask`.
pub fn sobel_gradient(image: &GrayImage, mask: &Mask) -> GrayImage {
    assert_eq!((image.width, image.height), (mask.width, mask.height), "image/mask size mismatch");
    GrayImage::from_fn(image.width, image.height, |x, y| {
        if !mask.get(x, y) {
            return 0.0;
        }
        let (x, y) = (x as isize, y as isize);
        let p = |dx: isize, dy: isize| image.get_clamped(x + dx, y + dy);
        let gx = (p(1, -1) - p(-1, -1)) + 2.0 * (p(1, 0) - p(-1, 0)) + (p(1, 1) - p(-1, 1));
        let gy = (p(-1, 1) - p(-1, -1)) + 2.0 * (p(0, 1) - p(0, -1)) + (p(1, 1) - p(1, -1));
        (gx * gx + gy * gy).sqrt()
    })
}

/// Greedy interior sampling in descending gradient order (ties in scanline
/// order), rejecting candidates closer than `spacing` to any accepted point or
/// to any point of `exclude`.
pub fn sample_interior(grad: &GrayImage, mask: &Mask, spacing: f64, n_max: usize, exclude: &[Point2]) -> Vec<Point2> {
    assert!(spacing > 0.0, "spacing must be positive");
    let w = mask.width;
    let mut cand: Vec<usize> = (0..mask.data.len()).filter(|&i| mask.data[i]).collect();
    cand.sort_by(|&a, &b| grad.data[b].total_cmp(&grad.data[a]));

    let cell = spacing;
    let mut grid: std::collections::HashMap<(isize, isize), Vec<Point2>> = Default::default();
    let key = |p: &Point2| ((p.x / cell).floor() as isize, (p.y / cell).floor() as isize);
    for p in exclude {
        grid.entry(key(p)).or_default().push(*p);
    }
    let r2 = spacing * spacing;
    let mut out = Vec::new();
    for i in cand {
        if out.len() >= n_max {
            break;
        }
        let p = Point2::new((i % w) as f64, (i / w) as f64);
        let (kx, ky) = key(&p);
        let clash = (-1..=1).any(|dy| {
            (-1..=1).any(|dx| grid.get(&(kx + dx, ky + dy)).is_some_and(|v| v.iter().any(|q| q.dist2(&p) < r2)))
        });
        if !clash {
            grid.entry((kx, ky)).or_default().push(p);
            out.push(p);
        }
    }
    out
}

/// Seeds for one layer at `frame`: simplified contour control points plus
/// Sobel-ranked interior points, capped at `config.max_seed_nodes`.
pub fn vectorize_layer(image: &RgbImage, mask: &Mask, frame: usize, config: &VectorizeConfig) -> Result<SeedNodes, VectorizeError> {
    if (image.width, image.height) != (mask.width, mask.height) {
        return Err(VectorizeError::SizeMismatch(image.width, image.height, mask.width, mask.height));
    }
    let contours = trace_contours(mask, config.min_area)?;
    let mut edge_points: Vec<Point2> = Vec::new();
    for c in &contours {
        for p in simplify_polyline(&c.points, config.simplify_tol) {
            if !edge_points.contains(&p) {
                edge_points.push(p);
            }
        }
    }
    edge_points.truncate(config.max_seed_nodes);
    let grad = sobel_gradient(&image.to_gray(), mask);
    let budget = config.max_seed_nodes - edge_points.len();
    let interior_points = sample_interior(&grad, mask, config.spacing, budget, &edge_points);
    Ok(SeedNodes { frame, edge_points, interior_points })
}
