//! Delaunay triangulation, barycentric coordinates and point location.
//!
//! Triangulation uses Bowyer-Watson incremental insertion. Instead of a finite
//! super-triangle the hull is closed with a symbolic vertex at infinity: every
//! hull edge carries a "ghost" triangle whose circumcircle degenerates to the
//! open half-plane outside that edge. This keeps the union of solid triangles
//! exactly equal to the convex hull, including for collinear hull points.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Signed-area magnitude below which a triangle is degenerate (px²).
pub const DEGENERATE_AREA: f64 = 1e-12;
/// Points closer than this (per axis) count as coincident.
pub const COINCIDENT_EPS: f64 = 1e-9;
/// Barycentric slack used when classifying a point as inside a triangle.
pub const INSIDE_EPS: f64 = 1e-9;

const GHOST: usize = usize::MAX;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn dist2(&self, o: &Point2) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(&self, o: &Point2) -> f64 {
        self.dist2(o).sqrt()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite point at index {0}")]
    NonFinite(usize),
    #[error("coincident points at indices {0} and {1}")]
    DuplicatePoint(usize, usize),
    #[error("degenerate point set: fewer than 3 non-collinear points")]
    DegeneratePointSet,
    #[error("zero-area triangle {0}")]
    ZeroAreaTriangle(usize),
    #[error("triangle index {0} out of range")]
    TriangleOutOfRange(usize),
}

/// Barycentric weights of a point with respect to one triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarycentricCoords {
    pub lambda: [f64; 3],
    pub triangle_index: usize,
}

/// Twice the signed area of `(a, b, c)`; positive for counterclockwise order
/// in a y-up frame.
#[inline]
pub fn orient(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counterclockwise triangle `(a, b, c)`.
#[inline]
pub fn incircle(a: &Point2, b: &Point2, c: &Point2, d: &Point2) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let alift = adx * adx + ady * ady;
    let blift = bdx * bdx + bdy * bdy;
    let clift = cdx * cdx + cdy * cdy;
    alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) + clift * (adx * bdy - bdx * ady)
}

/// Uniform grid mapping cells to candidate triangles.
#[derive(Clone, Debug)]
struct Locator {
    min: Point2,
    cell_w: f64,
    cell_h: f64,
    nx: usize,
    ny: usize,
    /// Triangle indices per cell, ascending.
    cells: Vec<Vec<u32>>,
    max: Point2,
}

impl Locator {
    fn build(vertices: &[Point2], triangles: &[[usize; 3]]) -> Self {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in vertices {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        let n = ((triangles.len() as f64).sqrt().ceil() as usize).max(1);
        let cell_w = ((max.x - min.x) / n as f64).max(f64::MIN_POSITIVE);
        let cell_h = ((max.y - min.y) / n as f64).max(f64::MIN_POSITIVE);
        let mut loc = Self { min, cell_w, cell_h, nx: n, ny: n, cells: vec![Vec::new(); n * n], max };
        for (ti, t) in triangles.iter().enumerate() {
            let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            let (x0, y0) = loc.cell_of(a.x.min(b.x).min(c.x), a.y.min(b.y).min(c.y));
            let (x1, y1) = loc.cell_of(a.x.max(b.x).max(c.x), a.y.max(b.y).max(c.y));
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    loc.cells[cy * loc.nx + cx].push(ti as u32);
                }
            }
        }
        loc
    }

    #[inline]
    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let cx = ((x - self.min.x) / self.cell_w).floor();
        let cy = ((y - self.min.y) / self.cell_h).floor();
        let cx = if cx.is_nan() { 0.0 } else { cx };
        let cy = if cy.is_nan() { 0.0 } else { cy };
        (
            (cx.max(0.0) as usize).min(self.nx - 1),
            (cy.max(0.0) as usize).min(self.ny - 1),
        )
    }

    fn candidates(&self, p: &Point2) -> &[u32] {
        let slack = 1e-7 * (1.0 + (self.max.x - self.min.x).abs() + (self.max.y - self.min.y).abs());
        if p.x < self.min.x - slack || p.y < self.min.y - slack || p.x > self.max.x + slack || p.y > self.max.y + slack {
            return &[];
        }
        let (cx, cy) = self.cell_of(p.x, p.y);
        &self.cells[cy * self.nx + cx]
    }
}

/// Delaunay triangulation of a planar point set with a point-location grid.
#[derive(Clone, Debug)]
pub struct Triangulation {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    locator: Locator,
}

/// Result of a point-location query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Location {
    Inside(BarycentricCoords),
    Outside,
}

impl Triangulation {
    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_points(&self, i: usize) -> [Point2; 3] {
        let t = self.triangles[i];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    /// Barycentric weights of `p` in triangle `tri_index`.
    pub fn barycentric(&self, p: &Point2, tri_index: usize) -> Result<BarycentricCoords, GeometryError> {
        if tri_index >= self.triangles.len() {
            return Err(GeometryError::TriangleOutOfRange(tri_index));
        }
        let [a, b, c] = self.triangle_points(tri_index);
        barycentric_in(p, &a, &b, &c)
            .map(|lambda| BarycentricCoords { lambda, triangle_index: tri_index })
            .ok_or(GeometryError::ZeroAreaTriangle(tri_index))
    }

    /// Containing triangle of `p`; boundary points go to the lowest-index
    /// incident triangle.
    pub fn locate(&self, p: &Point2) -> Location {
        for &ti in self.locator.candidates(p) {
            let ti = ti as usize;
            let [a, b, c] = self.triangle_points(ti);
            if let Some(l) = barycentric_in(p, &a, &b, &c) {
                if l.iter().all(|&w| w >= -INSIDE_EPS) {
                    return Location::Inside(BarycentricCoords { lambda: l, triangle_index: ti });
                }
            }
        }
        Location::Outside
    }

    /// Like [`locate`](Self::locate) but points outside the hull are projected
    /// onto the nearest triangle; the returned weights are those of the
    /// projected point, clamped to `[0, 1]` and renormalised.
    pub fn nearest_triangle_extension(&self, p: &Point2) -> BarycentricCoords {
        if let Location::Inside(bc) = self.locate(p) {
            return bc;
        }
        let mut best = f64::INFINITY;
        let mut best_tri = 0;
        let mut best_pt = *p;
        for (ti, t) in self.triangles.iter().enumerate() {
            let (a, b, c) = (self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
            // bbox lower bound
            let bx = (a.x.min(b.x).min(c.x) - p.x).max(p.x - a.x.max(b.x).max(c.x)).max(0.0);
            let by = (a.y.min(b.y).min(c.y) - p.y).max(p.y - a.y.max(b.y).max(c.y)).max(0.0);
            if bx * bx + by * by >= best {
                continue;
            }
            for (u, v) in [(a, b), (b, c), (c, a)] {
                let q = closest_on_segment(p, &u, &v);
                let d = q.dist2(p);
                if d < best {
                    best = d;
                    best_tri = ti;
                    best_pt = q;
                }
            }
        }
        let [a, b, c] = self.triangle_points(best_tri);
        let mut l = barycentric_in(&best_pt, &a, &b, &c).unwrap_or([1.0 / 3.0; 3]);
        for w in l.iter_mut() {
            *w = w.clamp(0.0, 1.0);
        }
        let s: f64 = l.iter().sum();
        if s > 0.0 {
            for w in l.iter_mut() {
                *w /= s;
            }
        }
        BarycentricCoords { lambda: l, triangle_index: best_tri }
    }
}

/// Solves the 2×2 barycentric system; `None` for a degenerate triangle.
#[inline]
pub fn barycentric_in(p: &Point2, a: &Point2, b: &Point2, c: &Point2) -> Option<[f64; 3]> {
    let (v0x, v0y) = (b.x - a.x, b.y - a.y);
    let (v1x, v1y) = (c.x - a.x, c.y - a.y);
    let (v2x, v2y) = (p.x - a.x, p.y - a.y);
    let det = v0x * v1y - v1x * v0y;
    if det.abs() * 0.5 < DEGENERATE_AREA {
        return None;
    }
    let l2 = (v2x * v1y - v1x * v2y) / det;
    let l3 = (v0x * v2y - v2x * v0y) / det;
    Some([1.0 - l2 - l3, l2, l3])
}

fn closest_on_segment(p: &Point2, a: &Point2, b: &Point2) -> Point2 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return *a;
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    Point2::new(a.x + t * dx, a.y + t * dy)
}

/// Checks finiteness and pairwise coincidence (within [`COINCIDENT_EPS`]).
pub fn check_points(points: &[Point2]) -> Result<(), GeometryError> {
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite(i));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| points[i].x.total_cmp(&points[j].x).then(points[i].y.total_cmp(&points[j].y)));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if points[j].x - points[i].x > COINCIDENT_EPS {
                break;
            }
            if (points[j].y - points[i].y).abs() <= COINCIDENT_EPS {
                return Err(GeometryError::DuplicatePoint(i.min(j), i.max(j)));
            }
        }
    }
    Ok(())
}

struct Builder<'a> {
    pts: &'a [Point2],
    tris: Vec<[usize; 3]>,
    alive: Vec<bool>,
    edges: HashMap<(usize, usize), usize>,
    last: usize,
}

impl<'a> Builder<'a> {
    fn add(&mut self, t: [usize; 3]) -> usize {
        let id = self.tris.len();
        self.tris.push(t);
        self.alive.push(true);
        self.edges.insert((t[0], t[1]), id);
        self.edges.insert((t[1], t[2]), id);
        self.edges.insert((t[2], t[0]), id);
        id
    }

    fn kill(&mut self, id: usize) {
        self.alive[id] = false;
        let t = self.tris[id];
        for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            if self.edges.get(&e) == Some(&id) {
                self.edges.remove(&e);
            }
        }
    }

    fn conflict(&self, id: usize, p: &Point2) -> bool {
        let t = self.tris[id];
        if let Some(g) = t.iter().position(|&v| v == GHOST) {
            let a = &self.pts[t[(g + 1) % 3]];
            let b = &self.pts[t[(g + 2) % 3]];
            let o = orient(a, b, p);
            if o > 0.0 {
                return true;
            }
            if o == 0.0 {
                let ab = (b.x - a.x, b.y - a.y);
                let ap = (p.x - a.x, p.y - a.y);
                let bp = (p.x - b.x, p.y - b.y);
                return ap.0 * ab.0 + ap.1 * ab.1 > 0.0 && -(bp.0 * ab.0 + bp.1 * ab.1) > 0.0;
            }
            return false;
        }
        incircle(&self.pts[t[0]], &self.pts[t[1]], &self.pts[t[2]], p) > 0.0
    }

    /// Finds one triangle in conflict with `p` by walking from the most recent
    /// triangle; falls back to a linear scan if the walk does not settle.
    fn find_conflict(&self, p: &Point2) -> Option<usize> {
        let mut cur = self.last;
        let limit = self.tris.len() + 16;
        'walk: for _ in 0..limit {
            let t = self.tris[cur];
            if t.contains(&GHOST) {
                if self.conflict(cur, p) {
                    return Some(cur);
                }
                // step into the solid neighbour across the hull edge
                let g = t.iter().position(|&v| v == GHOST).unwrap();
                let (a, b) = (t[(g + 1) % 3], t[(g + 2) % 3]);
                match self.edges.get(&(b, a)) {
                    Some(&n) => {
                        cur = n;
                        continue 'walk;
                    }
                    None => break 'walk,
                }
            }
            for k in 0..3 {
                let (u, v) = (t[k], t[(k + 1) % 3]);
                if orient(&self.pts[u], &self.pts[v], p) < 0.0 {
                    match self.edges.get(&(v, u)) {
                        Some(&n) => {
                            cur = n;
                            continue 'walk;
                        }
                        None => break 'walk,
                    }
                }
            }
            if self.conflict(cur, p) {
                return Some(cur);
            }
            break;
        }
        (0..self.tris.len()).find(|&id| self.alive[id] && self.conflict(id, p))
    }

    fn insert(&mut self, pi: usize) {
        let p = self.pts[pi];
        let Some(start) = self.find_conflict(&p) else {
            return;
        };
        let mut cavity = vec![start];
        let mut in_cavity: HashMap<usize, ()> = HashMap::new();
        in_cavity.insert(start, ());
        let mut boundary = Vec::new();
        let mut k = 0;
        while k < cavity.len() {
            let id = cavity[k];
            k += 1;
            let t = self.tris[id];
            for j in 0..3 {
                let (u, v) = (t[j], t[(j + 1) % 3]);
                match self.edges.get(&(v, u)) {
                    Some(&n) if in_cavity.contains_key(&n) => {}
                    Some(&n) if self.conflict(n, &p) => {
                        in_cavity.insert(n, ());
                        cavity.push(n);
                    }
                    _ => boundary.push((u, v)),
                }
            }
        }
        for &id in &cavity {
            self.kill(id);
        }
        for (u, v) in boundary {
            let t = if u == GHOST {
                [v, pi, GHOST]
            } else if v == GHOST {
                [pi, u, GHOST]
            } else {
                [u, v, pi]
            };
            self.last = self.add(t);
        }
    }
}

/// Delaunay triangulation of `points`. Inputs must be finite and pairwise
/// distinct; the output is deterministic for a fixed input order.
pub fn delaunay(points: &[Point2]) -> Result<Triangulation, GeometryError> {
    check_points(points)?;
    if points.len() < 3 {
        return Err(GeometryError::DegeneratePointSet);
    }
    let (i0, i1) = (0, 1);
    let i2 = (2..points.len())
        .find(|&k| orient(&points[i0], &points[i1], &points[k]).abs() * 0.5 > DEGENERATE_AREA)
        .ok_or(GeometryError::DegeneratePointSet)?;
    let (a, b, c) = if orient(&points[i0], &points[i1], &points[i2]) > 0.0 { (i0, i1, i2) } else { (i0, i2, i1) };

    let mut bld = Builder { pts: points, tris: Vec::new(), alive: Vec::new(), edges: HashMap::new(), last: 0 };
    bld.last = bld.add([a, b, c]);
    bld.add([b, a, GHOST]);
    bld.add([c, b, GHOST]);
    bld.add([a, c, GHOST]);
    for pi in 2..points.len() {
        if pi != i2 {
            bld.insert(pi);
        }
    }

    let triangles: Vec<[usize; 3]> = bld
        .tris
        .iter()
        .zip(&bld.alive)
        .filter(|(t, &alive)| alive && !t.contains(&GHOST))
        .map(|(t, _)| *t)
        .collect();
    let vertices = points.to_vec();
    let locator = Locator::build(&vertices, &triangles);
    Ok(Triangulation { vertices, triangles, locator })
}

/// Triangulation over possibly coincident node positions.
///
/// Coincident nodes (within [`COINCIDENT_EPS`]) are merged onto the lowest
/// node index. When fewer than three non-collinear distinct nodes remain the
/// mesh degrades to nearest-node lookup.
#[derive(Clone, Debug)]
pub enum NodeMesh {
    Triangulated { tri: Triangulation, node_of_vertex: Vec<usize> },
    Degenerate { positions: Vec<Point2> },
    Empty,
}

impl NodeMesh {
    pub fn build(positions: &[Point2]) -> NodeMesh {
        let finite: Vec<usize> = (0..positions.len()).filter(|&i| positions[i].is_finite()).collect();
        if finite.is_empty() {
            return NodeMesh::Empty;
        }
        let mut order = finite.clone();
        order.sort_by(|&i, &j| {
            positions[i].x.total_cmp(&positions[j].x).then(positions[i].y.total_cmp(&positions[j].y)).then(i.cmp(&j))
        });
        let mut dropped = vec![false; positions.len()];
        for (k, &i) in order.iter().enumerate() {
            if dropped[i] {
                continue;
            }
            for &j in &order[k + 1..] {
                if positions[j].x - positions[i].x > COINCIDENT_EPS {
                    break;
                }
                if !dropped[j] && (positions[j].y - positions[i].y).abs() <= COINCIDENT_EPS {
                    // keep the lower node index
                    if j < i {
                        dropped[i] = true;
                        break;
                    }
                    dropped[j] = true;
                }
            }
        }
        let node_of_vertex: Vec<usize> = finite.into_iter().filter(|&i| !dropped[i]).collect();
        let verts: Vec<Point2> = node_of_vertex.iter().map(|&i| positions[i]).collect();
        match delaunay(&verts) {
            Ok(tri) => NodeMesh::Triangulated { tri, node_of_vertex },
            Err(_) => NodeMesh::Degenerate {
                positions: positions.iter().map(|p| if p.is_finite() { *p } else { Point2::new(f64::INFINITY, f64::INFINITY) }).collect(),
            },
        }
    }

    /// Node indices and weights used to interpolate at `p`. Points outside the
    /// hull use [`Triangulation::nearest_triangle_extension`].
    pub fn weights(&self, p: &Point2) -> Option<([usize; 3], [f64; 3])> {
        match self {
            NodeMesh::Triangulated { tri, node_of_vertex } => {
                let bc = tri.nearest_triangle_extension(p);
                let t = tri.triangles()[bc.triangle_index];
                Some(([node_of_vertex[t[0]], node_of_vertex[t[1]], node_of_vertex[t[2]]], bc.lambda))
            }
            NodeMesh::Degenerate { positions } => {
                let mut best = 0;
                let mut bd = f64::INFINITY;
                for (i, q) in positions.iter().enumerate() {
                    let d = q.dist2(p);
                    if d < bd {
                        bd = d;
                        best = i;
                    }
                }
                Some(([best; 3], [1.0, 0.0, 0.0]))
            }
            NodeMesh::Empty => None,
        }
    }

    /// Triangle (as node indices) containing `p`, if any; used to find the
    /// support of a pixel region.
    pub fn triangle_nodes_at(&self, p: &Point2) -> Option<[usize; 3]> {
        self.weights(p).map(|(n, _)| n)
    }
}
