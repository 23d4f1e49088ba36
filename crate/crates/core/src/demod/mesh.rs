//! Delaunay triangulation (Bowyer–Watson) and triangle point location.

use std::collections::{HashMap, VecDeque};

use robust::Coord;
use serde::Serialize;

use crate::error::{domain, Result};

/// Twice the signed area below which a triangle counts as degenerate.
const DEGENERATE_AREA: f64 = 2e-12;

/// Barycentric tolerance for point-in-triangle tests.
const INSIDE_EPS: f64 = 1e-12;

#[inline]
fn coord(p: (f64, f64)) -> Coord<f64> {
    Coord { x: p.0, y: p.1 }
}

/// Positive when `a, b, c` turn counter-clockwise.
#[inline]
fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let det = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    if det.abs() > 1e-12 * (1.0 + a.0.abs() + a.1.abs() + b.0.abs() + b.1.abs() + c.0.abs() + c.1.abs()).powi(2) {
        det
    } else {
        robust::orient2d(coord(a), coord(b), coord(c))
    }
}

/// Positive when `d` lies strictly inside the circle through the
/// counter-clockwise triangle `a, b, c`.
#[inline]
fn in_circle(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> f64 {
    robust::incircle(coord(a), coord(b), coord(c), coord(d))
}

/// Barycentric weights of `q` in the triangle `p1, p2, p3`, with the third
/// weight taken as the complement of the first two.
pub fn barycentric_weights(p1: (f64, f64), p2: (f64, f64), p3: (f64, f64), q: (f64, f64)) -> Result<[f64; 3]> {
    let (i1, j1) = p1;
    let (i2, j2) = p2;
    let (i3, j3) = p3;
    let (i, j) = q;
    let den = (j2 - j3) * (i1 - i3) + (i3 - i2) * (j1 - j3);
    if den.is_nan() || den.abs() <= DEGENERATE_AREA {
        return domain(format!("degenerate triangle (twice signed area {den:e})"));
    }
    let w1 = ((j2 - j3) * (i - i3) + (i3 - i2) * (j - j3)) / den;
    let w2 = ((j3 - j1) * (i - i3) + (i1 - i3) * (j - j3)) / den;
    Ok([w1, w2, 1.0 - w1 - w2])
}

fn segment_distance_sq(a: (f64, f64), b: (f64, f64), q: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx * dx + dy * dy;
    let t = if len > 0.0 {
        (((q.0 - a.0) * dx + (q.1 - a.1) * dy) / len).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (px, py) = (a.0 + t * dx - q.0, a.1 + t * dy - q.1);
    px * px + py * py
}

#[derive(Debug, Clone)]
struct Tri {
    v: [usize; 3],
    /// Neighbour across the edge opposite `v[k]`.
    n: [Option<usize>; 3],
    alive: bool,
}

struct Builder {
    pts: Vec<(f64, f64)>,
    tris: Vec<Tri>,
    last: usize,
}

impl Builder {
    fn point(&self, k: usize) -> (f64, f64) {
        self.pts[k]
    }

    fn locate(&self, p: (f64, f64)) -> usize {
        let mut t = self.last;
        let budget = 4 * self.tris.len() + 16;
        'walk: for _ in 0..budget {
            let tri = &self.tris[t];
            for k in 0..3 {
                let a = self.point(tri.v[(k + 1) % 3]);
                let b = self.point(tri.v[(k + 2) % 3]);
                if orient(a, b, p) < 0.0 {
                    if let Some(next) = tri.n[k] {
                        t = next;
                        continue 'walk;
                    }
                }
            }
            return t;
        }
        // the walk cannot cycle on a Delaunay mesh; scan as a safeguard
        (0..self.tris.len())
            .find(|&t| {
                let tri = &self.tris[t];
                tri.alive
                    && (0..3).all(|k| {
                        orient(self.point(tri.v[(k + 1) % 3]), self.point(tri.v[(k + 2) % 3]), p) >= 0.0
                    })
            })
            .expect("super-triangle encloses every point")
    }

    fn insert(&mut self, pi: usize) {
        let p = self.point(pi);
        let start = self.locate(p);
        let mut in_cavity = HashMap::new();
        let mut queue = VecDeque::from([start]);
        in_cavity.insert(start, true);
        let mut cavity = Vec::new();
        while let Some(t) = queue.pop_front() {
            cavity.push(t);
            for k in 0..3 {
                if let Some(nb) = self.tris[t].n[k] {
                    if in_cavity.contains_key(&nb) {
                        continue;
                    }
                    let v = self.tris[nb].v;
                    let inside = in_circle(self.point(v[0]), self.point(v[1]), self.point(v[2]), p) > 0.0;
                    in_cavity.insert(nb, inside);
                    if inside {
                        queue.push_back(nb);
                    }
                }
            }
        }
        // boundary edges of the cavity become fans around p
        let mut starts: HashMap<usize, usize> = HashMap::new();
        let mut ends: HashMap<usize, usize> = HashMap::new();
        let mut created = Vec::new();
        for &t in &cavity {
            for k in 0..3 {
                let outer = self.tris[t].n[k];
                if outer.is_some_and(|nb| in_cavity.get(&nb).copied().unwrap_or(false)) {
                    continue;
                }
                let a = self.tris[t].v[(k + 1) % 3];
                let b = self.tris[t].v[(k + 2) % 3];
                let id = self.tris.len();
                self.tris.push(Tri {
                    v: [a, b, pi],
                    n: [None, None, outer],
                    alive: true,
                });
                if let Some(nb) = outer {
                    for slot in self.tris[nb].n.iter_mut() {
                        if *slot == Some(t) {
                            *slot = Some(id);
                        }
                    }
                }
                starts.insert(a, id);
                ends.insert(b, id);
                created.push(id);
            }
        }
        for &id in &created {
            let [a, b, _] = self.tris[id].v;
            self.tris[id].n[0] = starts.get(&b).copied();
            self.tris[id].n[1] = ends.get(&a).copied();
        }
        for &t in &cavity {
            self.tris[t].alive = false;
        }
        self.last = *created.last().expect("cavity has a boundary");
    }
}

#[derive(Debug, Clone)]
struct Buckets {
    origin: (f64, f64),
    cell: (f64, f64),
    dims: (usize, usize),
    members: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(vertices: &[(f64, f64)], triangles: &[[usize; 3]]) -> Self {
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for &(x, y) in vertices {
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        let per_axis = ((triangles.len() as f64).sqrt() / 2.0).ceil().max(1.0) as usize;
        let span = ((hi.0 - lo.0).max(1e-300), (hi.1 - lo.1).max(1e-300));
        let cell = (span.0 / per_axis as f64, span.1 / per_axis as f64);
        let mut buckets = Self {
            origin: lo,
            cell,
            dims: (per_axis, per_axis),
            members: vec![Vec::new(); per_axis * per_axis],
        };
        for (t, tri) in triangles.iter().enumerate() {
            let ps = tri.map(|k| vertices[k]);
            let (r0, c0) = buckets.cell_of(ps.iter().fold((f64::INFINITY, f64::INFINITY), |m, p| (m.0.min(p.0), m.1.min(p.1))));
            let (r1, c1) = buckets.cell_of(ps.iter().fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |m, p| (m.0.max(p.0), m.1.max(p.1))));
            for r in r0..=r1 {
                for c in c0..=c1 {
                    buckets.members[r * per_axis + c].push(t);
                }
            }
        }
        buckets
    }

    fn cell_of(&self, p: (f64, f64)) -> (usize, usize) {
        let clamp = |x: f64, n: usize| (x.floor().max(0.0) as usize).min(n - 1);
        (
            clamp((p.0 - self.origin.0) / self.cell.0, self.dims.0),
            clamp((p.1 - self.origin.1) / self.cell.1, self.dims.1),
        )
    }
}

/// Delaunay triangulation of a point set in `(u, v)` space. Triangles are
/// counter-clockwise and index the caller's original point list.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<(f64, f64)>,
    triangles: Vec<[usize; 3]>,
    buckets: Buckets,
}

#[derive(Serialize)]
struct MeshDump<'a> {
    vertices: Vec<[f64; 2]>,
    triangles: &'a [[usize; 3]],
}

impl TriangleMesh {
    /// Triangulates `points`. Exact duplicates are merged onto their first
    /// occurrence; fewer than three distinct points, or all of them
    /// collinear, is a domain error.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
            return domain("triangulation points must be finite");
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].partial_cmp(&points[b]).expect("finite points"));
        order.dedup_by(|b, a| points[*a] == points[*b]);
        if order.len() < 3 {
            return domain(format!("need at least 3 distinct points, got {}", order.len()));
        }
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for &k in &order {
            let (x, y) = points[k];
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        let centre = (0.5 * (lo.0 + hi.0), 0.5 * (lo.1 + hi.1));
        let reach = 1e5 * (hi.0 - lo.0).max(hi.1 - lo.1).max(1e-12);
        let n = points.len();
        let mut pts = points.to_vec();
        pts.extend([
            (centre.0 - 2.0 * reach, centre.1 - reach),
            (centre.0 + 2.0 * reach, centre.1 - reach),
            (centre.0, centre.1 + 2.0 * reach),
        ]);
        let mut builder = Builder {
            pts,
            tris: vec![Tri {
                v: [n, n + 1, n + 2],
                n: [None; 3],
                alive: true,
            }],
            last: 0,
        };
        for &k in &order {
            builder.insert(k);
        }
        let triangles: Vec<[usize; 3]> = builder
            .tris
            .iter()
            .filter(|t| t.alive && t.v.iter().all(|&k| k < n))
            .map(|t| t.v)
            .collect();
        if triangles.is_empty() {
            return domain("points are collinear");
        }
        let vertices = points.to_vec();
        let buckets = Buckets::new(&vertices, &triangles);
        Ok(Self {
            vertices,
            triangles,
            buckets,
        })
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_points(&self, t: usize) -> [(f64, f64); 3] {
        self.triangles[t].map(|k| self.vertices[k])
    }

    /// Barycentric weights of `q` in triangle `t`.
    pub fn weights(&self, t: usize, q: (f64, f64)) -> [f64; 3] {
        let [a, b, c] = self.triangle_points(t);
        barycentric_weights(a, b, c, q).expect("mesh triangles are non-degenerate")
    }

    /// A triangle containing `q` (within a small barycentric tolerance).
    pub fn locate(&self, q: (f64, f64)) -> Option<usize> {
        let (r, c) = self.buckets.cell_of(q);
        self.buckets.members[r * self.buckets.dims.1 + c]
            .iter()
            .copied()
            .find(|&t| self.weights(t, q).iter().all(|&w| w >= -INSIDE_EPS))
    }

    /// The triangle closest to `q` by Euclidean distance.
    pub fn nearest(&self, q: (f64, f64)) -> usize {
        let mut best = (f64::INFINITY, 0);
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_points(t);
            let d = segment_distance_sq(a, b, q)
                .min(segment_distance_sq(b, c, q))
                .min(segment_distance_sq(c, a, q));
            if d < best.0 {
                best = (d, t);
            }
        }
        best.1
    }

    /// The triangle whose linear extension to `q` has the least weight mass
    /// `Σ|wᵢ|` (1 inside, growing with the distance outside), ties broken by
    /// Euclidean distance. Used to extrapolate beyond the hull: sliver
    /// triangles along a curved hull edge would otherwise amplify values.
    pub fn extension(&self, q: (f64, f64)) -> usize {
        let mut best = (f64::INFINITY, f64::INFINITY, 0);
        for t in 0..self.triangles.len() {
            let mass: f64 = self.weights(t, q).iter().map(|w| w.abs()).sum();
            if mass > best.0 + 1e-12 {
                continue;
            }
            let [a, b, c] = self.triangle_points(t);
            let d = segment_distance_sq(a, b, q)
                .min(segment_distance_sq(b, c, q))
                .min(segment_distance_sq(c, a, q));
            if mass < best.0 - 1e-12 || d < best.1 {
                best = (mass, d, t);
            }
        }
        best.2
    }

    /// `{"vertices": [[u,v]...], "triangles": [[a,b,c]...]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(MeshDump {
            vertices: self.vertices.iter().map(|&(u, v)| [u, v]).collect(),
            triangles: &self.triangles,
        })
        .expect("mesh dump serialises")
    }
}

/// Delaunay mesh of a grid's sampling positions.
pub fn triangulate(grid: &crate::warp::CoordinateGrid) -> Result<TriangleMesh> {
    TriangleMesh::new(&grid.points())
}
