//! Triangulations of planar domains bounded by a single [`BoundaryCurve`].
//!
//! Meshes are immutable once built. Construction places equal-arclength nodes on
//! the boundary, fills the interior with a hexagonal lattice and triangulates the
//! result with a constrained Delaunay triangulation whose constraints are the
//! boundary edges. [`Mesh::refine`] splits every triangle 1→4 and snaps new
//! boundary nodes back onto the curve.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use crate::curve::BoundaryCurve;
use crate::error::{Error, Result};
use crate::geom::{self, Point};

/// Upper bound on vertex count accepted by [`build_domain`] and [`Mesh::refine`].
pub const MAX_VERTICES: usize = 2_000_000;

const SMOOTHING_SWEEPS: usize = 4;
const LONG_EDGE: f64 = 1.3;

/// Result of [`Mesh::locate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    Inside { triangle: usize, bary: [f64; 3] },
    Outside,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
    boundary_param: Vec<Option<f64>>,
    curve: BoundaryCurve,
    h_max: f64,
    diameter: f64,
    tri_grid: Grid,
    vertex_grid: Grid,
}

/// Uniform bucket grid over the bounding box.
#[derive(Debug, Clone)]
struct Grid {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Grid {
    fn new(lo: Point, hi: Point, cell: f64) -> Self {
        let nx = (((hi[0] - lo[0]) / cell).ceil() as usize).max(1);
        let ny = (((hi[1] - lo[1]) / cell).ceil() as usize).max(1);
        Self { origin: lo, cell, nx, ny, buckets: vec![Vec::new(); nx * ny] }
    }

    fn coord(&self, p: Point) -> (isize, isize) {
        (
            ((p[0] - self.origin[0]) / self.cell).floor() as isize,
            ((p[1] - self.origin[1]) / self.cell).floor() as isize,
        )
    }

    fn clamp(&self, c: (isize, isize)) -> (usize, usize) {
        (c.0.clamp(0, self.nx as isize - 1) as usize, c.1.clamp(0, self.ny as isize - 1) as usize)
    }

    fn insert_box(&mut self, lo: Point, hi: Point, id: usize) {
        let (i0, j0) = self.clamp(self.coord(lo));
        let (i1, j1) = self.clamp(self.coord(hi));
        for j in j0..=j1 {
            for i in i0..=i1 {
                self.buckets[j * self.nx + i].push(id);
            }
        }
    }

    fn bucket(&self, p: Point) -> Option<&[usize]> {
        let (i, j) = self.coord(p);
        if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
            return None;
        }
        Some(&self.buckets[j as usize * self.nx + i as usize])
    }

    fn for_each_in_box(&self, lo: Point, hi: Point, mut f: impl FnMut(usize)) {
        let (i0, j0) = self.clamp(self.coord(lo));
        let (i1, j1) = self.clamp(self.coord(hi));
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &id in &self.buckets[j * self.nx + i] {
                    f(id);
                }
            }
        }
    }
}

/// Builds a mesh of the domain enclosed by `curve` with edge lengths close to `target_h`.
pub fn build_domain(curve: &BoundaryCurve, target_h: f64) -> Result<Mesh> {
    let diameter = curve.diameter();
    if !(target_h > 0.0 && target_h < diameter) {
        return Err(Error::Geometry(format!(
            "target_h = {target_h} must lie in (0, diameter = {diameter})"
        )));
    }
    let area = curve.signed_area();
    if area <= 0.0 {
        return Err(Error::Geometry("boundary curve must be positively oriented".into()));
    }
    let estimate = area / (0.5 * 3f64.sqrt() * target_h * target_h) + curve.length() / target_h;
    if estimate > MAX_VERTICES as f64 {
        return Err(Error::Resource(format!(
            "about {estimate:.0} vertices requested, limit is {MAX_VERTICES}"
        )));
    }

    let nb = ((curve.length() / target_h).ceil() as usize).max(8);
    let params = curve.equal_arclength_params(nb);
    let polygon: Vec<Point> = params.iter().map(|&t| curve.position(t)).collect();
    check_simple(&polygon)?;

    // Hexagonal lattice centred on the polygon centroid.
    let centroid = polygon.iter().fold([0.0, 0.0], |a, p| geom::add(a, *p));
    let centroid = geom::scale(centroid, 1.0 / nb as f64);
    let (lo, hi) = bbox(&polygon);
    let dy = 0.5 * 3f64.sqrt() * target_h;
    let keep_out = 0.6 * target_h;
    let seg_grid = {
        let mut g = Grid::new(lo, hi, 2.0 * target_h);
        for i in 0..nb {
            let (a, b) = (polygon[i], polygon[(i + 1) % nb]);
            g.insert_box(
                [a[0].min(b[0]), a[1].min(b[1])],
                [a[0].max(b[0]), a[1].max(b[1])],
                i,
            );
        }
        g
    };
    let near_boundary = |p: Point| {
        let mut hit = false;
        seg_grid.for_each_in_box(
            [p[0] - keep_out, p[1] - keep_out],
            [p[0] + keep_out, p[1] + keep_out],
            |i| {
                if !hit {
                    let (d, _) = geom::segment_distance(p, polygon[i], polygon[(i + 1) % nb]);
                    hit = d < keep_out;
                }
            },
        );
        hit
    };
    let mut points = polygon.clone();
    let jmin = ((lo[1] - centroid[1]) / dy).floor() as i64 - 1;
    let jmax = ((hi[1] - centroid[1]) / dy).ceil() as i64 + 1;
    let imin = ((lo[0] - centroid[0]) / target_h).floor() as i64 - 2;
    let imax = ((hi[0] - centroid[0]) / target_h).ceil() as i64 + 2;
    for j in jmin..=jmax {
        let shift = if j.rem_euclid(2) == 1 { 0.5 * target_h } else { 0.0 };
        for i in imin..=imax {
            let p = [centroid[0] + i as f64 * target_h + shift, centroid[1] + j as f64 * dy];
            if geom::point_in_polygon(p, &polygon) && !near_boundary(p) {
                points.push(p);
            }
        }
    }

    let edges: Vec<[usize; 2]> = (0..nb).map(|i| [i, (i + 1) % nb]).collect();
    let mut triangles = triangulate(&points, &edges, &polygon)?;
    // Split overlong interior edges (they appear between the boundary nodes and the
    // first lattice row).
    for _ in 0..4 {
        let mut extra = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for t in &triangles {
            for k in 0..3 {
                let (a, b) = (t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]));
                let on_boundary = a < nb && b < nb && (b == a + 1 || (a == 0 && b == nb - 1));
                if !on_boundary
                    && geom::dist(points[a], points[b]) > LONG_EDGE * target_h
                    && seen.insert((a, b))
                {
                    extra.push(geom::lerp(points[a], points[b], 0.5));
                }
            }
        }
        if extra.is_empty() {
            break;
        }
        points.extend(extra);
        triangles = triangulate(&points, &edges, &polygon)?;
    }
    // Laplacian smoothing of the lattice nodes evens out the edge lengths next to the
    // boundary; the nodes are then re-triangulated.
    let mut neighbours = vec![Vec::new(); points.len()];
    for t in &triangles {
        for k in 0..3 {
            neighbours[t[k]].push(t[(k + 1) % 3]);
            neighbours[t[k]].push(t[(k + 2) % 3]);
        }
    }
    for _ in 0..SMOOTHING_SWEEPS {
        let next: Vec<Point> = (0..points.len())
            .map(|i| {
                if i < nb || neighbours[i].is_empty() {
                    return points[i];
                }
                let sum = neighbours[i].iter().fold([0.0, 0.0], |a, &j| geom::add(a, points[j]));
                let p = geom::scale(sum, 1.0 / neighbours[i].len() as f64);
                if geom::point_in_polygon(p, &polygon) {
                    p
                } else {
                    points[i]
                }
            })
            .collect();
        points = next;
    }
    if SMOOTHING_SWEEPS > 0 {
        triangles = triangulate(&points, &edges, &polygon)?;
    }

    let mut boundary_param = vec![None; points.len()];
    for (i, &t) in params.iter().enumerate() {
        boundary_param[i] = Some(t);
    }
    let (points, triangles, boundary_param, edges) =
        drop_unused(points, triangles, boundary_param, edges);
    Mesh::from_parts(points, triangles, edges, boundary_param, curve.clone())
}

/// Constrained Delaunay triangulation of `points` keeping the faces inside `polygon`.
fn triangulate(points: &[Point], edges: &[[usize; 2]], polygon: &[Point]) -> Result<Vec<[usize; 3]>> {
    let spade_pts: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let mut conflicts = 0usize;
    let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::try_bulk_load_cdt(
        spade_pts,
        edges.to_vec(),
        |_| conflicts += 1,
    )
    .map_err(|e| Error::Geometry(format!("triangulation failed: {e:?}")))?;
    if conflicts > 0 || cdt.num_vertices() != points.len() {
        return Err(Error::Geometry("boundary constraints could not be recovered".into()));
    }
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        let v = face.vertices();
        let idx = [v[0].fix().index(), v[1].fix().index(), v[2].fix().index()];
        let c = geom::scale(
            geom::add(geom::add(points[idx[0]], points[idx[1]]), points[idx[2]]),
            1.0 / 3.0,
        );
        if geom::point_in_polygon(c, polygon) {
            triangles.push(idx);
        }
    }
    Ok(triangles)
}

fn drop_unused(
    points: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    params: Vec<Option<f64>>,
    edges: Vec<[usize; 2]>,
) -> (Vec<Point>, Vec<[usize; 3]>, Vec<Option<f64>>, Vec<[usize; 2]>) {
    let mut used = vec![false; points.len()];
    for t in &triangles {
        for &v in t {
            used[v] = true;
        }
    }
    if used.iter().all(|&u| u) {
        return (points, triangles, params, edges);
    }
    let mut map = vec![usize::MAX; points.len()];
    let mut new_points = Vec::new();
    let mut new_params = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if used[i] {
            map[i] = new_points.len();
            new_points.push(*p);
            new_params.push(params[i]);
        }
    }
    let tris = triangles.iter().map(|t| [map[t[0]], map[t[1]], map[t[2]]]).collect();
    let edges = edges.iter().map(|e| [map[e[0]], map[e[1]]]).collect();
    (new_points, tris, new_params, edges)
}

fn bbox(points: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn check_simple(polygon: &[Point]) -> Result<()> {
    let n = polygon.len();
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (polygon[j], polygon[(j + 1) % n]);
            if geom::segments_cross(a, b, c, d) {
                return Err(Error::Geometry(format!(
                    "boundary curve self-intersects (segments {i} and {j})"
                )));
            }
        }
    }
    Ok(())
}

impl Mesh {
    /// Assembles a mesh from raw parts and checks every invariant.
    pub fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<[usize; 2]>,
        boundary_param: Vec<Option<f64>>,
        curve: BoundaryCurve,
    ) -> Result<Self> {
        if vertices.len() > MAX_VERTICES {
            return Err(Error::Resource(format!(
                "{} vertices exceed the limit {MAX_VERTICES}",
                vertices.len()
            )));
        }
        let (lo, hi) = bbox(&vertices);
        let mut h_max: f64 = 0.0;
        for t in &triangles {
            for k in 0..3 {
                h_max = h_max.max(geom::dist(vertices[t[k]], vertices[t[(k + 1) % 3]]));
            }
        }
        let diameter = curve.diameter();
        let mut tri_grid = Grid::new(lo, hi, 2.0 * h_max);
        for (id, t) in triangles.iter().enumerate() {
            let (tlo, thi) = bbox(&[vertices[t[0]], vertices[t[1]], vertices[t[2]]]);
            tri_grid.insert_box(tlo, thi, id);
        }
        let mut vertex_grid = Grid::new(lo, hi, h_max);
        for (id, p) in vertices.iter().enumerate() {
            vertex_grid.insert_box(*p, *p, id);
        }
        let mesh = Self {
            vertices,
            triangles,
            boundary_edges,
            boundary_param,
            curve,
            h_max,
            diameter,
            tri_grid,
            vertex_grid,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Checks orientation, the boundary cycle and that boundary nodes lie on the curve.
    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= self.vertices.len()) {
                return Err(Error::Geometry(format!("triangle {i} references a missing vertex")));
            }
            if self.signed_area(i) <= 0.0 {
                return Err(Error::Geometry(format!("triangle {i} is not positively oriented")));
            }
        }
        let nb = self.boundary_edges.len();
        if nb < 3 {
            return Err(Error::Geometry("boundary has fewer than three edges".into()));
        }
        let mut seen = vec![false; self.vertices.len()];
        for (k, e) in self.boundary_edges.iter().enumerate() {
            if e[1] != self.boundary_edges[(k + 1) % nb][0] {
                return Err(Error::Geometry(format!("boundary edge {k} does not chain")));
            }
            if std::mem::replace(&mut seen[e[0]], true) {
                return Err(Error::Geometry(format!("boundary vertex {} visited twice", e[0])));
            }
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        for (k, e) in self.boundary_edges.iter().enumerate() {
            let own = directed.get(&(e[0], e[1])).copied().unwrap_or(0);
            let other = directed.get(&(e[1], e[0])).copied().unwrap_or(0);
            if own != 1 || other != 0 {
                return Err(Error::Geometry(format!(
                    "boundary edge {k} must belong to exactly one triangle"
                )));
            }
        }
        let tol = 1e-12 * self.diameter.max(1.0);
        for e in &self.boundary_edges {
            let v = e[0];
            let t = self.boundary_param[v]
                .ok_or_else(|| Error::Geometry(format!("boundary vertex {v} has no parameter")))?;
            if geom::dist(self.curve.position(t), self.vertices[v]) > tol {
                return Err(Error::Geometry(format!("boundary vertex {v} is off the curve")));
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn boundary_param(&self, v: usize) -> Option<f64> {
        self.boundary_param[v]
    }

    pub fn curve(&self) -> &BoundaryCurve {
        &self.curve
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        geom::signed_area(a, b, c)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary_edges
            .iter()
            .map(|e| geom::dist(self.vertices[e[0]], self.vertices[e[1]]))
            .sum()
    }

    /// Boundary vertices in cycle order.
    pub fn boundary_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.boundary_edges.iter().map(|e| e[0])
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_param[v].is_some()
    }

    /// Curve parameters `(t0, t1)` of a boundary edge with `t1 > t0` (unwrapped).
    pub fn edge_params(&self, edge: usize) -> (f64, f64) {
        let [a, b] = self.boundary_edges[edge];
        let t0 = self.boundary_param[a].expect("boundary vertex");
        let mut t1 = self.boundary_param[b].expect("boundary vertex");
        if t1 <= t0 {
            t1 += self.curve.period;
        }
        (t0, t1)
    }

    /// Triangle containing `p` with its barycentric coordinates, or `Outside`.
    pub fn locate(&self, p: Point) -> Location {
        const EPS: f64 = 1e-12;
        let Some(bucket) = self.tri_grid.bucket(p) else {
            return Location::Outside;
        };
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in bucket {
            let [a, b, c] = self.triangle_points(t);
            let l = geom::barycentric(p, a, b, c);
            let min = l[0].min(l[1]).min(l[2]);
            if min >= -EPS && best.is_none_or(|(_, _, m)| min > m) {
                best = Some((t, l, min));
            }
        }
        match best {
            Some((triangle, l, _)) => {
                let mut bary = l.map(|v| v.max(0.0));
                let s: f64 = bary.iter().sum();
                bary.iter_mut().for_each(|v| *v /= s);
                Location::Inside { triangle, bary }
            }
            None => Location::Outside,
        }
    }

    /// Like [`Mesh::locate`] but falls back to the nearest triangle (with possibly
    /// negative coordinates) for points slightly outside the polygonal domain.
    pub fn locate_or_nearest(&self, p: Point) -> (usize, [f64; 3]) {
        if let Location::Inside { triangle, bary } = self.locate(p) {
            return (triangle, bary);
        }
        let v = self.nearest_vertex(p);
        let mut best = (usize::MAX, [0.0; 3], f64::NEG_INFINITY);
        let q = self.vertices[v];
        let r = self.h_max;
        self.tri_grid.for_each_in_box([q[0] - r, q[1] - r], [q[0] + r, q[1] + r], |t| {
            let [a, b, c] = self.triangle_points(t);
            let l = geom::barycentric(p, a, b, c);
            let min = l[0].min(l[1]).min(l[2]);
            if min > best.2 {
                best = (t, l, min);
            }
        });
        (best.0, best.1)
    }

    pub fn nearest_vertex(&self, p: Point) -> usize {
        let mut r = self.h_max;
        loop {
            let mut best = (usize::MAX, f64::INFINITY);
            self.vertex_grid.for_each_in_box([p[0] - r, p[1] - r], [p[0] + r, p[1] + r], |v| {
                let d = geom::dist(p, self.vertices[v]);
                if d < best.1 {
                    best = (v, d);
                }
            });
            if best.0 != usize::MAX && best.1 <= r {
                return best.0;
            }
            r *= 2.0;
            if r > 4.0 * self.diameter + 1.0 {
                return best.0;
            }
        }
    }

    /// Calls `f(vertex, distance)` for every vertex within distance `r` of `p`.
    pub fn for_each_vertex_within(&self, p: Point, r: f64, mut f: impl FnMut(usize, f64)) {
        self.vertex_grid.for_each_in_box([p[0] - r, p[1] - r], [p[0] + r, p[1] + r], |v| {
            let d = geom::dist(p, self.vertices[v]);
            if d <= r {
                f(v, d);
            }
        });
    }

    /// Calls `f(triangle)` for every triangle whose bounding box meets the square of
    /// half-width `r` around `p`.
    pub fn for_each_triangle_near(&self, p: Point, r: f64, f: impl FnMut(usize)) {
        let mut seen = std::collections::HashSet::new();
        let mut f = f;
        self.tri_grid.for_each_in_box([p[0] - r, p[1] - r], [p[0] + r, p[1] + r], |t| {
            if seen.insert(t) {
                f(t)
            }
        });
    }

    /// Uniform 1→4 refinement with new boundary nodes placed on the curve.
    pub fn refine(&self) -> Result<Mesh> {
        let nv = self.vertices.len();
        let n_edges_estimate = 3 * self.triangles.len() / 2 + self.boundary_edges.len();
        if nv + n_edges_estimate > MAX_VERTICES {
            return Err(Error::Resource(format!(
                "refinement would exceed {MAX_VERTICES} vertices"
            )));
        }
        let mut vertices = self.vertices.clone();
        let mut params = self.boundary_param.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut boundary_edges = Vec::with_capacity(2 * self.boundary_edges.len());
        for (k, e) in self.boundary_edges.iter().enumerate() {
            let (t0, t1) = self.edge_params(k);
            let tm = self.curve.wrap(0.5 * (t0 + t1));
            let id = vertices.len();
            vertices.push(self.curve.position(tm));
            params.push(Some(tm));
            midpoint.insert((e[0].min(e[1]), e[0].max(e[1])), id);
            boundary_edges.push([e[0], id]);
            boundary_edges.push([id, e[1]]);
        }
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>, params: &mut Vec<Option<f64>>| {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(geom::lerp(vertices[a], vertices[b], 0.5));
                params.push(None);
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = mid(a, b, &mut vertices, &mut params);
            let bc = mid(b, c, &mut vertices, &mut params);
            let ca = mid(c, a, &mut vertices, &mut params);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        Mesh::from_parts(vertices, triangles, boundary_edges, params, self.curve.clone())
    }

    /// Writes the ASCII exchange format: `nv nt nb`, vertex lines `x y`, triangle
    /// lines `i j k`, boundary lines `i j t` (`t` is the parameter of vertex `i`).
    pub fn write_ascii<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.vertices.len(), self.triangles.len(), self.boundary_edges.len())?;
        for p in &self.vertices {
            writeln!(w, "{:.16e} {:.16e}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        for e in &self.boundary_edges {
            let t = self.boundary_param[e[0]].expect("boundary vertex");
            writeln!(w, "{} {} {:.16e}", e[0], e[1], t)?;
        }
        Ok(())
    }

    /// Reads the ASCII exchange format written by [`Mesh::write_ascii`].
    pub fn read_ascii<R: BufRead>(r: R, curve: BoundaryCurve) -> Result<Mesh> {
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let mut next = |what: &str| -> Result<(usize, Vec<String>)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::Parse { line: 0, msg: format!("missing {what}") })?;
            Ok((no, line?.split_whitespace().map(str::to_owned).collect()))
        };
        fn num<T: std::str::FromStr>(no: usize, s: Option<&String>) -> Result<T> {
            s.and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse { line: no, msg: "malformed number".into() })
        }
        let (no, head) = next("header")?;
        let nv: usize = num(no, head.first())?;
        let nt: usize = num(no, head.get(1))?;
        let nb: usize = num(no, head.get(2))?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (no, f) = next("vertex")?;
            vertices.push([num(no, f.first())?, num(no, f.get(1))?]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (no, f) = next("triangle")?;
            triangles.push([num(no, f.first())?, num(no, f.get(1))?, num(no, f.get(2))?]);
        }
        let mut edges = Vec::with_capacity(nb);
        let mut params = vec![None; nv];
        for _ in 0..nb {
            let (no, f) = next("boundary edge")?;
            let (i, j): (usize, usize) = (num(no, f.first())?, num(no, f.get(1))?);
            let t: f64 = num(no, f.get(2))?;
            if i >= nv || j >= nv {
                return Err(Error::Parse { line: no, msg: "vertex index out of range".into() });
            }
            params[i] = Some(t);
            edges.push([i, j]);
        }
        Mesh::from_parts(vertices, triangles, edges, params, curve)
    }
}
