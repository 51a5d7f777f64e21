//! Triangle meshes for the periodicity cell and for the rectangles built
//! from it.
//!
//! The unit cell with a circular inclusion is meshed on one eighth of the
//! cell (the fundamental domain of the square's symmetry group) with a
//! structured ring mesh that blends the inscribed `n_gamma`-gon into the cell
//! boundary, and then mirrored seven times. The result is exactly symmetric
//! under the dihedral group of the square and its opposite faces carry
//! identical vertex distributions, which makes periodic identification and
//! tiling exact.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, SQRT_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point = [f64; 2];

/// Tolerance on barycentric negativity used by point location.
pub const LOCATE_TOL: f64 = 1e-12;

const RADIUS_LIMIT: f64 = 0.45;
const INTERFACE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::Bottom => Side::Top,
            Side::Top => Side::Bottom,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeTag {
    /// Outer boundary of the simulation domain.
    Outer,
    /// Pore-solid interface of the inclusion in lattice cell `cell`.
    Interface { cell: usize },
    /// Face of the unit cell; `pair` is the rank of the edge along the face and
    /// matches the edge with the same rank on the opposite side.
    CellFace { side: Side, pair: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TagKind {
    Outer,
    Interface,
    CellFace,
}

impl EdgeTag {
    pub fn kind(&self) -> TagKind {
        match self {
            EdgeTag::Outer => TagKind::Outer,
            EdgeTag::Interface { .. } => TagKind::Interface,
            EdgeTag::CellFace { .. } => TagKind::CellFace,
        }
    }

    /// Integer code written to VTK files.
    pub fn code(&self) -> i32 {
        match self {
            EdgeTag::Outer => 1,
            EdgeTag::Interface { .. } => 2,
            EdgeTag::CellFace { .. } => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: EdgeTag,
}

/// Circle approximated by the interface polygon of one lattice cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Rect {
            x_min,
            x_max,
            y_min,
            y_max,
        }
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

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }
}

/// Solid part of the unit cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Inclusion {
    /// Plain unit square; the cell problems have zero solutions.
    None,
    /// Disk of the given radius centered at (0.5, 0.5).
    Circle { radius: f64 },
}

/// Conforming triangle mesh with tagged boundary edges.
#[derive(Debug)]
pub struct Mesh2D {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    areas: Vec<f64>,
    inclusions: Vec<Circle>,
    locator: OnceLock<SpatialGrid>,
}

impl Clone for Mesh2D {
    fn clone(&self) -> Self {
        Mesh2D {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
            boundary_edges: self.boundary_edges.clone(),
            areas: self.areas.clone(),
            inclusions: self.inclusions.clone(),
            locator: OnceLock::new(),
        }
    }
}

#[inline]
pub(crate) fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

#[inline]
fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh2D {
    /// Builds a mesh and checks every structural invariant.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        inclusions: Vec<Circle>,
    ) -> Result<Self> {
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::Meshing {
                    region: format!("triangle {t}"),
                    reason: "vertex index out of range".into(),
                });
            }
            let a = 0.5 * orient(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(a > 0.0) {
                let c = vertices[tri[0]];
                return Err(Error::Meshing {
                    region: format!("triangle {t} near ({:.4}, {:.4})", c[0], c[1]),
                    reason: format!("non-positive signed area {a:e}"),
                });
            }
            areas.push(a);
        }
        let mesh = Mesh2D {
            vertices,
            triangles,
            boundary_edges,
            areas,
            inclusions,
            locator: OnceLock::new(),
        };
        mesh.check_topology()?;
        Ok(mesh)
    }

    fn check_topology(&self) -> Result<()> {
        let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *counts
                    .entry(edge_key(tri[k], tri[(k + 1) % 3]))
                    .or_insert(0) += 1;
            }
        }
        if let Some((e, _)) = counts.iter().find(|(_, &c)| c > 2) {
            return Err(Error::Conformity(format!(
                "edge {:?} shared by more than two triangles",
                e
            )));
        }
        let mut tagged: HashMap<(usize, usize), EdgeTag> = HashMap::new();
        for be in &self.boundary_edges {
            let key = edge_key(be.vertices[0], be.vertices[1]);
            if tagged.insert(key, be.tag).is_some() {
                return Err(Error::Conformity(format!("edge {key:?} tagged twice")));
            }
            match counts.get(&key) {
                Some(1) => {}
                _ => {
                    return Err(Error::Conformity(format!(
                        "tagged edge {key:?} is not on the topological boundary"
                    )))
                }
            }
        }
        let boundary = counts.values().filter(|&&c| c == 1).count();
        if boundary != tagged.len() {
            return Err(Error::Conformity(format!(
                "{} topological boundary edges but {} tagged edges",
                boundary,
                tagged.len()
            )));
        }
        for be in &self.boundary_edges {
            if let EdgeTag::Interface { cell } = be.tag {
                let circle = self.inclusions.get(cell).ok_or_else(|| {
                    Error::Conformity(format!("interface edge refers to unknown cell {cell}"))
                })?;
                for &v in &be.vertices {
                    let d = dist(self.vertices[v], circle.center) - circle.radius;
                    if d.abs() > INTERFACE_TOL {
                        return Err(Error::Conformity(format!(
                            "interface vertex {v} is {d:e} off its circle"
                        )));
                    }
                }
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

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn element_areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn inclusions(&self) -> &[Circle] {
        &self.inclusions
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn barycenter(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn edges_of_kind(&self, kind: TagKind) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary_edges
            .iter()
            .filter(move |e| e.tag.kind() == kind)
    }

    /// Total length of the boundary edges of the given kind.
    pub fn boundary_length(&self, kind: TagKind) -> f64 {
        self.edges_of_kind(kind)
            .map(|e| dist(self.vertices[e.vertices[0]], self.vertices[e.vertices[1]]))
            .sum()
    }

    /// Sorted, deduplicated vertex indices lying on interface edges.
    pub fn interface_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .edges_of_kind(TagKind::Interface)
            .flat_map(|e| e.vertices)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Largest edge length of the mesh.
    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in 0..self.n_triangles() {
            let p = self.triangle_points(t);
            for k in 0..3 {
                h = h.max(dist(p[k], p[(k + 1) % 3]));
            }
        }
        h
    }

    pub fn n_edges(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| edge_key(t[k], t[(k + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    /// Finds the triangle containing `p` and its barycentric coordinates.
    pub fn locate_point(&self, p: Point) -> Option<(usize, [f64; 3])> {
        self.locator
            .get_or_init(|| SpatialGrid::new(self))
            .locate(self, p)
    }

    /// Index of the vertex nearest to `p`.
    pub fn nearest_vertex(&self, p: Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, &v) in self.vertices.iter().enumerate() {
            let d = (v[0] - p[0]).powi(2) + (v[1] - p[1]).powi(2);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

/// Barycentric coordinates of `p` with respect to triangle `tri`.
pub fn barycentric(tri: [Point; 3], p: Point) -> [f64; 3] {
    let [a, b, c] = tri;
    let det = orient(a, b, c);
    let l0 = orient(p, b, c) / det;
    let l1 = orient(a, p, c) / det;
    let l2 = orient(a, b, p) / det;
    [l0, l1, l2]
}

/// Uniform bucket grid over triangle bounding boxes.
#[derive(Debug)]
struct SpatialGrid {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    offsets: Vec<usize>,
    items: Vec<u32>,
}

impl SpatialGrid {
    fn new(mesh: &Mesh2D) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &mesh.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let n_tri = mesh.n_triangles().max(1);
        let extent = [(hi[0] - lo[0]).max(1e-300), (hi[1] - lo[1]).max(1e-300)];
        let cell = ((extent[0] * extent[1]) / n_tri as f64).sqrt().max(1e-12) * 1.5;
        let nx = ((extent[0] / cell).ceil() as usize).clamp(1, 4096);
        let ny = ((extent[1] / cell).ceil() as usize).clamp(1, 4096);
        let cell = (extent[0] / nx as f64).max(extent[1] / ny as f64);
        let mut grid = SpatialGrid {
            origin: lo,
            cell,
            nx,
            ny,
            offsets: vec![0; nx * ny + 1],
            items: Vec::new(),
        };
        let ranges: Vec<_> = (0..mesh.n_triangles())
            .map(|t| {
                let p = mesh.triangle_points(t);
                let x0 = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
                let x1 = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
                let y0 = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
                let y1 = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
                let (i0, j0) = grid.cell_of([x0, y0]);
                let (i1, j1) = grid.cell_of([x1, y1]);
                (i0, i1, j0, j1)
            })
            .collect();
        for &(i0, i1, j0, j1) in &ranges {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    grid.offsets[j * nx + i + 1] += 1;
                }
            }
        }
        for k in 0..nx * ny {
            grid.offsets[k + 1] += grid.offsets[k];
        }
        let mut fill = grid.offsets.clone();
        grid.items = vec![0; grid.offsets[nx * ny]];
        for (t, &(i0, i1, j0, j1)) in ranges.iter().enumerate() {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let slot = &mut fill[j * nx + i];
                    grid.items[*slot] = t as u32;
                    *slot += 1;
                }
            }
        }
        grid
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let fx = ((p[0] - self.origin[0]) / self.cell).floor();
        let fy = ((p[1] - self.origin[1]) / self.cell).floor();
        let i = (fx.max(0.0) as usize).min(self.nx - 1);
        let j = (fy.max(0.0) as usize).min(self.ny - 1);
        (i, j)
    }

    fn locate(&self, mesh: &Mesh2D, p: Point) -> Option<(usize, [f64; 3])> {
        let slack = self.cell * 1e-9;
        if p[0] < self.origin[0] - slack
            || p[1] < self.origin[1] - slack
            || p[0] > self.origin[0] + self.cell * self.nx as f64 + slack
            || p[1] > self.origin[1] + self.cell * self.ny as f64 + slack
        {
            return None;
        }
        let (i, j) = self.cell_of(p);
        let k = j * self.nx + i;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.items[self.offsets[k]..self.offsets[k + 1]] {
            let t = t as usize;
            let l = barycentric(mesh.triangle_points(t), p);
            let m = l[0].min(l[1]).min(l[2]);
            if m >= -LOCATE_TOL && best.as_ref().map_or(true, |b| m > b.2) {
                best = Some((t, l, m));
            }
        }
        best.map(|(t, l, _)| (t, l))
    }
}

/// Mesh of the unit cell `Y = (0,1)^2` minus the inclusion.
///
/// `n_gamma` is the number of sides of the polygon inscribed in the circle;
/// it must be a multiple of 8 so that the mesh inherits the full symmetry of
/// the square.
pub fn build_unit_cell_mesh(inclusion: Inclusion, n_gamma: usize, h: f64) -> Result<Mesh2D> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "mesh size h must be positive, got {h}"
        )));
    }
    match inclusion {
        Inclusion::None => full_cell_mesh(h),
        Inclusion::Circle { radius } => {
            if !(radius > 0.0) {
                return Err(Error::Geometry(format!(
                    "inclusion radius must be positive, got {radius}; use Inclusion::None for an empty cell"
                )));
            }
            if radius >= RADIUS_LIMIT {
                return Err(Error::Geometry(format!(
                    "inclusion radius {radius} must be below {RADIUS_LIMIT} so the solid stays clear of the cell faces"
                )));
            }
            if n_gamma < 16 || n_gamma % 8 != 0 {
                return Err(Error::InvalidParameter(format!(
                    "n_gamma must be a multiple of 8 and at least 16, got {n_gamma}"
                )));
            }
            perforated_cell_mesh(radius, n_gamma, h)
        }
    }
}

fn full_cell_mesh(h: f64) -> Result<Mesh2D> {
    let n = ((1.0 / h).ceil() as usize).max(1);
    let (vertices, triangles) = structured_grid(Rect::new(0.0, 1.0, 0.0, 1.0), n, n);
    let boundary = tag_cell_faces(&vertices, &triangles, None)?;
    Mesh2D::new(vertices, triangles, boundary, Vec::new())
}

/// Rings of the octant mesh: (blend parameter, number of angular segments).
fn octant_rings(radius: f64, n0: usize, h: f64) -> Result<Vec<(f64, usize)>> {
    // Mean segment length of a ring at blend parameter `rho` with `n` segments.
    let seg = |rho: f64, n: usize| ((1.0 - rho) * radius * FRAC_PI_4 + rho * 0.5) / n as f64;
    let inner = |tau: f64| {
        let th = tau * FRAC_PI_4;
        [radius * th.cos(), radius * th.sin()]
    };
    let radial_len = 0.5 * (dist(inner(0.0), [0.5, 0.0]) + dist(inner(1.0), [0.5, 0.5]));

    let mut rings = vec![(0.0, n0)];
    loop {
        let &(rho, n) = rings.last().unwrap();
        if rho >= 1.0 {
            break;
        }
        if rings.len() > 100_000 {
            return Err(Error::Meshing {
                region: "cell octant".into(),
                reason: format!("mesh size h = {h} produces too many rings"),
            });
        }
        let n_next = if seg(rho, n) > SQRT_2 * h { 2 * n } else { n };
        let step = h.min(seg(rho, n_next)) / radial_len;
        rings.push((rho + step, n_next));
    }
    let last = rings.last().unwrap().0;
    for r in rings.iter_mut() {
        r.0 /= last;
    }
    rings.last_mut().unwrap().0 = 1.0;
    Ok(rings)
}

/// Structured mesh of the octant `0 <= t <= s`, outside the circle, inside `s <= 1/2`,
/// in coordinates centered at the inclusion.
fn octant_mesh(radius: f64, n_gamma: usize, h: f64) -> Result<(Vec<Point>, Vec<[usize; 3]>)> {
    let n0 = n_gamma / 8;
    let rings = octant_rings(radius, n0, h)?;
    let circle = |j: usize, n: usize| -> Point {
        if j == 0 {
            [radius, 0.0]
        } else if j == n {
            [radius * FRAC_1_SQRT_2, radius * FRAC_1_SQRT_2]
        } else {
            let th = j as f64 / n as f64 * FRAC_PI_4;
            [radius * th.cos(), radius * th.sin()]
        }
    };
    let mut vertices = Vec::new();
    let mut starts = Vec::with_capacity(rings.len());
    for &(rho, n) in &rings {
        starts.push(vertices.len());
        for j in 0..=n {
            let c = circle(j, n);
            let s = [0.5, 0.5 * j as f64 / n as f64];
            vertices.push([
                (1.0 - rho) * c[0] + rho * s[0],
                (1.0 - rho) * c[1] + rho * s[1],
            ]);
        }
    }
    let mut triangles = Vec::new();
    for i in 0..rings.len() - 1 {
        let (n_in, n_out) = (rings[i].1, rings[i + 1].1);
        let inn = |j: usize| starts[i] + j;
        let out = |j: usize| starts[i + 1] + j;
        if n_out == n_in {
            for j in 0..n_in {
                let (a, b, c, d) = (inn(j), inn(j + 1), out(j + 1), out(j));
                if dist(vertices[a], vertices[c]) <= dist(vertices[b], vertices[d]) {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        } else {
            debug_assert_eq!(n_out, 2 * n_in);
            for j in 0..n_in {
                let (i0, i1) = (inn(j), inn(j + 1));
                let (o0, o1, o2) = (out(2 * j), out(2 * j + 1), out(2 * j + 2));
                triangles.push([i0, o0, o1]);
                triangles.push([i0, o1, i1]);
                triangles.push([i1, o1, o2]);
            }
        }
    }
    Ok((vertices, triangles))
}

fn quantize(p: Point) -> (i64, i64) {
    ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64)
}

fn perforated_cell_mesh(radius: f64, n_gamma: usize, h: f64) -> Result<Mesh2D> {
    let (oct_v, oct_t) = octant_mesh(radius, n_gamma, h)?;
    let mut vertices: Vec<Point> = Vec::new();
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let mut triangles = Vec::new();
    for swap in [false, true] {
        for sx in [1.0, -1.0] {
            for sy in [1.0, -1.0] {
                let map: Vec<usize> = oct_v
                    .iter()
                    .map(|&[s, t]| {
                        let (a, b) = if swap { (t, s) } else { (s, t) };
                        let p = [0.5 + sx * a, 0.5 + sy * b];
                        *index.entry(quantize(p)).or_insert_with(|| {
                            vertices.push(p);
                            vertices.len() - 1
                        })
                    })
                    .collect();
                for tri in &oct_t {
                    triangles.push([map[tri[0]], map[tri[1]], map[tri[2]]]);
                }
            }
        }
    }
    orient_ccw(&vertices, &mut triangles);
    let circle = Circle {
        center: [0.5, 0.5],
        radius,
    };
    let boundary = tag_cell_faces(&vertices, &triangles, Some(circle))?;
    Mesh2D::new(vertices, triangles, boundary, vec![circle])
}

fn orient_ccw(vertices: &[Point], triangles: &mut [[usize; 3]]) {
    for t in triangles.iter_mut() {
        if orient(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }
}

fn topological_boundary(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut counts: HashMap<(usize, usize), (u32, [usize; 2])> = HashMap::new();
    for tri in triangles {
        for k in 0..3 {
            let e = [tri[k], tri[(k + 1) % 3]];
            counts.entry(edge_key(e[0], e[1])).or_insert((0, e)).0 += 1;
        }
    }
    let mut out: Vec<[usize; 2]> = counts
        .into_values()
        .filter(|(c, _)| *c == 1)
        .map(|(_, e)| e)
        .collect();
    out.sort_unstable();
    out
}

fn tag_cell_faces(
    vertices: &[Point],
    triangles: &[[usize; 3]],
    circle: Option<Circle>,
) -> Result<Vec<BoundaryEdge>> {
    let mut faces: HashMap<Side, Vec<([usize; 2], f64)>> = HashMap::new();
    let mut out = Vec::new();
    for e in topological_boundary(triangles) {
        let (p, q) = (vertices[e[0]], vertices[e[1]]);
        if let Some(c) = circle {
            if (dist(p, c.center) - c.radius).abs() < INTERFACE_TOL
                && (dist(q, c.center) - c.radius).abs() < INTERFACE_TOL
            {
                out.push(BoundaryEdge {
                    vertices: e,
                    tag: EdgeTag::Interface { cell: 0 },
                });
                continue;
            }
        }
        let side = if p[0] == 0.0 && q[0] == 0.0 {
            Side::Left
        } else if p[0] == 1.0 && q[0] == 1.0 {
            Side::Right
        } else if p[1] == 0.0 && q[1] == 0.0 {
            Side::Bottom
        } else if p[1] == 1.0 && q[1] == 1.0 {
            Side::Top
        } else {
            return Err(Error::Meshing {
                region: format!("boundary edge near ({:.4}, {:.4})", p[0], p[1]),
                reason: "edge lies neither on the inclusion nor on a cell face".into(),
            });
        };
        let along = match side {
            Side::Left | Side::Right => p[1].min(q[1]),
            Side::Bottom | Side::Top => p[0].min(q[0]),
        };
        faces.entry(side).or_default().push((e, along));
    }
    for (side, mut edges) in faces {
        edges.sort_by(|a, b| a.1.total_cmp(&b.1));
        for (pair, (e, _)) in edges.into_iter().enumerate() {
            out.push(BoundaryEdge {
                vertices: e,
                tag: EdgeTag::CellFace { side, pair },
            });
        }
    }
    out.sort_by_key(|e| e.vertices);
    Ok(out)
}

fn structured_grid(rect: Rect, nx: usize, ny: usize) -> (Vec<Point>, Vec<[usize; 3]>) {
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        let y = if j == ny {
            rect.y_max
        } else {
            rect.y_min + rect.height() * j as f64 / ny as f64
        };
        for i in 0..=nx {
            let x = if i == nx {
                rect.x_max
            } else {
                rect.x_min + rect.width() * i as f64 / nx as f64
            };
            vertices.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    (vertices, triangles)
}

/// Unperforated triangulation of `domain`; every boundary edge is `Outer`.
pub fn build_macro_mesh(domain: Rect, h: f64) -> Result<Mesh2D> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "mesh size h must be positive, got {h}"
        )));
    }
    if !(domain.width() > 0.0 && domain.height() > 0.0) {
        return Err(Error::Geometry(format!("degenerate domain {domain:?}")));
    }
    let nx = ((domain.width() / h).ceil() as usize).max(1);
    let ny = ((domain.height() / h).ceil() as usize).max(1);
    let (vertices, triangles) = structured_grid(domain, nx, ny);
    let boundary = topological_boundary(&triangles)
        .into_iter()
        .map(|e| BoundaryEdge {
            vertices: e,
            tag: EdgeTag::Outer,
        })
        .collect();
    Mesh2D::new(vertices, triangles, boundary, Vec::new())
}

/// Number of lattice cells along each axis for a commensurate domain.
pub fn lattice_counts(domain: Rect, epsilon: f64) -> Result<(usize, usize)> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Tiling(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let count = |len: f64, axis: &str| -> Result<usize> {
        let n = (len / epsilon).round();
        if n < 1.0 || (n * epsilon - len).abs() > 1e-12 {
            return Err(Error::Tiling(format!(
                "{axis} extent {len} is not an integer multiple of epsilon = {epsilon}"
            )));
        }
        Ok(n as usize)
    };
    Ok((count(domain.width(), "x")?, count(domain.height(), "y")?))
}

/// Tiles the `epsilon`-scaled unit-cell `template` over `domain`.
///
/// Cells are numbered row by row starting at the lower left corner; the
/// interface edges of cell `k` carry `EdgeTag::Interface { cell: k }`.
pub fn build_perforated_mesh(domain: Rect, epsilon: f64, template: &Mesh2D) -> Result<Mesh2D> {
    let (ncx, ncy) = lattice_counts(domain, epsilon)?;
    let sides: Vec<Side> = template
        .boundary_edges
        .iter()
        .filter_map(|e| match e.tag {
            EdgeTag::CellFace { side, .. } => Some(side),
            _ => None,
        })
        .collect();
    for s in [Side::Left, Side::Right, Side::Bottom, Side::Top] {
        if !sides.contains(&s) {
            return Err(Error::Tiling(format!(
                "template has no {s:?} cell face; it is not a unit-cell mesh"
            )));
        }
    }
    let on_face = {
        let mut f = vec![false; template.n_vertices()];
        for e in template.edges_of_kind(TagKind::CellFace) {
            f[e.vertices[0]] = true;
            f[e.vertices[1]] = true;
        }
        f
    };
    let cx = domain.width() / ncx as f64;
    let cy = domain.height() / ncy as f64;
    let n_cells = ncx * ncy;
    let mut vertices: Vec<Point> = Vec::with_capacity(n_cells * template.n_vertices());
    let mut triangles = Vec::with_capacity(n_cells * template.n_triangles());
    let mut boundary = Vec::new();
    let mut inclusions = Vec::with_capacity(n_cells);
    let mut shared: HashMap<(i64, i64), usize> = HashMap::new();
    let mut merged = 0usize;
    let scale = 1.0 / epsilon;
    let template_circle = template.inclusions.first().copied();
    for j in 0..ncy {
        for i in 0..ncx {
            let cell = j * ncx + i;
            let map: Vec<usize> = template
                .vertices
                .iter()
                .enumerate()
                .map(|(k, y)| {
                    let x = if y[0] == 1.0 && i + 1 == ncx {
                        domain.x_max
                    } else {
                        domain.x_min + (i as f64 + y[0]) * cx
                    };
                    let yy = if y[1] == 1.0 && j + 1 == ncy {
                        domain.y_max
                    } else {
                        domain.y_min + (j as f64 + y[1]) * cy
                    };
                    let p = [x, yy];
                    if on_face[k] {
                        let key = quantize([p[0] * scale, p[1] * scale]);
                        if let Some(&v) = shared.get(&key) {
                            merged += 1;
                            return v;
                        }
                        shared.insert(key, vertices.len());
                    }
                    vertices.push(p);
                    vertices.len() - 1
                })
                .collect();
            for t in &template.triangles {
                triangles.push([map[t[0]], map[t[1]], map[t[2]]]);
            }
            for e in &template.boundary_edges {
                let v = [map[e.vertices[0]], map[e.vertices[1]]];
                let tag = match e.tag {
                    EdgeTag::Interface { .. } => Some(EdgeTag::Interface { cell }),
                    EdgeTag::CellFace { side, .. } => {
                        let outer = match side {
                            Side::Left => i == 0,
                            Side::Right => i + 1 == ncx,
                            Side::Bottom => j == 0,
                            Side::Top => j + 1 == ncy,
                        };
                        outer.then_some(EdgeTag::Outer)
                    }
                    EdgeTag::Outer => {
                        return Err(Error::Tiling(
                            "template carries Outer edges; expected a unit-cell mesh".into(),
                        ))
                    }
                };
                if let Some(tag) = tag {
                    boundary.push(BoundaryEdge { vertices: v, tag });
                }
            }
            if let Some(c) = template_circle {
                inclusions.push(Circle {
                    center: [
                        domain.x_min + (i as f64 + c.center[0]) * cx,
                        domain.y_min + (j as f64 + c.center[1]) * cy,
                    ],
                    radius: c.radius * epsilon,
                });
            }
        }
    }
    let expected_vertices = n_cells * template.n_vertices() - merged;
    debug_assert_eq!(expected_vertices, vertices.len());
    Mesh2D::new(vertices, triangles, boundary, inclusions).map_err(|e| match e {
        Error::Conformity(msg) => Error::Conformity(format!("after tiling: {msg}")),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn default_template(h: f64) -> Mesh2D {
        build_unit_cell_mesh(Inclusion::Circle { radius: 0.25 }, 64, h).unwrap()
    }

    fn polygon_area(r: f64, n: usize) -> f64 {
        0.5 * n as f64 * r * r * (2.0 * PI / n as f64).sin()
    }

    #[test]
    fn unit_cell_area_matches_polygon_gap() {
        let m = default_template(0.05);
        let exact = 1.0 - PI * 0.0625;
        assert!((m.total_area() - exact).abs() < 1e-3);
        assert!((m.total_area() - (1.0 - polygon_area(0.25, 64))).abs() < 1e-12);
    }

    #[test]
    fn empty_cell_has_unit_area() {
        let m = build_unit_cell_mesh(Inclusion::None, 64, 0.1).unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-12);
        assert_eq!(m.edges_of_kind(TagKind::Interface).count(), 0);
    }

    #[test]
    fn touching_inclusion_rejected() {
        let e = build_unit_cell_mesh(Inclusion::Circle { radius: 0.5 }, 64, 0.05).unwrap_err();
        assert!(matches!(e, Error::Geometry(_)));
        let e = build_unit_cell_mesh(Inclusion::Circle { radius: 0.45 }, 64, 0.05).unwrap_err();
        assert!(matches!(e, Error::Geometry(_)));
    }

    #[test]
    fn bad_polygon_count_rejected() {
        for n in [8, 20, 63] {
            let e = build_unit_cell_mesh(Inclusion::Circle { radius: 0.25 }, n, 0.05);
            assert!(
                matches!(e, Err(Error::InvalidParameter(_))),
                "n_gamma = {n}"
            );
        }
    }

    #[test]
    fn template_faces_match_periodically() {
        for h in [0.1, 0.05, 0.02] {
            let m = default_template(h);
            let face = |pred: &dyn Fn(Point) -> bool, coord: usize| {
                let mut v: Vec<f64> = m
                    .vertices()
                    .iter()
                    .filter(|p| pred(**p))
                    .map(|p| p[coord])
                    .collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let left = face(&|p| p[0] == 0.0, 1);
            let right = face(&|p| p[0] == 1.0, 1);
            let bottom = face(&|p| p[1] == 0.0, 0);
            let top = face(&|p| p[1] == 1.0, 0);
            assert!(left.len() > 2);
            assert_eq!(left.len(), right.len());
            assert_eq!(bottom.len(), top.len());
            for (a, b) in left.iter().zip(&right).chain(bottom.iter().zip(&top)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn interface_is_the_inscribed_polygon() {
        let m = default_template(0.05);
        assert_eq!(m.edges_of_kind(TagKind::Interface).count(), 64);
        let perim = 2.0 * 64.0 * 0.25 * (PI / 64.0).sin();
        assert!((m.boundary_length(TagKind::Interface) - perim).abs() < 1e-12);
    }

    #[test]
    fn template_is_mirror_symmetric() {
        let m = default_template(0.05);
        let keys: std::collections::HashSet<_> =
            m.vertices().iter().map(|&p| quantize(p)).collect();
        for &[x, y] in m.vertices() {
            assert!(keys.contains(&quantize([1.0 - x, y])));
            assert!(keys.contains(&quantize([y, x])));
        }
    }

    #[test]
    fn cell_mesh_respects_target_size() {
        // below the interface segment length the polygon sets the scale
        let segment = 2.0 * 0.25 * (std::f64::consts::PI / 64.0).sin();
        for h in [0.1, 0.05, 0.02, 0.01] {
            let m = default_template(h);
            let bound = 1.6 * h.max(segment);
            assert!(
                m.max_edge_length() < bound,
                "h = {h}: {}",
                m.max_edge_length()
            );
        }
    }

    #[test]
    fn perforated_mesh_counts_and_areas() {
        let t = default_template(0.1);
        let domain = Rect::new(0.0, 1.2, 0.0, 1.0);
        let m = build_perforated_mesh(domain, 0.2, &t).unwrap();
        assert_eq!(m.inclusions().len(), 30);
        assert!(m.edges_of_kind(TagKind::CellFace).next().is_none());
        let expect = 30.0 * 0.04 * t.total_area();
        assert!((m.total_area() - expect).abs() < 1e-10 * expect);
        assert!((m.total_area() - 1.2 * 0.803650).abs() < 1e-3);
        let iface = 30.0 * 0.2 * t.boundary_length(TagKind::Interface);
        assert!((m.boundary_length(TagKind::Interface) - iface).abs() < 1e-10 * iface);
        let outer = m.boundary_length(TagKind::Outer);
        assert!((outer - 4.4).abs() < 1e-12);

        let m = build_perforated_mesh(domain, 0.1, &t).unwrap();
        assert_eq!(m.inclusions().len(), 120);
    }

    #[test]
    fn incommensurate_epsilon_rejected() {
        let t = default_template(0.1);
        let e = build_perforated_mesh(Rect::new(0.0, 1.2, 0.0, 1.0), 0.07, &t).unwrap_err();
        assert!(matches!(e, Error::Tiling(_)));
    }

    #[test]
    fn macro_mesh_area_and_growth() {
        let d = Rect::new(0.0, 1.2, 0.0, 1.0);
        let m = build_macro_mesh(d, 0.05).unwrap();
        assert!((m.total_area() - 1.2).abs() < 1e-12);
        let coarse = build_macro_mesh(Rect::new(0.0, 1.0, 0.0, 1.0), 0.5).unwrap();
        assert!(coarse.n_triangles() >= 2);
        let fine = build_macro_mesh(d, 0.02).unwrap();
        assert!((fine.total_area() - 1.2).abs() < 1e-12);
        let ratio = fine.n_edges() as f64 / m.n_edges() as f64;
        assert!((ratio - 6.25).abs() < 0.5, "edge ratio {ratio}");
    }

    #[test]
    fn locate_in_perforated_mesh() {
        let t = default_template(0.1);
        let m = build_perforated_mesh(Rect::new(0.0, 1.2, 0.0, 1.0), 0.2, &t).unwrap();
        let (_, l) = m.locate_point([0.6, 0.5]).expect("pore point");
        assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.locate_point([0.1, 0.1]).is_none());
        assert!(m.locate_point([1.3, 0.5]).is_none());
        let v = m.vertices()[17];
        let (_, l) = m.locate_point(v).unwrap();
        assert!(l.iter().any(|&x| x == 1.0));
    }

    #[test]
    fn locate_barycenters() {
        let m = default_template(0.1);
        for t in 0..m.n_triangles() {
            let (found, _) = m.locate_point(m.barycenter(t)).unwrap();
            assert_eq!(found, t);
        }
    }
}
