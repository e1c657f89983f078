//! Finite-window geometry of the slab Z^2 x {0,..,k}: vertices, canonical
//! edge enumeration, regions with vertical extension, and the total orders
//! on vertices, paths and circuits used by the minimal-path machinery.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlabError};

pub type EdgeId = u32;
pub type VertexId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vertex {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Vertex {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Vertex { x, y, z }
    }

    pub fn xy(&self) -> (i32, i32) {
        (self.x, self.y)
    }

    fn norm_sq(&self) -> i64 {
        let (x, y, z) = (self.x as i64, self.y as i64, self.z as i64);
        x * x + y * y + z * z
    }
}

/// Total order on vertices: Euclidean norm first, then coordinates
/// lexicographically as a tie break.
pub fn cmp_vertices(a: &Vertex, b: &Vertex) -> Ordering {
    a.norm_sq()
        .cmp(&b.norm_sq())
        .then(a.x.cmp(&b.x))
        .then(a.y.cmp(&b.y))
        .then(a.z.cmp(&b.z))
}

pub fn vertex_less(a: &Vertex, b: &Vertex) -> bool {
    cmp_vertices(a, b) == Ordering::Less
}

/// Sup-norm distance between the plane projections of two vertices. The
/// z coordinate is ignored.
pub fn dist_star_vv(a: &Vertex, b: &Vertex) -> i32 {
    (a.x - b.x).abs().max((a.y - b.y).abs())
}

/// Minimum projected sup-norm distance over all pairs drawn from two
/// nonempty vertex sets.
pub fn dist_star(a: &[Vertex], b: &[Vertex]) -> Result<i32> {
    if a.is_empty() || b.is_empty() {
        return Err(SlabError::EmptySet("dist_star".into()));
    }
    let mut best = i32::MAX;
    for u in a {
        for v in b {
            best = best.min(dist_star_vv(u, v));
        }
    }
    Ok(best)
}

/// Serializable construction parameters; the canonical manifest form is
/// `{"k": k, "window": [x0, x1, y0, y1]}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub k: i32,
    pub window: [i32; 4],
}

/// The slab restricted to a finite window `[x0,x1] x [y0,y1] x [0,k]`.
///
/// Vertices are indexed row-major (y outer, then x, then z); edges are
/// enumerated by scanning vertices in index order and emitting the +x, +y
/// and +z edge of each vertex when the other endpoint is inside the window.
/// Both enumerations are pure functions of the parameters.
#[derive(Clone, Debug)]
pub struct SlabGeometry {
    pub k: i32,
    pub x0: i32,
    pub x1: i32,
    pub y0: i32,
    pub y1: i32,
    width: usize,
    layers: usize,
    edges: Vec<[VertexId; 2]>,
    adjacency: Vec<Vec<(VertexId, EdgeId)>>,
}

const DIRS: [(i32, i32, i32); 6] = [
    (1, 0, 0),
    (-1, 0, 0),
    (0, 1, 0),
    (0, -1, 0),
    (0, 0, 1),
    (0, 0, -1),
];

impl SlabGeometry {
    pub fn new(params: GeometryParams) -> Result<Self> {
        let [x0, x1, y0, y1] = params.window;
        if params.k < 0 || x0 > x1 || y0 > y1 {
            return Err(SlabError::InvalidParameter(format!(
                "bad geometry parameters {params:?}"
            )));
        }
        let width = (x1 - x0 + 1) as usize;
        let height = (y1 - y0 + 1) as usize;
        let layers = (params.k + 1) as usize;
        let n = width * height * layers;
        let mut g = SlabGeometry {
            k: params.k,
            x0,
            x1,
            y0,
            y1,
            width,
            layers,
            edges: Vec::new(),
            adjacency: vec![Vec::new(); n],
        };
        for id in 0..n as u32 {
            let v = g.vertex(id);
            for d in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] {
                let w = Vertex::new(v.x + d.0, v.y + d.1, v.z + d.2);
                if g.contains(&w) {
                    let wid = g.vertex_id(&w).unwrap();
                    let eid = g.edges.len() as EdgeId;
                    g.edges.push([id, wid]);
                    g.adjacency[id as usize].push((wid, eid));
                    g.adjacency[wid as usize].push((id, eid));
                }
            }
        }
        Ok(g)
    }

    /// Square window `[-n,n]^2` with all layers, convenient for the
    /// box-and-annulus experiments.
    pub fn centered(k: i32, n: i32) -> Result<Self> {
        SlabGeometry::new(GeometryParams { k, window: [-n, n, -n, n] })
    }

    pub fn params(&self) -> GeometryParams {
        GeometryParams { k: self.k, window: [self.x0, self.x1, self.y0, self.y1] }
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        v.x >= self.x0
            && v.x <= self.x1
            && v.y >= self.y0
            && v.y <= self.y1
            && v.z >= 0
            && v.z <= self.k
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_id(&self, v: &Vertex) -> Result<VertexId> {
        if !self.contains(v) {
            return Err(SlabError::OutsideWindow(*v));
        }
        let row = (v.y - self.y0) as usize;
        let col = (v.x - self.x0) as usize;
        Ok(((row * self.width + col) * self.layers + v.z as usize) as VertexId)
    }

    pub fn vertex(&self, id: VertexId) -> Vertex {
        let id = id as usize;
        let z = (id % self.layers) as i32;
        let cell = id / self.layers;
        let x = (cell % self.width) as i32 + self.x0;
        let y = (cell / self.width) as i32 + self.y0;
        Vertex::new(x, y, z)
    }

    pub fn endpoints(&self, e: EdgeId) -> [Vertex; 2] {
        let [a, b] = self.edges[e as usize];
        [self.vertex(a), self.vertex(b)]
    }

    pub fn endpoint_ids(&self, e: EdgeId) -> [VertexId; 2] {
        self.edges[e as usize]
    }

    pub fn adjacent(&self, id: VertexId) -> &[(VertexId, EdgeId)] {
        &self.adjacency[id as usize]
    }

    pub fn edge_between(&self, a: VertexId, b: VertexId) -> Option<EdgeId> {
        self.adjacency[a as usize]
            .iter()
            .find(|(w, _)| *w == b)
            .map(|(_, e)| *e)
    }

    /// Lattice neighbors of `v` inside the window, in the fixed direction
    /// order +x, -x, +y, -y, +z, -z.
    pub fn neighbors(&self, v: &Vertex) -> Result<Vec<Vertex>> {
        if !self.contains(v) {
            return Err(SlabError::OutsideWindow(*v));
        }
        Ok(DIRS
            .iter()
            .map(|d| Vertex::new(v.x + d.0, v.y + d.1, v.z + d.2))
            .filter(|w| self.contains(w))
            .collect())
    }

    /// Vertical extension of a plane set: `S x [k]`, as a region. Errors if
    /// any cell lies outside the window footprint.
    pub fn bar(&self, cells: &[(i32, i32)]) -> Result<Region> {
        if cells.is_empty() {
            return Err(SlabError::EmptySet("bar".into()));
        }
        for &(x, y) in cells {
            if x < self.x0 || x > self.x1 || y < self.y0 || y > self.y1 {
                return Err(SlabError::OutsideWindow(Vertex::new(x, y, 0)));
            }
        }
        // A rectangle keeps face metadata; anything else is a bare cylinder.
        let (xs, ys): (Vec<i32>, Vec<i32>) = cells.iter().copied().unzip();
        let (xmin, xmax) = (*xs.iter().min().unwrap(), *xs.iter().max().unwrap());
        let (ymin, ymax) = (*ys.iter().min().unwrap(), *ys.iter().max().unwrap());
        let full = ((xmax - xmin + 1) * (ymax - ymin + 1)) as usize;
        let mut sorted: Vec<(i32, i32)> = cells.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() == full {
            Ok(Region::Rect { x0: xmin, x1: xmax, y0: ymin, y1: ymax })
        } else {
            Ok(Region::Cells { cells: sorted })
        }
    }
}

/// A vertically extended plane region: rectangle, annulus, or a cylinder
/// over an arbitrary plane set. Membership depends only on the plane
/// projection; all layers are included.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Rect { x0: i32, x1: i32, y0: i32, y1: i32 },
    /// `B_outer(c) \ B_inner(c)` with sup-norm balls; requires inner < outer.
    Annulus { cx: i32, cy: i32, inner: i32, outer: i32 },
    Cells { cells: Vec<(i32, i32)> },
}

impl Region {
    pub fn rect(x0: i32, x1: i32, y0: i32, y1: i32) -> Region {
        Region::Rect { x0, x1, y0, y1 }
    }

    /// The ball `B_n(c) = c + [-n,n]^2`.
    pub fn ball(cx: i32, cy: i32, n: i32) -> Region {
        Region::Rect { x0: cx - n, x1: cx + n, y0: cy - n, y1: cy + n }
    }

    pub fn annulus(cx: i32, cy: i32, inner: i32, outer: i32) -> Result<Region> {
        if inner >= outer || inner < 0 {
            return Err(SlabError::InvalidParameter(format!(
                "annulus radii {inner} >= {outer}"
            )));
        }
        Ok(Region::Annulus { cx, cy, inner, outer })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Region::Rect { .. } => "rectangle",
            Region::Annulus { .. } => "annulus",
            Region::Cells { .. } => "cells",
        }
    }

    pub fn contains_xy(&self, x: i32, y: i32) -> bool {
        match self {
            Region::Rect { x0, x1, y0, y1 } => x >= *x0 && x <= *x1 && y >= *y0 && y <= *y1,
            Region::Annulus { cx, cy, inner, outer } => {
                let d = (x - cx).abs().max((y - cy).abs());
                d > *inner && d <= *outer
            }
            Region::Cells { cells } => cells.binary_search(&(x, y)).is_ok(),
        }
    }

    pub fn contains(&self, v: &Vertex, g: &SlabGeometry) -> bool {
        g.contains(v) && self.contains_xy(v.x, v.y)
    }

    pub fn vertices(&self, g: &SlabGeometry) -> Vec<Vertex> {
        let mut out = Vec::new();
        for y in g.y0..=g.y1 {
            for x in g.x0..=g.x1 {
                if self.contains_xy(x, y) {
                    for z in 0..=g.k {
                        out.push(Vertex::new(x, y, z));
                    }
                }
            }
        }
        out
    }

    fn rect_bounds(&self) -> Result<(i32, i32, i32, i32)> {
        match self {
            Region::Rect { x0, x1, y0, y1 } => Ok((*x0, *x1, *y0, *y1)),
            other => Err(SlabError::RegionKind { expected: "rectangle", got: other.kind_name() }),
        }
    }

    /// The left vertical face `{x0} x [y0,y1] x [k]`.
    pub fn left_face(&self, g: &SlabGeometry) -> Result<Vec<Vertex>> {
        let (x0, _, y0, y1) = self.rect_bounds()?;
        Ok(face_column(g, x0, x0, y0, y1))
    }

    pub fn right_face(&self, g: &SlabGeometry) -> Result<Vec<Vertex>> {
        let (_, x1, y0, y1) = self.rect_bounds()?;
        Ok(face_column(g, x1, x1, y0, y1))
    }

    pub fn bottom_face(&self, g: &SlabGeometry) -> Result<Vec<Vertex>> {
        let (x0, x1, y0, _) = self.rect_bounds()?;
        Ok(face_row(g, x0, x1, y0))
    }

    pub fn top_face(&self, g: &SlabGeometry) -> Result<Vec<Vertex>> {
        let (x0, x1, _, y1) = self.rect_bounds()?;
        Ok(face_row(g, x0, x1, y1))
    }

    /// Vertex boundary relative to the full slab: vertices of the region
    /// with a slab neighbor outside it (window clipping ignored for the
    /// outside test in the plane, honored in z automatically).
    pub fn boundary(&self, g: &SlabGeometry) -> Vec<Vertex> {
        self.vertices(g)
            .into_iter()
            .filter(|v| {
                DIRS.iter().any(|d| {
                    let w = Vertex::new(v.x + d.0, v.y + d.1, v.z + d.2);
                    (w.z >= 0 && w.z <= g.k) && !self.contains_xy(w.x, w.y)
                })
            })
            .collect()
    }
}

fn face_column(g: &SlabGeometry, x0: i32, x1: i32, y0: i32, y1: i32) -> Vec<Vertex> {
    let mut out = Vec::new();
    for x in x0..=x1 {
        for y in y0..=y1 {
            for z in 0..=g.k {
                let v = Vertex::new(x, y, z);
                if g.contains(&v) {
                    out.push(v);
                }
            }
        }
    }
    out
}

fn face_row(g: &SlabGeometry, x0: i32, x1: i32, y: i32) -> Vec<Vertex> {
    face_column(g, x0, x1, y, y)
}

/// An ordered vertex sequence: an open self-avoiding path, or a circuit
/// stored with its first vertex repeated at the end.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathOrCircuit {
    pub vertices: Vec<Vertex>,
    pub closed: bool,
    pub canonical: bool,
}

impl PathOrCircuit {
    pub fn path(vertices: Vec<Vertex>) -> Self {
        PathOrCircuit { vertices, closed: false, canonical: false }
    }

    /// Builds the canonical circuit representative from a cyclic vertex
    /// sequence (with or without the closing repeat): rotate so the
    /// order-minimal vertex comes first, and orient so the second vertex
    /// precedes the second-to-last one.
    pub fn circuit(mut vertices: Vec<Vertex>) -> Result<Self> {
        if vertices.len() >= 2 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 4 {
            return Err(SlabError::InvalidParameter(
                "circuit needs at least 4 distinct vertices".into(),
            ));
        }
        let min_idx = (0..vertices.len())
            .min_by(|&i, &j| cmp_vertices(&vertices[i], &vertices[j]))
            .unwrap();
        vertices.rotate_left(min_idx);
        let forward = vertices.clone();
        let mut backward = vertices;
        backward[1..].reverse();
        let mut rep = if seq_cmp(&forward, &backward) == Ordering::Greater {
            backward
        } else {
            forward
        };
        let first = rep[0];
        rep.push(first);
        Ok(PathOrCircuit { vertices: rep, closed: true, canonical: true })
    }

    /// The comparison key: the full sequence for paths, the representative
    /// without the closing repeat for circuits.
    pub fn key(&self) -> &[Vertex] {
        if self.closed {
            &self.vertices[..self.vertices.len() - 1]
        } else {
            &self.vertices
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edge ids traversed by the sequence.
    pub fn edge_ids(&self, g: &SlabGeometry) -> Result<Vec<EdgeId>> {
        let mut out = Vec::new();
        for pair in self.vertices.windows(2) {
            let a = g.vertex_id(&pair[0])?;
            let b = g.vertex_id(&pair[1])?;
            out.push(g.edge_between(a, b).ok_or_else(|| {
                SlabError::InvalidParameter(format!(
                    "non-adjacent consecutive vertices {:?} {:?}",
                    pair[0], pair[1]
                ))
            })?);
        }
        Ok(out)
    }

    /// Checks adjacency and self-avoidance against a geometry.
    pub fn validate(&self, g: &SlabGeometry) -> Result<()> {
        self.edge_ids(g)?;
        let interior = self.key();
        let mut seen = std::collections::HashSet::new();
        for v in interior {
            if !seen.insert(*v) {
                return Err(SlabError::InvalidParameter("repeated vertex".into()));
            }
        }
        Ok(())
    }
}

fn seq_cmp(a: &[Vertex], b: &[Vertex]) -> Ordering {
    for (u, v) in a.iter().zip(b.iter()) {
        match cmp_vertices(u, v) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    // A strict prefix sorts before its extensions.
    a.len().cmp(&b.len())
}

/// Lexicographic comparison of two paths (or two canonical circuits) under
/// the vertex order. Comparing a path with a circuit is a domain error.
pub fn cmp_paths(p: &PathOrCircuit, q: &PathOrCircuit) -> Result<Ordering> {
    if p.closed != q.closed {
        return Err(SlabError::MixedComparison);
    }
    Ok(seq_cmp(p.key(), q.key()))
}

pub fn path_less(p: &PathOrCircuit, q: &PathOrCircuit) -> Result<bool> {
    Ok(cmp_paths(p, q)? == Ordering::Less)
}
