//! Cluster structure, crossing events, minimal open paths, surrounding
//! circuits in annuli, and the three-disjoint-paths radius check.

use std::collections::VecDeque;

use crate::error::{Result, SlabError};
use crate::geometry::{
    cmp_vertices, vertex_less, PathOrCircuit, Region, SlabGeometry, Vertex, VertexId,
};
use crate::labels::BondConfig;

/// Plain union-find with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    /// Returns true if the two classes were distinct.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        true
    }

    pub fn same(&mut self, a: u32, b: u32) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Connected components of the open subgraph restricted to a region.
#[derive(Clone, Debug)]
pub struct ClusterPartition {
    comp: Vec<u32>,
    pub sizes: Vec<usize>,
}

const NO_COMP: u32 = u32::MAX;

impl ClusterPartition {
    /// Component id of a vertex, or None outside the region.
    pub fn component(&self, id: VertexId) -> Option<u32> {
        let c = self.comp[id as usize];
        (c != NO_COMP).then_some(c)
    }

    pub fn same_cluster(&self, a: VertexId, b: VertexId) -> bool {
        matches!((self.component(a), self.component(b)), (Some(x), Some(y)) if x == y)
    }

    pub fn component_count(&self) -> usize {
        self.sizes.len()
    }
}

/// Exact connected components of the open subgraph of `region`.
pub fn clusters(g: &SlabGeometry, c: &BondConfig, region: &Region) -> ClusterPartition {
    let n = g.vertex_count();
    let in_region: Vec<bool> = (0..n as u32)
        .map(|id| region.contains(&g.vertex(id), g))
        .collect();
    let mut uf = UnionFind::new(n);
    for e in 0..g.edge_count() as u32 {
        if c.is_open(e) {
            let [a, b] = g.endpoint_ids(e);
            if in_region[a as usize] && in_region[b as usize] {
                uf.union(a, b);
            }
        }
    }
    let mut comp = vec![NO_COMP; n];
    let mut sizes = Vec::new();
    let mut label_of_root = vec![NO_COMP; n];
    for id in 0..n as u32 {
        if in_region[id as usize] {
            let r = uf.find(id) as usize;
            if label_of_root[r] == NO_COMP {
                label_of_root[r] = sizes.len() as u32;
                sizes.push(0);
            }
            comp[id as usize] = label_of_root[r];
            sizes[label_of_root[r] as usize] += 1;
        }
    }
    ClusterPartition { comp, sizes }
}

/// A connection query: does an open path inside `region` join `source`
/// to `target`?
#[derive(Clone, Debug)]
pub struct CrossingQuery {
    pub region: Region,
    pub source: Vec<Vertex>,
    pub target: Vec<Vertex>,
}

impl CrossingQuery {
    /// The horizontal crossing event of the rectangle `[0,m] x [0,n]`:
    /// left vertical face to right vertical face.
    pub fn horizontal(g: &SlabGeometry, m: i32, n: i32) -> Result<CrossingQuery> {
        let region = Region::rect(0, m, 0, n);
        Ok(CrossingQuery {
            source: region.left_face(g)?,
            target: region.right_face(g)?,
            region,
        })
    }

    /// Vertical crossing of `[0,m] x [0,n]`: bottom face to top face.
    pub fn vertical(g: &SlabGeometry, m: i32, n: i32) -> Result<CrossingQuery> {
        let region = Region::rect(0, m, 0, n);
        Ok(CrossingQuery {
            source: region.bottom_face(g)?,
            target: region.top_face(g)?,
            region,
        })
    }

    /// One-arm query: inner box bar to the boundary of the outer box bar.
    pub fn one_arm(g: &SlabGeometry, m: i32, n: i32) -> CrossingQuery {
        let outer = Region::ball(0, 0, n);
        CrossingQuery {
            source: Region::ball(0, 0, m).vertices(g),
            target: outer.boundary(g),
            region: outer,
        }
    }
}

/// BFS evaluation of a crossing query. An empty source or target inside
/// the region makes the event false, not an error.
pub fn crossing(g: &SlabGeometry, c: &BondConfig, q: &CrossingQuery) -> bool {
    let n = g.vertex_count();
    let mut is_target = vec![false; n];
    let mut any_target = false;
    for v in &q.target {
        if q.region.contains(v, g) {
            if let Ok(id) = g.vertex_id(v) {
                is_target[id as usize] = true;
                any_target = true;
            }
        }
    }
    if !any_target {
        return false;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for v in &q.source {
        if q.region.contains(v, g) {
            if let Ok(id) = g.vertex_id(v) {
                if !seen[id as usize] {
                    if is_target[id as usize] {
                        return true;
                    }
                    seen[id as usize] = true;
                    queue.push_back(id);
                }
            }
        }
    }
    while let Some(id) = queue.pop_front() {
        for &(w, e) in g.adjacent(id) {
            if c.is_open(e) && !seen[w as usize] && q.region.contains(&g.vertex(w), g) {
                if is_target[w as usize] {
                    return true;
                }
                seen[w as usize] = true;
                queue.push_back(w);
            }
        }
    }
    false
}

/// Can `from` reach a vertex with `target[v]` through open edges inside the
/// region, avoiding `blocked` vertices? `from` itself must not be blocked.
fn reaches(
    g: &SlabGeometry,
    c: &BondConfig,
    in_region: &[bool],
    blocked: &[bool],
    from: VertexId,
    target: &[bool],
) -> bool {
    if blocked[from as usize] || !in_region[from as usize] {
        return false;
    }
    if target[from as usize] {
        return true;
    }
    let mut seen = vec![false; g.vertex_count()];
    seen[from as usize] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(id) = queue.pop_front() {
        for &(w, e) in g.adjacent(id) {
            let wi = w as usize;
            if c.is_open(e) && !seen[wi] && in_region[wi] && !blocked[wi] {
                if target[wi] {
                    return true;
                }
                seen[wi] = true;
                queue.push_back(w);
            }
        }
    }
    false
}

/// The lexicographically minimal open self-avoiding path from A to B inside
/// `region`, under the path order; None when no open path exists.
///
/// Greedy: the path is grown one vertex at a time, always taking the
/// order-smallest next vertex from which B is still reachable in the open
/// subgraph avoiding the current prefix. The reachability test is sound
/// because any open walk to B avoiding the prefix contains a simple path,
/// so feasibility by connectivity coincides with feasibility by
/// self-avoiding continuation. The path stops at its first vertex of B: a
/// prefix precedes all of its extensions in the order.
pub fn min_open_path(
    g: &SlabGeometry,
    c: &BondConfig,
    region: &Region,
    a: &[Vertex],
    b: &[Vertex],
) -> Result<Option<PathOrCircuit>> {
    let n = g.vertex_count();
    let in_region: Vec<bool> = (0..n as u32)
        .map(|id| region.contains(&g.vertex(id), g))
        .collect();
    let mut in_b = vec![false; n];
    for v in b {
        if region.contains(v, g) {
            in_b[g.vertex_id(v)? as usize] = true;
        }
    }
    let no_block = vec![false; n];
    // Feasible starts: vertices of A (inside the region) from which B is
    // reachable. The order-smallest one begins the minimal path.
    let mut start: Option<Vertex> = None;
    for v in a {
        if region.contains(v, g)
            && reaches(g, c, &in_region, &no_block, g.vertex_id(v)?, &in_b)
            && start.is_none_or(|s| vertex_less(v, &s))
        {
            start = Some(*v);
        }
    }
    let Some(start) = start else { return Ok(None) };

    let mut path = vec![start];
    let mut blocked = vec![false; n];
    let mut cur = g.vertex_id(&start)?;
    while !in_b[cur as usize] {
        blocked[cur as usize] = true;
        let mut next: Option<(Vertex, VertexId)> = None;
        for &(w, e) in g.adjacent(cur) {
            let wv = g.vertex(w);
            if c.is_open(e)
                && in_region[w as usize]
                && !blocked[w as usize]
                && next.is_none_or(|(nv, _)| vertex_less(&wv, &nv))
                && reaches(g, c, &in_region, &blocked, w, &in_b)
            {
                next = Some((wv, w));
            }
        }
        let (wv, w) = next.expect("feasible prefix must extend");
        path.push(wv);
        cur = w;
    }
    Ok(Some(PathOrCircuit::path(path)))
}

fn annulus_center(region: &Region) -> Result<(i32, i32)> {
    match region {
        Region::Annulus { cx, cy, .. } => Ok((*cx, *cy)),
        other => Err(SlabError::RegionKind { expected: "annulus", got: other.kind_name() }),
    }
}

/// Winding increment of the step a -> b across the fixed cut ray
/// {(x, cy): x > cx}: +1 for crossing upward, -1 downward, 0 otherwise.
fn cut_delta(a: &Vertex, b: &Vertex, cx: i32, cy: i32) -> i32 {
    if a.x == b.x && a.z == b.z && a.x > cx {
        if a.y == cy && b.y == cy + 1 {
            return 1;
        }
        if a.y == cy + 1 && b.y == cy {
            return -1;
        }
    }
    0
}

/// True iff some open cluster inside the annulus contains a circuit whose
/// plane projection winds around the annulus center.
///
/// Potential method: BFS each cluster assigning an integer potential that
/// increments across the cut ray. A revisited vertex with a mismatched
/// potential exhibits a closed walk with nonzero winding, which always
/// contains a simple cycle of nonzero winding; conversely consistent
/// potentials give a homomorphism to Z killing every winding cycle.
pub fn has_surrounding_circuit(g: &SlabGeometry, c: &BondConfig, region: &Region) -> Result<bool> {
    let (cx, cy) = annulus_center(region)?;
    let n = g.vertex_count();
    let in_region: Vec<bool> = (0..n as u32)
        .map(|id| region.contains(&g.vertex(id), g))
        .collect();
    let mut pot: Vec<Option<i64>> = vec![None; n];
    for root in 0..n as u32 {
        if !in_region[root as usize] || pot[root as usize].is_some() {
            continue;
        }
        pot[root as usize] = Some(0);
        let mut queue = VecDeque::from([root]);
        while let Some(id) = queue.pop_front() {
            let vid = g.vertex(id);
            let base = pot[id as usize].unwrap();
            for &(w, e) in g.adjacent(id) {
                if !c.is_open(e) || !in_region[w as usize] {
                    continue;
                }
                let wv = g.vertex(w);
                let val = base + cut_delta(&vid, &wv, cx, cy) as i64;
                match pot[w as usize] {
                    None => {
                        pot[w as usize] = Some(val);
                        queue.push_back(w);
                    }
                    Some(existing) if existing != val => return Ok(true),
                    Some(_) => {}
                }
            }
        }
    }
    Ok(false)
}

/// Reachability in the 3-sheet cyclic cover of the annulus: can we walk
/// from `from` (at winding residue `from_res`) to `target_v` arriving at a
/// residue in `target_res`, through open edges, avoiding blocked vertices?
/// Used as a sound prune for circuit completion: any completion with total
/// winding ±1 projects to such a cover walk.
fn cover_reaches(
    g: &SlabGeometry,
    c: &BondConfig,
    in_region: &[bool],
    blocked: &[bool],
    cx: i32,
    cy: i32,
    from: VertexId,
    from_res: u8,
    target_v: VertexId,
    target_res: [bool; 3],
) -> bool {
    let n = g.vertex_count();
    let mut seen = vec![false; n * 3];
    let idx = |v: VertexId, r: u8| v as usize * 3 + r as usize;
    if from == target_v {
        if target_res[from_res as usize] {
            return true;
        }
    } else if blocked[from as usize] || !in_region[from as usize] {
        return false;
    }
    seen[idx(from, from_res)] = true;
    let mut queue = VecDeque::from([(from, from_res)]);
    while let Some((id, r)) = queue.pop_front() {
        let vid = g.vertex(id);
        for &(w, e) in g.adjacent(id) {
            let wi = w as usize;
            if !c.is_open(e) || !in_region[wi] {
                continue;
            }
            let wr = ((r as i32 + cut_delta(&vid, &g.vertex(w), cx, cy)).rem_euclid(3)) as u8;
            if w == target_v {
                if target_res[wr as usize] {
                    return true;
                }
                continue;
            }
            if blocked[wi] || seen[idx(w, wr)] {
                continue;
            }
            seen[idx(w, wr)] = true;
            queue.push_back((w, wr));
        }
    }
    false
}

/// The order-minimal canonical open circuit of winding ±1 surrounding the
/// annulus center; None if no surrounding circuit exists.
///
/// Depth-first search over start vertices in increasing vertex order; every
/// later circuit vertex is required to exceed the start, so the start is the
/// circuit minimum and the first completed traversal is the canonical
/// minimum. Closure back to the start is tried before any extension (a
/// circuit key precedes all of its extensions). Prefixes are pruned by
/// exact reachability back to the start in the 3-sheet cyclic cover with
/// the winding residue required for a total of ±1.
pub fn min_surrounding_circuit(
    g: &SlabGeometry,
    c: &BondConfig,
    region: &Region,
) -> Result<Option<PathOrCircuit>> {
    let (cx, cy) = annulus_center(region)?;
    if !has_surrounding_circuit(g, c, region)? {
        return Ok(None);
    }
    let n = g.vertex_count();
    let in_region: Vec<bool> = (0..n as u32)
        .map(|id| region.contains(&g.vertex(id), g))
        .collect();
    // Only clusters that actually contain a winding cycle can host a
    // surrounding circuit; restrict the start sweep accordingly.
    let parts = clusters(g, c, region);
    let winding_comp = winding_components(g, c, region, &parts, cx, cy);
    let mut starts: Vec<VertexId> = (0..n as u32)
        .filter(|&id| {
            in_region[id as usize]
                && parts
                    .component(id)
                    .is_some_and(|cid| winding_comp[cid as usize])
        })
        .collect();
    starts.sort_by(|&a, &b| cmp_vertices(&g.vertex(a), &g.vertex(b)));

    for &s in &starts {
        let mut blocked = vec![false; n];
        let mut path = vec![s];
        if let Some(circ) = circuit_dfs(
            g, c, &in_region, &mut blocked, &mut path, s, 0, cx, cy,
        ) {
            let verts = circ.iter().map(|&id| g.vertex(id)).collect();
            return Ok(Some(PathOrCircuit::circuit(verts)?));
        }
    }
    Ok(None)
}

pub(crate) fn winding_components(
    g: &SlabGeometry,
    c: &BondConfig,
    region: &Region,
    parts: &ClusterPartition,
    cx: i32,
    cy: i32,
) -> Vec<bool> {
    // Re-run the potential construction per component, marking those with
    // a conflict.
    let n = g.vertex_count();
    let mut flag = vec![false; parts.component_count()];
    let mut pot: Vec<Option<i64>> = vec![None; n];
    for root in 0..n as u32 {
        let Some(cid) = parts.component(root) else { continue };
        if pot[root as usize].is_some() || flag[cid as usize] {
            continue;
        }
        pot[root as usize] = Some(0);
        let mut queue = VecDeque::from([root]);
        'bfs: while let Some(id) = queue.pop_front() {
            let vid = g.vertex(id);
            let base = pot[id as usize].unwrap();
            for &(w, e) in g.adjacent(id) {
                if !c.is_open(e) || !region.contains(&g.vertex(w), g) {
                    continue;
                }
                let val = base + cut_delta(&vid, &g.vertex(w), cx, cy) as i64;
                match pot[w as usize] {
                    None => {
                        pot[w as usize] = Some(val);
                        queue.push_back(w);
                    }
                    Some(existing) if existing != val => {
                        flag[cid as usize] = true;
                        break 'bfs;
                    }
                    Some(_) => {}
                }
            }
        }
    }
    flag
}

#[allow(clippy::too_many_arguments)]
fn circuit_dfs(
    g: &SlabGeometry,
    c: &BondConfig,
    in_region: &[bool],
    blocked: &mut Vec<bool>,
    path: &mut Vec<VertexId>,
    start: VertexId,
    winding: i32,
    cx: i32,
    cy: i32,
) -> Option<Vec<VertexId>> {
    let cur = *path.last().unwrap();
    let cur_v = g.vertex(cur);
    let start_v = g.vertex(start);
    // Closure first: a completed key precedes any of its extensions.
    if path.len() >= 3 {
        if let Some(_e) = g
            .adjacent(cur)
            .iter()
            .find(|&&(w, e)| w == start && c.is_open(e))
        {
            let total = winding + cut_delta(&cur_v, &start_v, cx, cy);
            if total.abs() == 1 {
                return Some(path.clone());
            }
        }
    }
    let mut cands: Vec<(Vertex, VertexId, i32)> = g
        .adjacent(cur)
        .iter()
        .filter(|&&(w, e)| {
            c.is_open(e)
                && w != start
                && in_region[w as usize]
                && !blocked[w as usize]
                && vertex_less(&start_v, &g.vertex(w))
        })
        .map(|&(w, _)| {
            let wv = g.vertex(w);
            let d = cut_delta(&cur_v, &wv, cx, cy);
            (wv, w, d)
        })
        .collect();
    cands.sort_by(|a, b| cmp_vertices(&a.0, &b.0));
    blocked[cur as usize] = true;
    for (_, w, d) in cands {
        let wind = winding + d;
        // Residues that finish at total winding +1 or -1.
        let need_pos = ((1 - wind).rem_euclid(3)) as usize;
        let need_neg = ((-1 - wind).rem_euclid(3)) as usize;
        let mut target_res = [false; 3];
        target_res[need_pos] = true;
        target_res[need_neg] = true;
        if !cover_reaches(
            g, c, in_region, blocked, cx, cy, w, 0, start, target_res,
        ) {
            continue;
        }
        path.push(w);
        if let Some(found) =
            circuit_dfs(g, c, in_region, blocked, path, start, wind, cx, cy)
        {
            return Some(found);
        }
        path.pop();
        blocked[w as usize] = false;
    }
    blocked[cur as usize] = false;
    None
}

/// The quadrant slab L = Z+^2 x [k] minus its two corner points
/// (0,0,0) and (0,0,k).
pub fn in_quadrant_l(k: i32, v: &Vertex) -> bool {
    v.x >= 0
        && v.y >= 0
        && v.z >= 0
        && v.z <= k
        && !(v.x == 0 && v.y == 0 && (v.z == 0 || v.z == k))
}

fn slab_neighbors(k: i32, v: &Vertex) -> Vec<Vertex> {
    [
        (1, 0, 0),
        (-1, 0, 0),
        (0, 1, 0),
        (0, -1, 0),
        (0, 0, 1),
        (0, 0, -1),
    ]
    .iter()
    .map(|d| Vertex::new(v.x + d.0, v.y + d.1, v.z + d.2))
    .filter(|w| w.z >= 0 && w.z <= k)
    .collect()
}

/// The domain U = bar(B_s(z)) ∩ L and its vertex boundary relative to L
/// (vertices of U with a neighbor in L outside U). Relative boundary is
/// the operative notion: a path inside the quadrant slab can only enter
/// the ball through such vertices, and sites whose only outside
/// neighbors leave the quadrant admit cornered, unroutable target
/// triples that no path system could ever use.
pub fn quadrant_ball(k: i32, z: &Vertex, s: i32) -> (Vec<Vertex>, Vec<Vertex>) {
    let mut u = Vec::new();
    for y in z.y - s..=z.y + s {
        for x in z.x - s..=z.x + s {
            for zz in 0..=k {
                let v = Vertex::new(x, y, zz);
                if in_quadrant_l(k, &v) {
                    u.push(v);
                }
            }
        }
    }
    let in_u = |v: &Vertex| {
        (v.x - z.x).abs() <= s && (v.y - z.y).abs() <= s && in_quadrant_l(k, v)
    };
    let boundary = u
        .iter()
        .copied()
        .filter(|v| {
            slab_neighbors(k, v)
                .iter()
                .any(|w| !in_u(w) && in_quadrant_l(k, w))
        })
        .collect();
    (u, boundary)
}

struct PinnedSearch {
    adj: Vec<Vec<usize>>,
    verts: Vec<Vertex>,
    flow: std::cell::RefCell<FlowGraph>,
    reach: std::cell::RefCell<ReachScratch>,
}

/// Reusable stamped visit set for the plain reachability BFS.
struct ReachScratch {
    seen: Vec<u32>,
    stamp: u32,
    queue: VecDeque<usize>,
}

/// Unit-capacity split-vertex flow network over the search domain,
/// built once and reset per query by capacity copy. Node 2i is the
/// in-copy of vertex i, 2i+1 the out-copy; the last two nodes are the
/// super source and sink, wired up per query with undoable arcs.
struct FlowGraph {
    n: usize,
    arc_to: Vec<u32>,
    cap: Vec<i32>,
    cap0: Vec<i32>,
    out: Vec<Vec<u32>>,
    vertex_arc: Vec<usize>,
    static_len: usize,
    seen: Vec<u32>,
    prev_arc: Vec<u32>,
    stamp: u32,
    queue: VecDeque<usize>,
}

impl FlowGraph {
    fn new(adj: &[Vec<usize>]) -> FlowGraph {
        let n = adj.len();
        let nn = 2 * n + 2;
        let mut fg = FlowGraph {
            n,
            arc_to: Vec::new(),
            cap: Vec::new(),
            cap0: Vec::new(),
            out: vec![Vec::new(); nn],
            vertex_arc: vec![0; n],
            static_len: 0,
            seen: vec![0; nn],
            prev_arc: vec![0; nn],
            stamp: 0,
            queue: VecDeque::new(),
        };
        for i in 0..n {
            fg.vertex_arc[i] = fg.arc_to.len();
            fg.add_arc(2 * i, 2 * i + 1);
        }
        for (i, nb) in adj.iter().enumerate() {
            for &j in nb {
                fg.add_arc(2 * i + 1, 2 * j);
            }
        }
        fg.static_len = fg.arc_to.len();
        fg.cap0 = fg.cap.clone();
        fg
    }

    fn add_arc(&mut self, a: usize, b: usize) {
        self.out[a].push(self.arc_to.len() as u32);
        self.arc_to.push(b as u32);
        self.cap.push(1);
        self.out[b].push(self.arc_to.len() as u32);
        self.arc_to.push(a as u32);
        self.cap.push(0);
    }

    /// Free-pairing vertex-disjoint flow feasibility for the residual
    /// routing problem: one path continuing from the prefix head `cur`
    /// (already marked used, so it injects at its out-copy) to `goal`,
    /// plus the untouched pairs of `rest`. A necessary condition for
    /// pinned routability, much sharper than per-pair reachability
    /// because it sees vertex contention between the paths.
    fn feasible(&mut self, cur: usize, goal: usize, rest: &[(usize, usize)], used: &[bool]) -> bool {
        let need = 1 + rest.len();
        let (src, snk) = (2 * self.n, 2 * self.n + 1);
        self.cap.truncate(self.static_len);
        self.cap.copy_from_slice(&self.cap0);
        for i in 0..self.n {
            if used[i] {
                self.cap[self.vertex_arc[i]] = 0;
            }
        }
        let mut undo: Vec<usize> = Vec::with_capacity(8);
        let dyn_arc = |fg: &mut FlowGraph, undo: &mut Vec<usize>, a: usize, b: usize| {
            undo.push(a);
            undo.push(b);
            fg.out[a].push(fg.arc_to.len() as u32);
            fg.arc_to.push(b as u32);
            fg.cap.push(1);
            fg.out[b].push(fg.arc_to.len() as u32);
            fg.arc_to.push(a as u32);
            fg.cap.push(0);
        };
        dyn_arc(self, &mut undo, src, 2 * cur + 1);
        dyn_arc(self, &mut undo, 2 * goal + 1, snk);
        for &(a, b) in rest {
            dyn_arc(self, &mut undo, src, 2 * a);
            dyn_arc(self, &mut undo, 2 * b + 1, snk);
        }
        let mut flow = 0usize;
        while flow < need {
            self.stamp += 1;
            self.seen[src] = self.stamp;
            self.queue.clear();
            self.queue.push_back(src);
            let mut found = false;
            'bfs: while let Some(a) = self.queue.pop_front() {
                for &e in &self.out[a] {
                    let b = self.arc_to[e as usize] as usize;
                    if self.seen[b] != self.stamp && self.cap[e as usize] > 0 {
                        self.seen[b] = self.stamp;
                        self.prev_arc[b] = e;
                        if b == snk {
                            found = true;
                            break 'bfs;
                        }
                        self.queue.push_back(b);
                    }
                }
            }
            if !found {
                break;
            }
            let mut b = snk;
            while b != src {
                let e = self.prev_arc[b] as usize;
                self.cap[e] -= 1;
                self.cap[e ^ 1] += 1;
                b = self.arc_to[e ^ 1] as usize;
            }
            flow += 1;
        }
        for &node in &undo {
            self.out[node].pop();
        }
        self.arc_to.truncate(self.static_len);
        self.cap.truncate(self.static_len);
        flow >= need
    }
}

/// Small mixing hash for randomized restart orderings.
fn mix(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

impl PinnedSearch {
    fn new(k: i32, verts: &[Vertex]) -> (PinnedSearch, std::collections::HashMap<Vertex, usize>) {
        let index: std::collections::HashMap<Vertex, usize> =
            verts.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut adj = vec![Vec::new(); verts.len()];
        for (i, v) in verts.iter().enumerate() {
            for w in slab_neighbors(k, v) {
                if let Some(&j) = index.get(&w) {
                    adj[i].push(j);
                }
            }
        }
        let flow = std::cell::RefCell::new(FlowGraph::new(&adj));
        let reach = std::cell::RefCell::new(ReachScratch {
            seen: vec![0; verts.len()],
            stamp: 0,
            queue: VecDeque::new(),
        });
        (PinnedSearch { verts: verts.to_vec(), adj, flow, reach }, index)
    }

    fn reachable(&self, from: usize, to: usize, used: &[bool]) -> bool {
        if used[from] {
            return false;
        }
        if from == to {
            return true;
        }
        let mut s = self.reach.borrow_mut();
        s.stamp += 1;
        let stamp = s.stamp;
        s.seen[from] = stamp;
        s.queue.clear();
        s.queue.push_back(from);
        while let Some(i) = s.queue.pop_front() {
            for &j in &self.adj[i] {
                if s.seen[j] != stamp && !used[j] {
                    if j == to {
                        return true;
                    }
                    s.seen[j] = stamp;
                    s.queue.push_back(j);
                }
            }
        }
        false
    }

    /// Max number of vertex-disjoint paths from `sources` to `sinks`
    /// (pairing free), by unit-capacity flow with vertex splitting.
    /// Only used as a cheap necessary-condition prefilter.
    fn flow_value(&self, sources: &[usize], sinks: &[usize], used: &[bool]) -> usize {
        let mut fg = self.flow.borrow_mut();
        for need in (1..=sources.len().min(sinks.len())).rev() {
            let rest: Vec<(usize, usize)> = sources[1..need]
                .iter()
                .zip(&sinks[1..need])
                .map(|(&a, &b)| (a, b))
                .collect();
            if fg.feasible(sources[0], sinks[0], &rest, used) {
                return need;
            }
        }
        0
    }

    /// Extends a pinned path from `cur` to `goal`, then recurses into the
    /// remaining pinned pairs. `used` marks vertices consumed by earlier
    /// paths and the current prefix (the goal stays unmarked). `nodes`
    /// counts search nodes: past a small threshold the joint-flow prune
    /// kicks in, and past `budget` the search gives up with an error so
    /// the caller can restart with a different exploration order.
    /// `seed` randomizes the neighbor ordering (0 = pure greedy).
    fn route(
        &self,
        used: &mut Vec<bool>,
        cur: usize,
        goal: usize,
        rest: &[(usize, usize)],
        nodes: &mut u64,
        budget: u64,
        seed: u64,
    ) -> Result<bool> {
        *nodes += 1;
        if *nodes > budget {
            return Err(SlabError::NonConvergent(format!(
                "pinned disjoint-path search exceeded {budget} nodes"
            )));
        }
        if cur == goal {
            used[goal] = true;
            let done = match rest.split_first() {
                None => Ok(true),
                Some((&(a, b), tail)) => {
                    if used[a] || (used[b] && a != b) {
                        Ok(false)
                    } else {
                        let mut u2 = used.clone();
                        u2[a] = false;
                        self.route(&mut u2, a, b, tail, nodes, budget, seed)
                    }
                }
            };
            used[goal] = false;
            if done? {
                return Ok(true);
            }
            // A path may pass through its own goal only by ending there;
            // no continuation past the goal is attempted.
            return Ok(false);
        }
        used[cur] = true;
        // Prune: the goal must stay reachable, and every later pair must
        // stay connected in the residual graph; once the search is past
        // trivial size the joint flow bound takes over.
        let feasible = self.reachable_skip(cur, goal, used)
            && rest
                .iter()
                .all(|&(a, b)| a == b && !used[a] || self.reachable(a, b, used))
            && (*nodes < 200 || self.flow.borrow_mut().feasible(cur, goal, rest, used));
        if feasible {
            let mut next: Vec<usize> = self.adj[cur].iter().copied().filter(|&j| !used[j]).collect();
            // Visit neighbors closest to the goal first; restarts add a
            // small random perturbation so they explore differently.
            if seed == 0 {
                next.sort_by_key(|&j| (self.dist_key(j, goal), j));
            } else {
                next.sort_by_key(|&j| {
                    let h = mix(seed ^ (j as u64).wrapping_mul(0x9E3779B97F4A7C15));
                    (self.dist_key(j, goal) * 2 + (h & 3) as i32, h)
                });
            }
            for j in next {
                if self.route(used, j, goal, rest, nodes, budget, seed)? {
                    used[cur] = false;
                    return Ok(true);
                }
            }
        }
        used[cur] = false;
        Ok(false)
    }

    fn reachable_skip(&self, from: usize, to: usize, used: &[bool]) -> bool {
        // `from` is marked used (it is the prefix head); test from its
        // neighbors.
        if from == to {
            return true;
        }
        self.adj[from]
            .iter()
            .any(|&j| !used[j] && self.reachable(j, to, used))
    }

    fn dist_key(&self, j: usize, goal: usize) -> i32 {
        let (a, b) = (&self.verts[j], &self.verts[goal]);
        (a.x - b.x).abs() + (a.y - b.y).abs() + (a.z - b.z).abs()
    }
}

/// Three vertex-disjoint self-avoiding paths u–u', v–v', w–w' inside
/// bar(B_s(z)) ∩ L \ {z}?
///
/// A unit-capacity vertex flow between {u,v,w} and {u',v',w'} gives a fast
/// necessary condition; the pinned pairing is then decided exactly by a
/// sequential search with residual-reachability pruning.
pub fn disjoint_paths_check(
    g: &SlabGeometry,
    s: i32,
    z: &Vertex,
    ends: [Vertex; 3],
    goals: [Vertex; 3],
) -> Result<bool> {
    let k = g.k;
    if s < 1 {
        return Err(SlabError::InvalidParameter(format!("radius s={s} < 1")));
    }
    if !in_quadrant_l(k, z) {
        return Err(SlabError::Precondition(format!("z={z:?} not in the quadrant slab L")));
    }
    let (u_verts, boundary) = quadrant_ball(k, z, s);
    let domain: Vec<Vertex> = u_verts.iter().copied().filter(|v| v != z).collect();
    let in_domain = |v: &Vertex| domain.contains(v);
    for (i, e) in ends.iter().enumerate() {
        let d = (e.x - z.x).abs() + (e.y - z.y).abs() + (e.z - z.z).abs();
        if d != 1 || !in_domain(e) {
            return Err(SlabError::Precondition(format!(
                "endpoint {i} ({e:?}) is not a neighbor of z inside the domain"
            )));
        }
    }
    for (i, t) in goals.iter().enumerate() {
        if t == z || !boundary.contains(t) {
            return Err(SlabError::Precondition(format!(
                "target {i} ({t:?}) is not a boundary vertex of the domain"
            )));
        }
    }
    if ends[0] == ends[1] || ends[0] == ends[2] || ends[1] == ends[2] {
        return Err(SlabError::Precondition("endpoints not distinct".into()));
    }
    if goals[0] == goals[1] || goals[0] == goals[2] || goals[1] == goals[2] {
        return Err(SlabError::Precondition("targets not distinct".into()));
    }

    let (search, index) = PinnedSearch::new(k, &domain);
    let e: Vec<usize> = ends.iter().map(|v| index[v]).collect();
    let t: Vec<usize> = goals.iter().map(|v| index[v]).collect();
    // Necessary condition: three disjoint paths with free pairing.
    let used = vec![false; domain.len()];
    if search.flow_value(&e, &t, &used) < 3 {
        return Ok(false);
    }
    let base = [(e[0], t[0]), (e[1], t[1]), (e[2], t[2])];
    // Route the shortest pairs first by default: they have few routings,
    // so the long pair wanders in an already-constrained graph and dead
    // ends backtrack over few alternatives. Some instances resist any
    // single ordering, so a restart ladder tries every pair order with
    // jittered tie-breaking and escalating node budgets; any attempt
    // that finishes inside its budget is exact and settles the answer.
    let mut idx = [0usize, 1, 2];
    idx.sort_by_key(|&i| search.dist_key(base[i].0, base[i].1));
    let perms = [[0usize, 1, 2], [0, 2, 1], [1, 0, 2], [2, 1, 0], [1, 2, 0], [2, 0, 1]];
    for attempt in 0..24u64 {
        let perm = perms[attempt as usize % perms.len()];
        let pairs = [base[idx[perm[0]]], base[idx[perm[1]]], base[idx[perm[2]]]];
        let mut used = vec![false; domain.len()];
        let mut nodes = 0u64;
        let seed = if attempt == 0 { 0 } else { 0x5851F42D4C957F2D ^ attempt };
        let budget = 4_000u64 << (3 * (attempt / 6));
        if let Ok(found) =
            search.route(&mut used, pairs[0].0, pairs[0].1, &pairs[1..], &mut nodes, budget, seed)
        {
            return Ok(found);
        }
    }
    let pairs = [base[idx[0]], base[idx[1]], base[idx[2]]];
    let mut used = vec![false; domain.len()];
    let mut nodes = 0u64;
    search.route(&mut used, pairs[0].0, pairs[0].1, &pairs[1..], &mut nodes, 20_000_000, 0)
}
