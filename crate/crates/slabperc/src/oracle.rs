//! Independent brute-force reference implementations used to validate the
//! fast algorithms on small instances: exhaustive configuration
//! enumeration, self-avoiding-path enumeration, cycle-space winding via
//! angle sums, and the minimal-spanning-tree edge criterion.

use std::collections::VecDeque;

use crate::geometry::{cmp_paths, PathOrCircuit, Region, SlabGeometry, Vertex, VertexId};
use crate::labels::{BondConfig, LabelField};

/// Exact probability of a predicate over configurations on `support`,
/// all other edges held closed, by full 2^|support| enumeration.
pub fn exact_probability(
    support: &[u32],
    p: f64,
    total_edges: usize,
    event: &dyn Fn(&BondConfig) -> bool,
) -> f64 {
    assert!(support.len() <= 24, "support too large for enumeration");
    let mut sum = 0.0;
    for mask in 0u64..(1u64 << support.len()) {
        let mut c = BondConfig::all_closed(total_edges);
        let mut prob = 1.0;
        for (i, &e) in support.iter().enumerate() {
            if mask >> i & 1 == 1 {
                c.set_open(e, true);
                prob *= p;
            } else {
                prob *= 1.0 - p;
            }
        }
        if event(&c) {
            sum += prob;
        }
    }
    sum
}

/// All open self-avoiding paths from A to B inside a region, minimal one
/// under the path order; exhaustive depth-first enumeration.
pub fn min_path_brute(
    g: &SlabGeometry,
    c: &BondConfig,
    region: &Region,
    a: &[Vertex],
    b: &[Vertex],
) -> Option<PathOrCircuit> {
    let n = g.vertex_count();
    let in_region: Vec<bool> = (0..n as u32)
        .map(|id| region.contains(&g.vertex(id), g))
        .collect();
    let mut in_b = vec![false; n];
    for v in b {
        if region.contains(v, g) {
            if let Ok(id) = g.vertex_id(v) {
                in_b[id as usize] = true;
            }
        }
    }
    let mut best: Option<PathOrCircuit> = None;
    let mut starts: Vec<VertexId> = a
        .iter()
        .filter(|v| region.contains(v, g))
        .filter_map(|v| g.vertex_id(v).ok())
        .collect();
    starts.sort_unstable();
    starts.dedup();
    for s in starts {
        let mut used = vec![false; n];
        let mut path = vec![s];
        used[s as usize] = true;
        enumerate_paths(g, c, &in_region, &in_b, &mut used, &mut path, &mut best);
    }
    best
}

fn enumerate_paths(
    g: &SlabGeometry,
    c: &BondConfig,
    in_region: &[bool],
    in_b: &[bool],
    used: &mut Vec<bool>,
    path: &mut Vec<VertexId>,
    best: &mut Option<PathOrCircuit>,
) {
    let cur = *path.last().unwrap();
    if in_b[cur as usize] {
        let cand = PathOrCircuit::path(path.iter().map(|&id| g.vertex(id)).collect());
        let better = match best {
            None => true,
            Some(b) => cmp_paths(&cand, b).unwrap() == std::cmp::Ordering::Less,
        };
        if better {
            *best = Some(cand);
        }
        // A path visiting B keeps going only in longer paths that are
        // order-larger than this prefix; no need to extend.
        return;
    }
    for &(w, e) in g.adjacent(cur) {
        if c.is_open(e) && in_region[w as usize] && !used[w as usize] {
            used[w as usize] = true;
            path.push(w);
            enumerate_paths(g, c, in_region, in_b, used, path, best);
            path.pop();
            used[w as usize] = false;
        }
    }
}

fn annulus_center(region: &Region) -> (f64, f64) {
    match region {
        Region::Annulus { cx, cy, .. } => (*cx as f64 + 0.5, *cy as f64 + 0.5),
        _ => panic!("winding oracle needs an annulus"),
    }
}

/// Winding number of a closed lattice walk (first vertex repeated at the
/// end is optional) about the point `(cx, cy)`, by angle summation of the
/// plane projection.
pub fn walk_winding(verts: &[Vertex], cx: f64, cy: f64) -> i64 {
    let mut total = 0.0f64;
    let m = verts.len();
    for i in 0..m {
        let a = &verts[i];
        let b = &verts[(i + 1) % m];
        if a == b {
            continue;
        }
        let a1 = (a.y as f64 - cy).atan2(a.x as f64 - cx);
        let a2 = (b.y as f64 - cy).atan2(b.x as f64 - cx);
        let mut d = a2 - a1;
        while d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
        }
        while d < -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
        }
        total += d;
    }
    (total / (2.0 * std::f64::consts::PI)).round() as i64
}

/// Cycle-space winding oracle: the open subgraph of the annulus contains a
/// cycle of nonzero winding iff some fundamental cycle of a spanning
/// forest has nonzero winding (winding is a homomorphism on the cycle
/// space, and a nonzero-winding cycle-space element contains a simple
/// cycle of nonzero winding).
pub fn has_winding_cycle_oracle(g: &SlabGeometry, c: &BondConfig, region: &Region) -> bool {
    let (cx, cy) = annulus_center(region);
    let n = g.vertex_count();
    let in_region: Vec<bool> = (0..n as u32)
        .map(|id| region.contains(&g.vertex(id), g))
        .collect();
    // BFS spanning forest: parent edges.
    let mut parent: Vec<Option<VertexId>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut tree_edge = vec![false; g.edge_count()];
    for root in 0..n as u32 {
        if !in_region[root as usize] || visited[root as usize] {
            continue;
        }
        visited[root as usize] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(id) = queue.pop_front() {
            for &(w, e) in g.adjacent(id) {
                if c.is_open(e) && in_region[w as usize] && !visited[w as usize] {
                    visited[w as usize] = true;
                    parent[w as usize] = Some(id);
                    tree_edge[e as usize] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    let tree_path_to_root = |mut v: VertexId| -> Vec<VertexId> {
        let mut out = vec![v];
        while let Some(p) = parent[v as usize] {
            out.push(p);
            v = p;
        }
        out
    };
    for e in 0..g.edge_count() as u32 {
        if !c.is_open(e) || tree_edge[e as usize] {
            continue;
        }
        let [a, b] = g.endpoint_ids(e);
        if !in_region[a as usize] || !in_region[b as usize] || !visited[a as usize] {
            continue;
        }
        // Fundamental cycle: a -> root path, reversed b -> root path, plus
        // the chord. Walk a..lca..b then back over the chord.
        let pa = tree_path_to_root(a);
        let pb = tree_path_to_root(b);
        let mut ia = pa.len();
        let mut ib = pb.len();
        while ia > 0 && ib > 0 && pa[ia - 1] == pb[ib - 1] {
            ia -= 1;
            ib -= 1;
        }
        // pa[..=ia] ends at lca (pa[ia]), pb[..ib] reversed climbs back.
        let mut walk: Vec<Vertex> = pa[..=ia.min(pa.len() - 1)]
            .iter()
            .map(|&v| g.vertex(v))
            .collect();
        for &v in pb[..ib].iter().rev() {
            walk.push(g.vertex(v));
        }
        if walk_winding(&walk, cx, cy) != 0 {
            return true;
        }
    }
    false
}

/// Enumerates every simple cycle of the open annulus subgraph (smallest
/// vertex id pinned first to avoid duplicates), keeping the order-minimal
/// canonical circuit of winding ±1. Panics past `cap` enumerated cycles:
/// the oracle is only meant for small, sparse instances.
pub fn min_circuit_brute(
    g: &SlabGeometry,
    c: &BondConfig,
    region: &Region,
    cap: usize,
) -> Option<PathOrCircuit> {
    let (cx, cy) = annulus_center(region);
    let n = g.vertex_count();
    let in_region: Vec<bool> = (0..n as u32)
        .map(|id| region.contains(&g.vertex(id), g))
        .collect();
    let mut best: Option<PathOrCircuit> = None;
    let mut count = 0usize;
    for root in 0..n as u32 {
        if !in_region[root as usize] {
            continue;
        }
        let mut used = vec![false; n];
        used[root as usize] = true;
        let mut path = vec![root];
        cycle_dfs(
            g, c, &in_region, root, &mut used, &mut path, &mut best, &mut count, cap, cx, cy,
        );
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn cycle_dfs(
    g: &SlabGeometry,
    c: &BondConfig,
    in_region: &[bool],
    root: VertexId,
    used: &mut Vec<bool>,
    path: &mut Vec<VertexId>,
    best: &mut Option<PathOrCircuit>,
    count: &mut usize,
    cap: usize,
    cx: f64,
    cy: f64,
) {
    let cur = *path.last().unwrap();
    for &(w, e) in g.adjacent(cur) {
        if !c.is_open(e) || !in_region[w as usize] {
            continue;
        }
        if w == root && path.len() >= 3 {
            // Count each undirected cycle once: fix the orientation by the
            // ids of the root's two neighbors on the cycle.
            if path[1] < cur {
                *count += 1;
                assert!(*count <= cap, "cycle enumeration exceeded cap {cap}");
                let verts: Vec<Vertex> = path.iter().map(|&v| g.vertex(v)).collect();
                if walk_winding(&verts, cx, cy).abs() == 1 {
                    let cand = PathOrCircuit::circuit(verts).unwrap();
                    let better = match best {
                        None => true,
                        Some(b) => cmp_paths(&cand, b).unwrap() == std::cmp::Ordering::Less,
                    };
                    if better {
                        *best = Some(cand);
                    }
                }
            }
            continue;
        }
        // Pin the root as the smallest id on the cycle.
        if w < root || used[w as usize] {
            continue;
        }
        used[w as usize] = true;
        path.push(w);
        cycle_dfs(g, c, in_region, root, used, path, best, count, cap, cx, cy);
        path.pop();
        used[w as usize] = false;
    }
}

/// Edge-criterion minimal spanning forest: an edge belongs iff its
/// endpoints cannot be joined by a path of strictly smaller edges.
/// Strictness is under the (label, edge id) tie rule.
pub fn criterion_msf(g: &SlabGeometry, f: &LabelField) -> Vec<u32> {
    let mut out = Vec::new();
    for e in 0..g.edge_count() as u32 {
        let key = f.edge_key(e);
        let [a, b] = g.endpoint_ids(e);
        // BFS from a to b through edges strictly below `key`.
        let mut seen = vec![false; g.vertex_count()];
        seen[a as usize] = true;
        let mut queue = VecDeque::from([a]);
        let mut joined = false;
        'bfs: while let Some(id) = queue.pop_front() {
            for &(w, e2) in g.adjacent(id) {
                if e2 != e && f.edge_key(e2) < key && !seen[w as usize] {
                    if w == b {
                        joined = true;
                        break 'bfs;
                    }
                    seen[w as usize] = true;
                    queue.push_back(w);
                }
            }
        }
        if !joined {
            out.push(e);
        }
    }
    out
}

/// Vertices reachable from `start` using only edges with label strictly
/// below `limit`.
pub fn reachable_below(g: &SlabGeometry, f: &LabelField, start: VertexId, limit: f64) -> Vec<bool> {
    let mut seen = vec![false; g.vertex_count()];
    seen[start as usize] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(id) = queue.pop_front() {
        for &(w, e) in g.adjacent(id) {
            if f.get(e) < limit && !seen[w as usize] {
                seen[w as usize] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryParams;

    #[test]
    fn winding_of_explicit_walks() {
        let square = vec![
            Vertex::new(-1, -1, 0),
            Vertex::new(2, -1, 0),
            Vertex::new(2, 2, 0),
            Vertex::new(-1, 2, 0),
        ];
        assert_eq!(walk_winding(&square, 0.5, 0.5), 1);
        let mut rev = square.clone();
        rev.reverse();
        assert_eq!(walk_winding(&rev, 0.5, 0.5), -1);
        // A walk not containing the center.
        let off = vec![
            Vertex::new(3, 3, 0),
            Vertex::new(4, 3, 0),
            Vertex::new(4, 4, 0),
            Vertex::new(3, 4, 0),
        ];
        assert_eq!(walk_winding(&off, 0.5, 0.5), 0);
    }

    #[test]
    fn exact_probability_single_edge() {
        let g = SlabGeometry::new(GeometryParams { k: 0, window: [0, 1, 0, 0] }).unwrap();
        assert_eq!(g.edge_count(), 1);
        let p = exact_probability(&[0], 0.3, 1, &|c| c.is_open(0));
        assert!((p - 0.3).abs() < 1e-12);
    }
}
