//! Invasion percolation with stopping rules, Kruskal spanning trees, and
//! free/wired window spanning forests.

use std::collections::BinaryHeap;
use std::io::Write;

use crate::connectivity::UnionFind;
use crate::error::{Result, SlabError};
use crate::geometry::{EdgeId, Region, SlabGeometry, Vertex, VertexId};
use crate::labels::LabelField;

/// When to stop an invasion.
#[derive(Clone, Copy, Debug)]
pub enum StopRule {
    /// Run until the frontier is empty (whole window invaded).
    Exhaust,
    /// Stop when the invasion first adds a vertex at plane sup-norm
    /// distance >= n from the given center.
    HitBoundary { cx: i32, cy: i32, n: i32 },
    /// Stop after this many invaded edges.
    StepBudget(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Exhausted,
    HitBoundary,
    BudgetSpent,
}

#[derive(Clone, Debug)]
pub struct InvasionStep {
    pub step: usize,
    pub edge: EdgeId,
    pub label: f64,
    /// The vertex this step added, when the edge grew the invaded set;
    /// None for a cycle-closing edge between already-invaded vertices.
    pub new_vertex: Option<VertexId>,
    /// True when the label set a new running maximum.
    pub record: bool,
}

#[derive(Clone, Debug)]
pub struct InvasionState {
    pub start: Vertex,
    pub invaded: Vec<bool>,
    /// Step at which each vertex was added; usize::MAX if never.
    pub added_at: Vec<usize>,
    /// Every invaded edge (the invasion cluster).
    pub cluster_edges: Vec<EdgeId>,
    /// Edges whose invasion added a new vertex (the invasion tree).
    pub tree_edges: Vec<EdgeId>,
    pub log: Vec<InvasionStep>,
    pub stop: StopReason,
}

impl InvasionState {
    pub fn invaded_vertex_count(&self) -> usize {
        self.invaded.iter().filter(|&&b| b).count()
    }

    /// The strictly increasing subsequence of new-maximum labels with
    /// their steps.
    pub fn record_values(&self) -> Vec<(usize, f64)> {
        self.log
            .iter()
            .filter(|s| s.record)
            .map(|s| (s.step, s.label))
            .collect()
    }

    /// CSV export: step, endpoints, label, tree flag, record flag.
    pub fn write_csv<W: Write>(&self, g: &SlabGeometry, w: &mut W) -> Result<()> {
        writeln!(w, "step,ax,ay,az,bx,by,bz,label,is_tree_edge,record_flag")?;
        for s in &self.log {
            let [a, b] = g.endpoints(s.edge);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                s.step,
                a.x,
                a.y,
                a.z,
                b.x,
                b.y,
                b.z,
                s.label,
                s.new_vertex.is_some() as u8,
                s.record as u8
            )?;
        }
        Ok(())
    }
}

/// Runs invasion percolation from `start` under the labeling: at each step
/// the lowest-labeled frontier edge (ties by edge id) is invaded, together
/// with its new vertex if any.
pub fn invade(
    g: &SlabGeometry,
    f: &LabelField,
    start: &Vertex,
    rule: StopRule,
) -> Result<InvasionState> {
    let start_id = g.vertex_id(start)?;
    let n = g.vertex_count();
    let mut invaded = vec![false; n];
    let mut added_at = vec![usize::MAX; n];
    let mut in_heap = vec![false; g.edge_count()];
    // Min-heap on (label bits, edge id): labels are in [0,1), so the IEEE
    // bit pattern preserves order.
    let mut heap: BinaryHeap<std::cmp::Reverse<(u64, EdgeId)>> = BinaryHeap::new();
    let mut state = InvasionState {
        start: *start,
        invaded: Vec::new(),
        added_at: Vec::new(),
        cluster_edges: Vec::new(),
        tree_edges: Vec::new(),
        log: Vec::new(),
        stop: StopReason::Exhausted,
    };
    let mut record = f64::NEG_INFINITY;

    let absorb = |v: VertexId,
                      step: usize,
                      invaded: &mut Vec<bool>,
                      added_at: &mut Vec<usize>,
                      heap: &mut BinaryHeap<std::cmp::Reverse<(u64, EdgeId)>>,
                      in_heap: &mut Vec<bool>| {
        invaded[v as usize] = true;
        added_at[v as usize] = step;
        for &(_, e) in g.adjacent(v) {
            if !in_heap[e as usize] {
                in_heap[e as usize] = true;
                heap.push(std::cmp::Reverse((f.get(e).to_bits(), e)));
            }
        }
    };
    absorb(start_id, 0, &mut invaded, &mut added_at, &mut heap, &mut in_heap);

    let mut step = 0usize;
    while let Some(std::cmp::Reverse((bits, e))) = heap.pop() {
        let label = f64::from_bits(bits);
        let [a, b] = g.endpoint_ids(e);
        let new_vertex = match (invaded[a as usize], invaded[b as usize]) {
            (true, false) => Some(b),
            (false, true) => Some(a),
            (true, true) => None,
            (false, false) => unreachable!("heap holds only frontier edges"),
        };
        step += 1;
        let is_record = label > record;
        if is_record {
            record = label;
        }
        state.cluster_edges.push(e);
        if let Some(v) = new_vertex {
            state.tree_edges.push(e);
            absorb(v, step, &mut invaded, &mut added_at, &mut heap, &mut in_heap);
        }
        state.log.push(InvasionStep { step, edge: e, label, new_vertex, record: is_record });
        match rule {
            StopRule::Exhaust => {}
            StopRule::HitBoundary { cx, cy, n } => {
                if let Some(v) = new_vertex {
                    let vv = g.vertex(v);
                    if (vv.x - cx).abs().max((vv.y - cy).abs()) >= n {
                        state.stop = StopReason::HitBoundary;
                        break;
                    }
                }
            }
            StopRule::StepBudget(budget) => {
                if step >= budget {
                    state.stop = StopReason::BudgetSpent;
                    break;
                }
            }
        }
    }
    state.invaded = invaded;
    state.added_at = added_at;
    Ok(state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForestFlavor {
    Mst,
    FreeWindow,
    WiredWindow,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForestEdgeSet {
    pub flavor: ForestFlavor,
    /// Sorted real edge ids of the geometry.
    pub edges: Vec<EdgeId>,
}

impl ForestEdgeSet {
    pub fn write_json<W: Write>(&self, g: &SlabGeometry, w: &mut W) -> Result<()> {
        let list: Vec<[[i32; 3]; 2]> = self
            .edges
            .iter()
            .map(|&e| {
                let [a, b] = g.endpoints(e);
                [[a.x, a.y, a.z], [b.x, b.y, b.z]]
            })
            .collect();
        serde_json::to_writer(w, &list)?;
        Ok(())
    }
}

fn sorted_edge_ids(g: &SlabGeometry, f: &LabelField) -> Vec<EdgeId> {
    let mut ids: Vec<EdgeId> = (0..g.edge_count() as EdgeId).collect();
    ids.sort_by(|&a, &b| f.edge_key(a).partial_cmp(&f.edge_key(b)).unwrap());
    ids
}

/// Kruskal's algorithm over the whole window; under injective labels the
/// result is the unique minimal spanning tree (forest per component when
/// the window is disconnected).
pub fn kruskal_mst(g: &SlabGeometry, f: &LabelField) -> ForestEdgeSet {
    let mut uf = UnionFind::new(g.vertex_count());
    let mut edges = Vec::new();
    for e in sorted_edge_ids(g, f) {
        let [a, b] = g.endpoint_ids(e);
        if uf.union(a, b) {
            edges.push(e);
        }
    }
    edges.sort_unstable();
    ForestEdgeSet { flavor: ForestFlavor::Mst, edges }
}

/// Minimal spanning tree of an inner window with free or wired boundary
/// conditions. Free: MST of the induced subgraph. Wired: all vertices
/// outside the window are identified into one super-vertex before running
/// Kruskal; only real (inner or boundary-incident) edges are reported.
pub fn msf_window(
    g: &SlabGeometry,
    f: &LabelField,
    window: &Region,
    flavor: ForestFlavor,
) -> Result<ForestEdgeSet> {
    let n = g.vertex_count();
    let inside: Vec<bool> = (0..n as u32)
        .map(|id| window.contains(&g.vertex(id), g))
        .collect();
    if !inside.iter().any(|&b| b) {
        return Err(SlabError::InvalidParameter("window contains no vertices".into()));
    }
    match flavor {
        ForestFlavor::Mst => Ok(kruskal_mst(g, f)),
        ForestFlavor::FreeWindow => {
            let mut uf = UnionFind::new(n);
            let mut edges = Vec::new();
            for e in sorted_edge_ids(g, f) {
                let [a, b] = g.endpoint_ids(e);
                if inside[a as usize] && inside[b as usize] && uf.union(a, b) {
                    edges.push(e);
                }
            }
            edges.sort_unstable();
            Ok(ForestEdgeSet { flavor, edges })
        }
        ForestFlavor::WiredWindow => {
            // Super-vertex index n stands for the identified complement.
            let mut uf = UnionFind::new(n + 1);
            let mut edges = Vec::new();
            for e in sorted_edge_ids(g, f) {
                let [a, b] = g.endpoint_ids(e);
                let (ia, ib) = (inside[a as usize], inside[b as usize]);
                let (ma, mb) = (
                    if ia { a } else { n as u32 },
                    if ib { b } else { n as u32 },
                );
                if ma == mb {
                    continue; // self-loop at the super-vertex
                }
                if uf.union(ma, mb) && (ia || ib) {
                    edges.push(e);
                }
            }
            edges.sort_unstable();
            Ok(ForestEdgeSet { flavor, edges })
        }
    }
}

/// Runs both stopped invasions and reports whether their vertex sets
/// intersect, with the earliest common vertex by the first invasion's
/// clock.
pub fn intersect_invasions(
    g: &SlabGeometry,
    f: &LabelField,
    a: &Vertex,
    b: &Vertex,
    n: i32,
) -> Result<(bool, Option<Vertex>)> {
    let rule = StopRule::HitBoundary { cx: 0, cy: 0, n };
    let ia = invade(g, f, a, rule)?;
    let ib = invade(g, f, b, rule)?;
    let mut first: Option<(usize, VertexId)> = None;
    for id in 0..g.vertex_count() as u32 {
        if ia.invaded[id as usize] && ib.invaded[id as usize] {
            let t = ia.added_at[id as usize];
            if first.is_none_or(|(bt, _)| t < bt) {
                first = Some((t, id));
            }
        }
    }
    Ok((first.is_some(), first.map(|(_, id)| g.vertex(id))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryParams;
    use crate::oracle;

    fn geom(k: i32, window: [i32; 4]) -> SlabGeometry {
        SlabGeometry::new(GeometryParams { k, window }).unwrap()
    }

    /// 3x3x2 window used throughout the forest tests.
    fn small() -> SlabGeometry {
        geom(1, [0, 2, 0, 2])
    }

    #[test]
    fn invade_exhaust_covers_window() {
        let g = small();
        let f = LabelField::sample(&g, 42, 0);
        let st = invade(&g, &f, &Vertex::new(1, 1, 0), StopRule::Exhaust).unwrap();
        assert_eq!(st.invaded_vertex_count(), g.vertex_count());
        assert_eq!(st.stop, StopReason::Exhausted);
        assert_eq!(st.tree_edges.len(), g.vertex_count() - 1);
        // First invaded edge is the minimum-label edge incident to start.
        let sid = g.vertex_id(&Vertex::new(1, 1, 0)).unwrap();
        let min_e = g
            .adjacent(sid)
            .iter()
            .map(|&(_, e)| e)
            .min_by(|&a, &b| f.edge_key(a).partial_cmp(&f.edge_key(b)).unwrap())
            .unwrap();
        assert_eq!(st.log[0].edge, min_e);
    }

    #[test]
    fn invasion_tree_equals_kruskal_everywhere() {
        let g = small();
        for seed in 0..10 {
            let f = LabelField::sample(&g, 1000 + seed, 0);
            let mst = kruskal_mst(&g, &f);
            for v in 0..g.vertex_count() as u32 {
                let st = invade(&g, &f, &g.vertex(v), StopRule::Exhaust).unwrap();
                let mut tree = st.tree_edges.clone();
                tree.sort_unstable();
                assert_eq!(tree, mst.edges, "start {v} seed {seed}");
            }
        }
    }

    #[test]
    fn kruskal_equals_edge_criterion() {
        let g = small();
        for seed in 0..20 {
            let f = LabelField::sample(&g, 7_000 + seed, 3);
            assert_eq!(kruskal_mst(&g, &f).edges, oracle::criterion_msf(&g, &f));
        }
    }

    #[test]
    fn kruskal_path_and_cycle_examples() {
        // Path graph: 1x4 line, k=0 -> all edges kept.
        let g = geom(0, [0, 3, 0, 0]);
        let f = LabelField::sample(&g, 9, 9);
        assert_eq!(kruskal_mst(&g, &f).edges.len(), g.edge_count());

        // A 4-cycle drops exactly its maximal edge.
        let g = geom(0, [0, 1, 0, 1]);
        assert_eq!(g.edge_count(), 4);
        let mut labels = vec![0.0; 4];
        let want_drop = (0..4u32)
            .map(|e| {
                // Labels 0.1, 0.2, 0.3, 0.9 in edge id order.
                let l = [0.1, 0.2, 0.3, 0.9][e as usize];
                labels[e as usize] = l;
                (l, e)
            })
            .max_by(|a, b| a.partial_cmp(b).unwrap())
            .unwrap()
            .1;
        let f = LabelField::from_labels(labels);
        let mst = kruskal_mst(&g, &f);
        assert_eq!(mst.edges.len(), 3);
        assert!(!mst.edges.contains(&want_drop));
    }

    #[test]
    fn record_values_properties() {
        let g = small();
        let f = LabelField::sample(&g, 5, 1);
        let st = invade(&g, &f, &Vertex::new(0, 0, 0), StopRule::Exhaust).unwrap();
        let recs = st.record_values();
        // Strictly increasing.
        for w in recs.windows(2) {
            assert!(w[0].1 < w[1].1);
        }
        // Between consecutive records every invaded label is below the
        // standing record.
        let mut standing = f64::NEG_INFINITY;
        for s in &st.log {
            if s.record {
                standing = s.label;
            } else {
                assert!(s.label < standing);
            }
        }
        // At any record with value l, the invaded set so far equals the
        // vertices reachable from the start below l, plus the record
        // vertex itself (reachability oracle).
        let start_id = g.vertex_id(&st.start).unwrap();
        for &(step, l) in &recs {
            let reach = oracle::reachable_below(&g, &f, start_id, l);
            for v in 0..g.vertex_count() {
                let invaded_by_then =
                    st.added_at[v] != usize::MAX && st.added_at[v] < step;
                assert_eq!(invaded_by_then, reach[v], "vertex {v} at record step {step}");
            }
        }
    }

    #[test]
    fn record_path_graph_all_records() {
        // Monotone labels along a path: every vertex-adding step is a record.
        let g = geom(0, [0, 4, 0, 0]);
        let f = LabelField::from_labels(vec![0.1, 0.2, 0.3, 0.4]);
        let st = invade(&g, &f, &Vertex::new(0, 0, 0), StopRule::Exhaust).unwrap();
        assert!(st.log.iter().all(|s| s.record));
    }

    #[test]
    fn stopped_invasions_nested_in_n() {
        let g = geom(1, [-12, 12, -12, 12]);
        let f = LabelField::sample(&g, 77, 2);
        let mut prev: Option<Vec<bool>> = None;
        for n in [3, 6, 9, 12] {
            let st = invade(
                &g,
                &f,
                &Vertex::new(0, 0, 0),
                StopRule::HitBoundary { cx: 0, cy: 0, n },
            )
            .unwrap();
            if let Some(p) = &prev {
                for v in 0..g.vertex_count() {
                    assert!(!p[v] || st.invaded[v], "nesting violated at n={n}");
                }
            }
            prev = Some(st.invaded.clone());
        }
    }

    #[test]
    fn msf_window_flavors() {
        let g = geom(1, [-4, 4, -4, 4]);
        let f = LabelField::sample(&g, 13, 4);

        // Whole-geometry window: free = wired = MST.
        let whole = Region::rect(-4, 4, -4, 4);
        let free = msf_window(&g, &f, &whole, ForestFlavor::FreeWindow).unwrap();
        let wired = msf_window(&g, &f, &whole, ForestFlavor::WiredWindow).unwrap();
        let mst = kruskal_mst(&g, &f);
        assert_eq!(free.edges, mst.edges);
        assert_eq!(wired.edges, mst.edges);

        // Strict window: wired tree has |V(window)| edges (super-vertex
        // adds one vertex to the tree).
        let inner = Region::rect(-2, 2, -2, 2);
        let nv = inner.vertices(&g).len();
        let wired = msf_window(&g, &f, &inner, ForestFlavor::WiredWindow).unwrap();
        assert_eq!(wired.edges.len(), nv);
        let free = msf_window(&g, &f, &inner, ForestFlavor::FreeWindow).unwrap();
        assert_eq!(free.edges.len(), nv - 1);

        // Wired ⊆ free for edges well inside the window.
        for &e in &wired.edges {
            let [a, b] = g.endpoints(e);
            let deep = |v: &Vertex| v.x.abs() <= 0 && v.y.abs() <= 0;
            if deep(&a) && deep(&b) {
                assert!(free.edges.contains(&e));
            }
        }
    }

    #[test]
    fn free_tree_stabilization_probe() {
        // An edge at the center that lies in the free trees of nested
        // windows n=2,3,4 also lies in the n=5 free tree.
        let g = geom(1, [-6, 6, -6, 6]);
        let f = LabelField::sample(&g, 21, 0);
        let tree_for = |n: i32| {
            msf_window(&g, &f, &Region::rect(-n, n, -n, n), ForestFlavor::FreeWindow)
                .unwrap()
                .edges
        };
        let t2 = tree_for(2);
        let t3 = tree_for(3);
        let t4 = tree_for(4);
        let t5 = tree_for(5);
        let mut probed = 0;
        for e in 0..g.edge_count() as u32 {
            let [a, b] = g.endpoints(e);
            let central = a.x.abs().max(a.y.abs()) <= 1 && b.x.abs().max(b.y.abs()) <= 1;
            if central && t2.contains(&e) && t3.contains(&e) && t4.contains(&e) {
                assert!(t5.contains(&e), "central edge {e} destabilized");
                probed += 1;
            }
        }
        assert!(probed > 0);
    }

    #[test]
    fn intersect_examples() {
        let g = geom(1, [-16, 16, -16, 16]);
        let f = LabelField::sample(&g, 3, 3);
        let o = Vertex::new(0, 0, 0);
        let (hit, common) = intersect_invasions(&g, &f, &o, &o, 8).unwrap();
        assert!(hit);
        assert_eq!(common, Some(o));

        // Once intersecting at N, still intersecting at N' > N.
        let x = Vertex::new(2, 0, 0);
        let mut seen_true = false;
        for n in [4, 8, 12, 16] {
            let (hit, _) = intersect_invasions(&g, &f, &o, &x, n).unwrap();
            if seen_true {
                assert!(hit, "intersection lost when growing N to {n}");
            }
            seen_true |= hit;
        }
    }

    #[test]
    fn csv_export_shape() {
        let g = small();
        let f = LabelField::sample(&g, 8, 8);
        let st = invade(&g, &f, &Vertex::new(0, 0, 0), StopRule::StepBudget(5)).unwrap();
        assert_eq!(st.stop, StopReason::BudgetSpent);
        let mut buf = Vec::new();
        st.write_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6); // header + 5 steps
    }
}
