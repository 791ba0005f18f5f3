//! Vertex-disjoint path systems between vertex sets and exact vertex
//! connectivity, via unit-vertex-capacity maximum flow.
//!
//! Every vertex `v` of the host is split into `v_in -> v_out` with capacity
//! one; original arcs get effectively infinite capacity, so any finite cut
//! consists of split arcs only and reads off directly as a vertex separator.
//! Augmentation is breadth-first with ascending-id tie-breaking, which makes
//! both the path systems and the separators canonical.

use crate::digraph::{Digraph, GraphError, Path};
use crate::vset::VSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConnectivityError {
    #[error("X, Y and forbidden sets must be pairwise disjoint")]
    OverlappingSets,
    #[error("vertex {0} out of range")]
    OutOfRange(usize),
    #[error("vertex connectivity needs at least 2 vertices")]
    TooSmall,
}

/// How the paths of a system are required to relate to one another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disjointness {
    /// Pairwise vertex-disjoint, endpoints included.
    Full,
    /// Disjoint except that paths may share endpoints.
    Internal,
}

/// An ordered collection of paths in a host digraph, pairwise disjoint in the
/// mode recorded on the value.
#[derive(Debug, Clone)]
pub struct PathSystem {
    pub paths: Vec<Path>,
    pub mode: Disjointness,
}

impl PathSystem {
    pub fn new(paths: Vec<Path>) -> Self {
        PathSystem {
            paths,
            mode: Disjointness::Full,
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn vertex_set(&self, n: usize) -> VSet {
        let mut s = VSet::new(n);
        for p in &self.paths {
            for &v in p.vertices() {
                s.insert(v);
            }
        }
        s
    }

    /// Re-validate every path and the recorded disjointness mode.
    pub fn validate(&self, host: &Digraph) -> Result<(), GraphError> {
        for p in &self.paths {
            p.validate(host)?;
        }
        let mut seen = VSet::new(host.n());
        let mut endpoints = VSet::new(host.n());
        for p in &self.paths {
            for (i, &v) in p.vertices().iter().enumerate() {
                let is_endpoint = i == 0 || i == p.vertices().len() - 1;
                match self.mode {
                    Disjointness::Full => {
                        if seen.contains(v) {
                            return Err(GraphError::InvalidPath(format!(
                                "vertex {v} shared between paths"
                            )));
                        }
                    }
                    Disjointness::Internal => {
                        if seen.contains(v) && !(is_endpoint && endpoints.contains(v)) {
                            return Err(GraphError::InvalidPath(format!(
                                "vertex {v} shared internally between paths"
                            )));
                        }
                    }
                }
                seen.insert(v);
                if is_endpoint {
                    endpoints.insert(v);
                }
            }
        }
        Ok(())
    }
}

/// Result of a Menger query: either the requested paths or a small separator
/// witnessing that they cannot exist.
#[derive(Debug, Clone)]
pub enum MengerOutcome {
    Paths(PathSystem),
    /// A set of fewer than `k` vertices whose deletion destroys every
    /// X-to-Y path (X/Y vertices themselves may appear in it).
    Separator(Vec<usize>),
}

const INF: u32 = u32::MAX / 2;

/// Unit-capacity flow network over the vertex-split host.
struct SplitFlow {
    node_count: usize,
    // adjacency: per node, list of edge ids
    adj: Vec<Vec<u32>>,
    to: Vec<u32>,
    cap: Vec<u32>,
}

impl SplitFlow {
    fn new(node_count: usize) -> Self {
        SplitFlow {
            node_count,
            adj: vec![Vec::new(); node_count],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, cap: u32) {
        let id = self.to.len() as u32;
        self.adj[u].push(id);
        self.to.push(v as u32);
        self.cap.push(cap);
        self.adj[v].push(id + 1);
        self.to.push(u as u32);
        self.cap.push(0);
    }

    /// One BFS augmentation from `s` to `t`; neighbors are explored in
    /// insertion order, which is ascending by construction.
    fn augment(&mut self, s: usize, t: usize) -> bool {
        let mut parent_edge: Vec<u32> = vec![u32::MAX; self.node_count];
        let mut queue = std::collections::VecDeque::new();
        parent_edge[s] = u32::MAX - 1;
        queue.push_back(s);
        'bfs: while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0 && parent_edge[v] == u32::MAX {
                    parent_edge[v] = e;
                    if v == t {
                        break 'bfs;
                    }
                    queue.push_back(v);
                }
            }
        }
        if parent_edge[t] == u32::MAX {
            return false;
        }
        let mut v = t;
        while v != s {
            let e = parent_edge[v] as usize;
            self.cap[e] -= 1;
            self.cap[e ^ 1] += 1;
            v = self.to[e ^ 1] as usize;
        }
        true
    }

    /// Nodes reachable from `s` in the residual network.
    fn residual_reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for &e in &self.adj[u] {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

/// Either `k` pairwise vertex-disjoint X-to-Y paths avoiding `forbidden`, or
/// a separator of size below `k` witnessing impossibility.
pub fn menger_paths(
    d: &Digraph,
    x: &[usize],
    y: &[usize],
    k: usize,
    forbidden: &[usize],
) -> Result<MengerOutcome, ConnectivityError> {
    let n = d.n();
    for &v in x.iter().chain(y).chain(forbidden) {
        if v >= n {
            return Err(ConnectivityError::OutOfRange(v));
        }
    }
    let xs = VSet::from_iter(n, x.iter().copied());
    let ys = VSet::from_iter(n, y.iter().copied());
    let fs = VSet::from_iter(n, forbidden.iter().copied());
    for v in 0..n {
        let c = xs.contains(v) as u8 + ys.contains(v) as u8 + fs.contains(v) as u8;
        if c > 1 {
            return Err(ConnectivityError::OverlappingSets);
        }
    }

    // Node layout: v_in = 2v, v_out = 2v + 1, source = 2n, sink = 2n + 1.
    let source = 2 * n;
    let sink = 2 * n + 1;
    let mut net = SplitFlow::new(2 * n + 2);
    for v in 0..n {
        if !fs.contains(v) {
            net.add_edge(2 * v, 2 * v + 1, 1);
        }
    }
    for u in 0..n {
        if fs.contains(u) {
            continue;
        }
        for v in d.out_neighbors(u) {
            if !fs.contains(v) {
                net.add_edge(2 * u + 1, 2 * v, INF);
            }
        }
    }
    for &v in x {
        net.add_edge(source, 2 * v, INF);
    }
    for &v in y {
        net.add_edge(2 * v + 1, sink, INF);
    }

    let mut flow = 0;
    while flow < k && net.augment(source, sink) {
        flow += 1;
    }

    if flow < k {
        let reach = net.residual_reachable(source);
        let sep: Vec<usize> = (0..n)
            .filter(|&v| !fs.contains(v) && reach[2 * v] && !reach[2 * v + 1])
            .collect();
        debug_assert_eq!(sep.len(), flow);
        return Ok(MengerOutcome::Separator(sep));
    }

    // Flow decomposition. At each v_out, at most one unit leaves; walk from
    // each saturated source arc, always taking the lowest-id out-neighbor
    // still carrying flow.
    let mut used_out: Vec<Vec<u32>> = vec![Vec::new(); 2 * n + 2];
    for u in 0..net.node_count {
        for &e in &net.adj[u] {
            // forward edges are even ids; saturated iff residual cap of the
            // reverse edge is positive
            if e % 2 == 0 && net.cap[(e ^ 1) as usize] > 0 {
                for _ in 0..net.cap[(e ^ 1) as usize] {
                    used_out[u].push(e);
                }
            }
        }
    }
    let mut paths = Vec::with_capacity(k);
    let mut starts: Vec<usize> = x.to_vec();
    starts.sort_unstable();
    for &sx in &starts {
        // does a unit leave the source toward sx?
        let Some(pos) = used_out[source]
            .iter()
            .position(|&e| net.to[e as usize] as usize == 2 * sx)
        else {
            continue;
        };
        used_out[source].swap_remove(pos);
        let mut verts = vec![sx];
        let mut node = 2 * sx; // at v_in
        loop {
            // v_in -> v_out
            let pos = used_out[node]
                .iter()
                .position(|&e| net.to[e as usize] as usize == node + 1)
                .expect("flow conservation");
            used_out[node].swap_remove(pos);
            node += 1;
            // v_out -> next v_in or sink; choose lowest id
            let mut best: Option<(usize, usize)> = None;
            for (i, &e) in used_out[node].iter().enumerate() {
                let t = net.to[e as usize] as usize;
                if best.map_or(true, |(bt, _)| t < bt) {
                    best = Some((t, i));
                }
            }
            let (t, i) = best.expect("flow conservation");
            used_out[node].swap_remove(i);
            if t == sink {
                break;
            }
            verts.push(t / 2);
            node = t;
        }
        paths.push(Path(verts));
    }
    debug_assert_eq!(paths.len(), k);
    let sys = PathSystem::new(paths);
    sys.validate(d).expect("menger output must validate");
    Ok(MengerOutcome::Paths(sys))
}

/// Local connectivity `kappa(u, v)`: the maximum number of internally
/// disjoint u-to-v paths, computed by flow and capped at `cap` (values above
/// the cap are irrelevant to a running minimum).
fn local_connectivity_capped(d: &Digraph, u: usize, v: usize, cap: usize) -> usize {
    let n = d.n();
    let source = 2 * u + 1; // u_out
    let sink = 2 * v; // v_in
    let mut net = SplitFlow::new(2 * n);
    for w in 0..n {
        let c = if w == u || w == v { INF } else { 1 };
        net.add_edge(2 * w, 2 * w + 1, c);
    }
    for a in 0..n {
        for b in d.out_neighbors(a) {
            net.add_edge(2 * a + 1, 2 * b, INF);
        }
    }
    let mut flow = 0;
    while flow <= cap && net.augment(source, sink) {
        flow += 1;
    }
    flow
}

/// Exact vertex connectivity. Follows the classical schedule: take successive
/// pivot vertices `v_0, v_1, ...` while the index does not exceed the running
/// minimum, and for each pivot run local-connectivity flows against every
/// non-adjacent partner in both directions. A complete digraph has
/// connectivity `n - 1` by convention.
pub fn vertex_connectivity(d: &Digraph) -> Result<usize, ConnectivityError> {
    let n = d.n();
    if n < 2 {
        return Err(ConnectivityError::TooSmall);
    }
    let mut best = n - 1;
    let mut pivot = 0;
    while pivot <= best && pivot < n {
        for w in 0..n {
            if w == pivot {
                continue;
            }
            if !d.has_arc(pivot, w) {
                best = best.min(local_connectivity_capped(d, pivot, w, best));
            }
            if !d.has_arc(w, pivot) {
                best = best.min(local_connectivity_capped(d, w, pivot, best));
            }
        }
        pivot += 1;
    }
    Ok(best)
}

/// True iff every vertex reaches every other vertex.
pub fn is_strongly_connected(d: &Digraph) -> bool {
    let n = d.n();
    if n <= 1 {
        return true;
    }
    let fwd = reachable_from(d, 0, None);
    if fwd.len() != n {
        return false;
    }
    // reverse reachability from 0
    let mut seen = VSet::new(n);
    seen.insert(0);
    let mut stack = vec![0];
    while let Some(u) = stack.pop() {
        for v in d.in_neighbors(u) {
            if !seen.contains(v) {
                seen.insert(v);
                stack.push(v);
            }
        }
    }
    seen.len() == n
}

/// Vertices reachable from `start`, optionally confined to an allowed mask
/// (the start is always included).
pub(crate) fn reachable_from(d: &Digraph, start: usize, allowed: Option<&VSet>) -> VSet {
    let mut seen = VSet::new(d.n());
    seen.insert(start);
    let mut stack = vec![start];
    while let Some(u) = stack.pop() {
        for v in d.out_neighbors(u) {
            if allowed.is_some_and(|a| !a.contains(v)) {
                continue;
            }
            if !seen.contains(v) {
                seen.insert(v);
                stack.push(v);
            }
        }
    }
    seen
}
