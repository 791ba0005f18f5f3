//! Subdivision machinery: degree-window subset selection, greedy growth of
//! partial bidirected-clique subdivisions, Hall matchings, and the splitting
//! algorithm that turns a no-subdivision hypothesis into a blow-up of a
//! transitive tournament.
//!
//! The splitting loop maintains a sequence of candidate parts. While a part
//! is empty it takes the largest part, selects a branch set inside one input
//! block through the degree window, and grows a partial subdivision. A
//! complete subdivision ends the run (the hypothesis failed, the caller gets
//! the subdivision); a blocked pair (u, v) splits the part into the
//! out-fan of u and the in-fan of v, which the blockage forces to be fully
//! dominated one way. A Hall matching between input blocks and final parts
//! then carves one part per block.

use crate::digraph::{Digraph, Path};
use crate::trace_log;
use crate::vset::VSet;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubdivisionError {
    #[error("host set has {have} vertices, need at least {need}")]
    HostTooSmall { have: usize, need: usize },
    #[error("no blocks given")]
    NoBlocks,
    #[error("blocks must be pairwise disjoint (vertex {0} repeats)")]
    BlocksOverlap(usize),
    #[error("could not select a branch set of size {need} inside part {part}")]
    BranchSet { part: usize, need: usize },
    #[error("blocked fans are not one-way dominated (part {part}, pair {pair:?}); path bound too small")]
    FanDomination { part: usize, pair: (usize, usize) },
    #[error("no Hall matching at these parameters; violating blocks {0:?}")]
    Hall(Vec<usize>),
    #[error("blow-up domination audit failed between parts {0} and {1}")]
    Domination(usize, usize),
}

/// A complete subdivision: a branch set `S` and, for every ordered pair of
/// branch vertices, a path of length at most `max_len` from the first to the
/// second, all pairwise internally disjoint with interiors avoiding `S`.
#[derive(Debug, Clone)]
pub struct Subdivision {
    pub branch: Vec<usize>,
    pub paths: BTreeMap<(usize, usize), Path>,
    pub max_len: usize,
}

/// Same shape with only a subset of the ordered pairs realized.
#[derive(Debug, Clone)]
pub struct PartialSubdivision {
    pub branch: Vec<usize>,
    pub paths: BTreeMap<(usize, usize), Path>,
    pub max_len: usize,
}

impl PartialSubdivision {
    /// All vertices touched: branch plus every path interior.
    pub fn vertex_set(&self, n: usize) -> VSet {
        let mut s = VSet::from_iter(n, self.branch.iter().copied());
        for p in self.paths.values() {
            for &v in p.vertices() {
                s.insert(v);
            }
        }
        s
    }

    pub fn is_complete(&self) -> bool {
        let s = self.branch.len();
        self.paths.len() == s * (s - 1)
    }

    fn into_subdivision(self) -> Subdivision {
        Subdivision {
            branch: self.branch,
            paths: self.paths,
            max_len: self.max_len,
        }
    }

    pub fn validate(&self, d: &Digraph) -> Result<(), String> {
        let branch_set = VSet::from_iter(d.n(), self.branch.iter().copied());
        let mut interior_owner: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (&(a, b), p) in &self.paths {
            p.validate(d).map_err(|e| format!("pair ({a},{b}): {e}"))?;
            if p.start() != a || p.end() != b {
                return Err(format!("pair ({a},{b}): endpoints {:?}", p.vertices()));
            }
            if p.len_arcs() > self.max_len {
                return Err(format!("pair ({a},{b}): length {}", p.len_arcs()));
            }
            for &v in &p.vertices()[1..p.vertices().len() - 1] {
                if branch_set.contains(v) {
                    return Err(format!("pair ({a},{b}): interior {v} is a branch vertex"));
                }
                if let Some(prev) = interior_owner.insert(v, (a, b)) {
                    return Err(format!(
                        "interior {v} shared by pairs {prev:?} and ({a},{b})"
                    ));
                }
            }
        }
        Ok(())
    }
}

impl Subdivision {
    pub fn vertex_set(&self, n: usize) -> VSet {
        let mut s = VSet::from_iter(n, self.branch.iter().copied());
        for p in self.paths.values() {
            for &v in p.vertices() {
                s.insert(v);
            }
        }
        s
    }

    pub fn path(&self, a: usize, b: usize) -> &Path {
        &self.paths[&(a, b)]
    }

    pub fn validate(&self, d: &Digraph) -> Result<(), String> {
        let s = self.branch.len();
        if self.paths.len() != s * (s - 1) {
            return Err(format!(
                "want {} paths, have {}",
                s * (s - 1),
                self.paths.len()
            ));
        }
        let partial = PartialSubdivision {
            branch: self.branch.clone(),
            paths: self.paths.clone(),
            max_len: self.max_len,
        };
        partial.validate(d)
    }
}

/// A subset of `s` vertices whose in-degrees lie within a window of the
/// given width and whose in- and out-degrees clear `ratio` of the order.
/// Vertices are sorted by in-degree and a window of width `window` slides
/// over the survivors; the first anchor holding `s` survivors wins.
/// Degrees are measured inside `set`.
pub fn degree_window_subset_in(
    d: &Digraph,
    set: &[usize],
    s: usize,
    window: usize,
    ratio: (usize, usize),
) -> Option<Vec<usize>> {
    let mask = VSet::from_iter(d.n(), set.iter().copied());
    let n = set.len();
    let (num, den) = ratio;
    let mut survivors: Vec<(usize, usize)> = set
        .iter()
        .filter_map(|&v| {
            let dout = d.out_degree_in(v, &mask);
            let din = d.in_degree_in(v, &mask);
            (dout * den >= num * n && din * den >= num * n).then_some((din, v))
        })
        .collect();
    survivors.sort_unstable();
    if s == 0 {
        return Some(Vec::new());
    }
    for a in 0..survivors.len() {
        let hi = survivors[a].0 + window;
        let count = survivors[a..]
            .iter()
            .take_while(|&&(din, _)| din <= hi)
            .count();
        if count >= s {
            let mut chosen: Vec<usize> = survivors[a..a + s].iter().map(|&(_, v)| v).collect();
            chosen.sort_unstable();
            return Some(chosen);
        }
    }
    None
}

/// `degree_window_subset_in` over the whole vertex set.
pub fn degree_window_subset(
    d: &Digraph,
    s: usize,
    window: usize,
    ratio: (usize, usize),
) -> Option<Vec<usize>> {
    let all: Vec<usize> = (0..d.n()).collect();
    degree_window_subset_in(d, &all, s, window, ratio)
}

/// Fallback branch selection: the `s` consecutive vertices of the in-degree
/// order with the smallest spread.
fn lowest_spread_subset(d: &Digraph, set: &[usize], s: usize) -> Vec<usize> {
    let mask = VSet::from_iter(d.n(), set.iter().copied());
    let mut by_din: Vec<(usize, usize)> =
        set.iter().map(|&v| (d.in_degree_in(v, &mask), v)).collect();
    by_din.sort_unstable();
    let mut best = 0;
    for a in 1..=by_din.len().saturating_sub(s) {
        if by_din[a + s - 1].0 - by_din[a].0 < by_din[best + s - 1].0 - by_din[best].0 {
            best = a;
        }
    }
    let mut chosen: Vec<usize> = by_din[best..best + s].iter().map(|&(_, v)| v).collect();
    chosen.sort_unstable();
    chosen
}

/// Shortest path from `a` to `b` of length at most `max_len` arcs whose
/// interior avoids `blocked` and stays inside `host`; breadth-first with
/// ascending-id expansion.
fn bounded_path(
    d: &Digraph,
    a: usize,
    b: usize,
    max_len: usize,
    blocked: &VSet,
    host: &VSet,
) -> Option<Vec<usize>> {
    if max_len >= 1 && d.has_arc(a, b) {
        return Some(vec![a, b]);
    }
    let mut parent: Vec<usize> = vec![usize::MAX; d.n()];
    let mut frontier = vec![a];
    let mut depth = 0;
    while !frontier.is_empty() && depth < max_len {
        depth += 1;
        let mut next = Vec::new();
        for &u in &frontier {
            for v in d.out_neighbors(u) {
                if v == b {
                    let mut path = vec![b, u];
                    let mut w = u;
                    while w != a {
                        w = parent[w];
                        path.push(w);
                    }
                    path.reverse();
                    return Some(path);
                }
                if depth == max_len
                    || parent[v] != usize::MAX
                    || v == a
                    || blocked.contains(v)
                    || !host.contains(v)
                {
                    continue;
                }
                parent[v] = u;
                next.push(v);
            }
        }
        next.sort_unstable();
        frontier = next;
    }
    None
}

/// Greedy growth of a partial subdivision on branch set `b` inside `host`:
/// ordered pairs are attempted in lexicographic order, each realized by the
/// breadth-first bounded path search if one exists against the interiors
/// used so far. Usage only grows, so unrealized pairs stay unrealizable and
/// the result is maximal under this order.
pub(crate) fn grow_in_host(
    d: &Digraph,
    b: &[usize],
    ell: usize,
    host: &VSet,
) -> PartialSubdivision {
    let mut branch: Vec<usize> = b.to_vec();
    branch.sort_unstable();
    branch.dedup();
    let mut blocked = VSet::from_iter(d.n(), branch.iter().copied());
    let mut paths = BTreeMap::new();
    for &a in &branch {
        for &t in &branch {
            if a == t {
                continue;
            }
            if let Some(verts) = bounded_path(d, a, t, ell + 1, &blocked, host) {
                for &v in &verts[1..verts.len() - 1] {
                    blocked.insert(v);
                }
                paths.insert((a, t), Path(verts));
            }
        }
    }
    PartialSubdivision {
        branch,
        paths,
        max_len: ell + 1,
    }
}

/// Greedy-maximal partial subdivision on `b` with paths roaming all of `d`.
pub fn grow_partial_subdivision(d: &Digraph, b: &[usize], ell: usize) -> PartialSubdivision {
    grow_in_host(d, b, ell, &VSet::full(d.n()))
}

/// Result of a confined subdivision search.
#[derive(Debug, Clone)]
pub enum SubdivisionSearch {
    Complete(Subdivision),
    /// First unrealized ordered pair and the partial subdivision at
    /// termination, which is exactly what the splitting operation consumes.
    Blocked {
        pair: (usize, usize),
        partial: PartialSubdivision,
    },
}

/// Select a branch set of size `s` inside `u` (degree window first, lowest
/// spread as fallback) and grow a subdivision with branch and interiors
/// confined to `u`.
pub fn find_subdivision(
    d: &Digraph,
    u: &[usize],
    s: usize,
    ell: usize,
) -> Result<SubdivisionSearch, SubdivisionError> {
    if u.len() < s {
        return Err(SubdivisionError::HostTooSmall {
            have: u.len(),
            need: s,
        });
    }
    let branch = degree_window_subset_in(d, u, s, 10 * s, (9, 40))
        .unwrap_or_else(|| lowest_spread_subset(d, u, s));
    let host = VSet::from_iter(d.n(), u.iter().copied());
    Ok(search_on_branch(d, &branch, ell, &host))
}

fn search_on_branch(d: &Digraph, branch: &[usize], ell: usize, host: &VSet) -> SubdivisionSearch {
    let partial = grow_in_host(d, branch, ell, host);
    if partial.is_complete() {
        return SubdivisionSearch::Complete(partial.into_subdivision());
    }
    let pair = partial
        .branch
        .iter()
        .flat_map(|&a| partial.branch.iter().map(move |&b| (a, b)))
        .find(|&(a, b)| a != b && !partial.paths.contains_key(&(a, b)))
        .expect("incomplete partial has an unrealized pair");
    SubdivisionSearch::Blocked { pair, partial }
}

#[derive(Debug, Clone)]
pub enum HallOutcome {
    /// `matched[i]` is the right vertex assigned to left vertex `i`.
    Matching(Vec<usize>),
    /// A left subset whose neighborhood is smaller than itself.
    Violator(Vec<usize>),
}

/// Augmenting-path matching covering the left side of a bipartite graph, or
/// a Hall-violating left subset as certificate.
pub fn hall_matching(left: usize, right: usize, edges: &[(usize, usize)]) -> HallOutcome {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); left];
    for &(l, r) in edges {
        assert!(l < left && r < right, "edge ({l},{r}) out of range");
        adj[l].push(r);
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let mut right_owner: Vec<Option<usize>> = vec![None; right];

    fn try_assign(
        u: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        right_owner: &mut [Option<usize>],
    ) -> bool {
        for &r in &adj[u] {
            if seen[r] {
                continue;
            }
            seen[r] = true;
            if right_owner[r].is_none()
                || try_assign(right_owner[r].unwrap(), adj, seen, right_owner)
            {
                right_owner[r] = Some(u);
                return true;
            }
        }
        false
    }

    for u in 0..left {
        let mut seen = vec![false; right];
        if !try_assign(u, &adj, &mut seen, &mut right_owner) {
            // alternating reachability from u gives the violating set
            let mut left_set = vec![false; left];
            let mut right_set = vec![false; right];
            left_set[u] = true;
            let mut changed = true;
            while changed {
                changed = false;
                for l in 0..left {
                    if !left_set[l] {
                        continue;
                    }
                    for &r in &adj[l] {
                        if !right_set[r] {
                            right_set[r] = true;
                            if let Some(owner) = right_owner[r] {
                                if !left_set[owner] {
                                    left_set[owner] = true;
                                    changed = true;
                                }
                            }
                        }
                    }
                }
            }
            let violator: Vec<usize> = (0..left).filter(|&l| left_set[l]).collect();
            return HallOutcome::Violator(violator);
        }
    }
    let mut matched = vec![0; left];
    for r in 0..right {
        if let Some(l) = right_owner[r] {
            matched[l] = r;
        }
    }
    HallOutcome::Matching(matched)
}

/// Ordered sequence of disjoint vertex sets with full forward domination
/// between parts; `block_map[i]` names the input block part `i` was carved
/// from.
#[derive(Debug, Clone)]
pub struct TTBlowup {
    pub parts: Vec<Vec<usize>>,
    pub block_map: Vec<usize>,
}

impl TTBlowup {
    /// Exhaustive audit: every cross pair of parts carries exactly the
    /// forward arc.
    pub fn validate(&self, d: &Digraph) -> Result<(), SubdivisionError> {
        for i in 0..self.parts.len() {
            for j in (i + 1)..self.parts.len() {
                for &a in &self.parts[i] {
                    for &b in &self.parts[j] {
                        if !d.has_arc(a, b) || d.has_arc(b, a) {
                            return Err(SubdivisionError::Domination(i, j));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SplitParams {
    /// branch set size per attempt
    pub s: usize,
    /// path length bound parameter; subdivision paths have at most `ell + 1` arcs
    pub ell: usize,
    /// minimum block/part intersection admitted to the Hall stage
    pub part_min: usize,
    /// sequence length multiplier (the sequence has `splits_factor * alpha` slots)
    pub splits_factor: usize,
    /// in-degree window width; defaults to `10 * s` when `None`
    pub window: Option<usize>,
    /// degree floor as a fraction of the part order
    pub ratio: (usize, usize),
}

impl SplitParams {
    pub fn new(s: usize, ell: usize, part_min: usize) -> Self {
        SplitParams {
            s,
            ell,
            part_min,
            splits_factor: 5,
            window: None,
            ratio: (9, 40),
        }
    }
}

/// One line of the split run log.
#[derive(Debug, Clone)]
pub struct SplitRecord {
    pub h: usize,
    pub g_size: usize,
    pub blocked: (usize, usize),
    pub u_prime: usize,
    pub v_prime: usize,
    pub loss: usize,
    /// vertices of the partial subdivision inside the split part
    pub m_size: usize,
    /// in-fan difference of the blocked pair outside the subdivision
    pub fan_gap: usize,
    /// in-degree spread of the chosen branch set
    pub spread: usize,
}

impl std::fmt::Display for SplitRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "split h={} |G|={} blocked=({},{}) |U'|={} |V'|={} loss={} m={} gap={} spread={}",
            self.h,
            self.g_size,
            self.blocked.0,
            self.blocked.1,
            self.u_prime,
            self.v_prime,
            self.loss,
            self.m_size,
            self.fan_gap,
            self.spread
        )
    }
}

#[derive(Debug, Clone)]
pub enum SplitOutcome {
    /// The no-subdivision hypothesis held and a blow-up was carved.
    Blowup(TTBlowup, Vec<SplitRecord>),
    /// A complete subdivision turned up inside `block`; the hypothesis
    /// failed and the caller should promote that block.
    SubdivisionFound {
        block: usize,
        subdivision: Subdivision,
    },
}

/// The splitting process over pairwise disjoint blocks. Runs splits while
/// some sequence slot is empty (up to `splits_factor * alpha - 1` of them),
/// then matches blocks to parts by Hall's condition and returns the carved
/// blow-up in part order.
pub fn split_to_tt_blowup(
    d: &Digraph,
    blocks: &[Vec<usize>],
    params: &SplitParams,
) -> Result<SplitOutcome, SubdivisionError> {
    let alpha = blocks.len();
    if alpha == 0 {
        return Err(SubdivisionError::NoBlocks);
    }
    let mut union = VSet::new(d.n());
    for b in blocks {
        for &v in b {
            if union.contains(v) {
                return Err(SubdivisionError::BlocksOverlap(v));
            }
            union.insert(v);
        }
    }
    let slots = params.splits_factor * alpha;
    let window = params.window.unwrap_or(10 * params.s);
    let mut g: Vec<Vec<usize>> = vec![Vec::new(); slots];
    g[0] = union.to_vec();
    let mut log: Vec<SplitRecord> = Vec::new();

    let mut splits = 0;
    while splits + 1 < slots && g.iter().any(|p| p.is_empty()) {
        // largest part, lowest index on ties
        let h = (0..slots)
            .max_by(|&a, &b| g[a].len().cmp(&g[b].len()).then(b.cmp(&a)))
            .unwrap();
        if g[h].len() < params.s {
            return Err(SubdivisionError::BranchSet {
                part: h,
                need: params.s,
            });
        }
        // candidate pool across all blocks, then pigeonhole into one block
        let pool_size = (params.s * alpha).min(g[h].len());
        let pool = degree_window_subset_in(d, &g[h], pool_size, window, params.ratio)
            .unwrap_or_else(|| lowest_spread_subset(d, &g[h], pool_size));
        let per_block: Vec<Vec<usize>> = blocks
            .iter()
            .map(|b| {
                let bs = VSet::from_iter(d.n(), b.iter().copied());
                pool.iter().copied().filter(|&v| bs.contains(v)).collect()
            })
            .collect();
        let best_block = (0..alpha)
            .max_by(|&a, &b| per_block[a].len().cmp(&per_block[b].len()).then(b.cmp(&a)))
            .unwrap();
        if per_block[best_block].len() < params.s {
            return Err(SubdivisionError::BranchSet {
                part: h,
                need: params.s,
            });
        }
        let branch: Vec<usize> = per_block[best_block][..params.s].to_vec();
        let host = VSet::from_iter(d.n(), g[h].iter().copied());

        match search_on_branch(d, &branch, params.ell, &host) {
            SubdivisionSearch::Complete(subdivision) => {
                return Ok(SplitOutcome::SubdivisionFound {
                    block: best_block,
                    subdivision,
                });
            }
            SubdivisionSearch::Blocked {
                pair: (u, v),
                partial,
            } => {
                let m = partial.vertex_set(d.n());
                let u_fan: Vec<usize> = d
                    .out_neighbors(u)
                    .filter(|&w| host.contains(w) && !m.contains(w))
                    .collect();
                let v_fan: Vec<usize> = d
                    .in_neighbors(v)
                    .filter(|&w| host.contains(w) && !m.contains(w))
                    .collect();
                // the blockage forces the fans apart and one-way; check it
                let u_fan_set = VSet::from_iter(d.n(), u_fan.iter().copied());
                for &w in &v_fan {
                    if u_fan_set.contains(w) {
                        return Err(SubdivisionError::FanDomination {
                            part: h,
                            pair: (u, v),
                        });
                    }
                }
                for &a in &v_fan {
                    for &b in &u_fan {
                        if !d.has_arc(a, b) || d.has_arc(b, a) {
                            return Err(SubdivisionError::FanDomination {
                                part: h,
                                pair: (u, v),
                            });
                        }
                    }
                }
                // loss accounting for the run log
                let m_in_g = g[h].iter().filter(|&&w| m.contains(w)).count();
                let fan_gap = g[h]
                    .iter()
                    .filter(|&&w| !m.contains(w) && d.has_arc(w, u) && !d.has_arc(w, v))
                    .count();
                let mask = VSet::from_iter(d.n(), g[h].iter().copied());
                let dins: Vec<usize> = branch.iter().map(|&w| d.in_degree_in(w, &mask)).collect();
                let spread = dins.iter().max().unwrap() - dins.iter().min().unwrap();
                let rec = SplitRecord {
                    h,
                    g_size: g[h].len(),
                    blocked: (u, v),
                    u_prime: u_fan.len(),
                    v_prime: v_fan.len(),
                    loss: g[h].len() - u_fan.len() - v_fan.len(),
                    m_size: m_in_g,
                    fan_gap,
                    spread,
                };
                trace_log!("{rec}");
                log.push(rec);
                // shift the suffix right and install V' before U'
                for j in (h + 1..slots - 1).rev() {
                    g[j + 1] = std::mem::take(&mut g[j]);
                }
                g[h] = v_fan;
                g[h + 1] = u_fan;
                splits += 1;
            }
        }
    }

    // Part-size ratios hold only at full-scale degrees; log, don't assert.
    if crate::trace_enabled() {
        let sizes: Vec<usize> = g.iter().map(|p| p.len()).collect();
        trace_log!("split final part sizes: {sizes:?}");
    }

    // Hall stage: match blocks to parts intersecting them in at least
    // `part_min` vertices.
    let mut edges = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        let bs = VSet::from_iter(d.n(), b.iter().copied());
        for (j, part) in g.iter().enumerate() {
            let inter = part.iter().filter(|&&v| bs.contains(v)).count();
            if inter >= params.part_min {
                edges.push((i, j));
            }
        }
    }
    match hall_matching(alpha, slots, &edges) {
        HallOutcome::Violator(vs) => Err(SubdivisionError::Hall(vs)),
        HallOutcome::Matching(matched) => {
            let mut carved: Vec<(usize, usize)> = matched
                .iter()
                .enumerate()
                .map(|(block, &slot)| (slot, block))
                .collect();
            carved.sort_unstable();
            let mut parts = Vec::with_capacity(alpha);
            let mut block_map = Vec::with_capacity(alpha);
            for (slot, block) in carved {
                let bs = VSet::from_iter(d.n(), blocks[block].iter().copied());
                let part: Vec<usize> = g[slot]
                    .iter()
                    .copied()
                    .filter(|&v| bs.contains(v))
                    .collect();
                parts.push(part);
                block_map.push(block);
            }
            let blowup = TTBlowup { parts, block_map };
            blowup.validate(d)?;
            Ok(SplitOutcome::Blowup(blowup, log))
        }
    }
}
