//! Rerouting a disjoint path system off a subdivision: given a subdivision
//! `F` with branch set `S` and a system `Q` of disjoint paths into `Y'`, the
//! system is rebuilt into `Q̂` so that a large sub-branch-set `S'` remains
//! whose induced subdivision paths avoid `Q̂` entirely.
//!
//! The rebuild runs in three cut-scan stages over the original paths,
//! each iterated to a fixed point: shortest prefixes admitting a connection
//! onto the subdivision (pre-good), shortest suffixes admitting a connection
//! out of the free branch vertices (post-good), then suffixes acceptable
//! against the assembled head bundles. A three-rule reconnection follows.
//! Every output is audited from scratch; nothing is trusted from
//! construction. When a scan cut lands on a branch vertex, the vertex claims
//! itself (a one-vertex useful path); this keeps claimed vertices off the
//! other paths.

use crate::connectivity::{Disjointness, PathSystem};
use crate::digraph::{Digraph, Path};
use crate::subdivision::Subdivision;
use crate::trace_log;
use crate::vset::VSet;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RerouteError {
    #[error("bad input system: {0}")]
    BadSystem(String),
    #[error("terminal set must avoid the subdivision (vertex {0} lies on it)")]
    TerminalOnSubdivision(usize),
    #[error("moreover variant requires origins inside the branch set, {0} is not")]
    OriginOutsideBranch(usize),
    #[error("freed only {found} branch vertices, need {need}")]
    NotFreed { found: usize, need: usize },
    #[error("reconnection stalled: {0}")]
    Reconnect(String),
    #[error("output audit failed: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RerouteVariant {
    Standard,
    /// Origins lie in the branch set; the rebuilt system may move them to a
    /// new origin set `O'` inside it.
    Moreover,
}

/// Which reconnection rule produced each output path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconnectRule {
    /// untouched original path
    Full,
    /// head bundle of one path joined to an acceptable suffix of another
    Bundle,
    /// head, a full subdivision path between useful vertices, and a tail
    BranchPair,
    /// suffix with its incoming useful path (moreover variant)
    SuffixOnly,
    /// a properly cut path with no admissible tail connection, kept whole;
    /// the output audit is the gatekeeper for this rule
    KeptOriginal,
}

#[derive(Debug, Clone)]
pub struct PathTrace {
    pub index: usize,
    pub prefix_cut: usize,
    pub pre_useful: Option<usize>,
    pub suffix_cut: usize,
    pub post_useful: Option<usize>,
    pub accept_cut: Option<usize>,
    pub acceptable_index: Option<usize>,
    pub rule: ReconnectRule,
}

impl std::fmt::Display for PathTrace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "path {}: rule={:?} prefix_cut={} pre={:?} suffix_cut={} post={:?} accept={:?} via={:?}",
            self.index,
            self.rule,
            self.prefix_cut,
            self.pre_useful,
            self.suffix_cut,
            self.post_useful,
            self.accept_cut,
            self.acceptable_index
        )
    }
}

#[derive(Debug, Clone)]
pub struct RerouteResult {
    pub q_hat: PathSystem,
    /// branch vertices untouched by the rebuilt system whose pairwise
    /// subdivision paths avoid it
    pub s_prime: Vec<usize>,
    /// moreover variant only: the origin set of the rebuilt system
    pub o_prime: Option<Vec<usize>>,
    pub variant: RerouteVariant,
    pub trace: Vec<PathTrace>,
}

/// Where a vertex sits relative to the subdivision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Spot {
    Branch,
    /// interior of the path for this ordered pair, at this path position
    Interior((usize, usize), usize),
    Off,
}

struct Ctx<'a> {
    d: &'a Digraph,
    f: &'a Subdivision,
    q: Vec<Vec<usize>>,
    spot: BTreeMap<usize, Spot>,
}

impl<'a> Ctx<'a> {
    fn new(d: &'a Digraph, f: &'a Subdivision, q: &PathSystem) -> Self {
        let mut spot = BTreeMap::new();
        for &b in &f.branch {
            spot.insert(b, Spot::Branch);
        }
        for (&pair, p) in &f.paths {
            for (i, &v) in p.vertices().iter().enumerate() {
                if i == 0 || i == p.vertices().len() - 1 {
                    continue;
                }
                spot.insert(v, Spot::Interior(pair, i));
            }
        }
        Ctx {
            d,
            f,
            q: q.paths.iter().map(|p| p.vertices().to_vec()).collect(),
            spot,
        }
    }

    fn spot_of(&self, v: usize) -> Spot {
        self.spot.get(&v).copied().unwrap_or(Spot::Off)
    }
}

#[derive(Debug, Clone)]
struct PreClaim {
    /// pre-useful branch vertex
    b: usize,
    /// segment of the subdivision path from the cut vertex to `b`, inclusive
    path: Vec<usize>,
}

#[derive(Debug, Clone)]
struct PostClaim {
    /// post-useful branch vertex
    c: usize,
    /// segment of the subdivision path from `c` to the cut vertex, inclusive
    path: Vec<usize>,
}

/// Union of `q[i][..=cut[i]]` over all paths.
fn prefix_union(ctx: &Ctx, cut: &[usize]) -> VSet {
    let mut s = VSet::new(ctx.d.n());
    for (i, path) in ctx.q.iter().enumerate() {
        for &v in &path[..=cut[i]] {
            s.insert(v);
        }
    }
    s
}

fn suffix_union(ctx: &Ctx, cut: &[usize]) -> VSet {
    let mut s = VSet::new(ctx.d.n());
    for (i, path) in ctx.q.iter().enumerate() {
        for &v in &path[cut[i]..] {
            s.insert(v);
        }
    }
    s
}

/// Stage one: earliest prefix cuts admitting a pre-useful connection,
/// iterated to a fixed point (shrinking one prefix can only open earlier
/// cuts for the others).
fn pre_stage(ctx: &Ctx) -> (Vec<usize>, Vec<Option<PreClaim>>) {
    let n_paths = ctx.q.len();
    let mut cut: Vec<usize> = ctx.q.iter().map(|p| p.len() - 1).collect();
    let mut claim: Vec<Option<PreClaim>> = vec![None; n_paths];
    loop {
        let mut changed = false;
        for i in 0..n_paths {
            let vq = prefix_union(ctx, &cut);
            let claimed: Vec<usize> = claim
                .iter()
                .enumerate()
                .filter_map(|(j, c)| (j != i).then_some(c.as_ref()).flatten().map(|c| c.b))
                .collect();
            'scan: for p in 0..cut[i] {
                let f = ctx.q[i][p];
                match ctx.spot_of(f) {
                    Spot::Branch => {
                        // a branch vertex on a prefix claims itself
                        if !claimed.contains(&f) {
                            cut[i] = p;
                            claim[i] = Some(PreClaim { b: f, path: vec![f] });
                            changed = true;
                            break 'scan;
                        }
                    }
                    Spot::Interior((a, b), pos) => {
                        let full = ctx.f.path(a, b).vertices();
                        let seg = &full[pos..];
                        if !claimed.contains(&b) && seg[1..].iter().all(|&v| !vq.contains(v)) {
                            cut[i] = p;
                            claim[i] = Some(PreClaim {
                                b,
                                path: seg.to_vec(),
                            });
                            changed = true;
                            break 'scan;
                        }
                    }
                    Spot::Off => {}
                }
            }
        }
        if !changed {
            return (cut, claim);
        }
    }
}

/// Stage two: latest suffix cuts whose incoming useful path starts at a free
/// branch vertex, iterated to a fixed point.
fn post_stage(ctx: &Ctx, s_tilde: &[usize]) -> (Vec<usize>, Vec<Option<PostClaim>>) {
    let n_paths = ctx.q.len();
    let free = VSet::from_iter(ctx.d.n(), s_tilde.iter().copied());
    let mut cut: Vec<usize> = vec![0; n_paths];
    let mut claim: Vec<Option<PostClaim>> = vec![None; n_paths];
    loop {
        let mut changed = false;
        for i in 0..n_paths {
            let vq = suffix_union(ctx, &cut);
            let claimed: Vec<usize> = claim
                .iter()
                .enumerate()
                .filter_map(|(j, c)| (j != i).then_some(c.as_ref()).flatten().map(|c| c.c))
                .collect();
            'scan: for p in ((cut[i] + 1)..ctx.q[i].len()).rev() {
                let t = ctx.q[i][p];
                match ctx.spot_of(t) {
                    Spot::Branch => {
                        // a free branch vertex on a suffix claims itself;
                        // some other free vertex names the subdivision path
                        if free.contains(t)
                            && !claimed.contains(&t)
                            && s_tilde.iter().any(|&d| d != t)
                        {
                            cut[i] = p;
                            claim[i] = Some(PostClaim { c: t, path: vec![t] });
                            changed = true;
                            break 'scan;
                        }
                    }
                    Spot::Interior((c, dd), pos) => {
                        let full = ctx.f.path(c, dd).vertices();
                        let seg = &full[..=pos];
                        if free.contains(c)
                            && free.contains(dd)
                            && !claimed.contains(&c)
                            && seg[..seg.len() - 1].iter().all(|&v| !vq.contains(v))
                        {
                            cut[i] = p;
                            claim[i] = Some(PostClaim {
                                c,
                                path: seg.to_vec(),
                            });
                            changed = true;
                            break 'scan;
                        }
                    }
                    Spot::Off => {}
                }
            }
        }
        if !changed {
            return (cut, claim);
        }
    }
}

/// Head bundle of a properly cut path: its prefix, its pre-useful path, and
/// the fan of subdivision paths from the pre-useful vertex to every free
/// branch vertex.
struct Bundle {
    prefix: Vec<usize>,
    pre_path: Vec<usize>,
    fans: BTreeMap<usize, Vec<usize>>,
}

impl Bundle {
    fn contains(&self, v: usize) -> bool {
        self.prefix.contains(&v)
            || self.pre_path.contains(&v)
            || self.fans.values().any(|f| f.contains(&v))
    }

    /// The unique walk from the bundle's origin to `t` (which must lie on
    /// the bundle).
    fn path_to(&self, t: usize) -> Vec<usize> {
        if let Some(pos) = self.prefix.iter().position(|&v| v == t) {
            return self.prefix[..=pos].to_vec();
        }
        let mut out = self.prefix.clone();
        if let Some(pos) = self.pre_path.iter().position(|&v| v == t) {
            out.extend_from_slice(&self.pre_path[1..=pos]);
            return out;
        }
        out.extend_from_slice(&self.pre_path[1..]);
        for fan in self.fans.values() {
            if let Some(pos) = fan.iter().position(|&v| v == t) {
                out.extend_from_slice(&fan[1..=pos]);
                return out;
            }
        }
        unreachable!("path_to called with a vertex off the bundle");
    }
}

/// Stage three: latest suffix-of-suffix cuts landing on some head bundle.
fn accept_stage(
    ctx: &Ctx,
    post_cut: &[usize],
    bundles: &BTreeMap<usize, Bundle>,
) -> (Vec<usize>, Vec<Option<(usize, Vec<usize>)>>) {
    let n_paths = ctx.q.len();
    let mut cut: Vec<usize> = post_cut.to_vec();
    let mut claim: Vec<Option<(usize, Vec<usize>)>> = vec![None; n_paths];
    loop {
        let mut changed = false;
        for i in 0..n_paths {
            let vq = suffix_union(ctx, &cut);
            let claimed: Vec<usize> = claim
                .iter()
                .enumerate()
                .filter_map(|(jj, c)| (jj != i).then_some(c.as_ref()).flatten().map(|c| c.0))
                .collect();
            'scan: for p in ((cut[i] + 1)..ctx.q[i].len()).rev() {
                let t = ctx.q[i][p];
                for (&j, bundle) in bundles {
                    if claimed.contains(&j) || !bundle.contains(t) {
                        continue;
                    }
                    let upto = bundle.path_to(t);
                    if upto[..upto.len() - 1].iter().all(|&v| !vq.contains(v)) {
                        cut[i] = p;
                        claim[i] = Some((j, upto));
                        changed = true;
                        break 'scan;
                    }
                }
            }
        }
        if !changed {
            return (cut, claim);
        }
    }
}

fn glue(head: &[usize], tail: &[usize]) -> Vec<usize> {
    debug_assert_eq!(head.last(), tail.first());
    let mut out = head.to_vec();
    out.extend_from_slice(&tail[1..]);
    out
}

/// Rebuild the system `q` so that its paths leave a large sub-branch-set of
/// `f` untouched. `o` must be the initial vertices of `q` (in path order)
/// and `y_prime` its terminal set; `freed_min` is the required size of the
/// freed set. In the moreover variant the origins must lie inside the branch
/// set and the rebuilt system starts at a (possibly different) origin set
/// `O'` inside it.
pub fn free_subdivision(
    d: &Digraph,
    f: &Subdivision,
    q: &PathSystem,
    o: &[usize],
    y_prime: &[usize],
    freed_min: usize,
    variant: RerouteVariant,
) -> Result<RerouteResult, RerouteError> {
    // precondition checks
    q.validate(d)
        .map_err(|e| RerouteError::BadSystem(e.to_string()))?;
    f.validate(d).map_err(RerouteError::BadSystem)?;
    if q.paths.is_empty() {
        return Err(RerouteError::BadSystem("empty path system".into()));
    }
    if q.paths.len() != o.len() || q.paths.len() != y_prime.len() {
        return Err(RerouteError::BadSystem(format!(
            "system of {} paths with {} origins and {} terminals",
            q.paths.len(),
            o.len(),
            y_prime.len()
        )));
    }
    for (i, p) in q.paths.iter().enumerate() {
        if p.start() != o[i] {
            return Err(RerouteError::BadSystem(format!(
                "path {i} starts at {} not {}",
                p.start(),
                o[i]
            )));
        }
        if p.end() != y_prime[i] {
            return Err(RerouteError::BadSystem(format!(
                "path {i} ends at {} not {}",
                p.end(),
                y_prime[i]
            )));
        }
    }
    let fset = f.vertex_set(d.n());
    for &y in y_prime {
        if fset.contains(y) {
            return Err(RerouteError::TerminalOnSubdivision(y));
        }
    }
    let branch_set = VSet::from_iter(d.n(), f.branch.iter().copied());
    if variant == RerouteVariant::Moreover {
        for &v in o {
            if !branch_set.contains(v) {
                return Err(RerouteError::OriginOutsideBranch(v));
            }
        }
    }

    let ctx = Ctx::new(d, f, q);
    let result = match variant {
        RerouteVariant::Standard => standard_variant(&ctx, f, freed_min)?,
        RerouteVariant::Moreover => moreover_variant(&ctx, f, freed_min)?,
    };
    audit(d, f, q, o, y_prime, freed_min, &result)?;
    for line in &result.trace {
        trace_log!("{line}");
    }
    Ok(result)
}

fn standard_variant(
    ctx: &Ctx,
    f: &Subdivision,
    _freed_min: usize,
) -> Result<RerouteResult, RerouteError> {
    let n_paths = ctx.q.len();
    let (pre_cut, pre_claim) = pre_stage(ctx);
    let pre_used: Vec<usize> = pre_claim.iter().flatten().map(|c| c.b).collect();
    let s_tilde: Vec<usize> = f
        .branch
        .iter()
        .copied()
        .filter(|b| !pre_used.contains(b))
        .collect();
    let (post_cut, post_claim) = post_stage(ctx, &s_tilde);
    let post_used: Vec<usize> = post_claim.iter().flatten().map(|c| c.c).collect();

    // head bundles for properly cut paths
    let mut bundles: BTreeMap<usize, Bundle> = BTreeMap::new();
    for i in 0..n_paths {
        if pre_cut[i] == ctx.q[i].len() - 1 {
            continue;
        }
        let claim = pre_claim[i].as_ref().expect("proper prefix has a claim");
        let mut fans = BTreeMap::new();
        for &g in &s_tilde {
            if g != claim.b {
                fans.insert(g, f.path(claim.b, g).vertices().to_vec());
            }
        }
        bundles.insert(
            i,
            Bundle {
                prefix: ctx.q[i][..=pre_cut[i]].to_vec(),
                pre_path: claim.path.clone(),
                fans,
            },
        );
    }
    let (acc_cut, acc_claim) = accept_stage(ctx, &post_cut, &bundles);

    // reconnection
    let mut k_head: Vec<usize> = (0..n_paths).collect();
    let mut k_tail: Vec<usize> = (0..n_paths).collect();
    let mut out: Vec<Option<Vec<usize>>> = vec![None; n_paths];
    let mut rule: Vec<Option<ReconnectRule>> = vec![None; n_paths];
    // untouched originals first
    for i in 0..n_paths {
        if pre_cut[i] == ctx.q[i].len() - 1 {
            out[i] = Some(ctx.q[i].clone());
            rule[i] = Some(ReconnectRule::Full);
            k_head.retain(|&x| x != i);
            k_tail.retain(|&x| x != i);
        }
    }
    // bundle joins
    for j in 0..n_paths {
        if !k_tail.contains(&j) {
            continue;
        }
        if let Some((i, upto)) = &acc_claim[j] {
            if k_head.contains(i) {
                out[j] = Some(glue(upto, &ctx.q[j][acc_cut[j]..]));
                rule[j] = Some(ReconnectRule::Bundle);
                k_head.retain(|&x| x != *i);
                k_tail.retain(|&x| x != j);
            }
        }
    }
    // tails with no admissible connection keep their original path whole
    // (their own head must still be free); the audit vets the outcome
    for j in k_tail.clone() {
        if post_claim[j].is_none() {
            if !k_head.contains(&j) {
                return Err(RerouteError::Reconnect(format!(
                    "path {j} lacks a tail connection and its head is spoken for"
                )));
            }
            out[j] = Some(ctx.q[j].clone());
            rule[j] = Some(ReconnectRule::KeptOriginal);
            k_head.retain(|&x| x != j);
            k_tail.retain(|&x| x != j);
        }
    }
    // branch-pair joins for whatever remains
    let heads = k_head.clone();
    let tails = k_tail.clone();
    for (&i, &j) in heads.iter().zip(tails.iter()) {
        let pre = pre_claim[i]
            .as_ref()
            .ok_or_else(|| RerouteError::Reconnect(format!("path {i} lacks a head connection")))?;
        let post = post_claim[j].as_ref().expect("claimless tails were handled");
        let head = glue(&ctx.q[i][..=pre_cut[i]], &pre.path);
        let bridge = f.path(pre.b, post.c).vertices();
        let head = glue(&head, bridge);
        let head = glue(&head, &post.path);
        out[j] = Some(glue(&head, &ctx.q[j][post_cut[j]..]));
        rule[j] = Some(ReconnectRule::BranchPair);
        k_head.retain(|&x| x != i);
        k_tail.retain(|&x| x != j);
    }
    if !k_head.is_empty() || !k_tail.is_empty() {
        return Err(RerouteError::Reconnect(format!(
            "unpaired heads {k_head:?} / tails {k_tail:?}"
        )));
    }

    let q_hat = PathSystem {
        paths: out
            .into_iter()
            .map(|p| Path(p.expect("every slot reconnected")))
            .collect(),
        mode: Disjointness::Full,
    };
    let hat_set = q_hat.vertex_set(ctx.d.n());
    let mut s_prime: Vec<usize> = f
        .branch
        .iter()
        .copied()
        .filter(|&b| !pre_used.contains(&b) && !post_used.contains(&b) && !hat_set.contains(b))
        .collect();
    // paths kept whole may still brush freed-pair subdivision paths; shrink
    // to the largest clean subset (drop the dirtiest vertex first)
    loop {
        let dirty = |u: usize, v: usize| {
            f.path(u, v)
                .vertices()
                .iter()
                .any(|&w| hat_set.contains(w))
        };
        let mut counts: Vec<usize> = vec![0; s_prime.len()];
        for (a, &u) in s_prime.iter().enumerate() {
            for (b, &v) in s_prime.iter().enumerate() {
                if a != b && dirty(u, v) {
                    counts[a] += 1;
                    counts[b] += 1;
                }
            }
        }
        let Some((worst, &cnt)) = counts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(&x.0)))
        else {
            break;
        };
        if cnt == 0 {
            break;
        }
        s_prime.remove(worst);
    }

    let trace = (0..n_paths)
        .map(|i| PathTrace {
            index: i,
            prefix_cut: pre_cut[i],
            pre_useful: pre_claim[i].as_ref().map(|c| c.b),
            suffix_cut: post_cut[i],
            post_useful: post_claim[i].as_ref().map(|c| c.c),
            accept_cut: (acc_cut[i] != post_cut[i]).then_some(acc_cut[i]),
            acceptable_index: acc_claim[i].as_ref().map(|c| c.0),
            rule: rule[i].unwrap(),
        })
        .collect();
    Ok(RerouteResult {
        q_hat,
        s_prime,
        o_prime: None,
        variant: RerouteVariant::Standard,
        trace,
    })
}

fn moreover_variant(
    ctx: &Ctx,
    f: &Subdivision,
    _freed_min: usize,
) -> Result<RerouteResult, RerouteError> {
    let n_paths = ctx.q.len();
    let (post_cut, post_claim) = post_stage(ctx, &f.branch);
    let mut paths = Vec::with_capacity(n_paths);
    let mut o_prime = Vec::with_capacity(n_paths);
    let mut trace = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let suffix = &ctx.q[i][post_cut[i]..];
        let (verts, rule) = match &post_claim[i] {
            Some(claim) => (glue(&claim.path, suffix), ReconnectRule::SuffixOnly),
            None => (suffix.to_vec(), ReconnectRule::Full),
        };
        o_prime.push(verts[0]);
        paths.push(Path(verts));
        trace.push(PathTrace {
            index: i,
            prefix_cut: ctx.q[i].len() - 1,
            pre_useful: None,
            suffix_cut: post_cut[i],
            post_useful: post_claim[i].as_ref().map(|c| c.c),
            accept_cut: None,
            acceptable_index: None,
            rule,
        });
    }
    let q_hat = PathSystem {
        paths,
        mode: Disjointness::Full,
    };
    let s_prime: Vec<usize> = f
        .branch
        .iter()
        .copied()
        .filter(|b| !o_prime.contains(b))
        .collect();
    Ok(RerouteResult {
        q_hat,
        s_prime,
        o_prime: Some(o_prime),
        variant: RerouteVariant::Moreover,
        trace,
    })
}

/// Full output audit: disjointness, endpoints, the freed-set size, and the
/// avoidance properties, all recomputed from scratch.
fn audit(
    d: &Digraph,
    f: &Subdivision,
    q: &PathSystem,
    o: &[usize],
    y_prime: &[usize],
    freed_min: usize,
    r: &RerouteResult,
) -> Result<(), RerouteError> {
    r.q_hat
        .validate(d)
        .map_err(|e| RerouteError::Internal(e.to_string()))?;
    if r.q_hat.len() != q.len() {
        return Err(RerouteError::Internal("path count changed".into()));
    }
    let mut ends: Vec<usize> = r.q_hat.paths.iter().map(|p| p.end()).collect();
    ends.sort_unstable();
    let mut want_ends = y_prime.to_vec();
    want_ends.sort_unstable();
    if ends != want_ends {
        return Err(RerouteError::Internal(format!(
            "terminals {ends:?} differ from {want_ends:?}"
        )));
    }
    let mut starts: Vec<usize> = r.q_hat.paths.iter().map(|p| p.start()).collect();
    starts.sort_unstable();
    match r.variant {
        RerouteVariant::Standard => {
            let mut want = o.to_vec();
            want.sort_unstable();
            if starts != want {
                return Err(RerouteError::Internal(format!(
                    "origins {starts:?} differ from {want:?}"
                )));
            }
        }
        RerouteVariant::Moreover => {
            let branch = VSet::from_iter(d.n(), f.branch.iter().copied());
            for &s in &starts {
                if !branch.contains(s) {
                    return Err(RerouteError::Internal(format!(
                        "origin {s} escaped the branch set"
                    )));
                }
            }
        }
    }

    let hat_set = r.q_hat.vertex_set(d.n());
    for &s in &r.s_prime {
        if hat_set.contains(s) {
            return Err(RerouteError::Internal(format!(
                "freed vertex {s} lies on the system"
            )));
        }
    }
    // the pairwise avoidance property over the freed set
    for &u in &r.s_prime {
        for &v in &r.s_prime {
            if u == v {
                continue;
            }
            for &w in f.path(u, v).vertices() {
                if hat_set.contains(w) {
                    return Err(RerouteError::Internal(format!(
                        "freed pair ({u},{v}) path meets the system at {w}"
                    )));
                }
            }
        }
    }
    // moreover variant additionally keeps paths into the new origins
    // internally clean
    if let Some(op) = &r.o_prime {
        for &u in &r.s_prime {
            for &v in op {
                if u == v {
                    continue;
                }
                let p = f.path(u, v).vertices();
                for &w in &p[..p.len() - 1] {
                    if hat_set.contains(w) {
                        return Err(RerouteError::Internal(format!(
                            "path ({u},{v}) into origin {v} meets the system at {w}"
                        )));
                    }
                }
            }
        }
    }
    if r.s_prime.len() < freed_min {
        return Err(RerouteError::NotFreed {
            found: r.s_prime.len(),
            need: freed_min,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digraph::random_semicomplete;
    use crate::subdivision::{find_subdivision, SubdivisionSearch};

    /// host with a bidirected clique planted on 0..s, everything else a
    /// seeded tournament
    fn planted_host(n: usize, s: usize, seed: u64) -> Digraph {
        let base = random_semicomplete(n, seed, 0.0);
        let mut arcs: Vec<(usize, usize)> = Vec::new();
        for u in 0..n {
            for v in base.out_neighbors(u) {
                arcs.push((u, v));
            }
        }
        for u in 0..s {
            for v in 0..s {
                if u != v {
                    arcs.push((u, v));
                }
            }
        }
        Digraph::from_arcs(n, arcs).unwrap()
    }

    fn subdivision_on(d: &Digraph, hi: usize, s: usize, ell: usize) -> Subdivision {
        let host: Vec<usize> = (0..hi).collect();
        match find_subdivision(d, &host, s, ell).unwrap() {
            SubdivisionSearch::Complete(f) => f,
            SubdivisionSearch::Blocked { pair, .. } => panic!("blocked at {pair:?}"),
        }
    }

    #[test]
    fn untouched_system_passes_through() {
        // Q lives entirely outside the subdivision: every path is kept by
        // the untouched rule and the whole branch set is freed.
        let d = planted_host(16, 4, 3);
        let f = subdivision_on(&d, 4, 4, 0);
        let mut q_paths = Vec::new();
        // single-arc paths among vertices 8..16, clear of 0..4
        for (a, b) in [(8, 9), (10, 11)] {
            let (a, b) = if d.has_arc(a, b) { (a, b) } else { (b, a) };
            q_paths.push(Path(vec![a, b]));
        }
        let o: Vec<usize> = q_paths.iter().map(|p| p.start()).collect();
        let y: Vec<usize> = q_paths.iter().map(|p| p.end()).collect();
        let q = PathSystem::new(q_paths);
        let r = free_subdivision(&d, &f, &q, &o, &y, 4, RerouteVariant::Standard).unwrap();
        assert!(r.trace.iter().all(|t| t.rule == ReconnectRule::Full));
        assert_eq!(r.s_prime, f.branch);
        for (orig, new) in q.paths.iter().zip(&r.q_hat.paths) {
            assert_eq!(orig.vertices(), new.vertices());
        }
    }

    #[test]
    fn single_path_through_clique_reroutes() {
        // One path traversing a subdivision path of the planted clique
        // (s = 4, direct arcs): the rebuild uses the branch-pair rule and
        // the two untouched branch vertices stay freed.
        let d = planted_host(16, 4, 11);
        let f = subdivision_on(&d, 4, 4, 0);
        // force a path o -> 0 -> 1 -> y with o, y off the subdivision
        let o = (4..16)
            .find(|&v| d.has_arc(v, 0))
            .expect("in-neighbor of 0 exists");
        let y = (4..16)
            .find(|&v| v != o && d.has_arc(1, v))
            .expect("out-neighbor of 1 exists");
        let q = PathSystem::new(vec![Path(vec![o, 0, 1, y])]);
        q.validate(&d).unwrap();
        let r = free_subdivision(&d, &f, &q, &[o], &[y], 2, RerouteVariant::Standard).unwrap();
        assert_eq!(r.trace[0].rule, ReconnectRule::BranchPair);
        assert_eq!(r.s_prime.len(), 2);
        r.q_hat.validate(&d).unwrap();
    }

    #[test]
    fn moreover_origin_moves_into_branch_set() {
        let d = planted_host(18, 4, 29);
        let f = subdivision_on(&d, 4, 4, 0);
        // a path from branch vertex 0 wandering over branch vertices 1, 2
        let y = (4..18)
            .find(|&v| d.has_arc(2, v))
            .expect("out-neighbor of 2");
        let q = PathSystem::new(vec![Path(vec![0, 1, 2, y])]);
        q.validate(&d).unwrap();
        let r = free_subdivision(&d, &f, &q, &[0], &[y], 2, RerouteVariant::Moreover).unwrap();
        let op = r.o_prime.clone().unwrap();
        assert_eq!(op.len(), 1);
        // the new origin is the last branch vertex the path crosses
        assert_eq!(op[0], 2);
        assert_eq!(r.q_hat.paths[0].vertices(), &[2, y]);
        assert_eq!(r.s_prime, vec![0, 1, 3]);
    }

    #[test]
    fn moreover_rejects_origins_off_branch() {
        let d = planted_host(16, 4, 3);
        let f = subdivision_on(&d, 4, 4, 0);
        let y = (4..16).find(|&v| d.has_arc(0, v)).unwrap();
        let o = (4..16).find(|&v| v != y && d.has_arc(v, 0)).unwrap();
        let q = PathSystem::new(vec![Path(vec![o, 0, y])]);
        assert!(matches!(
            free_subdivision(&d, &f, &q, &[o], &[y], 0, RerouteVariant::Moreover),
            Err(RerouteError::OriginOutsideBranch(_))
        ));
    }

    #[test]
    fn terminal_on_subdivision_rejected() {
        let d = planted_host(16, 4, 3);
        let f = subdivision_on(&d, 4, 4, 0);
        let o = (4..16).find(|&v| d.has_arc(v, 0)).unwrap();
        let q = PathSystem::new(vec![Path(vec![o, 0])]);
        assert!(matches!(
            free_subdivision(&d, &f, &q, &[o], &[0], 0, RerouteVariant::Standard),
            Err(RerouteError::TerminalOnSubdivision(0))
        ));
    }

    /// Claim checks at the fixed point: prefixes avoid subdivision paths
    /// with unclaimed terminal vertices (except at a self-claimed source),
    /// and suffixes avoid subdivision paths with both endpoints unclaimed.
    #[test]
    fn fixed_point_claims_hold_on_random_fixtures() {
        let mut tested = 0;
        for seed in 0..60u64 {
            let d = planted_host(22, 4, 1000 + seed);
            let f = subdivision_on(&d, 4, 4, 0);
            // route two disjoint paths from high vertices across the graph
            let inst = crate::oracle::LinkageInstance::new(vec![12, 13], vec![20, 21]).unwrap();
            let sys = match crate::oracle::find_linkage_exact(&d, &inst, 2_000_000).unwrap() {
                crate::oracle::LinkageOutcome::Feasible(sys) => sys,
                _ => continue,
            };
            let o = vec![12, 13];
            let y = vec![20, 21];
            let r = match free_subdivision(&d, &f, &sys, &o, &y, 0, RerouteVariant::Standard) {
                Ok(r) => r,
                Err(RerouteError::Reconnect(_)) => continue,
                Err(e) => panic!("seed {seed}: {e}"),
            };
            tested += 1;
            let pre_used: Vec<usize> = r.trace.iter().filter_map(|t| t.pre_useful).collect();
            let post_used: Vec<usize> = r.trace.iter().filter_map(|t| t.post_useful).collect();
            for t in &r.trace {
                let prefix = &sys.paths[t.index].vertices()[..=t.prefix_cut];
                for (&(u, v), p) in &f.paths {
                    if !pre_used.contains(&v) {
                        for &w in p.vertices() {
                            if prefix.contains(&w) {
                                assert_eq!(w, u, "seed {seed}: prefix hits interior/terminal");
                                assert!(
                                    pre_used.contains(&u),
                                    "seed {seed}: hit at unclaimed source"
                                );
                            }
                        }
                    }
                    if !pre_used.contains(&u)
                        && !pre_used.contains(&v)
                        && !post_used.contains(&u)
                        && !post_used.contains(&v)
                    {
                        let suffix = &sys.paths[t.index].vertices()[t.suffix_cut..];
                        for &w in p.vertices() {
                            assert!(
                                !suffix.contains(&w),
                                "seed {seed}: suffix hits a doubly-unclaimed path"
                            );
                        }
                    }
                }
            }
        }
        assert!(tested >= 20, "only {tested} fixtures exercised");
    }

    #[test]
    fn rerun_on_output_is_stable() {
        // rebuilding an already rebuilt system changes nothing: the cut
        // scans are at a fixed point
        let d = planted_host(20, 4, 77);
        let f = subdivision_on(&d, 4, 4, 0);
        let o = (4..20).find(|&v| d.has_arc(v, 0)).unwrap();
        let y = (4..20).find(|&v| v != o && d.has_arc(1, v)).unwrap();
        let q = PathSystem::new(vec![Path(vec![o, 0, 1, y])]);
        let r1 = free_subdivision(&d, &f, &q, &[o], &[y], 0, RerouteVariant::Standard).unwrap();
        let o2: Vec<usize> = r1.q_hat.paths.iter().map(|p| p.start()).collect();
        let y2: Vec<usize> = r1.q_hat.paths.iter().map(|p| p.end()).collect();
        let r2 =
            free_subdivision(&d, &f, &r1.q_hat, &o2, &y2, 0, RerouteVariant::Standard).unwrap();
        // the freed set cannot shrink when rebuilding a clean system
        assert!(r2.s_prime.len() >= r1.s_prime.len());
    }
}
