//! Deterministic generator and verifier of a family of highly connected
//! tournaments with large minimum semidegree that carry a designated
//! terminal tuple admitting no linkage.
//!
//! The tournament `D(k, m)` on `(k+1)m + 2k` vertices is assembled from two
//! sub-tournaments `D1`, `D2` and a terminal class `X`. `D1` holds the head
//! classes `W`, `S`, `X'`, `Y` around an order-`m` rotational core; `D2` is a
//! chain of `k` blocks of order `m` (backward-path tournaments plus one
//! rotational block) glued by the arc bundles `E1`..`E4`. The verifier
//! recomputes semidegree, exact vertex connectivity, and runs the exhaustive
//! linkage oracle on the designated tuple.

use crate::connectivity::{vertex_connectivity, PathSystem};
use crate::digraph::{
    backward_path_tournament, circulant_tournament, hamiltonian_path, Digraph, GraphError,
};
use crate::oracle::{find_linkage_exact, LinkageInstance, LinkageOutcome};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CounterexampleError {
    #[error("block size m must be odd, got {0}")]
    EvenM(usize),
    #[error("need m >= 10k, got m={m}, k={k}")]
    MTooSmall { m: usize, k: usize },
    #[error("need k >= 2, got {0}")]
    KTooSmall(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Which vertex of the rotational block is withheld from the out-neighborhood
/// of the terminals. Two natural index choices exist and the verifier is run
/// under both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PkExclusion {
    /// Exclude the k-th vertex of the last block's Hamiltonian labeling.
    #[default]
    NearHead,
    /// Exclude the (m-k+1)-th vertex instead.
    NearTail,
}

/// Named vertex classes and arc bundles of the construction. Blocks are held
/// in Hamiltonian-path order, so `blocks[i][j]` is the (j+1)-th vertex of
/// block i+1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterexampleLayout {
    pub k: usize,
    pub m: usize,
    /// half-index `h = floor(m/2)`; the "second half" of block 2 is the
    /// label range `h+1 ..= m`.
    pub h: usize,
    pub variant: PkExclusion,
    pub w: Vec<usize>,
    pub s: Vec<usize>,
    /// `x'_1 .. x'_k`
    pub x_prime: Vec<usize>,
    /// `y_1 .. y_k`
    pub y: Vec<usize>,
    /// `x_1 .. x_k`; empty for the standalone head tournament
    pub x: Vec<usize>,
    /// blocks `P^1 .. P^k` in Hamiltonian-path order; empty for the head
    pub blocks: Vec<Vec<usize>>,
    pub e1: Vec<(usize, usize)>,
    pub e2: Vec<(usize, usize)>,
    pub e3: Vec<(usize, usize)>,
    pub e4: Vec<(usize, usize)>,
}

impl CounterexampleLayout {
    pub fn designated_instance(&self) -> LinkageInstance {
        LinkageInstance::new(self.x.clone(), self.y.clone()).expect("terminals distinct")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Second-half label range of block 2 as vertex ids.
    pub fn second_half_p2(&self) -> Vec<usize> {
        self.blocks[1][self.h..].to_vec()
    }
}

fn check_params(k: usize, m: usize) -> Result<(), CounterexampleError> {
    if k < 2 {
        return Err(CounterexampleError::KTooSmall(k));
    }
    if m % 2 == 0 {
        return Err(CounterexampleError::EvenM(m));
    }
    if m < 10 * k {
        return Err(CounterexampleError::MTooSmall { m, k });
    }
    Ok(())
}

/// The head tournament on `m + k` vertices: an order-`m` rotational core on
/// `W ∪ S ∪ {x'_1} ∪ Y_2`, a transitive tail `X'_2`, and the bundles
/// `W ∪ {x'_1} ∪ Y_2 -> X'_2`, `X'_2 -> {y_1} ∪ S`, `S -> y_1`,
/// `y_1 -> {x'_1} ∪ W ∪ Y_2`.
pub fn build_d1(k: usize, m: usize) -> Result<(Digraph, CounterexampleLayout), CounterexampleError> {
    check_params(k, m)?;
    // Core order: W (m-2k+1), S (k-1), x'_1 (1), Y_2 (k-1) = m vertices,
    // laid out consecutively and wired as the rotational tournament.
    // Then X'_2 (k-1), then y_1.
    let w: Vec<usize> = (0..m - 2 * k + 1).collect();
    let s: Vec<usize> = (m - 2 * k + 1..m - k).collect();
    let xp1 = m - k;
    let y2: Vec<usize> = (m - k + 1..m).collect();
    let xp2: Vec<usize> = (m..m + k - 1).collect();
    let y1 = m + k - 1;
    let n = m + k;

    let mut d = Digraph::empty(n);
    // rotational core over the first m vertices
    let core = circulant_tournament(m)?;
    for u in 0..m {
        for v in core.out_neighbors(u) {
            d.add_arc(u, v)?;
        }
    }
    // X'_2 internal: transitive by ascending index
    for i in 0..xp2.len() {
        for j in (i + 1)..xp2.len() {
            d.add_arc(xp2[i], xp2[j])?;
        }
    }
    // W ∪ {x'_1} ∪ Y_2 -> X'_2
    for &u in w.iter().chain(std::iter::once(&xp1)).chain(&y2) {
        for &v in &xp2 {
            d.add_arc(u, v)?;
        }
    }
    // X'_2 -> {y_1} ∪ S
    for &u in &xp2 {
        d.add_arc(u, y1)?;
        for &v in &s {
            d.add_arc(u, v)?;
        }
    }
    // S -> y_1
    for &u in &s {
        d.add_arc(u, y1)?;
    }
    // y_1 -> {x'_1} ∪ W ∪ Y_2
    d.add_arc(y1, xp1)?;
    for &v in w.iter().chain(&y2) {
        d.add_arc(y1, v)?;
    }

    let mut x_prime = vec![xp1];
    x_prime.extend(&xp2);
    let mut y = vec![y1];
    y.extend(&y2);
    let layout = CounterexampleLayout {
        k,
        m,
        h: m / 2,
        variant: PkExclusion::default(),
        w,
        s,
        x_prime,
        y,
        x: vec![],
        blocks: vec![],
        e1: vec![],
        e2: vec![],
        e3: vec![],
        e4: vec![],
    };
    Ok((d, layout))
}

/// The block chain on `k*m` vertices: blocks 1..k-1 are backward-path
/// tournaments, block k is rotational with its vertices relabeled along a
/// computed Hamiltonian path. Bundle `E1` sends the i-th head vertex of
/// block k to the head of block i; bundle `E2` makes the second half of
/// block 2 dominate all of block 1; every other cross arc runs forward by
/// block order.
pub fn build_d2(k: usize, m: usize) -> Result<(Digraph, CounterexampleLayout), CounterexampleError> {
    check_params(k, m)?;
    let h = m / 2;
    let n = k * m;
    let block_base = |i: usize| i * m; // block index 0-based

    // Hamiltonian-path labeling per block. Backward blocks use the identity;
    // the rotational block is relabeled along its computed Hamiltonian path.
    let mut blocks: Vec<Vec<usize>> = Vec::with_capacity(k);
    let mut d = Digraph::empty(n);
    for i in 0..k {
        let base = block_base(i);
        if i + 1 < k {
            let b = backward_path_tournament(m);
            for u in 0..m {
                for v in b.out_neighbors(u) {
                    d.add_arc(base + u, base + v)?;
                }
            }
            blocks.push((base..base + m).collect());
        } else {
            let c = circulant_tournament(m)?;
            let ham = hamiltonian_path(&c)?;
            for u in 0..m {
                for v in c.out_neighbors(u) {
                    d.add_arc(base + u, base + v)?;
                }
            }
            blocks.push(ham.vertices().iter().map(|&v| base + v).collect());
        }
    }

    // E1: k-th block's i-th path vertex -> head of block i, i in [k-1]
    let e1: Vec<(usize, usize)> = (0..k - 1)
        .map(|i| (blocks[k - 1][i], blocks[i][0]))
        .collect();
    // E2: second half of block 2 -> all of block 1
    let mut e2 = Vec::with_capacity((m - h) * m);
    for j in h..m {
        for l in 0..m {
            e2.push((blocks[1][j], blocks[0][l]));
        }
    }
    for &(u, v) in e1.iter().chain(&e2) {
        d.add_arc(u, v)?;
    }
    // remaining cross arcs forward by block order
    let reversed: std::collections::BTreeSet<(usize, usize)> =
        e1.iter().chain(&e2).map(|&(u, v)| (v, u)).collect();
    for i in 0..k {
        for j in (i + 1)..k {
            for u in block_base(i)..block_base(i) + m {
                for v in block_base(j)..block_base(j) + m {
                    if !reversed.contains(&(u, v)) {
                        d.add_arc(u, v)?;
                    }
                }
            }
        }
    }

    let layout = CounterexampleLayout {
        k,
        m,
        h,
        variant: PkExclusion::default(),
        w: vec![],
        s: vec![],
        x_prime: vec![],
        y: vec![],
        x: vec![],
        blocks,
        e1,
        e2,
        e3: vec![],
        e4: vec![],
    };
    Ok((d, layout))
}

/// Assemble the full tournament on `(k+1)m + 2k` vertices: the head, the
/// block chain, and the terminal class `X` with its crossing bundles.
/// Returns the digraph, the designated terminal tuple, and the layout.
pub fn build_counterexample(
    k: usize,
    m: usize,
    variant: PkExclusion,
) -> Result<(Digraph, LinkageInstance, CounterexampleLayout), CounterexampleError> {
    check_params(k, m)?;
    let h = m / 2;
    let (d1, l1) = build_d1(k, m)?;
    let (d2, l2) = build_d2(k, m)?;
    let off2 = d1.n(); // m + k
    let off_x = off2 + d2.n(); // m + k + k*m
    let n = off_x + k;

    let mut d = Digraph::empty(n);
    for u in 0..d1.n() {
        for v in d1.out_neighbors(u) {
            d.add_arc(u, v)?;
        }
    }
    for u in 0..d2.n() {
        for v in d2.out_neighbors(u) {
            d.add_arc(off2 + u, off2 + v)?;
        }
    }

    let blocks: Vec<Vec<usize>> = l2
        .blocks
        .iter()
        .map(|b| b.iter().map(|&v| off2 + v).collect())
        .collect();
    let x: Vec<usize> = (off_x..off_x + k).collect();
    let x_prime = l1.x_prime.clone();
    let y = l1.y.clone();
    let d1_vertices: Vec<usize> = (0..off2).collect();
    let d2_vertices: Vec<usize> = (off2..off_x).collect();

    // X internal: transitive by ascending index.
    for i in 0..k {
        for j in (i + 1)..k {
            d.add_arc(x[i], x[j])?;
        }
    }
    // V(D1) \ Y -> X, except the pair (x_1, x'_1) carries x_1 -> x'_1.
    for &u in &d1_vertices {
        if y.contains(&u) {
            continue;
        }
        for &v in &x {
            if u == x_prime[0] && v == x[0] {
                continue;
            }
            d.add_arc(u, v)?;
        }
    }
    d.add_arc(x[0], x_prime[0])?;
    // X -> Y except the diagonal pairs, which carry y_i -> x_i.
    for i in 0..k {
        for j in 0..k {
            if i == j {
                d.add_arc(y[i], x[i])?;
            } else {
                d.add_arc(x[i], y[j])?;
            }
        }
    }
    // Out-neighborhood of x_i inside the block chain: all of block i minus
    // the excluded rotational vertex and the second half of block 2;
    // everything else in the chain points back at x_i.
    let excluded_pk = match variant {
        PkExclusion::NearHead => blocks[k - 1][k - 1],
        PkExclusion::NearTail => blocks[k - 1][m - k],
    };
    let second_half_p2: Vec<usize> = blocks[1][h..].to_vec();
    for i in 0..k {
        let mut outs = crate::vset::VSet::new(n);
        for &v in &blocks[i] {
            outs.insert(v);
        }
        outs.remove(excluded_pk);
        for &v in &second_half_p2 {
            outs.remove(v);
        }
        for &v in &d2_vertices {
            if outs.contains(v) {
                d.add_arc(x[i], v)?;
            } else {
                d.add_arc(v, x[i])?;
            }
        }
    }
    // E3: last path vertex of block i -> x'_i. E4: second half of block 2 -> y_1.
    let e3: Vec<(usize, usize)> = (0..k).map(|i| (blocks[i][m - 1], x_prime[i])).collect();
    let e4: Vec<(usize, usize)> = second_half_p2.iter().map(|&u| (u, y[0])).collect();
    for &(u, v) in e3.iter().chain(&e4) {
        d.add_arc(u, v)?;
    }
    // remaining head-to-chain arcs run from D1 to D2
    let reversed: std::collections::BTreeSet<(usize, usize)> =
        e3.iter().chain(&e4).map(|&(u, v)| (v, u)).collect();
    for &u in &d1_vertices {
        for &v in &d2_vertices {
            if !reversed.contains(&(u, v)) {
                d.add_arc(u, v)?;
            }
        }
    }

    let layout = CounterexampleLayout {
        k,
        m,
        h,
        variant,
        w: l1.w.clone(),
        s: l1.s.clone(),
        x_prime,
        y,
        x,
        blocks,
        e1: l2.e1.iter().map(|&(u, v)| (off2 + u, off2 + v)).collect(),
        e2: l2.e2.iter().map(|&(u, v)| (off2 + u, off2 + v)).collect(),
        e3,
        e4,
    };
    let inst = layout.designated_instance();
    debug_assert!(d.is_tournament());
    Ok((d, inst, layout))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Outcome of the three-part verification, plus an optional construction
/// match against a regenerated reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub k: usize,
    pub m: usize,
    pub variant: PkExclusion,
    /// exact minimum semidegree and the required floor
    pub semidegree: usize,
    pub semidegree_required: usize,
    pub semidegree_verdict: Verdict,
    /// exact vertex connectivity and the required floor
    pub connectivity: usize,
    pub connectivity_required: usize,
    pub connectivity_verdict: Verdict,
    /// linkage check on the designated tuple: pass means no linkage exists
    pub linkage_verdict: Verdict,
    /// present when the oracle found a linkage (refuting non-linkedness)
    pub linkage_witness: Option<Vec<Vec<usize>>>,
    /// input matches the regenerated construction byte-for-byte
    pub construction_verdict: Option<Verdict>,
    pub overall: Verdict,
}

impl VerificationReport {
    fn combine(&mut self) {
        let verdicts = [
            Some(self.semidegree_verdict),
            Some(self.connectivity_verdict),
            Some(self.linkage_verdict),
            self.construction_verdict,
        ];
        let vs: Vec<Verdict> = verdicts.into_iter().flatten().collect();
        self.overall = if vs.contains(&Verdict::Fail) {
            Verdict::Fail
        } else if vs.contains(&Verdict::Inconclusive) {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        };
    }
}

/// Verify the three claims on a built instance: minimum semidegree at least
/// `floor(m/2)`, vertex connectivity at least `2k`, and no linkage on the
/// designated tuple. Budget exhaustion in the third check yields an
/// inconclusive verdict, not a failure. When `check_construction` is set the
/// digraph is also compared against a regenerated reference.
pub fn verify_counterexample(
    d: &Digraph,
    inst: &LinkageInstance,
    layout: &CounterexampleLayout,
    budget: u64,
    check_construction: bool,
) -> VerificationReport {
    let (k, m) = (layout.k, layout.m);
    let (_, _, d0) = d.semidegree();
    let semidegree_required = m / 2;
    let kappa = vertex_connectivity(d).unwrap_or(0);
    let connectivity_required = 2 * k;

    let (linkage_verdict, linkage_witness) = match find_linkage_exact(d, inst, budget) {
        Ok(LinkageOutcome::Infeasible) => (Verdict::Pass, None),
        Ok(LinkageOutcome::Feasible(sys)) => (
            Verdict::Fail,
            Some(sys.paths.iter().map(|p| p.vertices().to_vec()).collect()),
        ),
        Ok(LinkageOutcome::BudgetExhausted) => (Verdict::Inconclusive, None),
        Err(_) => (Verdict::Fail, None),
    };

    let construction_verdict = if check_construction {
        Some(
            match build_counterexample(k, m, layout.variant) {
                Ok((reference, _, _)) if &reference == d => Verdict::Pass,
                _ => Verdict::Fail,
            },
        )
    } else {
        None
    };

    let mut report = VerificationReport {
        k,
        m,
        variant: layout.variant,
        semidegree: d0,
        semidegree_required,
        semidegree_verdict: if d0 >= semidegree_required {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        connectivity: kappa,
        connectivity_required,
        connectivity_verdict: if kappa >= connectivity_required {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        linkage_verdict,
        linkage_witness,
        construction_verdict,
        overall: Verdict::Pass,
    };
    report.combine();
    report
}

/// Validated linkage witness for a designated tuple, if one exists within
/// the budget. Exposed for harnesses that want the paths themselves.
pub fn linkage_witness(d: &Digraph, inst: &LinkageInstance, budget: u64) -> Option<PathSystem> {
    match find_linkage_exact(d, inst, budget) {
        Ok(LinkageOutcome::Feasible(sys)) => Some(sys),
        _ => None,
    }
}
