//! Exact decision/search for k-linkage on a specific terminal tuple by
//! exhaustive pruned search. This is the ground-truth oracle the rest of the
//! crate is checked against: `Infeasible` is only ever returned after the
//! search space has been exhausted, so it doubles as a certificate.

use crate::connectivity::PathSystem;
use crate::digraph::{Digraph, Path};
use crate::vset::VSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("terminals must be distinct, {0} repeats")]
    DuplicateTerminal(usize),
    #[error("terminal {0} out of range")]
    OutOfRange(usize),
    #[error("instance needs at least one pair")]
    Empty,
}

/// The 2k distinct terminals: path i must run from `x[i]` to `y[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkageInstance {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
}

impl LinkageInstance {
    pub fn new(x: Vec<usize>, y: Vec<usize>) -> Result<Self, OracleError> {
        if x.is_empty() || x.len() != y.len() {
            return Err(OracleError::Empty);
        }
        let mut seen = std::collections::BTreeSet::new();
        for &t in x.iter().chain(&y) {
            if !seen.insert(t) {
                return Err(OracleError::DuplicateTerminal(t));
            }
        }
        Ok(LinkageInstance { x, y })
    }

    pub fn k(&self) -> usize {
        self.x.len()
    }

    fn check_range(&self, n: usize) -> Result<(), OracleError> {
        for &t in self.x.iter().chain(&self.y) {
            if t >= n {
                return Err(OracleError::OutOfRange(t));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum LinkageOutcome {
    /// A linkage exists; path i links x_i to y_i.
    Feasible(PathSystem),
    /// Certificate: the search space was exhausted without a linkage.
    Infeasible,
    /// Budget ran out; inconclusive.
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub enum KLinkedOutcome {
    Linked,
    /// First terminal tuple (in enumeration order) admitting no linkage.
    CounterTuple(LinkageInstance),
    BudgetExhausted,
}

struct Search<'a> {
    d: &'a Digraph,
    inst: &'a LinkageInstance,
    /// vertices unavailable to the pair currently being extended
    used: VSet,
    /// per-pair completed path, in pair order
    done: Vec<Option<Vec<usize>>>,
    budget: u64,
    // reusable word buffers for the reachability pruning
    reach: Vec<u64>,
    front: Vec<u64>,
    next: Vec<u64>,
}

enum Step {
    Found,
    Exhausted,
    OutOfBudget,
}

impl<'a> Search<'a> {
    /// Word-parallel residual reachability: whether `target` is reachable
    /// from `from` through vertices not in `used` (the target itself is
    /// always an admissible final hop). When `count` is set, returns the
    /// size of the reached set instead of stopping early.
    fn reach_stats(&mut self, from: usize, target: usize, count: bool) -> (bool, usize) {
        let words = self.used.words().len();
        self.reach.clear();
        self.reach.resize(words, 0);
        self.front.clear();
        self.front.resize(words, 0);
        self.reach[from / 64] |= 1 << (from % 64);
        self.front[from / 64] |= 1 << (from % 64);
        let (tw, tb) = (target / 64, 1u64 << (target % 64));
        if from == target {
            return (true, 1);
        }
        loop {
            self.next.clear();
            self.next.resize(words, 0);
            for w in 0..words {
                let mut bits = self.front[w];
                while bits != 0 {
                    let v = w * 64 + bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    let row = self.d.out_row(v);
                    for (nw, &rw) in row.iter().enumerate() {
                        self.next[nw] |= rw;
                    }
                }
            }
            let used_words = self.used.words();
            let mut any = false;
            let mut hit = false;
            for w in 0..words {
                let mut nw = self.next[w] & !self.reach[w];
                if w == tw && nw & tb != 0 {
                    hit = true;
                    nw |= tb; // the target is always an admissible final hop
                }
                nw &= !used_words[w] | if w == tw { tb } else { 0 };
                self.reach[w] |= nw;
                // never expand onward from the target
                self.next[w] = nw & !(if w == tw { tb } else { 0 });
                any |= self.next[w] != 0;
            }
            if hit && !count {
                return (true, 0);
            }
            if !any {
                let size = self.reach.iter().map(|w| w.count_ones() as usize).sum();
                let reached = self.reach[tw] & tb != 0;
                return (reached || hit, size);
            }
            std::mem::swap(&mut self.front, &mut self.next);
        }
    }

    /// Pick the pending pair with the smallest residual reachability
    /// frontier from its start: first by the number of free first moves,
    /// then by the size of the full reachable set. Routing the most
    /// constricted pair first makes bottleneck instances fail fast.
    fn pick_pair(&mut self) -> Option<usize> {
        let mut best: Option<(usize, usize, usize)> = None;
        for i in 0..self.inst.k() {
            if self.done[i].is_some() {
                continue;
            }
            let start = self.inst.x[i];
            let target = self.inst.y[i];
            let moves = self
                .d
                .out_neighbors(start)
                .filter(|&v| v == target || !self.used.contains(v))
                .count();
            let (_, reach) = self.reach_stats(start, target, true);
            if best.map_or(true, |(bm, br, _)| (moves, reach) < (bm, br)) {
                best = Some((moves, reach, i));
            }
        }
        best.map(|(_, _, i)| i)
    }

    fn solve(&mut self) -> Step {
        let Some(pair) = self.pick_pair() else {
            return Step::Found;
        };
        self.extend(pair, self.inst.x[pair], vec![self.inst.x[pair]])
    }

    fn extend(&mut self, pair: usize, tip: usize, path: Vec<usize>) -> Step {
        if self.budget == 0 {
            return Step::OutOfBudget;
        }
        self.budget -= 1;

        let target = self.inst.y[pair];
        // Prune: target must be reachable from the tip, and every other
        // pending pair must remain connected from its start.
        if !self.reach_stats(tip, target, false).0 {
            return Step::Exhausted;
        }
        for j in 0..self.inst.k() {
            if j == pair || self.done[j].is_some() {
                continue;
            }
            if !self.reach_stats(self.inst.x[j], self.inst.y[j], false).0 {
                return Step::Exhausted;
            }
        }

        let nbrs: Vec<usize> = self.d.out_neighbors(tip).collect();
        for v in nbrs {
            if v == target {
                // Complete this pair and recurse into the next. The target
                // stays marked used: terminals are reserved for good.
                self.done[pair] = Some({
                    let mut p = path.clone();
                    p.push(v);
                    p
                });
                match self.solve() {
                    Step::Found => return Step::Found,
                    Step::OutOfBudget => return Step::OutOfBudget,
                    Step::Exhausted => {}
                }
                self.done[pair] = None;
                continue;
            }
            if self.used.contains(v) {
                continue;
            }
            self.used.insert(v);
            let mut p = path.clone();
            p.push(v);
            match self.extend(pair, v, p) {
                Step::Found => return Step::Found,
                Step::OutOfBudget => return Step::OutOfBudget,
                Step::Exhausted => {}
            }
            self.used.remove(v);
        }
        Step::Exhausted
    }
}

/// Search for k vertex-disjoint paths linking `x[i]` to `y[i]`. Depth-first
/// path extension, one pair completed at a time; the next pair to route is
/// the one with the smallest residual reachability frontier, neighbors are
/// expanded in ascending id order, and any state in which some pending pair
/// is disconnected in the residual digraph is pruned. `budget` caps node
/// expansions.
pub fn find_linkage_exact(
    d: &Digraph,
    inst: &LinkageInstance,
    budget: u64,
) -> Result<LinkageOutcome, OracleError> {
    find_linkage_counted(d, inst, budget).map(|(o, _)| o)
}

/// As `find_linkage_exact`, additionally reporting the unspent budget.
fn find_linkage_counted(
    d: &Digraph,
    inst: &LinkageInstance,
    budget: u64,
) -> Result<(LinkageOutcome, u64), OracleError> {
    inst.check_range(d.n())?;
    // Terminals of every pair are reserved: no other path may cross them.
    let mut used = VSet::new(d.n());
    for &t in inst.x.iter().chain(&inst.y) {
        used.insert(t);
    }
    let mut search = Search {
        d,
        inst,
        used,
        done: vec![None; inst.k()],
        budget,
        reach: Vec::new(),
        front: Vec::new(),
        next: Vec::new(),
    };
    let outcome = match search.solve() {
        Step::Found => {
            let paths: Vec<Path> = search
                .done
                .iter()
                .map(|p| Path(p.clone().expect("all pairs complete")))
                .collect();
            let sys = PathSystem::new(paths);
            sys.validate(d).expect("oracle output must validate");
            for (i, p) in sys.paths.iter().enumerate() {
                assert_eq!(p.start(), inst.x[i]);
                assert_eq!(p.end(), inst.y[i]);
            }
            LinkageOutcome::Feasible(sys)
        }
        Step::Exhausted => LinkageOutcome::Infeasible,
        Step::OutOfBudget => LinkageOutcome::BudgetExhausted,
    };
    Ok((outcome, search.budget))
}

/// Decide whether `d` is k-linked by enumerating every ordered 2k-tuple of
/// distinct terminals and running the exact search on each. Returns the
/// first failing tuple, if any. The budget is shared across the whole
/// enumeration.
pub fn is_k_linked(d: &Digraph, k: usize, budget: u64) -> Result<KLinkedOutcome, OracleError> {
    if d.n() < 2 * k || k == 0 {
        return Err(OracleError::Empty);
    }
    let mut remaining = budget;
    let mut tuple = Vec::with_capacity(2 * k);
    let mut in_use = vec![false; d.n()];

    fn enumerate(
        d: &Digraph,
        k: usize,
        tuple: &mut Vec<usize>,
        in_use: &mut Vec<bool>,
        remaining: &mut u64,
    ) -> Result<Option<LinkageInstance>, OracleError> {
        if tuple.len() == 2 * k {
            let inst = LinkageInstance::new(tuple[..k].to_vec(), tuple[k..].to_vec())
                .expect("enumeration produces distinct terminals");
            let (outcome, left) = find_linkage_counted(d, &inst, *remaining)?;
            *remaining = left;
            match outcome {
                LinkageOutcome::Feasible(_) => return Ok(None),
                LinkageOutcome::Infeasible => return Ok(Some(inst)),
                LinkageOutcome::BudgetExhausted => {
                    *remaining = 0;
                    return Ok(None);
                }
            }
        }
        for v in 0..d.n() {
            if in_use[v] {
                continue;
            }
            in_use[v] = true;
            tuple.push(v);
            let r = enumerate(d, k, tuple, in_use, remaining)?;
            tuple.pop();
            in_use[v] = false;
            if r.is_some() || *remaining == 0 {
                return Ok(r);
            }
        }
        Ok(None)
    }

    let hit = enumerate(d, k, &mut tuple, &mut in_use, &mut remaining)?;
    if let Some(inst) = hit {
        return Ok(KLinkedOutcome::CounterTuple(inst));
    }
    if remaining == 0 {
        return Ok(KLinkedOutcome::BudgetExhausted);
    }
    Ok(KLinkedOutcome::Linked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digraph::{
        circulant_tournament, random_digraph, transitive_tournament,
    };

    const BIG: u64 = u64::MAX;

    #[test]
    fn single_pair_on_cycle() {
        let c3 = circulant_tournament(3).unwrap();
        let inst = LinkageInstance::new(vec![0], vec![2]).unwrap();
        match find_linkage_exact(&c3, &inst, BIG).unwrap() {
            LinkageOutcome::Feasible(sys) => {
                assert_eq!(sys.paths[0].start(), 0);
                assert_eq!(sys.paths[0].end(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn direct_arcs_in_tt4() {
        let t4 = transitive_tournament(4);
        let inst = LinkageInstance::new(vec![0, 1], vec![3, 2]).unwrap();
        match find_linkage_exact(&t4, &inst, BIG).unwrap() {
            LinkageOutcome::Feasible(sys) => {
                sys.validate(&t4).unwrap();
                assert_eq!(sys.paths[0].end(), 3);
                assert_eq!(sys.paths[1].end(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_terminals_rejected() {
        assert!(LinkageInstance::new(vec![0, 1], vec![1, 2]).is_err());
        assert!(LinkageInstance::new(vec![0], vec![0]).is_err());
    }

    #[test]
    fn budget_semantics() {
        let c5 = circulant_tournament(5).unwrap();
        let inst = LinkageInstance::new(vec![0, 1], vec![2, 3]).unwrap();
        match find_linkage_exact(&c5, &inst, 0).unwrap() {
            LinkageOutcome::BudgetExhausted => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn k_linked_small() {
        // complete digraph on 4 vertices is 2-linked (direct arcs suffice)
        let mut k4 = Digraph::empty(4);
        for u in 0..4 {
            for v in 0..4 {
                if u != v {
                    k4.add_arc(u, v).unwrap();
                }
            }
        }
        assert!(matches!(
            is_k_linked(&k4, 2, BIG).unwrap(),
            KLinkedOutcome::Linked
        ));

        let t3 = transitive_tournament(3);
        match is_k_linked(&t3, 1, BIG).unwrap() {
            KLinkedOutcome::CounterTuple(inst) => {
                // enumeration order finds (x=1, y=0) first: no backward path
                assert_eq!((inst.x[0], inst.y[0]), (1, 0));
            }
            other => panic!("{other:?}"),
        }

        let c3 = circulant_tournament(3).unwrap();
        assert!(matches!(
            is_k_linked(&c3, 1, BIG).unwrap(),
            KLinkedOutcome::Linked
        ));
    }

    #[test]
    fn agrees_with_reachability_for_k1() {
        use crate::connectivity::reachable_from;
        for seed in 0..40u64 {
            let d = random_digraph(8, seed, 0.25);
            for x in 0..3 {
                for y in 5..8 {
                    let inst = LinkageInstance::new(vec![x], vec![y]).unwrap();
                    let feasible = matches!(
                        find_linkage_exact(&d, &inst, BIG).unwrap(),
                        LinkageOutcome::Feasible(_)
                    );
                    let reach = reachable_from(&d, x, None).contains(y);
                    assert_eq!(feasible, reach, "seed {seed} {x}->{y}");
                }
            }
        }
    }

    /// Independent enumeration of vertex-disjoint path families: extends the
    /// first incomplete pair one arc at a time with no pruning at all. All
    /// terminals are reserved up front; a pair's own target is always a
    /// legal final hop.
    fn linkage_exists_brute(d: &Digraph, inst: &LinkageInstance) -> bool {
        fn go(
            d: &Digraph,
            inst: &LinkageInstance,
            used: &mut Vec<bool>,
            tips: &mut Vec<usize>,
            pair: usize,
        ) -> bool {
            if pair == inst.k() {
                return true;
            }
            let tip = tips[pair];
            for v in d.out_neighbors(tip) {
                if v == inst.y[pair] {
                    let old = tips[pair];
                    tips[pair] = v;
                    if go(d, inst, used, tips, pair + 1) {
                        return true;
                    }
                    tips[pair] = old;
                    continue;
                }
                if used[v] {
                    continue;
                }
                used[v] = true;
                let old = tips[pair];
                tips[pair] = v;
                if go(d, inst, used, tips, pair) {
                    return true;
                }
                tips[pair] = old;
                used[v] = false;
            }
            false
        }
        let mut used = vec![false; d.n()];
        for &t in inst.x.iter().chain(&inst.y) {
            used[t] = true;
        }
        let mut tips = inst.x.clone();
        go(d, inst, &mut used, &mut tips, 0)
    }

    #[test]
    fn infeasible_matches_brute_force_enumeration() {
        let mut checked = 0;
        for seed in 0..60u64 {
            let d = random_digraph(7, seed, 0.3);
            let inst = LinkageInstance::new(vec![0, 1], vec![5, 6]).unwrap();
            let exact = find_linkage_exact(&d, &inst, BIG).unwrap();
            let brute = linkage_exists_brute(&d, &inst);
            match exact {
                LinkageOutcome::Feasible(sys) => {
                    sys.validate(&d).unwrap();
                    assert!(brute, "seed {seed}");
                }
                LinkageOutcome::Infeasible => {
                    assert!(!brute, "seed {seed}");
                    checked += 1;
                }
                LinkageOutcome::BudgetExhausted => panic!("budget cannot exhaust here"),
            }
        }
        assert!(checked > 5, "want a meaningful number of infeasible cases");
    }
}
