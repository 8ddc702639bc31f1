//! Branching heuristics: DLCS, the multiplicative VSADS variant, and
//! tree-decomposition guidance that can be computed once and reused across
//! a whole sequence of formulas.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::formula::{ClauseList, Lit, PrimalGraph, Var};

/// Default weight of the structural term in hybrid scores.
pub const DEFAULT_TD_WEIGHT: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Heuristic {
    Dlcs,
    Vsads,
}

impl Heuristic {
    pub const ALL: [Heuristic; 2] = [Heuristic::Dlcs, Heuristic::Vsads];
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Heuristic::Dlcs => "dlcs",
            Heuristic::Vsads => "vsads",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TdMode {
    Off,
    /// Compute a decomposition for the first counted formula and keep
    /// using it for later ones.
    Shared,
}

impl TdMode {
    pub const ALL: [TdMode; 2] = [TdMode::Off, TdMode::Shared];
}

impl fmt::Display for TdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TdMode::Off => "off",
            TdMode::Shared => "shared",
        })
    }
}

/// What to do when the shared decomposition no longer covers the formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TdStaleness {
    /// Keep it; uncovered variables get the lowest structural priority.
    Keep,
    /// Recompute from the current primal graph.
    Recompute,
}

/// Per-variable conflict participation counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConflictCounts {
    counts: HashMap<Var, u64>,
}

impl ConflictCounts {
    pub fn new() -> ConflictCounts {
        ConflictCounts::default()
    }

    pub fn get(&self, var: Var) -> u64 {
        self.counts.get(&var).copied().unwrap_or(0)
    }

    /// Every variable of the falsified clause participated.
    pub fn record_conflict(&mut self, clause: &[Lit]) {
        let mut last = None;
        for l in clause {
            if last != Some(l.var()) {
                *self.counts.entry(l.var()).or_insert(0) += 1;
                last = Some(l.var());
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn clear(&mut self) {
        self.counts.clear();
    }
}

/// Number of clauses of the component containing `v`.
pub fn dlcs_score(clauses: &ClauseList, v: Var) -> u64 {
    clauses
        .iter()
        .filter(|c| c.iter().any(|l| l.var() == v))
        .count() as u64
}

pub fn vsads_score(clauses: &ClauseList, v: Var, conflicts: &ConflictCounts) -> u64 {
    dlcs_score(clauses, v) * (1 + conflicts.get(v))
}

/// DLCS scores of all variables, ascending by variable. Clause literals are
/// sorted, so a variable's two literals are adjacent.
fn occurrence_scores(clauses: &ClauseList) -> Vec<(Var, u64)> {
    let mut vars: Vec<Var> = Vec::with_capacity(clauses.num_lits());
    for c in clauses.iter() {
        let mut last = None;
        for l in c {
            if last != Some(l.var()) {
                vars.push(l.var());
                last = Some(l.var());
            }
        }
    }
    vars.sort_unstable();
    let mut out: Vec<(Var, u64)> = Vec::new();
    for v in vars {
        match out.last_mut() {
            Some((w, n)) if *w == v => *n += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

/// Picks the branching variable of a non-empty component.
///
/// Without a decomposition this is the argmax of the base score (DLCS, or
/// DLCS × (1 + conflicts) for VSADS). With one, the score becomes
/// `base + weight · baseMax · (D − depth) / (D + 1)` where `D` is the
/// deepest depth among the component's variables; variables the
/// decomposition does not know sit at depth `D`. Ties go to the smallest
/// variable (after DLCS for VSADS).
pub fn select_branch_variable(
    clauses: &ClauseList,
    heuristic: Heuristic,
    conflicts: &ConflictCounts,
    td: Option<&TreeDecomposition>,
    td_weight: u64,
) -> Option<Var> {
    let scores = occurrence_scores(clauses);
    let base = |v: Var, dlcs: u64| -> u64 {
        match heuristic {
            Heuristic::Dlcs => dlcs,
            Heuristic::Vsads => dlcs.saturating_mul(1 + conflicts.get(v)),
        }
    };
    let tie = |dlcs: u64| -> u64 {
        match heuristic {
            Heuristic::Dlcs => 0,
            Heuristic::Vsads => dlcs,
        }
    };
    let pick = |score: &dyn Fn(Var, u64) -> u128| -> Option<Var> {
        let mut best: Option<(u128, u64, Var)> = None;
        for &(v, dlcs) in &scores {
            let s = score(v, dlcs);
            let t = tie(dlcs);
            // strict comparison keeps the smallest variable on ties
            if best.is_none_or(|(bs, bt, _)| (s, t) > (bs, bt)) {
                best = Some((s, t, v));
            }
        }
        best.map(|(_, _, v)| v)
    };
    match td {
        None => pick(&|v, d| base(v, d) as u128),
        Some(td) => {
            let max_depth = scores
                .iter()
                .filter_map(|&(v, _)| td.depth_of(v))
                .max()
                .unwrap_or(0) as u128;
            let base_max = scores.iter().map(|&(v, d)| base(v, d)).max().unwrap_or(0) as u128;
            let weight = td_weight as u128;
            pick(&|v, d| {
                let depth = td.depth_of(v).map_or(max_depth, |x| x as u128);
                base(v, d) as u128 * (max_depth + 1) + weight * base_max * (max_depth - depth)
            })
        }
    }
}

/// A rooted tree decomposition of a primal graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDecomposition {
    bags: Vec<Vec<Var>>,
    parent: Vec<Option<usize>>,
    bag_depth: Vec<u32>,
    depth_of: HashMap<Var, u32>,
    width: usize,
    source_revision: u64,
}

impl TreeDecomposition {
    /// Builds a decomposition from explicit bags and parent links (exactly
    /// one root). Bags are sorted; depths are derived from the links.
    pub fn from_rooted_bags(
        bags: Vec<Vec<Var>>,
        parent: Vec<Option<usize>>,
        source_revision: u64,
    ) -> TreeDecomposition {
        assert_eq!(bags.len(), parent.len());
        let bags: Vec<Vec<Var>> = bags
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b.dedup();
                b
            })
            .collect();
        let mut bag_depth: Vec<Option<u32>> = vec![None; bags.len()];
        for start in 0..bags.len() {
            let mut chain = Vec::new();
            let mut cur = start;
            while bag_depth[cur].is_none() {
                chain.push(cur);
                match parent[cur] {
                    Some(p) => {
                        assert!(chain.len() <= parent.len(), "parent links contain a cycle");
                        cur = p;
                    }
                    None => break,
                }
            }
            // `cur` is either a bag of known depth or the root at the end of the chain
            let first = bag_depth[cur].map_or(0, |d| d + 1);
            for (d, &b) in (first..).zip(chain.iter().rev()) {
                bag_depth[b] = Some(d);
            }
        }
        let bag_depth: Vec<u32> = bag_depth.into_iter().map(|d| d.unwrap()).collect();
        let mut depth_of: HashMap<Var, u32> = HashMap::new();
        for (i, bag) in bags.iter().enumerate() {
            for &v in bag {
                let d = depth_of.entry(v).or_insert(u32::MAX);
                *d = (*d).min(bag_depth[i]);
            }
        }
        let width = bags
            .iter()
            .map(|b| b.len())
            .max()
            .unwrap_or(1)
            .saturating_sub(1);
        TreeDecomposition {
            bags,
            parent,
            bag_depth,
            depth_of,
            width,
            source_revision,
        }
    }

    pub fn bags(&self) -> &[Vec<Var>] {
        &self.bags
    }

    pub fn parent(&self, bag: usize) -> Option<usize> {
        self.parent[bag]
    }

    pub fn bag_depth(&self, bag: usize) -> u32 {
        self.bag_depth[bag]
    }

    /// Largest bag size minus one (0 for an empty decomposition).
    pub fn width(&self) -> usize {
        self.width
    }

    /// Depth of the shallowest bag containing `v`.
    pub fn depth_of(&self, v: Var) -> Option<u32> {
        self.depth_of.get(&v).copied()
    }

    pub fn source_revision(&self) -> u64 {
        self.source_revision
    }

    /// Checks the tree shape and that each variable's bags form a connected
    /// subtree.
    pub fn is_structurally_valid(&self) -> bool {
        let n = self.bags.len();
        if n == 0 || self.parent.len() != n {
            return false;
        }
        let roots = self.parent.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return false;
        }
        for i in 0..n {
            // parent chains must reach the root without cycles
            let mut cur = i;
            let mut steps = 0;
            while let Some(p) = self.parent[cur] {
                cur = p;
                steps += 1;
                if steps > n {
                    return false;
                }
            }
        }
        let mut bags_with: BTreeMap<Var, usize> = BTreeMap::new();
        let mut edges_with: BTreeMap<Var, usize> = BTreeMap::new();
        for (i, bag) in self.bags.iter().enumerate() {
            for &v in bag {
                *bags_with.entry(v).or_insert(0) += 1;
                if let Some(p) = self.parent[i] {
                    if self.bags[p].binary_search(&v).is_ok() {
                        *edges_with.entry(v).or_insert(0) += 1;
                    }
                }
            }
        }
        // a subforest of a tree is connected iff #edges = #nodes - 1
        bags_with
            .iter()
            .all(|(v, &count)| edges_with.get(v).copied().unwrap_or(0) + 1 == count)
    }
}

fn fill_in(adj: &BTreeMap<Var, BTreeSet<Var>>, v: Var) -> usize {
    let nbrs: Vec<Var> = adj[&v].iter().copied().collect();
    let mut missing = 0;
    for (i, a) in nbrs.iter().enumerate() {
        for b in &nbrs[i + 1..] {
            if !adj[a].contains(b) {
                missing += 1;
            }
        }
    }
    missing
}

/// Greedy min-fill decomposition, rooted at a centroid bag.
pub fn compute_tree_decomposition(graph: &PrimalGraph, source_revision: u64) -> TreeDecomposition {
    let mut adj = graph.adjacency();
    if adj.is_empty() {
        return TreeDecomposition {
            bags: vec![Vec::new()],
            parent: vec![None],
            bag_depth: vec![0],
            depth_of: HashMap::new(),
            width: 0,
            source_revision,
        };
    }

    let mut queue: BTreeSet<(usize, Var)> = adj.keys().map(|&v| (fill_in(&adj, v), v)).collect();
    let mut fill_of: HashMap<Var, usize> = queue.iter().map(|&(f, v)| (v, f)).collect();
    let mut position: HashMap<Var, usize> = HashMap::new();
    let mut elim_bags: Vec<(Var, Vec<Var>)> = Vec::new();

    while let Some((_, v)) = queue.pop_first() {
        let nbrs: Vec<Var> = adj[&v].iter().copied().collect();
        position.insert(v, elim_bags.len());
        let mut bag = nbrs.clone();
        bag.push(v);
        bag.sort_unstable();
        elim_bags.push((v, bag));
        for (i, &a) in nbrs.iter().enumerate() {
            adj.get_mut(&a).unwrap().remove(&v);
            for &b in &nbrs[i + 1..] {
                adj.get_mut(&a).unwrap().insert(b);
                adj.get_mut(&b).unwrap().insert(a);
            }
        }
        adj.remove(&v);
        fill_of.remove(&v);
        // fill values can only change within distance two of v
        let mut touched: BTreeSet<Var> = nbrs.iter().copied().collect();
        for a in &nbrs {
            touched.extend(adj[a].iter().copied());
        }
        for u in touched {
            let new = fill_in(&adj, u);
            let old = fill_of.insert(u, new).expect("remaining vertex");
            if old != new {
                queue.remove(&(old, u));
                queue.insert((new, u));
            }
        }
    }

    // bag of v hangs below the bag of its earliest-eliminated later neighbour
    let n = elim_bags.len();
    let mut tree_adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut roots = Vec::new();
    for (i, (v, bag)) in elim_bags.iter().enumerate() {
        let parent = bag.iter().filter(|&&u| u != *v).map(|u| position[u]).min();
        match parent {
            Some(p) => {
                tree_adj[i].insert(p);
                tree_adj[p].insert(i);
            }
            None => roots.push(i),
        }
    }
    // disjoint pieces share no variables, so chaining their roots is safe
    for w in roots.windows(2) {
        tree_adj[w[0]].insert(w[1]);
        tree_adj[w[1]].insert(w[0]);
    }
    let mut bags: Vec<Option<Vec<Var>>> = elim_bags.into_iter().map(|(_, b)| Some(b)).collect();
    merge_subset_bags(&mut bags, &mut tree_adj);

    // compact surviving bags
    let alive: Vec<usize> = (0..n).filter(|&i| bags[i].is_some()).collect();
    let new_index: HashMap<usize, usize> = alive.iter().enumerate().map(|(j, &i)| (i, j)).collect();
    let bags: Vec<Vec<Var>> = alive.iter().map(|&i| bags[i].take().unwrap()).collect();
    let tree_adj: Vec<Vec<usize>> = alive
        .iter()
        .map(|&i| tree_adj[i].iter().map(|j| new_index[j]).collect())
        .collect();

    let root = centroid(&tree_adj);
    let m = bags.len();
    let mut parent = vec![None; m];
    let mut bag_depth = vec![0u32; m];
    let mut seen = vec![false; m];
    let mut queue = std::collections::VecDeque::from([root]);
    seen[root] = true;
    while let Some(b) = queue.pop_front() {
        for &c in &tree_adj[b] {
            if !seen[c] {
                seen[c] = true;
                parent[c] = Some(b);
                bag_depth[c] = bag_depth[b] + 1;
                queue.push_back(c);
            }
        }
    }
    debug_assert!(bag_depth
        .iter()
        .enumerate()
        .all(|(i, &d)| parent[i].is_none_or(|p| bag_depth[p] + 1 == d)));
    TreeDecomposition::from_rooted_bags(bags, parent, source_revision)
}

/// Contracts every bag that is contained in a neighbouring bag.
fn merge_subset_bags(bags: &mut [Option<Vec<Var>>], tree_adj: &mut [BTreeSet<usize>]) {
    let is_subset = |a: &[Var], b: &[Var]| a.iter().all(|v| b.binary_search(v).is_ok());
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..bags.len() {
            let Some(bag) = bags[i].as_ref() else {
                continue;
            };
            let target = tree_adj[i]
                .iter()
                .copied()
                .find(|&j| bags[j].as_ref().is_some_and(|other| is_subset(bag, other)));
            if let Some(j) = target {
                let nbrs: Vec<usize> = tree_adj[i].iter().copied().collect();
                for k in nbrs {
                    tree_adj[k].remove(&i);
                    if k != j {
                        tree_adj[k].insert(j);
                        tree_adj[j].insert(k);
                    }
                }
                tree_adj[i].clear();
                bags[i] = None;
                changed = true;
            }
        }
    }
}

/// Node whose removal leaves the smallest largest piece (smallest index on
/// ties).
fn centroid(tree_adj: &[Vec<usize>]) -> usize {
    let n = tree_adj.len();
    if n <= 1 {
        return 0;
    }
    let mut order = Vec::with_capacity(n);
    let mut parent = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(b) = stack.pop() {
        order.push(b);
        for &c in &tree_adj[b] {
            if !seen[c] {
                seen[c] = true;
                parent[c] = b;
                stack.push(c);
            }
        }
    }
    let mut size = vec![1usize; n];
    for &b in order.iter().rev() {
        if parent[b] != usize::MAX {
            size[parent[b]] += size[b];
        }
    }
    (0..n)
        .min_by_key(|&b| {
            let mut largest = n - size[b];
            for &c in &tree_adj[b] {
                if parent[c] == b {
                    largest = largest.max(size[c]);
                }
            }
            (largest, b)
        })
        .unwrap()
}

/// True iff every vertex and every edge of `graph` lies in some bag.
pub fn td_valid_for(td: &TreeDecomposition, graph: &PrimalGraph) -> bool {
    let mut bags_of: HashMap<Var, Vec<usize>> = HashMap::new();
    for (i, bag) in td.bags.iter().enumerate() {
        for &v in bag {
            bags_of.entry(v).or_default().push(i);
        }
    }
    if !graph.vertices().iter().all(|v| bags_of.contains_key(v)) {
        return false;
    }
    graph.edges().iter().all(|(u, v)| {
        let (bu, bv) = (&bags_of[u], &bags_of[v]);
        bu.iter().any(|b| bv.binary_search(b).is_ok())
    })
}
