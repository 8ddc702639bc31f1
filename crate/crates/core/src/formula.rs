//! CNF building blocks: literals, normalized clauses, the evolving formula
//! state, conditioning, component decomposition and the primal graph.
//!
//! Literals are packed as `2 * var + polarity` so that the natural integer
//! order is `(variable, negative first)`, which is the normalized literal
//! order used everywhere (clause normalization, cache keys, canonical forms).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Not;

use num_bigint::BigUint;
use thiserror::Error;

/// Largest number of active variables [`brute_force_count`] will enumerate.
pub const BRUTE_FORCE_MAX_VARS: usize = 26;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("malformed literal {0}: variable identifiers must be positive")]
    MalformedLiteral(i64),
    #[error("too many variables for enumeration: {found} > {limit}")]
    TooManyVariables { found: usize, limit: usize },
}

/// Violations of the state transition preconditions.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateError {
    #[error("variable {0} is not active")]
    VarNotActive(Var),
    #[error("variable {0} is already active")]
    VarAlreadyActive(Var),
    #[error("variable {0} still occurs in {1} clause(s)")]
    VarOccurs(Var, usize),
    #[error("clause {0} is not in the formula")]
    ClauseNotFound(Clause),
}

/// A propositional variable, identified by a positive integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(u32);

impl Var {
    /// Panics on 0; use [`Var::try_new`] for untrusted input.
    pub fn new(id: u32) -> Var {
        assert!(id >= 1, "variable identifiers start at 1");
        Var(id)
    }

    pub fn try_new(id: i64) -> Result<Var, FormulaError> {
        if id >= 1 && id <= (u32::MAX >> 1) as i64 {
            Ok(Var(id as u32))
        } else {
            Err(FormulaError::MalformedLiteral(id))
        }
    }

    pub fn id(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn positive(self) -> Lit {
        Lit::new(self, true)
    }

    pub fn negative(self) -> Lit {
        Lit::new(self, false)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// A literal: a variable with a polarity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit(u32);

impl Lit {
    pub fn new(var: Var, positive: bool) -> Lit {
        Lit(var.0 << 1 | positive as u32)
    }

    /// Parses a DIMACS integer literal (`3`, `-3`).
    pub fn from_dimacs(value: i64) -> Result<Lit, FormulaError> {
        if value == 0 {
            return Err(FormulaError::MalformedLiteral(0));
        }
        let var = Var::try_new(value.abs()).map_err(|_| FormulaError::MalformedLiteral(value))?;
        Ok(Lit::new(var, value > 0))
    }

    pub fn to_dimacs(self) -> i64 {
        let v = self.var().0 as i64;
        if self.is_positive() {
            v
        } else {
            -v
        }
    }

    pub fn var(self) -> Var {
        Var(self.0 >> 1)
    }

    pub fn is_positive(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn complement(self) -> Lit {
        Lit(self.0 ^ 1)
    }

    /// The packed integer `2 * var + polarity`; always ≥ 2.
    pub fn code(self) -> u32 {
        self.0
    }
}

impl Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        self.complement()
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_positive() {
            write!(f, "{}", self.var())
        } else {
            write!(f, "¬{}", self.var())
        }
    }
}

/// A normalized clause: literals sorted by `(variable, negative first)`,
/// duplicates removed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Clause {
    lits: Vec<Lit>,
}

impl Clause {
    pub fn lits(&self) -> &[Lit] {
        &self.lits
    }

    pub fn len(&self) -> usize {
        self.lits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    /// True when the clause contains a literal and its complement.
    pub fn is_tautology(&self) -> bool {
        // complementary literals are adjacent in normalized order
        self.lits.windows(2).any(|w| w[0].var() == w[1].var())
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        let mut last = None;
        self.lits.iter().filter_map(move |l| {
            let v = l.var();
            if last == Some(v) {
                None
            } else {
                last = Some(v);
                Some(v)
            }
        })
    }

    pub fn from_dimacs(values: &[i64]) -> Result<Clause, FormulaError> {
        let lits = values
            .iter()
            .map(|&v| Lit::from_dimacs(v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(normalize_clause(&lits))
    }

    pub fn to_dimacs(&self) -> Vec<i64> {
        self.lits.iter().map(|l| l.to_dimacs()).collect()
    }

    /// Wraps literals already known to be sorted and duplicate-free.
    pub(crate) fn from_sorted(lits: Vec<Lit>) -> Clause {
        debug_assert!(lits.windows(2).all(|w| w[0] < w[1]));
        Clause { lits }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lits.is_empty() {
            return write!(f, "⊥");
        }
        for (i, l) in self.lits.iter().enumerate() {
            if i > 0 {
                write!(f, " ∨ ")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// Sorts and deduplicates a raw literal list.
pub fn normalize_clause(raw: &[Lit]) -> Clause {
    let mut lits = raw.to_vec();
    lits.sort_unstable();
    lits.dedup();
    Clause { lits }
}

/// A flat clause list: all literals in one buffer plus clause end offsets.
///
/// This is the working representation of the counting engine and of cache
/// keys; it avoids one allocation per clause.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClauseList {
    lits: Vec<Lit>,
    ends: Vec<u32>,
}

impl ClauseList {
    pub fn new() -> ClauseList {
        ClauseList::default()
    }

    pub fn with_capacity(clauses: usize, lits: usize) -> ClauseList {
        ClauseList {
            lits: Vec::with_capacity(lits),
            ends: Vec::with_capacity(clauses),
        }
    }

    pub fn from_clauses<'a>(clauses: impl IntoIterator<Item = &'a Clause>) -> ClauseList {
        let mut list = ClauseList::new();
        for c in clauses {
            list.push(c.lits());
        }
        list
    }

    pub fn push(&mut self, clause: &[Lit]) {
        self.lits.extend_from_slice(clause);
        self.ends.push(self.lits.len() as u32);
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn num_lits(&self) -> usize {
        self.lits.len()
    }

    pub fn all_lits(&self) -> &[Lit] {
        &self.lits
    }

    pub fn get(&self, i: usize) -> &[Lit] {
        let start = if i == 0 { 0 } else { self.ends[i - 1] as usize };
        &self.lits[start..self.ends[i] as usize]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[Lit]> + '_ {
        (0..self.ends.len()).map(move |i| self.get(i))
    }

    pub fn to_clauses(&self) -> Vec<Clause> {
        self.iter()
            .map(|c| Clause::from_sorted(c.to_vec()))
            .collect()
    }

    /// Sorts clauses lexicographically as literal sequences and drops
    /// duplicate clauses. Literals inside each clause must already be sorted.
    pub fn sort_clauses(&mut self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        if order.windows(2).all(|w| self.get(w[0]) < self.get(w[1])) {
            return;
        }
        order.sort_unstable_by(|&a, &b| self.get(a).cmp(self.get(b)));
        let mut sorted = ClauseList::with_capacity(self.len(), self.lits.len());
        let mut prev: Option<usize> = None;
        for i in order {
            if prev.is_some_and(|p| self.get(p) == self.get(i)) {
                continue;
            }
            sorted.push(self.get(i));
            prev = Some(i);
        }
        *self = sorted;
    }

    /// Distinct variables occurring in the list, ascending.
    pub fn vars(&self) -> Vec<Var> {
        let mut vars: Vec<Var> = self.lits.iter().map(|l| l.var()).collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }
}

/// Why a variable received its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reason {
    Decision,
    Propagation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrailEntry {
    pub var: Var,
    pub value: bool,
    pub reason: Reason,
}

/// A partial assignment with an undoable trail.
#[derive(Debug, Clone, Default)]
pub struct PartialAssignment {
    values: Vec<Option<bool>>,
    trail: Vec<TrailEntry>,
}

impl PartialAssignment {
    pub fn new() -> PartialAssignment {
        PartialAssignment::default()
    }

    pub fn with_max_var(max_var: u32) -> PartialAssignment {
        PartialAssignment {
            values: vec![None; max_var as usize + 1],
            trail: Vec::new(),
        }
    }

    /// Builds a decision-only assignment from literals set to true.
    pub fn from_lits(lits: &[Lit]) -> PartialAssignment {
        let mut a = PartialAssignment::new();
        for &l in lits {
            a.assign(l, Reason::Decision);
        }
        a
    }

    pub fn value(&self, var: Var) -> Option<bool> {
        self.values.get(var.index()).copied().flatten()
    }

    /// Truth value of a literal under the assignment.
    pub fn lit_value(&self, lit: Lit) -> Option<bool> {
        self.value(lit.var()).map(|v| v == lit.is_positive())
    }

    /// Makes `lit` true. Returns false, leaving the assignment untouched,
    /// when its variable already holds the opposite value.
    pub fn assign(&mut self, lit: Lit, reason: Reason) -> bool {
        let idx = lit.var().index();
        if idx >= self.values.len() {
            self.values.resize(idx + 1, None);
        }
        match self.values[idx] {
            Some(v) => v == lit.is_positive(),
            None => {
                self.values[idx] = Some(lit.is_positive());
                self.trail.push(TrailEntry {
                    var: lit.var(),
                    value: lit.is_positive(),
                    reason,
                });
                true
            }
        }
    }

    pub fn trail(&self) -> &[TrailEntry] {
        &self.trail
    }

    pub fn len(&self) -> usize {
        self.trail.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trail.is_empty()
    }

    /// Unassigns everything past the first `len` trail entries.
    pub fn undo_to(&mut self, len: usize) {
        for entry in self.trail.drain(len..) {
            self.values[entry.var.index()] = None;
        }
    }

    pub fn assigned(&self) -> BTreeMap<Var, bool> {
        self.trail.iter().map(|e| (e.var, e.value)).collect()
    }
}

/// Removes satisfied clauses and falsified literals. A conflict shows up as
/// an empty clause in the output.
pub fn condition(clauses: &[Clause], assignment: &PartialAssignment) -> Vec<Clause> {
    let list = condition_list(clauses.iter().map(|c| c.lits()), assignment);
    let mut out = list.to_clauses();
    out.sort();
    out.dedup();
    out
}

pub(crate) fn condition_list<'a>(
    clauses: impl IntoIterator<Item = &'a [Lit]>,
    assignment: &PartialAssignment,
) -> ClauseList {
    let mut out = ClauseList::new();
    let mut buf = Vec::new();
    'clauses: for clause in clauses {
        buf.clear();
        for &l in clause {
            match assignment.lit_value(l) {
                Some(true) => continue 'clauses,
                Some(false) => {}
                None => buf.push(l),
            }
        }
        out.push(&buf);
    }
    out
}

/// A variable-disjoint group of clauses. Every listed variable occurs in at
/// least one clause, and clauses are in normalized list order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    clauses: ClauseList,
    vars: Vec<Var>,
}

impl Component {
    /// Builds a component from a clause list, normalizing clause order.
    pub fn new(mut clauses: ClauseList) -> Component {
        clauses.sort_clauses();
        let vars = clauses.vars();
        Component { clauses, vars }
    }

    pub fn clauses(&self) -> &ClauseList {
        &self.clauses
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn to_clauses(&self) -> Vec<Clause> {
        self.clauses.to_clauses()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Splits clauses into maximal variable-disjoint components, ordered by
/// their smallest variable.
pub fn decompose_components(clauses: &[Clause]) -> Vec<Component> {
    decompose_list(&ClauseList::from_clauses(clauses))
}

pub(crate) fn decompose_list(list: &ClauseList) -> Vec<Component> {
    if list.is_empty() {
        return Vec::new();
    }
    let vars = list.vars();
    let index_of = |v: Var| vars.binary_search(&v).expect("variable collected above");
    let mut parent: Vec<usize> = (0..vars.len()).collect();
    for clause in list.iter() {
        if let Some((first, rest)) = clause.split_first() {
            let head = index_of(first.var());
            for l in rest {
                let a = find(&mut parent, head);
                let b = find(&mut parent, index_of(l.var()));
                // the smaller index stays root, so each root is its group's minimum
                if a < b {
                    parent[b] = a;
                } else if b < a {
                    parent[a] = b;
                }
            }
        }
    }
    group_by_roots(list, &vars, &mut parent)
}

fn group_by_roots(list: &ClauseList, vars: &[Var], parent: &mut [usize]) -> Vec<Component> {
    let index_of = |v: Var| vars.binary_search(&v).expect("variable collected above");
    // root index is the smallest variable index of its group, so grouping by
    // root in ascending order yields components ordered by smallest variable
    let mut slot_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..vars.len() {
        let r = find(parent, i);
        let next = slot_of_root.len();
        slot_of_root.entry(r).or_insert(next);
    }
    let mut groups: Vec<ClauseList> = vec![ClauseList::new(); slot_of_root.len()];
    for clause in list.iter() {
        let Some(first) = clause.first() else {
            continue;
        };
        let r = find(parent, index_of(first.var()));
        groups[slot_of_root[&r]].push(clause);
    }
    groups.into_iter().map(Component::new).collect()
}

/// Undirected graph over variables with an edge between every pair of
/// variables sharing a clause.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrimalGraph {
    vertices: BTreeSet<Var>,
    edges: BTreeSet<(Var, Var)>,
}

impl PrimalGraph {
    pub fn new() -> PrimalGraph {
        PrimalGraph::default()
    }

    pub fn add_vertex(&mut self, v: Var) {
        self.vertices.insert(v);
    }

    /// Adds the edge `{u, v}`; self-loops are ignored.
    pub fn add_edge(&mut self, u: Var, v: Var) {
        if u == v {
            return;
        }
        self.vertices.insert(u);
        self.vertices.insert(v);
        self.edges.insert(if u < v { (u, v) } else { (v, u) });
    }

    pub fn remove_edge(&mut self, u: Var, v: Var) -> bool {
        self.edges.remove(&if u < v { (u, v) } else { (v, u) })
    }

    pub fn has_edge(&self, u: Var, v: Var) -> bool {
        self.edges.contains(&if u < v { (u, v) } else { (v, u) })
    }

    pub fn vertices(&self) -> &BTreeSet<Var> {
        &self.vertices
    }

    /// Edges as `(smaller, larger)` pairs.
    pub fn edges(&self) -> &BTreeSet<(Var, Var)> {
        &self.edges
    }

    pub fn adjacency(&self) -> BTreeMap<Var, BTreeSet<Var>> {
        let mut adj: BTreeMap<Var, BTreeSet<Var>> = self
            .vertices
            .iter()
            .map(|&v| (v, BTreeSet::new()))
            .collect();
        for &(u, v) in &self.edges {
            adj.entry(u).or_default().insert(v);
            adj.entry(v).or_default().insert(u);
        }
        adj
    }
}

pub fn primal_graph<'a>(clauses: impl IntoIterator<Item = &'a Clause>) -> PrimalGraph {
    let mut g = PrimalGraph::new();
    for c in clauses {
        let vars: Vec<Var> = c.vars().collect();
        for (i, &u) in vars.iter().enumerate() {
            g.add_vertex(u);
            for &v in &vars[i + 1..] {
                g.add_edge(u, v);
            }
        }
    }
    g
}

/// The evolving formula: active variables plus a set of normalized clauses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FormulaState {
    active_vars: BTreeSet<Var>,
    clauses: BTreeSet<Clause>,
    occurrences: BTreeMap<Var, usize>,
    revision: u64,
}

impl FormulaState {
    pub fn new() -> FormulaState {
        FormulaState::default()
    }

    /// State with variables `1..=num_vars` and no clauses.
    pub fn with_vars(num_vars: u32) -> FormulaState {
        FormulaState {
            active_vars: (1..=num_vars).map(Var::new).collect(),
            ..FormulaState::default()
        }
    }

    /// Fresh state from parts. Fails if a clause mentions an inactive
    /// variable. Duplicate clauses collapse.
    pub fn from_parts(
        vars: impl IntoIterator<Item = Var>,
        clauses: impl IntoIterator<Item = Clause>,
    ) -> Result<FormulaState, StateError> {
        let mut state = FormulaState {
            active_vars: vars.into_iter().collect(),
            ..FormulaState::default()
        };
        for c in clauses {
            state.add_clause(c)?;
        }
        state.revision = 0;
        Ok(state)
    }

    pub fn active_vars(&self) -> &BTreeSet<Var> {
        &self.active_vars
    }

    pub fn clauses(&self) -> &BTreeSet<Clause> {
        &self.clauses
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn num_vars(&self) -> usize {
        self.active_vars.len()
    }

    pub fn max_var(&self) -> Option<Var> {
        self.active_vars.last().copied()
    }

    pub fn contains_clause(&self, clause: &Clause) -> bool {
        self.clauses.contains(clause)
    }

    /// Number of clauses mentioning `var`.
    pub fn occurrences(&self, var: Var) -> usize {
        self.occurrences.get(&var).copied().unwrap_or(0)
    }

    /// Same variables and clauses, ignoring the revision counter.
    pub fn same_formula(&self, other: &FormulaState) -> bool {
        self.active_vars == other.active_vars && self.clauses == other.clauses
    }

    /// Adds a clause. `Ok(false)` means the clause was already present and
    /// nothing changed.
    pub fn add_clause(&mut self, clause: Clause) -> Result<bool, StateError> {
        if let Some(v) = clause.vars().find(|v| !self.active_vars.contains(v)) {
            return Err(StateError::VarNotActive(v));
        }
        if self.clauses.contains(&clause) {
            return Ok(false);
        }
        for v in clause.vars() {
            *self.occurrences.entry(v).or_insert(0) += 1;
        }
        self.clauses.insert(clause);
        self.revision += 1;
        Ok(true)
    }

    pub fn remove_clause(&mut self, clause: &Clause) -> Result<(), StateError> {
        if !self.clauses.remove(clause) {
            return Err(StateError::ClauseNotFound(clause.clone()));
        }
        for v in clause.vars() {
            let n = self
                .occurrences
                .get_mut(&v)
                .expect("occurrence tracked on insert");
            *n -= 1;
            if *n == 0 {
                self.occurrences.remove(&v);
            }
        }
        self.revision += 1;
        Ok(())
    }

    pub fn add_var(&mut self, var: Var) -> Result<(), StateError> {
        if !self.active_vars.insert(var) {
            return Err(StateError::VarAlreadyActive(var));
        }
        self.revision += 1;
        Ok(())
    }

    pub fn remove_var(&mut self, var: Var) -> Result<(), StateError> {
        if !self.active_vars.contains(&var) {
            return Err(StateError::VarNotActive(var));
        }
        let occ = self.occurrences(var);
        if occ > 0 {
            return Err(StateError::VarOccurs(var, occ));
        }
        self.active_vars.remove(&var);
        self.revision += 1;
        Ok(())
    }

    /// Drops every variable and clause.
    pub fn clear(&mut self) {
        self.active_vars.clear();
        self.clauses.clear();
        self.occurrences.clear();
        self.revision += 1;
    }

    pub fn primal_graph(&self) -> PrimalGraph {
        primal_graph(self.clauses.iter().filter(|c| !c.is_tautology()))
    }
}

/// Counts models by enumerating every assignment of the active variables.
pub fn brute_force_count(state: &FormulaState) -> Result<BigUint, FormulaError> {
    let vars: Vec<Var> = state.active_vars().iter().copied().collect();
    brute_force_count_over(&vars, state.clauses().iter().map(|c| c.lits()))
}

/// Enumeration over an explicit variable list; every clause variable must be
/// in `vars`.
pub fn brute_force_count_over<'a>(
    vars: &[Var],
    clauses: impl IntoIterator<Item = &'a [Lit]>,
) -> Result<BigUint, FormulaError> {
    if vars.len() > BRUTE_FORCE_MAX_VARS {
        return Err(FormulaError::TooManyVariables {
            found: vars.len(),
            limit: BRUTE_FORCE_MAX_VARS,
        });
    }
    let bit = |v: Var| -> u32 {
        let i = vars
            .iter()
            .position(|&w| w == v)
            .expect("clause variable must be listed");
        1 << i
    };
    // (positive mask, negative mask) per clause
    let masks: Vec<(u32, u32)> = clauses
        .into_iter()
        .map(|c| {
            c.iter().fold((0, 0), |(p, n), &l| {
                if l.is_positive() {
                    (p | bit(l.var()), n)
                } else {
                    (p, n | bit(l.var()))
                }
            })
        })
        .collect();
    let mut models: u64 = 0;
    for world in 0u32..(1u32 << vars.len()) {
        if masks
            .iter()
            .all(|&(p, n)| world & p != 0 || !world & n != 0)
        {
            models += 1;
        }
    }
    Ok(BigUint::from(models))
}
