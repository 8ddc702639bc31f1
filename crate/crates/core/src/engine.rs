//! The search-based exact counter.
//!
//! Counting proceeds by unit propagation, component decomposition, cache
//! lookup and binary branching. The recursion is driven by an explicit frame
//! stack so that search depth is bounded by memory rather than by the
//! native call stack.

use std::ops::{Add, Sub};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::cache::{CacheKey, CacheLookup, CacheMode, ComponentCache};
use crate::formula::{
    decompose_list, Clause, ClauseList, Component, FormulaState, Lit, PartialAssignment, Reason,
};
use crate::heuristics::{
    compute_tree_decomposition, select_branch_variable, td_valid_for, ConflictCounts, Heuristic,
    TdMode, TdStaleness, TreeDecomposition, DEFAULT_TD_WEIGHT,
};

pub const DEFAULT_CACHE_BYTES: usize = 512 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("cache returned {cached} for a component whose fresh count is {fresh}")]
    CacheUnsound { cached: BigUint, fresh: BigUint },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EngineConfig {
    pub cache_mode: CacheMode,
    pub heuristic: Heuristic,
    pub td_mode: TdMode,
    pub cache_bytes: usize,
    pub td_staleness: TdStaleness,
    /// Weight of the structural term in hybrid branching scores.
    pub td_weight: u64,
    /// Abort a single count after this many decisions.
    pub decision_limit: Option<u64>,
    /// Recount every positive cache hit from scratch and fail on mismatch.
    pub shadow_check: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            cache_mode: CacheMode::SharedSym,
            heuristic: Heuristic::Dlcs,
            td_mode: TdMode::Off,
            cache_bytes: DEFAULT_CACHE_BYTES,
            td_staleness: TdStaleness::Keep,
            td_weight: DEFAULT_TD_WEIGHT,
            decision_limit: None,
            shadow_check: false,
        }
    }
}

impl EngineConfig {
    pub fn new(cache_mode: CacheMode, heuristic: Heuristic, td_mode: TdMode) -> EngineConfig {
        EngineConfig {
            cache_mode,
            heuristic,
            td_mode,
            ..EngineConfig::default()
        }
    }

    /// All twelve mode/heuristic/decomposition combinations.
    pub fn all_combinations() -> Vec<EngineConfig> {
        let mut out = Vec::new();
        for mode in CacheMode::ALL {
            for h in Heuristic::ALL {
                for td in TdMode::ALL {
                    out.push(EngineConfig::new(mode, h, td));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub decisions: u64,
    pub propagations: u64,
    pub conflicts: u64,
    pub positive_hits: u64,
    pub negative_hits: u64,
    /// Positive hits served by entries stored during an earlier count.
    pub carried_hits: u64,
    pub cache_stores: u64,
    pub evictions: u64,
}

impl SearchStats {
    pub fn lookups(&self) -> u64 {
        self.positive_hits + self.negative_hits
    }
}

impl Add for SearchStats {
    type Output = SearchStats;

    fn add(self, o: SearchStats) -> SearchStats {
        SearchStats {
            decisions: self.decisions + o.decisions,
            propagations: self.propagations + o.propagations,
            conflicts: self.conflicts + o.conflicts,
            positive_hits: self.positive_hits + o.positive_hits,
            negative_hits: self.negative_hits + o.negative_hits,
            carried_hits: self.carried_hits + o.carried_hits,
            cache_stores: self.cache_stores + o.cache_stores,
            evictions: self.evictions + o.evictions,
        }
    }
}

impl Sub for SearchStats {
    type Output = SearchStats;

    fn sub(self, o: SearchStats) -> SearchStats {
        SearchStats {
            decisions: self.decisions - o.decisions,
            propagations: self.propagations - o.propagations,
            conflicts: self.conflicts - o.conflicts,
            positive_hits: self.positive_hits - o.positive_hits,
            negative_hits: self.negative_hits - o.negative_hits,
            carried_hits: self.carried_hits - o.carried_hits,
            cache_stores: self.cache_stores - o.cache_stores,
            evictions: self.evictions - o.evictions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountResult {
    pub count: BigUint,
    pub stats: SearchStats,
}

/// Outcome of unit propagation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Propagation {
    /// Fixpoint reached; the residual clauses (input order, literals sorted).
    Ok(ClauseList),
    /// The input clause that became empty.
    Conflict(Clause),
}

/// Conditions `clauses` on `assignment` and propagates unit clauses to a
/// fixpoint. Implied literals are pushed on the assignment's trail.
pub fn unit_propagate(clauses: &ClauseList, assignment: &mut PartialAssignment) -> Propagation {
    // residual clauses paired with the index of the input clause they came from
    let mut current = ClauseList::with_capacity(clauses.len(), clauses.num_lits());
    let mut origin: Vec<u32> = Vec::with_capacity(clauses.len());
    let mut buf: Vec<Lit> = Vec::new();
    for (i, c) in clauses.iter().enumerate() {
        if reduce(c, assignment, &mut buf) {
            if buf.is_empty() {
                return Propagation::Conflict(Clause::from_sorted(c.to_vec()));
            }
            current.push(&buf);
            origin.push(i as u32);
        }
    }
    loop {
        let mut assigned_any = false;
        for (i, c) in current.iter().enumerate() {
            if c.len() == 1 {
                match assignment.lit_value(c[0]) {
                    Some(true) => {}
                    Some(false) => {
                        return Propagation::Conflict(Clause::from_sorted(
                            clauses.get(origin[i] as usize).to_vec(),
                        ))
                    }
                    None => {
                        assignment.assign(c[0], Reason::Propagation);
                        assigned_any = true;
                    }
                }
            }
        }
        if !assigned_any {
            return Propagation::Ok(current);
        }
        let mut next = ClauseList::with_capacity(current.len(), current.num_lits());
        let mut next_origin = Vec::with_capacity(origin.len());
        for (i, c) in current.iter().enumerate() {
            if reduce(c, assignment, &mut buf) {
                if buf.is_empty() {
                    return Propagation::Conflict(Clause::from_sorted(
                        clauses.get(origin[i] as usize).to_vec(),
                    ));
                }
                next.push(&buf);
                next_origin.push(origin[i]);
            }
        }
        current = next;
        origin = next_origin;
    }
}

/// Writes the unassigned literals of `clause` into `buf`. Returns false if
/// the clause is satisfied.
fn reduce(clause: &[Lit], assignment: &PartialAssignment, buf: &mut Vec<Lit>) -> bool {
    buf.clear();
    for &l in clause {
        match assignment.lit_value(l) {
            Some(true) => return false,
            Some(false) => {}
            None => buf.push(l),
        }
    }
    true
}

fn pow2(exp: usize) -> BigUint {
    BigUint::one() << exp
}

enum Branch {
    Conflict,
    /// Free-variable factor and the residual components.
    Split(BigUint, Vec<Component>),
}

enum Frame {
    /// Multiplies the counts of `pending` components into `acc`.
    Product {
        pending: Vec<Component>,
        acc: BigUint,
    },
    /// Sums the two branches on `var` of a cache-missed component.
    Node {
        component: Component,
        key: CacheKey,
        var: crate::formula::Var,
        phase: u8,
        sum: BigUint,
    },
}

enum Entered {
    Hit(BigUint),
    Node(Frame),
}

/// A counter with its persistent cache, conflict counters and shared tree
/// decomposition.
#[derive(Debug, Clone)]
pub struct Counter {
    config: EngineConfig,
    cache: ComponentCache,
    conflicts: ConflictCounts,
    td: Option<TreeDecomposition>,
    assignment: PartialAssignment,
    search: SearchStats,
    budget_start: u64,
}

impl Counter {
    pub fn new(config: EngineConfig) -> Counter {
        Counter {
            config,
            cache: ComponentCache::new(config.cache_bytes),
            conflicts: ConflictCounts::new(),
            td: None,
            assignment: PartialAssignment::new(),
            search: SearchStats::default(),
            budget_start: 0,
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn cache(&self) -> &ComponentCache {
        &self.cache
    }

    pub fn conflicts(&self) -> &ConflictCounts {
        &self.conflicts
    }

    pub fn clear_conflicts(&mut self) {
        self.conflicts.clear();
    }

    pub fn tree_decomposition(&self) -> Option<&TreeDecomposition> {
        self.td.as_ref()
    }

    /// Cumulative statistics over the counter's lifetime.
    pub fn stats(&self) -> SearchStats {
        let c = self.cache.stats();
        SearchStats {
            positive_hits: c.positive_hits,
            negative_hits: c.negative_hits,
            carried_hits: c.carried_hits,
            cache_stores: c.stores,
            evictions: c.evictions,
            ..self.search
        }
    }

    /// Exact model count of `state` over its active variables.
    pub fn count(&mut self, state: &FormulaState) -> Result<CountResult, EngineError> {
        let before = self.stats();
        if !self.config.cache_mode.is_shared() {
            self.cache.clear();
        }
        self.cache.begin_epoch();
        self.cache.set_clock(state.revision());
        self.budget_start = self.search.decisions;
        if self.config.td_mode == TdMode::Shared {
            self.refresh_td(state);
        }

        let clauses =
            ClauseList::from_clauses(state.clauses().iter().filter(|c| !c.is_tautology()));
        let result = self.count_root(&clauses, state.num_vars());
        let count = result?;
        Ok(CountResult {
            count,
            stats: self.stats() - before,
        })
    }

    fn refresh_td(&mut self, state: &FormulaState) {
        let stale = match &self.td {
            None => true,
            Some(td) => {
                self.config.td_staleness == TdStaleness::Recompute
                    && !td_valid_for(td, &state.primal_graph())
            }
        };
        if stale {
            self.td = Some(compute_tree_decomposition(
                &state.primal_graph(),
                state.revision(),
            ));
        }
    }

    /// Counts a clause list over `num_vars` variables, a superset of the
    /// variables occurring in it.
    fn count_root(
        &mut self,
        clauses: &ClauseList,
        num_vars: usize,
    ) -> Result<BigUint, EngineError> {
        self.assignment.undo_to(0);
        let residual = match unit_propagate(clauses, &mut self.assignment) {
            Propagation::Conflict(c) => {
                self.note_conflict(&c);
                self.assignment.undo_to(0);
                return Ok(BigUint::zero());
            }
            Propagation::Ok(r) => r,
        };
        let implied = self.assignment.len();
        self.search.propagations += implied as u64;
        self.assignment.undo_to(0);

        let mut residual = residual;
        residual.sort_clauses();
        let occurring = residual.vars().len();
        let free = pow2(num_vars - implied - occurring);
        let components = decompose_list(&residual);
        if components.len() <= 1 {
            let product = self.solve_product(components, BigUint::one())?;
            return Ok(free * product);
        }
        // the whole residual gets its own entry so identical formulas hit at once
        let (key, hit) = self
            .cache
            .lookup_component(&residual, self.config.cache_mode);
        if let CacheLookup::Positive(v) = hit {
            self.shadow(&residual, &v)?;
            return Ok(free * v);
        }
        let product = self.solve_product(components, BigUint::one())?;
        self.cache.store(key, product.clone());
        Ok(free * product)
    }

    fn note_conflict(&mut self, clause: &Clause) {
        self.search.conflicts += 1;
        self.conflicts.record_conflict(clause.lits());
    }

    fn shadow(&self, clauses: &ClauseList, cached: &BigUint) -> Result<(), EngineError> {
        if !self.config.shadow_check {
            return Ok(());
        }
        let mut fresh = Counter::new(EngineConfig {
            cache_mode: CacheMode::NoShared,
            td_mode: TdMode::Off,
            shadow_check: false,
            decision_limit: None,
            ..self.config
        });
        let num_vars = clauses.vars().len();
        let count = fresh.count_root(clauses, num_vars)?;
        if &count != cached {
            return Err(EngineError::CacheUnsound {
                cached: cached.clone(),
                fresh: count,
            });
        }
        Ok(())
    }

    fn enter(&mut self, component: Component) -> Result<Entered, EngineError> {
        let (key, hit) = self
            .cache
            .lookup_component(component.clauses(), self.config.cache_mode);
        if let CacheLookup::Positive(v) = hit {
            self.shadow(component.clauses(), &v)?;
            return Ok(Entered::Hit(v));
        }
        if let Some(limit) = self.config.decision_limit {
            if self.search.decisions - self.budget_start >= limit {
                return Err(EngineError::ResourceLimit(format!(
                    "more than {limit} decisions"
                )));
            }
        }
        let td = match self.config.td_mode {
            TdMode::Off => None,
            TdMode::Shared => self.td.as_ref(),
        };
        let var = select_branch_variable(
            component.clauses(),
            self.config.heuristic,
            &self.conflicts,
            td,
            self.config.td_weight,
        )
        .expect("components are never empty");
        self.search.decisions += 1;
        Ok(Entered::Node(Frame::Node {
            component,
            key,
            var,
            phase: 0,
            sum: BigUint::zero(),
        }))
    }

    fn branch(&mut self, component: &Component, lit: Lit) -> Branch {
        self.assignment.undo_to(0);
        self.assignment.assign(lit, Reason::Decision);
        let outcome = unit_propagate(component.clauses(), &mut self.assignment);
        let assigned = self.assignment.len();
        self.assignment.undo_to(0);
        match outcome {
            Propagation::Conflict(c) => {
                self.note_conflict(&c);
                Branch::Conflict
            }
            Propagation::Ok(residual) => {
                self.search.propagations += assigned as u64 - 1;
                let components = decompose_list(&residual);
                let occurring: usize = components.iter().map(|c| c.vars().len()).sum();
                let free = component.vars().len() - assigned - occurring;
                Branch::Split(pow2(free), components)
            }
        }
    }

    /// Product of the counts of `components`, times `factor`.
    fn solve_product(
        &mut self,
        mut components: Vec<Component>,
        factor: BigUint,
    ) -> Result<BigUint, EngineError> {
        components.reverse();
        let mut stack = vec![Frame::Product {
            pending: components,
            acc: factor,
        }];
        let mut ret: Option<BigUint> = None;
        while let Some(top) = stack.last_mut() {
            match top {
                Frame::Product { pending, acc } => {
                    if let Some(v) = ret.take() {
                        *acc *= v;
                    }
                    let next = if acc.is_zero() { None } else { pending.pop() };
                    match next {
                        None => {
                            let Some(Frame::Product { acc, .. }) = stack.pop() else {
                                unreachable!()
                            };
                            ret = Some(acc);
                        }
                        Some(component) => match self.enter(component)? {
                            Entered::Hit(v) => ret = Some(v),
                            Entered::Node(frame) => stack.push(frame),
                        },
                    }
                }
                Frame::Node {
                    component,
                    var,
                    phase,
                    sum,
                    ..
                } => {
                    if let Some(v) = ret.take() {
                        *sum += v;
                        *phase += 1;
                    }
                    if *phase == 2 {
                        let Some(Frame::Node { key, sum, .. }) = stack.pop() else {
                            unreachable!()
                        };
                        self.cache.store(key, sum.clone());
                        ret = Some(sum);
                        continue;
                    }
                    let lit = Lit::new(*var, *phase == 0);
                    let component = component.clone();
                    match self.branch(&component, lit) {
                        Branch::Conflict => ret = Some(BigUint::zero()),
                        Branch::Split(free, subs) if subs.is_empty() => ret = Some(free),
                        Branch::Split(free, mut subs) => {
                            subs.reverse();
                            stack.push(Frame::Product {
                                pending: subs,
                                acc: free,
                            });
                        }
                    }
                }
            }
        }
        Ok(ret.expect("root frame returns a value"))
    }

    /// Counts one component (all of its variables occur in its clauses).
    pub fn count_component(&mut self, component: Component) -> Result<BigUint, EngineError> {
        self.solve_product(vec![component], BigUint::one())
    }
}

/// One-shot count with a fresh counter.
pub fn count(state: &FormulaState, config: EngineConfig) -> Result<CountResult, EngineError> {
    Counter::new(config).count(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{brute_force_count, condition_list, Var};

    fn cl(v: &[i64]) -> Clause {
        Clause::from_dimacs(v).unwrap()
    }

    fn list(clauses: &[&[i64]]) -> ClauseList {
        let cs: Vec<Clause> = clauses.iter().map(|c| cl(c)).collect();
        ClauseList::from_clauses(&cs)
    }

    fn state(n: u32, clauses: &[&[i64]]) -> FormulaState {
        FormulaState::from_parts((1..=n).map(Var::new), clauses.iter().map(|c| cl(c))).unwrap()
    }

    fn sample_formula() -> FormulaState {
        state(
            5,
            &[
                &[1, 2, 3],
                &[-1, -2, -3],
                &[4, -1],
                &[5, 1],
                &[5, 2, 3],
                &[4, -2, -3],
            ],
        )
    }

    #[test]
    fn propagation_examples() {
        let mut a = PartialAssignment::new();
        let r = unit_propagate(&list(&[&[1], &[-1, 2]]), &mut a);
        assert_eq!(r, Propagation::Ok(ClauseList::new()));
        assert_eq!(a.value(Var::new(1)), Some(true));
        assert_eq!(a.value(Var::new(2)), Some(true));

        let mut a = PartialAssignment::new();
        assert_eq!(
            unit_propagate(&list(&[&[1], &[-1]]), &mut a),
            Propagation::Conflict(cl(&[-1]))
        );

        let phi = list(&[&[-1, -2], &[4, -1], &[5, 1], &[4, -2]]);
        let mut a = PartialAssignment::new();
        assert_eq!(unit_propagate(&phi, &mut a), Propagation::Ok(phi.clone()));
        assert!(a.is_empty());
    }

    #[test]
    fn counts_example_in_every_config() {
        for config in EngineConfig::all_combinations() {
            assert_eq!(
                count(&sample_formula(), config).unwrap().count,
                BigUint::from(10u32),
                "{config:?}"
            );
        }
    }

    #[test]
    fn trivial_counts() {
        let cfg = EngineConfig::default();
        assert_eq!(
            count(&state(1, &[&[1], &[-1]]), cfg).unwrap().count,
            BigUint::zero()
        );
        assert_eq!(
            count(&state(2, &[]), cfg).unwrap().count,
            BigUint::from(4u32)
        );
        assert_eq!(
            count(&state(2, &[&[]]), cfg).unwrap().count,
            BigUint::zero()
        );
        assert_eq!(
            count(&state(3, &[&[1, -1]]), cfg).unwrap().count,
            BigUint::from(8u32)
        );
    }

    #[test]
    fn component_counts() {
        let mut c = Counter::new(EngineConfig::default());
        let comp = |cls: &[&[i64]]| Component::new(list(cls));
        assert_eq!(
            c.count_component(comp(&[&[1, 2]])).unwrap(),
            BigUint::from(3u32)
        );
        assert_eq!(
            c.count_component(comp(&[&[1, 2], &[-1, -2]])).unwrap(),
            BigUint::from(2u32)
        );
        let phi_pos = comp(&[&[-1, -2], &[4, -1], &[5, 1], &[4, -2]]);
        assert_eq!(c.count_component(phi_pos).unwrap(), BigUint::from(5u32));
    }

    #[test]
    fn branch_identity_on_example() {
        // 10 = count(Φ|x3) + count(Φ|¬x3), each over the remaining 4 variables
        let phi = sample_formula();
        let clauses = ClauseList::from_clauses(phi.clauses());
        let mut total = BigUint::zero();
        for lit in [Var::new(3).positive(), Var::new(3).negative()] {
            let a = PartialAssignment::from_lits(&[lit]);
            let residual = condition_list(clauses.iter(), &a);
            let sub = FormulaState::from_parts([1, 2, 4, 5].map(Var::new), residual.to_clauses())
                .unwrap();
            total += count(&sub, EngineConfig::default()).unwrap().count;
        }
        assert_eq!(total, BigUint::from(10u32));
    }

    #[test]
    fn second_count_is_free_when_shared() {
        let phi = sample_formula();
        for mode in [CacheMode::Shared, CacheMode::SharedSym] {
            let mut c = Counter::new(EngineConfig::new(mode, Heuristic::Dlcs, TdMode::Off));
            let first = c.count(&phi).unwrap();
            let second = c.count(&phi).unwrap();
            assert_eq!(first.count, second.count);
            assert!(first.stats.decisions > 0);
            assert_eq!(second.stats.decisions, 0);
            assert!(second.stats.positive_hits >= 1);
        }
        let mut c = Counter::new(EngineConfig::new(
            CacheMode::NoShared,
            Heuristic::Dlcs,
            TdMode::Off,
        ));
        let first = c.count(&phi).unwrap();
        let second = c.count(&phi).unwrap();
        assert_eq!(first.stats.decisions, second.stats.decisions);
        assert_eq!(second.stats.carried_hits, 0);
    }

    #[test]
    fn decision_limit_is_enforced() {
        let cfg = EngineConfig {
            decision_limit: Some(0),
            ..EngineConfig::default()
        };
        assert!(matches!(
            count(&sample_formula(), cfg),
            Err(EngineError::ResourceLimit(_))
        ));
    }

    #[test]
    fn deterministic_stats() {
        for config in EngineConfig::all_combinations() {
            let a = count(&sample_formula(), config).unwrap();
            let b = count(&sample_formula(), config).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn matches_brute_force_on_small_fixture() {
        let s = state(6, &[&[1, -2, 3], &[-1, 4], &[2, 5, -6], &[-3, -5], &[6, 1]]);
        let expected = brute_force_count(&s).unwrap();
        for config in EngineConfig::all_combinations() {
            assert_eq!(count(&s, config).unwrap().count, expected);
        }
    }
}
