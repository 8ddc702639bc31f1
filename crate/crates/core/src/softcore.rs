//! Greedy soft-core extraction: drop clauses one at a time while the model
//! count stays within a threshold.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::EngineConfig;
use crate::formula::{Clause, Var};
use crate::session::{Session, SessionError, UpdateOp};

/// Fixed-point scale used to turn `delta` into an exact fraction.
const DELTA_SCALE: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClauseOrder {
    Input,
    Reverse,
    Shuffle(u64),
}

impl ClauseOrder {
    pub fn indices(self, m: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..m).collect();
        match self {
            ClauseOrder::Input => {}
            ClauseOrder::Reverse => idx.reverse(),
            ClauseOrder::Shuffle(seed) => idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
        }
        idx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftCoreConfig {
    /// Allowed relative growth of the count. `f64::INFINITY` never binds.
    pub delta: f64,
    pub order: ClauseOrder,
    /// Use this count as the threshold instead of one derived from `delta`.
    pub absolute_threshold: Option<BigUint>,
}

impl Default for SoftCoreConfig {
    fn default() -> Self {
        SoftCoreConfig {
            delta: 0.20,
            order: ClauseOrder::Input,
            absolute_threshold: None,
        }
    }
}

impl SoftCoreConfig {
    /// Largest acceptable count, or `None` when unbounded:
    /// `floor((1 + delta) * base)`, with `delta` rounded to nine decimals.
    pub fn threshold(&self, base: &BigUint) -> Option<BigUint> {
        if let Some(t) = &self.absolute_threshold {
            return Some(t.clone());
        }
        assert!(self.delta >= 0.0, "delta must be non-negative");
        if self.delta.is_infinite() {
            return None;
        }
        let scaled = (self.delta * DELTA_SCALE as f64).round().to_u64()?;
        Some(base * (BigUint::from(DELTA_SCALE) + BigUint::from(scaled)) / DELTA_SCALE)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoftCoreResult {
    pub removed_indices: Vec<usize>,
    /// The soft core.
    pub kept_indices: Vec<usize>,
    pub base_count: BigUint,
    pub final_count: BigUint,
    pub threshold: Option<BigUint>,
    /// Clause indices in the order they were tried.
    pub order: Vec<usize>,
    /// Count observed at each trial, aligned with `order`.
    pub per_step_counts: Vec<BigUint>,
}

fn within(count: &BigUint, threshold: &Option<BigUint>) -> bool {
    threshold.as_ref().is_none_or(|t| count <= t)
}

fn load_batch(vars: &BTreeSet<Var>, clauses: &[Clause]) -> Vec<UpdateOp> {
    let mut ops = vec![UpdateOp::Reset];
    ops.extend(vars.iter().map(|&v| UpdateOp::AddVar(v)));
    ops.extend(clauses.iter().cloned().map(UpdateOp::AddClause));
    ops
}

/// Single greedy pass over `clauses` (indexed from 0 in input order). Every
/// count goes through `session`, which is reset to the input first.
pub fn compute_soft_core(
    vars: &BTreeSet<Var>,
    clauses: &[Clause],
    config: &SoftCoreConfig,
    session: &mut Session,
) -> Result<SoftCoreResult, SessionError> {
    session.apply_batch(&load_batch(vars, clauses))?;
    let base_count = session.checkpoint_count()?;
    let threshold = config.threshold(&base_count);
    let order = config.order.indices(clauses.len());
    let mut current = base_count.clone();
    let mut per_step_counts = Vec::with_capacity(order.len());
    for &i in &order {
        let clause = &clauses[i];
        if !session.state().contains_clause(clause) {
            // an identical clause at an earlier index is already gone
            per_step_counts.push(session.checkpoint_count()?);
            continue;
        }
        session.apply_op(&UpdateOp::RemClause(clause.clone()))?;
        let count = session.checkpoint_count()?;
        if within(&count, &threshold) {
            current = count.clone();
        } else {
            session.apply_op(&UpdateOp::AddClause(clause.clone()))?;
        }
        per_step_counts.push(count);
    }
    let (kept_indices, removed_indices): (Vec<usize>, Vec<usize>) =
        (0..clauses.len()).partition(|&i| session.state().contains_clause(&clauses[i]));
    Ok(SoftCoreResult {
        removed_indices,
        kept_indices,
        base_count,
        final_count: current,
        threshold,
        order,
        per_step_counts,
    })
}

/// Checks a result against the input: the kept clauses stay within the
/// threshold, replaying the pass removes the same clauses, and the logged
/// counts never decrease across accepted removals.
pub fn verify_soft_core(
    vars: &BTreeSet<Var>,
    clauses: &[Clause],
    result: &SoftCoreResult,
    config: &SoftCoreConfig,
    engine: EngineConfig,
) -> Result<bool, SessionError> {
    let mut all: Vec<usize> = result
        .kept_indices
        .iter()
        .chain(&result.removed_indices)
        .copied()
        .collect();
    all.sort_unstable();
    if all != (0..clauses.len()).collect::<Vec<_>>() {
        return Ok(false);
    }
    if result.order.len() != result.per_step_counts.len() {
        return Ok(false);
    }

    let mut fresh = Session::new(engine);
    let kept: Vec<Clause> = result
        .kept_indices
        .iter()
        .map(|&i| clauses[i].clone())
        .collect();
    fresh.apply_batch(&load_batch(vars, &kept))?;
    let recount = fresh.checkpoint_count()?;
    if recount != result.final_count || !within(&recount, &result.threshold) {
        return Ok(false);
    }

    let replay = compute_soft_core(vars, clauses, config, &mut Session::new(engine))?;
    if replay.removed_indices != result.removed_indices {
        return Ok(false);
    }

    let mut current = result.base_count.clone();
    for count in &result.per_step_counts {
        if count < &current {
            return Ok(false);
        }
        if within(count, &result.threshold) {
            current = count.clone();
        }
    }
    Ok(current == result.final_count)
}
