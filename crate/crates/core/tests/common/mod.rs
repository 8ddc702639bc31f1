#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dyncount::argumentation::ArgumentationFramework;
use dyncount::{Clause, FormulaState, Var};
use num_bigint::BigUint;
use rand::Rng;

pub type RawClause = Vec<i64>;

pub const SAMPLE_FORMULA: [&[i64]; 6] = [
    &[1, 2, 3],
    &[-1, -2, -3],
    &[4, -1],
    &[5, 1],
    &[5, 2, 3],
    &[4, -2, -3],
];

pub fn clause(lits: &[i64]) -> Clause {
    Clause::from_dimacs(lits).unwrap()
}

pub fn state(vars: impl IntoIterator<Item = u32>, clauses: &[RawClause]) -> FormulaState {
    FormulaState::from_parts(
        vars.into_iter().map(Var::new),
        clauses.iter().map(|c| clause(c)),
    )
    .unwrap()
}

pub fn sample_formula() -> FormulaState {
    let clauses: Vec<RawClause> = SAMPLE_FORMULA.iter().map(|c| c.to_vec()).collect();
    state(1..=5, &clauses)
}

/// Models over `vars` by plain enumeration on raw literals.
pub fn oracle_count(vars: &[u32], clauses: &[RawClause]) -> BigUint {
    assert!(vars.len() <= 24, "oracle limited to 24 variables");
    let pos: BTreeMap<u32, usize> = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let encoded: Vec<Vec<(usize, bool)>> = clauses
        .iter()
        .map(|c| {
            c.iter()
                .map(|&l| (pos[&(l.unsigned_abs() as u32)], l > 0))
                .collect()
        })
        .collect();
    let mut n = 0u64;
    for m in 0u64..(1u64 << vars.len()) {
        if encoded.iter().all(|c| {
            c.iter()
                .any(|&(i, positive)| ((m >> i) & 1 == 1) == positive)
        }) {
            n += 1;
        }
    }
    BigUint::from(n)
}

pub fn oracle_state_count(s: &FormulaState) -> BigUint {
    let vars: Vec<u32> = s.active_vars().iter().map(|v| v.id()).collect();
    let clauses: Vec<RawClause> = s.clauses().iter().map(|c| c.to_dimacs()).collect();
    oracle_count(&vars, &clauses)
}

/// Random clause over `1..=n` with distinct variables and width in `widths`.
pub fn random_clause(
    rng: &mut impl Rng,
    n: u32,
    widths: std::ops::RangeInclusive<usize>,
) -> RawClause {
    let k = rng.gen_range(widths).min(n as usize);
    let mut vars: Vec<i64> = Vec::with_capacity(k);
    while vars.len() < k {
        let v = rng.gen_range(1..=n) as i64;
        if !vars.contains(&v) {
            vars.push(v);
        }
    }
    vars.into_iter()
        .map(|v| if rng.gen_bool(0.5) { v } else { -v })
        .collect()
}

pub fn random_cnf(
    rng: &mut impl Rng,
    n: u32,
    m: usize,
    widths: std::ops::RangeInclusive<usize>,
) -> Vec<RawClause> {
    (0..m)
        .map(|_| random_clause(rng, n, widths.clone()))
        .collect()
}

/// Clause set of a state as sorted raw literal lists.
pub fn raw_clause_set(s: &FormulaState) -> BTreeSet<RawClause> {
    s.clauses()
        .iter()
        .map(|c| normalize_raw(&c.to_dimacs()))
        .collect()
}

pub fn normalize_raw(c: &[i64]) -> RawClause {
    let mut v = c.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Complete extensions straight from the definition, over explicit sets.
pub fn oracle_complete_extensions(af: &ArgumentationFramework) -> usize {
    let args: Vec<u32> = af.arguments().iter().copied().collect();
    assert!(args.len() <= 16);
    let attacks = af.attacks();
    let mut n = 0;
    for m in 0u32..(1 << args.len()) {
        let s: BTreeSet<u32> = (0..args.len())
            .filter(|&i| m & (1 << i) != 0)
            .map(|i| args[i])
            .collect();
        let attacks_s = |x: u32| s.iter().any(|&y| attacks.contains(&(y, x)));
        let defends = |a: u32| {
            attacks
                .iter()
                .filter(|&&(_, t)| t == a)
                .all(|&(b, _)| attacks_s(b))
        };
        let conflict_free = s.iter().all(|&a| !attacks_s(a));
        let admissible = s.iter().all(|&a| defends(a));
        let complete = args.iter().filter(|&&a| defends(a)).all(|a| s.contains(a));
        if conflict_free && admissible && complete {
            n += 1;
        }
    }
    n
}

pub fn random_af(rng: &mut impl Rng, max_args: u32) -> ArgumentationFramework {
    let n = rng.gen_range(0..=max_args);
    let density: f64 = rng.gen_range(0.0..0.5);
    let mut attacks = Vec::new();
    for a in 1..=n {
        for b in 1..=n {
            if rng.gen_bool(density) {
                attacks.push((a, b));
            }
        }
    }
    ArgumentationFramework::from_parts(1..=n, attacks).unwrap()
}
