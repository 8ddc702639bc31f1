//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use dyncount::argumentation::{
    dynamic_sequence, encode_complete, enumerate_complete_bruteforce, ArgumentationFramework,
    PerturbationConfig,
};
use dyncount::cache::{canonicalize, key_for, CacheLookup};
use dyncount::engine::count;
use dyncount::formula::{primal_graph, ClauseList, PrimalGraph};
use dyncount::heuristics::{
    compute_tree_decomposition, select_branch_variable, td_valid_for, ConflictCounts,
    DEFAULT_TD_WEIGHT,
};
use dyncount::session::UpdateOp;
use dyncount::softcore::{compute_soft_core, verify_soft_core, SoftCoreConfig};
use dyncount::{CacheMode, ComponentCache, Counter, EngineConfig, Heuristic, Session, TdMode, Var};
use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn list(clauses: &[&[i64]]) -> ClauseList {
    let cs: Vec<_> = clauses.iter().map(|c| clause(c)).collect();
    ClauseList::from_clauses(&cs)
}

fn worked_example() -> Outcome {
    let phi = sample_formula();
    let expected = BigUint::from(10u32);
    for cfg in EngineConfig::all_combinations() {
        let got = count(&phi, cfg).map_err(|e| e.to_string())?.count;
        ensure(got == expected, || format!("{cfg:?} gave {got}"))?;
    }
    Ok("10 in 12/12 configurations".into())
}

fn soundness_regression() -> Outcome {
    let s1: Vec<RawClause> = vec![vec![1, 2]];
    let s2: Vec<RawClause> = vec![vec![1, 2], vec![-1, -2]];
    let c1 = count(&state(1..=2, &s1), EngineConfig::default())
        .map_err(|e| e.to_string())?
        .count;
    let c2 = count(&state(1..=2, &s2), EngineConfig::default())
        .map_err(|e| e.to_string())?
        .count;
    ensure(
        c1 == BigUint::from(3u32) && c2 == BigUint::from(2u32),
        || format!("counts {c1}, {c2}"),
    )?;
    let l1 = list(&[&[1, 2]]);
    let l2 = list(&[&[1, 2], &[-1, -2]]);
    for mode in CacheMode::ALL {
        let mut cache = ComponentCache::new(1 << 20);
        cache.store(key_for(&l1, mode), c1.clone());
        let (_, hit) = cache.lookup_component(&l2, mode);
        ensure(hit == CacheLookup::Negative, || {
            format!("{mode}: the exclusive pair hit the plain clause's entry")
        })?;
        // and through a live counter sharing its cache across both formulas
        let mut counter = Counter::new(EngineConfig::new(mode, Heuristic::Dlcs, TdMode::Off));
        counter
            .count(&state(1..=2, &s1))
            .map_err(|e| e.to_string())?;
        let r = counter
            .count(&state(1..=2, &s2))
            .map_err(|e| e.to_string())?;
        ensure(r.count == c2, || {
            format!("{mode}: shared counter gave {}", r.count)
        })?;
        ensure(r.stats.positive_hits == 0, || {
            format!("{mode}: positive hit on the exclusive pair")
        })?;
    }
    Ok("{x1∨x2}=3, {x1∨x2, ¬x1∨¬x2}=2, no positive hit in 3/3 modes".into())
}

fn symmetry_golden() -> Outcome {
    let pos = list(&[&[-1, -2], &[4, -1], &[5, 1], &[4, -2]]);
    let neg = list(&[&[1, 2], &[4, -1], &[5, 1], &[5, 2]]);
    let (k1, _) = canonicalize(&pos);
    let (k2, _) = canonicalize(&neg);
    ensure(k1 == k2, || "keys differ".into())?;
    let expected = list(&[&[4, 2], &[1, -4], &[3, 4], &[3, 2]]);
    let mut expected_sorted = expected.clone();
    expected_sorted.sort_clauses();
    ensure(k1.clauses() == &expected_sorted, || {
        format!("key {:?}", k1.clauses().to_clauses())
    })?;
    for (mode, want_hit) in [(CacheMode::SharedSym, true), (CacheMode::Shared, false)] {
        let mut cache = ComponentCache::new(1 << 20);
        let n = oracle_count(
            &[1, 2, 4, 5],
            &pos.iter()
                .map(|c| c.iter().map(|l| l.to_dimacs()).collect())
                .collect::<Vec<_>>(),
        );
        cache.store(key_for(&pos, mode), n.clone());
        let (_, hit) = cache.lookup_component(&neg, mode);
        let ok = if want_hit {
            hit == CacheLookup::Positive(n)
        } else {
            hit == CacheLookup::Negative
        };
        ensure(ok, || format!("{mode}: unexpected {hit:?}"))?;
    }
    Ok("identical key equal to the golden clause set; sym hit, plain miss".into())
}

fn oracle_suite(cache_bytes: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = 0;
    for i in 0..500 {
        let n = rng.gen_range(5..=20u32);
        let m = rng.gen_range(n as usize..=3 * n as usize);
        let cnf = random_cnf(&mut rng, n, m, 1..=4);
        let expected = oracle_count(&(1..=n).collect::<Vec<_>>(), &cnf);
        let s = state(1..=n, &cnf);
        for cfg in EngineConfig::all_combinations() {
            let cfg = EngineConfig { cache_bytes, ..cfg };
            let got = count(&s, cfg).map_err(|e| e.to_string())?.count;
            ensure(got == expected, || {
                format!("instance {i}, {cfg:?}: {got} != {expected}")
            })?;
            checks += 1;
        }
    }
    Ok(checks)
}

fn oracle_equivalence() -> Outcome {
    let checks = oracle_suite(dyncount::engine::DEFAULT_CACHE_BYTES, 0xACCE)?;
    Ok(format!(
        "500 CNFs x 12 configs ({checks} counts) match enumeration"
    ))
}

/// Independent model of the state used to predict every op outcome.
#[derive(Clone)]
struct Model {
    vars: BTreeSet<u32>,
    clauses: BTreeSet<RawClause>,
}

impl Model {
    fn apply(&mut self, op: &UpdateOp) -> bool {
        match op {
            UpdateOp::AddVar(v) => self.vars.insert(v.id()),
            UpdateOp::RemVar(v) => {
                let used = self
                    .clauses
                    .iter()
                    .any(|c| c.iter().any(|l| l.unsigned_abs() as u32 == v.id()));
                !used && self.vars.remove(&v.id())
            }
            UpdateOp::AddClause(c) => {
                let raw = normalize_raw(&c.to_dimacs());
                if raw
                    .iter()
                    .all(|l| self.vars.contains(&(l.unsigned_abs() as u32)))
                {
                    self.clauses.insert(raw);
                    true
                } else {
                    false
                }
            }
            UpdateOp::RemClause(c) => self.clauses.remove(&normalize_raw(&c.to_dimacs())),
            UpdateOp::Reset => {
                self.vars.clear();
                self.clauses.clear();
                true
            }
            UpdateOp::Load(_) => unreachable!(),
        }
    }

    fn count(&self) -> BigUint {
        let vars: Vec<u32> = self.vars.iter().copied().collect();
        let clauses: Vec<RawClause> = self.clauses.iter().cloned().collect();
        oracle_count(&vars, &clauses)
    }
}

fn random_op(rng: &mut ChaCha8Rng, model: &Model, max_var: u32) -> UpdateOp {
    let any_var = |rng: &mut ChaCha8Rng| Var::new(rng.gen_range(1..=max_var));
    match rng.gen_range(0..100) {
        0..=19 => UpdateOp::AddVar(any_var(rng)),
        20..=29 => UpdateOp::RemVar(any_var(rng)),
        30..=69 => {
            // mostly over active variables so most additions succeed
            let active: Vec<u32> = model.vars.iter().copied().collect();
            if active.is_empty() || rng.gen_bool(0.1) {
                UpdateOp::AddClause(clause(&random_clause(rng, max_var, 1..=3)))
            } else {
                let k = rng.gen_range(1..=3.min(active.len()));
                let lits: Vec<i64> = active
                    .choose_multiple(rng, k)
                    .map(|&v| {
                        if rng.gen_bool(0.5) {
                            v as i64
                        } else {
                            -(v as i64)
                        }
                    })
                    .collect();
                UpdateOp::AddClause(clause(&lits))
            }
        }
        70..=94 => {
            let existing: Vec<&RawClause> = model.clauses.iter().collect();
            match existing.choose(rng) {
                Some(c) if rng.gen_bool(0.9) => UpdateOp::RemClause(clause(c)),
                _ => UpdateOp::RemClause(clause(&random_clause(rng, max_var, 1..=3))),
            }
        }
        _ => UpdateOp::Reset,
    }
}

fn metamorphic_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3E7A);
    let configs = EngineConfig::all_combinations();
    let mut checkpoints = 0;
    let mut failed_batches = 0;
    for seq in 0..100 {
        let max_var = rng.gen_range(4..=18u32);
        let mut sessions: Vec<Session> = configs.iter().map(|&c| Session::new(c)).collect();
        let mut model = Model {
            vars: BTreeSet::new(),
            clauses: BTreeSet::new(),
        };
        let mut ops_left = rng.gen_range(5..=20usize);
        // seed the state so early counts are not trivial
        let init: Vec<UpdateOp> = (1..=max_var)
            .map(|v| UpdateOp::AddVar(Var::new(v)))
            .collect();
        for s in &mut sessions {
            s.apply_batch(&init).map_err(|e| e.to_string())?;
        }
        for op in &init {
            model.apply(op);
        }
        while ops_left > 0 {
            let size = rng.gen_range(1..=3usize).min(ops_left);
            ops_left -= size;
            let mut trial = model.clone();
            let mut batch = Vec::new();
            let mut ok = true;
            for _ in 0..size {
                let op = random_op(&mut rng, &trial, max_var);
                ok &= trial.apply(&op);
                batch.push(op);
            }
            if ok {
                model = trial;
            } else {
                failed_batches += 1;
            }
            for s in &mut sessions {
                let before = raw_clause_set(s.state());
                let before_vars = s.state().active_vars().clone();
                let res = s.apply_batch(&batch);
                ensure(res.is_ok() == ok, || {
                    format!("sequence {seq}: batch {batch:?} outcome {res:?}")
                })?;
                if !ok {
                    ensure(
                        raw_clause_set(s.state()) == before
                            && s.state().active_vars() == &before_vars,
                        || format!("sequence {seq}: failed batch changed the state"),
                    )?;
                }
            }
            if rng.gen_bool(0.6) {
                let expected = model.count();
                for s in &mut sessions {
                    let got = s.checkpoint_count().map_err(|e| e.to_string())?;
                    ensure(got == expected, || {
                        format!(
                            "sequence {seq}: {:?} counted {got}, oracle {expected}",
                            s.config()
                        )
                    })?;
                }
                checkpoints += 1;
            }
        }
        let expected = model.count();
        for s in &mut sessions {
            let got = s.checkpoint_count().map_err(|e| e.to_string())?;
            ensure(got == expected, || {
                format!("sequence {seq}: final {got} != {expected}")
            })?;
        }
        checkpoints += 1;
    }
    Ok(format!("{checkpoints} checkpoints x 12 configs agree with the oracle; {failed_batches} failing batches rolled back"))
}

fn cache_reuse() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE);
    let formulas = [
        sample_formula(),
        state(1..=14, &random_cnf(&mut rng, 14, 40, 2..=3)),
    ];
    for phi in &formulas {
        for mode in CacheMode::ALL {
            let mut s = Session::with_state(
                phi.clone(),
                EngineConfig::new(mode, Heuristic::Dlcs, TdMode::Off),
            );
            s.checkpoint_count().map_err(|e| e.to_string())?;
            s.checkpoint_count().map_err(|e| e.to_string())?;
            let (a, b) = (s.checkpoints()[0].stats, s.checkpoints()[1].stats);
            ensure(s.checkpoints()[0].count == s.checkpoints()[1].count, || {
                "counts differ".into()
            })?;
            ensure(a.decisions > 0, || "formula is trivial".into())?;
            if mode.is_shared() {
                ensure(b.positive_hits >= 1 && b.decisions == 0, || {
                    format!("{mode}: second count {b:?}")
                })?;
            } else {
                ensure(b.carried_hits == 0 && a.decisions == b.decisions, || {
                    format!("{mode}: second count {b:?}")
                })?;
            }
        }
    }
    // the worked example has no within-count reuse, so no-shared sees none at all
    let mut s = Session::with_state(
        sample_formula(),
        EngineConfig::new(CacheMode::NoShared, Heuristic::Dlcs, TdMode::Off),
    );
    s.checkpoint_count().map_err(|e| e.to_string())?;
    s.checkpoint_count().map_err(|e| e.to_string())?;
    let b = s.checkpoints()[1].stats;
    ensure(b.positive_hits == 0, || {
        format!("no-shared positive hits {}", b.positive_hits)
    })?;
    Ok(
        "shared: 0 decisions and >=1 hit on recount; no-shared: equal decisions, 0 carried hits"
            .into(),
    )
}

fn sequence_sharing() -> Outcome {
    let mut wins = 0;
    let mut totals = (0u64, 0u64);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let cnf = random_cnf(&mut rng, 50, 210, 3..=3);
        let base = state(1..=50, &cnf);
        let mut distinct: Vec<RawClause> = raw_clause_set(&base).into_iter().collect();
        distinct.shuffle(&mut rng);
        let removals: Vec<UpdateOp> = distinct
            .iter()
            .take(30)
            .map(|c| UpdateOp::RemClause(clause(c)))
            .collect();
        let run = |mode: CacheMode| -> Result<(u64, Vec<BigUint>), String> {
            let mut s = Session::with_state(
                base.clone(),
                EngineConfig::new(mode, Heuristic::Dlcs, TdMode::Off),
            );
            s.checkpoint_count().map_err(|e| e.to_string())?;
            for op in &removals {
                s.apply_op(op).map_err(|e| e.to_string())?;
                s.checkpoint_count().map_err(|e| e.to_string())?;
            }
            Ok((s.totals().decisions, s.counts()))
        };
        let (sym, sym_counts) = run(CacheMode::SharedSym)?;
        let (plain, plain_counts) = run(CacheMode::NoShared)?;
        ensure(sym_counts == plain_counts, || {
            format!("seed {seed}: counts differ across modes")
        })?;
        totals.0 += sym;
        totals.1 += plain;
        if sym <= plain {
            wins += 1;
        }
    }
    let msg = format!(
        "shared-sym <= no-shared in {wins}/20 seeds (need 16); decisions {} vs {}",
        totals.0, totals.1
    );
    if wins >= 16 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn argumentation_correctness() -> Outcome {
    let canonical = [
        (ArgumentationFramework::with_arguments(3), 1u32),
        (
            ArgumentationFramework::from_parts(1..=2, [(1, 2), (2, 1)]).unwrap(),
            3,
        ),
        (
            ArgumentationFramework::from_parts(1..=3, [(1, 2), (2, 3), (3, 1)]).unwrap(),
            1,
        ),
    ];
    for (af, want) in &canonical {
        let got = count(&encode_complete(af), EngineConfig::default())
            .map_err(|e| e.to_string())?
            .count;
        ensure(got == BigUint::from(*want), || format!("{af:?}: {got}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xAF);
    for i in 0..200 {
        let af = random_af(&mut rng, 12);
        let brute = enumerate_complete_bruteforce(&af).map_err(|e| e.to_string())?;
        let independent = BigUint::from(oracle_complete_extensions(&af));
        let got = count(&encode_complete(&af), EngineConfig::default())
            .map_err(|e| e.to_string())?
            .count;
        ensure(got == brute && brute == independent, || {
            format!("AF {i}: engine {got}, oracle {brute}, definition {independent}")
        })?;
    }
    Ok("3 canonical cases and 200 random AFs match the extension oracle".into())
}

fn dynamic_reproducibility() -> Outcome {
    let start =
        ArgumentationFramework::from_parts(1..=6, [(1, 2), (2, 1), (3, 4), (4, 5), (5, 3), (6, 6)])
            .unwrap();
    let config = PerturbationConfig {
        steps: 50,
        seed: 2024,
        ..PerturbationConfig::default()
    };
    let mut runs = Vec::new();
    for mode in CacheMode::ALL {
        let mut s = Session::new(EngineConfig::new(mode, Heuristic::Dlcs, TdMode::Off));
        runs.push(dynamic_sequence(&start, &config, &mut s).map_err(|e| e.to_string())?);
    }
    ensure(runs.iter().all(|r| r == &runs[0]), || {
        "sequences differ across cache modes".into()
    })?;
    let mut validated = 0;
    for step in &runs[0] {
        if step.af.len() <= 10 {
            let want = BigUint::from(oracle_complete_extensions(&step.af));
            ensure(step.count == want, || {
                format!("step {}: {} != {want}", step.index, step.count)
            })?;
            validated += 1;
        }
    }
    ensure(validated > 0, || "no step small enough to validate".into())?;
    Ok(format!(
        "50 steps identical in 3/3 modes; {validated} steps validated by the oracle"
    ))
}

fn softcore_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x50F7);
    let config = SoftCoreConfig::default();
    let engine = EngineConfig::default();
    let mut done = 0;
    while done < 50 {
        let n = rng.gen_range(3..=16u32);
        let m = rng.gen_range(2..=2 * n as usize);
        let cnf = random_cnf(&mut rng, n, m, 1..=3);
        let vars_raw: Vec<u32> = (1..=n).collect();
        if oracle_count(&vars_raw, &cnf) == BigUint::from(0u32) {
            continue;
        }
        let vars: BTreeSet<Var> = (1..=n).map(Var::new).collect();
        let clauses: Vec<_> = cnf.iter().map(|c| clause(c)).collect();
        let r = compute_soft_core(&vars, &clauses, &config, &mut Session::new(engine))
            .map_err(|e| e.to_string())?;
        ensure(
            verify_soft_core(&vars, &clauses, &r, &config, engine).map_err(|e| e.to_string())?,
            || format!("instance {done} fails verification"),
        )?;
        // replay the trial log against the oracle
        let mut present: Vec<bool> = vec![true; cnf.len()];
        let threshold = r.threshold.clone().expect("finite delta");
        for (&i, got) in r.order.iter().zip(&r.per_step_counts) {
            let norm = normalize_raw(&cnf[i]);
            let mut trial = present.clone();
            for (j, c) in cnf.iter().enumerate() {
                if normalize_raw(c) == norm {
                    trial[j] = false;
                }
            }
            let kept: Vec<RawClause> = (0..cnf.len())
                .filter(|&j| trial[j])
                .map(|j| cnf[j].clone())
                .collect();
            let want = oracle_count(&vars_raw, &kept);
            ensure(&want == got, || {
                format!("instance {done}, trial {i}: {got} != {want}")
            })?;
            if want <= threshold {
                present = trial;
            }
        }
        done += 1;
    }
    Ok("50 satisfiable CNFs verified; every trial count matches the oracle".into())
}

fn random_graph(rng: &mut ChaCha8Rng) -> PrimalGraph {
    let n = rng.gen_range(1..=30u32);
    let p: f64 = rng.gen_range(0.05..0.5);
    let mut g = PrimalGraph::new();
    for v in 1..=n {
        g.add_vertex(Var::new(v));
    }
    for u in 1..=n {
        for v in u + 1..=n {
            if rng.gen_bool(p) {
                g.add_edge(Var::new(u), Var::new(v));
            }
        }
    }
    g
}

fn td_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7D);
    for i in 0..100 {
        let mut g = random_graph(&mut rng);
        let td = compute_tree_decomposition(&g, 0);
        ensure(td.is_structurally_valid() && td_valid_for(&td, &g), || {
            format!("graph {i}: invalid decomposition")
        })?;
        let edges: Vec<_> = g.edges().iter().copied().collect();
        for (u, v) in edges.choose_multiple(&mut rng, edges.len() / 2) {
            g.remove_edge(*u, *v);
            ensure(td_valid_for(&td, &g), || {
                format!("graph {i}: invalid after deleting an edge")
            })?;
        }
    }
    // dominance: with the default weight a shallowest variable always wins
    let mut checked = 0;
    for i in 0..100 {
        let n = rng.gen_range(4..=16u32);
        let m = rng.gen_range(n as usize..=3 * n as usize);
        let cnf = random_cnf(&mut rng, n, m, 2..=3);
        let s = state(1..=n, &cnf);
        let td = compute_tree_decomposition(&primal_graph(s.clauses()), 0);
        let clauses = ClauseList::from_clauses(s.clauses());
        let mut conflicts = ConflictCounts::new();
        for _ in 0..rng.gen_range(0..5) {
            conflicts.record_conflict(clauses.get(rng.gen_range(0..clauses.len())));
        }
        for h in Heuristic::ALL {
            let chosen =
                select_branch_variable(&clauses, h, &conflicts, Some(&td), DEFAULT_TD_WEIGHT)
                    .unwrap();
            let min_depth = clauses
                .vars()
                .iter()
                .filter_map(|&v| td.depth_of(v))
                .min()
                .unwrap();
            ensure(td.depth_of(chosen) == Some(min_depth), || {
                format!("instance {i}: {chosen} is not shallowest")
            })?;
            checked += 1;
        }
    }
    Ok(format!(
        "100 graphs valid, still valid after edge deletions; {checked} selections at minimal depth"
    ))
}

fn eviction_safety() -> Outcome {
    let checks = oracle_suite(4096, 0xE71C)?;
    Ok(format!("4 KiB budget: {checks} counts match enumeration"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("worked example", Duration::from_secs(1), worked_example),
        (
            "soundness regression",
            Duration::from_secs(1),
            soundness_regression,
        ),
        ("symmetry golden", Duration::from_secs(1), symmetry_golden),
        (
            "oracle equivalence",
            Duration::from_secs(120),
            oracle_equivalence,
        ),
        (
            "metamorphic incremental",
            Duration::from_secs(120),
            metamorphic_suite,
        ),
        ("cache reuse", Duration::from_secs(1), cache_reuse),
        (
            "sequence sharing",
            Duration::from_secs(600),
            sequence_sharing,
        ),
        (
            "argumentation correctness",
            Duration::from_secs(60),
            argumentation_correctness,
        ),
        (
            "dynamic-sequence reproducibility",
            Duration::from_secs(60),
            dynamic_reproducibility,
        ),
        (
            "soft-core properties",
            Duration::from_secs(120),
            softcore_properties,
        ),
        ("tree decomposition", Duration::from_secs(1), td_suite),
        ("eviction safety", Duration::from_secs(60), eviction_safety),
    ];
    let mut failures = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let timing = format!(
            "{:.2}s, target {}s",
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        match outcome {
            Ok(detail) if elapsed <= budget => println!("PASS {name}: {detail} [{timing}]"),
            Ok(detail) => {
                failures += 1;
                println!("FAIL {name}: over time budget; {detail} [{timing}]");
            }
            Err(why) => {
                failures += 1;
                println!("FAIL {name}: {why} [{timing}]");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", 12 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
