//! Abstract argumentation frameworks as a source of evolving formulas.
//!
//! Argument `a` is encoded by variable `2a - 1`; the auxiliary "is attacked
//! by the extension" variable of argument `b` is `2b`. Identifiers are stable
//! across perturbations so surviving arguments keep their variables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigUint;
use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::formula::{Clause, FormulaState, Lit, Var};
use crate::session::{Session, SessionError, UpdateOp};

pub const BRUTE_FORCE_MAX_ARGS: usize = 16;

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ArgumentationFramework {
    arguments: BTreeSet<u32>,
    attacks: BTreeSet<(u32, u32)>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AfError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("attack ({0}, {1}) mentions an unknown argument")]
    UnknownArgument(u32, u32),
    #[error("{found} arguments exceed the enumeration limit of {limit}")]
    TooLarge { found: usize, limit: usize },
}

impl ArgumentationFramework {
    pub fn new() -> ArgumentationFramework {
        ArgumentationFramework::default()
    }

    /// Arguments `1..=n` without attacks.
    pub fn with_arguments(n: u32) -> ArgumentationFramework {
        ArgumentationFramework {
            arguments: (1..=n).collect(),
            attacks: BTreeSet::new(),
        }
    }

    pub fn from_parts(
        arguments: impl IntoIterator<Item = u32>,
        attacks: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<ArgumentationFramework, AfError> {
        let mut af = ArgumentationFramework {
            arguments: arguments.into_iter().collect(),
            attacks: BTreeSet::new(),
        };
        for (a, b) in attacks {
            af.add_attack(a, b)?;
        }
        Ok(af)
    }

    pub fn arguments(&self) -> &BTreeSet<u32> {
        &self.arguments
    }

    pub fn attacks(&self) -> &BTreeSet<(u32, u32)> {
        &self.attacks
    }

    pub fn len(&self) -> usize {
        self.arguments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arguments.is_empty()
    }

    pub fn add_argument(&mut self, a: u32) {
        assert!(a > 0, "argument identifiers are positive");
        self.arguments.insert(a);
    }

    pub fn add_attack(&mut self, attacker: u32, target: u32) -> Result<(), AfError> {
        if !self.arguments.contains(&attacker) || !self.arguments.contains(&target) {
            return Err(AfError::UnknownArgument(attacker, target));
        }
        self.attacks.insert((attacker, target));
        Ok(())
    }

    pub fn remove_attack(&mut self, attacker: u32, target: u32) -> bool {
        self.attacks.remove(&(attacker, target))
    }

    /// Removes `a` together with every attack it takes part in.
    pub fn remove_argument(&mut self, a: u32) -> bool {
        self.attacks.retain(|&(x, y)| x != a && y != a);
        self.arguments.remove(&a)
    }

    /// Attackers of each attacked argument.
    pub fn attackers(&self) -> BTreeMap<u32, Vec<u32>> {
        let mut m: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for &(b, a) in &self.attacks {
            m.entry(a).or_default().push(b);
        }
        m
    }

    fn next_id(&self) -> u32 {
        self.arguments.last().map_or(1, |m| m + 1)
    }
}

impl fmt::Display for ArgumentationFramework {
    /// ICCMA'23 text; identifiers are written as-is, so the header count is
    /// the largest identifier.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p af {}", self.arguments.last().copied().unwrap_or(0))?;
        for (a, b) in &self.attacks {
            writeln!(f, "{a} {b}")?;
        }
        Ok(())
    }
}

/// Parses the ICCMA'23 format: `p af <n>` then one `<i> <j>` attack per
/// line. Lines starting with `#` are comments.
pub fn parse_af(text: &str) -> Result<ArgumentationFramework, AfError> {
    let err = |line: usize, message: String| AfError::Parse { line, message };
    let mut af: Option<ArgumentationFramework> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        match (&mut af, parts.as_slice()) {
            (None, ["p", "af", n]) => {
                let n: u32 = n
                    .parse()
                    .map_err(|_| err(line, format!("bad argument count `{n}`")))?;
                af = Some(ArgumentationFramework::with_arguments(n));
            }
            (None, _) => return Err(err(line, "expected header `p af <n>`".into())),
            (Some(_), ["p", ..]) => return Err(err(line, "duplicate header".into())),
            (Some(af), [a, b]) => {
                let parse = |s: &str| {
                    s.parse::<u32>()
                        .map_err(|_| err(line, format!("bad argument `{s}`")))
                };
                let (a, b) = (parse(a)?, parse(b)?);
                af.add_attack(a, b).map_err(|e| err(line, e.to_string()))?;
            }
            (Some(_), _) => {
                return Err(err(
                    line,
                    format!("expected `<attacker> <target>`, got `{t}`"),
                ))
            }
        }
    }
    af.ok_or_else(|| err(text.lines().count().max(1), "missing `p af` header".into()))
}

pub fn arg_var(a: u32) -> Var {
    Var::new(2 * a - 1)
}

pub fn defeat_var(b: u32) -> Var {
    Var::new(2 * b)
}

/// CNF whose models are in bijection with the complete extensions.
pub fn encode_complete(af: &ArgumentationFramework) -> FormulaState {
    let attackers = af.attackers();
    let mut vars: Vec<Var> = af.arguments.iter().map(|&a| arg_var(a)).collect();
    vars.extend(attackers.keys().map(|&b| defeat_var(b)));
    let mut clauses: Vec<Clause> = Vec::new();
    let clause = |lits: Vec<Lit>| crate::formula::normalize_clause(&lits);
    for &a in &af.arguments {
        let x = arg_var(a);
        let Some(atk) = attackers.get(&a) else {
            clauses.push(clause(vec![x.positive()]));
            continue;
        };
        // an attacker nobody attacks can never be defeated
        let undefeatable = atk.iter().any(|b| !attackers.contains_key(b));
        for &b in atk {
            clauses.push(clause(vec![x.negative(), arg_var(b).negative()]));
            if attackers.contains_key(&b) {
                clauses.push(clause(vec![x.negative(), defeat_var(b).positive()]));
            }
        }
        if undefeatable {
            clauses.push(clause(vec![x.negative()]));
        } else {
            // everything the extension defends is in it
            let mut complete = vec![x.positive()];
            complete.extend(atk.iter().map(|&b| defeat_var(b).negative()));
            clauses.push(clause(complete));
        }
    }
    for (&b, atk) in &attackers {
        let d = defeat_var(b);
        let mut def = vec![d.negative()];
        def.extend(atk.iter().map(|&c| arg_var(c).positive()));
        clauses.push(clause(def));
        for &c in atk {
            clauses.push(clause(vec![arg_var(c).negative(), d.positive()]));
        }
    }
    FormulaState::from_parts(vars, clauses).expect("encoding only uses declared variables")
}

/// Number of complete extensions by subset enumeration.
pub fn enumerate_complete_bruteforce(af: &ArgumentationFramework) -> Result<BigUint, AfError> {
    Ok(BigUint::from(complete_extensions(af)?.len()))
}

/// All complete extensions as sorted argument lists.
pub fn complete_extensions(af: &ArgumentationFramework) -> Result<Vec<Vec<u32>>, AfError> {
    let n = af.len();
    if n > BRUTE_FORCE_MAX_ARGS {
        return Err(AfError::TooLarge {
            found: n,
            limit: BRUTE_FORCE_MAX_ARGS,
        });
    }
    let args: Vec<u32> = af.arguments.iter().copied().collect();
    let pos: BTreeMap<u32, usize> = args.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    // attackers_of[i]: bitmask of the attackers of args[i]
    let mut attackers_of = vec![0u32; n];
    for &(b, a) in &af.attacks {
        attackers_of[pos[&a]] |= 1 << pos[&b];
    }
    let mut out = Vec::new();
    for s in 0u32..(1u32 << n) {
        let attacked_by_s: u32 = (0..n)
            .filter(|&i| attackers_of[i] & s != 0)
            .fold(0, |m, i| m | (1 << i));
        if attacked_by_s & s != 0 {
            continue;
        }
        let defended: u32 = (0..n)
            .filter(|&i| attackers_of[i] & !attacked_by_s == 0)
            .fold(0, |m, i| m | (1 << i));
        if defended == s {
            out.push(
                (0..n)
                    .filter(|&i| s & (1 << i) != 0)
                    .map(|i| args[i])
                    .collect(),
            );
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationConfig {
    pub delete_argument: f64,
    pub add_argument: f64,
    pub delete_attacks: f64,
    pub add_attacks: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            delete_argument: 0.10,
            add_argument: 0.20,
            delete_attacks: 0.40,
            add_attacks: 0.30,
            steps: 1000,
            seed: 0,
        }
    }
}

impl PerturbationConfig {
    fn probabilities(&self) -> [f64; 4] {
        [
            self.delete_argument,
            self.add_argument,
            self.delete_attacks,
            self.add_attacks,
        ]
    }
}

/// Largest number of elements touched by one perturbation.
pub const MAX_PERTURBATION_SIZE: usize = 3;
const MAX_REDRAWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PerturbationKind {
    DeleteArgument,
    AddArgument,
    DeleteAttacks,
    AddAttacks,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 4] = [
        PerturbationKind::DeleteArgument,
        PerturbationKind::AddArgument,
        PerturbationKind::DeleteAttacks,
        PerturbationKind::AddAttacks,
    ];
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerturbationKind::DeleteArgument => "delete-argument",
            PerturbationKind::AddArgument => "add-argument",
            PerturbationKind::DeleteAttacks => "delete-attacks",
            PerturbationKind::AddAttacks => "add-attacks",
        })
    }
}

/// A fully drawn perturbation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Perturbation {
    DeleteArgument(u32),
    /// New argument and its targets.
    AddArgument(u32, Vec<u32>),
    DeleteAttacks(Vec<(u32, u32)>),
    AddAttacks(Vec<(u32, u32)>),
}

impl Perturbation {
    pub fn kind(&self) -> PerturbationKind {
        match self {
            Perturbation::DeleteArgument(_) => PerturbationKind::DeleteArgument,
            Perturbation::AddArgument(..) => PerturbationKind::AddArgument,
            Perturbation::DeleteAttacks(_) => PerturbationKind::DeleteAttacks,
            Perturbation::AddAttacks(_) => PerturbationKind::AddAttacks,
        }
    }

    pub fn apply(&self, af: &ArgumentationFramework) -> ArgumentationFramework {
        let mut next = af.clone();
        match self {
            Perturbation::DeleteArgument(a) => {
                next.remove_argument(*a);
            }
            Perturbation::AddArgument(a, targets) => {
                next.add_argument(*a);
                for &t in targets {
                    next.add_attack(*a, t).expect("targets exist");
                }
            }
            Perturbation::DeleteAttacks(pairs) => {
                for &(a, b) in pairs {
                    next.remove_attack(a, b);
                }
            }
            Perturbation::AddAttacks(pairs) => {
                for &(a, b) in pairs {
                    next.add_attack(a, b).expect("endpoints exist");
                }
            }
        }
        next
    }
}

fn draw_kind(config: &PerturbationConfig, rng: &mut ChaCha8Rng) -> PerturbationKind {
    let p = config.probabilities();
    let total: f64 = p.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    for (kind, w) in PerturbationKind::ALL.into_iter().zip(p) {
        if r < w {
            return kind;
        }
        r -= w;
    }
    PerturbationKind::AddAttacks
}

fn absent_pairs(af: &ArgumentationFramework) -> usize {
    let n = af.len();
    n * n.saturating_sub(1) - af.attacks.iter().filter(|(a, b)| a != b).count()
}

fn applicable(af: &ArgumentationFramework, kind: PerturbationKind) -> bool {
    match kind {
        PerturbationKind::DeleteArgument => !af.is_empty(),
        PerturbationKind::AddArgument => true,
        PerturbationKind::DeleteAttacks => !af.attacks.is_empty(),
        PerturbationKind::AddAttacks => absent_pairs(af) > 0,
    }
}

/// Draws one perturbation of `af`. Kinds that cannot apply are redrawn; after
/// a bounded number of redraws an argument is added.
pub fn draw_perturbation(
    af: &ArgumentationFramework,
    config: &PerturbationConfig,
    rng: &mut ChaCha8Rng,
) -> Perturbation {
    let kind = (0..MAX_REDRAWS)
        .map(|_| draw_kind(config, rng))
        .find(|&k| applicable(af, k))
        .unwrap_or(PerturbationKind::AddArgument);
    let k = rng.gen_range(1..=MAX_PERTURBATION_SIZE);
    match kind {
        PerturbationKind::DeleteArgument => {
            let a = *af.arguments.iter().choose(rng).expect("non-empty");
            Perturbation::DeleteArgument(a)
        }
        PerturbationKind::AddArgument => {
            let args: Vec<u32> = af.arguments.iter().copied().collect();
            let mut targets: Vec<u32> = args
                .choose_multiple(rng, k.min(args.len()))
                .copied()
                .collect();
            targets.sort_unstable();
            Perturbation::AddArgument(af.next_id(), targets)
        }
        PerturbationKind::DeleteAttacks => {
            let attacks: Vec<(u32, u32)> = af.attacks.iter().copied().collect();
            let mut pairs: Vec<(u32, u32)> = attacks
                .choose_multiple(rng, k.min(attacks.len()))
                .copied()
                .collect();
            pairs.sort_unstable();
            Perturbation::DeleteAttacks(pairs)
        }
        PerturbationKind::AddAttacks => {
            let args: Vec<u32> = af.arguments.iter().copied().collect();
            let want = k.min(absent_pairs(af));
            let mut pairs = BTreeSet::new();
            while pairs.len() < want {
                let a = args[rng.gen_range(0..args.len())];
                let b = args[rng.gen_range(0..args.len())];
                if a != b && !af.attacks.contains(&(a, b)) {
                    pairs.insert((a, b));
                }
            }
            Perturbation::AddAttacks(pairs.into_iter().collect())
        }
    }
}

/// Draws and applies one perturbation.
pub fn perturb(
    af: &ArgumentationFramework,
    config: &PerturbationConfig,
    rng: &mut ChaCha8Rng,
) -> (ArgumentationFramework, Perturbation) {
    let p = draw_perturbation(af, config, rng);
    (p.apply(af), p)
}

pub fn rng_for(config: &PerturbationConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(config.seed)
}

/// Batch that replaces the session formula by the encoding of `af`.
pub fn reset_batch(af: &ArgumentationFramework) -> Vec<UpdateOp> {
    let state = encode_complete(af);
    let mut ops = vec![UpdateOp::Reset];
    ops.extend(state.active_vars().iter().map(|&v| UpdateOp::AddVar(v)));
    ops.extend(state.clauses().iter().cloned().map(UpdateOp::AddClause));
    ops
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub index: usize,
    pub perturbation: Perturbation,
    pub af: ArgumentationFramework,
    pub count: BigUint,
}

#[derive(Debug, Error)]
#[error("step {step}: {source}")]
pub struct DynamicError {
    pub step: usize,
    #[source]
    pub source: SessionError,
}

/// Perturbs `af` `config.steps` times, counting the complete extensions
/// of every intermediate framework through `session`.
pub fn dynamic_sequence(
    af: &ArgumentationFramework,
    config: &PerturbationConfig,
    session: &mut Session,
) -> Result<Vec<Step>, DynamicError> {
    let mut rng = rng_for(config);
    let mut current = af.clone();
    let perturbations = (0..config.steps).map(move |_| {
        let p = draw_perturbation(&current, config, &mut rng);
        current = p.apply(&current);
        p
    });
    replay_sequence(af, perturbations, session)
}

/// Applies the given perturbations in turn, counting after each one.
pub fn replay_sequence(
    af: &ArgumentationFramework,
    perturbations: impl IntoIterator<Item = Perturbation>,
    session: &mut Session,
) -> Result<Vec<Step>, DynamicError> {
    let mut current = af.clone();
    let mut steps = Vec::new();
    for (i, p) in perturbations.into_iter().enumerate() {
        let step = i + 1;
        current = p.apply(&current);
        let wrap = |source| DynamicError { step, source };
        session.apply_batch(&reset_batch(&current)).map_err(wrap)?;
        let count = session.checkpoint_count().map_err(wrap)?;
        steps.push(Step {
            index: step,
            perturbation: p,
            af: current.clone(),
            count,
        });
    }
    Ok(steps)
}
