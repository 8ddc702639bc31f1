//! The persistent component cache.
//!
//! Keys are fully explicit clause lists, never references into a particular
//! input formula, so an entry stays valid however the formula evolves. In
//! symmetry mode a component is first renamed into a quasi-canonical form
//! derived from its literal frequencies, letting isomorphic components with
//! different variables share one entry.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{BuildHasherDefault, Hash, Hasher};

use num_bigint::BigUint;
use serde::Serialize;

use crate::formula::{ClauseList, Lit, Var};

/// Fixed per-entry bookkeeping charged on top of the key and count bytes.
pub const ENTRY_OVERHEAD_BYTES: usize = 48;

/// Eviction stops once usage is at or below this fraction of the budget.
pub const EVICTION_TARGET: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CacheMode {
    /// Cache cleared before every count.
    NoShared,
    /// Cache persists across counts.
    Shared,
    /// Persistent cache keyed by canonicalized components.
    SharedSym,
}

impl CacheMode {
    pub const ALL: [CacheMode; 3] = [CacheMode::NoShared, CacheMode::Shared, CacheMode::SharedSym];

    pub fn is_shared(self) -> bool {
        !matches!(self, CacheMode::NoShared)
    }
}

impl fmt::Display for CacheMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CacheMode::NoShared => "noshared",
            CacheMode::Shared => "shared",
            CacheMode::SharedSym => "shared-sym",
        })
    }
}

/// 64-bit FNV-1a over literal codes, with 0 as clause separator.
fn stable_hash(clauses: &ClauseList) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut mix = |x: u32| {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    for clause in clauses.iter() {
        for l in clause {
            mix(l.code());
        }
        mix(0);
    }
    h
}

/// An explicit clause-list key. Equality is full list comparison; the hash is
/// only used to find the bucket.
#[derive(Debug, Clone)]
pub struct CacheKey {
    clauses: ClauseList,
    hash: u64,
}

impl CacheKey {
    /// Key for an already normalized clause list (sorted literals, sorted
    /// clauses).
    pub fn explicit(clauses: ClauseList) -> CacheKey {
        let hash = stable_hash(&clauses);
        CacheKey { clauses, hash }
    }

    pub fn clauses(&self) -> &ClauseList {
        &self.clauses
    }

    pub fn stable_hash(&self) -> u64 {
        self.hash
    }

    /// Approximate heap footprint of the key.
    pub fn byte_size(&self) -> usize {
        self.clauses.num_lits() * std::mem::size_of::<Lit>()
            + self.clauses.len() * std::mem::size_of::<u32>()
    }

    /// Literal codes with 0 closing each clause.
    pub fn to_codes(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.clauses.num_lits() + self.clauses.len());
        for c in self.clauses.iter() {
            out.extend(c.iter().map(|l| l.code()));
            out.push(0);
        }
        out
    }
}

impl PartialEq for CacheKey {
    fn eq(&self, other: &Self) -> bool {
        self.hash == other.hash && self.clauses == other.clauses
    }
}

impl Eq for CacheKey {}

impl Hash for CacheKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.hash);
    }
}

/// Passes the precomputed key hash straight through.
#[derive(Default)]
pub struct KeyHasher(u64);

impl Hasher for KeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = self.0.rotate_left(8) ^ b as u64;
        }
    }

    fn write_u64(&mut self, n: u64) {
        self.0 = n;
    }
}

/// Occurrence counts of the two literals of one variable, the less frequent
/// literal first (the negative one on ties).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiteralPair {
    pub var: Var,
    pub first: Lit,
    pub first_count: u32,
    pub second: Lit,
    pub second_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyProfile {
    /// One pair per occurring variable, ascending by variable.
    pub pairs: Vec<LiteralPair>,
}

pub fn frequency_profile(clauses: &ClauseList) -> FrequencyProfile {
    let mut counts: BTreeMap<Var, (u32, u32)> = BTreeMap::new();
    for &l in clauses.all_lits() {
        let e = counts.entry(l.var()).or_insert((0, 0));
        if l.is_positive() {
            e.1 += 1;
        } else {
            e.0 += 1;
        }
    }
    let pairs = counts
        .into_iter()
        .map(|(var, (neg, pos))| {
            if neg <= pos {
                LiteralPair {
                    var,
                    first: var.negative(),
                    first_count: neg,
                    second: var.positive(),
                    second_count: pos,
                }
            } else {
                LiteralPair {
                    var,
                    first: var.positive(),
                    first_count: pos,
                    second: var.negative(),
                    second_count: neg,
                }
            }
        })
        .collect();
    FrequencyProfile { pairs }
}

/// Orders pairs by `(first count, second count)`, ties by variable.
pub fn sort_profile(profile: &FrequencyProfile) -> Vec<LiteralPair> {
    let mut pairs = profile.pairs.clone();
    pairs.sort_by_key(|p| (p.first_count, p.second_count, p.var));
    pairs
}

/// A literal bijection that maps complements to complements.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LiteralPermutation {
    map: BTreeMap<Lit, Lit>,
}

impl LiteralPermutation {
    pub fn insert_var_mapping(&mut self, from: Lit, to: Lit) {
        self.map.insert(from, to);
        self.map.insert(!from, !to);
    }

    pub fn apply(&self, lit: Lit) -> Option<Lit> {
        self.map.get(&lit).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Lit, Lit)> + '_ {
        self.map.iter().map(|(&a, &b)| (a, b))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// `σ(¬ℓ) = ¬σ(ℓ)` for every mapped literal.
    pub fn is_stable(&self) -> bool {
        self.map
            .iter()
            .all(|(&a, &b)| self.map.get(&!a) == Some(&!b))
    }

    pub fn is_injective(&self) -> bool {
        let mut images: Vec<Lit> = self.map.values().copied().collect();
        images.sort_unstable();
        images.windows(2).all(|w| w[0] != w[1])
    }
}

/// The first literal of the pair at position `i` (1-based) maps to the
/// negative literal of variable `i`.
pub fn build_renaming(ordered: &[LiteralPair]) -> LiteralPermutation {
    let mut perm = LiteralPermutation::default();
    for (i, pair) in ordered.iter().enumerate() {
        perm.insert_var_mapping(pair.first, Var::new(i as u32 + 1).negative());
    }
    perm
}

/// Applies a renaming to every literal and renormalizes.
pub fn apply_permutation(clauses: &ClauseList, perm: &LiteralPermutation) -> ClauseList {
    let mut out = ClauseList::with_capacity(clauses.len(), clauses.num_lits());
    let mut buf = Vec::new();
    for clause in clauses.iter() {
        buf.clear();
        buf.extend(
            clause
                .iter()
                .map(|&l| perm.apply(l).expect("permutation covers the clause")),
        );
        buf.sort_unstable();
        buf.dedup();
        out.push(&buf);
    }
    out.sort_clauses();
    out
}

/// Quasi-canonical key of a component plus the renaming that produced it.
pub fn canonicalize(clauses: &ClauseList) -> (CacheKey, LiteralPermutation) {
    let order = sort_profile(&frequency_profile(clauses));
    let perm = build_renaming(&order);
    let renamed = apply_permutation(clauses, &perm);
    (CacheKey::explicit(renamed), perm)
}

/// Builds the key a component is stored under in `mode`.
pub fn key_for(clauses: &ClauseList, mode: CacheMode) -> CacheKey {
    match mode {
        CacheMode::NoShared | CacheMode::Shared => CacheKey::explicit(clauses.clone()),
        CacheMode::SharedSym => canonicalize(clauses).0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheLookup {
    Positive(BigUint),
    Negative,
}

#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub count: BigUint,
    pub hits: u64,
    pub last_touched: u64,
    pub byte_size: usize,
    /// Count epoch in which the entry was stored.
    pub epoch: u64,
    seq: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub positive_hits: u64,
    pub negative_hits: u64,
    /// Positive hits on entries stored during an earlier count.
    pub carried_hits: u64,
    pub stores: u64,
    pub evictions: u64,
}

#[derive(Debug, Clone)]
pub struct ComponentCache {
    entries: HashMap<CacheKey, CacheEntry, BuildHasherDefault<KeyHasher>>,
    budget: usize,
    bytes: usize,
    clock: u64,
    epoch: u64,
    next_seq: u64,
    stats: CacheStats,
}

impl ComponentCache {
    pub fn new(budget_bytes: usize) -> ComponentCache {
        assert!(budget_bytes > 0, "cache budget must be positive");
        ComponentCache {
            entries: HashMap::default(),
            budget: budget_bytes,
            bytes: 0,
            clock: 0,
            epoch: 0,
            next_seq: 0,
            stats: CacheStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn bytes(&self) -> usize {
        self.bytes
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    /// Sets the revision used for entry ages.
    pub fn set_clock(&mut self, revision: u64) {
        self.clock = self.clock.max(revision);
    }

    /// Marks the start of a new count; hits on older entries are "carried".
    pub fn begin_epoch(&mut self) {
        self.epoch += 1;
    }

    /// Drops all entries; statistics are kept.
    pub fn clear(&mut self) {
        self.entries.clear();
        self.bytes = 0;
    }

    pub fn get(&self, key: &CacheKey) -> Option<&CacheEntry> {
        self.entries.get(key)
    }

    pub fn lookup(&mut self, key: &CacheKey) -> CacheLookup {
        match self.entries.get_mut(key) {
            Some(entry) => {
                entry.hits += 1;
                entry.last_touched = self.clock;
                self.stats.positive_hits += 1;
                if entry.epoch < self.epoch {
                    self.stats.carried_hits += 1;
                }
                CacheLookup::Positive(entry.count.clone())
            }
            None => {
                self.stats.negative_hits += 1;
                CacheLookup::Negative
            }
        }
    }

    /// Builds the mode's key for a component and looks it up.
    pub fn lookup_component(
        &mut self,
        clauses: &ClauseList,
        mode: CacheMode,
    ) -> (CacheKey, CacheLookup) {
        let key = key_for(clauses, mode);
        let result = self.lookup(&key);
        (key, result)
    }

    /// Inserts an entry; storing an existing key is a no-op.
    pub fn store(&mut self, key: CacheKey, count: BigUint) {
        if self.entries.contains_key(&key) {
            return;
        }
        let byte_size =
            key.byte_size() + (count.bits() as usize).div_ceil(8) + ENTRY_OVERHEAD_BYTES;
        self.bytes += byte_size;
        self.stats.stores += 1;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.entries.insert(
            key,
            CacheEntry {
                count,
                hits: 0,
                last_touched: self.clock,
                byte_size,
                epoch: self.epoch,
                seq,
            },
        );
        if self.bytes > self.budget {
            self.evict();
        }
    }

    /// Removes the lowest scoring entries (hits per revision of age, oldest
    /// insertion first on ties) until usage is at most 80% of the budget.
    pub fn evict(&mut self) {
        if self.bytes <= self.budget {
            return;
        }
        let target = (self.budget as f64 * EVICTION_TARGET) as usize;
        let clock = self.clock;
        let mut ranked: Vec<(u64, u64, u64, CacheKey)> = self
            .entries
            .iter()
            .map(|(k, e)| {
                (
                    e.hits,
                    clock - e.last_touched.min(clock) + 1,
                    e.seq,
                    k.clone(),
                )
            })
            .collect();
        ranked.sort_by(|a, b| {
            // a.hits / a.age  vs  b.hits / b.age
            let lhs = a.0 as u128 * b.1 as u128;
            let rhs = b.0 as u128 * a.1 as u128;
            lhs.cmp(&rhs).then(a.2.cmp(&b.2))
        });
        for (_, _, _, key) in ranked {
            if self.bytes <= target {
                break;
            }
            if let Some(e) = self.entries.remove(&key) {
                self.bytes -= e.byte_size;
                self.stats.evictions += 1;
            }
        }
    }
}
