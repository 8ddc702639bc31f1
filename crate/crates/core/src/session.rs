//! The evolving formula, its update operations and checkpointed counting.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use serde::Serialize;
use thiserror::Error;

use crate::dimacs::{parse_dimacs, DimacsError};
use crate::engine::{Counter, EngineConfig, EngineError, SearchStats};
use crate::formula::{Clause, FormulaError, FormulaState, StateError, Var};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UpdateOp {
    AddClause(Clause),
    RemClause(Clause),
    AddVar(Var),
    RemVar(Var),
    /// Drops every clause and variable. The cache is kept.
    Reset,
    /// Reads a DIMACS file, activates its header variables and adds its clauses.
    Load(PathBuf),
}

impl UpdateOp {
    pub fn name(&self) -> &'static str {
        match self {
            UpdateOp::AddClause(_) => "add_clause",
            UpdateOp::RemClause(_) => "rem_clause",
            UpdateOp::AddVar(_) => "add_var",
            UpdateOp::RemVar(_) => "rem_var",
            UpdateOp::Reset => "reset",
            UpdateOp::Load(_) => "load",
        }
    }
}

pub type UpdateBatch = Vec<UpdateOp>;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{op}: {source}")]
    Precondition {
        op: &'static str,
        #[source]
        source: StateError,
    },
    #[error("load {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("load {path}: {source}")]
    Dimacs {
        path: PathBuf,
        #[source]
        source: DimacsError,
    },
    #[error("operation {index} of batch: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<SessionError>,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Non-fatal outcome of an operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    DuplicateClause(Clause),
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::DuplicateClause(c) => write!(f, "duplicate clause {c} ignored"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Checkpoint {
    pub index: usize,
    #[serde(serialize_with = "serialize_decimal")]
    pub count: BigUint,
    pub stats: SearchStats,
    pub cache_entries: usize,
    pub cache_bytes: usize,
}

fn serialize_decimal<S: serde::Serializer>(n: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&n.to_str_radix(10))
}

#[derive(Debug, Clone)]
pub struct Session {
    state: FormulaState,
    counter: Counter,
    checkpoints: Vec<Checkpoint>,
    totals: SearchStats,
}

impl Session {
    pub fn new(config: EngineConfig) -> Session {
        Session::with_state(FormulaState::new(), config)
    }

    pub fn with_state(state: FormulaState, config: EngineConfig) -> Session {
        Session {
            state,
            counter: Counter::new(config),
            checkpoints: Vec::new(),
            totals: SearchStats::default(),
        }
    }

    pub fn state(&self) -> &FormulaState {
        &self.state
    }

    pub fn counter(&self) -> &Counter {
        &self.counter
    }

    pub fn config(&self) -> &EngineConfig {
        self.counter.config()
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    pub fn counts(&self) -> Vec<BigUint> {
        self.checkpoints.iter().map(|c| c.count.clone()).collect()
    }

    pub fn last_checkpoint(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }

    /// Statistics summed over all checkpoints.
    pub fn totals(&self) -> SearchStats {
        self.totals
    }

    /// Forgets the conflict counters used by VSADS. They survive `reset`.
    pub fn clear_conflicts(&mut self) {
        self.counter.clear_conflicts();
    }

    pub fn apply_op(&mut self, op: &UpdateOp) -> Result<Vec<Warning>, SessionError> {
        apply_to(&mut self.state, op)
    }

    /// Applies `batch` in order. On failure the state is restored to what
    /// it was before the batch.
    pub fn apply_batch(&mut self, batch: &[UpdateOp]) -> Result<Vec<Warning>, SessionError> {
        let snapshot = self.state.clone();
        let mut warnings = Vec::new();
        for (index, op) in batch.iter().enumerate() {
            match apply_to(&mut self.state, op) {
                Ok(w) => warnings.extend(w),
                Err(e) => {
                    self.state = snapshot;
                    return Err(SessionError::Batch {
                        index,
                        source: Box::new(e),
                    });
                }
            }
        }
        Ok(warnings)
    }

    /// Counts the current formula over its active variables and records a
    /// checkpoint.
    pub fn checkpoint_count(&mut self) -> Result<BigUint, SessionError> {
        let result = self.counter.count(&self.state)?;
        self.totals = self.totals + result.stats;
        let cache = self.counter.cache();
        self.checkpoints.push(Checkpoint {
            index: self.checkpoints.len() + 1,
            count: result.count.clone(),
            stats: result.stats,
            cache_entries: cache.len(),
            cache_bytes: cache.bytes(),
        });
        Ok(result.count)
    }
}

fn precondition(op: &UpdateOp) -> impl FnOnce(StateError) -> SessionError {
    let name = op.name();
    move |source| SessionError::Precondition { op: name, source }
}

fn apply_to(state: &mut FormulaState, op: &UpdateOp) -> Result<Vec<Warning>, SessionError> {
    match op {
        UpdateOp::AddClause(c) => {
            let added = state.add_clause(c.clone()).map_err(precondition(op))?;
            if !added {
                return Ok(vec![Warning::DuplicateClause(c.clone())]);
            }
        }
        UpdateOp::RemClause(c) => state.remove_clause(c).map_err(precondition(op))?,
        UpdateOp::AddVar(v) => state.add_var(*v).map_err(precondition(op))?,
        UpdateOp::RemVar(v) => state.remove_var(*v).map_err(precondition(op))?,
        UpdateOp::Reset => state.clear(),
        UpdateOp::Load(path) => return load_into(state, path),
    }
    Ok(Vec::new())
}

fn load_into(state: &mut FormulaState, path: &Path) -> Result<Vec<Warning>, SessionError> {
    let text = std::fs::read_to_string(path).map_err(|e| SessionError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let cnf = parse_dimacs(&text).map_err(|source| SessionError::Dimacs {
        path: path.to_path_buf(),
        source,
    })?;
    let mut next = state.clone();
    for id in 1..=cnf.num_vars {
        let v = Var::new(id);
        if !next.active_vars().contains(&v) {
            next.add_var(v)
                .map_err(|source| SessionError::Precondition { op: "load", source })?;
        }
    }
    let mut warnings = Vec::new();
    for c in cnf.clauses {
        let added = next
            .add_clause(c.clone())
            .map_err(|source| SessionError::Precondition { op: "load", source })?;
        if !added {
            warnings.push(Warning::DuplicateClause(c));
        }
    }
    *state = next;
    Ok(warnings)
}

/// A parsed line of the session script.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Op(UpdateOp),
    Count,
    Stats,
    Quit,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ScriptParseError {
    pub line: usize,
    pub message: String,
}

/// Parses one script line. Blank lines and `c` comments yield `None`.
pub fn parse_command(text: &str, line: usize) -> Result<Option<Command>, ScriptParseError> {
    let err = |message: String| ScriptParseError { line, message };
    let mut words = text.split_whitespace();
    let Some(head) = words.next() else {
        return Ok(None);
    };
    let rest: Vec<&str> = words.collect();
    let var_arg = |rest: &[&str]| -> Result<Var, ScriptParseError> {
        if rest.len() != 1 {
            return Err(err(format!("`{head}` takes one variable")));
        }
        let n: i64 = rest[0]
            .parse()
            .map_err(|_| err(format!("bad variable `{}`", rest[0])))?;
        if n <= 0 {
            return Err(err(format!("variable must be positive, got {n}")));
        }
        Var::try_new(n).map_err(|e: FormulaError| err(e.to_string()))
    };
    let clause_arg = |rest: &[&str]| -> Result<Clause, ScriptParseError> {
        let mut values = Vec::with_capacity(rest.len());
        for tok in rest {
            values.push(
                tok.parse::<i64>()
                    .map_err(|_| err(format!("bad literal `{tok}`")))?,
            );
        }
        if values.last() != Some(&0) {
            return Err(err("clause must end with 0".into()));
        }
        values.pop();
        if values.contains(&0) {
            return Err(err("0 inside clause".into()));
        }
        Clause::from_dimacs(&values).map_err(|e| err(e.to_string()))
    };
    let no_args = |cmd: Command| {
        if rest.is_empty() {
            Ok(Some(cmd))
        } else {
            Err(err(format!("`{head}` takes no arguments")))
        }
    };
    match head {
        "c" => Ok(None),
        "av" => Ok(Some(Command::Op(UpdateOp::AddVar(var_arg(&rest)?)))),
        "rv" => Ok(Some(Command::Op(UpdateOp::RemVar(var_arg(&rest)?)))),
        "ac" => Ok(Some(Command::Op(UpdateOp::AddClause(clause_arg(&rest)?)))),
        "rc" => Ok(Some(Command::Op(UpdateOp::RemClause(clause_arg(&rest)?)))),
        "reset" => no_args(Command::Op(UpdateOp::Reset)),
        "load" => match rest.as_slice() {
            [path] => Ok(Some(Command::Op(UpdateOp::Load(PathBuf::from(path))))),
            _ => Err(err("`load` takes one path".into())),
        },
        "count" => no_args(Command::Count),
        "stats" => no_args(Command::Stats),
        "quit" => no_args(Command::Quit),
        other => Err(err(format!("unknown command `{other}`"))),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptOptions {
    /// Print stats lines after every count.
    pub stats: bool,
    /// Print a JSON stats record after every count.
    pub stats_json: bool,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error(transparent)]
    Parse(#[from] ScriptParseError),
    #[error("line {line}: {source}")]
    Session {
        line: usize,
        #[source]
        source: SessionError,
    },
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

pub fn write_stats(out: &mut impl Write, session: &Session) -> std::io::Result<()> {
    let cache = session.counter().cache();
    if let Some(cp) = session.last_checkpoint() {
        let s = cp.stats;
        writeln!(out, "c checkpoint {}", cp.index)?;
        writeln!(out, "c decisions {}", s.decisions)?;
        writeln!(out, "c propagations {}", s.propagations)?;
        writeln!(out, "c conflicts {}", s.conflicts)?;
        writeln!(out, "c positive_hits {}", s.positive_hits)?;
        writeln!(out, "c negative_hits {}", s.negative_hits)?;
        writeln!(out, "c carried_hits {}", s.carried_hits)?;
        writeln!(out, "c evictions {}", s.evictions)?;
    }
    let t = session.totals();
    writeln!(out, "c total_decisions {}", t.decisions)?;
    writeln!(out, "c total_positive_hits {}", t.positive_hits)?;
    writeln!(out, "c total_negative_hits {}", t.negative_hits)?;
    writeln!(out, "c cache_entries {}", cache.len())?;
    writeln!(out, "c cache_bytes {}", cache.bytes())?;
    Ok(())
}

pub fn write_stats_json(out: &mut impl Write, checkpoint: &Checkpoint) -> std::io::Result<()> {
    let json = serde_json::to_string(checkpoint).map_err(std::io::Error::other)?;
    writeln!(out, "c stats-json {json}")
}

/// Runs a session script, writing results to `out` and warnings to `diag`.
pub fn run_script(
    session: &mut Session,
    input: impl BufRead,
    out: &mut impl Write,
    diag: &mut impl Write,
    options: ScriptOptions,
) -> Result<(), ScriptError> {
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let Some(cmd) = parse_command(&line, line_no)? else {
            continue;
        };
        let wrap = |source| ScriptError::Session {
            line: line_no,
            source,
        };
        match cmd {
            Command::Op(op) => {
                for w in session.apply_op(&op).map_err(wrap)? {
                    writeln!(diag, "warning: line {line_no}: {w}")?;
                }
            }
            Command::Count => {
                let count = session.checkpoint_count().map_err(wrap)?;
                let cp = session.last_checkpoint().expect("just counted");
                writeln!(out, "{} {}", cp.index, count)?;
                if options.stats {
                    write_stats(out, session)?;
                }
                if options.stats_json {
                    write_stats_json(out, session.last_checkpoint().expect("just counted"))?;
                }
            }
            Command::Stats => write_stats(out, session)?,
            Command::Quit => break,
        }
    }
    out.flush()?;
    Ok(())
}
