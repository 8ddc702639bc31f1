//! Command-line front end. Results go to the output stream, everything else
//! is either a `c `-prefixed comment or a diagnostic on the error stream.

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::argumentation::{dynamic_sequence, encode_complete, parse_af, PerturbationConfig};
use crate::cache::CacheMode;
use crate::dimacs::parse_dimacs;
use crate::engine::{EngineConfig, EngineError, DEFAULT_CACHE_BYTES};
use crate::heuristics::{
    compute_tree_decomposition, Heuristic, TdMode, TdStaleness, DEFAULT_TD_WEIGHT,
};
use crate::session::{
    run_script, write_stats, write_stats_json, ScriptError, ScriptOptions, Session, SessionError,
};
use crate::softcore::{compute_soft_core, ClauseOrder, SoftCoreConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Noshared,
    Shared,
    SharedSym,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HeuristicArg {
    Dlcs,
    Vsads,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TdArg {
    Off,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OrderArg {
    Input,
    Reverse,
    Shuffle,
}

#[derive(Debug, Parser)]
#[command(name = "dyncount", version, about = "Incremental exact model counter")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Cache sharing across checkpoints
    #[arg(long, global = true, value_enum, default_value = "shared-sym")]
    mode: ModeArg,
    #[arg(long, global = true, value_enum, default_value = "dlcs")]
    heuristic: HeuristicArg,
    /// Tree-decomposition guided branching
    #[arg(long, global = true, value_enum, default_value = "off")]
    td: TdArg,
    /// Recompute the decomposition when it no longer covers the formula
    #[arg(long, global = true)]
    td_recompute: bool,
    #[arg(long, global = true, default_value_t = DEFAULT_CACHE_BYTES, value_parser = parse_cache_bytes)]
    cache_bytes: usize,
    /// Abort a count after this many decisions (exit status 3)
    #[arg(long, global = true)]
    decision_limit: Option<u64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print statistics after each count
    #[arg(long, global = true)]
    stats: bool,
    /// Print a JSON statistics record after each count
    #[arg(long, global = true)]
    stats_json: bool,
    /// Soft-core threshold growth
    #[arg(long, global = true, default_value_t = 0.20, value_parser = parse_delta)]
    delta: f64,
    /// Perturbation steps for af-dynamic
    #[arg(long, global = true, default_value_t = 1000)]
    steps: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count the models of a DIMACS CNF file
    Count { file: PathBuf },
    /// Run a session script from a file or standard input
    Session { script: Option<PathBuf> },
    /// Extract a soft core of a DIMACS CNF file
    Softcore {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "input")]
        order: OrderArg,
        /// Absolute count threshold, overriding --delta
        #[arg(long)]
        threshold: Option<num_bigint::BigUint>,
    },
    /// Count the complete extensions of an ICCMA'23 framework
    AfCount { file: PathBuf },
    /// Count complete extensions along a seeded perturbation sequence
    AfDynamic { file: PathBuf },
    /// Print the width and size of a min-fill tree decomposition
    Td { file: PathBuf },
}

fn parse_cache_bytes(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("cache budget must be positive".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_delta(s: &str) -> Result<f64, String> {
    let v = match s {
        "inf" | "infinity" => f64::INFINITY,
        _ => s.parse::<f64>().map_err(|e| e.to_string())?,
    };
    if v.is_nan() || v < 0.0 {
        return Err("delta must be a non-negative number or `inf`".into());
    }
    Ok(v)
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Resource(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Resource(_) => EXIT_RESOURCE,
            CliError::Input(_) | CliError::Io(_) => EXIT_INPUT,
        }
    }
}

fn is_resource_limit(e: &SessionError) -> bool {
    match e {
        SessionError::Engine(EngineError::ResourceLimit(_)) => true,
        SessionError::Batch { source, .. } => is_resource_limit(source),
        _ => false,
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> CliError {
        if is_resource_limit(&e) {
            CliError::Resource(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<ScriptError> for CliError {
    fn from(e: ScriptError) -> CliError {
        match e {
            ScriptError::Session { ref source, .. } if is_resource_limit(source) => {
                CliError::Resource(e.to_string())
            }
            ScriptError::Io(io) => CliError::Io(io),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl Cli {
    fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            cache_mode: match self.mode {
                ModeArg::Noshared => CacheMode::NoShared,
                ModeArg::Shared => CacheMode::Shared,
                ModeArg::SharedSym => CacheMode::SharedSym,
            },
            heuristic: match self.heuristic {
                HeuristicArg::Dlcs => Heuristic::Dlcs,
                HeuristicArg::Vsads => Heuristic::Vsads,
            },
            td_mode: match self.td {
                TdArg::Off => TdMode::Off,
                TdArg::Shared => TdMode::Shared,
            },
            cache_bytes: self.cache_bytes,
            td_staleness: if self.td_recompute {
                TdStaleness::Recompute
            } else {
                TdStaleness::Keep
            },
            td_weight: DEFAULT_TD_WEIGHT,
            decision_limit: self.decision_limit,
            shadow_check: false,
        }
    }

    fn script_options(&self) -> ScriptOptions {
        ScriptOptions {
            stats: self.stats,
            stats_json: self.stats_json,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn report(out: &mut impl Write, session: &Session, cli: &Cli) -> std::io::Result<()> {
    let cp = session.last_checkpoint().expect("counted");
    writeln!(out, "{} {}", cp.index, cp.count)?;
    if cli.stats {
        write_stats(out, session)?;
    }
    if cli.stats_json {
        write_stats_json(out, cp)?;
    }
    Ok(())
}

fn execute(
    cli: &Cli,
    stdin: impl BufRead,
    out: &mut impl Write,
    err: &mut impl Write,
) -> Result<(), CliError> {
    let engine = cli.engine_config();
    let mut session = Session::new(engine);
    match &cli.command {
        Command::Count { file } => {
            let cnf = parse_dimacs(&read(file)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
            session = Session::with_state(cnf.to_state(), engine);
            session.checkpoint_count()?;
            report(out, &session, cli)?;
        }
        Command::Session { script } => {
            let options = cli.script_options();
            match script {
                Some(path) => {
                    let text = read(path)?;
                    run_script(&mut session, text.as_bytes(), out, err, options)?;
                }
                None => run_script(&mut session, stdin, out, err, options)?,
            }
        }
        Command::Softcore {
            file,
            order,
            threshold,
        } => {
            let cnf = parse_dimacs(&read(file)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
            let config = SoftCoreConfig {
                delta: cli.delta,
                order: match order {
                    OrderArg::Input => ClauseOrder::Input,
                    OrderArg::Reverse => ClauseOrder::Reverse,
                    OrderArg::Shuffle => ClauseOrder::Shuffle(cli.seed),
                },
                absolute_threshold: threshold.clone(),
            };
            let vars = cnf.to_state().active_vars().clone();
            let r = compute_soft_core(&vars, &cnf.clauses, &config, &mut session)?;
            let join = |v: &[usize]| v.iter().map(|i| format!(" {i}")).collect::<String>();
            writeln!(out, "core{}", join(&r.kept_indices))?;
            writeln!(out, "removed{}", join(&r.removed_indices))?;
            writeln!(out, "c base {}", r.base_count)?;
            match &r.threshold {
                Some(t) => writeln!(out, "c threshold {t}")?,
                None => writeln!(out, "c threshold inf")?,
            }
            writeln!(out, "c final {}", r.final_count)?;
            for (i, count) in r.order.iter().zip(&r.per_step_counts) {
                writeln!(out, "c trial {i} {count}")?;
            }
            if cli.stats {
                write_stats(out, &session)?;
            }
            if cli.stats_json {
                for cp in session.checkpoints() {
                    write_stats_json(out, cp)?;
                }
            }
        }
        Command::AfCount { file } => {
            let af = parse_af(&read(file)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
            session = Session::with_state(encode_complete(&af), engine);
            session.checkpoint_count()?;
            report(out, &session, cli)?;
        }
        Command::AfDynamic { file } => {
            let af = parse_af(&read(file)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
            let config = PerturbationConfig {
                steps: cli.steps,
                seed: cli.seed,
                ..PerturbationConfig::default()
            };
            let steps = dynamic_sequence(&af, &config, &mut session).map_err(|e| {
                let step = e.step;
                match CliError::from(e.source) {
                    CliError::Resource(m) => CliError::Resource(format!("step {step}: {m}")),
                    other => CliError::Input(format!("step {step}: {other}")),
                }
            })?;
            for (step, cp) in steps.iter().zip(session.checkpoints()) {
                writeln!(out, "c op {}", step.perturbation.kind())?;
                writeln!(out, "{} {}", step.index, step.count)?;
                if cli.stats_json {
                    write_stats_json(out, cp)?;
                }
            }
            if cli.stats {
                write_stats(out, &session)?;
            }
        }
        Command::Td { file } => {
            let cnf = parse_dimacs(&read(file)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
            let td = compute_tree_decomposition(&cnf.to_state().primal_graph(), 0);
            writeln!(out, "width {}", td.width())?;
            writeln!(out, "bags {}", td.bags().len())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Runs the command line `args` (program name first) and returns the exit
/// status.
pub fn run<I, T>(args: I, stdin: impl BufRead, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(&cli, stdin, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
