//! The `dtl` command-line interface.
//!
//! Every subcommand prints one JSON object to stdout; diagnostics go
//! to stderr. Exit codes: `0` for a settled verdict (including "the
//! quasimodel is invalid" or "no certificate within the bounds"),
//! `2` when a search gave up on budget rather than on a bound,
//! `64` for usage errors, and `65` for unreadable or ill-formed
//! inputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::json;

use dtl::finite_model::{evaluate_closure, oracle_refute, OracleOutcome};
use dtl::formula::{enumerate_types, Closure, Formula};
use dtl::json::{
    model_from_dto, model_to_dto, quasimodel_from_dto, quasimodel_to_dto, to_dot,
    ModelDto, QuasimodelDto,
};
use dtl::parser::parse;
use dtl::quasimodel::{satisfies, validate_quasimodel};
use dtl::search::{
    decide_validity, find_satisfying_quasimodel, DepthStatus, SatOutcome, Verdict,
};

#[derive(Parser)]
#[command(
    name = "dtl",
    version,
    about = "Decision-procedure engine for dynamic topological logic",
    long_about = "Decision-procedure engine for dynamic topological logic (DTL).\n\
        Formulas use `p q r ...` for variables, `! & | ->` for Boolean\n\
        connectives, `[]` for interior, `X` for next, and `*` for henceforth.\n\
        Searches are metered in deterministic work units, so verdicts depend\n\
        only on the formula and the budget, never on timing or worker count."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a formula and print its closure profile.
    Parse { formula: String },
    /// Enumerate the types over a formula's closure.
    Types {
        formula: String,
        /// Print at most this many types (the count is always exact).
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Validate a quasimodel file against a formula's closure.
    CheckQuasimodel {
        /// Quasimodel JSON (worlds with type listings, order, g).
        file: PathBuf,
        /// The formula whose closure types the worlds.
        formula: String,
    },
    /// Evaluate a formula in a finite dynamic model.
    Eval {
        /// Model JSON (points, order, f, valuation).
        model: PathBuf,
        formula: String,
    },
    /// Search for a finite dynamic countermodel by brute force.
    Oracle {
        formula: String,
        /// Largest model size to try, in points.
        #[arg(long, default_value_t = 3)]
        max_points: usize,
        /// Wall-clock budget in milliseconds.
        #[arg(long, default_value_t = 60_000)]
        budget_ms: u64,
        /// Size of the worker pool (defaults to all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Search for a quasimodel satisfying a formula.
    Sat {
        formula: String,
        /// Largest quasimodel size to try, in worlds.
        #[arg(long, default_value_t = 3)]
        max_worlds: usize,
        /// Work budget in deterministic units.
        #[arg(long, default_value_t = 2_000_000)]
        budget_units: u64,
        /// Size of the worker pool (defaults to all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Bounded validity search: families of paths against quasimodels.
    Valid {
        formula: String,
        /// Deepest family stratum to examine.
        #[arg(long, default_value_t = 3)]
        max_depth: usize,
        /// Work budget in deterministic units.
        #[arg(long, default_value_t = 2_000_000)]
        budget_units: u64,
        /// Size of the worker pool (defaults to all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Render a quasimodel file as Graphviz DOT.
    ExportDot { file: PathBuf, formula: String },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(65)
        }
    }
}

/// `Err` carries a data problem (exit 65); `Ok` carries the exit code
/// of a completed run.
fn run(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Parse { formula } => {
            let f = parse_formula(&formula)?;
            let closure = Closure::of(&f);
            print_json(json!({
                "formula": f.to_string(),
                "variables": closure.variables(),
                "closure": {
                    "subformulas": closure.size(),
                    "signed_entries": closure.len(),
                    "entries": (0..closure.len())
                        .map(|i| closure.entry(i).to_string())
                        .collect::<Vec<_>>(),
                },
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Types { formula, limit } => {
            let f = parse_formula(&formula)?;
            let closure = Closure::of(&f);
            if closure.size() > 24 {
                return Err(format!(
                    "the closure has {} subformulas; exhaustive type \
                     enumeration is capped at 24",
                    closure.size()
                ));
            }
            let mut count = 0usize;
            let mut listed = Vec::new();
            for t in enumerate_types(&closure) {
                if limit.is_none_or(|l| count < l) {
                    let members: Vec<String> = (0..closure.size())
                        .filter(|&i| t.contains_idx(i))
                        .map(|i| closure.entry(i).to_string())
                        .collect();
                    listed.push(members);
                }
                count += 1;
            }
            print_json(json!({
                "formula": f.to_string(),
                "count": count,
                "types": listed,
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckQuasimodel { file, formula } => {
            let f = parse_formula(&formula)?;
            let closure = Closure::of(&f);
            let dto: QuasimodelDto = load_json(&file)?;
            let loaded = quasimodel_from_dto(&dto, &closure)
                .map_err(|e| format!("{}: {e}", file.display()))?;
            if loaded.added_order_pairs > 0 {
                eprintln!(
                    "note: completed the order with {} reflexive/transitive pairs",
                    loaded.added_order_pairs
                );
            }
            let q = loaded.quasimodel;
            let report = validate_quasimodel(&q);
            let neg = f.negated();
            print_json(json!({
                "ok": report.is_ok(),
                "worlds": q.len(),
                "added_order_pairs": loaded.added_order_pairs,
                "defects": report.items,
                "satisfies": {
                    f.to_string(): satisfies(&q, &f).ok().flatten(),
                    neg.to_string(): satisfies(&q, &neg).ok().flatten(),
                },
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { model, formula } => {
            let f = parse_formula(&formula)?;
            let dto: ModelDto = load_json(&model)?;
            let m = model_from_dto(&dto)
                .map_err(|e| format!("{}: {e}", model.display()))?;
            let closure = Closure::of(&f);
            let ev = evaluate_closure(&m, &closure);
            let holds = ev.set_of(&f).expect("a formula indexes its own closure");
            let holds_at: Vec<usize> = holds.iter_ones().collect();
            let counterexample = (0..m.len()).find(|&x| !holds.get(x));
            print_json(json!({
                "formula": f.to_string(),
                "points": m.len(),
                "holds_at": holds_at,
                "valid_in_model": counterexample.is_none(),
                "counterexample": counterexample,
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle {
            formula,
            max_points,
            budget_ms,
            workers,
        } => {
            let f = parse_formula(&formula)?;
            if max_points == 0 {
                return Err("--max-points must be at least 1".to_string());
            }
            let outcome = with_workers(workers, || {
                oracle_refute(&f, max_points, Duration::from_millis(budget_ms))
            })?;
            Ok(match outcome {
                OracleOutcome::Refuted { model, point } => {
                    print_json(json!({
                        "outcome": "refuted",
                        "formula": f.to_string(),
                        "point": point,
                        "model": model_to_dto(&model),
                    }));
                    ExitCode::SUCCESS
                }
                OracleOutcome::Exhausted => {
                    print_json(json!({
                        "outcome": "exhausted",
                        "formula": f.to_string(),
                        "max_points": max_points,
                        "note": "no countermodel with at most this many points; \
                                 finite exhaustion never implies DTL-validity",
                    }));
                    ExitCode::SUCCESS
                }
                OracleOutcome::BudgetExceeded => {
                    print_json(json!({
                        "outcome": "budget-exceeded",
                        "formula": f.to_string(),
                        "budget_ms": budget_ms,
                    }));
                    ExitCode::from(2)
                }
            })
        }
        Command::Sat {
            formula,
            max_worlds,
            budget_units,
            workers,
        } => {
            let f = parse_formula(&formula)?;
            if max_worlds == 0 {
                return Err("--max-worlds must be at least 1".to_string());
            }
            let outcome = with_workers(workers, || {
                find_satisfying_quasimodel(&f, max_worlds, budget_units)
            })?;
            Ok(match outcome {
                SatOutcome::Found {
                    quasimodel,
                    world,
                    work,
                } => {
                    print_json(json!({
                        "outcome": "satisfiable",
                        "formula": f.to_string(),
                        "worlds": quasimodel.len(),
                        "world": world,
                        "work": work,
                        "quasimodel": quasimodel_to_dto(&quasimodel),
                    }));
                    ExitCode::SUCCESS
                }
                SatOutcome::Exhausted { work } => {
                    print_json(json!({
                        "outcome": "exhausted",
                        "formula": f.to_string(),
                        "max_worlds": max_worlds,
                        "work": work,
                    }));
                    ExitCode::SUCCESS
                }
                SatOutcome::OutOfBudget { work } => {
                    print_json(json!({
                        "outcome": "out-of-budget",
                        "formula": f.to_string(),
                        "work": work,
                    }));
                    ExitCode::from(2)
                }
            })
        }
        Command::Valid {
            formula,
            max_depth,
            budget_units,
            workers,
        } => {
            let f = parse_formula(&formula)?;
            let verdict = with_workers(workers, || {
                decide_validity(&f, max_depth, budget_units)
            })?;
            Ok(match verdict {
                Verdict::Valid { depth } => {
                    print_json(json!({
                        "verdict": "valid",
                        "formula": f.to_string(),
                        "depth": depth,
                    }));
                    ExitCode::SUCCESS
                }
                Verdict::NotValid { certificate, world } => {
                    print_json(json!({
                        "verdict": "not-valid",
                        "formula": f.to_string(),
                        "world": world,
                        "certificate": quasimodel_to_dto(&certificate),
                    }));
                    ExitCode::SUCCESS
                }
                Verdict::Unknown(status) => {
                    let depths: Vec<serde_json::Value> = status
                        .depths
                        .iter()
                        .map(|&(depth, s)| match s {
                            DepthStatus::Inhabited { families } => json!({
                                "depth": depth,
                                "status": "inhabited",
                                "families": families,
                            }),
                            DepthStatus::Open => json!({
                                "depth": depth,
                                "status": "open",
                            }),
                            DepthStatus::OutOfBudget => json!({
                                "depth": depth,
                                "status": "out-of-budget",
                            }),
                        })
                        .collect();
                    print_json(json!({
                        "verdict": "unknown",
                        "formula": f.to_string(),
                        "depths": depths,
                        "certified_world_bound": status.certified_world_bound,
                        "out_of_budget": status.out_of_budget,
                        "work": status.work,
                    }));
                    ExitCode::from(2)
                }
            })
        }
        Command::ExportDot { file, formula } => {
            let f = parse_formula(&formula)?;
            let closure = Closure::of(&f);
            let dto: QuasimodelDto = load_json(&file)?;
            let loaded = quasimodel_from_dto(&dto, &closure)
                .map_err(|e| format!("{}: {e}", file.display()))?;
            emit(&to_dot(&loaded.quasimodel));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn parse_formula(text: &str) -> Result<Formula, String> {
    parse(text).map_err(|e| format!("cannot parse {text:?}: {e}"))
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Writes to stdout, treating a closed pipe (`dtl ... | head`) as a
/// normal end of output rather than a panic.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("failed printing to stdout: {e}");
    }
}

fn print_json(value: serde_json::Value) {
    let text = serde_json::to_string_pretty(&value).expect("reports serialize");
    emit(&format!("{text}\n"));
}

/// Runs the job in a dedicated worker pool when a size was requested.
fn with_workers<T: Send>(
    workers: Option<usize>,
    job: impl FnOnce() -> T + Send,
) -> Result<T, String> {
    match workers {
        None => Ok(job()),
        Some(0) => Err("--workers must be at least 1".to_string()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| format!("cannot build the worker pool: {e}"))?;
            Ok(pool.install(job))
        }
    }
}
