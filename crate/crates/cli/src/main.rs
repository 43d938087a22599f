//! `iterflow`: run workflow iterations and inspect their history.
//!
//! Exit status is 0 on success, 1 for user errors (bad arguments, invalid
//! workflows, unknown versions, a busy workspace) and 2 for internal errors.

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iterflow_core::engine::{self, Clock, EngineError, RunOptions, RunRecord};
use iterflow_core::recompute::write_records;
use iterflow_core::workspace::{Workspace, WorkspaceError};
use iterflow_server::{AppState, DEFAULT_PORT};

#[derive(Parser)]
#[command(name = "iterflow", version, about = "Iterative workflow engine")]
struct Cli {
    /// Workspace directory.
    #[arg(
        long,
        global = true,
        env = "ITERFLOW_WORKSPACE",
        default_value = "./.iterflow"
    )]
    workspace: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan, execute and record one iteration.
    Run {
        file: PathBuf,
        /// Storage budget for materialized results, in bytes.
        #[arg(long, default_value_t = engine::DEFAULT_BUDGET_BYTES)]
        budget: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Recompute everything and store nothing.
        #[arg(long)]
        no_reuse: bool,
        /// Use the deterministic virtual clock for sim operators.
        #[arg(long)]
        sim_clock: bool,
    },
    /// Print the plan for a workflow without running it.
    Plan {
        file: PathBuf,
        #[arg(long)]
        no_reuse: bool,
        #[arg(long)]
        sim_clock: bool,
    },
    /// List recorded versions.
    Versions,
    /// Per-node states and costs of one version.
    Show { id: u64 },
    /// Differences between two versions.
    Compare { a: u64, b: u64 },
    /// Print (or write) the source of a version.
    Checkout {
        id: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        /// Directory of static frontend assets.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

enum Failure {
    User(String),
    Internal(String),
}

impl From<WorkspaceError> for Failure {
    fn from(e: WorkspaceError) -> Self {
        match e {
            WorkspaceError::NotFound(_)
            | WorkspaceError::NoMetric(_)
            | WorkspaceError::LockHeld(_) => Failure::User(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Parse(p) => Failure::User(p.to_string()),
            EngineError::Compile(_) | EngineError::Data { .. } | EngineError::LockHeld(_) => {
                Failure::User(e.to_string())
            }
            EngineError::Workspace(w) => w.into(),
            EngineError::MissingArtifact { .. } => Failure::Internal(e.to_string()),
        }
    }
}

fn read_source(file: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(file).map_err(|e| Failure::User(format!("{}: {e}", file.display())))
}

/// Relative `csv` paths resolve against the workflow file's directory.
fn options(file: &Path, no_reuse: bool, sim_clock: bool) -> RunOptions {
    let base_dir = match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    RunOptions {
        no_reuse,
        clock: if sim_clock { Clock::Sim } else { Clock::Wall },
        base_dir,
        ..RunOptions::default()
    }
}

fn format_metrics(record: &RunRecord) -> String {
    record
        .metrics
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn print_run(record: &RunRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "version\t{}", record.version);
    let _ = writeln!(
        out,
        "# node\tstate\tduration_us\twrite_us\tbytes\tmaterialized"
    );
    for e in &record.events {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            e.node,
            e.state,
            e.duration_us,
            e.write_us,
            e.bytes,
            u8::from(e.materialized)
        );
    }
    for n in &record.static_pruned {
        let _ = writeln!(out, "{n}\tStaticPrune\t0\t0\t0\t0");
    }
    let _ = writeln!(out, "objective_us\t{}", record.objective_us);
    let _ = writeln!(out, "wall_clock_us\t{}", record.wall_clock_us);
    for (k, v) in &record.metrics {
        let _ = writeln!(out, "metric\t{k}\t{v}");
    }
    out
}

fn execute(cli: Cli) -> Result<String, Failure> {
    let ws = Workspace::open(&cli.workspace)?;
    let mut out = String::new();
    match cli.command {
        Command::Run {
            file,
            budget,
            seed,
            no_reuse,
            sim_clock,
        } => {
            let source = read_source(&file)?;
            let opts = RunOptions {
                budget_bytes: budget,
                seed,
                ..options(&file, no_reuse, sim_clock)
            };
            let record = engine::run_iteration(&ws, &source, &opts)?;
            out = print_run(&record);
        }
        Command::Plan {
            file,
            no_reuse,
            sim_clock,
        } => {
            let source = read_source(&file)?;
            let prepared = engine::prepare(&ws, &source, &options(&file, no_reuse, sim_clock))?;
            out = write_records(&prepared.costs, Some(&prepared.plan));
            for n in &prepared.slice.pruned_static {
                let _ = writeln!(out, "# pruned_static\t{n}");
            }
        }
        Command::Versions => {
            let _ = writeln!(out, "# id\tparent\tworkflow\twall_clock_us\tmetrics");
            for v in ws.list_versions()? {
                let parent = v.parent_id.map_or("-".to_string(), |p| p.to_string());
                let _ = writeln!(
                    out,
                    "{}\t{parent}\t{}\t{}\t{}",
                    v.id,
                    v.workflow,
                    v.record.wall_clock_us,
                    format_metrics(&v.record)
                );
            }
        }
        Command::Show { id } => {
            let view = ws.dag_view(id)?;
            let entry = ws.get_version(id)?;
            let _ = writeln!(out, "version\t{id}");
            let _ = writeln!(out, "# node\tkind\tstate\tduration_us\tbytes\tmaterialized");
            for n in &view.nodes {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    n.name,
                    n.kind,
                    n.state,
                    n.duration_us,
                    n.bytes,
                    u8::from(n.materialized)
                );
            }
            let _ = writeln!(out, "wall_clock_us\t{}", entry.record.wall_clock_us);
            for (k, v) in &entry.record.metrics {
                let _ = writeln!(out, "metric\t{k}\t{v}");
            }
        }
        Command::Compare { a, b } => {
            let rep = ws.compare(a, b)?;
            let _ = writeln!(out, "compare\t{a}\t{b}");
            for n in &rep.decls.added {
                let _ = writeln!(out, "added\t{n}");
            }
            for n in &rep.decls.removed {
                let _ = writeln!(out, "removed\t{n}");
            }
            for n in &rep.decls.modified {
                let _ = writeln!(out, "modified\t{n}");
            }
            for (n, c) in &rep.dag.state_changed {
                let _ = writeln!(out, "state\t{n}\t{}\t{}", c.from, c.to);
            }
            for (m, d) in &rep.metrics {
                let show = |x: Option<f64>| x.map_or("-".to_string(), |v| v.to_string());
                let _ = writeln!(
                    out,
                    "metric\t{m}\t{}\t{}\t{}",
                    show(d.a),
                    show(d.b),
                    show(d.delta)
                );
            }
            out.push_str(&rep.source_diff);
        }
        Command::Checkout { id, output } => {
            let source = ws.checkout(id)?;
            match output {
                Some(path) => std::fs::write(&path, source)
                    .map_err(|e| Failure::User(format!("{}: {e}", path.display())))?,
                None => out = source,
            }
        }
        Command::Serve { port, static_dir } => {
            let addr = SocketAddr::from(([127, 0, 0, 1], port));
            let state = AppState::new(ws, RunOptions::default());
            let rt =
                tokio::runtime::Runtime::new().map_err(|e| Failure::Internal(e.to_string()))?;
            eprintln!("listening on http://{addr}");
            rt.block_on(iterflow_server::serve(addr, state, static_dir))
                .map_err(|e| Failure::User(format!("{addr}: {e}")))?;
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}
