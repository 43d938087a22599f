//! Plans and executes one iteration of a workflow against a workspace.

pub mod artifact;
pub mod logreg;
pub mod ops;
pub mod value;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dsl::{self, DeclKind, ParseError, WorkflowAst};
use crate::graph::{self, CompileError, DagNode, FileInputs, SliceResult, WorkflowDag};
use crate::materialize::{self, MaterializationBudget, MaterializationDecision, NodeRuntimeStats};
use crate::recompute::{self, CostAnnotatedDag, CostNode, ExecutionPlan, Micros, NodeState};
use crate::workspace::{StatRecord, Workspace, WorkspaceError};

pub use ops::{run_operator, OpError};
pub use value::{Column, ColumnData, FeatureMatrix, Model, Predictions, SimBlob, Table, Value};

/// 1 GiB.
pub const DEFAULT_BUDGET_BYTES: u64 = 1 << 30;
pub const DEFAULT_COMPUTE_US: Micros = 1_000;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("node `{node}`: {source}")]
    Data { node: String, source: OpError },
    #[error("node `{node}`: planned Load but no readable artifact ({message})")]
    MissingArtifact { node: String, message: String },
    #[error(transparent)]
    Workspace(WorkspaceError),
    #[error("another run holds the workspace (pid {0})")]
    LockHeld(String),
}

impl From<WorkspaceError> for EngineError {
    fn from(e: WorkspaceError) -> Self {
        match e {
            WorkspaceError::LockHeld(pid) => EngineError::LockHeld(pid),
            other => EngineError::Workspace(other),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    /// Real time; `sim` operators sleep for their declared cost.
    #[default]
    Wall,
    /// Deterministic virtual time: `sim` operators advance the clock by
    /// their declared cost and artifact I/O by the load model.
    Sim,
}

/// Estimated artifact read time: fixed overhead plus size over throughput.
/// Writes are assumed to cost the same.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadModel {
    pub bytes_per_sec: u64,
    pub overhead_us: Micros,
}

impl Default for LoadModel {
    fn default() -> Self {
        LoadModel {
            bytes_per_sec: 500_000_000,
            overhead_us: 2_000,
        }
    }
}

impl LoadModel {
    pub fn estimate(&self, bytes: u64) -> Micros {
        let transfer =
            (u128::from(bytes) * 1_000_000).div_ceil(u128::from(self.bytes_per_sec.max(1)));
        self.overhead_us + transfer as Micros
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub budget_bytes: u64,
    pub seed: u64,
    /// Treat every artifact as missing and store nothing: the unoptimized
    /// baseline.
    pub no_reuse: bool,
    pub clock: Clock,
    /// Directory that relative `csv` paths resolve against.
    pub base_dir: PathBuf,
    /// Compute cost assumed for a node that has never run.
    pub default_compute_us: Micros,
    pub load_model: LoadModel,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            budget_bytes: DEFAULT_BUDGET_BYTES,
            seed: 0,
            no_reuse: false,
            clock: Clock::Wall,
            base_dir: PathBuf::from("."),
            default_compute_us: DEFAULT_COMPUTE_US,
            load_model: LoadModel::default(),
        }
    }
}

/// Materialization decision as logged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub stats: NodeRuntimeStats,
    pub benefit_us: i64,
    pub remaining_bytes: u64,
    pub decision: MaterializationDecision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeEvent {
    /// Completion order within the iteration.
    pub seq: u64,
    pub node: String,
    pub state: NodeState,
    pub signature: String,
    pub start_us: Micros,
    /// Compute or load time; zero for pruned nodes.
    pub duration_us: Micros,
    pub write_us: Micros,
    /// Encoded output size; zero for pruned nodes.
    pub bytes: u64,
    pub materialized: bool,
    /// Absent for pruned and loaded nodes, for nodes whose artifact was
    /// already stored, and in no-reuse runs.
    pub decision: Option<DecisionRecord>,
}

impl Default for NodeEvent {
    fn default() -> Self {
        NodeEvent {
            seq: 0,
            node: String::new(),
            state: NodeState::Prune,
            signature: String::new(),
            start_us: 0,
            duration_us: 0,
            write_us: 0,
            bytes: 0,
            materialized: false,
            decision: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Set when the record is committed.
    pub version: u64,
    pub workflow: String,
    pub clock: Clock,
    pub no_reuse: bool,
    pub seed: u64,
    /// States of live nodes.
    pub plan: BTreeMap<String, NodeState>,
    pub static_pruned: BTreeSet<String>,
    /// Planned cost from the estimates available before the run.
    pub objective_us: Micros,
    /// One event per live node, in execution order.
    pub events: Vec<NodeEvent>,
    pub metrics: BTreeMap<String, f64>,
    pub wall_clock_us: Micros,
    pub budget_total_bytes: u64,
    pub budget_used_bytes: u64,
}

impl RunRecord {
    pub fn event(&self, node: &str) -> Option<&NodeEvent> {
        self.events.iter().find(|e| e.node == node)
    }

    pub fn count(&self, state: NodeState) -> usize {
        self.events.iter().filter(|e| e.state == state).count()
    }
}

/// Everything decided before execution starts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub ast: WorkflowAst,
    pub dag: WorkflowDag,
    pub slice: SliceResult,
    /// Live nodes in topological order.
    pub costs: CostAnnotatedDag,
    pub plan: ExecutionPlan,
}

impl Prepared {
    fn live_nodes(&self) -> impl Iterator<Item = &DagNode> {
        self.costs.nodes.iter().map(|c| self.dag.node(&c.name))
    }
}

fn measured(d: Duration) -> Micros {
    d.as_nanos().div_ceil(1_000) as Micros
}

/// Parses, compiles and plans `source` against the workspace's artifacts and
/// statistics.
pub fn prepare(ws: &Workspace, source: &str, opts: &RunOptions) -> Result<Prepared, EngineError> {
    let ast = dsl::parse(source)?;
    let dag = graph::compile_with_inputs(&ast, &FileInputs(&opts.base_dir))?;
    let slice = graph::slice(&dag);
    let index = ws.artifact_index()?;
    let stats = ws.stats()?;
    let feasible = graph::load_feasibility(&dag, &index);

    let mut by_name: Option<HashMap<String, Micros>> = None;
    let mut position = HashMap::new();
    let mut nodes = Vec::with_capacity(slice.live.len());
    for node in dag.iter().filter(|n| slice.live.contains(&n.name)) {
        let stat = stats.get(&node.signature);
        let declared = match opts.clock {
            Clock::Sim => ops::sim_cost_us(node),
            Clock::Wall => None,
        };
        let compute = match (declared, stat) {
            (Some(c), _) => c,
            (None, Some(s)) => s.compute_us,
            (None, None) => {
                let names = match &mut by_name {
                    Some(m) => m,
                    None => by_name.insert(last_compute_by_name(ws)?),
                };
                names
                    .get(&node.name)
                    .copied()
                    .unwrap_or(opts.default_compute_us)
            }
        };
        let stored = index.get(&node.signature).map(|e| e.bytes);
        let size = stat.map(|s| s.bytes).or(stored).unwrap_or(0);
        let load = match stored {
            Some(bytes) if feasible[&node.name] && !opts.no_reuse => {
                Some(match (opts.clock, stat) {
                    (Clock::Wall, Some(s)) => s.load_us,
                    _ => opts.load_model.estimate(bytes),
                })
            }
            _ => None,
        };
        position.insert(node.name.clone(), nodes.len());
        nodes.push(CostNode {
            name: node.name.clone(),
            compute,
            load,
            size,
            mandatory: dag.sinks.contains(&node.name),
            parents: node.parents.iter().map(|p| position[p]).collect(),
        });
    }
    let costs = CostAnnotatedDag { nodes };
    let plan = recompute::optimal_plan(&costs);
    Ok(Prepared {
        ast,
        dag,
        slice,
        costs,
        plan,
    })
}

/// Most recent measured compute time per node name, for nodes whose exact
/// signature has never run.
fn last_compute_by_name(ws: &Workspace) -> Result<HashMap<String, Micros>, EngineError> {
    let mut out = HashMap::new();
    for v in ws.list_versions()?.iter().rev() {
        for e in &v.record.events {
            if e.state == NodeState::Compute {
                out.entry(e.node.clone()).or_insert(e.duration_us);
            }
        }
    }
    Ok(out)
}

type Operator<'a> = dyn FnMut(&DagNode, &[&Value], &Path) -> Result<Value, OpError> + 'a;

/// Executes a prepared plan with the built-in operators.
pub fn execute(
    ws: &Workspace,
    prepared: &Prepared,
    opts: &RunOptions,
) -> Result<RunRecord, EngineError> {
    execute_with(ws, prepared, opts, &mut |n, inputs, base| {
        run_operator(n, inputs, base)
    })
}

/// Executes a prepared plan, calling `operator` for every computed node.
///
/// Nodes run one at a time in topological order. Each computed node is
/// offered to the online materializer as soon as it finishes. Measured costs
/// are appended to the stats log only if the whole plan succeeds.
pub fn execute_with(
    ws: &Workspace,
    prepared: &Prepared,
    opts: &RunOptions,
    operator: &mut Operator<'_>,
) -> Result<RunRecord, EngineError> {
    let version = ws.next_version_id()?;
    let index = ws.artifact_index()?;
    let old_stats = ws.stats()?;
    let mut budget = MaterializationBudget::new(opts.budget_bytes);
    budget.used_bytes = index.total_bytes().min(opts.budget_bytes);

    // compute costs seen by the materializer: estimates, overwritten by
    // measurements as nodes run
    let mut live = prepared.costs.clone();
    let mut values: HashMap<&str, Value> = HashMap::new();
    let mut events = Vec::with_capacity(live.len());
    let mut new_stats = Vec::new();
    let started = Instant::now();
    let mut virtual_us: Micros = 0;
    let now = |virtual_us: Micros| match opts.clock {
        Clock::Sim => virtual_us,
        Clock::Wall => measured(started.elapsed()),
    };

    for (i, node) in prepared.live_nodes().enumerate() {
        let state = prepared.plan.states[&node.name];
        let mut ev = NodeEvent {
            seq: i as u64,
            node: node.name.clone(),
            state,
            signature: node.signature.to_hex(),
            start_us: now(virtual_us),
            ..NodeEvent::default()
        };
        match state {
            NodeState::Prune => {}
            NodeState::Load => {
                let missing = |message: String| EngineError::MissingArtifact {
                    node: node.name.clone(),
                    message,
                };
                if !index.entries.contains_key(&node.signature) {
                    return Err(missing("not in artifact index".into()));
                }
                let t = Instant::now();
                let bytes = ws
                    .read_artifact(&node.signature)
                    .map_err(|e| missing(e.to_string()))?;
                let value = artifact::decode(&bytes).map_err(|e| missing(e.to_string()))?;
                let size = bytes.len() as u64;
                ev.duration_us = match opts.clock {
                    Clock::Sim => opts.load_model.estimate(size),
                    Clock::Wall => measured(t.elapsed()),
                };
                ev.bytes = size;
                virtual_us += ev.duration_us;
                new_stats.push(StatRecord {
                    signature: node.signature,
                    compute_us: old_stats
                        .get(&node.signature)
                        .map_or(live.nodes[i].compute, |s| s.compute_us),
                    load_us: ev.duration_us,
                    bytes: size,
                });
                values.insert(&node.name, value);
            }
            NodeState::Compute => {
                let inputs: Vec<&Value> =
                    node.parents.iter().map(|p| &values[p.as_str()]).collect();
                let declared = ops::sim_cost_us(node);
                let t = Instant::now();
                if let (Clock::Wall, Some(us)) = (opts.clock, declared) {
                    std::thread::sleep(Duration::from_micros(us));
                }
                let value = operator(node, &inputs, &opts.base_dir).map_err(|source| {
                    EngineError::Data {
                        node: node.name.clone(),
                        source,
                    }
                })?;
                ev.duration_us = match (opts.clock, declared) {
                    (Clock::Sim, Some(us)) => us,
                    _ => measured(t.elapsed()),
                };
                virtual_us += ev.duration_us;
                live.nodes[i].compute = ev.duration_us;

                let encoded = artifact::encode(&value);
                let size = encoded.len() as u64;
                ev.bytes = size;
                let load_us = match (opts.clock, old_stats.get(&node.signature)) {
                    (Clock::Wall, Some(s)) => s.load_us,
                    _ => opts.load_model.estimate(size),
                };
                if !opts.no_reuse && !index.entries.contains_key(&node.signature) {
                    let stats = NodeRuntimeStats {
                        node: node.name.clone(),
                        compute_us: ev.duration_us,
                        load_us,
                        size_bytes: size,
                        ancestor_compute_us: materialize::ancestor_compute_sum(&live, i),
                    };
                    let remaining_bytes = budget.remaining();
                    let decision = materialize::decide(&stats, &mut budget);
                    if decision == MaterializationDecision::Materialize {
                        let t = Instant::now();
                        ws.write_artifact(&node.signature, &encoded, version)?;
                        ev.write_us = match opts.clock {
                            Clock::Sim => opts.load_model.estimate(size),
                            Clock::Wall => measured(t.elapsed()),
                        };
                        virtual_us += ev.write_us;
                        ev.materialized = true;
                    }
                    ev.decision = Some(DecisionRecord {
                        benefit_us: materialize::reuse_benefit(&stats),
                        stats,
                        remaining_bytes,
                        decision,
                    });
                }
                new_stats.push(StatRecord {
                    signature: node.signature,
                    compute_us: ev.duration_us,
                    load_us,
                    bytes: size,
                });
                values.insert(&node.name, value);
            }
        }
        events.push(ev);
    }

    let metrics = prepared
        .live_nodes()
        .filter(|n| n.kind == DeclKind::Metric)
        .filter_map(|n| match values.get(n.name.as_str()) {
            Some(Value::Scalar(x)) => Some((n.name.clone(), *x)),
            _ => None,
        })
        .collect();
    let wall_clock_us = now(virtual_us);
    ws.append_stats(&new_stats)?;
    Ok(RunRecord {
        version: 0,
        workflow: prepared.dag.name.clone(),
        clock: opts.clock,
        no_reuse: opts.no_reuse,
        seed: opts.seed,
        plan: prepared.plan.states.clone(),
        static_pruned: prepared.slice.pruned_static.clone(),
        objective_us: prepared.plan.objective,
        events,
        metrics,
        wall_clock_us,
        budget_total_bytes: budget.total_bytes,
        budget_used_bytes: budget.used_bytes,
    })
}

/// Runs one full iteration under the workspace lock and commits it as a new
/// version. A failed iteration commits nothing.
pub fn run_iteration(
    ws: &Workspace,
    source: &str,
    opts: &RunOptions,
) -> Result<RunRecord, EngineError> {
    let lock = ws.lock()?;
    let prepared = prepare(ws, source, opts)?;
    let record = execute(ws, &prepared, opts)?;
    let entry = ws.record_version(&lock, source, record)?;
    Ok(entry.record)
}
