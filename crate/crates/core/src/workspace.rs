//! On-disk store of versions, content-addressed artifacts and runtime stats.
//!
//! ```text
//! <root>/manifest               JSON: layout, digest and artifact format versions
//! <root>/lock                   pid of the writer holding the workspace
//! <root>/versions/<id>/source.wf
//! <root>/versions/<id>/record.json
//! <root>/artifacts/<hex signature>
//! <root>/artifacts.log          signature \t bytes \t version
//! <root>/stats.log              signature \t c_us \t l_us \t bytes
//! ```
//!
//! Versions are written into a temporary directory and renamed into place,
//! so readers only ever see complete entries.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsl::{self, DeclDiff, DeclKind};
use crate::engine::artifact::FORMAT_VERSION;
use crate::engine::RunRecord;
use crate::graph::{self, ArtifactLookup, Signature, DIGEST_ALGORITHM};
use crate::recompute::{Micros, NodeState};

pub const LAYOUT_VERSION: u32 = 1;
pub const RECORD_ENCODING: &str = "json";

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("workspace is locked by process {0}")]
    LockHeld(String),
    #[error("no version {0}")]
    NotFound(u64),
    #[error("no version records metric `{0}`")]
    NoMetric(String),
}

type Result<T, E = WorkspaceError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> WorkspaceError + '_ {
    move |source| WorkspaceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, message: impl Into<String>) -> WorkspaceError {
    WorkspaceError::Corrupt {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub layout: u32,
    pub digest: String,
    pub artifact_format: u8,
    pub record_encoding: String,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            layout: LAYOUT_VERSION,
            digest: DIGEST_ALGORITHM.to_string(),
            artifact_format: FORMAT_VERSION,
            record_encoding: RECORD_ENCODING.to_string(),
        }
    }
}

/// One committed iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionEntry {
    pub id: u64,
    pub parent_id: Option<u64>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub workflow: String,
    /// SHA-256 of the normalized source.
    pub source_hash: String,
    pub change: DeclDiff,
    pub record: RunRecord,
}

impl VersionEntry {
    pub fn metrics(&self) -> &BTreeMap<String, f64> {
        &self.record.metrics
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: PathBuf,
    pub bytes: u64,
    pub version: u64,
}

/// Stored artifacts by signature. Entries whose file is missing or has the
/// wrong size are dropped on load.
#[derive(Debug, Clone, Default)]
pub struct ArtifactIndex {
    pub entries: BTreeMap<Signature, ArtifactEntry>,
}

impl ArtifactIndex {
    pub fn get(&self, sig: &Signature) -> Option<&ArtifactEntry> {
        self.entries.get(sig)
    }

    pub fn total_bytes(&self) -> u64 {
        self.entries.values().map(|e| e.bytes).sum()
    }
}

impl ArtifactLookup for ArtifactIndex {
    fn contains(&self, sig: &Signature) -> bool {
        self.entries.contains_key(sig)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatRecord {
    pub signature: Signature,
    pub compute_us: Micros,
    pub load_us: Micros,
    pub bytes: u64,
}

/// Latest measured costs per signature.
#[derive(Debug, Clone, Default)]
pub struct StatsIndex {
    pub by_signature: HashMap<Signature, StatRecord>,
}

impl StatsIndex {
    pub fn get(&self, sig: &Signature) -> Option<&StatRecord> {
        self.by_signature.get(sig)
    }
}

/// Exclusive writer lock; released on drop.
#[derive(Debug)]
pub struct WorkspaceLock {
    path: PathBuf,
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    /// Opens `root`, initializing an empty workspace if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let ws = Workspace { root: root.into() };
        for dir in [ws.root.clone(), ws.versions_dir(), ws.artifacts_dir()] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let manifest = ws.root.join("manifest");
        match fs::read_to_string(&manifest) {
            Ok(text) => {
                let found: Manifest =
                    serde_json::from_str(&text).map_err(|e| corrupt(&manifest, e.to_string()))?;
                if found != Manifest::default() {
                    return Err(corrupt(
                        &manifest,
                        format!("unsupported workspace format {found:?}"),
                    ));
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                write_atomic(&manifest, canonical_json(&Manifest::default()).as_bytes())?;
            }
            Err(e) => return Err(io_err(&manifest)(e)),
        }
        Ok(ws)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn versions_dir(&self) -> PathBuf {
        self.root.join("versions")
    }

    fn artifacts_dir(&self) -> PathBuf {
        self.root.join("artifacts")
    }

    fn artifacts_log(&self) -> PathBuf {
        self.root.join("artifacts.log")
    }

    fn stats_log(&self) -> PathBuf {
        self.root.join("stats.log")
    }

    /// Takes the writer lock. A lock left by a process that no longer exists
    /// is reclaimed.
    pub fn lock(&self) -> Result<WorkspaceLock> {
        let path = self.root.join("lock");
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    write!(f, "{}", std::process::id()).map_err(io_err(&path))?;
                    return Ok(WorkspaceLock { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path).unwrap_or_default();
                    if !holder_is_stale(holder.trim()) {
                        return Err(WorkspaceError::LockHeld(holder.trim().to_string()));
                    }
                    let _ = fs::remove_file(&path);
                }
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
        Err(WorkspaceError::LockHeld("unknown".into()))
    }

    pub fn artifact_index(&self) -> Result<ArtifactIndex> {
        let log = self.artifacts_log();
        let mut index = ArtifactIndex::default();
        for (lineno, line) in read_lines(&log)?.iter().enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || corrupt(&log, format!("line {}: malformed entry", lineno + 1));
            if f.len() != 3 {
                return Err(bad());
            }
            let sig: Signature = f[0].parse().map_err(|_| bad())?;
            let bytes: u64 = f[1].parse().map_err(|_| bad())?;
            let version: u64 = f[2].parse().map_err(|_| bad())?;
            let rel = PathBuf::from("artifacts").join(sig.to_hex());
            let ok = fs::metadata(self.root.join(&rel)).is_ok_and(|m| m.len() == bytes);
            if ok {
                index.entries.entry(sig).or_insert(ArtifactEntry {
                    path: rel,
                    bytes,
                    version,
                });
            }
        }
        Ok(index)
    }

    pub fn read_artifact(&self, sig: &Signature) -> Result<Vec<u8>> {
        let path = self.artifacts_dir().join(sig.to_hex());
        fs::read(&path).map_err(io_err(&path))
    }

    /// Stores an artifact file and then indexes it. A crash between the two
    /// leaves an unindexed file, which is ignored.
    pub fn write_artifact(&self, sig: &Signature, bytes: &[u8], version: u64) -> Result<()> {
        let path = self.artifacts_dir().join(sig.to_hex());
        write_atomic(&path, bytes)?;
        append_line(
            &self.artifacts_log(),
            &format!("{sig}\t{}\t{version}", bytes.len()),
        )
    }

    pub fn stats(&self) -> Result<StatsIndex> {
        let log = self.stats_log();
        let mut index = StatsIndex::default();
        for (lineno, line) in read_lines(&log)?.iter().enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || corrupt(&log, format!("line {}: malformed entry", lineno + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            let rec = StatRecord {
                signature: f[0].parse().map_err(|_| bad())?,
                compute_us: f[1].parse().map_err(|_| bad())?,
                load_us: f[2].parse().map_err(|_| bad())?,
                bytes: f[3].parse().map_err(|_| bad())?,
            };
            index.by_signature.insert(rec.signature, rec);
        }
        Ok(index)
    }

    pub fn append_stats(&self, records: &[StatRecord]) -> Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let text: String = records
            .iter()
            .map(|r| {
                format!(
                    "{}\t{}\t{}\t{}\n",
                    r.signature, r.compute_us, r.load_us, r.bytes
                )
            })
            .collect();
        append_line(&self.stats_log(), text.trim_end())
    }

    /// Ids of committed versions, ascending.
    pub fn version_ids(&self) -> Result<Vec<u64>> {
        let dir = self.versions_dir();
        let mut ids: Vec<u64> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok()?.file_name().to_str()?.parse().ok())
            .collect();
        ids.sort_unstable();
        Ok(ids)
    }

    pub fn next_version_id(&self) -> Result<u64> {
        Ok(self.version_ids()?.last().map_or(1, |id| id + 1))
    }

    /// Commits `record` with `source` as the next version.
    pub fn record_version(
        &self,
        _lock: &WorkspaceLock,
        source: &str,
        record: RunRecord,
    ) -> Result<VersionEntry> {
        self.write_version(source, record, true)
    }

    fn write_version(
        &self,
        source: &str,
        mut record: RunRecord,
        commit: bool,
    ) -> Result<VersionEntry> {
        let id = self.next_version_id()?;
        let parent_id = id.checked_sub(1).filter(|p| *p > 0);
        let ast = dsl::parse(source).map_err(|e| corrupt(Path::new("source"), e.to_string()))?;
        let change = match parent_id {
            Some(p) => {
                let prev = self.checkout(p)?;
                let prev_ast = dsl::parse(&prev).map_err(|e| {
                    corrupt(&self.versions_dir().join(p.to_string()), e.to_string())
                })?;
                dsl::diff(&prev_ast, &ast)
            }
            None => dsl::diff(&dsl::WorkflowAst::default(), &ast),
        };
        record.version = id;
        let entry = VersionEntry {
            id,
            parent_id,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            workflow: ast.name.clone(),
            source_hash: hex::encode(Sha256::digest(dsl::normalize(&ast).as_bytes())),
            change,
            record,
        };

        let tmp = self
            .versions_dir()
            .join(format!(".tmp-{id}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&tmp);
        fs::create_dir(&tmp).map_err(io_err(&tmp))?;
        write_synced(&tmp.join("source.wf"), source.as_bytes())?;
        write_synced(&tmp.join("record.json"), canonical_json(&entry).as_bytes())?;
        if !commit {
            return Ok(entry);
        }
        let dest = self.versions_dir().join(id.to_string());
        fs::rename(&tmp, &dest).map_err(io_err(&dest))?;
        Ok(entry)
    }

    pub fn list_versions(&self) -> Result<Vec<VersionEntry>> {
        self.version_ids()?
            .into_iter()
            .map(|id| self.get_version(id))
            .collect()
    }

    pub fn get_version(&self, id: u64) -> Result<VersionEntry> {
        let path = self.versions_dir().join(id.to_string()).join("record.json");
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(WorkspaceError::NotFound(id))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        serde_json::from_str(&text).map_err(|e| corrupt(&path, e.to_string()))
    }

    pub fn latest(&self) -> Result<Option<VersionEntry>> {
        self.version_ids()?
            .last()
            .map(|id| self.get_version(*id))
            .transpose()
    }

    /// Version with the highest value of `metric`; ties go to the lowest id.
    pub fn best_version(&self, metric: &str) -> Result<VersionEntry> {
        let mut best: Option<VersionEntry> = None;
        for v in self.list_versions()? {
            let Some(&x) = v.metrics().get(metric) else {
                continue;
            };
            if best.as_ref().is_none_or(|b| x > b.metrics()[metric]) {
                best = Some(v);
            }
        }
        best.ok_or_else(|| WorkspaceError::NoMetric(metric.to_string()))
    }

    /// Source text exactly as it was run.
    pub fn checkout(&self, id: u64) -> Result<String> {
        let path = self.versions_dir().join(id.to_string()).join("source.wf");
        match fs::read_to_string(&path) {
            Ok(t) => Ok(t),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(WorkspaceError::NotFound(id)),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Per-node view of a version's DAG and execution.
    pub fn dag_view(&self, id: u64) -> Result<DagView> {
        let entry = self.get_version(id)?;
        let source = self.checkout(id)?;
        build_dag_view(&entry, &source)
    }

    pub fn compare(&self, a: u64, b: u64) -> Result<ComparisonReport> {
        let (ea, eb) = (self.get_version(a)?, self.get_version(b)?);
        let (sa, sb) = (self.checkout(a)?, self.checkout(b)?);
        let parse = |id: u64, s: &str| {
            dsl::parse(s)
                .map_err(|e| corrupt(&self.versions_dir().join(id.to_string()), e.to_string()))
        };
        let decls = dsl::diff(&parse(a, &sa)?, &parse(b, &sb)?);
        let source_diff = similar::TextDiff::from_lines(&sa, &sb)
            .unified_diff()
            .context_radius(3)
            .header(&format!("v{a}/source.wf"), &format!("v{b}/source.wf"))
            .to_string();

        let (va, vb) = (build_dag_view(&ea, &sa)?, build_dag_view(&eb, &sb)?);
        let states = |v: &DagView| -> BTreeMap<String, ViewState> {
            v.nodes.iter().map(|n| (n.name.clone(), n.state)).collect()
        };
        let (xa, xb) = (states(&va), states(&vb));
        let dag = DagDelta {
            added: xb
                .keys()
                .filter(|k| !xa.contains_key(*k))
                .cloned()
                .collect(),
            removed: xa
                .keys()
                .filter(|k| !xb.contains_key(*k))
                .cloned()
                .collect(),
            state_changed: xa
                .iter()
                .filter_map(|(k, sa)| {
                    let sb = xb.get(k)?;
                    (sa != sb).then(|| (k.clone(), StateChange { from: *sa, to: *sb }))
                })
                .collect(),
        };

        let names: BTreeSet<&String> = ea.metrics().keys().chain(eb.metrics().keys()).collect();
        let metrics = names
            .into_iter()
            .map(|m| {
                let (x, y) = (ea.metrics().get(m).copied(), eb.metrics().get(m).copied());
                let delta = x.zip(y).map(|(x, y)| y - x);
                (m.clone(), MetricDelta { a: x, b: y, delta })
            })
            .collect();

        Ok(ComparisonReport {
            a,
            b,
            source_diff,
            decls,
            dag,
            metrics,
        })
    }

    /// Value series per metric name, in version order.
    pub fn metric_series(&self) -> Result<BTreeMap<String, Vec<MetricPoint>>> {
        let mut out: BTreeMap<String, Vec<MetricPoint>> = BTreeMap::new();
        for v in self.list_versions()? {
            for (name, value) in v.metrics() {
                out.entry(name.clone()).or_default().push(MetricPoint {
                    version: v.id,
                    value: *value,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub version: u64,
    pub value: f64,
}

/// Node state as displayed: a plan state, or removed by slicing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewState {
    Load,
    Compute,
    Prune,
    StaticPrune,
}

impl ViewState {
    pub fn as_str(self) -> &'static str {
        match self {
            ViewState::Load => "Load",
            ViewState::Compute => "Compute",
            ViewState::Prune => "Prune",
            ViewState::StaticPrune => "StaticPrune",
        }
    }
}

impl From<NodeState> for ViewState {
    fn from(s: NodeState) -> Self {
        match s {
            NodeState::Load => ViewState::Load,
            NodeState::Compute => ViewState::Compute,
            NodeState::Prune => ViewState::Prune,
        }
    }
}

impl std::fmt::Display for ViewState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagViewNode {
    pub name: String,
    pub kind: DeclKind,
    pub func: String,
    pub state: ViewState,
    pub duration_us: Micros,
    pub bytes: u64,
    pub materialized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagView {
    pub version: u64,
    /// Topological order.
    pub nodes: Vec<DagViewNode>,
    /// `(parent, child)` pairs.
    pub edges: Vec<(String, String)>,
}

fn build_dag_view(entry: &VersionEntry, source: &str) -> Result<DagView> {
    let ast = dsl::parse(source).map_err(|e| corrupt(Path::new("source"), e.to_string()))?;
    let dag = graph::compile(&ast).map_err(|e| corrupt(Path::new("source"), e.to_string()))?;
    let events: HashMap<&str, &crate::engine::NodeEvent> = entry
        .record
        .events
        .iter()
        .map(|e| (e.node.as_str(), e))
        .collect();
    let nodes = dag
        .iter()
        .map(|n| {
            let ev = events.get(n.name.as_str());
            DagViewNode {
                name: n.name.clone(),
                kind: n.kind,
                func: n.func.clone(),
                state: ev.map_or(ViewState::StaticPrune, |e| e.state.into()),
                duration_us: ev.map_or(0, |e| e.duration_us),
                bytes: ev.map_or(0, |e| e.bytes),
                materialized: ev.is_some_and(|e| e.materialized),
            }
        })
        .collect();
    Ok(DagView {
        version: entry.id,
        nodes,
        edges: dag.edges(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChange {
    pub from: ViewState,
    pub to: ViewState,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagDelta {
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
    pub state_changed: BTreeMap<String, StateChange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `b - a` when both exist.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a: u64,
    pub b: u64,
    /// Unified line diff from `a`'s source to `b`'s.
    pub source_diff: String,
    pub decls: DeclDiff,
    pub dag: DagDelta,
    pub metrics: BTreeMap<String, MetricDelta>,
}

impl ComparisonReport {
    pub fn is_empty(&self) -> bool {
        self.source_diff.is_empty()
            && self.decls.is_empty()
            && self.dag == DagDelta::default()
            && self.metrics.values().all(|m| m.delta == Some(0.0))
    }
}

/// Pretty, key-sorted JSON.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json's map type is ordered by key unless preserve_order is on
    let v = serde_json::to_value(value).expect("serializable");
    let mut s = serde_json::to_string_pretty(&v).expect("serializable");
    s.push('\n');
    s
}

fn holder_is_stale(pid: &str) -> bool {
    let Ok(pid) = pid.parse::<u32>() else {
        return false;
    };
    if pid == std::process::id() {
        return false;
    }
    cfg!(target_os = "linux") && !Path::new(&format!("/proc/{pid}")).exists()
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(t
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::to_string)
            .collect()),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    writeln!(f, "{line}").map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    write_synced(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(io_err(path))
}
