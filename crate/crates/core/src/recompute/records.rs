//! Line-delimited debug form of a planning instance and its plan. Fields are tab-separated.
//!
//! ```text
//! # node  c  l  size  mandatory  state  parents
//! data  1200  inf  4096  0  Compute  -
//! model  8000  35  512  1  Load  data
//! objective  1235
//! ```

use std::collections::BTreeMap;
use std::fmt::Write;

use super::{CostAnnotatedDag, CostNode, ExecutionPlan, NodeState};

pub const HEADER: &str = "# node\tc\tl\tsize\tmandatory\tstate\tparents";

pub fn write_records(dag: &CostAnnotatedDag, plan: Option<&ExecutionPlan>) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for n in &dag.nodes {
        let load = n.load.map_or_else(|| "inf".to_string(), |l| l.to_string());
        let state = plan
            .and_then(|p| p.state(&n.name))
            .map_or("-", NodeState::as_str);
        let parents = if n.parents.is_empty() {
            "-".to_string()
        } else {
            n.parents
                .iter()
                .map(|&p| dag.nodes[p].name.as_str())
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            n.name,
            n.compute,
            load,
            n.size,
            u8::from(n.mandatory),
            state,
            parents
        );
    }
    if let Some(p) = plan {
        let _ = writeln!(out, "objective\t{}", p.objective);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("record line {line}: {message}")]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

/// Parses [`write_records`] output. The plan is returned only when every node
/// row carries a state.
pub fn parse_records(text: &str) -> Result<(CostAnnotatedDag, Option<ExecutionPlan>), RecordError> {
    let mut nodes: Vec<CostNode> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut states: BTreeMap<String, NodeState> = BTreeMap::new();
    let mut objective = None;

    for (i, line) in text.lines().enumerate() {
        let err = |message: String| RecordError {
            line: i + 1,
            message,
        };
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields[0] == "objective" && fields.len() == 2 {
            objective = Some(
                fields[1]
                    .parse()
                    .map_err(|e| err(format!("objective: {e}")))?,
            );
            continue;
        }
        if fields.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<u64, RecordError> {
            s.parse().map_err(|e| err(format!("{what}: {e}")))
        };
        let load = match fields[2] {
            "inf" => None,
            s => Some(num(s, "load")?),
        };
        let mandatory = match fields[4] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("mandatory flag `{other}`"))),
        };
        let parents = if fields[6] == "-" {
            Vec::new()
        } else {
            fields[6]
                .split(',')
                .map(|p| {
                    index
                        .get(p)
                        .copied()
                        .ok_or_else(|| err(format!("unknown parent `{p}`")))
                })
                .collect::<Result<_, _>>()?
        };
        if fields[5] != "-" {
            states.insert(fields[0].to_string(), fields[5].parse().map_err(err)?);
        }
        if index.insert(fields[0].to_string(), nodes.len()).is_some() {
            return Err(err(format!("duplicate node `{}`", fields[0])));
        }
        nodes.push(CostNode {
            name: fields[0].to_string(),
            compute: num(fields[1], "compute")?,
            load,
            size: num(fields[3], "size")?,
            mandatory,
            parents,
        });
    }

    let dag = CostAnnotatedDag { nodes };
    let plan = (states.len() == dag.len() && (!dag.is_empty() || objective.is_some())).then(|| {
        ExecutionPlan {
            states,
            objective: objective.unwrap_or(0),
        }
    });
    Ok((dag, plan))
}
