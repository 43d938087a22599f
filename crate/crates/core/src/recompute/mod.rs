//! Optimal load/compute/prune planning.
//!
//! Given per-node compute and load costs, pick a state for every node so the
//! total cost of the iteration is minimal, subject to two rules: a computed
//! node needs all of its parents available (loaded or computed), and every
//! mandatory node must end up available. The problem reduces to project
//! selection (maximum-weight closure) and is solved with one min cut.
//!
//! Ties between equal-cost plans are broken by preferring fewer selected
//! projects: `Prune` < `Load` < `Compute` per node. Under that order the
//! optimum is unique, so the flow solution and the exhaustive search in
//! [`brute_force_plan`] agree plan-for-plan, not just in cost.

mod brute;
mod flow;
mod network;
mod records;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use brute::{brute_force_plan, brute_force_plan_with, TooLarge, BRUTE_FORCE_LIMIT};
pub use flow::{min_cut, Capacity, FlowArc, FlowNetwork, MinCut};
pub use network::{avail_vertex, build_network, comp_vertex, decode_cut};
pub use records::{parse_records, write_records, RecordError};

use crate::par::{self, Execution};

/// Time in microseconds.
pub type Micros = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostNode {
    pub name: String,
    pub compute: Micros,
    /// `None` when no stored artifact exists.
    pub load: Option<Micros>,
    pub size: u64,
    pub mandatory: bool,
    /// Indices of parent nodes; always smaller than this node's index.
    pub parents: Vec<usize>,
}

/// One planning instance. Nodes are stored in topological order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostAnnotatedDag {
    pub nodes: Vec<CostNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidDag {
    #[error("node `{node}` lists parent index {parent}, which does not precede it")]
    BadParent { node: String, parent: usize },
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
}

impl CostAnnotatedDag {
    pub fn new(nodes: Vec<CostNode>) -> Result<Self, InvalidDag> {
        let dag = CostAnnotatedDag { nodes };
        dag.validate()?;
        Ok(dag)
    }

    pub fn validate(&self) -> Result<(), InvalidDag> {
        let mut seen = std::collections::HashSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !seen.insert(n.name.as_str()) {
                return Err(InvalidDag::DuplicateName(n.name.clone()));
            }
            if let Some(&p) = n.parents.iter().find(|&&p| p >= i) {
                return Err(InvalidDag::BadParent {
                    node: n.name.clone(),
                    parent: p,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Cost of an assignment given as a state vector, or `None` if it breaks a
    /// rule.
    pub(crate) fn assignment_cost(&self, states: &[NodeState]) -> Option<Micros> {
        self.check(states).ok()?;
        Some(self.raw_cost(states))
    }

    fn raw_cost(&self, states: &[NodeState]) -> Micros {
        self.nodes
            .iter()
            .zip(states)
            .map(|(n, s)| match s {
                NodeState::Compute => n.compute,
                NodeState::Load => n.load.unwrap_or(0),
                NodeState::Prune => 0,
            })
            .sum()
    }

    fn check(&self, states: &[NodeState]) -> Result<(), InfeasiblePlan> {
        for (n, s) in self.nodes.iter().zip(states) {
            let fail = |constraint| {
                Err(InfeasiblePlan {
                    constraint,
                    node: n.name.clone(),
                })
            };
            match s {
                NodeState::Prune if n.mandatory => return fail(Constraint::Availability),
                NodeState::Load if n.load.is_none() => return fail(Constraint::FeasibleLoad),
                NodeState::Compute if n.parents.iter().any(|&p| states[p] == NodeState::Prune) => {
                    return fail(Constraint::PruneConstraint)
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn plan_from_states(&self, states: &[NodeState]) -> ExecutionPlan {
        ExecutionPlan {
            states: self
                .nodes
                .iter()
                .zip(states)
                .map(|(n, s)| (n.name.clone(), *s))
                .collect(),
            objective: self.raw_cost(states),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeState {
    Load,
    Compute,
    Prune,
}

impl NodeState {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeState::Load => "Load",
            NodeState::Compute => "Compute",
            NodeState::Prune => "Prune",
        }
    }

    /// Projects selected in the closure formulation (used for tie-breaking).
    pub(crate) fn project_count(self) -> u64 {
        match self {
            NodeState::Prune => 0,
            NodeState::Load => 1,
            NodeState::Compute => 2,
        }
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NodeState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Load" => Ok(NodeState::Load),
            "Compute" => Ok(NodeState::Compute),
            "Prune" => Ok(NodeState::Prune),
            other => Err(format!("unknown node state `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub states: BTreeMap<String, NodeState>,
    pub objective: Micros,
}

impl ExecutionPlan {
    pub fn state(&self, name: &str) -> Option<NodeState> {
        self.states.get(name).copied()
    }

    pub fn count(&self, state: NodeState) -> usize {
        self.states.values().filter(|s| **s == state).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// A computed node has a pruned parent.
    PruneConstraint,
    /// A mandatory node is pruned.
    Availability,
    /// A node without a stored artifact is loaded.
    FeasibleLoad,
    /// The plan has no state for the node.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("infeasible plan: {constraint:?} violated at `{node}`")]
pub struct InfeasiblePlan {
    pub constraint: Constraint,
    pub node: String,
}

fn state_vector(
    dag: &CostAnnotatedDag,
    plan: &ExecutionPlan,
) -> Result<Vec<NodeState>, InfeasiblePlan> {
    dag.nodes
        .iter()
        .map(|n| {
            plan.state(&n.name).ok_or_else(|| InfeasiblePlan {
                constraint: Constraint::Missing,
                node: n.name.clone(),
            })
        })
        .collect()
}

/// Evaluates the plan objective, rejecting plans that break a rule.
pub fn plan_cost(dag: &CostAnnotatedDag, plan: &ExecutionPlan) -> Result<Micros, InfeasiblePlan> {
    let states = state_vector(dag, plan)?;
    dag.check(&states)?;
    Ok(dag.raw_cost(&states))
}

/// Minimum-cost plan via the min-cut reduction.
pub fn optimal_plan(dag: &CostAnnotatedDag) -> ExecutionPlan {
    let net = build_network(dag);
    let cut = min_cut(&net);
    let states = decode_cut(dag, &cut);
    dag.plan_from_states(&states)
}

/// Plans many independent instances.
pub fn optimal_plans(dags: &[CostAnnotatedDag], exec: Execution) -> Vec<ExecutionPlan> {
    par::map_collect(exec, dags, optimal_plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn node(
        name: &str,
        c: u64,
        l: Option<u64>,
        mandatory: bool,
        parents: &[usize],
    ) -> CostNode {
        CostNode {
            name: name.into(),
            compute: c,
            load: l,
            size: 0,
            mandatory,
            parents: parents.to_vec(),
        }
    }

    fn plan(pairs: &[(&str, NodeState)]) -> ExecutionPlan {
        ExecutionPlan {
            states: pairs.iter().map(|(n, s)| (n.to_string(), *s)).collect(),
            objective: 0,
        }
    }

    use NodeState::*;

    #[test]
    fn forced_compute_cost() {
        let dag = CostAnnotatedDag::new(vec![node("a", 7, None, true, &[])]).unwrap();
        assert_eq!(plan_cost(&dag, &plan(&[("a", Compute)])), Ok(7));
    }

    #[test]
    fn load_cuts_ancestry() {
        let dag = CostAnnotatedDag::new(vec![
            node("a", 3, None, false, &[]),
            node("b", 9, Some(4), true, &[0]),
        ])
        .unwrap();
        assert_eq!(plan_cost(&dag, &plan(&[("a", Prune), ("b", Load)])), Ok(4));
    }

    #[test]
    fn infeasible_plans_are_named() {
        let dag = CostAnnotatedDag::new(vec![
            node("a", 3, None, false, &[]),
            node("b", 9, Some(4), true, &[0]),
        ])
        .unwrap();
        let err = plan_cost(&dag, &plan(&[("a", Prune), ("b", Compute)])).unwrap_err();
        assert_eq!(err.constraint, Constraint::PruneConstraint);
        assert_eq!(err.node, "b");

        let err = plan_cost(&dag, &plan(&[("a", Load), ("b", Load)])).unwrap_err();
        assert_eq!(err.constraint, Constraint::FeasibleLoad);
        assert_eq!(err.node, "a");

        let err = plan_cost(&dag, &plan(&[("a", Compute), ("b", Prune)])).unwrap_err();
        assert_eq!(err.constraint, Constraint::Availability);

        let err = plan_cost(&dag, &plan(&[("a", Compute)])).unwrap_err();
        assert_eq!(err.constraint, Constraint::Missing);
    }

    #[test]
    fn cheaper_to_load() {
        let dag = CostAnnotatedDag::new(vec![node("a", 10, Some(3), true, &[])]).unwrap();
        let p = optimal_plan(&dag);
        assert_eq!(p.state("a"), Some(Load));
        assert_eq!(p.objective, 3);
    }

    #[test]
    fn loading_cheap_ancestor_beats_loading_expensive_middle() {
        // frozen from exhaustive enumeration over 27 assignments
        let dag = CostAnnotatedDag::new(vec![
            node("a", 10, Some(2), false, &[]),
            node("b", 10, Some(100), false, &[0]),
            node("c", 1, None, true, &[1]),
        ])
        .unwrap();
        let p = optimal_plan(&dag);
        assert_eq!(p.objective, 13);
        assert_eq!(p.state("a"), Some(Load));
        assert_eq!(p.state("b"), Some(Compute));
        assert_eq!(p.state("c"), Some(Compute));
    }

    #[test]
    fn keeps_shared_parent_when_children_are_expensive_to_load() {
        let dag = CostAnnotatedDag::new(vec![
            node("j", 5, Some(6), false, &[]),
            node("k", 1, Some(50), true, &[0]),
            node("m", 1, Some(50), true, &[0]),
        ])
        .unwrap();
        let p = optimal_plan(&dag);
        assert_eq!(p.objective, 7);
        assert_eq!(p.state("j"), Some(Compute));
        assert_eq!(p.state("k"), Some(Compute));
        assert_eq!(p.state("m"), Some(Compute));
    }

    #[test]
    fn empty_dag() {
        let p = optimal_plan(&CostAnnotatedDag::default());
        assert!(p.states.is_empty());
        assert_eq!(p.objective, 0);
    }

    #[test]
    fn unneeded_zero_cost_node_is_pruned() {
        let dag = CostAnnotatedDag::new(vec![
            node("a", 0, Some(0), false, &[]),
            node("b", 4, Some(1), true, &[]),
        ])
        .unwrap();
        let p = optimal_plan(&dag);
        assert_eq!(p.state("a"), Some(Prune));
        assert_eq!(p.state("b"), Some(Load));
    }

    #[test]
    fn equal_load_and_compute_prefers_load() {
        let dag = CostAnnotatedDag::new(vec![node("a", 5, Some(5), true, &[])]).unwrap();
        assert_eq!(optimal_plan(&dag).state("a"), Some(Load));
    }

    #[test]
    fn rejects_forward_parent() {
        let err = CostAnnotatedDag::new(vec![node("a", 1, None, true, &[0])]).unwrap_err();
        assert!(matches!(err, InvalidDag::BadParent { .. }));
    }
}
