//! Online materialization under a storage budget.
//!
//! When an operator finishes, its output is kept iff the estimated saving for
//! the next iteration is positive and it still fits in the budget. The score
//! is `r = 2*l - (c + sum of ancestor compute costs)`: materializing costs
//! roughly one write now plus one read later, against recomputing the node
//! and its whole ancestry. Negative `r` means keep.
//!
//! Choosing the best subset offline is a knapsack problem; [`offline_oracle`]
//! solves small instances exactly so the online rule can be measured against
//! it.

use serde::{Deserialize, Serialize};

use crate::par::{self, Execution};
use crate::recompute::{optimal_plan, CostAnnotatedDag, Micros};

/// Largest candidate set [`offline_oracle`] will enumerate.
pub const ORACLE_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRuntimeStats {
    pub node: String,
    pub compute_us: Micros,
    pub load_us: Micros,
    pub size_bytes: u64,
    pub ancestor_compute_us: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterializationBudget {
    pub total_bytes: u64,
    pub used_bytes: u64,
}

impl MaterializationBudget {
    pub fn new(total_bytes: u64) -> Self {
        MaterializationBudget {
            total_bytes,
            used_bytes: 0,
        }
    }

    pub fn remaining(&self) -> u64 {
        self.total_bytes - self.used_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SkipReason {
    NonNegativeBenefit,
    BudgetExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaterializationDecision {
    Materialize,
    Skip(SkipReason),
}

/// `2*l - (c + ancestors)`; negative means materializing pays off.
pub fn reuse_benefit(stats: &NodeRuntimeStats) -> i64 {
    2 * stats.load_us as i64 - (stats.compute_us as i64 + stats.ancestor_compute_us as i64)
}

/// Applies the online rule and charges the budget on `Materialize`.
pub fn decide(
    stats: &NodeRuntimeStats,
    budget: &mut MaterializationBudget,
) -> MaterializationDecision {
    if reuse_benefit(stats) >= 0 {
        return MaterializationDecision::Skip(SkipReason::NonNegativeBenefit);
    }
    if stats.size_bytes > budget.remaining() {
        return MaterializationDecision::Skip(SkipReason::BudgetExceeded);
    }
    budget.used_bytes += stats.size_bytes;
    MaterializationDecision::Materialize
}

/// Next-iteration planned cost when exactly `stored` nodes can be loaded.
///
/// `dag` carries for every node the load cost it would have if materialized;
/// nodes outside `stored` are treated as having no artifact.
pub fn next_iteration_cost(dag: &CostAnnotatedDag, stored: &[bool]) -> Micros {
    let mut next = dag.clone();
    for (node, &keep) in next.nodes.iter_mut().zip(stored) {
        if !keep {
            node.load = None;
        }
    }
    optimal_plan(&next).objective
}

/// One decision of a simulated first iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnlineStep {
    pub stats: NodeRuntimeStats,
    pub decision: MaterializationDecision,
}

/// Replays the online rule over a first iteration in which every node is
/// computed in topological order. Nodes whose `load` is `None` cannot be
/// stored and are not offered.
pub fn online_run(dag: &CostAnnotatedDag, budget_bytes: u64) -> (Vec<bool>, Vec<OnlineStep>) {
    let mut budget = MaterializationBudget::new(budget_bytes);
    let mut stored = vec![false; dag.len()];
    let mut steps = Vec::new();
    for (i, node) in dag.nodes.iter().enumerate() {
        let Some(load) = node.load else { continue };
        let stats = NodeRuntimeStats {
            node: node.name.clone(),
            compute_us: node.compute,
            load_us: load,
            size_bytes: node.size,
            ancestor_compute_us: ancestor_compute_sum(dag, i),
        };
        let decision = decide(&stats, &mut budget);
        stored[i] = decision == MaterializationDecision::Materialize;
        steps.push(OnlineStep { stats, decision });
    }
    (stored, steps)
}

pub fn ancestor_compute_sum(dag: &CostAnnotatedDag, index: usize) -> Micros {
    let mut seen = vec![false; dag.len()];
    let mut stack = dag.nodes[index].parents.clone();
    let mut sum = 0;
    while let Some(p) = stack.pop() {
        if !std::mem::replace(&mut seen[p], true) {
            sum += dag.nodes[p].compute;
            stack.extend_from_slice(&dag.nodes[p].parents);
        }
    }
    sum
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleChoice {
    /// Chosen node names, sorted.
    pub subset: Vec<String>,
    pub bytes: u64,
    pub next_cost: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0} candidates; the offline oracle enumerates at most {ORACLE_LIMIT}")]
pub struct TooLarge(pub usize);

/// Exact best subset to store, assuming the next iteration reruns the same
/// DAG and can reuse anything stored. Ties go to fewer bytes, then to the
/// lexicographically smallest sorted name list.
pub fn offline_oracle(dag: &CostAnnotatedDag, budget_bytes: u64) -> Result<OracleChoice, TooLarge> {
    offline_oracle_with(dag, budget_bytes, Execution::default())
}

pub fn offline_oracle_with(
    dag: &CostAnnotatedDag,
    budget_bytes: u64,
    exec: Execution,
) -> Result<OracleChoice, TooLarge> {
    let candidates: Vec<usize> = (0..dag.len())
        .filter(|&i| dag.nodes[i].load.is_some())
        .collect();
    if candidates.len() > ORACLE_LIMIT {
        return Err(TooLarge(candidates.len()));
    }
    let subset_of = |mask: u64| -> Vec<usize> {
        candidates
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask >> bit & 1 == 1)
            .map(|(_, &i)| i)
            .collect()
    };
    let names_of = |idx: &[usize]| -> Vec<String> {
        let mut names: Vec<String> = idx.iter().map(|&i| dag.nodes[i].name.clone()).collect();
        names.sort();
        names
    };

    let best = par::min_over_range(exec, 0..1u64 << candidates.len(), |mask| {
        let idx = subset_of(mask);
        let bytes: u64 = idx.iter().map(|&i| dag.nodes[i].size).sum();
        if bytes > budget_bytes {
            return None;
        }
        let mut stored = vec![false; dag.len()];
        for &i in &idx {
            stored[i] = true;
        }
        Some((next_iteration_cost(dag, &stored), bytes, names_of(&idx)))
    });
    // the empty subset always fits
    let ((next_cost, bytes, subset), _) = best.expect("empty subset is feasible");
    Ok(OracleChoice {
        subset,
        bytes,
        next_cost,
    })
}
