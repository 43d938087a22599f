use super::{CostAnnotatedDag, ExecutionPlan, NodeState};
use crate::par::{self, Execution};

/// Largest instance [`brute_force_plan`] accepts (3^12 = 531,441 assignments).
pub const BRUTE_FORCE_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("instance has {0} nodes; exhaustive search is limited to {BRUTE_FORCE_LIMIT}")]
pub struct TooLarge(pub usize);

const STATES: [NodeState; 3] = [NodeState::Load, NodeState::Compute, NodeState::Prune];

fn decode(mut index: u64, n: usize, out: &mut Vec<NodeState>) {
    out.clear();
    for _ in 0..n {
        out.push(STATES[(index % 3) as usize]);
        index /= 3;
    }
}

/// Exhaustive search over all `3^n` assignments.
///
/// Minimizes cost first, then the number of selected projects
/// (Load = 1, Compute = 2), which is the same tie rule the flow solution
/// realizes.
pub fn brute_force_plan(dag: &CostAnnotatedDag) -> Result<ExecutionPlan, TooLarge> {
    brute_force_plan_with(dag, Execution::default())
}

pub fn brute_force_plan_with(
    dag: &CostAnnotatedDag,
    exec: Execution,
) -> Result<ExecutionPlan, TooLarge> {
    let n = dag.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(TooLarge(n));
    }
    let total = 3u64.pow(n as u32);
    let best = par::min_over_range(exec, 0..total, |i| {
        let mut states = Vec::with_capacity(n);
        decode(i, n, &mut states);
        let cost = dag.assignment_cost(&states)?;
        let projects: u64 = states.iter().map(|s| s.project_count()).sum();
        Some((cost, projects))
    });
    // the all-Compute assignment is always feasible
    let (_, index) = best.expect("at least one feasible plan");
    let mut states = Vec::with_capacity(n);
    decode(index, n, &mut states);
    Ok(dag.plan_from_states(&states))
}

#[cfg(test)]
mod tests {
    use super::super::tests::node;
    use super::*;

    #[test]
    fn empty() {
        let p = brute_force_plan(&CostAnnotatedDag::default()).unwrap();
        assert!(p.states.is_empty());
        assert_eq!(p.objective, 0);
    }

    #[test]
    fn all_mandatory_no_loads_is_all_compute() {
        let dag = CostAnnotatedDag::new(vec![
            node("a", 3, None, true, &[]),
            node("b", 4, None, true, &[0]),
            node("c", 5, None, true, &[0, 1]),
        ])
        .unwrap();
        let p = brute_force_plan(&dag).unwrap();
        assert_eq!(p.objective, 12);
        assert_eq!(p.count(NodeState::Compute), 3);
    }

    #[test]
    fn too_large() {
        let dag = CostAnnotatedDag::new(
            (0..13)
                .map(|i| node(&format!("n{i}"), 1, None, true, &[]))
                .collect(),
        )
        .unwrap();
        assert_eq!(brute_force_plan(&dag).unwrap_err(), TooLarge(13));
    }

    #[test]
    fn sequential_matches_parallel() {
        let dag = CostAnnotatedDag::new(vec![
            node("a", 10, Some(2), false, &[]),
            node("b", 10, Some(100), false, &[0]),
            node("c", 1, None, true, &[1]),
            node("d", 3, Some(3), true, &[0]),
        ])
        .unwrap();
        assert_eq!(
            brute_force_plan_with(&dag, Execution::Sequential),
            brute_force_plan_with(&dag, Execution::Parallel)
        );
    }
}
