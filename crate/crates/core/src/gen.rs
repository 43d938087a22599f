//! Seeded random instance generators for property tests, sweeps and benches.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::recompute::{CostAnnotatedDag, CostNode};

/// Shape of random planning instances.
#[derive(Debug, Clone, Copy)]
pub struct DagParams {
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub max_cost: u64,
    /// Probability that a node has no stored artifact.
    pub p_infeasible_load: f64,
    /// Probability of an edge from each earlier node.
    pub p_edge: f64,
}

impl Default for DagParams {
    fn default() -> Self {
        DagParams {
            min_nodes: 1,
            max_nodes: 8,
            max_cost: 100,
            p_infeasible_load: 1.0 / 3.0,
            p_edge: 0.35,
        }
    }
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Random DAG in topological order. Sinks (nodes without children) are
/// mandatory; sizes are drawn from `1..=1000`.
pub fn random_cost_dag(rng: &mut impl Rng, p: &DagParams) -> CostAnnotatedDag {
    let n = rng.random_range(p.min_nodes..=p.max_nodes);
    let mut nodes: Vec<CostNode> = Vec::with_capacity(n);
    for i in 0..n {
        let parents: Vec<usize> = (0..i).filter(|_| rng.random_bool(p.p_edge)).collect();
        let load = if rng.random_bool(p.p_infeasible_load) {
            None
        } else {
            Some(rng.random_range(0..=p.max_cost))
        };
        nodes.push(CostNode {
            name: format!("n{i}"),
            compute: rng.random_range(0..=p.max_cost),
            load,
            size: rng.random_range(1..=1000),
            mandatory: false,
            parents,
        });
    }
    let mut has_child = vec![false; n];
    for node in &nodes {
        for &q in &node.parents {
            has_child[q] = true;
        }
    }
    for (node, child) in nodes.iter_mut().zip(has_child) {
        node.mandatory = !child;
    }
    CostAnnotatedDag { nodes }
}

/// `count` instances from consecutive seeds starting at `seed`.
pub fn random_cost_dags(seed: u64, count: usize, p: &DagParams) -> Vec<CostAnnotatedDag> {
    let mut r = rng(seed);
    (0..count).map(|_| random_cost_dag(&mut r, p)).collect()
}

/// Random instance for comparing the online materialization rule with the
/// offline oracle: every node can be stored, load time grows with size, and
/// the budget covers 10–60% of all bytes.
pub fn random_reuse_instance(rng: &mut impl Rng, max_nodes: usize) -> (CostAnnotatedDag, u64) {
    let n = rng.random_range(2..=max_nodes);
    let mut nodes: Vec<CostNode> = Vec::with_capacity(n);
    for i in 0..n {
        let parents: Vec<usize> = (0..i).filter(|_| rng.random_bool(0.35)).collect();
        let size = rng.random_range(1..=1000u64);
        nodes.push(CostNode {
            name: format!("n{i}"),
            compute: rng.random_range(1..=100),
            load: Some(1 + size / 20),
            size,
            mandatory: false,
            parents,
        });
    }
    let mut has_child = vec![false; n];
    for node in &nodes {
        for &q in &node.parents {
            has_child[q] = true;
        }
    }
    for (node, child) in nodes.iter_mut().zip(has_child) {
        node.mandatory = !child;
    }
    let total: u64 = nodes.iter().map(|n| n.size).sum();
    let budget = total * rng.random_range(10..=60) / 100;
    (CostAnnotatedDag { nodes }, budget)
}
