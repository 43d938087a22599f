//! Project-selection reduction of the planning problem.
//!
//! Every node `i` contributes two projects: `avail_i` (the node's output is
//! available) and `comp_i` (it is computed rather than loaded). In scaled
//! units the profits are
//!
//! * `avail_i`: `-L_i`, plus `M` when the node is mandatory
//! * `comp_i`: `L_i - C_i`
//!
//! with prerequisites `comp_i -> avail_i` and `comp_i -> avail_p` for every
//! parent `p`. Selecting `avail_i` alone means Load, both means Compute,
//! neither means Prune. An infeasible load is priced at `L_i = M`.
//!
//! Costs are scaled by `K = 2n + 1` and a Load costs one extra unit, a
//! Compute two; the extra units total less than `K`, so they only decide
//! between plans of equal true cost.

use super::flow::{Capacity, FlowNetwork, MinCut};
use super::{CostAnnotatedDag, NodeState};

pub const SOURCE: usize = 0;
pub const SINK: usize = 1;

pub fn avail_vertex(i: usize) -> usize {
    2 + 2 * i
}

pub fn comp_vertex(i: usize) -> usize {
    3 + 2 * i
}

struct Scaled {
    compute: Vec<Capacity>,
    load: Vec<Option<Capacity>>,
    big_m: Capacity,
}

fn scale(dag: &CostAnnotatedDag) -> Scaled {
    let k = 2 * dag.len() as Capacity + 1;
    let compute: Vec<Capacity> = dag
        .nodes
        .iter()
        .map(|n| k * n.compute as Capacity + 2)
        .collect();
    let load: Vec<Option<Capacity>> = dag
        .nodes
        .iter()
        .map(|n| n.load.map(|l| k * l as Capacity + 1))
        .collect();
    let big_m = compute.iter().sum::<Capacity>() + load.iter().flatten().sum::<Capacity>() + 1;
    Scaled {
        compute,
        load,
        big_m,
    }
}

/// Builds the min-cut network. Vertex 0 is the source, 1 the sink, and node
/// `i` owns vertices [`avail_vertex`]`(i)` and [`comp_vertex`]`(i)`.
pub fn build_network(dag: &CostAnnotatedDag) -> FlowNetwork {
    let s = scale(dag);
    let m = s.big_m;
    let mut profits: Vec<(usize, i128)> = Vec::with_capacity(2 * dag.len());
    for (i, n) in dag.nodes.iter().enumerate() {
        let load = s.load[i].unwrap_or(m) as i128;
        let mandatory = if n.mandatory { m as i128 } else { 0 };
        profits.push((avail_vertex(i), mandatory - load));
        profits.push((comp_vertex(i), load - s.compute[i] as i128));
    }
    // Prerequisite arcs must never be cut: exceed every finite cut, the
    // largest of which takes all positive-profit arcs.
    let infinite = profits
        .iter()
        .filter(|(_, p)| *p > 0)
        .map(|(_, p)| *p as Capacity)
        .sum::<Capacity>()
        + 1;

    let mut net = FlowNetwork::new(2 * dag.len() + 2, SOURCE, SINK);
    net.big_m = m;
    for (v, p) in profits {
        match p.signum() {
            1 => net.add_arc(SOURCE, v, p as Capacity),
            -1 => net.add_arc(v, SINK, p.unsigned_abs()),
            _ => {}
        }
    }
    for (i, n) in dag.nodes.iter().enumerate() {
        net.add_arc(comp_vertex(i), avail_vertex(i), infinite);
        let mut parents = n.parents.clone();
        parents.sort_unstable();
        parents.dedup();
        for p in parents {
            net.add_arc(comp_vertex(i), avail_vertex(p), infinite);
        }
    }
    net
}

/// Reads node states off the source side of a cut.
pub fn decode_cut(dag: &CostAnnotatedDag, cut: &MinCut) -> Vec<NodeState> {
    (0..dag.len())
        .map(|i| {
            match (
                cut.source_side[avail_vertex(i)],
                cut.source_side[comp_vertex(i)],
            ) {
                (true, true) => NodeState::Compute,
                (true, false) => NodeState::Load,
                (false, false) => NodeState::Prune,
                (false, true) => unreachable!("compute selected without availability"),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{min_cut, CostNode};
    use super::*;

    fn single(c: u64, l: Option<u64>) -> CostAnnotatedDag {
        CostAnnotatedDag::new(vec![CostNode {
            name: "a".into(),
            compute: c,
            load: l,
            size: 0,
            mandatory: true,
            parents: vec![],
        }])
        .unwrap()
    }

    #[test]
    fn empty_network() {
        let net = build_network(&CostAnnotatedDag::default());
        assert_eq!(net.vertex_count, 2);
        assert!(net.arcs.is_empty());
        assert_eq!(min_cut(&net).value, 0);
    }

    #[test]
    fn single_node_cut_maps_to_load() {
        let dag = single(7, Some(3));
        let cut = min_cut(&build_network(&dag));
        assert_eq!(decode_cut(&dag, &cut), vec![NodeState::Load]);
        // value = all positive profit - best closure profit
        // K = 3: L = 10, C = 23, M = 34; avail profit 24, comp profit -13
        assert_eq!(cut.value, 24 - (34 - 10));
    }

    #[test]
    fn sentinel_exceeds_all_finite_costs() {
        let dag = CostAnnotatedDag::new(
            (0..5)
                .map(|i| CostNode {
                    name: format!("n{i}"),
                    compute: 100 * i,
                    load: (i % 2 == 0).then_some(7 * i),
                    size: 0,
                    mandatory: i == 4,
                    parents: if i > 0 { vec![i as usize - 1] } else { vec![] },
                })
                .collect(),
        )
        .unwrap();
        let net = build_network(&dag);
        let total: u64 = dag
            .nodes
            .iter()
            .map(|n| n.compute + n.load.unwrap_or(0))
            .sum();
        assert!(net.big_m > total as Capacity * (2 * 5 + 1));
        let n = dag.len();
        assert_eq!(net.vertex_count, 2 * n + 2);
        let edges: usize = dag.nodes.iter().map(|n| n.parents.len()).sum();
        assert!(net.arcs.len() <= 2 * n + edges + n);
    }
}
