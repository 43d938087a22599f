#![allow(dead_code)]

use std::path::PathBuf;

use iterflow_core::recompute::FlowNetwork;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// The ten-iteration edit trace over the twelve-node sim workflow.
pub fn trace() -> Vec<String> {
    (1..=10)
        .map(|i| std::fs::read_to_string(fixtures().join(format!("trace/iter{i:02}.wf"))).unwrap())
        .collect()
}

/// Edmonds-Karp on an adjacency matrix; shares no code with the library.
pub fn edmonds_karp(net: &FlowNetwork) -> u128 {
    let n = net.vertex_count;
    let mut cap = vec![vec![0u128; n]; n];
    for a in &net.arcs {
        if a.from != a.to {
            cap[a.from][a.to] += a.capacity;
        }
    }
    let mut flow = 0u128;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[net.source] = net.source;
        let mut queue = std::collections::VecDeque::from([net.source]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if prev[v] == usize::MAX && cap[u][v] > 0 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[net.sink] == usize::MAX {
            return flow;
        }
        let mut push = u128::MAX;
        let mut v = net.sink;
        while v != net.source {
            push = push.min(cap[prev[v]][v]);
            v = prev[v];
        }
        let mut v = net.sink;
        while v != net.source {
            cap[prev[v]][v] -= push;
            cap[v][prev[v]] += push;
            v = prev[v];
        }
        flow += push;
    }
}
