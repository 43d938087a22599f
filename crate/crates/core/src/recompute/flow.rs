//! Exact max-flow / min-cut on integer capacities (Dinic's algorithm).

use std::collections::VecDeque;

pub type Capacity = u128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub capacity: Capacity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowNetwork {
    pub vertex_count: usize,
    pub source: usize,
    pub sink: usize,
    pub arcs: Vec<FlowArc>,
    /// Large-cost sentinel used by the plan reduction; zero for plain networks.
    pub big_m: Capacity,
}

impl FlowNetwork {
    pub fn new(vertex_count: usize, source: usize, sink: usize) -> Self {
        assert!(source < vertex_count && sink < vertex_count && source != sink);
        FlowNetwork {
            vertex_count,
            source,
            sink,
            arcs: Vec::new(),
            big_m: 0,
        }
    }

    pub fn add_arc(&mut self, from: usize, to: usize, capacity: Capacity) {
        assert!(from < self.vertex_count && to < self.vertex_count);
        self.arcs.push(FlowArc { from, to, capacity });
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinCut {
    /// Total flow pushed from source to sink.
    pub max_flow: Capacity,
    /// Sum of capacities of arcs leaving `source_side`, recounted from the
    /// original arcs after the flow phase.
    pub value: Capacity,
    /// Vertices reachable from the source in the final residual graph. This
    /// is the inclusion-minimal source side among all minimum cuts.
    pub source_side: Vec<bool>,
}

struct Edge {
    to: usize,
    rev: usize,
    residual: Capacity,
}

struct Dinic {
    graph: Vec<Vec<Edge>>,
    level: Vec<i32>,
    next: Vec<usize>,
}

impl Dinic {
    fn new(n: usize) -> Self {
        Dinic {
            graph: (0..n).map(|_| Vec::new()).collect(),
            level: vec![-1; n],
            next: vec![0; n],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: Capacity) {
        let rev_from = self.graph[to].len() + usize::from(from == to);
        let rev_to = self.graph[from].len();
        self.graph[from].push(Edge {
            to,
            rev: rev_from,
            residual: cap,
        });
        self.graph[to].push(Edge {
            to: from,
            rev: rev_to,
            residual: 0,
        });
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.fill(-1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for e in &self.graph[u] {
                if e.residual > 0 && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[u] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: Capacity) -> Capacity {
        if u == t {
            return pushed;
        }
        while self.next[u] < self.graph[u].len() {
            let i = self.next[u];
            let (to, residual) = (self.graph[u][i].to, self.graph[u][i].residual);
            if residual > 0 && self.level[to] == self.level[u] + 1 {
                let got = self.dfs(to, t, pushed.min(residual));
                if got > 0 {
                    self.graph[u][i].residual -= got;
                    let rev = self.graph[u][i].rev;
                    self.graph[to][rev].residual += got;
                    return got;
                }
            }
            self.next[u] += 1;
        }
        0
    }
}

/// Computes a maximum flow and the matching minimum cut.
pub fn min_cut(net: &FlowNetwork) -> MinCut {
    let mut d = Dinic::new(net.vertex_count);
    for arc in &net.arcs {
        d.add(arc.from, arc.to, arc.capacity);
    }
    let (s, t) = (net.source, net.sink);
    let mut max_flow: Capacity = 0;
    while d.bfs(s, t) {
        d.next.fill(0);
        loop {
            let f = d.dfs(s, t, Capacity::MAX);
            if f == 0 {
                break;
            }
            max_flow += f;
        }
    }

    // `bfs` leaves the residual reachability of the last (failed) phase in
    // `level`.
    let source_side: Vec<bool> = d.level.iter().map(|&l| l >= 0).collect();
    let value = net
        .arcs
        .iter()
        .filter(|a| source_side[a.from] && !source_side[a.to])
        .map(|a| a.capacity)
        .sum();
    debug_assert_eq!(value, max_flow);
    MinCut {
        max_flow,
        value,
        source_side,
    }
}
