use std::collections::BTreeSet;

use iterflow_core::dsl::parse;
use iterflow_core::graph::{compile, slice};
use proptest::prelude::*;

/// Random sim workflow: `edges[i]` lists candidate parents of node i (taken
/// modulo i) and `metric[i]` makes it a sink.
fn program(edges: &[Vec<usize>], metric: &[bool], tag: &[u8]) -> String {
    let mut out = String::from("workflow g\n");
    for (i, ps) in edges.iter().enumerate() {
        let parents: BTreeSet<usize> = if i == 0 {
            BTreeSet::new()
        } else {
            ps.iter().map(|p| p % i).collect()
        };
        let mut args: Vec<String> = parents.iter().map(|p| format!("n{p}")).collect();
        args.push(format!("tag={}", tag[i]));
        let kind = if metric[i] { "metric" } else { "sim" };
        out.push_str(&format!("{kind} n{i} = sim({})\n", args.join(", ")));
    }
    out
}

fn shape() -> impl Strategy<Value = (Vec<Vec<usize>>, Vec<bool>, Vec<u8>)> {
    (2usize..14).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(0usize..64, 0..3), n),
            prop::collection::vec(prop::bool::weighted(0.25), n),
            prop::collection::vec(0u8..4, n),
        )
    })
}

proptest! {
    #[test]
    fn live_set_is_everything_that_reaches_a_sink((edges, mut metric, tag) in shape()) {
        let last = metric.len() - 1;
        metric[last] = true;
        let dag = compile(&parse(&program(&edges, &metric, &tag)).unwrap()).unwrap();
        let names: Vec<&String> = dag.topo_order.iter().collect();
        let n = names.len();
        // transitive closure by Floyd-Warshall
        let mut reach = vec![vec![false; n]; n];
        for (i, a) in names.iter().enumerate() {
            reach[i][i] = true;
            for p in &dag.nodes[*a].parents {
                let j = names.iter().position(|x| *x == p).unwrap();
                reach[j][i] = true;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if reach[i][k] && reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        let expected: BTreeSet<String> = (0..n)
            .filter(|&i| (0..n).any(|j| reach[i][j] && dag.sinks.contains(names[j])))
            .map(|i| names[i].clone())
            .collect();
        let s = slice(&dag);
        prop_assert_eq!(&s.live, &expected);
        prop_assert_eq!(s.live.len() + s.pruned_static.len(), n);
        prop_assert!(s.live.is_disjoint(&s.pruned_static));
    }

    #[test]
    fn changes_propagate_to_every_descendant((edges, mut metric, tag) in shape(), pick in any::<prop::sample::Index>()) {
        let last = metric.len() - 1;
        metric[last] = true;
        let before = compile(&parse(&program(&edges, &metric, &tag)).unwrap()).unwrap();
        let k = pick.index(tag.len());
        let mut edited = tag.clone();
        edited[k] += 10;
        let after = compile(&parse(&program(&edges, &metric, &edited)).unwrap()).unwrap();
        let name = format!("n{k}");
        let mut affected: BTreeSet<String> = BTreeSet::from([name.clone()]);
        for node in after.iter() {
            if node.parents.iter().any(|p| affected.contains(p)) {
                affected.insert(node.name.clone());
            }
        }
        for node in after.iter() {
            let changed = node.signature != before.nodes[&node.name].signature;
            prop_assert_eq!(changed, affected.contains(&node.name), "{}", node.name);
        }
    }

    #[test]
    fn parser_never_accepts_cycles(refs in prop::collection::vec(prop::collection::vec(0usize..8, 0..3), 1..8)) {
        let mut text = String::from("workflow f\n");
        for (i, rs) in refs.iter().enumerate() {
            let args: Vec<String> = rs.iter().map(|r| format!("n{r}")).collect();
            text.push_str(&format!("metric n{i} = sim({})\n", args.join(", ")));
        }
        if let Ok(ast) = parse(&text) {
            for (i, d) in ast.decls.iter().enumerate() {
                for p in d.parents() {
                    let j = ast.decls.iter().position(|x| x.name == p).unwrap();
                    prop_assert!(j < i);
                }
            }
        } else {
            prop_assert!(refs.iter().enumerate().any(|(i, rs)| rs.iter().any(|r| *r >= i)));
        }
    }
}
