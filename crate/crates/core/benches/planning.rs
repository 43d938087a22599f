use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use iterflow_core::gen::{
    random_cost_dag, random_cost_dags, random_reuse_instance, rng, DagParams,
};
use iterflow_core::materialize::offline_oracle_with;
use iterflow_core::par::Execution;
use iterflow_core::recompute::{brute_force_plan_with, optimal_plans};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn brute_force(c: &mut Criterion) {
    let p = DagParams {
        min_nodes: 11,
        max_nodes: 11,
        ..DagParams::default()
    };
    let dag = random_cost_dag(&mut rng(3), &p);
    let mut g = c.benchmark_group("brute_force_plan/11_nodes");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| brute_force_plan_with(&dag, exec).unwrap())
        });
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let mut r = rng(5);
    let (dag, budget) = loop {
        let inst = random_reuse_instance(&mut r, 14);
        if inst.0.len() >= 13 {
            break inst;
        }
    };
    let mut g = c.benchmark_group("offline_oracle");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, dag.len()), |b| {
            b.iter(|| offline_oracle_with(&dag, budget, exec).unwrap())
        });
    }
    g.finish();
}

fn batch_planning(c: &mut Criterion) {
    let p = DagParams {
        min_nodes: 20,
        max_nodes: 60,
        ..DagParams::default()
    };
    let dags = random_cost_dags(9, 2_000, &p);
    let mut g = c.benchmark_group("optimal_plans/2000_instances");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| optimal_plans(&dags, exec)));
    }
    g.finish();
}

criterion_group!(benches, brute_force, oracle, batch_planning);
criterion_main!(benches);
