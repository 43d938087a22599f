mod common;

use std::collections::BTreeSet;

use iterflow_core::engine::{artifact, prepare, run_iteration, Clock, EngineError, RunOptions};
use iterflow_core::recompute::{plan_cost, NodeState};
use iterflow_core::workspace::Workspace;

use common::{fixtures, trace};

fn sim() -> RunOptions {
    RunOptions {
        clock: Clock::Sim,
        ..RunOptions::default()
    }
}

#[test]
fn plan_adherence_over_trace() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    for src in trace() {
        let prepared = prepare(&ws, &src, &sim()).unwrap();
        let rec = run_iteration(&ws, &src, &sim()).unwrap();
        assert_eq!(rec.plan, prepared.plan.states);
        for state in [NodeState::Load, NodeState::Compute, NodeState::Prune] {
            let planned: BTreeSet<&String> = rec
                .plan
                .iter()
                .filter(|(_, s)| **s == state)
                .map(|(n, _)| n)
                .collect();
            let done: BTreeSet<&String> = rec
                .events
                .iter()
                .filter(|e| e.state == state)
                .map(|e| &e.node)
                .collect();
            assert_eq!(planned, done);
        }
        assert_eq!(
            plan_cost(&prepared.costs, &prepared.plan),
            Ok(rec.objective_us)
        );
    }
}

#[test]
fn simulated_costs_match_the_plan_objective() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    for (i, src) in trace().iter().enumerate() {
        let rec = run_iteration(&ws, src, &sim()).unwrap();
        let spent: u64 = rec
            .events
            .iter()
            .filter(|e| e.state != NodeState::Prune)
            .map(|e| e.duration_us)
            .sum();
        let writes: u64 = rec.events.iter().map(|e| e.write_us).sum();
        assert_eq!(spent, rec.objective_us, "iteration {}", i + 1);
        assert_eq!(rec.wall_clock_us, spent + writes);
    }
}

#[test]
fn stored_values_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    let opts = RunOptions {
        base_dir: fixtures(),
        ..RunOptions::default()
    };
    let src = std::fs::read_to_string(fixtures().join("census.wf")).unwrap();
    run_iteration(&ws, &src, &opts).unwrap();
    let index = ws.artifact_index().unwrap();
    assert!(!index.entries.is_empty());
    for sig in index.entries.keys() {
        let bytes = ws.read_artifact(sig).unwrap();
        let value = artifact::decode(&bytes).unwrap();
        assert_eq!(artifact::encode(&value), bytes);
    }
}

#[test]
fn identical_sources_share_signatures() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    let src = &trace()[0];
    let noisy = src.replace(", ", " ,  ").replace('\n', "   # note\n\n");
    let a = run_iteration(&ws, src, &sim()).unwrap();
    let b = run_iteration(&ws, &noisy, &sim()).unwrap();
    let sigs = |r: &iterflow_core::engine::RunRecord| {
        r.events
            .iter()
            .map(|e| (e.node.clone(), e.signature.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(sigs(&a), sigs(&b));
    let versions = ws.list_versions().unwrap();
    assert_eq!(versions[0].source_hash, versions[1].source_hash);
    assert!(versions[1].change.is_empty());
}

#[test]
fn deterministic_replay_of_simulated_trace() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        let records: Vec<_> = trace()
            .iter()
            .map(|s| run_iteration(&ws, s, &sim()).unwrap())
            .collect();
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path().join("artifacts"))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().into_string().unwrap(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        (records, files)
    };
    let (ra, fa) = run();
    let (rb, fb) = run();
    assert_eq!(ra, rb);
    assert_eq!(fa, fb);
}

#[test]
fn tight_budget_is_never_exceeded() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    let budget = 1_500_000;
    let opts = RunOptions {
        budget_bytes: budget,
        ..sim()
    };
    for src in trace() {
        let rec = run_iteration(&ws, &src, &opts).unwrap();
        assert!(rec.budget_used_bytes <= budget);
    }
    assert!(ws.artifact_index().unwrap().total_bytes() <= budget);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    let err = run_iteration(
        &ws,
        "workflow w\nsim a = sim()\nmetric m = sim(zz)\n",
        &sim(),
    )
    .unwrap_err();
    match err {
        EngineError::Parse(e) => assert_eq!(e.line(), 3),
        other => panic!("{other}"),
    }
    assert!(ws.list_versions().unwrap().is_empty());
}
