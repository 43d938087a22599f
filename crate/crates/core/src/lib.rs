//! Iterative workflow engine: compile a workflow into a signed DAG, plan the
//! cheapest load/compute/prune assignment for the current iteration, execute
//! it while deciding online which intermediates to keep, and record every
//! iteration as a version.

pub mod dsl;
pub mod engine;
pub mod gen;
pub mod graph;
pub mod materialize;
pub mod par;
pub mod recompute;
pub mod workspace;
