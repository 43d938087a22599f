//! Compiled workflow DAG.
//!
//! Each node carries a Merkle signature over its operator, its normalized
//! parameters and the signatures of its parents, so any upstream edit changes
//! the signature of every descendant. A stored artifact is reusable exactly
//! when its signature still appears in the current DAG.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsl::{format_number, DeclKind, Literal, Positional, WorkflowAst};

/// Name of the digest algorithm behind [`Signature`].
pub const DIGEST_ALGORITHM: &str = "sha256";

/// 256-bit content hash of a node's definition and lineage.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature(pub [u8; 32]);

impl Signature {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", &self.to_hex()[..12])
    }
}

impl FromStr for Signature {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Signature(out))
    }
}

impl Serialize for Signature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hashes `(func, params, parent signatures)`.
pub fn node_signature(func: &str, params: &str, parents: &[Signature]) -> Signature {
    let mut h = Sha256::new();
    h.update(b"iterflow-node\0");
    h.update(func.as_bytes());
    h.update(b"\0");
    h.update(params.as_bytes());
    h.update(b"\0");
    for p in parents {
        h.update(p.0);
    }
    Signature(h.finalize().into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DagNode {
    pub name: String,
    pub kind: DeclKind,
    pub func: String,
    /// Positional literals (parent slots rendered as `$i`) followed by sorted
    /// keyword pairs, plus an input digest for file sources.
    pub params: String,
    pub positional: Vec<Positional>,
    pub named: BTreeMap<String, Literal>,
    pub parents: Vec<String>,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowDag {
    pub name: String,
    pub nodes: BTreeMap<String, DagNode>,
    pub topo_order: Vec<String>,
    pub sinks: BTreeSet<String>,
}

impl WorkflowDag {
    pub fn node(&self, name: &str) -> &DagNode {
        &self.nodes[name]
    }

    /// Nodes in topological order.
    pub fn iter(&self) -> impl Iterator<Item = &DagNode> {
        self.topo_order.iter().map(|n| &self.nodes[n])
    }

    /// Direct children of every node.
    pub fn children(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = self
            .nodes
            .keys()
            .map(|k| (k.as_str(), Vec::new()))
            .collect();
        for node in self.iter() {
            for p in &node.parents {
                out.get_mut(p.as_str()).unwrap().push(node.name.as_str());
            }
        }
        out
    }

    /// All transitive ancestors of `name`.
    pub fn ancestors(&self, name: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&str> = vec![name];
        while let Some(n) = stack.pop() {
            for p in &self.nodes[n].parents {
                if seen.insert(p.clone()) {
                    stack.push(p);
                }
            }
        }
        seen
    }

    pub fn edges(&self) -> Vec<(String, String)> {
        self.iter()
            .flat_map(|n| n.parents.iter().map(|p| (p.clone(), n.name.clone())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceResult {
    pub live: BTreeSet<String>,
    pub pruned_static: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error("workflow `{0}` declares no output or metric")]
    NoSinks(String),
}

/// Supplies content digests for file inputs referenced by source nodes.
pub trait InputDigests {
    fn digest(&self, path: &str) -> Option<String>;
}

/// No input hashing; signatures depend on program text only.
pub struct NoInputs;

impl InputDigests for NoInputs {
    fn digest(&self, _path: &str) -> Option<String> {
        None
    }
}

/// Hashes input files relative to a base directory.
pub struct FileInputs<'a>(pub &'a Path);

impl InputDigests for FileInputs<'_> {
    fn digest(&self, path: &str) -> Option<String> {
        let bytes = std::fs::read(self.0.join(path)).ok()?;
        Some(hex::encode(Sha256::digest(&bytes)))
    }
}

fn render_params(
    func: &str,
    positional: &[Positional],
    named: &BTreeMap<String, Literal>,
    inputs: &dyn InputDigests,
) -> String {
    let mut slot = 0usize;
    let mut parts: Vec<String> = positional
        .iter()
        .map(|a| match a {
            Positional::Ref(_) => {
                slot += 1;
                format!("${}", slot - 1)
            }
            Positional::Str(s) => format!("{s:?}"),
            Positional::Num(n) => format_number(*n),
        })
        .collect();
    for (k, v) in named {
        let v = match v {
            Literal::Str(s) => format!("{s:?}"),
            Literal::Num(n) => format_number(*n),
            Literal::Ident(s) => s.clone(),
        };
        parts.push(format!("{k}={v}"));
    }
    if func == "csv" {
        if let Some(Positional::Str(path)) = positional.first() {
            let digest = inputs.digest(path).unwrap_or_else(|| "missing".to_string());
            parts.push(format!("@content={digest}"));
        }
    }
    parts.join(", ")
}

/// Compiles without hashing input files.
pub fn compile(ast: &WorkflowAst) -> Result<WorkflowDag, CompileError> {
    compile_with_inputs(ast, &NoInputs)
}

/// Compiles, folding input file digests into source-node signatures.
pub fn compile_with_inputs(
    ast: &WorkflowAst,
    inputs: &dyn InputDigests,
) -> Result<WorkflowDag, CompileError> {
    let mut nodes: BTreeMap<String, DagNode> = BTreeMap::new();
    let mut topo_order = Vec::with_capacity(ast.decls.len());
    let mut sinks = BTreeSet::new();

    for decl in &ast.decls {
        let parents: Vec<String> = decl.parents().map(str::to_string).collect();
        let parent_sigs: Vec<Signature> = parents.iter().map(|p| nodes[p].signature).collect();
        let params = render_params(&decl.func, &decl.positional, &decl.named, inputs);
        let signature = node_signature(&decl.func, &params, &parent_sigs);
        if decl.kind.is_sink() {
            sinks.insert(decl.name.clone());
        }
        topo_order.push(decl.name.clone());
        nodes.insert(
            decl.name.clone(),
            DagNode {
                name: decl.name.clone(),
                kind: decl.kind,
                func: decl.func.clone(),
                params,
                positional: decl.positional.clone(),
                named: decl.named.clone(),
                parents,
                signature,
            },
        );
    }

    if sinks.is_empty() {
        return Err(CompileError::NoSinks(ast.name.clone()));
    }
    Ok(WorkflowDag {
        name: ast.name.clone(),
        nodes,
        topo_order,
        sinks,
    })
}

/// Keeps only nodes that can reach an output or metric.
pub fn slice(dag: &WorkflowDag) -> SliceResult {
    let mut live = BTreeSet::new();
    let mut stack: Vec<&str> = dag.sinks.iter().map(String::as_str).collect();
    while let Some(n) = stack.pop() {
        if live.insert(n.to_string()) {
            stack.extend(dag.nodes[n].parents.iter().map(String::as_str));
        }
    }
    let pruned_static = dag
        .nodes
        .keys()
        .filter(|n| !live.contains(*n))
        .cloned()
        .collect();
    SliceResult {
        live,
        pruned_static,
    }
}

/// Anything that can answer "is there a stored artifact for this signature".
pub trait ArtifactLookup {
    fn contains(&self, signature: &Signature) -> bool;
}

impl ArtifactLookup for HashSet<Signature> {
    fn contains(&self, signature: &Signature) -> bool {
        HashSet::contains(self, signature)
    }
}

impl ArtifactLookup for BTreeSet<Signature> {
    fn contains(&self, signature: &Signature) -> bool {
        BTreeSet::contains(self, signature)
    }
}

/// A node can be loaded iff an artifact with its exact signature is stored.
pub fn load_feasibility(dag: &WorkflowDag, index: &dyn ArtifactLookup) -> BTreeMap<String, bool> {
    dag.iter()
        .map(|n| (n.name.clone(), index.contains(&n.signature)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn dag(src: &str) -> WorkflowDag {
        compile(&parse(src).unwrap()).unwrap()
    }

    const CHAIN: &str = "workflow w\nsim a = sim(cost_ms=1)\nsim b = sim(a, cost_ms=2)\nmetric c = sim(b, cost_ms=3)\n";

    /// Independent recomputation of the Merkle definition.
    fn oracle_signature(func: &str, params: &str, parents: &[[u8; 32]]) -> [u8; 32] {
        let mut bytes = b"iterflow-node\0".to_vec();
        bytes.extend_from_slice(func.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(params.as_bytes());
        bytes.push(0);
        for p in parents {
            bytes.extend_from_slice(p);
        }
        Sha256::digest(&bytes).into()
    }

    #[test]
    fn chain_edges_and_sinks() {
        let d = dag(CHAIN);
        assert_eq!(
            d.edges(),
            vec![("a".into(), "b".into()), ("b".into(), "c".into())]
        );
        assert_eq!(d.sinks, BTreeSet::from(["c".to_string()]));
        assert_eq!(d.topo_order, ["a", "b", "c"]);
    }

    #[test]
    fn no_sinks() {
        let err = compile(&parse("workflow w\nsim a = sim()\n").unwrap()).unwrap_err();
        assert_eq!(err, CompileError::NoSinks("w".into()));
    }

    #[test]
    fn deterministic_signatures() {
        assert_eq!(dag(CHAIN), dag(CHAIN));
    }

    #[test]
    fn signatures_match_hand_rolled_merkle() {
        let d = dag(CHAIN);
        let a = oracle_signature("sim", "cost_ms=1", &[]);
        let b = oracle_signature("sim", "$0, cost_ms=2", &[a]);
        let c = oracle_signature("sim", "$0, cost_ms=3", &[b]);
        assert_eq!(d.node("a").signature.0, a);
        assert_eq!(d.node("b").signature.0, b);
        assert_eq!(d.node("c").signature.0, c);
    }

    #[test]
    fn leaf_literal_change_invalidates_node_and_descendants() {
        let before = dag(CHAIN);
        let after = dag(&CHAIN.replace("cost_ms=2", "cost_ms=5"));
        let b2 = oracle_signature("sim", "$0, cost_ms=5", &[before.node("a").signature.0]);
        let c2 = oracle_signature("sim", "$0, cost_ms=3", &[b2]);
        assert_eq!(after.node("a").signature, before.node("a").signature);
        assert_eq!(after.node("b").signature.0, b2);
        assert_eq!(after.node("c").signature.0, c2);
        assert_ne!(after.node("c").signature, before.node("c").signature);
    }

    #[test]
    fn slice_keeps_everything_on_a_chain() {
        let s = slice(&dag(CHAIN));
        assert_eq!(s.live.len(), 3);
        assert!(s.pruned_static.is_empty());
    }

    #[test]
    fn dangling_feature_is_pruned() {
        let s = slice(&dag(&format!("{CHAIN}sim d = sim(a)\n")));
        assert_eq!(s.pruned_static, BTreeSet::from(["d".to_string()]));
    }

    #[test]
    fn diamond_with_orphan_chain() {
        let src = "workflow w\nsim a = sim()\nsim b = sim(a)\nsim c = sim(a)\nmetric m = sim(b, c)\nsim x = sim()\nsim y = sim(x)\n";
        let d = dag(src);
        let s = slice(&d);
        // independent: nodes with a path to a sink, via transitive closure
        let reach: BTreeSet<String> = d
            .nodes
            .keys()
            .filter(|n| {
                d.sinks
                    .iter()
                    .any(|k| *n == k || d.ancestors(k).contains(*n))
            })
            .cloned()
            .collect();
        assert_eq!(s.live, reach);
        assert_eq!(
            s.pruned_static,
            BTreeSet::from(["x".to_string(), "y".to_string()])
        );
    }

    #[test]
    fn feasibility_follows_signatures() {
        let d = dag(CHAIN);
        assert!(load_feasibility(&d, &HashSet::new()).values().all(|v| !v));

        let stored: HashSet<Signature> = d.iter().map(|n| n.signature).collect();
        assert!(load_feasibility(&d, &stored).values().all(|v| *v));

        let edited = dag(&CHAIN.replace("cost_ms=2", "cost_ms=9"));
        let f = load_feasibility(&edited, &stored);
        assert_eq!(
            f,
            BTreeMap::from([("a".into(), true), ("b".into(), false), ("c".into(), false)])
        );
    }

    #[test]
    fn parent_order_matters() {
        let a = dag("workflow w\nsim x = sim()\nsim y = sim()\nmetric m = sim(x, y)\n");
        let b = dag("workflow w\nsim x = sim()\nsim y = sim(tag=1)\nmetric m = sim(y, x)\n");
        assert_ne!(a.node("m").signature, b.node("m").signature);
    }

    #[test]
    fn csv_digest_enters_signature() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "a\n1\n").unwrap();
        let ast = parse("workflow w\nsource d = csv(\"d.csv\")\nmetric m = sim(d)\n").unwrap();
        let one = compile_with_inputs(&ast, &FileInputs(dir.path())).unwrap();
        std::fs::write(dir.path().join("d.csv"), "a\n2\n").unwrap();
        let two = compile_with_inputs(&ast, &FileInputs(dir.path())).unwrap();
        assert_ne!(one.node("d").signature, two.node("d").signature);
        assert_ne!(one.node("m").signature, two.node("m").signature);
    }

    #[test]
    fn signature_hex_round_trip() {
        let s = dag(CHAIN).node("a").signature;
        assert_eq!(s.to_hex().parse::<Signature>().unwrap(), s);
    }
}
