//! Protocol dependence graph: an operation graph and a reagent graph that
//! are duals of each other, plus the links between them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::flow::{ReagentFlowGraph, RecordOrigin};
use crate::program::{ControlKind, DslProgram};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PdgError {
    #[error("pdg stage: inconsistent inputs: {0}")]
    InconsistentInputs(String),
    #[error("pdg stage: cannot read graph: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpNode {
    pub index: usize,
    pub op: String,
    /// The instruction as a listing line.
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Instruction order.
    Sequential,
    /// Loop back-edge from the last instruction of the body to the first.
    Loop,
    /// Path around a branch body.
    Skip,
    /// A reagent passed between instructions that are not adjacent, or a
    /// second reagent passed between adjacent ones.
    Dependence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpEdge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    /// Reagent defined at `from` and consumed at `to`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reagent: Option<String>,
    /// A consumption on another branch path; not part of the dual pairing.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub alternate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReagentNode {
    pub id: String,
    pub name: String,
    pub origin: RecordOrigin,
    pub defined_at: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub killed_at: Option<usize>,
    #[serde(default)]
    pub terminal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<String>,
}

impl ReagentNode {
    /// Passed from one instruction to another, as opposed to entering from
    /// the protocol text or leaving as the product.
    pub fn is_internal(&self) -> bool {
        self.killed_at.is_some_and(|k| k != self.defined_at)
    }
}

/// State change caused by one instruction: consumed states to produced ones,
/// with in-place changes listed separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReagentEdge {
    pub instruction: usize,
    pub from: Vec<String>,
    pub to: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mutates: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossLinks {
    /// (op edge index, reagent node id)
    pub edge_to_reagent: Vec<(usize, String)>,
    /// (reagent edge index, op node index)
    pub reagent_edge_to_op: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdgMeta {
    pub spec: String,
    pub seed: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pdg {
    pub op_nodes: Vec<OpNode>,
    pub op_edges: Vec<OpEdge>,
    pub reagent_nodes: Vec<ReagentNode>,
    pub reagent_edges: Vec<ReagentEdge>,
    pub cross_links: CrossLinks,
    pub meta: PdgMeta,
}

/// Assemble both graphs from a program and its flow analysis.
pub fn build_pdg(program: &DslProgram, flow: &ReagentFlowGraph, spec_name: &str, seed: u64) -> Result<Pdg, PdgError> {
    let n = program.instructions.len();
    if flow.steps.len() != n {
        return Err(PdgError::InconsistentInputs(format!("flow covers {} instructions, program has {n}", flow.steps.len())));
    }
    let mut ids = BTreeSet::new();
    for r in &flow.reagents {
        if r.defined_at >= n || r.killed_at.is_some_and(|k| k >= n) {
            return Err(PdgError::InconsistentInputs(format!("reagent `{}` refers to an instruction outside the program", r.id)));
        }
        if !ids.insert(r.id.as_str()) {
            return Err(PdgError::InconsistentInputs(format!("reagent `{}` appears twice", r.id)));
        }
    }
    for step in &flow.steps {
        if let Some(id) = step.kills.iter().chain(&step.defines).chain(&step.mutates).find(|id| !ids.contains(id.as_str())) {
            return Err(PdgError::InconsistentInputs(format!("flow step names unknown reagent `{id}`")));
        }
    }

    let op_nodes =
        program.instructions.iter().enumerate().map(|(index, i)| OpNode { index, op: i.op.clone(), label: i.to_string() }).collect();
    let reagent_nodes: Vec<ReagentNode> = flow
        .reagents
        .iter()
        .map(|r| ReagentNode {
            id: r.id.clone(),
            name: r.name.clone(),
            origin: r.origin,
            defined_at: r.defined_at,
            killed_at: r.killed_at,
            terminal: r.terminal,
            container: r.container.clone(),
        })
        .collect();

    let mut op_edges: Vec<OpEdge> =
        (1..n).map(|i| OpEdge { from: i - 1, to: i, kind: EdgeKind::Sequential, reagent: None, alternate: false }).collect();
    for c in &program.controls {
        match c.kind {
            ControlKind::Loop => op_edges.push(OpEdge { from: c.end, to: c.start, kind: EdgeKind::Loop, reagent: None, alternate: false }),
            ControlKind::Branch if c.start > 0 && c.end + 1 < n => {
                op_edges.push(OpEdge { from: c.start - 1, to: c.end + 1, kind: EdgeKind::Skip, reagent: None, alternate: false })
            }
            ControlKind::Branch => {}
        }
    }
    for r in &flow.reagents {
        if let Some(k) = r.killed_at.filter(|&k| k != r.defined_at) {
            let free =
                op_edges.iter_mut().find(|e| e.kind == EdgeKind::Sequential && e.from == r.defined_at && e.to == k && e.reagent.is_none());
            match free {
                Some(e) => e.reagent = Some(r.id.clone()),
                None => op_edges.push(OpEdge {
                    from: r.defined_at,
                    to: k,
                    kind: EdgeKind::Dependence,
                    reagent: Some(r.id.clone()),
                    alternate: false,
                }),
            }
        }
        for &k in r.alternate_kills.iter().filter(|&&k| k != r.defined_at) {
            op_edges.push(OpEdge { from: r.defined_at, to: k, kind: EdgeKind::Dependence, reagent: Some(r.id.clone()), alternate: true });
        }
    }
    op_edges.sort_by(|a, b| (a.from, a.to, a.kind, &a.reagent).cmp(&(b.from, b.to, b.kind, &b.reagent)));
    let edge_to_reagent =
        op_edges.iter().enumerate().filter(|(_, e)| !e.alternate).filter_map(|(k, e)| Some((k, e.reagent.clone()?))).collect();

    let reagent_edges: Vec<ReagentEdge> = flow
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| ReagentEdge { instruction: i, from: s.kills.clone(), to: s.defines.clone(), mutates: s.mutates.clone() })
        .collect();
    let links = CrossLinks { edge_to_reagent, reagent_edge_to_op: (0..n).map(|i| (i, i)).collect() };

    Ok(Pdg {
        op_nodes,
        op_edges,
        reagent_nodes,
        reagent_edges,
        cross_links: links,
        meta: PdgMeta { spec: spec_name.to_string(), seed, tool_version: env!("CARGO_PKG_VERSION").to_string() },
    })
}

/// Why duality fails, one line per broken correspondence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub problems: Vec<String>,
}

impl DualityReport {
    pub fn holds(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Reagent-carrying op edges pair one-to-one with internal reagent nodes,
/// and reagent edges pair one-to-one with op nodes.
pub fn check_duality(pdg: &Pdg) -> DualityReport {
    let mut problems = Vec::new();
    let nodes: BTreeMap<&str, &ReagentNode> = pdg.reagent_nodes.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut edge_seen: BTreeSet<usize> = BTreeSet::new();
    let mut node_hits: BTreeMap<&str, usize> = BTreeMap::new();
    for (e, id) in &pdg.cross_links.edge_to_reagent {
        match pdg.op_edges.get(*e) {
            None => problems.push(format!("cross link names missing op edge {e}")),
            Some(edge) if edge.reagent.as_ref() != Some(id) => {
                problems.push(format!("op edge {e} carries {:?} but links to `{id}`", edge.reagent))
            }
            Some(_) => {}
        }
        if !edge_seen.insert(*e) {
            problems.push(format!("op edge {e} is linked twice"));
        }
        match nodes.get(id.as_str()) {
            None => problems.push(format!("op edge {e} links to missing reagent node `{id}`")),
            Some(_) => *node_hits.entry(id.as_str()).or_insert(0) += 1,
        }
    }
    for (k, e) in pdg.op_edges.iter().enumerate() {
        if e.reagent.is_some() && !e.alternate && !edge_seen.contains(&k) {
            problems.push(format!("op edge {k} ({} -> {}) has no reagent node", e.from, e.to));
        }
        if e.from >= pdg.op_nodes.len() || e.to >= pdg.op_nodes.len() {
            problems.push(format!("op edge {k} leaves the op graph"));
        }
    }
    for r in &pdg.reagent_nodes {
        let hits = node_hits.get(r.id.as_str()).copied().unwrap_or(0);
        if r.is_internal() && hits != 1 {
            problems.push(format!("reagent node `{}` pairs with {hits} op edges", r.id));
        }
        if !r.is_internal() && hits != 0 {
            problems.push(format!("boundary reagent node `{}` pairs with an op edge", r.id));
        }
    }

    let mut op_hits: BTreeMap<usize, usize> = BTreeMap::new();
    let mut redge_seen: BTreeSet<usize> = BTreeSet::new();
    for (re, op) in &pdg.cross_links.reagent_edge_to_op {
        if *re >= pdg.reagent_edges.len() {
            problems.push(format!("cross link names missing reagent edge {re}"));
        } else if pdg.reagent_edges[*re].instruction != *op {
            problems.push(format!("reagent edge {re} belongs to instruction {} but links to {op}", pdg.reagent_edges[*re].instruction));
        }
        if !redge_seen.insert(*re) {
            problems.push(format!("reagent edge {re} is linked twice"));
        }
        if *op >= pdg.op_nodes.len() {
            problems.push(format!("reagent edge {re} links to missing op node {op}"));
        }
        *op_hits.entry(*op).or_insert(0) += 1;
    }
    for (k, re) in pdg.reagent_edges.iter().enumerate() {
        if !redge_seen.contains(&k) {
            problems.push(format!("reagent edge {k} has no op node"));
        }
        for id in re.from.iter().chain(&re.to).chain(&re.mutates) {
            if !nodes.contains_key(id.as_str()) {
                problems.push(format!("reagent edge {k} touches missing reagent node `{id}`"));
            }
        }
    }
    for node in &pdg.op_nodes {
        let hits = op_hits.get(&node.index).copied().unwrap_or(0);
        if hits != 1 {
            problems.push(format!("op node {} pairs with {hits} reagent edges", node.index));
        }
    }
    DualityReport { problems }
}

pub fn to_json(pdg: &Pdg) -> String {
    serde_json::to_string_pretty(pdg).expect("graph serializes")
}

pub fn from_json(src: &str) -> Result<Pdg, PdgError> {
    serde_json::from_str(src).map_err(|e| PdgError::Parse(e.to_string()))
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: operations as boxes, reagents as ellipses, solid
/// dependence edges, dashed define/consume/mutate links.
pub fn to_dot(pdg: &Pdg) -> String {
    let mut out = String::from("digraph pdg {\n  rankdir=LR;\n");
    for n in &pdg.op_nodes {
        let _ = writeln!(out, "  op{} [shape=box, label=\"{}: {}\"];", n.index, n.index, dot_escape(&n.op));
    }
    for r in &pdg.reagent_nodes {
        let _ = writeln!(out, "  \"r:{}\" [shape=ellipse, label=\"{}\"];", dot_escape(&r.id), dot_escape(&r.name));
    }
    for e in &pdg.op_edges {
        let mut attrs = Vec::new();
        if let Some(r) = &e.reagent {
            attrs.push(format!("label=\"{}\"", dot_escape(r)));
        }
        match (e.kind, e.alternate) {
            (_, true) => attrs.push("style=dotted".into()),
            (EdgeKind::Loop | EdgeKind::Skip, _) => attrs.push("style=bold".into()),
            _ => {}
        }
        let attrs = if attrs.is_empty() { String::new() } else { format!(" [{}]", attrs.join(", ")) };
        let _ = writeln!(out, "  op{} -> op{}{attrs};", e.from, e.to);
    }
    for re in &pdg.reagent_edges {
        for id in &re.from {
            let _ = writeln!(out, "  \"r:{}\" -> op{} [style=dashed];", dot_escape(id), re.instruction);
        }
        for id in &re.to {
            let _ = writeln!(out, "  op{} -> \"r:{}\" [style=dashed];", re.instruction, dot_escape(id));
        }
        for id in &re.mutates {
            let _ = writeln!(out, "  op{} -> \"r:{}\" [style=dashed, dir=both];", re.instruction, dot_escape(id));
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests;
