//! Controller documents: a structured JSON form that round-trips losslessly
//! and a Graphviz description mirroring the controller diagrams.

use serde::{Deserialize, Serialize};

use pomdp_core::{ControllerNode, FiniteStateController, ValueVector, VectorSet};

use crate::format::ValueConvention;

pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DocumentBounds {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DocumentNode {
    pub id: usize,
    pub action: String,
    /// Successor node id per observation, aligned with `observations`.
    pub successors: Vec<usize>,
    /// Value vector in the document's `values` convention.
    pub value: Vec<f64>,
    pub tag: String,
}

/// Solve metadata carried in the document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DocumentMeta {
    pub problem: String,
    pub solver: String,
    pub epsilon: f64,
    pub status: String,
    pub iterations: usize,
    pub seed: u64,
    /// Root bounds at the start belief (search solver only).
    pub bounds: Option<DocumentBounds>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ControllerDocument {
    pub version: u32,
    pub values: String,
    pub discount: f64,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    pub start_rule: String,
    pub start_node: usize,
    pub start_belief: Vec<f64>,
    pub meta: DocumentMeta,
    pub nodes: Vec<DocumentNode>,
}

#[derive(Debug)]
pub struct DocumentError(pub String);

impl std::fmt::Display for DocumentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "controller document: {}", self.0)
    }
}

impl std::error::Error for DocumentError {}

/// Builds the document for a solved controller. `value` must be the
/// controller's evaluation; vectors are stored in the file's value
/// convention, so cost problems serialize costs.
#[allow(clippy::too_many_arguments)]
pub fn build_document(
    fsc: &FiniteStateController,
    value: &VectorSet,
    convention: ValueConvention,
    discount: f64,
    states: &[String],
    actions: &[String],
    observations: &[String],
    start_node: usize,
    start_belief: &[f64],
    meta: DocumentMeta,
) -> ControllerDocument {
    let sign = match convention {
        ValueConvention::Reward => 1.0,
        ValueConvention::Cost => -1.0,
    };
    let nodes = fsc
        .nodes()
        .iter()
        .zip(value.vectors())
        .enumerate()
        .map(|(id, (node, vector))| DocumentNode {
            id,
            action: actions[node.action].clone(),
            successors: node.successors.clone(),
            value: vector.values.iter().map(|v| sign * v).collect(),
            tag: node.tag.clone(),
        })
        .collect();
    ControllerDocument {
        version: DOCUMENT_VERSION,
        values: convention.as_str().to_string(),
        discount,
        states: states.to_vec(),
        actions: actions.to_vec(),
        observations: observations.to_vec(),
        start_rule: "start in the node whose vector optimizes the start belief".to_string(),
        start_node,
        start_belief: start_belief.to_vec(),
        meta,
        nodes,
    }
}

pub fn serialize_document(document: &ControllerDocument) -> String {
    let mut text = serde_json::to_string_pretty(document).expect("document serializes");
    text.push('\n');
    text
}

/// Parses a document back into a controller and its (reward-convention)
/// value vectors.
pub fn parse_document(
    text: &str,
) -> Result<(ControllerDocument, FiniteStateController, VectorSet), DocumentError> {
    let document: ControllerDocument =
        serde_json::from_str(text).map_err(|e| DocumentError(e.to_string()))?;
    if document.version != DOCUMENT_VERSION {
        return Err(DocumentError(format!(
            "unsupported version {} (expected {DOCUMENT_VERSION})",
            document.version
        )));
    }
    let sign = match document.values.as_str() {
        "reward" => 1.0,
        "cost" => -1.0,
        other => return Err(DocumentError(format!("unknown value convention '{other}'"))),
    };
    let nz = document.observations.len();
    let mut nodes = Vec::with_capacity(document.nodes.len());
    let mut vectors = Vec::with_capacity(document.nodes.len());
    for node in &document.nodes {
        let action = document
            .actions
            .iter()
            .position(|a| a == &node.action)
            .ok_or_else(|| DocumentError(format!("unknown action '{}'", node.action)))?;
        if node.value.len() != document.states.len() {
            return Err(DocumentError(format!(
                "node {} has {} values for {} states",
                node.id,
                node.value.len(),
                document.states.len()
            )));
        }
        nodes.push(ControllerNode {
            action,
            successors: node.successors.clone(),
            tag: node.tag.clone(),
        });
        vectors.push(ValueVector {
            values: node.value.iter().map(|v| sign * v).collect(),
            action,
            successors: node.successors.clone(),
        });
    }
    let fsc = FiniteStateController::new(nodes, nz)
        .map_err(|e| DocumentError(e.to_string()))?;
    Ok((document, fsc, VectorSet::new(vectors, 0)))
}

/// Graphviz text: one labeled node per machine state, one labeled edge per
/// (node, observation), and a marker for the start state.
pub fn graph_description(document: &ControllerDocument) -> String {
    let mut out = String::from("digraph controller {\n  rankdir=LR;\n  node [shape=circle];\n");
    out.push_str("  start [shape=point];\n");
    out.push_str(&format!("  start -> n{};\n", document.start_node));
    for node in &document.nodes {
        out.push_str(&format!("  n{} [label=\"{}: {}\"];\n", node.id, node.id, node.action));
    }
    for node in &document.nodes {
        for (z, succ) in node.successors.iter().enumerate() {
            out.push_str(&format!(
                "  n{} -> n{} [label=\"{}\"];\n",
                node.id, succ, document.observations[z]
            ));
        }
    }
    out.push_str("}\n");
    out
}
