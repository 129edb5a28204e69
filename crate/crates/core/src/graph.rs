//! The forensic knowledge graph: entity nodes keyed by normalized value,
//! taxonomy-constrained edges from shared-UID co-occurrence, hypothesis
//! sentences, and isolated-node grouping.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::consolidate::EvidenceRecord;
use crate::entity::{canonical, EntityType};
use crate::refine::{app_from_path, check_threshold, RefineError};

pub const GRAPH_FILE_NAME: &str = "graph.json";
pub const UNATTRIBUTED_GROUP: &str = "(unattributed)";

/// The eleven relationship types a graph may contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeType {
    TimestampApp,
    EmailApp,
    AppSearch,
    MacApp,
    TimestampEmail,
    TimestampSearch,
    TimestampMac,
    NameTimestamp,
    NameApp,
    PhoneApp,
    PhoneEmail,
}

impl EdgeType {
    pub const ALL: [EdgeType; 11] = [
        EdgeType::TimestampApp,
        EdgeType::EmailApp,
        EdgeType::AppSearch,
        EdgeType::MacApp,
        EdgeType::TimestampEmail,
        EdgeType::TimestampSearch,
        EdgeType::TimestampMac,
        EdgeType::NameTimestamp,
        EdgeType::NameApp,
        EdgeType::PhoneApp,
        EdgeType::PhoneEmail,
    ];

    /// Endpoint types in canonical orientation.
    pub fn endpoints(self) -> (EntityType, EntityType) {
        use EntityType::*;
        match self {
            EdgeType::TimestampApp => (Timestamp, AppName),
            EdgeType::EmailApp => (Email, AppName),
            EdgeType::AppSearch => (AppName, SearchKeyword),
            EdgeType::MacApp => (MacAddress, AppName),
            EdgeType::TimestampEmail => (Timestamp, Email),
            EdgeType::TimestampSearch => (Timestamp, SearchKeyword),
            EdgeType::TimestampMac => (Timestamp, MacAddress),
            EdgeType::NameTimestamp => (HumanName, Timestamp),
            EdgeType::NameApp => (HumanName, AppName),
            EdgeType::PhoneApp => (PhoneNumber, AppName),
            EdgeType::PhoneEmail => (PhoneNumber, Email),
        }
    }

    /// The edge type joining `a` and `b` in either order.
    pub fn between(a: EntityType, b: EntityType) -> Option<EdgeType> {
        Self::ALL.into_iter().find(|t| {
            let (x, y) = t.endpoints();
            (x, y) == (a, b) || (y, x) == (a, b)
        })
    }

    pub fn label(self) -> String {
        let (a, b) = self.endpoints();
        format!("{}-{}", a.label(), b.label())
    }

    /// Fills the per-type sentence; `a` and `b` follow [`EdgeType::endpoints`].
    pub fn hypothesis(self, a: &str, b: &str) -> String {
        match self {
            EdgeType::TimestampApp => format!("User interacted with {b} on {a}."),
            EdgeType::EmailApp => format!("User account associated with the email {a} was linked to {b}."),
            EdgeType::AppSearch => format!("User performed a Google search for \"{b}\" in {a}."),
            EdgeType::MacApp => format!("Device with MAC address {a} was connected via {b}."),
            EdgeType::TimestampEmail => {
                format!("User interacted with content associated with the email {b} on {a}.")
            }
            EdgeType::TimestampSearch => format!("User searched for \"{b}\" at {a}."),
            EdgeType::TimestampMac => format!("Device with MAC {b} connected on {a}."),
            EdgeType::NameTimestamp => format!("User interacted with {a} on {b}."),
            EdgeType::NameApp => format!("User interacted with {a} on {b}."),
            EdgeType::PhoneApp => format!("The phone number {a} is associated with {b}."),
            EdgeType::PhoneEmail => format!("The email {b} is associated with the phone number {a}."),
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown edge type {0:?}")]
pub struct UnknownEdgeType(pub String);

impl FromStr for EdgeType {
    type Err = UnknownEdgeType;

    /// Accepts `A-B`, `A–B` (en dash) or `A|B`, in either order.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || UnknownEdgeType(s.to_string());
        let (a, b) = ['-', '\u{2013}', '|']
            .iter()
            .find_map(|sep| s.split_once(*sep))
            .ok_or_else(err)?;
        let a: EntityType = a.trim().parse().map_err(|_| err())?;
        let b: EntityType = b.trim().parse().map_err(|_| err())?;
        EdgeType::between(a, b).ok_or_else(err)
    }
}

impl Serialize for EdgeType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for EdgeType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn node_id(entity_type: EntityType, value: &str) -> String {
    format!("{}|{}", entity_type.label(), value)
}

pub fn edge_id(type_pair: EdgeType, a: &str, b: &str) -> String {
    let mut h = Sha256::new();
    h.update(type_pair.label().as_bytes());
    h.update([0]);
    h.update(a.as_bytes());
    h.update([0]);
    h.update(b.as_bytes());
    let mut id = hex::encode(h.finalize());
    id.truncate(16);
    id
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityNode {
    pub node_id: String,
    pub entity_type: EntityType,
    pub value: String,
    pub provenance: BTreeSet<String>,
    pub max_confidence: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub edge_id: String,
    pub type_pair: EdgeType,
    pub endpoints: [String; 2],
    pub provenance: BTreeSet<String>,
    pub hypothesis: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolatedGroup {
    pub app_name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForensicGraph {
    pub min_confidence: u8,
    pub nodes: Vec<EntityNode>,
    pub edges: Vec<RelationEdge>,
    pub isolated_groups: Vec<IsolatedGroup>,
}

/// One adjudicable claim: an edge as evidenced by one source UID.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisInstance {
    pub edge_id: String,
    pub uid: String,
    pub type_pair: EdgeType,
    pub values: [String; 2],
    pub hypothesis: String,
}

/// Builds nodes from artifacts at or above `min_confidence`, then edges and
/// isolated groups.
pub fn build_graph(records: &[EvidenceRecord], min_confidence: u8) -> Result<ForensicGraph, RefineError> {
    check_threshold(min_confidence)?;
    let mut nodes: BTreeMap<String, EntityNode> = BTreeMap::new();
    let mut per_record: Vec<(&EvidenceRecord, BTreeSet<String>)> = Vec::new();

    for record in records {
        let mut ids = BTreeSet::new();
        for a in record.artifacts.iter().filter(|a| a.confidence >= min_confidence) {
            let value = canonical(a.entity_type, &a.refined_value);
            let id = node_id(a.entity_type, &value);
            let node = nodes.entry(id.clone()).or_insert_with(|| EntityNode {
                node_id: id.clone(),
                entity_type: a.entity_type,
                value,
                provenance: BTreeSet::new(),
                max_confidence: a.confidence,
            });
            node.provenance.insert(record.uid.clone());
            node.max_confidence = node.max_confidence.max(a.confidence);
            ids.insert(id);
        }
        per_record.push((record, ids));
    }

    let edges = derive_edges(&nodes, &per_record);
    let mut graph = ForensicGraph {
        min_confidence,
        nodes: nodes.into_values().collect(),
        edges,
        isolated_groups: Vec::new(),
    };
    graph.isolated_groups = group_isolated(&graph, records);
    Ok(graph)
}

fn derive_edges(
    nodes: &BTreeMap<String, EntityNode>,
    per_record: &[(&EvidenceRecord, BTreeSet<String>)],
) -> Vec<RelationEdge> {
    let mut edges: BTreeMap<(EdgeType, String, String), RelationEdge> = BTreeMap::new();
    for (record, ids) in per_record {
        let members: Vec<&EntityNode> = ids.iter().map(|id| &nodes[id]).collect();
        for (i, x) in members.iter().enumerate() {
            for y in &members[i + 1..] {
                let Some(t) = EdgeType::between(x.entity_type, y.entity_type) else {
                    continue;
                };
                let (a, b) = if t.endpoints().0 == x.entity_type {
                    (x, y)
                } else {
                    (y, x)
                };
                let edge = edges
                    .entry((t, a.node_id.clone(), b.node_id.clone()))
                    .or_insert_with(|| RelationEdge {
                        edge_id: edge_id(t, &a.node_id, &b.node_id),
                        type_pair: t,
                        endpoints: [a.node_id.clone(), b.node_id.clone()],
                        provenance: BTreeSet::new(),
                        hypothesis: t.hypothesis(&a.value, &b.value),
                    });
                edge.provenance.insert(record.uid.clone());
            }
        }
    }
    edges.into_values().collect()
}

/// Degree-0 nodes grouped under the app named by their first attributable
/// source path; groups sorted by app name.
pub fn group_isolated(graph: &ForensicGraph, records: &[EvidenceRecord]) -> Vec<IsolatedGroup> {
    let linked: BTreeSet<&str> = graph
        .edges
        .iter()
        .flat_map(|e| e.endpoints.iter().map(String::as_str))
        .collect();
    let paths: BTreeMap<&str, &str> = records
        .iter()
        .map(|r| (r.uid.as_str(), r.source.path.as_str()))
        .collect();
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for node in graph.nodes.iter().filter(|n| !linked.contains(n.node_id.as_str())) {
        let app = node
            .provenance
            .iter()
            .filter_map(|uid| paths.get(uid.as_str()))
            .find_map(|p| app_from_path(p))
            .map(|m| m.name)
            .unwrap_or_else(|| UNATTRIBUTED_GROUP.to_string());
        groups.entry(app).or_default().push(node.node_id.clone());
    }
    groups
        .into_iter()
        .map(|(app_name, members)| IsolatedGroup { app_name, members })
        .collect()
}

impl ForensicGraph {
    pub fn node(&self, id: &str) -> Option<&EntityNode> {
        self.nodes
            .binary_search_by(|n| n.node_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn edge(&self, edge_id: &str) -> Option<&RelationEdge> {
        self.edges.iter().find(|e| e.edge_id == edge_id)
    }

    /// Every (edge, provenance uid) pair, in edge order then uid order.
    pub fn hypotheses(&self) -> Vec<HypothesisInstance> {
        let mut out = Vec::new();
        for e in &self.edges {
            let values = [
                self.node(&e.endpoints[0]).map(|n| n.value.clone()).unwrap_or_default(),
                self.node(&e.endpoints[1]).map(|n| n.value.clone()).unwrap_or_default(),
            ];
            for uid in &e.provenance {
                out.push(HypothesisInstance {
                    edge_id: e.edge_id.clone(),
                    uid: uid.clone(),
                    type_pair: e.type_pair,
                    values: values.clone(),
                    hypothesis: e.hypothesis.clone(),
                });
            }
        }
        out
    }

    /// Hypothesis instances per edge type, in [`EdgeType::ALL`] order.
    pub fn instance_counts(&self) -> [usize; 11] {
        let mut counts = [0; 11];
        for e in &self.edges {
            let i = EdgeType::ALL
                .iter()
                .position(|t| *t == e.type_pair)
                .expect("closed taxonomy");
            counts[i] += e.provenance.len();
        }
        counts
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn to_dot(&self) -> String {
        let q = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let mut out = String::from("graph dfkg {\n  node [shape=box];\n");
        for n in &self.nodes {
            out.push_str(&format!(
                "  \"{}\" [label=\"{}\\n{}\"];\n",
                q(&n.node_id),
                q(n.entity_type.label()),
                q(&n.value)
            ));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "  \"{}\" -- \"{}\" [label=\"{}\"];\n",
                q(&e.endpoints[0]),
                q(&e.endpoints[1]),
                e.provenance.len()
            ));
        }
        for (i, g) in self.isolated_groups.iter().enumerate() {
            out.push_str(&format!(
                "  subgraph cluster_{i} {{\n    label=\"{}\";\n",
                q(&g.app_name)
            ));
            for m in &g.members {
                out.push_str(&format!("    \"{}\";\n", q(m)));
            }
            out.push_str("  }\n");
        }
        out.push_str("}\n");
        out
    }
}
