//! The solution tree: candidate scripts, their lineage and scores.
//!
//! All mutations go through one owner. When a [`Journal`] is attached,
//! every mutation is appended (and flushed) before the call returns, so the
//! tree can be rebuilt with [`journal_replay`].

mod journal;

pub use journal::{journal_replay, peak_in_flight, Journal, JournalError, JournalRecord, Replay};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::RewardBreakdown;
use crate::sandbox::ExecutionOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeStatus {
    Drafted,
    Validated,
    /// Ran and produced valid metrics.
    Executed,
    /// Scored, but rejected, crashed, timed out or produced no metrics.
    Failed,
}

impl NodeStatus {
    pub fn is_scored(self) -> bool {
        matches!(self, NodeStatus::Executed | NodeStatus::Failed)
    }
}

/// How a node came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeKind {
    Root,
    Refine,
    /// A repair of a failed parent.
    DebugChild,
    /// A fresh draft attached under the root after the frontier ran dry.
    Redraft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionNode {
    pub id: NodeId,
    pub parent_id: Option<NodeId>,
    pub kind: NodeKind,
    pub script: String,
    pub rationale: String,
    pub status: NodeStatus,
    pub outcome: Option<ExecutionOutcome>,
    pub reward: Option<RewardBreakdown>,
    /// Assigned on insert.
    pub depth: u32,
    /// Assigned on insert; strictly increasing.
    pub created_at: u64,
}

impl SolutionNode {
    /// A bare drafted node; depth and sequence are filled in on insert.
    pub fn drafted(id: NodeId, parent_id: Option<NodeId>, kind: NodeKind, script: impl Into<String>) -> Self {
        SolutionNode {
            id,
            parent_id,
            kind,
            script: script.into(),
            rationale: String::new(),
            status: NodeStatus::Drafted,
            outcome: None,
            reward: None,
            depth: 0,
            created_at: 0,
        }
    }

    pub fn total(&self) -> Option<f64> {
        self.reward.map(|r| r.total)
    }

    pub fn performance(&self) -> Option<f64> {
        self.reward.map(|r| r.performance)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("node {0} already exists")]
    DuplicateId(NodeId),
    #[error("parent {0} is not in the tree")]
    UnknownParent(NodeId),
    #[error("tree already has a root")]
    SecondRoot,
    #[error("first node must be a root")]
    MissingRoot,
    #[error("node {0}: reward must be present exactly when status is EXECUTED or FAILED")]
    RewardStatusMismatch(NodeId),
    #[error("node {0}: sequence number not increasing")]
    SequenceOrder(NodeId),
    #[error("node {0}: depth does not match parent")]
    DepthMismatch(NodeId),
    #[error("node {0} is not in the tree")]
    UnknownNode(NodeId),
    #[error("node {0} is already being expanded")]
    AlreadyInFlight(NodeId),
    #[error("no executed node carries a reward")]
    NoScoredNodes,
    #[error("journal: {0}")]
    Journal(String),
}

impl From<JournalError> for TreeError {
    fn from(e: JournalError) -> Self {
        TreeError::Journal(e.to_string())
    }
}

/// Root-to-node path with scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageTrace {
    pub node_ids: Vec<NodeId>,
    pub rewards_along_path: Vec<Option<f64>>,
    pub performance_along_path: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub kind: NodeKind,
    pub status: NodeStatus,
    pub depth: u32,
    pub created_at: u64,
    pub outcome: Option<String>,
    pub tau_s: Option<f64>,
    pub reward: Option<RewardBreakdown>,
}

/// Nodes, edges and scores for rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub root: Option<NodeId>,
    pub best: Option<NodeId>,
    pub nodes: Vec<TopologyNode>,
    pub edges: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, Default)]
pub struct SolutionTree {
    nodes: BTreeMap<NodeId, SolutionNode>,
    order: Vec<NodeId>,
    children: BTreeMap<NodeId, Vec<NodeId>>,
    root_id: Option<NodeId>,
    pub(crate) in_flight: BTreeSet<NodeId>,
    next_seq: u64,
    journal: Option<Journal>,
}

impl PartialEq for SolutionTree {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.order == other.order && self.root_id == other.root_id
    }
}

impl SolutionTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_journal(journal: Journal) -> Self {
        SolutionTree { journal: Some(journal), ..Self::default() }
    }

    /// Attaches a journal to a tree rebuilt by replay.
    pub fn attach_journal(&mut self, journal: Journal) {
        self.journal = Some(journal);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_id(&self) -> Option<NodeId> {
        self.root_id
    }

    pub fn get(&self, id: NodeId) -> Option<&SolutionNode> {
        self.nodes.get(&id)
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nodes in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &SolutionNode> {
        self.order.iter().map(|id| &self.nodes[id])
    }

    pub fn last(&self) -> Option<&SolutionNode> {
        self.order.last().map(|id| &self.nodes[id])
    }

    pub fn max_id(&self) -> Option<NodeId> {
        self.nodes.keys().next_back().copied()
    }

    pub fn in_flight(&self) -> &BTreeSet<NodeId> {
        &self.in_flight
    }

    pub fn is_in_flight(&self, id: NodeId) -> bool {
        self.in_flight.contains(&id)
    }

    fn check(&self, node: &SolutionNode) -> Result<u32, TreeError> {
        if self.nodes.contains_key(&node.id) {
            return Err(TreeError::DuplicateId(node.id));
        }
        if node.status.is_scored() != node.reward.is_some() {
            return Err(TreeError::RewardStatusMismatch(node.id));
        }
        match node.parent_id {
            None if self.root_id.is_some() => Err(TreeError::SecondRoot),
            None => Ok(0),
            Some(p) => match self.nodes.get(&p) {
                Some(parent) => Ok(parent.depth + 1),
                None if self.root_id.is_none() => Err(TreeError::UnknownParent(p)),
                None => Err(TreeError::UnknownParent(p)),
            },
        }
    }

    fn store(&mut self, node: SolutionNode) {
        if let Some(p) = node.parent_id {
            self.children.entry(p).or_default().push(node.id);
        } else {
            self.root_id = Some(node.id);
        }
        self.next_seq = node.created_at + 1;
        self.order.push(node.id);
        self.nodes.insert(node.id, node);
    }

    fn log(&mut self, record: JournalRecord) -> Result<(), TreeError> {
        if let Some(j) = self.journal.as_mut() {
            j.append(&record)?;
        }
        Ok(())
    }

    /// Adds a node, assigning its depth and sequence number.
    pub fn insert(&mut self, mut node: SolutionNode) -> Result<&SolutionNode, TreeError> {
        node.depth = self.check(&node)?;
        node.created_at = self.next_seq;
        self.log(JournalRecord::Node { node: node.clone() })?;
        let id = node.id;
        self.store(node);
        Ok(&self.nodes[&id])
    }

    /// Re-adds a journaled node verbatim, checking the stored depth and
    /// sequence against the tree.
    pub(crate) fn restore(&mut self, node: SolutionNode) -> Result<(), TreeError> {
        let depth = self.check(&node)?;
        if node.depth != depth {
            return Err(TreeError::DepthMismatch(node.id));
        }
        if !self.order.is_empty() && node.created_at < self.next_seq {
            return Err(TreeError::SequenceOrder(node.id));
        }
        self.store(node);
        Ok(())
    }

    /// Records the start of an expansion job for `job`, marking `parent`
    /// (if any) as in flight.
    pub fn begin_expansion(&mut self, job: NodeId, parent: Option<NodeId>, action: &str) -> Result<(), TreeError> {
        if let Some(p) = parent {
            if !self.nodes.contains_key(&p) {
                return Err(TreeError::UnknownNode(p));
            }
            if self.in_flight.contains(&p) {
                return Err(TreeError::AlreadyInFlight(p));
            }
        }
        self.log(JournalRecord::Dispatch { job, parent, action: action.into() })?;
        if let Some(p) = parent {
            self.in_flight.insert(p);
        }
        Ok(())
    }

    pub fn end_expansion(&mut self, job: NodeId, parent: Option<NodeId>) -> Result<(), TreeError> {
        let produced = self.nodes.contains_key(&job);
        self.log(JournalRecord::Release { job, parent, produced })?;
        if let Some(p) = parent {
            self.in_flight.remove(&p);
        }
        Ok(())
    }

    pub fn note(&mut self, message: impl Into<String>) -> Result<(), TreeError> {
        self.log(JournalRecord::Note { message: message.into() })
    }

    /// Highest-reward EXECUTED node; the earliest one wins ties.
    pub fn best_node(&self) -> Result<&SolutionNode, TreeError> {
        let mut best: Option<&SolutionNode> = None;
        for node in self.iter().filter(|n| n.status == NodeStatus::Executed) {
            let Some(total) = node.total() else { continue };
            if best.is_none_or(|b| total > b.total().unwrap_or(f64::NEG_INFINITY)) {
                best = Some(node);
            }
        }
        best.ok_or(TreeError::NoScoredNodes)
    }

    pub fn lineage(&self, id: NodeId) -> Result<LineageTrace, TreeError> {
        let mut path = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            let node = self.nodes.get(&c).ok_or(TreeError::UnknownNode(c))?;
            path.push(node);
            cur = node.parent_id;
        }
        path.reverse();
        Ok(LineageTrace {
            node_ids: path.iter().map(|n| n.id).collect(),
            rewards_along_path: path.iter().map(|n| n.total()).collect(),
            performance_along_path: path.iter().map(|n| n.performance()).collect(),
        })
    }

    /// Best EXECUTED total after each insertion, in insertion order.
    pub fn best_so_far(&self) -> Vec<Option<f64>> {
        let mut best: Option<f64> = None;
        self.iter()
            .map(|n| {
                if n.status == NodeStatus::Executed {
                    if let Some(t) = n.total() {
                        best = Some(best.map_or(t, |b: f64| b.max(t)));
                    }
                }
                best
            })
            .collect()
    }

    pub fn topology(&self) -> Topology {
        Topology {
            root: self.root_id,
            best: self.best_node().ok().map(|n| n.id),
            nodes: self
                .iter()
                .map(|n| TopologyNode {
                    id: n.id,
                    parent: n.parent_id,
                    kind: n.kind,
                    status: n.status,
                    depth: n.depth,
                    created_at: n.created_at,
                    outcome: n.outcome.as_ref().map(|o| {
                        serde_json::to_value(o.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
                    }),
                    tau_s: n.outcome.as_ref().map(|o| o.tau_s),
                    reward: n.reward,
                })
                .collect(),
            edges: self.iter().filter_map(|n| n.parent_id.map(|p| (p, n.id))).collect(),
        }
    }
}
