//! Node selection and action routing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SearchConfig, SearchError};
use crate::sandbox::ExecutionStatus;
use crate::tree::{NodeId, NodeKind, SolutionNode, SolutionTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Refine,
    Debug,
    Terminal,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Refine => "REFINE",
            Action::Debug => "DEBUG",
            Action::Terminal => "TERMINAL",
        }
    }
}

/// Consecutive DEBUG_CHILD nodes from `id` up toward the root.
pub fn debug_streak(tree: &SolutionTree, id: NodeId) -> usize {
    let mut n = 0;
    let mut cur = tree.get(id);
    while let Some(node) = cur {
        if node.kind != NodeKind::DebugChild {
            break;
        }
        n += 1;
        cur = node.parent_id.and_then(|p| tree.get(p));
    }
    n
}

/// What to do with a scored node.
pub fn route_action(tree: &SolutionTree, node: &SolutionNode, cfg: &SearchConfig) -> Result<Action, SearchError> {
    let outcome = node.outcome.as_ref().ok_or(SearchError::NodeUnscored(node.id))?;
    Ok(match outcome.status {
        ExecutionStatus::Success | ExecutionStatus::Timeout => Action::Refine,
        ExecutionStatus::RuntimeError | ExecutionStatus::ValidationError | ExecutionStatus::MetricsMissing => {
            if debug_streak(tree, node.id) < cfg.debug_retry_cap {
                Action::Debug
            } else {
                Action::Terminal
            }
        }
    })
}

/// Nodes eligible for expansion, in insertion order, with their action.
///
/// A node is eligible when it is scored, not in flight and not terminal. A
/// failed node gets one repair attempt: once it has a child it is spent.
/// With `disable_moeo` only the most recent node is eligible, and only while
/// it is childless, so the tree stays a chain.
pub fn expandable(tree: &SolutionTree, cfg: &SearchConfig) -> Vec<(NodeId, Action)> {
    let eligible = |n: &SolutionNode| -> Option<(NodeId, Action)> {
        if !n.status.is_scored() || tree.is_in_flight(n.id) {
            return None;
        }
        match route_action(tree, n, cfg).ok()? {
            Action::Terminal => None,
            Action::Debug if !tree.children(n.id).is_empty() => None,
            a => Some((n.id, a)),
        }
    };
    if cfg.ablation_flags.disable_moeo {
        return tree
            .last()
            .filter(|n| tree.children(n.id).is_empty())
            .and_then(eligible)
            .into_iter()
            .collect();
    }
    tree.iter().filter_map(eligible).collect()
}

/// Samples an index with probability proportional to `exp(score / temperature)`.
pub fn softmax_sample<R: Rng + ?Sized>(scores: &[f64], temperature: f64, rng: &mut R) -> usize {
    assert!(!scores.is_empty(), "softmax over an empty set");
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(scores.len() - 1)
}

/// Picks the next node to expand.
pub fn select_expansion<R: Rng + ?Sized>(
    tree: &SolutionTree,
    cfg: &SearchConfig,
    rng: &mut R,
) -> Result<(NodeId, Action), SearchError> {
    let candidates = expandable(tree, cfg);
    match candidates.len() {
        0 => Err(SearchError::NoExpandableNodes),
        1 => Ok(candidates[0]),
        _ => {
            let scores: Vec<f64> =
                candidates.iter().map(|(id, _)| tree.get(*id).and_then(|n| n.total()).unwrap_or(0.0)).collect();
            Ok(candidates[softmax_sample(&scores, cfg.selection_temperature, rng)])
        }
    }
}
