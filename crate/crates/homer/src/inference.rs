//! Top-down prediction over a trained label tree.
//!
//! Bipartition mode descends only into children whose meta-label decision
//! is positive and unions the positively decided leaf labels. Ranking mode
//! propagates multiplied scores down every path (root enters with 1.0);
//! with pruning on, a child is skipped when its propagated score drops to
//! at most the parent's score divided by the parent's child count.

use serde::Serialize;

use crate::dataset::MultiLabelDataset;
use crate::error::Result;
use crate::model::HomerModel;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Outcome of predicting one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    /// Bipartition mode: sorted predicted label ids. Empty in ranking mode
    /// unless the caller derives it from the scores.
    pub labels: Vec<u32>,
    /// Ranking mode: (label id, score) sorted by descending score, ties by
    /// ascending id. Empty in bipartition mode.
    pub ranking: Vec<(u32, f64)>,
    /// Nodes whose classifier was evaluated.
    pub nodes_visited: usize,
    /// Root-to-leaf paths completed (leaves reached).
    pub paths_taken: usize,
    /// Input features ignored because their id exceeds the model's
    /// feature space.
    pub ignored_features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictMode {
    Bipartition,
    Ranking,
}

impl std::str::FromStr for PredictMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bipartition" => Ok(PredictMode::Bipartition),
            "ranking" => Ok(PredictMode::Ranking),
            other => Err(crate::Error::InvalidParam(format!("unknown mode `{other}`"))),
        }
    }
}

fn sanitize<'a>(model: &HomerModel, x: &'a [(u32, f64)]) -> (Vec<(u32, f64)>, usize) {
    let known: Vec<(u32, f64)> = x
        .iter()
        .copied()
        .filter(|&(id, _)| (id as usize) < model.num_features)
        .collect();
    let ignored = x.len() - known.len();
    (known, ignored)
}

/// Hard-decision top-down prediction (may return an empty label set).
pub fn predict_bipartition(model: &HomerModel, x: &[(u32, f64)]) -> Prediction {
    let (x, ignored_features) = sanitize(model, x);
    let mut labels = Vec::new();
    let mut nodes_visited = 0usize;
    let mut paths_taken = 0usize;
    let mut stack = vec![model.tree.root];
    while let Some(id) = stack.pop() {
        let node = model.tree.node(id);
        let clf = &model.classifiers[id];
        nodes_visited += 1;
        if node.is_leaf() {
            paths_taken += 1;
            for (i, &label) in node.labels.iter().enumerate() {
                if clf.models[i].decide(&x) {
                    labels.push(label);
                }
            }
        } else {
            for (i, &child) in node.children.iter().enumerate() {
                if clf.models[i].decide(&x) {
                    stack.push(child);
                }
            }
        }
    }
    labels.sort_unstable();
    labels.dedup();
    Prediction { labels, ranking: Vec::new(), nodes_visited, paths_taken, ignored_features }
}

/// Score-propagating prediction. Every label receives a final score: the
/// product of meta-label scores along its root-to-leaf path times its leaf
/// score; labels in pruned subtrees score 0.
pub fn predict_ranking(model: &HomerModel, x: &[(u32, f64)], prune: bool) -> Prediction {
    let (x, ignored_features) = sanitize(model, x);
    let mut scores = vec![0.0f64; model.num_labels()];
    let mut nodes_visited = 0usize;
    let mut paths_taken = 0usize;
    let mut stack = vec![(model.tree.root, 1.0f64)];
    while let Some((id, incoming)) = stack.pop() {
        let node = model.tree.node(id);
        let clf = &model.classifiers[id];
        nodes_visited += 1;
        if node.is_leaf() {
            paths_taken += 1;
            for (i, &label) in node.labels.iter().enumerate() {
                scores[label as usize] = incoming * clf.models[i].score(&x);
            }
        } else {
            let fan_out = node.children.len() as f64;
            for (i, &child) in node.children.iter().enumerate() {
                let propagated = incoming * clf.models[i].score(&x);
                if prune && propagated <= incoming / fan_out {
                    continue;
                }
                stack.push((child, propagated));
            }
        }
    }
    let mut ranking: Vec<(u32, f64)> =
        scores.iter().enumerate().map(|(l, &s)| (l as u32, s)).collect();
    ranking.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Prediction { labels: Vec::new(), ranking, nodes_visited, paths_taken, ignored_features }
}

/// Aggregate traversal telemetry over a dataset (bipartition mode).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraversalStats {
    pub instances: usize,
    pub total_nodes: usize,
    pub mean_nodes_visited: f64,
    pub max_nodes_visited: usize,
    pub mean_paths_taken: f64,
    pub max_paths_taken: usize,
}

pub fn traversal_stats(model: &HomerModel, test: &MultiLabelDataset) -> TraversalStats {
    let per_instance: Vec<(usize, usize)> = {
        #[cfg(feature = "parallel")]
        {
            test.instances
                .par_iter()
                .map(|inst| {
                    let p = predict_bipartition(model, &inst.features);
                    (p.nodes_visited, p.paths_taken)
                })
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            test.instances
                .iter()
                .map(|inst| {
                    let p = predict_bipartition(model, &inst.features);
                    (p.nodes_visited, p.paths_taken)
                })
                .collect()
        }
    };
    let n = per_instance.len().max(1);
    TraversalStats {
        instances: per_instance.len(),
        total_nodes: model.tree.num_nodes(),
        mean_nodes_visited: per_instance.iter().map(|&(v, _)| v).sum::<usize>() as f64 / n as f64,
        max_nodes_visited: per_instance.iter().map(|&(v, _)| v).max().unwrap_or(0),
        mean_paths_taken: per_instance.iter().map(|&(_, p)| p).sum::<usize>() as f64 / n as f64,
        max_paths_taken: per_instance.iter().map(|&(_, p)| p).max().unwrap_or(0),
    }
}
