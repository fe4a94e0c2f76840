//! Trained models: per-node classifier banks over a label tree, flat
//! binary relevance as the degenerate single-node case, and JSON
//! persistence with format versioning and a vocabulary digest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{LabelVocabulary, MultiLabelDataset};
use crate::error::{Error, Result};
use crate::hierarchy::{self, LabelTree, TreeNode};
use crate::learner::{self, LearnerParams, LinearModel};
use crate::timing::Stopwatch;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const FORMAT_VERSION: u32 = 1;

/// One binary model per target of a node, aligned with the node's target
/// order (children for internal nodes, labels for leaves).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeClassifier {
    pub models: Vec<LinearModel>,
}

/// Training telemetry. Only the deterministic parts are persisted so that
/// identical runs produce byte-identical model files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTelemetry {
    /// |D_n| per node id.
    pub node_train_sizes: Vec<usize>,
    /// Wall-clock training time; 0 when loaded from disk.
    #[serde(skip)]
    pub train_seconds: f64,
}

impl TrainTelemetry {
    fn mean_over<'a>(&self, nodes: impl Iterator<Item = &'a TreeNode>) -> Option<f64> {
        let sizes: Vec<usize> = nodes.map(|n| self.node_train_sizes[n.id]).collect();
        if sizes.is_empty() {
            None
        } else {
            Some(sizes.iter().sum::<usize>() as f64 / sizes.len() as f64)
        }
    }
}

/// A fully trained hierarchy-of-classifiers model.
#[derive(Debug, Clone, PartialEq)]
pub struct HomerModel {
    pub tree: LabelTree,
    /// Indexed by node id; every node carries a trained classifier.
    pub classifiers: Vec<NodeClassifier>,
    pub vocab: LabelVocabulary,
    pub num_features: usize,
    pub learner: LearnerParams,
    pub telemetry: TrainTelemetry,
}

impl HomerModel {
    pub fn num_labels(&self) -> usize {
        self.vocab.len()
    }

    /// Order-sensitive digest of the label names; guards against silently
    /// permuted vocabularies between training and prediction.
    pub fn vocab_sha256(&self) -> String {
        vocab_sha256(&self.vocab)
    }

    /// Mean |D_n| over leaf nodes, if any.
    pub fn mean_dn_leaf(&self) -> Option<f64> {
        self.telemetry.mean_over(self.tree.nodes.iter().filter(|n| n.is_leaf()))
    }

    /// Mean |D_n| over internal nodes, if any.
    pub fn mean_dn_nonleaf(&self) -> Option<f64> {
        self.telemetry.mean_over(self.tree.nodes.iter().filter(|n| !n.is_leaf()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            learner: self.learner,
            num_features: self.num_features,
            vocab_sha256: self.vocab_sha256(),
            vocab: self.vocab.names().to_vec(),
            tree: self.tree.clone(),
            classifiers: self.classifiers.clone(),
            telemetry: self.telemetry.clone(),
        };
        serde_json::to_writer(&mut out, &file).map_err(|e| Error::Model(e.to_string()))?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(File::open(path.as_ref()).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.as_ref().display()),
            ))
        })?);
        let file: ModelFile =
            serde_json::from_reader(reader).map_err(|e| Error::Model(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: file.format_version,
                supported: FORMAT_VERSION,
            });
        }
        let mut vocab = LabelVocabulary::from_names(file.vocab)?;
        vocab.rebuild_index();
        if vocab_sha256(&vocab) != file.vocab_sha256 {
            return Err(Error::Model("vocabulary digest does not match label names".into()));
        }
        if file.classifiers.len() != file.tree.nodes.len() {
            return Err(Error::Model("one classifier per tree node required".into()));
        }
        for (node, clf) in file.tree.nodes.iter().zip(&file.classifiers) {
            if clf.models.len() != node.num_targets() {
                return Err(Error::Model(format!(
                    "node {} has {} targets but {} models",
                    node.id,
                    node.num_targets(),
                    clf.models.len()
                )));
            }
        }
        Ok(HomerModel {
            tree: file.tree,
            classifiers: file.classifiers,
            vocab,
            num_features: file.num_features,
            learner: file.learner,
            telemetry: file.telemetry,
        })
    }
}

pub fn vocab_sha256(vocab: &LabelVocabulary) -> String {
    let mut hasher = Sha256::new();
    for name in vocab.names() {
        hasher.update(name.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    learner: LearnerParams,
    num_features: usize,
    vocab_sha256: String,
    vocab: Vec<String>,
    tree: LabelTree,
    classifiers: Vec<NodeClassifier>,
    telemetry: TrainTelemetry,
}

/// Training-time options that do not change the result, only resources.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Derive each node's training set from its parent's instead of
    /// rescanning the full corpus; same output, more memory, less time.
    pub cache_node_data: bool,
}

/// Trains one binary model per target of every tree node.
///
/// A node's training set is every instance carrying at least one of the
/// node's labels; positives for a target follow the meta-label semantics,
/// negatives are the rest of the node's training set.
pub fn train_homer(
    train: &MultiLabelDataset,
    tree: &LabelTree,
    params: &LearnerParams,
    options: TrainOptions,
) -> Result<HomerModel> {
    if train.instances.is_empty() {
        return Err(Error::NoInstances);
    }
    tree.validate(train.vocab.len())?;
    let watch = Stopwatch::start();

    // D_n for every node, either rescanning the corpus per node or
    // narrowing the parent's set (identical results).
    let mut node_rows: Vec<Vec<u32>> = vec![Vec::new(); tree.nodes.len()];
    if options.cache_node_data {
        let mut stack = vec![tree.root];
        node_rows[tree.root] = hierarchy::node_instance_indices(tree.node(tree.root), train)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        while let Some(id) = stack.pop() {
            let parent_rows = node_rows[id].clone();
            for &child in &tree.node(id).children {
                node_rows[child] = parent_rows
                    .iter()
                    .copied()
                    .filter(|&row| {
                        train.instances[row as usize].has_any_label(&tree.node(child).labels)
                    })
                    .collect();
                stack.push(child);
            }
        }
    } else {
        for node in &tree.nodes {
            node_rows[node.id] = hierarchy::node_instance_indices(node, train)
                .into_iter()
                .map(|i| i as u32)
                .collect();
        }
    }

    // one fit job per (node, target)
    struct Job {
        node: usize,
        target_idx: usize,
        target: u32,
        positives: Vec<u32>,
        negatives: Vec<u32>,
    }
    let mut jobs: Vec<Job> = Vec::new();
    for node in &tree.nodes {
        let rows = &node_rows[node.id];
        let num_targets = node.num_targets();
        let mut positives: Vec<Vec<u32>> = vec![Vec::new(); num_targets];
        for &row in rows {
            let inst = &train.instances[row as usize];
            for t in hierarchy::meta_label_targets(tree, node, inst) {
                positives[t].push(row);
            }
        }
        let mut is_positive = vec![false; rows.len()];
        for (t, pos) in positives.into_iter().enumerate() {
            is_positive.iter_mut().for_each(|b| *b = false);
            let mut pi = 0;
            for (slot, &row) in rows.iter().enumerate() {
                if pi < pos.len() && pos[pi] == row {
                    is_positive[slot] = true;
                    pi += 1;
                }
            }
            let negatives: Vec<u32> = rows
                .iter()
                .zip(&is_positive)
                .filter(|(_, &p)| !p)
                .map(|(&row, _)| row)
                .collect();
            let target = if node.is_leaf() {
                node.labels[t]
            } else {
                node.children[t] as u32
            };
            jobs.push(Job { node: node.id, target_idx: t, target, positives: pos, negatives });
        }
    }

    let fit_one = |job: &Job| -> Result<(usize, usize, LinearModel)> {
        let model = if job.positives.is_empty() && job.negatives.is_empty() {
            // node with an empty training set: constant negative
            LinearModel::Constant { positive: false, target: job.target }
        } else {
            let pos: Vec<&[(u32, f64)]> = job
                .positives
                .iter()
                .map(|&r| train.instances[r as usize].features.as_slice())
                .collect();
            let neg: Vec<&[(u32, f64)]> = job
                .negatives
                .iter()
                .map(|&r| train.instances[r as usize].features.as_slice())
                .collect();
            learner::train_linear(&pos, &neg, train.num_features, job.target, params)?
        };
        Ok((job.node, job.target_idx, model))
    };

    #[cfg(feature = "parallel")]
    let fitted: Result<Vec<(usize, usize, LinearModel)>> = jobs.par_iter().map(fit_one).collect();
    #[cfg(not(feature = "parallel"))]
    let fitted: Result<Vec<(usize, usize, LinearModel)>> = jobs.iter().map(fit_one).collect();
    let fitted = fitted?;

    let mut classifiers: Vec<NodeClassifier> = tree
        .nodes
        .iter()
        .map(|n| NodeClassifier {
            models: vec![LinearModel::Constant { positive: false, target: 0 }; n.num_targets()],
        })
        .collect();
    for (node, target_idx, model) in fitted {
        classifiers[node].models[target_idx] = model;
    }

    let telemetry = TrainTelemetry {
        node_train_sizes: node_rows.iter().map(Vec::len).collect(),
        train_seconds: watch.elapsed_secs(),
    };
    Ok(HomerModel {
        tree: tree.clone(),
        classifiers,
        vocab: train.vocab.clone(),
        num_features: train.num_features,
        learner: *params,
        telemetry,
    })
}

/// Flat binary relevance: one model per label over the whole corpus.
/// Exactly the single-node degenerate hierarchy.
pub fn train_flat_br(
    train: &MultiLabelDataset,
    params: &LearnerParams,
) -> Result<HomerModel> {
    let tree = LabelTree::single_node(train.vocab.len());
    train_homer(train, &tree, params, TrainOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_dataset, LoadOptions};
    use crate::hierarchy::{build_hierarchy, TreeParams};
    use std::io::{BufReader, Cursor};

    fn ds(text: &str) -> MultiLabelDataset {
        parse_dataset(BufReader::new(Cursor::new(text.to_owned())), &LoadOptions::default())
            .unwrap()
    }

    /// Three label groups with disjoint instance sets and features.
    fn grouped_corpus() -> MultiLabelDataset {
        let mut text = String::new();
        for g in 0..3u32 {
            for i in 0..4u32 {
                let labs: Vec<String> = (0..3).map(|l| format!("l{}", g * 3 + l)).collect();
                text.push_str(&format!("{} {}:1 {}:1\n", labs.join(","), g * 10 + i, g * 10 + 5));
            }
        }
        ds(&text)
    }

    #[test]
    fn leaf_training_sets_are_group_local() {
        let corpus = grouped_corpus();
        let params = TreeParams { k: 3, nmax: 3, ..Default::default() };
        let tree = build_hierarchy(&corpus, params).unwrap();
        let model =
            train_homer(&corpus, &tree, &LearnerParams::default(), TrainOptions::default())
                .unwrap();
        assert_eq!(model.telemetry.node_train_sizes[tree.root], 12);
        for leaf in tree.leaves() {
            assert_eq!(model.telemetry.node_train_sizes[leaf.id], 4);
        }
        let mean_leaf = model.mean_dn_leaf().unwrap();
        assert!(mean_leaf < corpus.instances.len() as f64);
    }

    #[test]
    fn flat_br_equals_single_node_homer() {
        let corpus = grouped_corpus();
        let br = train_flat_br(&corpus, &LearnerParams::default()).unwrap();
        let tree = build_hierarchy(
            &corpus,
            TreeParams { nmax: corpus.vocab.len(), ..Default::default() },
        )
        .unwrap();
        let homer =
            train_homer(&corpus, &tree, &LearnerParams::default(), TrainOptions::default())
                .unwrap();
        assert_eq!(br.classifiers, homer.classifiers);
    }

    #[test]
    fn all_positive_label_trains_constant_positive() {
        let corpus = ds("a 0:1\na 1:1\na,b 2:1\n");
        let model = train_flat_br(&corpus, &LearnerParams::default()).unwrap();
        let clf = &model.classifiers[0];
        assert!(matches!(clf.models[0], LinearModel::Constant { positive: true, .. }));
    }

    #[test]
    fn cache_node_data_is_observably_identical() {
        let corpus = grouped_corpus();
        let params = TreeParams { k: 2, nmax: 2, ..Default::default() };
        let tree = build_hierarchy(&corpus, params).unwrap();
        let lp = LearnerParams::default();
        let plain = train_homer(&corpus, &tree, &lp, TrainOptions::default()).unwrap();
        let cached =
            train_homer(&corpus, &tree, &lp, TrainOptions { cache_node_data: true }).unwrap();
        assert_eq!(plain.classifiers, cached.classifiers);
        assert_eq!(plain.telemetry.node_train_sizes, cached.telemetry.node_train_sizes);
    }

    #[test]
    fn meta_label_positives_union_property() {
        // positives of meta-label μ_c within D_n = instances of D_n that
        // carry any label of child c (brute force)
        let corpus = grouped_corpus();
        let params = TreeParams { k: 3, nmax: 3, ..Default::default() };
        let tree = build_hierarchy(&corpus, params).unwrap();
        let root = tree.node(tree.root);
        let rows = hierarchy::node_instance_indices(root, &corpus);
        for (t, &child) in root.children.iter().enumerate() {
            let child_labels = &tree.node(child).labels;
            for &row in &rows {
                let inst = &corpus.instances[row];
                let is_meta_positive =
                    hierarchy::meta_label_targets(&tree, root, inst).contains(&t);
                let brute = inst.labels.iter().any(|l| child_labels.contains(l));
                assert_eq!(is_meta_positive, brute);
            }
        }
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let corpus = grouped_corpus();
        let tree =
            build_hierarchy(&corpus, TreeParams { k: 2, nmax: 4, ..Default::default() }).unwrap();
        let model =
            train_homer(&corpus, &tree, &LearnerParams::default(), TrainOptions::default())
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = HomerModel::load(&path).unwrap();
        assert_eq!(loaded.num_features, model.num_features);
        assert_eq!(loaded.tree, model.tree);
        // weights compare by exact bits through PartialEq on f64
        assert_eq!(loaded.classifiers, model.classifiers);
        assert_eq!(loaded.vocab.names(), model.vocab.names());

        // saving the loaded model reproduces the same bytes
        let path2 = dir.path().join("model2.json");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn unknown_format_version_is_a_hard_error() {
        let corpus = ds("a 0:1\nb 1:1\n");
        let model = train_flat_br(&corpus, &LearnerParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let bumped = text.replace("\"format_version\":1", "\"format_version\":999");
        std::fs::write(&path, bumped).unwrap();
        match HomerModel::load(&path) {
            Err(Error::UnsupportedVersion { found: 999, .. }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn tampered_vocab_fails_the_digest_check() {
        let corpus = ds("a 0:1\nb 1:1\n");
        let model = train_flat_br(&corpus, &LearnerParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let swapped = text.replace("[\"a\",\"b\"]", "[\"b\",\"a\"]");
        assert_ne!(text, swapped);
        std::fs::write(&path, swapped).unwrap();
        assert!(matches!(HomerModel::load(&path), Err(Error::Model(_))));
    }
}
