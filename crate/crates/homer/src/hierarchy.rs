//! Recursive construction of the label tree.
//!
//! Starting from the full label set, each node's labels are clustered into
//! at most `k` children until a node holds no more than `nmax` labels.
//! Leaves keep the labels themselves as targets; internal nodes get one
//! meta-label per child, positive for an instance iff the instance carries
//! at least one of that child's labels.

use serde::{Deserialize, Serialize};

use crate::clustering::{self, ClustererKind, LabelVector};
use crate::dataset::{self, MultiLabelDataset, SparseInstance};
use crate::error::{Error, Result};

/// Tree construction parameters; `seed` fixes every clustering run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub k: usize,
    pub nmax: usize,
    pub iterations: usize,
    pub seed: u64,
    pub clusterer: ClustererKind,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            k: 3,
            nmax: 20,
            iterations: 3,
            seed: 0,
            clusterer: ClustererKind::BalancedKMeans,
        }
    }
}

/// One node of the label tree. Internal nodes train one model per child
/// (meta-labels); leaves train one model per label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    /// Sorted label ids assigned to this node by clustering.
    pub labels: Vec<u32>,
    /// Child node ids; empty for leaves.
    pub children: Vec<usize>,
    pub depth: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Number of classification targets at this node: children for
    /// internal nodes, labels for leaves.
    pub fn num_targets(&self) -> usize {
        if self.is_leaf() {
            self.labels.len()
        } else {
            self.children.len()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
    pub params: TreeParams,
}

impl LabelTree {
    /// The degenerate single-leaf tree over `num_labels` labels; training
    /// on it is exactly flat binary relevance.
    pub fn single_node(num_labels: usize) -> Self {
        let params = TreeParams { nmax: num_labels.max(1), ..Default::default() };
        LabelTree {
            nodes: vec![TreeNode {
                id: 0,
                labels: (0..num_labels as u32).collect(),
                children: Vec::new(),
                depth: 0,
            }],
            root: 0,
            params,
        }
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Checks the structural invariants: the root covers all labels, every
    /// internal node's labels are the disjoint union of its children's,
    /// leaves stay within `nmax`, and the leaf label sets partition the
    /// vocabulary.
    pub fn validate(&self, num_labels: usize) -> Result<()> {
        let root = &self.nodes[self.root];
        if root.labels.len() != num_labels {
            return Err(Error::Other(format!(
                "root holds {} labels, vocabulary has {num_labels}",
                root.labels.len()
            )));
        }
        let mut leaf_labels: Vec<u32> = Vec::new();
        for node in &self.nodes {
            if node.is_leaf() {
                if node.labels.len() > self.params.nmax {
                    return Err(Error::Other(format!(
                        "leaf {} has {} labels > nmax {}",
                        node.id,
                        node.labels.len(),
                        self.params.nmax
                    )));
                }
                leaf_labels.extend(&node.labels);
            } else {
                if node.children.len() < 2 {
                    return Err(Error::Other(format!(
                        "internal node {} has {} children",
                        node.id,
                        node.children.len()
                    )));
                }
                let mut union: Vec<u32> = node
                    .children
                    .iter()
                    .flat_map(|&c| self.nodes[c].labels.iter().copied())
                    .collect();
                union.sort_unstable();
                if union != node.labels {
                    return Err(Error::Other(format!(
                        "node {}'s labels are not the disjoint union of its children's",
                        node.id
                    )));
                }
            }
        }
        leaf_labels.sort_unstable();
        let expected: Vec<u32> = (0..num_labels as u32).collect();
        if leaf_labels != expected {
            return Err(Error::Other("leaf label sets do not partition the vocabulary".into()));
        }
        Ok(())
    }
}

/// Per-node clustering seeds must be independent; splitmix64 over
/// (seed, node id) keeps the whole build a pure function of the seed.
fn node_seed(seed: u64, node_id: usize) -> u64 {
    let mut z = seed ^ (node_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds the label tree for `train` by recursive clustering of label
/// occurrence vectors.
///
/// Labels that never occur in `train` have all-zero vectors, for which the
/// Jaccard distance is degenerate; they are spread round-robin over the
/// freshly clustered children so that every label lands in exactly one
/// leaf.
pub fn build_hierarchy(train: &MultiLabelDataset, params: TreeParams) -> Result<LabelTree> {
    if params.k < 2 {
        return Err(Error::InvalidParam("k must be at least 2".into()));
    }
    if params.nmax < 1 {
        return Err(Error::InvalidParam("nmax must be at least 1".into()));
    }
    if train.vocab.is_empty() {
        return Err(Error::InvalidParam("cannot build a hierarchy over zero labels".into()));
    }
    let vectors = LabelVector::from_dataset(train);

    let mut nodes: Vec<TreeNode> = Vec::new();
    let all_labels: Vec<u32> = (0..train.vocab.len() as u32).collect();
    let root = new_node(&mut nodes, all_labels, 0);
    let mut queue = vec![root];

    while let Some(id) = queue.pop() {
        let labels = nodes[id].labels.clone();
        if labels.len() <= params.nmax {
            continue; // leaf
        }
        let groups = split_labels(&labels, &vectors, &params, node_seed(params.seed, id))?;
        debug_assert!(groups.len() >= 2);
        let depth = nodes[id].depth;
        for group in groups {
            let child = new_node(&mut nodes, group, depth + 1);
            nodes[id].children.push(child);
            queue.push(child);
        }
    }

    let tree = LabelTree { nodes, root, params };
    debug_assert!(tree.validate(train.vocab.len()).is_ok());
    Ok(tree)
}

fn new_node(nodes: &mut Vec<TreeNode>, mut labels: Vec<u32>, depth: usize) -> usize {
    labels.sort_unstable();
    let id = nodes.len();
    nodes.push(TreeNode { id, labels, children: Vec::new(), depth });
    id
}

/// Partitions `labels` into 2..=k non-empty groups.
fn split_labels(
    labels: &[u32],
    vectors: &[LabelVector],
    params: &TreeParams,
    seed: u64,
) -> Result<Vec<Vec<u32>>> {
    let k = params.k.min(labels.len());
    let (occurring, zero): (Vec<u32>, Vec<u32>) =
        labels.iter().copied().partition(|&l| !vectors[l as usize].is_zero());

    let mut groups: Vec<Vec<u32>> = if occurring.len() >= k {
        let points: Vec<LabelVector> =
            occurring.iter().map(|&l| vectors[l as usize].clone()).collect();
        clustering::cluster(params.clusterer, &points, k, params.iterations, seed)?.assignments
    } else {
        // too few occurring labels to cluster: one group per occurring
        // label, pad with empty groups for the zero-frequency spill
        let mut g: Vec<Vec<u32>> = occurring.iter().map(|&l| vec![l]).collect();
        g.resize(k, Vec::new());
        g
    };

    for (i, l) in zero.into_iter().enumerate() {
        let slot = i % groups.len();
        groups[slot].push(l);
    }
    groups.retain(|g| !g.is_empty());

    if groups.len() < 2 {
        // Plain k-means may collapse duplicate vectors into one cluster;
        // fall back to a round-robin split so recursion terminates.
        let mut g: Vec<Vec<u32>> = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            g[i % k].push(l);
        }
        groups = g;
        groups.retain(|g| !g.is_empty());
    }
    Ok(groups)
}

/// All training instances carrying at least one label of the node.
pub fn node_training_set(node: &TreeNode, train: &MultiLabelDataset) -> MultiLabelDataset {
    dataset::filter_by_labels(train, &node.labels)
}

/// Indices into `train` of the node's training set.
pub fn node_instance_indices(node: &TreeNode, train: &MultiLabelDataset) -> Vec<usize> {
    dataset::filter_indices(train, &node.labels)
}

/// Positive targets of `instance` at `node`, as indices into the node's
/// target list: for an internal node, the children whose subtree shares a
/// label with the instance; for a leaf, the instance's labels restricted
/// to the leaf (positions within `node.labels`).
pub fn meta_label_targets(tree: &LabelTree, node: &TreeNode, instance: &SparseInstance) -> Vec<usize> {
    if node.is_leaf() {
        node.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| instance.has_label(l))
            .map(|(i, _)| i)
            .collect()
    } else {
        node.children
            .iter()
            .enumerate()
            .filter(|(_, &c)| instance.has_any_label(&tree.nodes[c].labels))
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LoadOptions, parse_dataset};
    use std::io::{BufReader, Cursor};

    fn ds(text: &str) -> MultiLabelDataset {
        parse_dataset(BufReader::new(Cursor::new(text.to_owned())), &LoadOptions::default())
            .unwrap()
    }

    /// Nine labels in three co-occurrence groups, three instances each.
    fn nine_label_corpus() -> MultiLabelDataset {
        let mut text = String::new();
        for g in 0..3 {
            for i in 0..3 {
                let labs: Vec<String> = (0..3).map(|l| format!("l{}", g * 3 + l)).collect();
                text.push_str(&format!("{} {}:{}\n", labs.join(","), g * 3 + i, 1.0));
            }
        }
        ds(&text)
    }

    #[test]
    fn few_labels_give_single_leaf() {
        let corpus = ds("a 0:1\nb 1:1\nc,d,e 2:1\n");
        let params = TreeParams { nmax: 10, ..Default::default() };
        let tree = build_hierarchy(&corpus, params).unwrap();
        assert_eq!(tree.num_nodes(), 1);
        let root = tree.node(tree.root);
        assert!(root.is_leaf());
        assert_eq!(root.labels, vec![0, 1, 2, 3, 4]);
        assert_eq!(root.num_targets(), 5);
    }

    #[test]
    fn nine_labels_three_perfect_leaves() {
        let corpus = nine_label_corpus();
        let params = TreeParams { k: 3, nmax: 3, ..Default::default() };
        let tree = build_hierarchy(&corpus, params).unwrap();
        tree.validate(9).unwrap();
        assert_eq!(tree.num_nodes(), 4);
        let leaf_sizes: Vec<usize> = tree.leaves().map(|n| n.labels.len()).collect();
        assert_eq!(leaf_sizes, vec![3, 3, 3]);
        // co-occurring groups end up together
        let mut leaf_sets: Vec<Vec<u32>> = tree.leaves().map(|n| n.labels.clone()).collect();
        leaf_sets.sort();
        assert_eq!(leaf_sets, vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]]);
    }

    #[test]
    fn rejects_bad_params() {
        let corpus = nine_label_corpus();
        assert!(build_hierarchy(&corpus, TreeParams { k: 1, ..Default::default() }).is_err());
        assert!(build_hierarchy(&corpus, TreeParams { nmax: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn label_count_between_nmax_and_k_clamps_k() {
        // 3 labels, nmax = 2 < 3 ≤ k = 5: split into 3 singleton-ish children
        let corpus = ds("a 0:1\nb 1:1\nc 2:1\n");
        let params = TreeParams { k: 5, nmax: 2, ..Default::default() };
        let tree = build_hierarchy(&corpus, params).unwrap();
        tree.validate(3).unwrap();
        let root = tree.node(tree.root);
        assert!(root.children.len() >= 2);
        for &c in &root.children {
            assert!(!tree.node(c).labels.is_empty());
        }
    }

    #[test]
    fn zero_frequency_labels_land_in_exactly_one_leaf() {
        let mut corpus = nine_label_corpus();
        for i in 0..4 {
            corpus.vocab.intern(&format!("ghost{i}"));
        }
        let params = TreeParams { k: 3, nmax: 3, ..Default::default() };
        let tree = build_hierarchy(&corpus, params).unwrap();
        tree.validate(13).unwrap();
    }

    #[test]
    fn all_zero_frequency_still_partitions() {
        let mut corpus = ds("a 0:1\n");
        for i in 0..9 {
            corpus.vocab.intern(&format!("ghost{i}"));
        }
        let params = TreeParams { k: 3, nmax: 2, ..Default::default() };
        let tree = build_hierarchy(&corpus, params).unwrap();
        tree.validate(10).unwrap();
    }

    #[test]
    fn monotone_shrinkage_along_edges() {
        let corpus = nine_label_corpus();
        let params = TreeParams { k: 2, nmax: 2, ..Default::default() };
        let tree = build_hierarchy(&corpus, params).unwrap();
        for node in &tree.nodes {
            let parent_size = node_instance_indices(node, &corpus).len();
            for &c in &node.children {
                let child_size = node_instance_indices(tree.node(c), &corpus).len();
                assert!(child_size <= parent_size);
            }
        }
    }

    #[test]
    fn meta_targets_internal_and_leaf() {
        let corpus = nine_label_corpus();
        let params = TreeParams { k: 3, nmax: 3, ..Default::default() };
        let tree = build_hierarchy(&corpus, params).unwrap();
        let root = tree.node(tree.root);

        // instance with labels {0, 4}: touches the children owning 0 and 4
        let inst = SparseInstance::new(vec![(0, 1.0)], vec![0, 4]);
        let targets = meta_label_targets(&tree, root, &inst);
        assert_eq!(targets.len(), 2);
        for &t in &targets {
            let child = tree.node(root.children[t]);
            assert!(child.labels.contains(&0) || child.labels.contains(&4));
        }

        // leaf restriction: labels {1, 7} at the leaf holding {0,1,2} → {1}
        let leaf_id = tree
            .leaves()
            .find(|n| n.labels.contains(&1))
            .map(|n| n.id)
            .unwrap();
        let leaf = tree.node(leaf_id);
        let inst = SparseInstance::new(vec![], vec![1, 7]);
        let targets = meta_label_targets(&tree, leaf, &inst);
        assert_eq!(targets.len(), 1);
        assert_eq!(leaf.labels[targets[0]], 1);

        // disjoint labels → empty target set
        let inst = SparseInstance::new(vec![], vec![]);
        assert!(meta_label_targets(&tree, root, &inst).is_empty());
    }

    #[test]
    fn determinism_same_seed_same_tree() {
        let corpus = nine_label_corpus();
        let params = TreeParams { k: 2, nmax: 2, seed: 7, ..Default::default() };
        let a = build_hierarchy(&corpus, params).unwrap();
        let b = build_hierarchy(&corpus, params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_node_constructor_matches_nmax_equals_l() {
        let corpus = nine_label_corpus();
        let params = TreeParams { k: 3, nmax: 9, ..Default::default() };
        let built = build_hierarchy(&corpus, params).unwrap();
        let direct = LabelTree::single_node(9);
        assert_eq!(built.num_nodes(), 1);
        assert_eq!(built.node(0).labels, direct.node(0).labels);
    }

    #[test]
    fn plain_kmeans_duplicate_vectors_terminate() {
        // all labels share one occurrence vector; plain k-means would put
        // them in a single cluster forever without the fallback split
        let corpus = ds("a,b,c,d,e,f 0:1\na,b,c,d,e,f 1:1\n");
        let params = TreeParams {
            k: 2,
            nmax: 2,
            clusterer: ClustererKind::KMeans,
            ..Default::default()
        };
        let tree = build_hierarchy(&corpus, params).unwrap();
        tree.validate(6).unwrap();
    }
}
