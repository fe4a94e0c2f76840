//! Seeded synthetic multi-label corpora for benchmarks, property tests and
//! the browser demo: perfectly separable label groups, power-law label
//! frequencies with topic structure, and generic noisy corpora.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::dataset::{LabelVocabulary, MultiLabelDataset, SparseInstance};

/// Disjoint label groups with disjoint feature blocks; instances belong to
/// exactly one group. A well-built tree separates groups at the root, so
/// traversal touches one subtree per instance.
#[derive(Debug, Clone, Copy)]
pub struct GroupedParams {
    pub groups: usize,
    pub labels_per_group: usize,
    pub train_per_group: usize,
    pub test_per_group: usize,
    pub seed: u64,
}

pub fn grouped_corpus(p: GroupedParams) -> (MultiLabelDataset, MultiLabelDataset) {
    let num_labels = p.groups * p.labels_per_group;
    let vocab =
        LabelVocabulary::from_names((0..num_labels).map(|l| format!("L{l:04}"))).unwrap();
    // per group: 2 marker features + one feature per label
    let block = p.labels_per_group + 2;
    let num_features = p.groups * block;
    let mut rng = StdRng::seed_from_u64(p.seed);

    let mut make_split = |per_group: usize| -> Vec<SparseInstance> {
        let mut instances = Vec::with_capacity(p.groups * per_group);
        for g in 0..p.groups {
            let base = (g * block) as u32;
            for _ in 0..per_group {
                let mut labels = Vec::new();
                while labels.is_empty() {
                    labels = (0..p.labels_per_group)
                        .filter(|_| rng.gen_bool(0.4))
                        .map(|j| (g * p.labels_per_group + j) as u32)
                        .collect();
                }
                let mut features = vec![(base, 1.0), (base + 1, 1.0)];
                for &l in &labels {
                    let j = l as usize % p.labels_per_group;
                    if rng.gen_bool(0.9) {
                        features.push((base + 2 + j as u32, 1.0));
                    }
                }
                instances.push(SparseInstance::new(features, labels));
            }
        }
        instances
    };

    let train = MultiLabelDataset {
        vocab: vocab.clone(),
        instances: make_split(p.train_per_group),
        num_features,
    };
    let test =
        MultiLabelDataset { vocab, instances: make_split(p.test_per_group), num_features };
    (train, test)
}

/// Power-law label frequencies with topic structure: every topic mixes
/// frequent and rare labels, labels co-occur within their topic, and each
/// label carries its own signal feature next to shared topic markers.
#[derive(Debug, Clone, Copy)]
pub struct PowerLawParams {
    pub num_labels: usize,
    pub topics: usize,
    pub train_instances: usize,
    pub test_instances: usize,
    /// Frequency decay exponent; label ranked r draws weight (r+1)^-alpha.
    pub alpha: f64,
    pub seed: u64,
}

pub fn power_law_corpus(p: PowerLawParams) -> (MultiLabelDataset, MultiLabelDataset) {
    let vocab =
        LabelVocabulary::from_names((0..p.num_labels).map(|l| format!("L{l:04}"))).unwrap();
    // label l: rank l (0 most frequent), topic l % topics
    let weights: Vec<f64> = (0..p.num_labels).map(|r| ((r + 1) as f64).powf(-p.alpha)).collect();
    let topic_members: Vec<Vec<u32>> = (0..p.topics)
        .map(|t| (0..p.num_labels).filter(|l| l % p.topics == t).map(|l| l as u32).collect())
        .collect();
    // features: 2 markers per topic, then one signal feature per label
    let signal_base = (2 * p.topics) as u32;
    let noise_base = signal_base + p.num_labels as u32;
    let num_noise = 16u32;
    let num_features = noise_base as usize + num_noise as usize;
    let mut rng = StdRng::seed_from_u64(p.seed);

    let mut make_split = |count: usize| -> Vec<SparseInstance> {
        let mut instances = Vec::with_capacity(count);
        for _ in 0..count {
            let topic = rng.gen_range(0..p.topics);
            let members = &topic_members[topic];
            let wanted = 1 + rng.gen_range(0..3).min(members.len() - 1);
            let mut labels: Vec<u32> = Vec::new();
            let mut guard = 0;
            while labels.len() < wanted && guard < 200 {
                guard += 1;
                // weighted draw within the topic
                let total: f64 = members
                    .iter()
                    .filter(|l| !labels.contains(l))
                    .map(|&l| weights[l as usize])
                    .sum();
                let mut pick = rng.gen_range(0.0..total.max(f64::MIN_POSITIVE));
                for &l in members {
                    if labels.contains(&l) {
                        continue;
                    }
                    pick -= weights[l as usize];
                    if pick <= 0.0 {
                        labels.push(l);
                        break;
                    }
                }
            }
            labels.sort_unstable();
            let mut features = vec![
                ((2 * topic) as u32, 1.0),
                ((2 * topic + 1) as u32, 1.0),
            ];
            for &l in &labels {
                if rng.gen_bool(0.9) {
                    features.push((signal_base + l, 1.0));
                }
            }
            for nf in 0..num_noise {
                if rng.gen_bool(0.1) {
                    features.push((noise_base + nf, 1.0));
                }
            }
            instances.push(SparseInstance::new(features, labels));
        }
        instances
    };

    let train = MultiLabelDataset {
        vocab: vocab.clone(),
        instances: make_split(p.train_instances),
        num_features,
    };
    let test =
        MultiLabelDataset { vocab, instances: make_split(p.test_instances), num_features };
    (train, test)
}

/// A generic noisy corpus: every label has a signal feature, instances
/// carry 1..=3 uniform labels. Good enough for equivalence and round-trip
/// properties where structure does not matter.
pub fn random_corpus(
    num_labels: usize,
    num_instances: usize,
    seed: u64,
) -> MultiLabelDataset {
    let vocab =
        LabelVocabulary::from_names((0..num_labels).map(|l| format!("L{l:04}"))).unwrap();
    let num_noise = 8;
    let num_features = num_labels + num_noise;
    let mut rng = StdRng::seed_from_u64(seed);
    let instances = (0..num_instances)
        .map(|_| {
            let wanted = 1 + rng.gen_range(0..3usize.min(num_labels));
            let mut labels = Vec::new();
            while labels.len() < wanted {
                let l = rng.gen_range(0..num_labels) as u32;
                if !labels.contains(&l) {
                    labels.push(l);
                }
            }
            let mut features = Vec::new();
            for &l in &labels {
                if rng.gen_bool(0.85) {
                    features.push((l, 1.0));
                }
            }
            for nf in 0..num_noise {
                if rng.gen_bool(0.15) {
                    features.push(((num_labels + nf) as u32, 1.0));
                }
            }
            SparseInstance::new(features, labels)
        })
        .collect();
    MultiLabelDataset { vocab, instances, num_features }
}
