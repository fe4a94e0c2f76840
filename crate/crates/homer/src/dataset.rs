//! Sparse multi-label datasets: representation, text I/O and corpus statistics.
//!
//! The on-disk format is line oriented: `lab1,lab2 idx:val idx:val ...`,
//! one instance per line, with an optional leading header line
//! `N_instances N_features N_labels` and `#` comment lines. Labels may be
//! arbitrary names or integer ids (ids require a label-name sidecar or are
//! interned as literal names in first-seen order).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered label names with a dense id per name (0..|L|-1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVocabulary {
    labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl LabelVocabulary {
    pub fn new() -> Self {
        LabelVocabulary { labels: Vec::new(), index: HashMap::new() }
    }

    pub fn from_names<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut vocab = LabelVocabulary::new();
        for name in names {
            let name = name.into();
            if vocab.index.contains_key(&name) {
                return Err(Error::InvalidParam(format!("duplicate label name `{name}`")));
            }
            vocab.intern(&name);
        }
        Ok(vocab)
    }

    /// Reads one label name per line; order defines the ids.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_names(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for name in &self.labels {
            writeln!(out, "{name}")?;
        }
        Ok(())
    }

    /// Id of `name`, interning it as the next id if unseen.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }

    /// Rebuilds the name index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
    }
}

impl Default for LabelVocabulary {
    fn default() -> Self {
        Self::new()
    }
}

/// One instance: sorted sparse features plus a sorted set of label ids.
///
/// An empty label set marks an unannotated (test-mode) instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseInstance {
    /// (feature id, value), strictly increasing by id, finite values.
    pub features: Vec<(u32, f64)>,
    /// Sorted, de-duplicated label ids.
    pub labels: Vec<u32>,
}

impl SparseInstance {
    pub fn new(mut features: Vec<(u32, f64)>, mut labels: Vec<u32>) -> Self {
        features.sort_unstable_by_key(|&(id, _)| id);
        labels.sort_unstable();
        labels.dedup();
        SparseInstance { features, labels }
    }

    pub fn has_label(&self, label: u32) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    /// True when the instance carries at least one label of `subset`
    /// (both sides sorted).
    pub fn has_any_label(&self, subset: &[u32]) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.labels.len() && j < subset.len() {
            match self.labels[i].cmp(&subset[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

/// An immutable multi-label corpus over a shared vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelDataset {
    pub vocab: LabelVocabulary,
    pub instances: Vec<SparseInstance>,
    pub num_features: usize,
}

/// Corpus statistics as emitted by the `inspect` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_instances: usize,
    pub num_labels: usize,
    pub num_features: usize,
    /// Mean number of labels per instance.
    pub cardinality: f64,
    /// Mean per-label positive count.
    pub avg_label_frequency: f64,
    /// Positive count per label id.
    pub label_frequencies: Vec<u64>,
}

/// Loader configuration. `format` currently admits only the svmlight-style
/// multi-label text format described at module level.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Accept instances with an empty label field (test mode).
    pub allow_unlabeled: bool,
    /// Resolve label tokens against this vocabulary instead of interning
    /// first-seen. Unknown tokens become an error.
    pub vocab: Option<LabelVocabulary>,
    /// Force the feature space size (e.g. from a trained model). Larger
    /// feature ids in the file are an error.
    pub num_features: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { allow_unlabeled: false, vocab: None, num_features: None }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<MultiLabelDataset> {
    let file = File::open(path.as_ref()).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.as_ref().display()),
        ))
    })?;
    parse_dataset(BufReader::new(file), opts)
}

/// Parses the text format from any reader. See [`load_dataset`].
pub fn parse_dataset<R: Read>(reader: BufReader<R>, opts: &LoadOptions) -> Result<MultiLabelDataset> {
    let mut vocab = opts.vocab.clone().unwrap_or_default();
    let fixed_vocab = opts.vocab.is_some();
    let mut instances = Vec::new();
    let mut declared: Option<(usize, usize, usize)> = None;
    let mut max_feature = 0u32;
    let mut saw_feature = false;
    let mut saw_data = false;

    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        // Optional header: three bare integers before any data line.
        if !saw_data && declared.is_none() && !trimmed.contains(':') {
            let nums: Vec<&str> = trimmed.split_whitespace().collect();
            if nums.len() == 3 {
                if let (Ok(n), Ok(f), Ok(l)) = (
                    nums[0].parse::<usize>(),
                    nums[1].parse::<usize>(),
                    nums[2].parse::<usize>(),
                ) {
                    declared = Some((n, f, l));
                    continue;
                }
            }
        }
        saw_data = true;

        let mut tokens = trimmed.split_whitespace().peekable();
        let label_field = match tokens.peek() {
            Some(tok) if !tok.contains(':') => tokens.next(),
            _ => None,
        };

        let mut labels = Vec::new();
        if let Some(field) = label_field {
            for tok in field.split(',') {
                let tok = tok.trim();
                if tok.is_empty() {
                    continue;
                }
                let id = if fixed_vocab {
                    match vocab.id(tok) {
                        Some(id) => id,
                        None => match tok.parse::<u32>() {
                            Ok(id) if (id as usize) < vocab.len() => id,
                            _ => {
                                return Err(Error::Mismatch(format!(
                                    "label `{tok}` (line {line_no}) not in the vocabulary"
                                )))
                            }
                        },
                    }
                } else {
                    vocab.intern(tok)
                };
                labels.push(id);
            }
        }
        if labels.is_empty() && !opts.allow_unlabeled {
            return Err(Error::parse(
                line_no,
                "instance has no labels (training data must be labeled)",
            ));
        }

        let mut features: Vec<(u32, f64)> = Vec::new();
        for tok in tokens {
            let (id_str, val_str) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(line_no, format!("expected `id:value`, got `{tok}`")))?;
            let id: u32 = id_str
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad feature id `{id_str}`")))?;
            let val: f64 = val_str
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad feature value `{val_str}`")))?;
            if !val.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite feature value `{val_str}`")));
            }
            features.push((id, val));
            max_feature = max_feature.max(id);
            saw_feature = true;
        }
        features.sort_unstable_by_key(|&(id, _)| id);
        for pair in features.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::parse(
                    line_no,
                    format!("duplicate feature id {}", pair[0].0),
                ));
            }
        }

        let mut instance = SparseInstance { features, labels };
        instance.labels.sort_unstable();
        instance.labels.dedup();
        instances.push(instance);
    }

    let num_features = match (opts.num_features, declared) {
        (Some(n), _) => n,
        (None, Some((_, f, _))) => f,
        (None, None) => {
            if saw_feature {
                max_feature as usize + 1
            } else {
                0
            }
        }
    };
    if saw_feature && max_feature as usize >= num_features {
        return Err(Error::InvalidParam(format!(
            "feature id {max_feature} out of range (num_features = {num_features})"
        )));
    }
    if let Some((n, _, l)) = declared {
        if n != instances.len() {
            return Err(Error::InvalidParam(format!(
                "header declares {n} instances, file has {}",
                instances.len()
            )));
        }
        if !fixed_vocab && vocab.len() > l {
            return Err(Error::InvalidParam(format!(
                "header declares {l} labels, file uses {}",
                vocab.len()
            )));
        }
    }

    Ok(MultiLabelDataset { vocab, instances, num_features })
}

pub fn save_dataset(ds: &MultiLabelDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {} {}", ds.instances.len(), ds.num_features, ds.vocab.len())?;
    for inst in &ds.instances {
        let labels: Vec<String> = inst.labels.iter().map(u32::to_string).collect();
        write!(out, "{}", labels.join(","))?;
        for &(id, val) in &inst.features {
            write!(out, " {id}:{val}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn compute_stats(ds: &MultiLabelDataset) -> DatasetStats {
    let mut freqs = vec![0u64; ds.vocab.len()];
    let mut label_total = 0u64;
    for inst in &ds.instances {
        label_total += inst.labels.len() as u64;
        for &l in &inst.labels {
            freqs[l as usize] += 1;
        }
    }
    let n = ds.instances.len().max(1);
    let l = ds.vocab.len().max(1);
    DatasetStats {
        num_instances: ds.instances.len(),
        num_labels: ds.vocab.len(),
        num_features: ds.num_features,
        cardinality: label_total as f64 / n as f64,
        avg_label_frequency: label_total as f64 / l as f64,
        label_frequencies: freqs,
    }
}

/// Per-label positive counts, used for Eq.-style occurrence vectors and
/// frequency buckets.
pub fn label_frequencies(ds: &MultiLabelDataset) -> Vec<u64> {
    compute_stats(ds).label_frequencies
}

/// Instances annotated with at least one label of `subset`. Label sets are
/// kept intact; reduction to a node's targets happens at training time.
pub fn filter_by_labels(ds: &MultiLabelDataset, subset: &[u32]) -> MultiLabelDataset {
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let instances: Vec<SparseInstance> = ds
        .instances
        .iter()
        .filter(|inst| inst.has_any_label(&sorted))
        .cloned()
        .collect();
    MultiLabelDataset { vocab: ds.vocab.clone(), instances, num_features: ds.num_features }
}

/// Indices of the instances [`filter_by_labels`] would keep.
pub fn filter_indices(ds: &MultiLabelDataset, sorted_subset: &[u32]) -> Vec<usize> {
    ds.instances
        .iter()
        .enumerate()
        .filter(|(_, inst)| inst.has_any_label(sorted_subset))
        .map(|(i, _)| i)
        .collect()
}
