//! Micro/Macro F1 evaluation with per-label confusion counts and
//! training-frequency buckets.
//!
//! Micro-F pools true/false positives and false negatives over all labels;
//! Macro-F averages per-label F1 over the whole vocabulary, counting a
//! label with no true or predicted positives as 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-label confusion counts over a test run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl ConfusionCounts {
    pub fn num_labels(&self) -> usize {
        self.tp.len()
    }
}

/// Exact set-difference counts per label. `truth` and `predicted` hold one
/// sorted label-id list per instance.
pub fn confusion(
    truth: &[Vec<u32>],
    predicted: &[Vec<u32>],
    num_labels: usize,
) -> Result<ConfusionCounts> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidParam(format!(
            "{} truth rows vs {} prediction rows",
            truth.len(),
            predicted.len()
        )));
    }
    let mut counts = ConfusionCounts {
        tp: vec![0; num_labels],
        fp: vec![0; num_labels],
        fn_: vec![0; num_labels],
    };
    for (t, p) in truth.iter().zip(predicted) {
        let (mut i, mut j) = (0, 0);
        while i < t.len() || j < p.len() {
            if j >= p.len() || (i < t.len() && t[i] < p[j]) {
                counts.fn_[t[i] as usize] += 1;
                i += 1;
            } else if i >= t.len() || p[j] < t[i] {
                counts.fp[p[j] as usize] += 1;
                j += 1;
            } else {
                counts.tp[t[i] as usize] += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Ok(counts)
}

/// Pooled F1: `2·Σtp / (2·Σtp + Σfp + Σfn)`, 0 when the denominator is 0.
pub fn micro_f1(c: &ConfusionCounts) -> f64 {
    let tp: u64 = c.tp.iter().sum();
    let fp: u64 = c.fp.iter().sum();
    let fn_: u64 = c.fn_.iter().sum();
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Per-label F1 with the 0/0 → 0 convention.
pub fn per_label_f1(c: &ConfusionCounts) -> Vec<f64> {
    (0..c.num_labels())
        .map(|l| {
            let denom = 2 * c.tp[l] + c.fp[l] + c.fn_[l];
            if denom == 0 {
                0.0
            } else {
                2.0 * c.tp[l] as f64 / denom as f64
            }
        })
        .collect()
}

/// Mean per-label F1 over the full vocabulary (test-absent labels count
/// as 0).
pub fn macro_f1(c: &ConfusionCounts) -> f64 {
    if c.num_labels() == 0 {
        return 0.0;
    }
    per_label_f1(c).iter().sum::<f64>() / c.num_labels() as f64
}

/// Micro/macro F1 over one subset of labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub num_labels: usize,
    pub micro_f: f64,
    pub macro_f: f64,
}

/// Frequency-bucketed breakdown. Bucket membership comes from label
/// frequencies in the TRAINING split: rare f ≤ lo, mid lo < f < hi,
/// frequent f ≥ hi. Empty buckets are absent, not zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketedReport {
    pub bounds: (u64, u64),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rare: Option<BucketReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mid: Option<BucketReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequent: Option<BucketReport>,
}

fn bucket_of(freq: u64, lo: u64, hi: u64) -> usize {
    if freq <= lo {
        0
    } else if freq < hi {
        1
    } else {
        2
    }
}

fn bucket_metrics(c: &ConfusionCounts, labels: &[usize]) -> Option<BucketReport> {
    if labels.is_empty() {
        return None;
    }
    let sub = ConfusionCounts {
        tp: labels.iter().map(|&l| c.tp[l]).collect(),
        fp: labels.iter().map(|&l| c.fp[l]).collect(),
        fn_: labels.iter().map(|&l| c.fn_[l]).collect(),
    };
    Some(BucketReport { num_labels: labels.len(), micro_f: micro_f1(&sub), macro_f: macro_f1(&sub) })
}

pub fn bucketed_report(
    c: &ConfusionCounts,
    train_frequencies: &[u64],
    bounds: (u64, u64),
) -> Result<BucketedReport> {
    if train_frequencies.len() != c.num_labels() {
        return Err(Error::InvalidParam(format!(
            "{} label frequencies for {} labels",
            train_frequencies.len(),
            c.num_labels()
        )));
    }
    let (lo, hi) = bounds;
    if lo >= hi {
        return Err(Error::InvalidParam(format!("bucket bounds {lo} ≥ {hi}")));
    }
    let mut members: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (l, &f) in train_frequencies.iter().enumerate() {
        members[bucket_of(f, lo, hi)].push(l);
    }
    Ok(BucketedReport {
        bounds,
        rare: bucket_metrics(c, &members[0]),
        mid: bucket_metrics(c, &members[1]),
        frequent: bucket_metrics(c, &members[2]),
    })
}

/// The full per-run evaluation emitted by `evaluate` and the harness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub micro_f: f64,
    pub macro_f: f64,
    pub num_labels: usize,
    pub num_instances: usize,
    pub per_label_f1: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buckets: Option<BucketedReport>,
}

pub fn evaluate(
    truth: &[Vec<u32>],
    predicted: &[Vec<u32>],
    num_labels: usize,
    train_frequencies: Option<&[u64]>,
    bounds: (u64, u64),
) -> Result<EvaluationReport> {
    let counts = confusion(truth, predicted, num_labels)?;
    let buckets = match train_frequencies {
        Some(freqs) => Some(bucketed_report(&counts, freqs, bounds)?),
        None => None,
    };
    Ok(EvaluationReport {
        micro_f: micro_f1(&counts),
        macro_f: macro_f1(&counts),
        num_labels,
        num_instances: truth.len(),
        per_label_f1: per_label_f1(&counts),
        buckets,
    })
}

/// Default frequency-bucket bounds: rare ≤ 70 < mid < 700 ≤ frequent.
pub const DEFAULT_BUCKET_BOUNDS: (u64, u64) = (70, 700);
