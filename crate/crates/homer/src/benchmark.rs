//! Benchmark harness: trains flat binary relevance and a grid of
//! hierarchy configurations over the same corpus, evaluates both and emits
//! JSON, markdown and sweep-CSV reports.
//!
//! Metric values are deterministic for fixed seeds; wall-clock columns are
//! reported in JSON/markdown but never written to the CSV series, which
//! must be identical across reruns.

use std::fmt::Write as _;

use serde::Serialize;

use crate::clustering::ClustererKind;
use crate::dataset::{self, MultiLabelDataset};
use crate::error::Result;
use crate::eval::{self, BucketedReport};
use crate::hierarchy::{self, TreeParams};
use crate::inference::{self, PredictMode};
use crate::learner::LearnerParams;
use crate::model::{self, TrainOptions};
use crate::timing::Stopwatch;

/// One grid point: either the flat baseline or a hierarchy configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum GridPoint {
    FlatBr,
    Homer { k: usize, nmax: usize, clusterer: ClustererKind, iterations: usize },
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub grid: Vec<GridPoint>,
    pub seeds: Vec<u64>,
    pub learner: LearnerParams,
    pub mode: PredictMode,
    pub prune: bool,
    pub bucket_bounds: (u64, u64),
    pub cache_node_data: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            grid: vec![GridPoint::FlatBr],
            seeds: vec![0, 1, 2],
            learner: LearnerParams::default(),
            mode: PredictMode::Bipartition,
            prune: false,
            bucket_bounds: eval::DEFAULT_BUCKET_BOUNDS,
            cache_node_data: false,
        }
    }
}

/// Aggregated outcome of one grid point over all seeds.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    #[serde(flatten)]
    pub params: GridPoint,
    pub micro_f: f64,
    pub micro_f_std: f64,
    pub macro_f: f64,
    pub macro_f_std: f64,
    pub train_s: f64,
    pub predict_s: f64,
    /// Tree size; 1 for the flat baseline.
    pub nodes: usize,
    #[serde(rename = "mean_Dn_nonleaf", skip_serializing_if = "Option::is_none")]
    pub mean_dn_nonleaf: Option<f64>,
    #[serde(rename = "mean_Dn_leaf", skip_serializing_if = "Option::is_none")]
    pub mean_dn_leaf: Option<f64>,
    pub mean_nodes_visited: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buckets: Option<BucketedReport>,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub rows: Vec<BenchRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Metrics of one (grid point, seed) run.
struct SingleRun {
    micro: f64,
    macro_: f64,
    train_s: f64,
    predict_s: f64,
    nodes: usize,
    mean_dn_nonleaf: Option<f64>,
    mean_dn_leaf: Option<f64>,
    mean_nodes_visited: f64,
    buckets: Option<BucketedReport>,
}

fn run_single(
    point: GridPoint,
    seed: u64,
    train: &MultiLabelDataset,
    test: &MultiLabelDataset,
    cfg: &BenchConfig,
) -> Result<SingleRun> {
    let watch = Stopwatch::start();
    let model = match point {
        GridPoint::FlatBr => model::train_flat_br(train, &cfg.learner)?,
        GridPoint::Homer { k, nmax, clusterer, iterations } => {
            let tree_params = TreeParams { k, nmax, iterations, seed, clusterer };
            let tree = hierarchy::build_hierarchy(train, tree_params)?;
            model::train_homer(
                train,
                &tree,
                &cfg.learner,
                TrainOptions { cache_node_data: cfg.cache_node_data },
            )?
        }
    };
    let train_s = watch.elapsed_secs();

    let watch = Stopwatch::start();
    let truth: Vec<Vec<u32>> = test.instances.iter().map(|i| i.labels.clone()).collect();
    let predicted: Vec<Vec<u32>> = predict_all(&model, test, cfg.mode, cfg.prune);
    let predict_s = watch.elapsed_secs();

    let freqs = dataset::label_frequencies(train);
    let report =
        eval::evaluate(&truth, &predicted, train.vocab.len(), Some(&freqs), cfg.bucket_bounds)?;
    let traversal = inference::traversal_stats(&model, test);

    Ok(SingleRun {
        micro: report.micro_f,
        macro_: report.macro_f,
        train_s,
        predict_s,
        nodes: model.tree.num_nodes(),
        mean_dn_nonleaf: model.mean_dn_nonleaf(),
        mean_dn_leaf: model.mean_dn_leaf(),
        mean_nodes_visited: traversal.mean_nodes_visited,
        buckets: report.buckets,
    })
}

/// Predictions for every test instance, in input order.
pub fn predict_all(
    model: &model::HomerModel,
    test: &MultiLabelDataset,
    mode: PredictMode,
    prune: bool,
) -> Vec<Vec<u32>> {
    let one = |inst: &crate::dataset::SparseInstance| match mode {
        PredictMode::Bipartition => inference::predict_bipartition(model, &inst.features).labels,
        PredictMode::Ranking => {
            let p = inference::predict_ranking(model, &inst.features, prune);
            let mut labels: Vec<u32> = p
                .ranking
                .iter()
                .filter(|&&(_, s)| s >= 0.5)
                .map(|&(l, _)| l)
                .collect();
            labels.sort_unstable();
            labels
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        test.instances.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        test.instances.iter().map(one).collect()
    }
}

/// Runs the whole grid. A failing grid point becomes a row carrying its
/// error instead of aborting the run.
pub fn run_benchmark(
    cfg: &BenchConfig,
    train: &MultiLabelDataset,
    test: &MultiLabelDataset,
) -> BenchReport {
    let mut rows = Vec::with_capacity(cfg.grid.len());
    for &point in &cfg.grid {
        let mut micros = Vec::new();
        let mut macros = Vec::new();
        let mut train_s = Vec::new();
        let mut predict_s = Vec::new();
        let mut visited = Vec::new();
        let mut last: Option<SingleRun> = None;
        let mut error: Option<String> = None;
        for &seed in &cfg.seeds {
            match run_single(point, seed, train, test, cfg) {
                Ok(run) => {
                    micros.push(run.micro);
                    macros.push(run.macro_);
                    train_s.push(run.train_s);
                    predict_s.push(run.predict_s);
                    visited.push(run.mean_nodes_visited);
                    last = Some(run);
                }
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        let (micro_mean, micro_std) = mean_std(&micros);
        let (macro_mean, macro_std) = mean_std(&macros);
        rows.push(BenchRow {
            params: point,
            micro_f: micro_mean,
            micro_f_std: micro_std,
            macro_f: macro_mean,
            macro_f_std: macro_std,
            train_s: mean_std(&train_s).0,
            predict_s: mean_std(&predict_s).0,
            nodes: last.as_ref().map_or(0, |r| r.nodes),
            mean_dn_nonleaf: last.as_ref().and_then(|r| r.mean_dn_nonleaf),
            mean_dn_leaf: last.as_ref().and_then(|r| r.mean_dn_leaf),
            mean_nodes_visited: mean_std(&visited).0,
            buckets: last.and_then(|r| r.buckets),
            seeds: cfg.seeds.clone(),
            error,
        });
    }
    BenchReport { schema_version: 1, rows }
}

impl BenchRow {
    fn method_name(&self) -> String {
        match self.params {
            GridPoint::FlatBr => "BR".to_owned(),
            GridPoint::Homer { .. } => "HOMER-BR".to_owned(),
        }
    }

    fn params_name(&self) -> String {
        match self.params {
            GridPoint::FlatBr => String::new(),
            GridPoint::Homer { k, nmax, clusterer, .. } => {
                format!("{clusterer} ({k}, {nmax})")
            }
        }
    }
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Markdown table with the usual column order: method, clusterer
    /// parameters, both F measures, durations, corpus telemetry, nodes.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "| Method | Clusterer | Micro-F | Macro-F | Train (s) | Predict (s) | mean |D_NL| + |D_L| | Nodes |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for row in &self.rows {
            if let Some(err) = &row.error {
                let _ = writeln!(out, "| {} | {} | error: {err} | | | | | |", row.method_name(), row.params_name());
                continue;
            }
            let dn = match (row.mean_dn_nonleaf, row.mean_dn_leaf) {
                (Some(nl), Some(l)) => format!("{nl:.1}+{l:.1}"),
                (None, Some(l)) => format!("{l:.1}"),
                (Some(nl), None) => format!("{nl:.1}"),
                (None, None) => String::new(),
            };
            let _ = writeln!(
                out,
                "| {} | {} | {:.5} | {:.5} | {:.2} | {:.2} | {} | {} |",
                row.method_name(),
                row.params_name(),
                row.micro_f,
                row.macro_f,
                row.train_s,
                row.predict_s,
                dn,
                row.nodes
            );
        }
        out
    }

    /// CSV series for a k sweep: one row per HOMER grid point plus the BR
    /// baseline, metric columns only (reruns must be byte-identical).
    pub fn k_sweep_csv(&self) -> String {
        let mut out = String::from("method,k,micro_f,macro_f\n");
        for row in &self.rows {
            if row.error.is_some() {
                continue;
            }
            match row.params {
                GridPoint::FlatBr => {
                    let _ = writeln!(out, "BR,,{:.6},{:.6}", row.micro_f, row.macro_f);
                }
                GridPoint::Homer { k, .. } => {
                    let _ = writeln!(out, "HOMER-BR,{k},{:.6},{:.6}", row.micro_f, row.macro_f);
                }
            }
        }
        out
    }

    /// CSV series for an nmax sweep, same shape as [`Self::k_sweep_csv`].
    pub fn nmax_sweep_csv(&self) -> String {
        let mut out = String::from("method,nmax,micro_f,macro_f\n");
        for row in &self.rows {
            if row.error.is_some() {
                continue;
            }
            match row.params {
                GridPoint::FlatBr => {
                    let _ = writeln!(out, "BR,,{:.6},{:.6}", row.micro_f, row.macro_f);
                }
                GridPoint::Homer { nmax, .. } => {
                    let _ =
                        writeln!(out, "HOMER-BR,{nmax},{:.6},{:.6}", row.micro_f, row.macro_f);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn br_only_grid_gives_single_row() {
        let train = synth::random_corpus(6, 60, 1);
        let test = synth::random_corpus(6, 20, 2);
        let cfg = BenchConfig { seeds: vec![0], ..Default::default() };
        let report = run_benchmark(&cfg, &train, &test);
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].error.is_none());
        assert_eq!(report.rows[0].nodes, 1);
    }

    #[test]
    fn k_sweep_has_baseline_and_homer_rows() {
        let p = synth::GroupedParams {
            groups: 3,
            labels_per_group: 4,
            train_per_group: 20,
            test_per_group: 8,
            seed: 5,
        };
        let (train, test) = synth::grouped_corpus(p);
        let mut grid = vec![GridPoint::FlatBr];
        for k in [2, 3] {
            grid.push(GridPoint::Homer {
                k,
                nmax: 4,
                clusterer: ClustererKind::BalancedKMeans,
                iterations: 3,
            });
        }
        let cfg = BenchConfig { grid, seeds: vec![0], ..Default::default() };
        let report = run_benchmark(&cfg, &train, &test);
        assert_eq!(report.rows.len(), 3);
        let csv = report.k_sweep_csv();
        assert!(csv.starts_with("method,k,"));
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.contains("\nBR,,"));
    }

    #[test]
    fn rerun_with_same_seeds_is_metric_identical() {
        let train = synth::random_corpus(5, 50, 7);
        let test = synth::random_corpus(5, 20, 8);
        let grid = vec![
            GridPoint::FlatBr,
            GridPoint::Homer {
                k: 2,
                nmax: 2,
                clusterer: ClustererKind::BalancedKMeans,
                iterations: 2,
            },
        ];
        let cfg = BenchConfig { grid, seeds: vec![0, 1], ..Default::default() };
        let a = run_benchmark(&cfg, &train, &test);
        let b = run_benchmark(&cfg, &train, &test);
        assert_eq!(a.k_sweep_csv(), b.k_sweep_csv());
        assert_eq!(a.nmax_sweep_csv(), b.nmax_sweep_csv());
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.micro_f, y.micro_f);
            assert_eq!(x.macro_f, y.macro_f);
        }
    }

    #[test]
    fn failing_grid_point_records_error_and_continues() {
        let train = synth::random_corpus(4, 30, 3);
        let test = synth::random_corpus(4, 10, 4);
        let grid = vec![
            GridPoint::Homer {
                k: 40, // more clusters than labels: clamped k still needs k ≥ 2 labels... valid
                nmax: 1,
                clusterer: ClustererKind::BalancedKMeans,
                iterations: 1,
            },
            GridPoint::Homer {
                k: 1, // invalid: k must be ≥ 2
                nmax: 1,
                clusterer: ClustererKind::BalancedKMeans,
                iterations: 1,
            },
            GridPoint::FlatBr,
        ];
        let cfg = BenchConfig { grid, seeds: vec![0], ..Default::default() };
        let report = run_benchmark(&cfg, &train, &test);
        assert_eq!(report.rows.len(), 3);
        assert!(report.rows[0].error.is_none());
        assert!(report.rows[1].error.is_some());
        assert!(report.rows[2].error.is_none());
        let md = report.to_markdown();
        assert!(md.contains("error:"));
    }
}
