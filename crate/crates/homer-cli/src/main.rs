//! `homer` — train, apply and benchmark hierarchy-of-classifiers
//! multi-label models from the command line.
//!
//! Exit codes: 0 ok, 1 internal error, 2 usage/input error, 3 model-data
//! mismatch.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use homer::benchmark::{self, BenchConfig, GridPoint};
use homer::clustering::{self, ClustererKind, LabelVector};
use homer::dataset::{self, LabelVocabulary, LoadOptions};
use homer::eval;
use homer::hierarchy::{self, TreeParams};
use homer::inference::{self, PredictMode};
use homer::learner::{LearnerParams, LossKind};
use homer::model::{self, HomerModel, TrainOptions};
use homer::Error;

#[derive(Parser)]
#[command(name = "homer", version, about = "Multi-label learning over a clustered label hierarchy")]
struct Cli {
    /// Worker threads for training/prediction (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model (hierarchy + per-node linear classifiers).
    Train(TrainArgs),
    /// Predict labels or rankings for a dataset with a trained model.
    Predict(PredictArgs),
    /// Score a predictions file against a ground-truth dataset.
    Evaluate(EvaluateArgs),
    /// Print dataset statistics as JSON.
    Inspect(InspectArgs),
    /// Print a trained model's label tree as JSON.
    InspectTree(InspectTreeArgs),
    /// Cluster the label set once and print the partition.
    Cluster(ClusterArgs),
    /// Run the BR-vs-hierarchy benchmark grid from a config file.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset (svmlight-style multi-label text).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Output model path (JSON).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Label-name sidecar (one name per line, order = ids).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Train flat binary relevance (single-node tree) instead of a hierarchy.
    #[arg(long)]
    flat_br: bool,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    nmax: Option<usize>,
    /// Clustering passes per node.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// balanced-kmeans | kmeans
    #[arg(long)]
    clusterer: Option<String>,
    /// L2 regularization strength.
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// logistic | hinge
    #[arg(long)]
    loss: Option<String>,
    /// Derive node training sets from the parent (more memory, less time).
    #[arg(long)]
    cache_node_data: bool,
    /// key=value config file; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input dataset; labels may be absent.
    #[arg(long)]
    input: PathBuf,
    /// Output file (default stdout). One line per instance, input order.
    #[arg(long)]
    output: Option<PathBuf>,
    /// bipartition | ranking
    #[arg(long, default_value = "bipartition")]
    mode: String,
    /// Prune low-probability paths in ranking mode.
    #[arg(long)]
    prune: bool,
    /// Ranking mode: keep at most this many labels per line.
    #[arg(long, default_value_t = 20)]
    top: usize,
    /// Ranking mode: drop zero-scored labels from the output.
    #[arg(long)]
    omit_zeros: bool,
    /// Label-name sidecar for the input; must digest-match the model.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth dataset.
    #[arg(long)]
    truth: PathBuf,
    /// Predictions file from `predict` (bipartition format).
    #[arg(long)]
    predictions: PathBuf,
    /// Take the label vocabulary from this model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Label-name sidecar as the vocabulary.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Training dataset for frequency buckets.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Bucket bounds LO,HI (rare ≤ LO < mid < HI ≤ frequent).
    #[arg(long, default_value = "70,700")]
    bucket_bounds: String,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Accept unlabeled instances.
    #[arg(long)]
    test_mode: bool,
}

#[derive(Args)]
struct InspectTreeArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "balanced-kmeans")]
    clusterer: String,
    /// Emit the partition as JSON `[[label ids...], ...]` on stdout.
    #[arg(long)]
    dump: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// key=value config file (train, test, k_values, nmax_values, ...).
    #[arg(long)]
    config: PathBuf,
    /// Report directory (report.json, report.md, sweep CSVs).
    #[arg(long, default_value = "bench-out")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: failed to configure {} threads: {e}", cli.threads);
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Parse { .. } | Error::InvalidParam(_) | Error::NoInstances => 2,
        Error::Mismatch(_) | Error::UnsupportedVersion { .. } => 3,
        _ => 1,
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Inspect(args) => cmd_inspect(args),
        Command::InspectTree(args) => cmd_inspect_tree(args),
        Command::Cluster(args) => cmd_cluster(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

/// Flat `key = value` config file; `#` comments. Values keep their raw
/// text, callers parse.
fn read_config(path: &Path) -> Result<BTreeMap<String, String>, Error> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: no + 1,
            message: "expected `key = value`".into(),
        })?;
        map.insert(key.trim().to_owned(), value.trim().to_owned());
    }
    Ok(map)
}

trait ConfigExt {
    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Error>;
    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, Error>;
}

impl ConfigExt for BTreeMap<String, String> {
    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::InvalidParam(format!("config `{key}`: bad value `{raw}`"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, Error> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|tok| tok.trim().parse::<T>())
                .collect::<Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| Error::InvalidParam(format!("config `{key}`: bad list `{raw}`"))),
        }
    }
}

fn load_vocab(path: &Option<PathBuf>) -> Result<Option<LabelVocabulary>, Error> {
    match path {
        Some(p) => Ok(Some(LabelVocabulary::load(p)?)),
        None => Ok(None),
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let file = match &args.config {
        Some(p) => read_config(p)?,
        None => BTreeMap::new(),
    };
    let train_path = args
        .train
        .or_else(|| file.get("train").map(PathBuf::from))
        .ok_or_else(|| Error::InvalidParam("--train is required".into()))?;
    let model_path = args
        .model
        .or_else(|| file.get("model").map(PathBuf::from))
        .ok_or_else(|| Error::InvalidParam("--model is required".into()))?;
    let labels_path = args.labels.or_else(|| file.get("labels").map(PathBuf::from));

    let k = args.k.or(file.parsed("k")?).unwrap_or(3);
    let nmax = args.nmax.or(file.parsed("nmax")?).unwrap_or(20);
    let iterations = args.iterations.or(file.parsed("iterations")?).unwrap_or(3);
    let seed = args.seed.or(file.parsed("seed")?).unwrap_or(0);
    let clusterer: ClustererKind = args
        .clusterer
        .or_else(|| file.get("clusterer").cloned())
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(ClustererKind::BalancedKMeans);
    let flat_br = args.flat_br || file.parsed("flat_br")?.unwrap_or(false);
    let learner = LearnerParams {
        l2: args.l2.or(file.parsed("l2")?).unwrap_or(1e-4),
        epochs: args.epochs.or(file.parsed("epochs")?).unwrap_or(100),
        loss: args
            .loss
            .or_else(|| file.get("loss").cloned())
            .map(|s| s.parse())
            .transpose()?
            .unwrap_or(LossKind::Logistic),
    };

    let vocab = load_vocab(&labels_path)?;
    let train = dataset::load_dataset(&train_path, &LoadOptions { vocab, ..Default::default() })?;

    let model = if flat_br {
        model::train_flat_br(&train, &learner)?
    } else {
        let params = TreeParams { k, nmax, iterations, seed, clusterer };
        let tree = hierarchy::build_hierarchy(&train, params)?;
        model::train_homer(
            &train,
            &tree,
            &learner,
            TrainOptions { cache_node_data: args.cache_node_data },
        )?
    };
    model.save(&model_path)?;
    eprintln!(
        "trained {} nodes over {} labels / {} instances in {:.2}s; model: {}",
        model.tree.num_nodes(),
        model.num_labels(),
        train.instances.len(),
        model.telemetry.train_seconds,
        model_path.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), Error> {
    let mode: PredictMode = args.mode.parse()?;
    let model = HomerModel::load(&args.model)?;
    if let Some(vocab) = load_vocab(&args.labels)? {
        if model::vocab_sha256(&vocab) != model.vocab_sha256() {
            return Err(Error::Mismatch(
                "label sidecar digest differs from the model vocabulary".into(),
            ));
        }
    }
    let input = dataset::load_dataset(
        &args.input,
        &LoadOptions {
            allow_unlabeled: true,
            vocab: Some(model.vocab.clone()),
            ..Default::default()
        },
    )?;
    if input.num_features != model.num_features && !input.instances.is_empty() {
        // header-declared spaces must agree; headerless files are sized by
        // their max feature id and may be narrower than the model
        if input.num_features > model.num_features {
            let max_used = input
                .instances
                .iter()
                .flat_map(|i| i.features.iter().map(|&(id, _)| id as usize))
                .max()
                .unwrap_or(0);
            if max_used >= model.num_features {
                eprintln!(
                    "warning: input uses feature ids up to {max_used}, model has {}; extra features are ignored",
                    model.num_features
                );
            }
        }
    }

    let mut out: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    };
    let mut ignored_total = 0usize;
    match mode {
        PredictMode::Bipartition => {
            for inst in &input.instances {
                let p = inference::predict_bipartition(&model, &inst.features);
                ignored_total += p.ignored_features;
                let names: Vec<&str> = p
                    .labels
                    .iter()
                    .map(|&l| model.vocab.name(l).unwrap_or("?"))
                    .collect();
                writeln!(out, "{}", names.join(","))?;
            }
        }
        PredictMode::Ranking => {
            for inst in &input.instances {
                let p = inference::predict_ranking(&model, &inst.features, args.prune);
                ignored_total += p.ignored_features;
                let mut first = true;
                for &(l, s) in p.ranking.iter().take(args.top) {
                    if args.omit_zeros && s == 0.0 {
                        continue;
                    }
                    if !first {
                        write!(out, " ")?;
                    }
                    write!(out, "{}:{s:.6}", model.vocab.name(l).unwrap_or("?"))?;
                    first = false;
                }
                writeln!(out)?;
            }
        }
    }
    out.flush()?;
    if ignored_total > 0 {
        eprintln!("warning: ignored {ignored_total} feature occurrences outside the model's feature space");
    }
    Ok(())
}

/// Reads a bipartition predictions file: one comma-separated label-name
/// list per line (empty line = empty set).
fn read_predictions(
    path: &Path,
    vocab: &mut LabelVocabulary,
    frozen: bool,
) -> Result<Vec<Vec<u32>>, Error> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let mut row = Vec::new();
        for tok in line.trim().split(',') {
            let tok = tok.trim();
            if tok.is_empty() {
                continue;
            }
            let id = if frozen {
                vocab.id(tok).ok_or_else(|| {
                    Error::Mismatch(format!(
                        "predicted label `{tok}` (line {}) not in the vocabulary",
                        no + 1
                    ))
                })?
            } else {
                vocab.intern(tok)
            };
            row.push(id);
        }
        row.sort_unstable();
        row.dedup();
        rows.push(row);
    }
    Ok(rows)
}

fn parse_bounds(raw: &str) -> Result<(u64, u64), Error> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidParam(format!("bucket bounds `{raw}`: expected LO,HI")));
    }
    let lo = parts[0].trim().parse().map_err(|_| Error::InvalidParam(format!("bad bound `{}`", parts[0])))?;
    let hi = parts[1].trim().parse().map_err(|_| Error::InvalidParam(format!("bad bound `{}`", parts[1])))?;
    Ok((lo, hi))
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let bounds = parse_bounds(&args.bucket_bounds)?;
    let (mut vocab, frozen) = if let Some(model_path) = &args.model {
        (HomerModel::load(model_path)?.vocab, true)
    } else if let Some(labels) = &args.labels {
        (LabelVocabulary::load(labels)?, true)
    } else {
        (LabelVocabulary::new(), false)
    };

    let truth_opts = LoadOptions {
        allow_unlabeled: true,
        vocab: if frozen { Some(vocab.clone()) } else { None },
        ..Default::default()
    };
    let truth_ds = dataset::load_dataset(&args.truth, &truth_opts)?;
    if !frozen {
        vocab = truth_ds.vocab.clone();
    }
    let predictions = read_predictions(&args.predictions, &mut vocab, frozen)?;
    if predictions.len() != truth_ds.instances.len() {
        return Err(Error::InvalidParam(format!(
            "{} prediction lines vs {} truth instances",
            predictions.len(),
            truth_ds.instances.len()
        )));
    }
    let truth: Vec<Vec<u32>> = truth_ds.instances.iter().map(|i| i.labels.clone()).collect();

    let frequencies = match &args.train {
        Some(train_path) => {
            let train = dataset::load_dataset(
                train_path,
                &LoadOptions { vocab: Some(vocab.clone()), ..Default::default() },
            )?;
            Some(dataset::label_frequencies(&train))
        }
        None => None,
    };
    let report =
        eval::evaluate(&truth, &predictions, vocab.len(), frequencies.as_deref(), bounds)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Other(e.to_string()))?);
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<(), Error> {
    let vocab = load_vocab(&args.labels)?;
    let ds = dataset::load_dataset(
        &args.input,
        &LoadOptions { allow_unlabeled: args.test_mode, vocab, ..Default::default() },
    )?;
    let stats = dataset::compute_stats(&ds);
    println!("{}", serde_json::to_string_pretty(&stats).map_err(|e| Error::Other(e.to_string()))?);
    Ok(())
}

fn cmd_inspect_tree(args: InspectTreeArgs) -> Result<(), Error> {
    let model = HomerModel::load(&args.model)?;
    let nodes: Vec<serde_json::Value> = model
        .tree
        .nodes
        .iter()
        .map(|n| {
            let names: Vec<&str> =
                n.labels.iter().map(|&l| model.vocab.name(l).unwrap_or("?")).collect();
            serde_json::json!({
                "id": n.id,
                "depth": n.depth,
                "labels": names,
                "children": n.children,
                "n_train": model.telemetry.node_train_sizes.get(n.id),
            })
        })
        .collect();
    let doc = serde_json::json!({
        "schema_version": 1,
        "root": model.tree.root,
        "params": model.tree.params,
        "num_nodes": model.tree.num_nodes(),
        "depth": model.tree.depth(),
        "nodes": nodes,
    });
    println!("{}", serde_json::to_string_pretty(&doc).map_err(|e| Error::Other(e.to_string()))?);
    Ok(())
}

fn cmd_cluster(args: ClusterArgs) -> Result<(), Error> {
    let kind: ClustererKind = args.clusterer.parse()?;
    let vocab = load_vocab(&args.labels)?;
    let ds = dataset::load_dataset(&args.input, &LoadOptions { vocab, ..Default::default() })?;
    let points = LabelVector::from_dataset(&ds);
    let clustering = clustering::cluster(kind, &points, args.k, args.iterations, args.seed)?;
    if args.dump {
        println!(
            "{}",
            serde_json::to_string(&clustering.assignments)
                .map_err(|e| Error::Other(e.to_string()))?
        );
    } else {
        let sizes: Vec<usize> = clustering.assignments.iter().map(Vec::len).collect();
        eprintln!(
            "clustered {} labels into {} clusters (sizes {:?}, cap {})",
            ds.vocab.len(),
            args.k,
            sizes,
            ds.vocab.len().div_ceil(args.k)
        );
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Error> {
    let file = read_config(&args.config)?;
    let train_path: PathBuf = file
        .get("train")
        .map(PathBuf::from)
        .ok_or_else(|| Error::InvalidParam("bench config needs `train = <path>`".into()))?;
    let test_path: PathBuf = file
        .get("test")
        .map(PathBuf::from)
        .ok_or_else(|| Error::InvalidParam("bench config needs `test = <path>`".into()))?;
    let labels_path = file.get("labels").map(PathBuf::from);

    let vocab = load_vocab(&labels_path)?;
    let train = dataset::load_dataset(
        &train_path,
        &LoadOptions { vocab: vocab.clone(), ..Default::default() },
    )?;
    let test = dataset::load_dataset(
        &test_path,
        &LoadOptions {
            allow_unlabeled: true,
            vocab: Some(train.vocab.clone()),
            ..Default::default()
        },
    )?;

    let k_values: Vec<usize> = file.list("k_values")?.unwrap_or_else(|| vec![3]);
    let nmax_values: Vec<usize> = file.list("nmax_values")?.unwrap_or_else(|| vec![20]);
    let clusterers: Vec<ClustererKind> = match file.get("clusterers") {
        Some(raw) => raw
            .split(',')
            .map(|tok| tok.trim().parse())
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![ClustererKind::BalancedKMeans],
    };
    let include_br = file.parsed("include_br")?.unwrap_or(true);
    let iterations = file.parsed("iterations")?.unwrap_or(3);

    let mut grid = Vec::new();
    if include_br {
        grid.push(GridPoint::FlatBr);
    }
    for &clusterer in &clusterers {
        for &k in &k_values {
            for &nmax in &nmax_values {
                grid.push(GridPoint::Homer { k, nmax, clusterer, iterations });
            }
        }
    }

    let cfg = BenchConfig {
        grid,
        seeds: file.list("seeds")?.unwrap_or_else(|| vec![0, 1, 2]),
        learner: LearnerParams {
            l2: file.parsed("l2")?.unwrap_or(1e-4),
            epochs: file.parsed("epochs")?.unwrap_or(100),
            loss: file
                .get("loss")
                .map(|s| s.parse())
                .transpose()?
                .unwrap_or(LossKind::Logistic),
        },
        mode: file
            .get("mode")
            .map(|s| s.parse())
            .transpose()?
            .unwrap_or(PredictMode::Bipartition),
        prune: file.parsed("prune")?.unwrap_or(false),
        bucket_bounds: match file.get("bucket_bounds") {
            Some(raw) => parse_bounds(raw)?,
            None => eval::DEFAULT_BUCKET_BOUNDS,
        },
        cache_node_data: file.parsed("cache_node_data")?.unwrap_or(false),
    };

    let report = benchmark::run_benchmark(&cfg, &train, &test);
    fs::create_dir_all(&args.out_dir)?;
    fs::write(args.out_dir.join("report.json"), report.to_json())?;
    fs::write(args.out_dir.join("report.md"), report.to_markdown())?;
    fs::write(args.out_dir.join("k_sweep.csv"), report.k_sweep_csv())?;
    fs::write(args.out_dir.join("nmax_sweep.csv"), report.nmax_sweep_csv())?;
    eprintln!(
        "benchmark finished: {} grid points × {} seeds → {}",
        report.rows.len(),
        cfg.seeds.len(),
        args.out_dir.display()
    );
    for err_row in report.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("  grid point failed: {:?}: {}", err_row.params, err_row.error.as_ref().unwrap());
    }
    Ok(())
}
