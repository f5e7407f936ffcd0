//! Command-line front end. Every command reads a [`RunConfig`], applies flag
//! overrides, and writes CSV/JSON artifacts into the output directory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

pub mod config;
pub mod piecewise;

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;

use crate::centroids::Centroids;
use crate::datasets::{self, LabeledPoints, SignalInstance};
use crate::error::{Error, Result};
use crate::graph::{WeightScheme, WeightedGraph};
use crate::losses::LossSpec;
use crate::path::{
    adjusted_rand_index, extract_partition, gamma_path, k_path, midpoint_init, partition_relation, Partition,
    PathOptions, PathResult, Relation,
};
use crate::solver::{
    nl_certificate, solve_nl, solve_ntl, stationarity_check, validate_convergence_params, write_trace_csv,
    ConvergenceParams, NlCertificate, PenaltyKind, RhoSchedule, SolverConfig, SolverInit, StationarityOptions,
    StationarityReport, StopReason, XUpdate,
};
use crate::thresholds::{
    clustering_threshold, exact_penalty_threshold, quadratic_threshold, recovery_interval_cc,
    recovery_interval_with_alpha, strongly_convex_threshold, ClusteringInterval, PenaltyThreshold, RecoveryReport,
};

pub use config::{RunConfig, Task};
use config::{DataKind, GammaRule, GraphKind, InitPolicy, LossKind, Weights, XUpdateChoice};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "netlasso", version, about = "Network Lasso and Network Trimmed Lasso")]
pub struct Cli {
    /// Task to run; overrides `task` in the config file.
    #[arg(value_enum)]
    pub task: Option<Task>,
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(short = 'k', long = "k")]
    pub k: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Number of generated data points.
    #[arg(short, long)]
    pub n: Option<usize>,
}

/// Parses arguments, runs the task, and returns the process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match resolve_config(&cli).and_then(|cfg| execute(&cfg)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_toml(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    if cli.task.is_some() {
        cfg.task = cli.task;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(g) = cli.gamma {
        cfg.solver.gamma = Some(g);
        cfg.solver.gamma_rule = None;
    }
    if let Some(k) = cli.k {
        cfg.solver.k = k;
    }
    if let Some(r) = cli.rho {
        cfg.solver.rho = Some(r);
    }
    if let Some(m) = cli.max_iters {
        cfg.solver.max_iters = m;
    }
    if let Some(n) = cli.n {
        cfg.data.n = n;
    }
    Ok(cfg)
}

/// Runs the configured task.
pub fn execute(cfg: &RunConfig) -> Result<()> {
    let task = cfg.task.ok_or_else(|| Error::param("no task given"))?;
    fs::create_dir_all(&cfg.output_dir)?;
    write_text(&cfg.output_dir, "config.toml", &cfg.to_toml()?)?;
    match task {
        Task::GenData => cmd_gen_data(cfg),
        Task::SolveNl | Task::SolveNtl => cmd_solve(cfg, task),
        Task::KPath | Task::GammaPath => cmd_path(cfg, task),
        Task::Thresholds => cmd_thresholds(cfg),
        Task::RecoveryCheck => cmd_recovery_check(cfg),
        Task::Metrics => cmd_metrics(cfg),
        Task::Piecewise => cmd_piecewise(cfg),
    }
}

struct Loaded {
    data: LabeledPoints<f64>,
    signal: Option<SignalInstance<f64>>,
}

fn load_data(cfg: &RunConfig) -> Result<Loaded> {
    let d = &cfg.data;
    let mut signal = None;
    let mut data = match d.kind {
        DataKind::HalfMoons => datasets::gen_half_moons(d.n, d.noise_sd, cfg.seed)?,
        DataKind::TwoLine => datasets::gen_two_line_regression(
            d.n,
            d.slopes,
            d.intercepts,
            (d.x_range[0], d.x_range[1]),
            d.noise_sd,
            cfg.seed,
        )?,
        DataKind::Signal => {
            let levels = d.levels.clone().unwrap_or_else(|| datasets::default_levels(d.n));
            let s = datasets::gen_piecewise_signal(d.n, &levels, d.noise_sd, cfg.seed)?;
            let segment: Vec<usize> = levels.iter().enumerate().flat_map(|(i, l)| std::iter::repeat_n(i, l.0)).collect();
            let rows: Vec<Vec<f64>> = s.noisy.iter().map(|&v| vec![v]).collect();
            let data = LabeledPoints::new(Centroids::from_rows(&rows)?, Some(Partition::from_raw(&segment)))?;
            signal = Some(s);
            data
        }
        DataKind::Csv => {
            let file = d.file.as_ref().ok_or_else(|| Error::param("csv data needs data.file"))?;
            datasets::load_csv(file, d.has_labels)?
        }
    };
    if let Some(r) = d.resample {
        if signal.is_some() {
            return Err(Error::param("resampling a signal breaks its ordering"));
        }
        data = datasets::resample(&data, r, cfg.seed)?;
    }
    Ok(Loaded { data, signal })
}

fn build_losses(cfg: &RunConfig, data: &LabeledPoints<f64>) -> Result<LossSpec<f64>> {
    match cfg.loss.kind {
        LossKind::SquaredDistance => LossSpec::squared_distance(&data.points.to_rows()),
        LossKind::Ridge => {
            if data.points.p() != 2 {
                return Err(Error::param("ridge losses need two data columns (a, b)"));
            }
            LossSpec::ridge(data.column(0), data.column(1), cfg.loss.eps)
        }
    }
}

fn build_graph(cfg: &RunConfig, data: &LabeledPoints<f64>) -> Result<WeightedGraph<f64>> {
    let g = &cfg.graph;
    let rows = data.points.to_rows();
    let scheme = match g.weights {
        Weights::Uniform => WeightScheme::Uniform,
        Weights::Gaussian => WeightScheme::Gaussian { points: &rows, alpha: g.alpha },
    };
    let n = data.n();
    match g.kind {
        GraphKind::Complete => WeightedGraph::complete(n, scheme),
        GraphKind::Knn => WeightedGraph::knn_gaussian(&rows, g.k, g.alpha),
        GraphKind::Path => {
            let path = WeightedGraph::path(n)?;
            match scheme {
                WeightScheme::Uniform => Ok(path),
                WeightScheme::Gaussian { .. } => WeightedGraph::new(
                    n,
                    path.edges().iter().map(|&(i, j)| (i, j, crate::graph::gaussian_weight(&rows[i], &rows[j], g.alpha))),
                ),
            }
        }
        GraphKind::EdgeList => {
            let file = g.file.as_ref().ok_or_else(|| Error::param("edge-list graph needs graph.file"))?;
            WeightedGraph::from_edge_list(&fs::read_to_string(file)?, Some(n))
        }
    }
}

fn resolve_gamma(cfg: &RunConfig, losses: &LossSpec<f64>) -> Result<f64> {
    if let Some(g) = cfg.solver.gamma {
        return Ok(g);
    }
    match cfg.solver.gamma_rule {
        Some(GammaRule::ThreeNC) => {
            let t = clustering_threshold(losses)?;
            Ok(t.three_n_c.expect("clustering threshold") * 1.001)
        }
        Some(GammaRule::ExactPenalty) => {
            let t = if losses.is_quadratic() { quadratic_threshold(losses)? } else { strongly_convex_threshold(losses)? };
            Ok(t.gamma_star * 1.001)
        }
        None => Err(Error::param("set solver.gamma or solver.gamma_rule")),
    }
}

fn solver_config(
    cfg: &RunConfig,
    trimmed: bool,
    gamma: f64,
    losses: &LossSpec<f64>,
    graph: &WeightedGraph<f64>,
) -> SolverConfig<f64> {
    let s = &cfg.solver;
    let mut c = if trimmed { SolverConfig::ntl(gamma, s.k) } else { SolverConfig::nl(gamma) };
    if let Some(r) = s.rho {
        c.rho = r;
    }
    c = c.with_tolerances(s.eps_abs, s.eps_rel).with_max_iters(s.max_iters);
    c.x_update = match s.x_update {
        XUpdateChoice::Auto => XUpdate::Auto,
        XUpdateChoice::Exact => XUpdate::Exact,
        XUpdateChoice::Linearized => XUpdate::Linearized,
    };
    c.lipschitz = s.lipschitz;
    if let Some(sch) = &s.rho_schedule {
        let cap = sch.cap.unwrap_or_else(|| {
            let sigma = graph.difference_operator(losses.p()).sigma_min_ddt();
            RhoSchedule::tenfold(sigma).cap
        });
        c = c.with_rho_schedule(RhoSchedule { multiplier: sch.multiplier, period: sch.period, cap });
    }
    c
}

fn gamma_sequence(cfg: &RunConfig) -> Vec<f64> {
    let p = &cfg.path;
    p.gammas
        .clone()
        .unwrap_or_else(|| piecewise::geometric(p.gamma_start, p.gamma_ratio, p.gamma_count))
}

fn k_sequence(cfg: &RunConfig, m: usize) -> Result<Vec<usize>> {
    let p = &cfg.path;
    if let Some(v) = &p.k_values {
        return Ok(v.clone());
    }
    if p.k_step == 0 {
        return Err(Error::param("path.k_step must be positive"));
    }
    let start = p.k_start.unwrap_or(m);
    if p.k_end > start {
        return Err(Error::param("path.k_end exceeds path.k_start"));
    }
    let mut seq: Vec<usize> = (p.k_end..=start).rev().step_by(p.k_step).collect();
    if seq.last() != Some(&p.k_end) {
        seq.push(p.k_end);
    }
    Ok(seq)
}

fn path_options(cfg: &RunConfig) -> PathOptions<f64> {
    PathOptions {
        merge_tol: cfg.path.merge_tol,
        warm_start: cfg.path.warm_start,
        stop_on_merge: cfg.path.stop_on_merge,
    }
}

fn resolve_init(cfg: &RunConfig, losses: &LossSpec<f64>, graph: &WeightedGraph<f64>) -> Result<SolverInit<f64>> {
    match cfg.init.policy {
        InitPolicy::PerNodeMinimizer => Ok(SolverInit::default()),
        InitPolicy::FromFile => {
            let file = cfg.init.file.as_ref().ok_or_else(|| Error::param("from-file init needs init.file"))?;
            Ok(SolverInit::from_x(datasets::load_csv::<f64>(file, false)?.points))
        }
        InitPolicy::NlMidpoint => {
            // the solver section's rho and schedule belong to the trimmed run
            let mut nl = solver_config(cfg, false, 1.0, losses, graph);
            nl.rho = 1.0;
            nl.rho_schedule = None;
            let path = gamma_path(losses, graph, &nl, &gamma_sequence(cfg), &SolverInit::default(), &path_options(cfg))?;
            Ok(SolverInit::from_x(midpoint_init(&path)?))
        }
    }
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_json<S: Serialize>(dir: &Path, name: &str, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    write_text(dir, name, &(text + "\n"))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

/// Centroid rows with header `x0,x1,...` at full precision.
pub fn write_centroids_csv<W: std::io::Write>(x: &Centroids<f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record((0..x.p()).map(|d| format!("x{d}"))).map_err(err)?;
    for row in x.rows() {
        w.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_gen_data(cfg: &RunConfig) -> Result<()> {
    let loaded = load_data(cfg)?;
    datasets::save_csv(&loaded.data, create(&cfg.output_dir, "data.csv")?)?;
    if let Some(s) = &loaded.signal {
        s.write_csv(create(&cfg.output_dir, "signal.csv")?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveReport {
    task: &'static str,
    gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    rho: f64,
    final_rho: f64,
    stop: StopReason,
    iterations: usize,
    objective: f64,
    primal_residual: f64,
    clusters: usize,
    convergence: ConvergenceParams<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stationarity: Option<StationarityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<NlCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ari: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relation: Option<Relation>,
}

fn cmd_solve(cfg: &RunConfig, task: Task) -> Result<()> {
    let trimmed = task == Task::SolveNtl;
    let loaded = load_data(cfg)?;
    let losses = build_losses(cfg, &loaded.data)?;
    let graph = build_graph(cfg, &loaded.data)?;
    let gamma = resolve_gamma(cfg, &losses)?;
    let config = solver_config(cfg, trimmed, gamma, &losses, &graph);
    let init = resolve_init(cfg, &losses, &graph)?;
    let (state, stop) = if trimmed {
        solve_ntl(&losses, &graph, &config, &init)?
    } else {
        solve_nl(&losses, &graph, &config, &init)?
    };
    let tol = cfg.path.merge_tol;
    let partition = extract_partition(&state.x, &graph, tol)?;
    let last = state.history.last().expect("at least one iteration");
    let scale = tol * (1.0 + state.x.max_row_norm());
    let stationarity = (trimmed && cfg.solver.stationarity)
        .then(|| {
            let opts = StationarityOptions { seed: cfg.seed, zero_tol: scale, tie_tol: scale, ..Default::default() };
            stationarity_check(&state.x, &losses, &graph, gamma, PenaltyKind::Trimmed { k: config.k }, &opts)
        })
        .transpose()?;
    let certificate = (!trimmed && cfg.solver.stationarity)
        .then(|| nl_certificate(&state.x, &losses, &graph, gamma, Some(&state.y), tol, 1e-4))
        .transpose()?;
    let truth = loaded.data.labels.as_ref();
    let report = SolveReport {
        task: task.name(),
        gamma,
        k: trimmed.then_some(config.k),
        rho: config.rho,
        final_rho: state.rho,
        stop,
        iterations: state.iter,
        objective: last.objective,
        primal_residual: last.primal_residual,
        clusters: partition.num_clusters(),
        convergence: validate_convergence_params(&losses, &graph, &config),
        stationarity,
        certificate,
        ari: truth.map(|t| adjusted_rand_index(&partition, t)).transpose()?,
        relation: truth.map(|t| partition_relation(&partition, t)).transpose()?,
    };
    let dir = &cfg.output_dir;
    write_centroids_csv(&state.x, create(dir, "centroids.csv")?)?;
    write_json(dir, "partition.json", &partition)?;
    write_trace_csv(&state.history, create(dir, "trace.csv")?)?;
    write_json(dir, "report.json", &report)
}

#[derive(Serialize)]
struct PathMetrics {
    ari: Vec<f64>,
    max_ari: f64,
    argmax: usize,
    relations: Vec<Relation>,
}

fn path_metrics(path: &[Partition], truth: &Partition) -> Result<PathMetrics> {
    let ari = path.iter().map(|p| adjusted_rand_index(p, truth)).collect::<Result<Vec<_>>>()?;
    let relations = path.iter().map(|p| partition_relation(p, truth)).collect::<Result<Vec<_>>>()?;
    let (argmax, max_ari) = ari
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
    Ok(PathMetrics { ari, max_ari, argmax, relations })
}

fn cmd_path(cfg: &RunConfig, task: Task) -> Result<()> {
    let loaded = load_data(cfg)?;
    let losses = build_losses(cfg, &loaded.data)?;
    let graph = build_graph(cfg, &loaded.data)?;
    let init = resolve_init(cfg, &losses, &graph)?;
    let opts = path_options(cfg);
    let result: PathResult<f64> = if task == Task::KPath {
        let gamma = resolve_gamma(cfg, &losses)?;
        let config = solver_config(cfg, true, gamma, &losses, &graph);
        k_path(&losses, &graph, &config, &k_sequence(cfg, graph.m())?, &init, &opts)?
    } else {
        let config = solver_config(cfg, false, 1.0, &losses, &graph);
        gamma_path(&losses, &graph, &config, &gamma_sequence(cfg), &init, &opts)?
    };
    let dir = &cfg.output_dir;
    write_text(dir, "path.json", &(result.to_json()? + "\n"))?;
    result.write_centroids_csv(create(dir, "path_centroids.csv")?)?;
    if let Some(truth) = &loaded.data.labels {
        let parts: Vec<Partition> = result.steps.iter().map(|s| s.partition.clone()).collect();
        write_json(dir, "path_metrics.json", &path_metrics(&parts, truth)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ThresholdReport {
    penalty: PenaltyThreshold<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recovery: Option<RecoveryReport<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clustering_interval: Option<ClusteringInterval<f64>>,
}

fn recovery(cfg: &RunConfig, losses: &LossSpec<f64>, graph: &WeightedGraph<f64>, truth: &Partition) -> Result<RecoveryReport<f64>> {
    recovery_interval_with_alpha(losses, graph, truth, cfg.thresholds.alpha_k.as_deref())
}

fn cmd_thresholds(cfg: &RunConfig) -> Result<()> {
    let loaded = load_data(cfg)?;
    let losses = build_losses(cfg, &loaded.data)?;
    let penalty = match (cfg.thresholds.bound, cfg.loss.kind) {
        (Some(c), _) => exact_penalty_threshold(&losses, c)?,
        (None, LossKind::SquaredDistance) => clustering_threshold(&losses)?,
        (None, LossKind::Ridge) => quadratic_threshold(&losses)?,
    };
    let (rec, cc) = match &loaded.data.labels {
        Some(truth) => {
            let graph = build_graph(cfg, &loaded.data)?;
            let cc = match cfg.loss.kind {
                LossKind::SquaredDistance => Some(recovery_interval_cc(&losses, &graph, truth)?),
                LossKind::Ridge => None,
            };
            (Some(recovery(cfg, &losses, &graph, truth)?), cc)
        }
        None => (None, None),
    };
    write_json(
        &cfg.output_dir,
        "thresholds.json",
        &ThresholdReport { penalty, recovery: rec, clustering_interval: cc },
    )
}

#[derive(Serialize)]
struct RecoveryCheck {
    report: RecoveryReport<f64>,
    gamma: Option<f64>,
    partition: Option<Partition>,
    relation: Option<Relation>,
    ari: Option<f64>,
    stop: Option<StopReason>,
}

fn cmd_recovery_check(cfg: &RunConfig) -> Result<()> {
    let loaded = load_data(cfg)?;
    let truth = loaded
        .data
        .labels
        .as_ref()
        .ok_or_else(|| Error::param("recovery-check needs labeled data"))?;
    let losses = build_losses(cfg, &loaded.data)?;
    let graph = build_graph(cfg, &loaded.data)?;
    let report = recovery(cfg, &losses, &graph, truth)?;
    let gamma = report.midpoint();
    let mut out = RecoveryCheck { report, gamma, partition: None, relation: None, ari: None, stop: None };
    if let Some(g) = gamma {
        let config = solver_config(cfg, false, g, &losses, &graph);
        let (state, stop) = solve_nl(&losses, &graph, &config, &SolverInit::default())?;
        let part = extract_partition(&state.x, &graph, cfg.path.merge_tol)?;
        out.relation = Some(partition_relation(&part, truth)?);
        out.ari = Some(adjusted_rand_index(&part, truth)?);
        out.partition = Some(part);
        out.stop = Some(stop);
    }
    write_json(&cfg.output_dir, "recovery.json", &out)
}

#[derive(serde::Deserialize)]
struct LabelsOnly {
    labels: Vec<usize>,
}

#[derive(serde::Deserialize)]
struct PathFile {
    steps: Vec<StepFile>,
}

#[derive(serde::Deserialize)]
struct StepFile {
    partition: LabelsOnly,
}

fn cmd_metrics(cfg: &RunConfig) -> Result<()> {
    let loaded = load_data(cfg)?;
    let truth = loaded
        .data
        .labels
        .as_ref()
        .ok_or_else(|| Error::param("metrics need labeled data"))?;
    let file = cfg.metrics.input.as_ref().ok_or_else(|| Error::param("metrics need metrics.input"))?;
    let text = fs::read_to_string(file)?;
    let parts: Vec<Partition> = if let Ok(p) = serde_json::from_str::<PathFile>(&text) {
        p.steps.into_iter().map(|s| Partition::from_raw(&s.partition.labels)).collect()
    } else {
        let l: LabelsOnly = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        vec![Partition::from_raw(&l.labels)]
    };
    write_json(&cfg.output_dir, "metrics.json", &path_metrics(&parts, truth)?)
}

fn cmd_piecewise(cfg: &RunConfig) -> Result<()> {
    if cfg.data.kind != DataKind::Signal {
        return Err(Error::param("piecewise needs data.kind = \"signal\""));
    }
    let loaded = load_data(cfg)?;
    let signal = loaded.signal.expect("signal data");
    let report = piecewise::piecewise_experiment(&signal, &cfg.piecewise.settings())?;
    let dir = &cfg.output_dir;
    signal.write_csv(create(dir, "signal.csv")?)?;
    let mut w = csv::Writer::from_writer(create(dir, "fits.csv")?);
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["original", "noisy", "ntl", "nl_best"]).map_err(err)?;
    for i in 0..signal.noisy.len() {
        w.write_record(
            [signal.original[i], signal.noisy[i], report.ntl_signal[i], report.nl_best_signal[i]].map(|v| format!("{v:?}")),
        )
        .map_err(err)?;
    }
    w.flush()?;
    write_json(dir, "piecewise.json", &report)
}
