//! Experiment orchestration: JSON-configured solver suites run over seeds
//! (and optionally grids of starts and hyperparameters), persisted as CSV
//! traces, a JSON summary and SVG convergence plots. Runs are independent
//! and deterministic, so repeated invocations are byte-identical.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::{run_baseline, BaselineConfig, BaselineKind};
use crate::convex::{agd_adaptive, sgd_adaptive, sgd_fixed, ConvexConfig, Mode};
use crate::error::{Error, Result};
use crate::nonconvex::{sgd_nonconvex_adaptive, sgd_nonconvex_fixed, NonconvexConfig};
use crate::oracle::{make_additive_gaussian_oracle, RandomStream, StochasticOracle};
use crate::point::Point;
use crate::problems::{
    generate_logistic_dataset, logistic_objective, logistic_problem_from, nonconvex_problem,
    quadratic_problem, FiniteSumOracle, NonconvexKind, Objective, ProblemSpec,
};
use crate::svg::{write_line_plot, PlotSpec, Series};
use crate::trace::{read_trace_csv, write_trace_csv, OutputRule, RunReport, Termination};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const SUMMARY_FILE: &str = "summary.json";

// ---------------------------------------------------------------------------
// Configuration schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    Quadratic {
        diag: Vec<f64>,
    },
    Logistic {
        examples: usize,
        dim: usize,
        dataset_seed: u64,
        #[serde(default)]
        l2: f64,
    },
    SigmoidSum {
        dim: usize,
    },
    RosenbrockSmoothed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseConfig {
    /// Additive isotropic Gaussian gradient noise with second moment d.
    Gaussian { d: f64 },
    /// Uniform example sampling; logistic problems only.
    FiniteSum,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartConfig {
    Origin,
    Ones,
    /// x0 = scale * standard normal, drawn per (seed, start index).
    Gaussian { scale: f64 },
    Explicit { point: Vec<f64> },
}

impl Default for StartConfig {
    fn default() -> Self {
        StartConfig::Gaussian { scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SgdFixed,
    SgdAdaptive,
    AgdAdaptive,
    SgdNonconvexFixed,
    SgdNonconvexAdaptive,
    Adagrad,
    Adam,
}

impl Method {
    pub fn is_baseline(self) -> bool {
        matches!(self, Method::Adagrad | Method::Adam)
    }
}

fn default_epsilon() -> f64 {
    1e-5
}
fn default_d0() -> f64 {
    0.01
}
fn default_lr() -> f64 {
    0.001
}
fn default_batch() -> usize {
    128
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps_num() -> f64 {
    1e-8
}
fn default_theta() -> f64 {
    1.0
}
fn default_alpha_conf() -> f64 {
    0.05
}
fn default_max_iterations() -> usize {
    10_000
}

/// One solver entry of an experiment. Fields irrelevant to the chosen method
/// are ignored; defaults follow the shipped presets (epsilon = 1e-5,
/// d0 = 0.01 for the adaptive solvers; lr = 0.001, batch 128, beta1 = 0.9,
/// beta2 = 0.999 for the baselines).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSpec {
    pub name: String,
    pub method: Method,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_d0")]
    pub d0: f64,
    /// Initial (or fixed) smoothness estimate; defaults to the problem's
    /// certified L.
    #[serde(default)]
    pub l0: Option<f64>,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub l_lo: Option<f64>,
    #[serde(default)]
    pub l_hi: Option<f64>,
    #[serde(default = "default_alpha_conf")]
    pub alpha_conf: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub l_floor: Option<f64>,
    #[serde(default)]
    pub stop_on_accuracy: bool,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps_num")]
    pub epsilon_num: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

impl SolverSpec {
    /// A solver entry with the shipped defaults; override fields as needed.
    pub fn new(name: &str, method: Method) -> Self {
        SolverSpec {
            name: name.into(),
            method,
            epsilon: default_epsilon(),
            d0: default_d0(),
            l0: None,
            mode: None,
            l_lo: None,
            l_hi: None,
            alpha_conf: default_alpha_conf(),
            theta: default_theta(),
            l_floor: None,
            stop_on_accuracy: false,
            learning_rate: default_lr(),
            batch_size: default_batch(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon_num: default_eps_num(),
            max_iterations: default_max_iterations(),
        }
    }
}

/// Robustness-study grid: several random starts per seed, and a list of
/// multipliers applied to each solver's lead hyperparameter (the learning
/// rate for the baselines, l0 for the line-search solvers).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub starts: usize,
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub noise: NoiseConfig,
    pub solvers: Vec<SolverSpec>,
    pub seeds: Vec<u64>,
    /// Cap on oracle draws per run.
    #[serde(default)]
    pub budget: Option<u64>,
    /// Draws per epoch for aggregation; defaults to the dataset size for
    /// finite sums and 1000 otherwise.
    #[serde(default)]
    pub epoch_draws: Option<u64>,
    #[serde(default)]
    pub start: StartConfig,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(Error::Config("at least one solver is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut names: Vec<&str> = self.solvers.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.solvers.len() {
            return Err(Error::Config("solver names must be unique".into()));
        }
        if let Some(grid) = &self.grid {
            if grid.starts == 0 || grid.multipliers.is_empty() {
                return Err(Error::Config(
                    "grid needs at least one start and one multiplier".into(),
                ));
            }
        }
        if matches!(self.noise, NoiseConfig::FiniteSum)
            && !matches!(self.problem, ProblemConfig::Logistic { .. })
        {
            return Err(Error::Config(
                "finite-sum noise requires a logistic problem".into(),
            ));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    fn epoch_draws(&self) -> u64 {
        if let Some(e) = self.epoch_draws {
            return e;
        }
        match (&self.noise, &self.problem) {
            (NoiseConfig::FiniteSum, ProblemConfig::Logistic { examples, .. }) => *examples as u64,
            _ => 1000,
        }
    }
}

/// Builds the problem and its oracle from the config.
pub fn build_problem(config: &ExperimentConfig) -> Result<(ProblemSpec, Arc<dyn StochasticOracle>)> {
    let (problem, logistic) = match &config.problem {
        ProblemConfig::Quadratic { diag } => {
            (quadratic_problem(diag, Point::zeros(diag.len()))?, None)
        }
        ProblemConfig::Logistic {
            examples,
            dim,
            dataset_seed,
            l2,
        } => {
            let (features, labels) = generate_logistic_dataset(*examples, *dim, *dataset_seed);
            let objective = logistic_objective(features, labels, *l2)?;
            (logistic_problem_from(objective.clone()), Some(objective))
        }
        ProblemConfig::SigmoidSum { dim } => {
            (nonconvex_problem(NonconvexKind::SigmoidSum, *dim), None)
        }
        ProblemConfig::RosenbrockSmoothed => {
            (nonconvex_problem(NonconvexKind::RosenbrockSmoothed, 2), None)
        }
    };
    let oracle: Arc<dyn StochasticOracle> = match &config.noise {
        NoiseConfig::Gaussian { d } => {
            Arc::new(make_additive_gaussian_oracle(problem.objective.clone(), *d)?)
        }
        NoiseConfig::FiniteSum => {
            let objective = logistic
                .ok_or_else(|| Error::Config("finite-sum noise requires logistic".into()))?;
            let calibration = Point::zeros(objective.dim());
            Arc::new(FiniteSumOracle::new(objective, &calibration))
        }
    };
    Ok((problem, oracle))
}

// ---------------------------------------------------------------------------
// Run planning and execution

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub solver: String,
    pub method: Method,
    pub seed: u64,
    pub start_index: usize,
    pub hparam_index: usize,
    pub multiplier: f64,
    /// Stream id of the solver's private random stream; together with the
    /// seed this replays the run exactly.
    pub stream_id: u64,
    pub x0: Vec<f64>,
    pub iterations: u64,
    pub total_oracle_calls: u64,
    pub termination: Option<Termination>,
    pub output_rule: Option<OutputRule>,
    pub final_objective_estimate: Option<f64>,
    pub final_objective_exact: Option<f64>,
    pub output_objective_exact: Option<f64>,
    pub forced_acceptances: u64,
    pub verification_grad_calls: u64,
    pub trace_file: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
}

impl ExperimentSummary {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn failed_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }
}

#[derive(Debug, Clone)]
struct RunPlan {
    solver_index: usize,
    seed: u64,
    start_index: usize,
    hparam_index: usize,
    multiplier: f64,
    label: String,
    stream_id: u64,
}

fn plan_runs(config: &ExperimentConfig) -> Vec<RunPlan> {
    let (starts, multipliers) = match &config.grid {
        Some(g) => (g.starts, g.multipliers.clone()),
        None => (1, vec![1.0]),
    };
    let gridded = config.grid.is_some();
    let mut plans = Vec::new();
    for (solver_index, solver) in config.solvers.iter().enumerate() {
        for &seed in &config.seeds {
            for start_index in 0..starts {
                for (hparam_index, &multiplier) in multipliers.iter().enumerate() {
                    let label = if gridded {
                        format!(
                            "{}_seed{}_s{}_h{}",
                            solver.name, seed, start_index, hparam_index
                        )
                    } else {
                        format!("{}_seed{}", solver.name, seed)
                    };
                    plans.push(RunPlan {
                        solver_index,
                        seed,
                        start_index,
                        hparam_index,
                        multiplier,
                        label,
                        stream_id: 0,
                    });
                }
            }
        }
    }
    for (i, plan) in plans.iter_mut().enumerate() {
        plan.stream_id = (i + 1) as u64;
    }
    plans
}

fn start_point(config: &StartConfig, dim: usize, seed: u64, start_index: usize) -> Result<Point> {
    match config {
        StartConfig::Origin => Ok(Point::zeros(dim)),
        StartConfig::Ones => Ok(Point(vec![1.0; dim])),
        StartConfig::Gaussian { scale } => {
            let mut stream = RandomStream::new(seed, 900_000 + start_index as u64);
            Ok(Point((0..dim).map(|_| scale * stream.standard_normal()).collect()))
        }
        StartConfig::Explicit { point } => {
            if point.len() != dim {
                return Err(Error::Config(format!(
                    "explicit start has dim {}, problem has dim {dim}",
                    point.len()
                )));
            }
            Ok(Point(point.clone()))
        }
    }
}

/// Runs one (solver, seed, start, hparam) cell. Shared by the experiment
/// driver and trace verification.
#[allow(clippy::too_many_arguments)]
pub fn execute_solver(
    solver: &SolverSpec,
    problem: &ProblemSpec,
    oracle: &dyn StochasticOracle,
    x0: &Point,
    seed: u64,
    stream_id: u64,
    multiplier: f64,
    budget: Option<u64>,
) -> Result<RunReport> {
    let mut stream = RandomStream::new(seed, stream_id);
    let l0 = solver.l0.unwrap_or(problem.known_l) * if solver.method.is_baseline() { 1.0 } else { multiplier };
    match solver.method {
        Method::SgdFixed | Method::SgdAdaptive | Method::AgdAdaptive => {
            let mut config = ConvexConfig::practical(
                solver.epsilon,
                solver.d0,
                l0,
                solver.max_iterations,
            );
            if let Some(mode) = solver.mode {
                config.mode = mode;
            }
            if config.mode == Mode::HighProbability {
                config.l_lo = solver.l_lo.unwrap_or(l0 / 8.0);
                config.l_hi = solver.l_hi.unwrap_or(l0 * 8.0);
                config.l_cap = config.l_hi;
            }
            config.alpha_conf = solver.alpha_conf;
            config.theta = solver.theta;
            config.l_floor = solver.l_floor;
            config.stop_on_accuracy = solver.stop_on_accuracy;
            config.max_oracle_calls = budget;
            match solver.method {
                Method::SgdFixed => sgd_fixed(oracle, problem, &config, x0, &mut stream),
                Method::SgdAdaptive => sgd_adaptive(oracle, problem, &config, x0, &mut stream),
                Method::AgdAdaptive => agd_adaptive(oracle, problem, &config, x0, &mut stream),
                _ => unreachable!(),
            }
        }
        Method::SgdNonconvexFixed | Method::SgdNonconvexAdaptive => {
            let mut config = NonconvexConfig::practical(
                solver.epsilon,
                solver.d0,
                l0,
                solver.max_iterations,
            );
            if let Some(mode) = solver.mode {
                config.mode = mode;
            }
            if config.mode == Mode::HighProbability {
                config.l_lo = solver.l_lo.unwrap_or(l0 / 8.0);
                config.l_hi = solver.l_hi.unwrap_or(l0 * 8.0);
                config.l_cap = config.l_hi;
            }
            config.l_floor = solver.l_floor;
            config.stop_on_accuracy = solver.stop_on_accuracy;
            config.max_oracle_calls = budget;
            match solver.method {
                Method::SgdNonconvexFixed => {
                    sgd_nonconvex_fixed(oracle, &config, x0, &mut stream)
                }
                Method::SgdNonconvexAdaptive => {
                    sgd_nonconvex_adaptive(oracle, &config, x0, &mut stream)
                }
                _ => unreachable!(),
            }
        }
        Method::Adagrad | Method::Adam => {
            let kind = if solver.method == Method::Adagrad {
                BaselineKind::Adagrad
            } else {
                BaselineKind::Adam
            };
            let mut config = BaselineConfig::new(kind, solver.max_iterations);
            config.learning_rate = solver.learning_rate * multiplier;
            config.batch_size = solver.batch_size;
            config.beta1 = solver.beta1;
            config.beta2 = solver.beta2;
            config.epsilon_num = solver.epsilon_num;
            config.max_oracle_calls = budget;
            run_baseline(oracle, &config, x0, &mut stream)
        }
    }
}

fn run_one(
    config: &ExperimentConfig,
    problem: &ProblemSpec,
    oracle: &dyn StochasticOracle,
    plan: &RunPlan,
    out_dir: &Path,
) -> RunRecord {
    let solver = &config.solvers[plan.solver_index];
    let mut record = RunRecord {
        label: plan.label.clone(),
        solver: solver.name.clone(),
        method: solver.method,
        seed: plan.seed,
        start_index: plan.start_index,
        hparam_index: plan.hparam_index,
        multiplier: plan.multiplier,
        stream_id: plan.stream_id,
        x0: Vec::new(),
        iterations: 0,
        total_oracle_calls: 0,
        termination: None,
        output_rule: None,
        final_objective_estimate: None,
        final_objective_exact: None,
        output_objective_exact: None,
        forced_acceptances: 0,
        verification_grad_calls: 0,
        trace_file: None,
        error: None,
    };
    let x0 = match start_point(&config.start, problem.objective.dim(), plan.seed, plan.start_index)
    {
        Ok(x0) => x0,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.x0 = x0.0.clone();
    match execute_solver(
        solver,
        problem,
        oracle,
        &x0,
        plan.seed,
        plan.stream_id,
        plan.multiplier,
        config.budget,
    ) {
        Ok(report) => {
            record.iterations = report.trace.len() as u64;
            record.total_oracle_calls = report.total_oracle_calls;
            record.termination = Some(report.termination);
            record.output_rule = Some(report.output_rule);
            record.final_objective_estimate = report.trace.last().map(|r| r.objective_estimate);
            record.final_objective_exact = report.final_exact_objective();
            record.output_objective_exact = oracle.exact_value(&report.output_point);
            record.forced_acceptances = report.forced_acceptances;
            record.verification_grad_calls = report.verification_grad_calls;
            let file = format!("{}.csv", plan.label);
            match write_trace_csv(&out_dir.join(&file), &report.trace) {
                Ok(()) => record.trace_file = Some(file),
                Err(e) => record.error = Some(format!("trace write failed: {e}")),
            }
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Executes every (solver, seed[, start, hparam]) cell, writes one CSV trace
/// per run, `summary.json`, and the two convergence plots. Solver failures
/// are recorded per run without aborting the batch.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    workers: Option<usize>,
) -> Result<ExperimentSummary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let (problem, oracle) = build_problem(config)?;
    let plans = plan_runs(config);

    let runs = execute_plans(config, &problem, oracle.as_ref(), &plans, out_dir, workers);

    let summary = ExperimentSummary {
        config: config.clone(),
        runs,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    std::fs::write(out_dir.join(SUMMARY_FILE), json)?;
    write_experiment_plots(&summary, out_dir)?;
    Ok(summary)
}

#[cfg(feature = "parallel")]
fn execute_plans(
    config: &ExperimentConfig,
    problem: &ProblemSpec,
    oracle: &dyn StochasticOracle,
    plans: &[RunPlan],
    out_dir: &Path,
    workers: Option<usize>,
) -> Vec<RunRecord> {
    let body = || {
        plans
            .par_iter()
            .map(|plan| run_one(config, problem, oracle, plan, out_dir))
            .collect()
    };
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map(|pool| pool.install(body))
            .unwrap_or_else(|_| body()),
        None => body(),
    }
}

#[cfg(not(feature = "parallel"))]
fn execute_plans(
    config: &ExperimentConfig,
    problem: &ProblemSpec,
    oracle: &dyn StochasticOracle,
    plans: &[RunPlan],
    out_dir: &Path,
    workers: Option<usize>,
) -> Vec<RunRecord> {
    let _ = workers;
    plans
        .iter()
        .map(|plan| run_one(config, problem, oracle, plan, out_dir))
        .collect()
}

fn run_series(summary: &ExperimentSummary, out_dir: &Path, by_calls: bool) -> Result<Vec<Series>> {
    let mut series = Vec::new();
    for run in &summary.runs {
        let Some(file) = &run.trace_file else { continue };
        let trace = read_trace_csv(&out_dir.join(file))?;
        let points = trace
            .iter()
            .map(|row| {
                let x = if by_calls {
                    row.cumulative_t as f64
                } else {
                    row.k as f64
                };
                (x, row.objective_exact.unwrap_or(row.objective_estimate))
            })
            .collect();
        series.push(Series {
            label: run.label.clone(),
            points,
        });
    }
    Ok(series)
}

fn write_experiment_plots(summary: &ExperimentSummary, out_dir: &Path) -> Result<()> {
    let log_y = summary
        .runs
        .iter()
        .filter_map(|r| r.final_objective_exact.or(r.final_objective_estimate))
        .all(|v| v > 0.0);
    write_line_plot(
        &out_dir.join("objective_vs_iteration.svg"),
        &PlotSpec {
            title: "Objective by iteration".into(),
            x_label: "iteration".into(),
            y_label: "objective".into(),
            log_y,
        },
        &run_series(summary, out_dir, false)?,
    )?;
    write_line_plot(
        &out_dir.join("objective_vs_oracle_calls.svg"),
        &PlotSpec {
            title: "Objective by oracle calls".into(),
            x_label: "oracle calls".into(),
            y_label: "objective".into(),
            log_y,
        },
        &run_series(summary, out_dir, true)?,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Aggregation

/// One run's objective curve resampled onto the common epoch axis and tagged
/// with its grid coordinates.
#[derive(Debug, Clone)]
pub struct TaggedCurve {
    pub start: usize,
    pub hparam: usize,
    pub values: Vec<f64>,
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Grid aggregation protocol: per epoch, average over starts within each
/// hyperparameter setting, then take the median across hyperparameters.
pub fn aggregate_grid(curves: &[TaggedCurve]) -> Result<Vec<f64>> {
    if curves.is_empty() {
        return Err(Error::Data("no curves to aggregate".into()));
    }
    let epochs = curves[0].values.len();
    if curves.iter().any(|c| c.values.len() != epochs) {
        return Err(Error::Data("curves disagree on the epoch axis".into()));
    }
    let mut hparams: Vec<usize> = curves.iter().map(|c| c.hparam).collect();
    hparams.sort_unstable();
    hparams.dedup();
    let mut out = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let mut per_hparam = Vec::with_capacity(hparams.len());
        for &h in &hparams {
            let values: Vec<f64> = curves
                .iter()
                .filter(|c| c.hparam == h)
                .map(|c| c.values[e])
                .collect();
            per_hparam.push(values.iter().sum::<f64>() / values.len() as f64);
        }
        out.push(median(&mut per_hparam));
    }
    Ok(out)
}

/// Step-samples a trace's objective at cumulative-call marks
/// epoch_draws, 2*epoch_draws, ..., n_epochs*epoch_draws.
pub fn resample_by_epoch(
    trace: &[crate::trace::TraceRow],
    epoch_draws: u64,
    n_epochs: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_epochs);
    let mut idx = 0usize;
    let mut last = trace
        .first()
        .map(|r| r.objective_exact.unwrap_or(r.objective_estimate))
        .unwrap_or(f64::NAN);
    for e in 1..=n_epochs {
        let mark = epoch_draws * e as u64;
        while idx < trace.len() && trace[idx].cumulative_t <= mark {
            last = trace[idx].objective_exact.unwrap_or(trace[idx].objective_estimate);
            idx += 1;
        }
        out.push(last);
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub solver: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub epoch_draws: u64,
    pub epochs: Vec<u64>,
    pub curves: Vec<AggregateCurve>,
}

/// Aggregates a finished experiment directory: per solver, runs are
/// resampled to the epoch axis, averaged over (seed, start) and reduced by
/// the median across hyperparameters; writes `aggregate.json` and the
/// epoch-axis comparison plot.
pub fn compare(out_dir: &Path) -> Result<AggregateReport> {
    let summary = ExperimentSummary::from_file(&out_dir.join(SUMMARY_FILE))?;
    let epoch_draws = summary.config.epoch_draws();
    let max_calls = summary
        .runs
        .iter()
        .map(|r| r.total_oracle_calls)
        .max()
        .unwrap_or(0);
    let n_epochs = (max_calls.div_ceil(epoch_draws.max(1)) as usize).max(1);

    let mut curves = Vec::new();
    for solver in &summary.config.solvers {
        let mut tagged = Vec::new();
        for run in summary.runs.iter().filter(|r| r.solver == solver.name) {
            let Some(file) = &run.trace_file else { continue };
            let trace = read_trace_csv(&out_dir.join(file))?;
            if trace.is_empty() {
                continue;
            }
            tagged.push(TaggedCurve {
                // Seeds and explicit grid starts both act as independent
                // "starting point" role; fold them into one start axis.
                start: run.seed as usize * 10_000 + run.start_index,
                hparam: run.hparam_index,
                values: resample_by_epoch(&trace, epoch_draws, n_epochs),
            });
        }
        if tagged.is_empty() {
            continue;
        }
        curves.push(AggregateCurve {
            solver: solver.name.clone(),
            values: aggregate_grid(&tagged)?,
        });
    }
    if curves.is_empty() {
        return Err(Error::Data("no successful runs to aggregate".into()));
    }

    let report = AggregateReport {
        epoch_draws,
        epochs: (1..=n_epochs as u64).collect(),
        curves,
    };
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(out_dir.join("aggregate.json"), json)?;

    let log_y = report
        .curves
        .iter()
        .flat_map(|c| c.values.iter())
        .all(|&v| v > 0.0);
    let series: Vec<Series> = report
        .curves
        .iter()
        .map(|c| Series {
            label: c.solver.clone(),
            points: c
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| ((i + 1) as f64, v))
                .collect(),
        })
        .collect();
    write_line_plot(
        &out_dir.join("aggregate_by_epoch.svg"),
        &PlotSpec {
            title: "Averaged objective by epoch".into(),
            x_label: "epoch".into(),
            y_label: "objective".into(),
            log_y,
        },
        &series,
    )?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Trace verification

/// Replays the run that produced `trace_path` from the sibling
/// `summary.json` (same seed, stream and config) and checks that the stored
/// rows match the replay exactly. Replay equality re-establishes every
/// line-search certificate, since the solver only ever records accepted
/// steps.
pub fn verify_trace(trace_path: &Path) -> Result<()> {
    let dir = trace_path
        .parent()
        .ok_or_else(|| Error::Data("trace path has no parent directory".into()))?;
    let file_name = trace_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Data("bad trace file name".into()))?;
    let stored = read_trace_csv(trace_path)?;
    let summary = ExperimentSummary::from_file(&dir.join(SUMMARY_FILE))?;
    let run = summary
        .runs
        .iter()
        .find(|r| r.trace_file.as_deref() == Some(file_name))
        .ok_or_else(|| Error::Data(format!("{file_name} not found in {SUMMARY_FILE}")))?;
    let solver = summary
        .config
        .solvers
        .iter()
        .find(|s| s.name == run.solver)
        .ok_or_else(|| Error::Data(format!("solver {} missing from config", run.solver)))?;
    let (problem, oracle) = build_problem(&summary.config)?;
    let report = execute_solver(
        solver,
        &problem,
        oracle.as_ref(),
        &Point(run.x0.clone()),
        run.seed,
        run.stream_id,
        run.multiplier,
        summary.config.budget,
    )?;
    if report.trace.len() != stored.len() {
        return Err(Error::Data(format!(
            "replay produced {} rows, trace has {}",
            report.trace.len(),
            stored.len()
        )));
    }
    for (i, (a, b)) in report.trace.iter().zip(&stored).enumerate() {
        if a != b {
            return Err(Error::Data(format!(
                "row {i} mismatch: replay {a:?} vs stored {b:?}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            problem: ProblemConfig::Quadratic { diag: vec![2.0, 1.0] },
            noise: NoiseConfig::Gaussian { d: 0.1 },
            solvers: vec![{
                let mut s = SolverSpec::new("sgd_adaptive", Method::SgdAdaptive);
                s.epsilon = 0.01;
                s.d0 = 0.1;
                s.l0 = Some(4.0);
                s.max_iterations = 30;
                s
            }],
            seeds: vec![1],
            budget: Some(2000),
            epoch_draws: Some(100),
            start: StartConfig::Ones,
            grid: None,
        }
    }

    #[test]
    fn single_run_produces_one_trace_and_summary_entry() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run_experiment(&tiny_config(), dir.path(), None).unwrap();
        assert_eq!(summary.runs.len(), 1);
        assert!(summary.runs[0].error.is_none());
        assert!(dir.path().join("sgd_adaptive_seed1.csv").exists());
        assert!(dir.path().join(SUMMARY_FILE).exists());
        assert!(dir.path().join("objective_vs_iteration.svg").exists());
        assert!(dir.path().join("objective_vs_oracle_calls.svg").exists());
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_experiment(&tiny_config(), a.path(), None).unwrap();
        run_experiment(&tiny_config(), b.path(), Some(2)).unwrap();
        for file in ["sgd_adaptive_seed1.csv", SUMMARY_FILE] {
            let fa = std::fs::read(a.path().join(file)).unwrap();
            let fb = std::fs::read(b.path().join(file)).unwrap();
            assert_eq!(fa, fb, "{file} differs between runs");
        }
    }

    #[test]
    fn verify_replays_stored_trace() {
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&tiny_config(), dir.path(), None).unwrap();
        verify_trace(&dir.path().join("sgd_adaptive_seed1.csv")).unwrap();
    }

    #[test]
    fn verify_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&tiny_config(), dir.path(), None).unwrap();
        let path = dir.path().join("sgd_adaptive_seed1.csv");
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let last = lines.pop().unwrap();
        let mut fields: Vec<String> = last.split(',').map(String::from).collect();
        fields[4] = "0.0".into();
        lines.push(fields.join(","));
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        assert!(verify_trace(&path).is_err());
    }

    #[test]
    fn aggregate_grid_follows_protocol() {
        // 2 starts x 2 hparams, one epoch: means {2, 3}, median 2.5.
        let curves = vec![
            TaggedCurve { start: 0, hparam: 0, values: vec![1.0] },
            TaggedCurve { start: 1, hparam: 0, values: vec![3.0] },
            TaggedCurve { start: 0, hparam: 1, values: vec![2.0] },
            TaggedCurve { start: 1, hparam: 1, values: vec![4.0] },
        ];
        assert_eq!(aggregate_grid(&curves).unwrap(), vec![2.5]);
    }

    #[test]
    fn aggregate_single_curve_is_identity() {
        let curves = vec![TaggedCurve {
            start: 0,
            hparam: 0,
            values: vec![5.0, 4.0],
        }];
        assert_eq!(aggregate_grid(&curves).unwrap(), vec![5.0, 4.0]);
        assert!(aggregate_grid(&[]).is_err());
    }

    #[test]
    fn grid_runs_compare_to_median_curves() {
        let mut config = tiny_config();
        config.grid = Some(GridSpec {
            starts: 2,
            multipliers: vec![0.5, 1.0, 2.0],
        });
        config.start = StartConfig::Gaussian { scale: 1.0 };
        let dir = tempfile::tempdir().unwrap();
        let summary = run_experiment(&config, dir.path(), None).unwrap();
        assert_eq!(summary.runs.len(), 6);
        let report = compare(dir.path()).unwrap();
        assert_eq!(report.curves.len(), 1);
        assert!(!report.curves[0].values.is_empty());
        assert!(dir.path().join("aggregate.json").exists());
        assert!(dir.path().join("aggregate_by_epoch.svg").exists());
    }

    #[test]
    fn config_validation_rejects_degenerate_setups() {
        let mut config = tiny_config();
        config.seeds.clear();
        assert!(config.validate().is_err());
        let mut config = tiny_config();
        config.solvers.clear();
        assert!(config.validate().is_err());
        let mut config = tiny_config();
        config.noise = NoiseConfig::FiniteSum;
        assert!(config.validate().is_err());
    }
}
