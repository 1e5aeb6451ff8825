//! AdaGrad and Adam baselines, run through the same oracle and reporting
//! machinery as the Armijo-type solvers so traces and budgets line up.

use crate::error::Result;
use crate::oracle::{mini_batch_gradient, mini_batch_value, RandomStream, StochasticOracle};
use crate::point::Point;
use crate::trace::{OutputRule, RunReport, Termination, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Adagrad,
    Adam,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    /// Denominator stabilizer added inside the square root scaling.
    pub epsilon_num: f64,
    pub max_iterations: usize,
    pub max_oracle_calls: Option<u64>,
    pub record_timings: bool,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, max_iterations: usize) -> Self {
        BaselineConfig {
            kind,
            learning_rate: 0.001,
            batch_size: 128,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_num: 1e-8,
            max_iterations,
            max_oracle_calls: None,
            record_timings: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if !(self.epsilon_num > 0.0) {
            return Err(Error::Config("epsilon_num must be positive".into()));
        }
        Ok(())
    }
}

/// One AdaGrad update: accumulate squared gradients coordinate-wise and scale.
pub fn adagrad_step(
    x: &Point,
    g: &Point,
    accumulator: &mut Point,
    lr: f64,
    epsilon_num: f64,
) -> Point {
    let mut next = x.0.clone();
    for i in 0..x.dim() {
        accumulator.0[i] += g.0[i] * g.0[i];
        // A zero gradient moves nothing even with a zero stabilizer.
        if g.0[i] != 0.0 {
            next[i] -= lr * g.0[i] / (accumulator.0[i].sqrt() + epsilon_num);
        }
    }
    Point(next)
}

/// One bias-corrected Adam update. `t` is the 1-based step count.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    x: &Point,
    g: &Point,
    m: &mut Point,
    v: &mut Point,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon_num: f64,
) -> Point {
    let mut next = x.0.clone();
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for i in 0..x.dim() {
        m.0[i] = beta1 * m.0[i] + (1.0 - beta1) * g.0[i];
        v.0[i] = beta2 * v.0[i] + (1.0 - beta2) * g.0[i] * g.0[i];
        let m_hat = m.0[i] / bc1;
        let v_hat = v.0[i] / bc2;
        if m_hat != 0.0 {
            next[i] -= lr * m_hat / (v_hat.sqrt() + epsilon_num);
        }
    }
    Point(next)
}

/// Runs the configured baseline; the output is the last iterate.
pub fn run_baseline(
    oracle: &dyn StochasticOracle,
    config: &BaselineConfig,
    x0: &Point,
    stream: &mut RandomStream,
) -> Result<RunReport> {
    config.validate()?;
    let start = std::time::Instant::now();
    let mut x = x0.clone();
    let mut acc = Point::zeros(x.dim());
    let mut m = Point::zeros(x.dim());
    let mut v = Point::zeros(x.dim());
    let mut total_t = 0u64;
    let mut trace = Vec::new();
    let termination = Termination::BudgetExhausted;

    for k in 0..config.max_iterations {
        if let Some(cap) = config.max_oracle_calls {
            if total_t >= cap {
                break;
            }
        }
        let r = match config.max_oracle_calls {
            Some(cap) => config.batch_size.min((cap - total_t).max(1) as usize),
            None => config.batch_size,
        };
        let (g, batch) = mini_batch_gradient(oracle, &x, r, stream)?;
        total_t += batch.len() as u64;
        x = match config.kind {
            BaselineKind::Adagrad => {
                adagrad_step(&x, &g, &mut acc, config.learning_rate, config.epsilon_num)
            }
            BaselineKind::Adam => adam_step(
                &x,
                &g,
                &mut m,
                &mut v,
                (k + 1) as u64,
                config.learning_rate,
                config.beta1,
                config.beta2,
                config.epsilon_num,
            ),
        };
        x.check_finite(k)?;
        trace.push(TraceRow {
            k: k as u64,
            cumulative_t: total_t,
            l_value: config.learning_rate,
            batch_size: batch.len() as u64,
            objective_estimate: mini_batch_value(oracle, &x, &batch)?,
            objective_exact: oracle.exact_value(&x),
            grad_norm: g.norm().into(),
            inner_trials: 1,
            wall_clock_ns: if config.record_timings {
                start.elapsed().as_nanos() as u64
            } else {
                0
            },
        });
    }

    Ok(RunReport {
        output_point: x,
        output_rule: OutputRule::LastIterate,
        trace,
        total_oracle_calls: total_t,
        termination,
        forced_acceptances: 0,
        verification_grad_calls: 0,
        iterates: Vec::new(),
    })
}
