//! Stochastic gradient methods for smooth nonconvex objectives. Both solvers
//! target an eps-stationary point and return the iterate with the smallest
//! observed gradient norm.

use crate::error::{Error, Result};
use crate::oracle::{mini_batch_gradient, mini_batch_value, RandomStream, StochasticOracle};
use crate::point::Point;
use crate::trace::{OutputRule, RunReport, Termination, TraceRow};

pub use crate::convex::Mode;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct NonconvexConfig {
    /// Target stationarity: gradient norm at the output below epsilon.
    pub epsilon: f64,
    /// Variance upper bound D (also D0 for the adaptive batch rule).
    pub d0: f64,
    /// Initial smoothness guess (the fixed solver's known L).
    pub l0: f64,
    pub l_lo: f64,
    pub l_hi: f64,
    pub mode: Mode,
    pub max_iterations: usize,
    pub l_cap: f64,
    pub l_floor: Option<f64>,
    /// Stop once the tracked gradient norm drops below epsilon.
    pub stop_on_accuracy: bool,
    pub max_oracle_calls: Option<u64>,
    pub record_iterates: bool,
    pub record_timings: bool,
}

impl NonconvexConfig {
    pub fn practical(epsilon: f64, d0: f64, l0: f64, max_iterations: usize) -> Self {
        NonconvexConfig {
            epsilon,
            d0,
            l0,
            l_lo: l0,
            l_hi: l0,
            mode: Mode::Practical,
            max_iterations,
            l_cap: l0 * (1u64 << 30) as f64,
            l_floor: None,
            stop_on_accuracy: true,
            max_oracle_calls: None,
            record_iterates: false,
            record_timings: false,
        }
    }

    pub fn clipped(
        epsilon: f64,
        d0: f64,
        l_lo: f64,
        l0: f64,
        l_hi: f64,
        max_iterations: usize,
    ) -> Self {
        NonconvexConfig {
            epsilon,
            d0,
            l0,
            l_lo,
            l_hi,
            mode: Mode::HighProbability,
            max_iterations,
            l_cap: l_hi,
            l_floor: None,
            stop_on_accuracy: true,
            max_oracle_calls: None,
            record_iterates: false,
            record_timings: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.d0 < 0.0 {
            return Err(Error::Config("d0 must be non-negative".into()));
        }
        if !(self.l0 > 0.0) {
            return Err(Error::Config("l0 must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if self.mode == Mode::HighProbability
            && !(self.l_lo > 0.0 && self.l_lo <= self.l0 && self.l0 <= self.l_hi)
        {
            return Err(Error::Config(
                "clipped mode requires 0 < l_lo <= l0 <= l_hi".into(),
            ));
        }
        Ok(())
    }

    fn remaining(&self, t: u64) -> Option<u64> {
        self.max_oracle_calls.map(|cap| cap.saturating_sub(t))
    }
}

/// Fixed-step batch size: ceil(max{12 D / eps^2, 1}).
pub fn batch_size_nonconvex_fixed(d: f64, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    if d < 0.0 {
        return Err(Error::Config("variance bound must be non-negative".into()));
    }
    Ok((12.0 * d / (eps * eps)).max(1.0).ceil() as usize)
}

/// Adaptive batch size: ceil(max{8 D0 / eps^2, 1}), fixed across iterations.
pub fn batch_size_nonconvex_adaptive(d0: f64, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    if d0 < 0.0 {
        return Err(Error::Config("variance bound must be non-negative".into()));
    }
    Ok((8.0 * d0 / (eps * eps)).max(1.0).ceil() as usize)
}

/// Tracks the iterate with the smallest observed gradient norm.
#[derive(Debug, Clone)]
pub struct StationarityTracker {
    pub best_point: Point,
    pub best_norm: f64,
}

impl StationarityTracker {
    pub fn new(x0: Point, norm0: f64) -> Self {
        StationarityTracker {
            best_point: x0,
            best_norm: norm0,
        }
    }

    pub fn observe(&mut self, x: &Point, norm: f64) {
        if norm < self.best_norm {
            self.best_norm = norm;
            self.best_point = x.clone();
        }
    }
}

/// Gradient norm used to rank iterates: the exact gradient when the oracle
/// can produce one (counted as a verification call), the batch gradient
/// otherwise.
fn stationarity_norm(
    oracle: &dyn StochasticOracle,
    x: &Point,
    batch_gradient: &Point,
    verification_calls: &mut u64,
) -> (f64, Option<f64>) {
    match oracle.exact_gradient(x) {
        Some(g) => {
            *verification_calls += 1;
            let n = g.norm();
            (n, Some(n))
        }
        None => (batch_gradient.norm(), None),
    }
}

fn now_ns(enabled: bool, start: std::time::Instant) -> u64 {
    if enabled {
        start.elapsed().as_nanos() as u64
    } else {
        0
    }
}

/// Fixed-step stochastic gradient descent for nonconvex objectives with the
/// variance-matched batch size 12 D / eps^2.
pub fn sgd_nonconvex_fixed(
    oracle: &dyn StochasticOracle,
    config: &NonconvexConfig,
    x0: &Point,
    stream: &mut RandomStream,
) -> Result<RunReport> {
    config.validate()?;
    let l = config.l0;
    let r = batch_size_nonconvex_fixed(config.d0, config.epsilon)?;
    let start = std::time::Instant::now();

    let mut x = x0.clone();
    let mut tracker: Option<StationarityTracker> = None;
    let mut total_t = 0u64;
    let mut trace = Vec::new();
    let mut iterates = Vec::new();
    let mut termination = Termination::BudgetExhausted;
    let mut verification_calls = 0u64;

    for k in 0..config.max_iterations {
        if let Some(rem) = config.remaining(total_t) {
            if rem == 0 {
                break;
            }
        }
        let (g, batch) = mini_batch_gradient(oracle, &x, r, stream)?;
        total_t += batch.len() as u64;
        let (norm, exact_norm) = stationarity_norm(oracle, &x, &g, &mut verification_calls);
        match tracker.as_mut() {
            Some(t) => t.observe(&x, norm),
            None => tracker = Some(StationarityTracker::new(x.clone(), norm)),
        }

        let x_next = x.axpy(-1.0 / (2.0 * l), &g);
        x_next.check_finite(k)?;
        let objective_estimate = mini_batch_value(oracle, &x_next, &batch)?;
        x = x_next;
        if config.record_iterates {
            iterates.push(x.clone());
        }

        trace.push(TraceRow {
            k: k as u64,
            cumulative_t: total_t,
            l_value: l,
            batch_size: batch.len() as u64,
            objective_estimate,
            objective_exact: oracle.exact_value(&x),
            grad_norm: exact_norm.or(Some(norm)),
            inner_trials: 1,
            wall_clock_ns: now_ns(config.record_timings, start),
        });

        if config.stop_on_accuracy {
            if let Some(t) = &tracker {
                if t.best_norm <= config.epsilon {
                    termination = Termination::AccuracyReached;
                    break;
                }
            }
        }
    }

    let tracker = tracker.unwrap_or_else(|| StationarityTracker::new(x.clone(), f64::INFINITY));
    Ok(RunReport {
        output_point: tracker.best_point,
        output_rule: OutputRule::MinGradNorm,
        trace,
        total_oracle_calls: total_t,
        termination,
        forced_acceptances: 0,
        verification_grad_calls: verification_calls,
        iterates,
    })
}

/// Adaptive line-search stochastic gradient descent for nonconvex
/// objectives. One batch of fixed size 8 D0 / eps^2 is drawn per outer
/// iteration and reused across all line-search trials; the acceptance slack
/// is eps^2 / (32 L) at the trial L.
pub fn sgd_nonconvex_adaptive(
    oracle: &dyn StochasticOracle,
    config: &NonconvexConfig,
    x0: &Point,
    stream: &mut RandomStream,
) -> Result<RunReport> {
    config.validate()?;
    let r = batch_size_nonconvex_adaptive(config.d0, config.epsilon)?;
    let start = std::time::Instant::now();

    let mut x = x0.clone();
    let mut l = config.l0;
    let mut tracker: Option<StationarityTracker> = None;
    let mut total_t = 0u64;
    let mut trace = Vec::new();
    let mut iterates = Vec::new();
    let mut termination = Termination::BudgetExhausted;
    let mut forced_acceptances = 0u64;
    let mut verification_calls = 0u64;

    for k in 0..config.max_iterations {
        if let Some(rem) = config.remaining(total_t) {
            if rem == 0 {
                break;
            }
        }
        let r_eff = match config.remaining(total_t) {
            Some(rem) => r.min(rem.max(1) as usize),
            None => r,
        };
        let (g, batch) = mini_batch_gradient(oracle, &x, r_eff, stream)?;
        total_t += batch.len() as u64;
        let f_reference = mini_batch_value(oracle, &x, &batch)?;
        let (norm, exact_norm) = stationarity_norm(oracle, &x, &g, &mut verification_calls);
        match tracker.as_mut() {
            Some(t) => t.observe(&x, norm),
            None => tracker = Some(StationarityTracker::new(x.clone(), norm)),
        }

        let mut trial_l = match config.mode {
            Mode::Practical => {
                let warm = l / 4.0;
                match config.l_floor {
                    Some(floor) => warm.max(floor),
                    None => warm,
                }
            }
            Mode::HighProbability => (l / 2.0).max(config.l_lo),
        };
        let mut trials = 0u32;
        let (x_next, f_next) = loop {
            trials += 1;
            trial_l = match config.mode {
                Mode::Practical => 2.0 * trial_l,
                Mode::HighProbability => (2.0 * trial_l).min(config.l_hi),
            };
            let candidate = x.axpy(-1.0 / (2.0 * trial_l), &g);
            candidate.check_finite(k)?;
            let displacement = candidate.sub(&x);
            let f_candidate = mini_batch_value(oracle, &candidate, &batch)?;
            let slack = config.epsilon * config.epsilon / (32.0 * trial_l);
            let ok = crate::convex::armijo_accepts(
                f_candidate,
                f_reference,
                &g,
                &displacement,
                trial_l,
                slack,
            );
            let forced =
                !ok && config.mode == Mode::HighProbability && trial_l >= config.l_hi;
            if ok || forced {
                if forced {
                    forced_acceptances += 1;
                }
                break (candidate, f_candidate);
            }
            if config.mode == Mode::Practical && 2.0 * trial_l > config.l_cap {
                return Err(Error::LinesearchFailed {
                    iteration: k,
                    cap: config.l_cap,
                });
            }
        };
        x = x_next;
        l = trial_l;
        if config.record_iterates {
            iterates.push(x.clone());
        }

        trace.push(TraceRow {
            k: k as u64,
            cumulative_t: total_t,
            l_value: l,
            batch_size: batch.len() as u64,
            objective_estimate: f_next,
            objective_exact: oracle.exact_value(&x),
            grad_norm: exact_norm.or(Some(norm)),
            inner_trials: trials,
            wall_clock_ns: now_ns(config.record_timings, start),
        });

        if config.stop_on_accuracy {
            if let Some(t) = &tracker {
                if t.best_norm <= config.epsilon {
                    termination = Termination::AccuracyReached;
                    break;
                }
            }
        }
    }

    let tracker = tracker.unwrap_or_else(|| StationarityTracker::new(x.clone(), f64::INFINITY));
    Ok(RunReport {
        output_point: tracker.best_point,
        output_rule: OutputRule::MinGradNorm,
        trace,
        total_oracle_calls: total_t,
        termination,
        forced_acceptances,
        verification_grad_calls: verification_calls,
        iterates,
    })
}
