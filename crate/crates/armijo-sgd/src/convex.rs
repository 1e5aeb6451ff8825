//! Stochastic gradient methods for convex objectives: a fixed-step solver
//! with the mini-batch rule tied to the target accuracy, an adaptive solver
//! that tunes the smoothness estimate by a doubling line search, and the
//! accelerated variant of the adaptive scheme.

use crate::error::{Error, Result};
use crate::oracle::{
    batch_gradient_at, mini_batch_gradient, mini_batch_value, Batch, RandomStream,
    StochasticOracle,
};
use crate::point::Point;
use crate::problems::ProblemSpec;
use crate::trace::{OutputRule, RunReport, Termination, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Quartering warm start, unclipped doubling, batch rule D0/(L eps).
    Practical,
    /// L clipped to [l_lo, l_hi], halving warm start, inflated batches for a
    /// confidence-(1 - alpha) guarantee.
    HighProbability,
}

/// Configuration shared by the convex solvers.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ConvexConfig {
    /// Target accuracy in absolute objective units.
    pub epsilon: f64,
    /// Variance upper bound D0 (also the fixed solver's D).
    pub d0: f64,
    /// Initial smoothness guess (the fixed solver's known L).
    pub l0: f64,
    /// Lower clip for high-probability mode.
    pub l_lo: f64,
    /// Upper clip for high-probability mode.
    pub l_hi: f64,
    pub mode: Mode,
    /// Confidence parameter alpha in (0, 1); high-probability mode only.
    pub alpha_conf: f64,
    /// Sub-Gaussian parameter sigma_0^2; defaults to d0 when absent.
    pub sigma0_sq: Option<f64>,
    /// Leading constant of the high-probability batch rules.
    pub theta: f64,
    pub max_iterations: usize,
    /// Hard safety ceiling for the practical-mode line search.
    pub l_cap: f64,
    /// Optional floor for the practical warm start (off by default).
    pub l_floor: Option<f64>,
    /// Stop once the exact suboptimality of the output drops below epsilon
    /// (requires the problem to declare its optimal value).
    pub stop_on_accuracy: bool,
    /// Optional cap on total oracle draws.
    pub max_oracle_calls: Option<u64>,
    /// Keep per-iteration iterates in the report (identity checks).
    pub record_iterates: bool,
    /// Capture wall-clock timings in the trace (off keeps traces byte-stable).
    pub record_timings: bool,
}

impl ConvexConfig {
    pub fn practical(epsilon: f64, d0: f64, l0: f64, max_iterations: usize) -> Self {
        ConvexConfig {
            epsilon,
            d0,
            l0,
            l_lo: l0,
            l_hi: l0,
            mode: Mode::Practical,
            alpha_conf: 0.05,
            sigma0_sq: None,
            theta: 1.0,
            max_iterations,
            l_cap: l0 * (1u64 << 30) as f64,
            l_floor: None,
            stop_on_accuracy: true,
            max_oracle_calls: None,
            record_iterates: false,
            record_timings: false,
        }
    }

    pub fn high_probability(
        epsilon: f64,
        sigma0_sq: f64,
        l_lo: f64,
        l0: f64,
        l_hi: f64,
        alpha_conf: f64,
        max_iterations: usize,
    ) -> Self {
        ConvexConfig {
            epsilon,
            d0: sigma0_sq,
            l0,
            l_lo,
            l_hi,
            mode: Mode::HighProbability,
            alpha_conf,
            sigma0_sq: Some(sigma0_sq),
            theta: 1.0,
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
        if self.mode == Mode::HighProbability {
            if !(self.l_lo > 0.0 && self.l_lo <= self.l0 && self.l0 <= self.l_hi) {
                return Err(Error::Config(
                    "high-probability mode requires 0 < l_lo <= l0 <= l_hi".into(),
                ));
            }
            let m = (self.l_hi / self.l_lo).log2();
            if m < 1.0 - 1e-9 || (m - m.round()).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "log2(l_hi / l_lo) must be a positive integer, got {m}"
                )));
            }
            if !(self.alpha_conf > 0.0 && self.alpha_conf < 1.0) {
                return Err(Error::Config("alpha_conf must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq.unwrap_or(self.d0)
    }

    /// ln(1/alpha) + m ln N, the batch inflation of the confidence bounds.
    fn confidence_factor(&self) -> f64 {
        let m = (self.l_hi / self.l_lo).log2().round().max(1.0);
        (1.0 / self.alpha_conf).ln() + m * (self.max_iterations.max(2) as f64).ln()
    }

    fn remaining(&self, t: u64) -> Option<u64> {
        self.max_oracle_calls.map(|cap| cap.saturating_sub(t))
    }
}

/// Batch size for the convex fixed-step rule: ceil(max{D/(L eps), 1}).
pub fn batch_size_convex(d: f64, l: f64, eps: f64) -> Result<usize> {
    if !(l > 0.0) || !(eps > 0.0) {
        return Err(Error::Config(format!(
            "batch size needs positive L and epsilon, got L={l}, eps={eps}"
        )));
    }
    if d < 0.0 {
        return Err(Error::Config("variance bound must be non-negative".into()));
    }
    Ok((d / (l * eps)).max(1.0).ceil() as usize)
}

/// The line-search acceptance test: candidate value against the quadratic
/// upper model plus slack, all quantities evaluated on one shared batch.
/// Kept standalone so certificates can be re-verified outside the solver loop.
pub fn armijo_accepts(
    f_candidate: f64,
    f_reference: f64,
    gradient: &Point,
    displacement: &Point,
    l: f64,
    slack: f64,
) -> bool {
    f_candidate <= f_reference + gradient.dot(displacement) + l * displacement.norm_sq() + slack
}

fn now_ns(enabled: bool, start: std::time::Instant) -> u64 {
    if enabled {
        start.elapsed().as_nanos() as u64
    } else {
        0
    }
}

/// Fixed-step stochastic gradient descent with the accuracy-matched batch
/// size. Output is the uniform average of the iterates x^1..x^N.
pub fn sgd_fixed(
    oracle: &dyn StochasticOracle,
    problem: &ProblemSpec,
    config: &ConvexConfig,
    x0: &Point,
    stream: &mut RandomStream,
) -> Result<RunReport> {
    config.validate()?;
    let l = config.l0;
    let r = batch_size_convex(config.d0, l, config.epsilon)?;
    let start = std::time::Instant::now();

    let mut x = x0.clone();
    let mut sum = Point::zeros(x.dim());
    let mut total_t: u64 = 0;
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
        x = x.axpy(-1.0 / (2.0 * l), &g);
        x.check_finite(k)?;
        sum.add_assign(&x);
        let average = sum.scale(1.0 / (k + 1) as f64);
        if config.record_iterates {
            iterates.push(x.clone());
        }

        let objective_estimate = mini_batch_value(oracle, &x, &batch)?;
        let objective_exact = oracle.exact_value(&average);
        let grad_norm = oracle.exact_gradient(&x).map(|g| {
            verification_calls += 1;
            g.norm()
        });
        trace.push(TraceRow {
            k: k as u64,
            cumulative_t: total_t,
            l_value: l,
            batch_size: batch.len() as u64,
            objective_estimate,
            objective_exact,
            grad_norm,
            inner_trials: 1,
            wall_clock_ns: now_ns(config.record_timings, start),
        });

        if config.stop_on_accuracy {
            if let (Some(fs), Some(fa)) = (problem.known_opt_value, objective_exact) {
                if fa - fs <= config.epsilon {
                    termination = Termination::AccuracyReached;
                    break;
                }
            }
        }
    }

    let n = trace.len().max(1);
    let output_point = sum.scale(1.0 / n as f64);
    Ok(RunReport {
        output_point,
        output_rule: OutputRule::UniformAverage,
        trace,
        total_oracle_calls: total_t,
        termination,
        forced_acceptances: 0,
        verification_grad_calls: verification_calls,
        iterates,
    })
}

/// Result of one adaptive line-search round.
#[derive(Debug, Clone)]
pub struct LineSearchStep {
    pub next_point: Point,
    pub accepted_l: f64,
    /// Size of the batch drawn for this round (the first, largest trial batch
    /// is kept for every subsequent trial).
    pub batch_size: usize,
    pub trials: u32,
    /// Fresh oracle draws consumed by the round.
    pub draws: u64,
    /// High-probability mode only: the test never passed below l_hi and the
    /// step was accepted at the clip.
    pub forced: bool,
    /// Value estimate of the accepted candidate on the round's batch.
    pub objective_estimate: f64,
}

/// One round of the doubling line search of the adaptive convex solver:
/// warm start below the previous L, then double until the batch-evaluated
/// quadratic upper model accepts the candidate step.
pub fn line_search_round(
    oracle: &dyn StochasticOracle,
    x: &Point,
    l_prev: f64,
    config: &ConvexConfig,
    stream: &mut RandomStream,
    iteration: usize,
    budget_left: Option<u64>,
) -> Result<LineSearchStep> {
    let mut l = match config.mode {
        Mode::Practical => {
            let warm = l_prev / 4.0;
            match config.l_floor {
                Some(floor) => warm.max(floor),
                None => warm,
            }
        }
        Mode::HighProbability => (l_prev / 2.0).max(config.l_lo),
    };
    let mut batch: Option<Batch> = None;
    let mut gradient = Point::zeros(x.dim());
    let mut f_reference = 0.0;
    let mut draws = 0u64;
    let mut trials = 0u32;

    loop {
        trials += 1;
        l = match config.mode {
            Mode::Practical => 2.0 * l,
            Mode::HighProbability => (2.0 * l).min(config.l_hi),
        };
        let mut r = match config.mode {
            Mode::Practical => batch_size_convex(config.d0, l, config.epsilon)?,
            Mode::HighProbability => {
                let raw = config.theta * config.sigma0_sq() * config.l_hi * config.l_hi
                    / (l_prev * config.epsilon * config.l_lo * config.l_lo)
                    * config.confidence_factor();
                raw.max(1.0).ceil() as usize
            }
        };
        if let Some(rem) = budget_left {
            r = r.min(rem.max(1) as usize);
        }
        if batch.is_none() {
            let (g, drawn) = mini_batch_gradient(oracle, x, r, stream)?;
            draws += drawn.len() as u64;
            f_reference = mini_batch_value(oracle, x, &drawn)?;
            gradient = g;
            batch = Some(drawn);
        }
        let kept = batch.as_ref().unwrap();

        let candidate = x.axpy(-1.0 / (2.0 * l), &gradient);
        candidate.check_finite(iteration)?;
        let displacement = candidate.sub(x);
        let f_candidate = mini_batch_value(oracle, &candidate, kept)?;
        let accepted = armijo_accepts(
            f_candidate,
            f_reference,
            &gradient,
            &displacement,
            l,
            config.epsilon / 2.0,
        );
        let forced = !accepted
            && config.mode == Mode::HighProbability
            && l >= config.l_hi;
        if accepted || forced {
            return Ok(LineSearchStep {
                next_point: candidate,
                accepted_l: l,
                batch_size: kept.len(),
                trials,
                draws,
                forced,
                objective_estimate: f_candidate,
            });
        }
        if config.mode == Mode::Practical && 2.0 * l > config.l_cap {
            return Err(Error::LinesearchFailed {
                iteration,
                cap: config.l_cap,
            });
        }
    }
}

/// Adaptive stochastic gradient descent. The smoothness estimate is re-tuned
/// every iteration by `line_search_round`; the output is the 1/L-weighted
/// average of the iterates.
pub fn sgd_adaptive(
    oracle: &dyn StochasticOracle,
    problem: &ProblemSpec,
    config: &ConvexConfig,
    x0: &Point,
    stream: &mut RandomStream,
) -> Result<RunReport> {
    config.validate()?;
    let start = std::time::Instant::now();
    let mut x = x0.clone();
    let mut l = config.l0;
    let mut weighted_sum = Point::zeros(x.dim());
    let mut weight_total = 0.0;
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
        let step = match line_search_round(
            oracle,
            &x,
            l,
            config,
            stream,
            k,
            config.remaining(total_t),
        ) {
            Ok(step) => step,
            Err(e @ Error::LinesearchFailed { .. }) => {
                return Err(attach_termination(e, &mut trace));
            }
            Err(e) => return Err(e),
        };
        total_t += step.draws;
        x = step.next_point;
        l = step.accepted_l;
        if step.forced {
            forced_acceptances += 1;
        }
        weighted_sum.axpy_assign(1.0 / l, &x);
        weight_total += 1.0 / l;
        let average = weighted_sum.scale(1.0 / weight_total);
        if config.record_iterates {
            iterates.push(x.clone());
        }

        let objective_exact = oracle.exact_value(&average);
        let grad_norm = oracle.exact_gradient(&x).map(|g| {
            verification_calls += 1;
            g.norm()
        });
        trace.push(TraceRow {
            k: k as u64,
            cumulative_t: total_t,
            l_value: l,
            batch_size: step.batch_size as u64,
            objective_estimate: step.objective_estimate,
            objective_exact,
            grad_norm,
            inner_trials: step.trials,
            wall_clock_ns: now_ns(config.record_timings, start),
        });

        if config.stop_on_accuracy {
            if let (Some(fs), Some(fa)) = (problem.known_opt_value, objective_exact) {
                if fa - fs <= config.epsilon {
                    termination = Termination::AccuracyReached;
                    break;
                }
            }
        }
    }

    let output_point = if weight_total > 0.0 {
        weighted_sum.scale(1.0 / weight_total)
    } else {
        x0.clone()
    };
    Ok(RunReport {
        output_point,
        output_rule: OutputRule::WeightedAverage,
        trace,
        total_oracle_calls: total_t,
        termination,
        forced_acceptances,
        verification_grad_calls: verification_calls,
        iterates,
    })
}

fn attach_termination(e: Error, _trace: &mut [TraceRow]) -> Error {
    // The partial trace stays with the caller through the error message only;
    // harness runs record the failure per run without aborting the batch.
    e
}

/// Coefficient update of the accelerated scheme: the positive root of
/// L alpha^2 = A + alpha, so A_next = A + alpha satisfies L alpha^2 = A_next
/// identically.
pub fn accel_coefficients(a: f64, l: f64) -> (f64, f64) {
    debug_assert!(a >= 0.0 && l > 0.0);
    let alpha = (1.0 + (1.0 + 4.0 * a * l).sqrt()) / (2.0 * l);
    (alpha, a + alpha)
}

/// Current extrapolation state of the accelerated solver.
#[derive(Debug, Clone)]
pub struct AcceleratedState {
    pub a: f64,
    pub alpha_step: f64,
    pub x: Point,
    pub y: Point,
    pub u: Point,
}

/// Adaptive stochastic accelerated gradient method. Gradient samples are
/// taken at the extrapolated point y; the same doubling line search tunes L
/// with the acceleration-weighted slack. Output is the last iterate.
pub fn agd_adaptive(
    oracle: &dyn StochasticOracle,
    problem: &ProblemSpec,
    config: &ConvexConfig,
    x0: &Point,
    stream: &mut RandomStream,
) -> Result<RunReport> {
    config.validate()?;
    let start = std::time::Instant::now();
    let mut state = AcceleratedState {
        a: 0.0,
        alpha_step: 0.0,
        x: x0.clone(),
        y: x0.clone(),
        u: x0.clone(),
    };
    let mut l = config.l0;
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
        let mut batch: Option<Batch> = None;
        let mut trials = 0u32;
        let accepted;
        loop {
            trials += 1;
            trial_l = match config.mode {
                Mode::Practical => 2.0 * trial_l,
                Mode::HighProbability => (2.0 * trial_l).min(config.l_hi),
            };
            let (alpha, a_next) = accel_coefficients(state.a, trial_l);
            let mut r = match config.mode {
                Mode::Practical => {
                    (alpha * config.d0 / config.epsilon).max(1.0).ceil() as usize
                }
                Mode::HighProbability => {
                    let raw = config.theta
                        * alpha
                        * config.sigma0_sq()
                        * config.l_hi
                        * config.l_hi
                        / (config.epsilon * config.l_lo * config.l_lo)
                        * config.confidence_factor();
                    raw.max(1.0).ceil() as usize
                }
            };
            if let Some(rem) = config.remaining(total_t) {
                r = r.min(rem.max(1) as usize);
            }
            if batch.is_none() {
                let mut drawn = Batch::default();
                for _ in 0..r {
                    drawn.realizations.push(oracle.draw(stream));
                }
                total_t += drawn.len() as u64;
                batch = Some(drawn);
            }
            let kept = batch.as_ref().unwrap();

            let y = state.u.scale(alpha).axpy(state.a, &state.x).scale(1.0 / a_next);
            let g = batch_gradient_at(oracle, &y, kept)?;
            let u_next = state.u.axpy(-alpha, &g);
            let x_next = u_next.scale(alpha).axpy(state.a, &state.x).scale(1.0 / a_next);
            x_next.check_finite(k)?;
            let displacement = x_next.sub(&y);
            let f_y = mini_batch_value(oracle, &y, kept)?;
            let f_x_next = mini_batch_value(oracle, &x_next, kept)?;
            let slack = alpha / (2.0 * a_next) * config.epsilon;
            let ok = armijo_accepts(f_x_next, f_y, &g, &displacement, trial_l, slack);
            let forced =
                !ok && config.mode == Mode::HighProbability && trial_l >= config.l_hi;
            if ok || forced {
                if a_next <= state.a {
                    return Err(Error::InternalInvariant(format!(
                        "A must strictly increase, got {} -> {}",
                        state.a, a_next
                    )));
                }
                if forced {
                    forced_acceptances += 1;
                }
                accepted = (
                    x_next,
                    y,
                    u_next,
                    alpha,
                    a_next,
                    kept.len(),
                    f_x_next,
                );
                break;
            }
            if config.mode == Mode::Practical && 2.0 * trial_l > config.l_cap {
                return Err(Error::LinesearchFailed {
                    iteration: k,
                    cap: config.l_cap,
                });
            }
        }
        let (x_next, y, u_next, alpha, a_next, batch_size, f_est) = accepted;
        state = AcceleratedState {
            a: a_next,
            alpha_step: alpha,
            x: x_next,
            y,
            u: u_next,
        };
        l = trial_l;
        if config.record_iterates {
            iterates.push(state.x.clone());
        }

        let objective_exact = oracle.exact_value(&state.x);
        let grad_norm = oracle.exact_gradient(&state.x).map(|g| {
            verification_calls += 1;
            g.norm()
        });
        trace.push(TraceRow {
            k: k as u64,
            cumulative_t: total_t,
            l_value: l,
            batch_size: batch_size as u64,
            objective_estimate: f_est,
            objective_exact,
            grad_norm,
            inner_trials: trials,
            wall_clock_ns: now_ns(config.record_timings, start),
        });

        if config.stop_on_accuracy {
            if let (Some(fs), Some(fa)) = (problem.known_opt_value, objective_exact) {
                if fa - fs <= config.epsilon {
                    termination = Termination::AccuracyReached;
                    break;
                }
            }
        }
    }

    Ok(RunReport {
        output_point: state.x,
        output_rule: OutputRule::LastIterate,
        trace,
        total_oracle_calls: total_t,
        termination,
        forced_acceptances,
        verification_grad_calls: verification_calls,
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::make_additive_gaussian_oracle;
    use crate::problems::quadratic_problem;
    use approx::assert_abs_diff_eq;

    fn quadratic_setup(diag: &[f64], d: f64) -> (ProblemSpec, impl StochasticOracle) {
        let problem = quadratic_problem(diag, Point::zeros(diag.len())).unwrap();
        let oracle =
            make_additive_gaussian_oracle(problem.objective.clone(), d).unwrap();
        (problem, oracle)
    }

    #[test]
    fn batch_size_examples() {
        assert_eq!(batch_size_convex(100.0, 10.0, 0.1).unwrap(), 100);
        assert_eq!(batch_size_convex(0.0, 1.0, 0.1).unwrap(), 1);
        assert_eq!(batch_size_convex(1.0, 1.0, 0.3).unwrap(), 4);
        assert!(batch_size_convex(1.0, 0.0, 0.1).is_err());
        assert!(batch_size_convex(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn fixed_step_halves_on_unit_quadratic() {
        let (problem, oracle) = quadratic_setup(&[1.0, 1.0], 0.0);
        let mut config = ConvexConfig::practical(1e-6, 0.0, 1.0, 2);
        config.stop_on_accuracy = false;
        config.record_iterates = true;
        let mut stream = RandomStream::new(0, 0);
        let report =
            sgd_fixed(&oracle, &problem, &config, &Point(vec![1.0, 0.0]), &mut stream).unwrap();
        assert_eq!(report.iterates[0].0, vec![0.5, 0.0]);
        assert_eq!(report.iterates[1].0, vec![0.25, 0.0]);
        assert_eq!(report.output_point.0, vec![0.375, 0.0]);
        assert_eq!(report.total_oracle_calls, 2);
    }

    #[test]
    fn fixed_step_single_iteration_output_is_first_iterate() {
        let (problem, oracle) = quadratic_setup(&[1.0, 1.0], 0.0);
        let mut config = ConvexConfig::practical(1e-6, 0.0, 1.0, 1);
        config.stop_on_accuracy = false;
        let mut stream = RandomStream::new(0, 0);
        let report =
            sgd_fixed(&oracle, &problem, &config, &Point(vec![1.0, 0.0]), &mut stream).unwrap();
        assert_eq!(report.output_point.0, vec![0.5, 0.0]);
    }

    #[test]
    fn fixed_step_meets_rate_budget_on_quadratic() {
        // L = 10, R = 1, D = 0: N = ceil(L R^2 / eps) reaches eps.
        let eps = 1e-2f64;
        let (problem, oracle) = quadratic_setup(&[10.0, 10.0], 0.0);
        let n = (10.0 / eps).ceil() as usize;
        let mut config = ConvexConfig::practical(eps, 0.0, 10.0, n);
        config.stop_on_accuracy = false;
        let mut stream = RandomStream::new(0, 0);
        let x0 = Point(vec![(0.5f64).sqrt(), (0.5f64).sqrt()]);
        let report = sgd_fixed(&oracle, &problem, &config, &x0, &mut stream).unwrap();
        let gap = problem.suboptimality(&report.output_point).unwrap();
        assert!(gap <= eps, "gap {gap}");
    }

    #[test]
    fn line_search_accepts_first_trial_per_hand_computation() {
        // f = x^2/2, L_k = 4, eps = 0.1, x = 1: trial L = 2 accepts, x+ = 0.75.
        let (_, oracle) = quadratic_setup(&[1.0], 0.0);
        let config = ConvexConfig::practical(0.1, 0.0, 4.0, 10);
        let mut stream = RandomStream::new(0, 0);
        let step =
            line_search_round(&oracle, &Point(vec![1.0]), 4.0, &config, &mut stream, 0, None)
                .unwrap();
        assert_eq!(step.accepted_l, 2.0);
        assert_eq!(step.trials, 1);
        assert_abs_diff_eq!(step.next_point.0[0], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn line_search_doubles_to_acceptance_per_hand_computation() {
        // f = x^2/2, L_k = 1/4, eps = 0.01: L = 1/8 and 1/4 fail, 1/2 accepts
        // with x+ = 0.
        let (_, oracle) = quadratic_setup(&[1.0], 0.0);
        let config = ConvexConfig::practical(0.01, 0.0, 0.25, 10);
        let mut stream = RandomStream::new(0, 0);
        let step = line_search_round(
            &oracle,
            &Point(vec![1.0]),
            0.25,
            &config,
            &mut stream,
            0,
            None,
        )
        .unwrap();
        assert_eq!(step.accepted_l, 0.5);
        assert_eq!(step.trials, 3);
        assert_abs_diff_eq!(step.next_point.0[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_variance_line_search_uses_batch_of_one() {
        let (_, oracle) = quadratic_setup(&[1.0], 0.0);
        let config = ConvexConfig::practical(0.1, 0.0, 1.0, 10);
        let mut stream = RandomStream::new(0, 0);
        let step =
            line_search_round(&oracle, &Point(vec![1.0]), 1.0, &config, &mut stream, 0, None)
                .unwrap();
        assert_eq!(step.batch_size, 1);
    }

    #[test]
    fn line_search_fails_past_cap_on_nonsmooth_step() {
        // An oracle whose declared variance is wildly understated cannot make
        // the test pass; the cap must surface as an error, not a hang.
        let (_, oracle) = quadratic_setup(&[1.0], 0.0);
        let mut config = ConvexConfig::practical(1e-9, 0.0, 1.0, 10);
        config.l_cap = 4.0;
        // A function value oracle that always disappoints is simulated by an
        // absurdly small slack with a far-from-quadratic candidate; here the
        // quadratic always accepts at L >= 1/2, so instead check the cap path
        // by setting the cap below the accepting L.
        config.l_cap = 0.2;
        let mut stream = RandomStream::new(0, 0);
        let result = line_search_round(
            &oracle,
            &Point(vec![1.0]),
            0.0625,
            &config,
            &mut stream,
            3,
            None,
        );
        assert!(matches!(result, Err(Error::LinesearchFailed { iteration: 3, .. })));
    }

    #[test]
    fn adaptive_descends_l_and_converges_on_quadratic() {
        let (problem, oracle) = quadratic_setup(&[1.0, 1.0], 0.0);
        let mut config = ConvexConfig::practical(1e-4, 0.0, 64.0, 200);
        config.stop_on_accuracy = false;
        let mut stream = RandomStream::new(0, 0);
        let x0 = Point(vec![1.0, 0.0]);
        let report = sgd_adaptive(&oracle, &problem, &config, &x0, &mut stream).unwrap();
        // Warm-started doubling lets L fall by at most a factor 2 per
        // iteration from L0 = 64 toward the accepting level.
        let ls: Vec<f64> = report.trace.iter().map(|r| r.l_value).collect();
        assert!(ls[0] <= 64.0);
        for w in ls.windows(2) {
            assert!(w[1] >= w[0] / 2.0 - 1e-12);
        }
        assert!(ls.iter().take(8).any(|&l| l <= 2.0), "{ls:?}");
        let gap = problem.suboptimality(&report.output_point).unwrap();
        assert!(gap <= 1e-4, "gap {gap}");
    }

    #[test]
    fn adaptive_single_iteration_weighted_average_is_the_iterate() {
        let (problem, oracle) = quadratic_setup(&[1.0, 1.0], 0.0);
        let mut config = ConvexConfig::practical(0.1, 0.0, 4.0, 1);
        config.stop_on_accuracy = false;
        config.record_iterates = true;
        let mut stream = RandomStream::new(0, 0);
        let report =
            sgd_adaptive(&oracle, &problem, &config, &Point(vec![1.0, 0.0]), &mut stream)
                .unwrap();
        assert_eq!(report.output_point, report.iterates[0]);
    }

    #[test]
    fn accel_coefficients_match_hand_values() {
        let (alpha, a_next) = accel_coefficients(0.0, 1.0);
        assert_abs_diff_eq!(alpha, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a_next, 1.0, epsilon = 1e-15);
        let (alpha, a_next) = accel_coefficients(1.0, 1.0);
        assert_abs_diff_eq!(alpha, (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a_next, 1.0 + (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn accelerated_reaches_accuracy_within_sqrt_budget() {
        // Deterministic quadratic with L = 1: the accelerated solver reaches
        // eps within about 3 sqrt(R^2 / eps) iterations.
        let eps = 1e-4;
        let (problem, oracle) = quadratic_setup(&[1.0, 1.0], 0.0);
        let n = (3.0 * (1.0f64 / eps).sqrt()).ceil() as usize;
        let mut config = ConvexConfig::practical(eps, 0.0, 1.0, n);
        config.stop_on_accuracy = false;
        let mut stream = RandomStream::new(0, 0);
        let x0 = Point(vec![(0.5f64).sqrt(), (0.5f64).sqrt()]);
        let report = agd_adaptive(&oracle, &problem, &config, &x0, &mut stream).unwrap();
        let gap = problem.suboptimality(&report.output_point).unwrap();
        assert!(gap <= eps, "gap {gap} after {n} iterations");
    }

    #[test]
    fn accelerated_recurrences_hold_on_trace() {
        let (problem, oracle) = quadratic_setup(&[10.0, 1.0], 0.0);
        let mut config = ConvexConfig::practical(1e-5, 0.0, 10.0, 50);
        config.stop_on_accuracy = false;
        let mut stream = RandomStream::new(5, 0);
        let x0 = Point(vec![1.0, -1.0]);
        // Recompute A_k from the accepted L values: alpha is the positive root
        // at each accepted L, so L alpha^2 = A_{k+1} must hold step by step.
        let report = agd_adaptive(&oracle, &problem, &config, &x0, &mut stream).unwrap();
        let mut a = 0.0;
        for row in &report.trace {
            let (alpha, a_next) = accel_coefficients(a, row.l_value);
            assert!(a_next > a);
            assert_abs_diff_eq!(
                row.l_value * alpha * alpha,
                a_next,
                epsilon = 1e-10 * a_next
            );
            a = a_next;
        }
    }
}
