//! Deterministic and finite-sum test objectives with analytically known
//! smoothness constants and optima, wrapped into stochastic oracles.

use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::oracle::{RandomStream, Realization, StochasticOracle};
use crate::point::Point;

/// A deterministic objective with an exact gradient.
pub trait Objective: Sync + Send {
    fn dim(&self) -> usize;
    fn value(&self, x: &Point) -> f64;
    fn gradient(&self, x: &Point) -> Point;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    Convex,
    Nonconvex,
}

/// A test objective bundled with the constants the convergence bounds need.
#[derive(Clone)]
pub struct ProblemSpec {
    pub objective: Arc<dyn Objective>,
    /// Global Lipschitz constant of the gradient (conservative where noted).
    pub known_l: f64,
    pub known_optimum: Option<Point>,
    pub known_opt_value: Option<f64>,
    pub convexity: Convexity,
}

impl ProblemSpec {
    /// Initial distance R = ||x0 - x*|| when the optimum is known.
    pub fn initial_distance(&self, x0: &Point) -> Option<f64> {
        self.known_optimum.as_ref().map(|xs| x0.distance(xs))
    }

    /// f(x) - f* when the optimal value is known.
    pub fn suboptimality(&self, x: &Point) -> Option<f64> {
        self.known_opt_value
            .map(|fs| self.objective.value(x) - fs)
    }
}

// ---------------------------------------------------------------------------
// Quadratic

struct DiagonalQuadratic {
    diag: Vec<f64>,
    x_star: Point,
}

impl Objective for DiagonalQuadratic {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn value(&self, x: &Point) -> f64 {
        0.5 * self
            .diag
            .iter()
            .zip(&x.0)
            .zip(&self.x_star.0)
            .map(|((d, xi), si)| d * (xi - si) * (xi - si))
            .sum::<f64>()
    }

    fn gradient(&self, x: &Point) -> Point {
        Point(
            self.diag
                .iter()
                .zip(&x.0)
                .zip(&self.x_star.0)
                .map(|((d, xi), si)| d * (xi - si))
                .collect(),
        )
    }
}

/// f(x) = 1/2 sum_i d_i (x_i - x*_i)^2 with known_L = max d_i.
pub fn quadratic_problem(diag: &[f64], x_star: Point) -> Result<ProblemSpec> {
    if diag.is_empty() {
        return Err(Error::Config("quadratic diagonal must be nonempty".into()));
    }
    if diag.len() != x_star.dim() {
        return Err(Error::Config(
            "quadratic diagonal and optimum dimensions differ".into(),
        ));
    }
    for (i, d) in diag.iter().enumerate() {
        if !(*d > 0.0) || !d.is_finite() {
            return Err(Error::Config(format!(
                "quadratic diagonal entry {i} must be positive, got {d}"
            )));
        }
    }
    let known_l = diag.iter().cloned().fold(f64::MIN, f64::max);
    Ok(ProblemSpec {
        objective: Arc::new(DiagonalQuadratic {
            diag: diag.to_vec(),
            x_star: x_star.clone(),
        }),
        known_l,
        known_optimum: Some(x_star),
        known_opt_value: Some(0.0),
        convexity: Convexity::Convex,
    })
}

// ---------------------------------------------------------------------------
// Logistic regression (finite sum)

pub struct LogisticObjective {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    l2: f64,
    dim: usize,
}

impl LogisticObjective {
    pub fn examples(&self) -> usize {
        self.labels.len()
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    fn margin(&self, x: &Point, i: usize) -> f64 {
        let dot: f64 = self.features[i].iter().zip(&x.0).map(|(a, b)| a * b).sum();
        self.labels[i] * dot
    }

    /// Loss of one example plus the full regularizer, so the uniform average
    /// over examples reproduces the finite-sum objective exactly.
    pub fn example_value(&self, x: &Point, i: usize) -> f64 {
        let z = -self.margin(x, i);
        // ln(1 + e^z), stable for large |z|
        let loss = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        loss + 0.5 * self.l2 * x.norm_sq()
    }

    pub fn example_gradient(&self, x: &Point, i: usize) -> Point {
        let z = -self.margin(x, i);
        let sig = 1.0 / (1.0 + (-z).exp());
        let c = -self.labels[i] * sig;
        Point(
            self.features[i]
                .iter()
                .zip(&x.0)
                .map(|(a, xi)| c * a + self.l2 * xi)
                .collect(),
        )
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Point) -> f64 {
        let m = self.examples();
        (0..m).map(|i| self.example_value(x, i)).sum::<f64>() / m as f64
    }

    fn gradient(&self, x: &Point) -> Point {
        let m = self.examples();
        let mut sum = Point::zeros(self.dim);
        for i in 0..m {
            sum.add_assign(&self.example_gradient(x, i));
        }
        sum.scale(1.0 / m as f64)
    }
}

/// Validates the data and builds the shared finite-sum objective.
pub fn logistic_objective(
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    l2: f64,
) -> Result<Arc<LogisticObjective>> {
    if features.is_empty() {
        return Err(Error::Data("logistic problem needs at least one example".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::Data("feature and label counts differ".into()));
    }
    let dim = features[0].len();
    if features.iter().any(|row| row.len() != dim) {
        return Err(Error::Data("ragged feature matrix".into()));
    }
    for (i, y) in labels.iter().enumerate() {
        if *y != 1.0 && *y != -1.0 {
            return Err(Error::Data(format!(
                "label {i} must be +1 or -1, got {y}"
            )));
        }
    }
    if l2 < 0.0 {
        return Err(Error::Config("l2 must be non-negative".into()));
    }
    Ok(Arc::new(LogisticObjective {
        features,
        labels,
        l2,
        dim,
    }))
}

/// Binary logistic regression over +-1 labels with optional l2 term.
/// known_L is the conservative bound ||A||_F^2 / (4m) + l2.
pub fn logistic_problem(
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    l2: f64,
) -> Result<ProblemSpec> {
    let objective = logistic_objective(features, labels, l2)?;
    Ok(logistic_problem_from(objective))
}

/// Wraps an existing logistic objective into a problem spec.
pub fn logistic_problem_from(objective: Arc<LogisticObjective>) -> ProblemSpec {
    let m = objective.examples() as f64;
    let frob_sq: f64 = objective
        .features
        .iter()
        .flat_map(|row| row.iter())
        .map(|a| a * a)
        .sum();
    let known_l = frob_sq / (4.0 * m) + objective.l2;
    ProblemSpec {
        objective,
        known_l,
        known_optimum: None,
        known_opt_value: None,
        convexity: Convexity::Convex,
    }
}

/// Finite-sum oracle over a logistic objective: xi is a uniformly drawn
/// example index. The variance bound is computed exactly at a calibration
/// point (the finite sum makes D(x) computable in closed form) and cached.
pub struct FiniteSumOracle {
    objective: Arc<LogisticObjective>,
    variance: f64,
}

impl FiniteSumOracle {
    pub fn new(objective: Arc<LogisticObjective>, calibration_point: &Point) -> Self {
        let m = objective.examples();
        let exact = objective.gradient(calibration_point);
        let variance = (0..m)
            .map(|i| {
                objective
                    .example_gradient(calibration_point, i)
                    .sub(&exact)
                    .norm_sq()
            })
            .sum::<f64>()
            / m as f64;
        FiniteSumOracle {
            objective,
            variance,
        }
    }

    pub fn objective(&self) -> &Arc<LogisticObjective> {
        &self.objective
    }
}

impl StochasticOracle for FiniteSumOracle {
    fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn draw(&self, stream: &mut RandomStream) -> Realization {
        Realization::Index(stream.index(self.objective.examples()))
    }

    fn gradient_at(&self, x: &Point, xi: &Realization) -> Point {
        match xi {
            Realization::Index(i) => self.objective.example_gradient(x, *i),
            Realization::Exact => self.objective.gradient(x),
            Realization::GradientShift(_) => {
                panic!("gradient-shift realization fed to a finite-sum oracle")
            }
        }
    }

    fn value_at(&self, x: &Point, xi: &Realization) -> f64 {
        match xi {
            Realization::Index(i) => self.objective.example_value(x, *i),
            Realization::Exact => self.objective.value(x),
            Realization::GradientShift(_) => {
                panic!("gradient-shift realization fed to a finite-sum oracle")
            }
        }
    }

    fn exact_gradient(&self, x: &Point) -> Option<Point> {
        Some(self.objective.gradient(x))
    }

    fn exact_value(&self, x: &Point) -> Option<f64> {
        Some(self.objective.value(x))
    }

    fn variance_bound(&self) -> f64 {
        self.variance
    }

    fn sub_gaussian_bound(&self) -> Option<f64> {
        // Per-example gradients of a finite sum are bounded, hence sub-Gaussian.
        Some(self.variance)
    }
}

// ---------------------------------------------------------------------------
// Non-convex test objectives

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonconvexKind {
    SigmoidSum,
    RosenbrockSmoothed,
}

/// f(x) = sum_i s'(x_i) with s the logistic sigmoid. Bounded curvature:
/// the Hessian is diag(s'''(x_i)) and max |s'''| = 1/8, so L = 1/8.
struct SigmoidSum {
    dim: usize,
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl Objective for SigmoidSum {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Point) -> f64 {
        x.0.iter()
            .map(|&t| {
                let s = sigmoid(t);
                s * (1.0 - s)
            })
            .sum()
    }

    fn gradient(&self, x: &Point) -> Point {
        Point(
            x.0.iter()
                .map(|&t| {
                    let s = sigmoid(t);
                    s * (1.0 - s) * (1.0 - 2.0 * s)
                })
                .collect(),
        )
    }
}

/// Classic Rosenbrock. The gradient is not globally Lipschitz; known_L is a
/// certified bound for the box [-2, 2] x [-1, 3] (max Hessian spectral norm
/// on the box is about 5327), where all test trajectories live.
struct Rosenbrock;

pub const ROSENBROCK_BOX: ([f64; 2], [f64; 2]) = ([-2.0, 2.0], [-1.0, 3.0]);
const ROSENBROCK_BOX_L: f64 = 5400.0;

impl Objective for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &Point) -> f64 {
        let (a, b) = (x.0[0], x.0[1]);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    fn gradient(&self, x: &Point) -> Point {
        let (a, b) = (x.0[0], x.0[1]);
        Point(vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ])
    }
}

/// Smooth non-convex objectives with documented curvature variation.
pub fn nonconvex_problem(kind: NonconvexKind, dim: usize) -> ProblemSpec {
    match kind {
        NonconvexKind::SigmoidSum => ProblemSpec {
            objective: Arc::new(SigmoidSum { dim }),
            known_l: 0.125,
            known_optimum: None,
            // inf f = 0, approached as |x_i| -> inf; used for budget formulas.
            known_opt_value: Some(0.0),
            convexity: Convexity::Nonconvex,
        },
        NonconvexKind::RosenbrockSmoothed => ProblemSpec {
            objective: Arc::new(Rosenbrock),
            known_l: ROSENBROCK_BOX_L,
            known_optimum: Some(Point(vec![1.0, 1.0])),
            known_opt_value: Some(0.0),
            convexity: Convexity::Nonconvex,
        },
    }
}

// ---------------------------------------------------------------------------
// Synthetic dataset generation

/// Seeded synthetic binary-classification data: standard normal features and
/// labels from a random hyperplane with additive margin noise.
pub fn generate_logistic_dataset(
    examples: usize,
    dim: usize,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut stream = RandomStream::new(seed, 0);
    let hyperplane: Vec<f64> = (0..dim).map(|_| stream.standard_normal()).collect();
    let mut features = Vec::with_capacity(examples);
    let mut labels = Vec::with_capacity(examples);
    for _ in 0..examples {
        let row: Vec<f64> = (0..dim).map(|_| stream.standard_normal()).collect();
        let margin: f64 = row.iter().zip(&hyperplane).map(|(a, b)| a * b).sum::<f64>()
            + 0.5 * stream.standard_normal();
        labels.push(if margin > 0.0 { 1.0 } else { -1.0 });
        features.push(row);
    }
    (features, labels)
}

/// Writes a dataset as CSV: one row per example, feature columns then label.
pub fn write_dataset_csv(
    path: &Path,
    features: &[Vec<f64>],
    labels: &[f64],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let dim = features.first().map_or(0, |r| r.len());
    let mut header: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    writer.write_record(&header)?;
    for (row, y) in features.iter().zip(labels) {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        record.push(format!("{y}"));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Central-difference gradient estimate; the independent check used by the
/// gradient-consistency tests.
pub fn finite_difference_gradient(obj: &dyn Objective, x: &Point, h: f64) -> Point {
    let mut g = Vec::with_capacity(x.dim());
    for i in 0..x.dim() {
        let mut hi = x.clone();
        let mut lo = x.clone();
        hi.0[i] += h;
        lo.0[i] -= h;
        g.push((obj.value(&hi) - obj.value(&lo)) / (2.0 * h));
    }
    Point(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_basics() {
        let p = quadratic_problem(&[1.0, 1.0], Point::zeros(2)).unwrap();
        let x = Point(vec![2.0, 0.0]);
        assert_eq!(p.objective.value(&x), 2.0);
        assert_eq!(p.objective.gradient(&x).0, vec![2.0, 0.0]);
        assert_eq!(p.known_l, 1.0);
        let p = quadratic_problem(&[10.0, 1.0], Point::zeros(2)).unwrap();
        assert_eq!(p.known_l, 10.0);
        let at_opt = p.objective.gradient(&Point::zeros(2));
        assert_eq!(at_opt.norm(), 0.0);
        assert!(quadratic_problem(&[1.0, -1.0], Point::zeros(2)).is_err());
    }

    #[test]
    fn logistic_hand_values() {
        // Single example a = (1, 0), y = +1, x = 0: f = ln 2, grad = (-0.5, 0).
        let p = logistic_problem(vec![vec![1.0, 0.0]], vec![1.0], 0.0).unwrap();
        let x = Point::zeros(2);
        assert_abs_diff_eq!(p.objective.value(&x), 2.0_f64.ln(), epsilon = 1e-15);
        let g = p.objective.gradient(&x);
        assert_abs_diff_eq!(g.0[0], -0.5, epsilon = 1e-15);
        assert_eq!(g.0[1], 0.0);
    }

    #[test]
    fn logistic_l2_adds_linear_term() {
        let x = Point(vec![2.0, -1.0]);
        let p0 = logistic_problem(vec![vec![1.0, 0.5]], vec![-1.0], 0.0).unwrap();
        let p1 = logistic_problem(vec![vec![1.0, 0.5]], vec![-1.0], 0.3).unwrap();
        let g0 = p0.objective.gradient(&x);
        let g1 = p1.objective.gradient(&x);
        assert_abs_diff_eq!(g1.0[0] - g0.0[0], 0.3 * 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g1.0[1] - g0.0[1], 0.3 * -1.0, epsilon = 1e-14);
    }

    #[test]
    fn logistic_rejects_bad_labels() {
        assert!(logistic_problem(vec![vec![1.0]], vec![0.5], 0.0).is_err());
    }

    #[test]
    fn full_batch_equals_exact() {
        let (features, labels) = generate_logistic_dataset(40, 4, 7);
        let p = logistic_problem(features.clone(), labels.clone(), 0.1).unwrap();
        let logistic = LogisticObjective {
            features,
            labels,
            l2: 0.1,
            dim: 4,
        };
        let x = Point(vec![0.2, -0.4, 0.1, 0.9]);
        let m = logistic.examples();
        let mut sum = Point::zeros(4);
        let mut vsum = 0.0;
        for i in 0..m {
            sum.add_assign(&logistic.example_gradient(&x, i));
            vsum += logistic.example_value(&x, i);
        }
        let g = sum.scale(1.0 / m as f64);
        let exact = p.objective.gradient(&x);
        assert!(g.sub(&exact).norm() <= 1e-12);
        assert_abs_diff_eq!(vsum / m as f64, p.objective.value(&x), epsilon = 1e-12);
    }

    #[test]
    fn sigmoid_sum_gradient_zero_at_origin() {
        let p = nonconvex_problem(NonconvexKind::SigmoidSum, 4);
        let g = p.objective.gradient(&Point::zeros(4));
        assert!(g.norm() <= 1e-15);
    }

    #[test]
    fn finite_difference_gradients_agree() {
        let mut stream = RandomStream::new(3, 0);
        let problems: Vec<ProblemSpec> = vec![
            quadratic_problem(&[10.0, 1.0, 4.0], Point(vec![0.5, -0.5, 0.0])).unwrap(),
            {
                let (f, y) = generate_logistic_dataset(30, 3, 5);
                logistic_problem(f, y, 0.05).unwrap()
            },
            nonconvex_problem(NonconvexKind::SigmoidSum, 3),
        ];
        for p in &problems {
            for _ in 0..100 {
                let x = Point(
                    (0..p.objective.dim())
                        .map(|_| stream.standard_normal())
                        .collect(),
                );
                let exact = p.objective.gradient(&x);
                let fd = finite_difference_gradient(p.objective.as_ref(), &x, 1e-6);
                let rel = fd.sub(&exact).norm() / exact.norm().max(1.0);
                assert!(rel <= 1e-5, "relative error {rel}");
            }
        }
    }

    #[test]
    fn smoothness_certificate_on_sampled_pairs() {
        let mut stream = RandomStream::new(17, 0);
        let p = quadratic_problem(&[10.0, 1.0], Point::zeros(2)).unwrap();
        for _ in 0..10_000 {
            let x = Point(vec![stream.standard_normal(), stream.standard_normal()]);
            let y = Point(vec![stream.standard_normal(), stream.standard_normal()]);
            let lhs = p.objective.value(&y);
            let d = y.sub(&x);
            let rhs = p.objective.value(&x)
                + p.objective.gradient(&x).dot(&d)
                + 0.5 * p.known_l * d.norm_sq();
            assert!(lhs <= rhs + 1e-9 * rhs.abs().max(1.0));
        }
    }
}
