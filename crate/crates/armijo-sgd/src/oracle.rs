//! Stochastic first-order oracle abstraction and mini-batch aggregation.
//!
//! An oracle hands out unbiased gradient and value samples of the true
//! objective. A draw is reified as a [`Realization`] so that, during a line
//! search, the same realizations can be re-evaluated at different points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::point::Point;
use crate::problems::Objective;

/// Seeded, stream-addressable RNG. Two streams with distinct
/// `(seed, stream_id)` pairs are statistically independent; identical pairs
/// reproduce bit-identical sequences.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RandomStream {
            rng,
            seed,
            stream_id,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn index(&mut self, bound: usize) -> usize {
        use rand::Rng;
        self.rng.random_range(0..bound)
    }

    pub fn uniform(&mut self) -> f64 {
        use rand::Rng;
        self.rng.random::<f64>()
    }
}

/// One oracle draw, kept around so both the gradient and the value sample of
/// the same xi can be evaluated at several points.
#[derive(Debug, Clone)]
pub enum Realization {
    /// Deterministic oracle, no noise.
    Exact,
    /// Additive gradient noise eta; the value sample is f(x) + <eta, x>.
    GradientShift(Vec<f64>),
    /// A uniformly drawn example index of a finite-sum objective.
    Index(usize),
}

/// A cached set of realizations drawn for one gradient evaluation.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub realizations: Vec<Realization>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }
}

/// Abstract stochastic first-order oracle.
///
/// Sample paths are deterministic given a `RandomStream` state; oracles are
/// immutable after construction and safe to share across concurrent runs, each
/// run owning its private stream.
pub trait StochasticOracle: Sync + Send {
    fn dim(&self) -> usize;

    /// Draw one realization xi.
    fn draw(&self, stream: &mut RandomStream) -> Realization;

    /// Gradient sample for a fixed realization: grad f(x, xi).
    fn gradient_at(&self, x: &Point, xi: &Realization) -> Point;

    /// Value sample for a fixed realization: f(x, xi).
    fn value_at(&self, x: &Point, xi: &Realization) -> f64;

    /// Exact gradient when the underlying objective is known (test problems).
    fn exact_gradient(&self, x: &Point) -> Option<Point>;

    /// Exact objective value when available.
    fn exact_value(&self, x: &Point) -> Option<f64>;

    /// Declared second-moment bound D on E||grad f(x, xi) - grad f(x)||^2.
    fn variance_bound(&self) -> f64;

    /// Optional sub-Gaussian parameter sigma^2; exposed separately from D.
    fn sub_gaussian_bound(&self) -> Option<f64> {
        None
    }

    /// One fresh gradient sample (draws a new realization).
    fn sample_gradient(&self, x: &Point, stream: &mut RandomStream) -> Point {
        let xi = self.draw(stream);
        self.gradient_at(x, &xi)
    }

    /// One fresh value sample.
    fn sample_value(&self, x: &Point, stream: &mut RandomStream) -> f64 {
        let xi = self.draw(stream);
        self.value_at(x, &xi)
    }
}

/// Averages `r` fresh gradient samples at `x`, returning the mini-batch
/// gradient together with the drawn realizations. Consumes exactly `r` draws;
/// the caller accounts for them via `batch.len()`.
pub fn mini_batch_gradient(
    oracle: &dyn StochasticOracle,
    x: &Point,
    r: usize,
    stream: &mut RandomStream,
) -> Result<(Point, Batch)> {
    assert!(r >= 1, "batch size must be at least 1");
    let mut batch = Batch {
        realizations: Vec::with_capacity(r),
    };
    let mut sum = Point::zeros(x.dim());
    for index in 0..r {
        let xi = oracle.draw(stream);
        let g = oracle.gradient_at(x, &xi);
        if !g.is_finite() {
            return Err(Error::OracleFault { index });
        }
        sum.add_assign(&g);
        batch.realizations.push(xi);
    }
    Ok((sum.scale(1.0 / r as f64), batch))
}

/// Averages the gradient samples of an already-drawn batch at a (possibly
/// different) point `x`.
pub fn batch_gradient_at(oracle: &dyn StochasticOracle, x: &Point, batch: &Batch) -> Result<Point> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut sum = Point::zeros(x.dim());
    for (index, xi) in batch.realizations.iter().enumerate() {
        let g = oracle.gradient_at(x, xi);
        if !g.is_finite() {
            return Err(Error::OracleFault { index });
        }
        sum.add_assign(&g);
    }
    Ok(sum.scale(1.0 / batch.len() as f64))
}

/// Sample-average value estimate over the cached realizations, per the
/// line-search rule that the gradient and value estimates share one batch.
pub fn mini_batch_value(oracle: &dyn StochasticOracle, x: &Point, batch: &Batch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let sum: f64 = batch
        .realizations
        .iter()
        .map(|xi| oracle.value_at(x, xi))
        .sum();
    Ok(sum / batch.len() as f64)
}

/// Deterministic objective wrapped with isotropic Gaussian gradient noise
/// N(0, (D/n) I), so the total gradient noise second moment is D. Value
/// samples are f(x) + <eta, x>, which keeps the sampled field integrable and
/// unbiased. Gaussian noise also satisfies the sub-Gaussian condition, with
/// sigma^2 reported proportional to D.
pub struct GaussianOracle {
    base: Arc<dyn Objective>,
    variance: f64,
    per_coordinate_std: f64,
}

/// Builds the additive-Gaussian oracle around a deterministic objective.
pub fn make_additive_gaussian_oracle(
    base: Arc<dyn Objective>,
    variance: f64,
) -> Result<GaussianOracle> {
    if variance < 0.0 || !variance.is_finite() {
        return Err(Error::Config(format!(
            "noise variance must be a finite non-negative number, got {variance}"
        )));
    }
    let n = base.dim();
    Ok(GaussianOracle {
        base,
        variance,
        per_coordinate_std: (variance / n as f64).sqrt(),
    })
}

impl StochasticOracle for GaussianOracle {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn draw(&self, stream: &mut RandomStream) -> Realization {
        if self.variance == 0.0 {
            return Realization::Exact;
        }
        let noise = (0..self.dim())
            .map(|_| self.per_coordinate_std * stream.standard_normal())
            .collect();
        Realization::GradientShift(noise)
    }

    fn gradient_at(&self, x: &Point, xi: &Realization) -> Point {
        let g = self.base.gradient(x);
        match xi {
            Realization::Exact => g,
            Realization::GradientShift(noise) => {
                g.add(&Point(noise.clone()))
            }
            Realization::Index(_) => panic!("index realization fed to a Gaussian oracle"),
        }
    }

    fn value_at(&self, x: &Point, xi: &Realization) -> f64 {
        let f = self.base.value(x);
        match xi {
            Realization::Exact => f,
            Realization::GradientShift(noise) => {
                f + noise.iter().zip(&x.0).map(|(a, b)| a * b).sum::<f64>()
            }
            Realization::Index(_) => panic!("index realization fed to a Gaussian oracle"),
        }
    }

    fn exact_gradient(&self, x: &Point) -> Option<Point> {
        Some(self.base.gradient(x))
    }

    fn exact_value(&self, x: &Point) -> Option<f64> {
        Some(self.base.value(x))
    }

    fn variance_bound(&self) -> f64 {
        self.variance
    }

    fn sub_gaussian_bound(&self) -> Option<f64> {
        Some(self.variance)
    }
}
