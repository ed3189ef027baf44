//! Monte Carlo pricing under the minimal martingale measure, either by direct
//! simulation under that measure or by reweighting physical paths with the
//! density process, and the hedging backtester.

mod backtest;

pub use backtest::{backtest_hedge, BacktestConfig, BacktestReport};

use crate::error::{Error, Result};
use crate::market::{MarketModel, Measure, PathEnd, PathSimulator};
use crate::numerics::{normal_quantile_two_sided, pairwise_sum};
use crate::pricing::PayoffSpec;
use crate::semi_markov::RegimeState;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

/// Confidence level of the interval reported with every estimate.
pub const DEFAULT_CI_LEVEL: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Sample mean and standard error of `values` in their given order.
    pub fn from_samples(values: &[f64], seed: u64, level: f64) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::InvalidParameter("need at least two paths".into()));
        }
        let mean = pairwise_sum(values) / n as f64;
        let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        if !(mean.is_finite() && se.is_finite()) {
            return Err(Error::NonFinite("Monte Carlo estimate".into()));
        }
        let z = normal_quantile_two_sided(level);
        Ok(Self {
            value: mean,
            std_error: se,
            ci_low: mean - z * se,
            ci_high: mean + z * se,
            level,
            n_paths: n,
            seed,
        })
    }

    /// Same estimate with the interval recomputed at another level.
    pub fn at_level(&self, level: f64) -> Self {
        let z = normal_quantile_two_sided(level);
        Self {
            ci_low: self.value - z * self.std_error,
            ci_high: self.value + z * self.std_error,
            level,
            ..self.clone()
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }
}

/// Starting point of simulated paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McStart {
    pub t0: f64,
    pub s0: f64,
    pub state: RegimeState,
}

impl McStart {
    pub fn new(s0: f64, x0: usize, y0: f64) -> Self {
        Self {
            t0: 0.0,
            s0,
            state: RegimeState { x: x0, y: y0 },
        }
    }
}

/// Random stream of path `index` under master seed `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Evaluates `f` on the terminal state of `n_paths` independent paths, in
/// path order. Results do not depend on the number of worker threads.
pub fn simulate_terminal<F>(
    model: &MarketModel,
    measure: Measure,
    start: McStart,
    n_paths: usize,
    seed: u64,
    f: F,
) -> Result<Vec<f64>>
where
    F: Fn(&PathEnd) -> f64 + Sync,
{
    let sim = PathSimulator::new(model, measure)?;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = path_rng(seed, idx);
            let end = sim.terminal(start.t0, start.s0, start.state, &mut rng)?;
            Ok(f(&end))
        })
        .collect()
}

/// Discounted payoff expectation under the minimal martingale measure by
/// direct simulation with thinned jump intensities.
pub fn price_mc_q(
    model: &MarketModel,
    payoff: &PayoffSpec,
    start: McStart,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    payoff.validate()?;
    let v = simulate_terminal(model, Measure::MinimalMartingale, start, n_paths, seed, |e| {
        (-e.int_r).exp() * payoff.eval(e.s)
    })?;
    McEstimate::from_samples(&v, seed, DEFAULT_CI_LEVEL)
}

/// Same expectation from physical paths weighted by the density `Z_T`.
pub fn price_mc_p_weighted(
    model: &MarketModel,
    payoff: &PayoffSpec,
    start: McStart,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    payoff.validate()?;
    model.require_no_arbitrage(101)?;
    let v = simulate_terminal(model, Measure::Physical, start, n_paths, seed, |e| {
        (e.log_rn - e.int_r).exp() * payoff.eval(e.s)
    })?;
    McEstimate::from_samples(&v, seed, DEFAULT_CI_LEVEL)
}
