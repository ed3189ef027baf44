//! Discrete-time replay of the locally risk-minimizing strategy on physical
//! paths.
//!
//! Between rebalance dates `t_k` the strategy holds `ξ(t_k, S, X, Y)` units of
//! the discounted stock. The cost increment over `[t_k, t_{k+1}]` is
//! `ΔL_k = φ_{k+1}/B_{k+1} - φ_k/B_k - ξ_k ΔS*_k`, with `φ` at maturity
//! replaced by the payoff. Orthogonality is probed by correlating `ΔL_k` with
//! the martingale part of `ΔS*_k`.

use super::{path_rng, McStart};
use crate::error::{Error, Result};
use crate::market::{EventKind, MarketModel, Measure, PathSimulator};
use crate::numerics::pairwise_sum;
use crate::pricing::{PayoffSpec, PriceSurface};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BacktestConfig {
    pub n_paths: usize,
    pub rebalance_steps: usize,
    pub seed: u64,
    pub start: McStart,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub n_paths: usize,
    pub rebalance_count: usize,
    pub seed: u64,
    /// Value of the surface at the starting point.
    pub initial_price: f64,
    pub mean_residual: f64,
    pub residual_std_error: f64,
    pub residual_variance: f64,
    /// Variance of the discounted payoff without hedging.
    pub unhedged_variance: f64,
    /// Pooled correlation of cost increments with martingale increments.
    pub increment_correlation: f64,
    /// Heteroskedasticity-robust standard error of that correlation.
    pub correlation_std_error: f64,
    pub n_increment_pairs: usize,
    /// Hedge-ratio lookups that fell outside the surface and were clamped to
    /// its edge. Prices there are extrapolated linearly in `s`.
    pub coverage_misses: usize,
}

/// Sums needed for a correlation and its robust standard error.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    x: f64,
    y: f64,
    xx: f64,
    yy: f64,
    xy: f64,
    xxy: f64,
    xyy: f64,
    xxyy: f64,
}

impl Moments {
    fn add(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.x += x;
        self.y += y;
        self.xx += x * x;
        self.yy += y * y;
        self.xy += x * y;
        self.xxy += x * x * y;
        self.xyy += x * y * y;
        self.xxyy += x * x * y * y;
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.x += o.x;
        self.y += o.y;
        self.xx += o.xx;
        self.yy += o.yy;
        self.xy += o.xy;
        self.xxy += o.xxy;
        self.xyy += o.xyy;
        self.xxyy += o.xxyy;
    }

    /// Correlation and a robust standard error
    /// `sqrt(Σ x_c² y_c²) / sqrt(Σ x_c² Σ y_c²)`.
    fn correlation(&self) -> (f64, f64) {
        let n = self.n;
        let (a, b) = (self.x / n, self.y / n);
        let sxx = self.xx - n * a * a;
        let syy = self.yy - n * b * b;
        let sxy = self.xy - n * a * b;
        let s4 = self.xxyy - 2.0 * b * self.xxy - 2.0 * a * self.xyy
            + b * b * self.xx
            + a * a * self.yy
            + 4.0 * a * b * self.xy
            - 2.0 * a * b * b * self.x
            - 2.0 * a * a * b * self.y
            + n * a * a * b * b;
        if sxx <= 0.0 || syy <= 0.0 {
            return (0.0, 0.0);
        }
        let denom = (sxx * syy).sqrt();
        (sxy / denom, s4.max(0.0).sqrt() / denom)
    }
}

struct PathOutcome {
    residual: f64,
    unhedged: f64,
    moments: Moments,
    misses: usize,
}

/// Runs the backtest on physical paths.
pub fn backtest_hedge(
    model: &MarketModel,
    surface: &PriceSurface,
    payoff: &PayoffSpec,
    cfg: &BacktestConfig,
) -> Result<BacktestReport> {
    payoff.validate()?;
    if cfg.rebalance_steps == 0 || cfg.n_paths < 2 {
        return Err(Error::InvalidParameter(
            "backtest needs at least one rebalance and two paths".into(),
        ));
    }
    let start = cfg.start;
    let horizon = model.horizon();
    let n = cfg.rebalance_steps;
    let dt = (horizon - start.t0) / n as f64;
    let times: Vec<f64> = (1..n).map(|k| start.t0 + k as f64 * dt).collect();
    let sim = PathSimulator::new(model, Measure::Physical)?;
    let excess_jump = model.jump_integrals().eta_mean;
    let (s_lo, s_hi) = (surface.grid.s_min(), surface.grid.s_max());

    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = path_rng(cfg.seed, idx);
            let rec = sim.record(start.t0, start.s0, start.state, &times, &mut rng)?;
            let pts: Vec<_> = rec
                .points
                .iter()
                .filter(|p| p.event == EventKind::Grid)
                .collect();
            debug_assert_eq!(pts.len(), n + 1);
            let mut misses = 0;
            let mut clamp = |s: f64| {
                if s < s_lo || s > s_hi {
                    misses += 1;
                }
                s.clamp(s_lo, s_hi)
            };
            let mut moments = Moments::default();
            let mut residual = 0.0;
            let p0 = pts[0];
            let mut disc_value = surface.price(p0.t, p0.s, p0.x, p0.y);
            for k in 0..n {
                let (a, b) = (pts[k], pts[k + 1]);
                let xi = surface.xi(a.t, clamp(a.s), a.x, a.y);
                let (sa, sb) = (a.s * (-a.int_r).exp(), b.s * (-b.int_r).exp());
                let next_value = if k + 1 == n {
                    payoff.eval(b.s) * (-b.int_r).exp()
                } else {
                    surface.price(b.t, b.s, b.x, b.y) * (-b.int_r).exp()
                };
                let dl = next_value - disc_value - xi * (sb - sa);
                let drift = (model.mu(a.x) - model.r(a.x) + excess_jump) * sa * (b.t - a.t);
                moments.add(dl, sb - sa - drift);
                residual += dl;
                disc_value = next_value;
            }
            let last = pts[n];
            Ok(PathOutcome {
                residual,
                unhedged: payoff.eval(last.s) * (-last.int_r).exp(),
                moments,
                misses,
            })
        })
        .collect::<Result<_>>()?;

    let residuals: Vec<f64> = outcomes.iter().map(|o| o.residual).collect();
    let unhedged: Vec<f64> = outcomes.iter().map(|o| o.unhedged).collect();
    let (mean_res, var_res) = mean_var(&residuals);
    let (_, var_unhedged) = mean_var(&unhedged);
    let mut moments = Moments::default();
    for o in &outcomes {
        moments.merge(&o.moments);
    }
    let (corr, corr_se) = moments.correlation();
    let misses: usize = outcomes.iter().map(|o| o.misses).sum();
    if misses > 0 {
        log::warn!("{misses} hedge-ratio lookups fell outside the price surface and were clamped to its edge");
    }
    let initial_price = surface.price(start.t0, start.s0, start.state.x, start.state.y);
    Ok(BacktestReport {
        n_paths: cfg.n_paths,
        rebalance_count: n,
        seed: cfg.seed,
        initial_price,
        mean_residual: mean_res,
        residual_std_error: (var_res / cfg.n_paths as f64).sqrt(),
        residual_variance: var_res,
        unhedged_variance: var_unhedged,
        increment_correlation: corr,
        correlation_std_error: corr_se,
        n_increment_pairs: moments.n as usize,
        coverage_misses: misses,
    })
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let dev: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
    (mean, pairwise_sum(&dev) / (n - 1.0))
}
