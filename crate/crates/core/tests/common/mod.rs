//! Shared models and independent closed-form oracles for the integration tests.

#![allow(dead_code)]

use smjd_core::market::{EtaFn, JumpSpec, MarketModel, Volatility};
use smjd_core::semi_markov::{RateFn, RateSpec};
use statrs::distribution::{ContinuousCDF, Normal};

/// Lebesgue measure on `[-1/2, 1]` with `η(z) = max(min(z, 1), -1/2)`.
pub fn clamp_jump() -> JumpSpec {
    JumpSpec::from_density(
        |_| 1.0,
        -0.5,
        1.0,
        200,
        EtaFn::Clamp {
            slope: 1.0,
            lo: -0.5,
            hi: 1.0,
        },
    )
    .unwrap()
}

pub fn benchmark_rates() -> RateSpec {
    RateSpec::new(
        2,
        vec![
            (
                0,
                1,
                RateFn::table(vec![0.0, 0.5, 1.0, 2.0], vec![0.5, 1.0, 2.0, 2.0]).unwrap(),
            ),
            (1, 0, RateFn::Constant { rate: 1.5 }),
        ],
    )
    .unwrap()
}

/// Two regimes, age-dependent exit from regime 1, clamp jumps.
pub fn benchmark() -> MarketModel {
    MarketModel::new(
        benchmark_rates(),
        vec![0.05, 0.03],
        vec![0.08, 0.10],
        Volatility::Constant(vec![0.2, 0.3]),
        clamp_jump(),
        1.0,
    )
    .unwrap()
}

/// The benchmark without price jumps.
pub fn benchmark_no_jumps() -> MarketModel {
    MarketModel::new(
        benchmark_rates(),
        vec![0.05, 0.03],
        vec![0.08, 0.10],
        Volatility::Constant(vec![0.2, 0.3]),
        JumpSpec::none(),
        1.0,
    )
    .unwrap()
}

pub fn single_regime(r: f64, mu: f64, sigma: f64, jump: JumpSpec) -> MarketModel {
    MarketModel::new(
        RateSpec::single(),
        vec![r],
        vec![mu],
        Volatility::Constant(vec![sigma]),
        jump,
        1.0,
    )
    .unwrap()
}

pub fn black_scholes_model() -> MarketModel {
    single_regime(0.05, 0.05, 0.2, JumpSpec::none())
}

fn phi(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Black–Scholes call value and delta.
pub fn bs_call(s: f64, k: f64, r: f64, sigma: f64, tau: f64) -> (f64, f64) {
    let sd = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * tau) / sd;
    let d2 = d1 - sd;
    (s * phi(d1) - k * (-r * tau).exp() * phi(d2), phi(d1))
}

/// Mean and standard error.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
