//! Market parameterization: regime-indexed rates and drifts, time-dependent
//! volatility, a finite jump measure, and everything derived from them under
//! the physical and minimal-martingale measures.

mod emm;
mod jump;
mod path;

pub use emm::{ArbitrageReport, EmmCoefficients, MvTradeoff};
pub use jump::{EtaFn, JumpIntegrals, JumpNode, JumpSpec};
pub use path::{
    radon_nikodym_path, simulate_asset_path, DiffusionSegment, EventKind, JumpMark, Measure,
    PathEnd, PathPoint, PathRecord, PathSimulator,
};

use crate::error::{Error, Result};
use crate::numerics::simpson;
use crate::semi_markov::RateSpec;

/// Volatility `σ(t, i)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Volatility {
    /// One constant level per regime.
    Constant(Vec<f64>),
    /// Per-regime values at common knot times, linear in between and constant
    /// outside the knot range.
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl Volatility {
    pub fn eval(&self, t: f64, i: usize) -> f64 {
        match self {
            Volatility::Constant(v) => v[i],
            Volatility::Table { times, values } => {
                let v = &values[i];
                let n = times.len();
                if t <= times[0] {
                    return v[0];
                }
                if t >= times[n - 1] {
                    return v[n - 1];
                }
                let k = times.partition_point(|&a| a <= t) - 1;
                let w = (t - times[k]) / (times[k + 1] - times[k]);
                v[k] * (1.0 - w) + v[k + 1] * w
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Volatility::Constant(_))
    }

    pub fn knots(&self) -> &[f64] {
        match self {
            Volatility::Constant(_) => &[],
            Volatility::Table { times, .. } => times,
        }
    }

    fn n_regimes(&self) -> usize {
        match self {
            Volatility::Constant(v) => v.len(),
            Volatility::Table { values, .. } => values.len(),
        }
    }
}

/// Full market description. Immutable once built.
#[derive(Debug, Clone)]
pub struct MarketModel {
    rates: RateSpec,
    r: Vec<f64>,
    mu: Vec<f64>,
    sigma: Volatility,
    jump: JumpSpec,
    horizon: f64,
    simpson_panels: usize,
    sigma_min: f64,
    sigma_max: f64,
}

impl MarketModel {
    pub fn new(
        rates: RateSpec,
        r: Vec<f64>,
        mu: Vec<f64>,
        sigma: Volatility,
        jump: JumpSpec,
        horizon: f64,
    ) -> Result<Self> {
        let k = rates.n_states();
        if r.len() != k || mu.len() != k || sigma.n_regimes() != k {
            return Err(Error::InvalidParameter(format!(
                "expected {k} regimes in r, mu and sigma"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be > 0, got {horizon}")));
        }
        if r.iter().chain(mu.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("interest rate or drift".into()));
        }
        let levels: Vec<f64> = match &sigma {
            Volatility::Constant(v) => v.clone(),
            Volatility::Table { times, values } => {
                if times.is_empty()
                    || times.windows(2).any(|w| w[1] <= w[0])
                    || values.iter().any(|v| v.len() != times.len())
                {
                    return Err(Error::InvalidParameter(
                        "volatility table needs increasing times and one value per time".into(),
                    ));
                }
                values.iter().flatten().copied().collect()
            }
        };
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volatility".into()));
        }
        // linear interpolation attains its extremes at the knots
        let sigma_min = levels.iter().copied().fold(f64::INFINITY, f64::min);
        let sigma_max = levels.iter().copied().fold(0.0, f64::max);
        if !(sigma_min > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "volatility must be bounded away from zero, min is {sigma_min}"
            )));
        }
        Ok(Self {
            rates,
            r,
            mu,
            sigma,
            jump,
            horizon,
            simpson_panels: 8,
            sigma_min,
            sigma_max,
        })
    }

    /// Number of Simpson panels per volatility-knot interval used for time
    /// integrals of non-constant coefficients.
    pub fn with_simpson_panels(mut self, panels: usize) -> Self {
        self.simpson_panels = panels.max(1);
        self
    }

    pub fn rates(&self) -> &RateSpec {
        &self.rates
    }

    pub fn jump(&self) -> &JumpSpec {
        &self.jump
    }

    pub fn volatility(&self) -> &Volatility {
        &self.sigma
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_regimes(&self) -> usize {
        self.r.len()
    }

    pub fn r(&self, i: usize) -> f64 {
        self.r[i]
    }

    pub fn mu(&self, i: usize) -> f64 {
        self.mu[i]
    }

    pub fn sigma(&self, t: f64, i: usize) -> f64 {
        self.sigma.eval(t, i)
    }

    pub fn sigma_bounds(&self) -> (f64, f64) {
        (self.sigma_min, self.sigma_max)
    }

    pub fn jump_integrals(&self) -> JumpIntegrals {
        self.jump.integrals()
    }

    /// `σ²(t,i) + ∫η² dν`, the instantaneous variance rate of the martingale
    /// part of the discounted price (per unit `S*²`).
    pub fn variance_rate(&self, t: f64, i: usize) -> f64 {
        let s = self.sigma(t, i);
        s * s + self.jump.integrals().eta_sq
    }

    /// Time integral of `f(t)` over `[t0, t1]` on the shared sub-grid: the
    /// interval is split at the volatility knots and each piece integrated by
    /// composite Simpson. With constant volatility the integrand is assumed
    /// constant per regime and one panel is used.
    pub fn time_integral<F: Fn(f64) -> f64>(&self, t0: f64, t1: f64, f: F) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        if self.sigma.is_constant() {
            return simpson(&f, t0, t1, 1);
        }
        let mut acc = 0.0;
        let mut a = t0;
        for &k in self.sigma.knots().iter().filter(|&&k| k > t0 && k < t1) {
            acc += simpson(&f, a, k, self.simpson_panels);
            a = k;
        }
        acc + simpson(&f, a, t1, self.simpson_panels)
    }

    /// Candidate times at which time-dependent coefficients reach their
    /// extremes on `[0, T]`: the endpoints and the volatility knots.
    pub fn extremal_times(&self) -> Vec<f64> {
        let mut ts = vec![0.0, self.horizon];
        ts.extend(
            self.sigma
                .knots()
                .iter()
                .copied()
                .filter(|&k| k > 0.0 && k < self.horizon),
        );
        ts.sort_by(f64::total_cmp);
        ts
    }
}

#[cfg(test)]
pub(crate) mod test_models {
    use super::*;
    use crate::semi_markov::RateFn;

    pub fn remark_jump() -> JumpSpec {
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

    pub fn black_scholes(sigma: f64, r: f64, mu: f64, horizon: f64) -> MarketModel {
        MarketModel::new(
            RateSpec::single(),
            vec![r],
            vec![mu],
            Volatility::Constant(vec![sigma]),
            JumpSpec::none(),
            horizon,
        )
        .unwrap()
    }

    pub fn remark_single(mu: f64) -> MarketModel {
        MarketModel::new(
            RateSpec::single(),
            vec![0.05],
            vec![mu],
            Volatility::Constant(vec![0.2]),
            remark_jump(),
            1.0,
        )
        .unwrap()
    }

    pub fn two_regime_jump() -> MarketModel {
        let rates = RateSpec::new(
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
        .unwrap();
        MarketModel::new(
            rates,
            vec![0.05, 0.03],
            vec![0.08, 0.06],
            Volatility::Constant(vec![0.2, 0.3]),
            remark_jump(),
            1.0,
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn piecewise_variance_integral_is_exact() {
        // σ = 0.2 on [0, 0.4], linear ramp to 0.3 on [0.4, 0.6], then 0.3
        let sigma = Volatility::Table {
            times: vec![0.0, 0.4, 0.6, 1.0],
            values: vec![vec![0.2, 0.2, 0.3, 0.3]],
        };
        let m = MarketModel::new(
            RateSpec::single(),
            vec![0.0],
            vec![0.0],
            sigma,
            JumpSpec::none(),
            1.0,
        )
        .unwrap();
        let v = m.time_integral(0.0, 1.0, |t| m.sigma(t, 0).powi(2));
        let exact = 0.04 * 0.4 + (0.3f64.powi(3) - 0.2f64.powi(3)) / 1.5 + 0.09 * 0.4;
        assert_abs_diff_eq!(v, exact, epsilon = 1e-15);
        assert_eq!(m.sigma_bounds(), (0.2, 0.3));
    }

    #[test]
    fn model_rejects_bad_inputs() {
        let mk = |sigma: Vec<f64>, h: f64| {
            MarketModel::new(
                RateSpec::single(),
                vec![0.0],
                vec![0.0],
                Volatility::Constant(sigma),
                JumpSpec::none(),
                h,
            )
        };
        assert!(mk(vec![0.0], 1.0).is_err());
        assert!(mk(vec![0.2], 0.0).is_err());
        assert!(mk(vec![0.2, 0.3], 1.0).is_err());
        assert!(mk(vec![0.2], 1.0).is_ok());
    }
}
