//! Minimal-martingale-measure density coefficients, the no-arbitrage check
//! and the mean-variance tradeoff.

use super::MarketModel;
use crate::error::{Error, Result};
use serde::Serialize;

/// Density-process coefficients at one `(t, regime)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmmCoefficients {
    pub t: f64,
    pub regime: usize,
    /// `J = (r - μ - ∫η dν) / (σ² + ∫η² dν)`
    pub ratio: f64,
    /// Diffusion coefficient of the density exponent, `J σ`.
    pub girsanov: f64,
    /// Jump-measure change `Γ_m = J η(z_m) + 1`, one value per jump node.
    pub gamma: Vec<f64>,
}

/// Outcome of the no-arbitrage scan `J η(z) > -1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrageReport {
    pub passed: bool,
    /// Smallest value of `J η(z)` over the scanned grid.
    pub worst_value: f64,
    pub worst_t: f64,
    pub worst_regime: usize,
    /// Mark at which the worst value occurs, `None` without jump nodes.
    pub worst_z: Option<f64>,
}

/// Ingredients of the mean-variance tradeoff at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MvTradeoff {
    /// Coefficient in `A = ∫ δ_C d⟨M̄⟩`.
    pub delta_c: f64,
    /// `dK̂/dt`.
    pub khat_rate: f64,
}

impl MarketModel {
    /// `J(t, i)`.
    pub fn mmm_ratio(&self, t: f64, i: usize) -> f64 {
        let ji = self.jump.integrals();
        (self.r[i] - self.mu[i] - ji.eta_mean) / self.variance_rate(t, i)
    }

    pub fn mmm_coefficients(&self, t: f64, i: usize) -> EmmCoefficients {
        let ratio = self.mmm_ratio(t, i);
        EmmCoefficients {
            t,
            regime: i,
            ratio,
            girsanov: ratio * self.sigma(t, i),
            gamma: self
                .jump
                .nodes()
                .iter()
                .map(|n| ratio * n.eta + 1.0)
                .collect(),
        }
    }

    /// Scans `J(t,i) η(z)` over `t_grid`, every regime and every jump node.
    /// The condition holds when the minimum stays strictly above `-1`.
    pub fn check_no_arbitrage(&self, t_grid: &[f64]) -> ArbitrageReport {
        let mut worst = ArbitrageReport {
            passed: true,
            worst_value: f64::INFINITY,
            worst_t: t_grid.first().copied().unwrap_or(0.0),
            worst_regime: 0,
            worst_z: None,
        };
        let fallback = [0.0];
        let times = if t_grid.is_empty() { &fallback[..] } else { t_grid };
        for &t in times {
            for i in 0..self.n_regimes() {
                let ratio = self.mmm_ratio(t, i);
                if self.jump.is_empty() {
                    if 0.0 < worst.worst_value {
                        worst.worst_value = 0.0;
                        worst.worst_t = t;
                        worst.worst_regime = i;
                    }
                    continue;
                }
                for n in self.jump.nodes() {
                    let v = ratio * n.eta;
                    if v < worst.worst_value {
                        worst.worst_value = v;
                        worst.worst_t = t;
                        worst.worst_regime = i;
                        worst.worst_z = Some(n.z);
                    }
                }
            }
        }
        worst.passed = worst.worst_value > -1.0;
        worst
    }

    /// Checks the no-arbitrage condition on `[0, T]` at the extremal times of
    /// the coefficients plus a uniform grid of `n` points, and turns a failure
    /// into an error.
    pub fn require_no_arbitrage(&self, n: usize) -> Result<ArbitrageReport> {
        let mut grid = self.extremal_times();
        let n = n.max(2);
        grid.extend((0..n).map(|k| self.horizon * k as f64 / (n - 1) as f64));
        let report = self.check_no_arbitrage(&grid);
        if !report.passed {
            return Err(Error::NoArbitrage(format!(
                "J*eta = {:.6} <= -1 at t = {}, regime {}, z = {:?}",
                report.worst_value,
                report.worst_t,
                report.worst_regime + 1,
                report.worst_z
            )));
        }
        Ok(report)
    }

    /// Mean-variance tradeoff coefficients at discounted price `s_star`.
    pub fn mv_tradeoff(&self, t: f64, i: usize, s_star: f64) -> Result<MvTradeoff> {
        if !(s_star > 0.0 && s_star.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "discounted price must be > 0, got {s_star}"
            )));
        }
        let excess = self.mu[i] - self.r[i] + self.jump.integrals().eta_mean;
        let v = self.variance_rate(t, i);
        Ok(MvTradeoff {
            delta_c: excess / (s_star * v),
            khat_rate: excess * excess / v,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_models::*;
    use super::super::*;
    use crate::semi_markov::RateSpec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ratio_for_remark_jump_with_small_drift() {
        let m = remark_single(0.06);
        let c = m.mmm_coefficients(0.0, 0);
        let expected = (0.05 - 0.06 - 0.375) / (0.04 + 0.375);
        assert_abs_diff_eq!(c.ratio, expected, epsilon = 1e-10);
        assert_abs_diff_eq!(c.girsanov, expected * 0.2, epsilon = 1e-10);
        let report = m.check_no_arbitrage(&[0.0, 0.5, 1.0]);
        assert!(report.passed);
        assert_abs_diff_eq!(report.worst_value, expected, epsilon = 1e-10);
        assert_abs_diff_eq!(report.worst_z.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn large_drift_violates_at_largest_jump() {
        let m = remark_single(0.15);
        let report = m.check_no_arbitrage(&[0.0, 1.0]);
        assert!(!report.passed);
        assert!(report.worst_value < -1.0);
        assert_abs_diff_eq!(report.worst_z.unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(m.require_no_arbitrage(11), Err(Error::NoArbitrage(_))));
    }

    #[test]
    fn without_jump_size_the_condition_is_trivial() {
        let m = MarketModel::new(
            RateSpec::single(),
            vec![0.05],
            vec![5.0],
            Volatility::Constant(vec![0.2]),
            JumpSpec::from_nodes(vec![(0.3, 1.0)], EtaFn::Zero).unwrap(),
            1.0,
        )
        .unwrap();
        let report = m.check_no_arbitrage(&[0.0]);
        assert!(report.passed);
        assert_eq!(report.worst_value, 0.0);
        assert!(m.mmm_coefficients(0.0, 0).gamma.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn tradeoff_matches_hand_values() {
        let m = black_scholes(0.2, 0.05, 0.08, 1.0);
        let mv = m.mv_tradeoff(0.0, 0, 50.0).unwrap();
        assert_abs_diff_eq!(mv.delta_c, 0.03 / (50.0 * 0.04), epsilon = 1e-15);
        assert_abs_diff_eq!(mv.khat_rate, 0.0009 / 0.04, epsilon = 1e-15);
        assert!(m.mv_tradeoff(0.0, 0, 0.0).is_err());
    }
}
