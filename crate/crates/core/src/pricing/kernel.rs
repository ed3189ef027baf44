//! Log-normal transition kernel of the continuous auxiliary price process and
//! expectations against it.

use super::betas::beta1;
use crate::error::{Error, Result};
use crate::market::MarketModel;
use gauss_quad::{GaussHermite, GaussLegendre};
use serde::Serialize;
use std::f64::consts::{PI, SQRT_2};

/// Parameters of the log-normal law of `Ŝ_{t+v}` given `Ŝ_t = s` without a
/// regime switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelParams {
    pub log_mean: f64,
    pub log_var: f64,
}

pub fn kernel_params(model: &MarketModel, s: f64, i: usize, t: f64, v: f64) -> Result<KernelParams> {
    if !(v > 0.0) {
        return Err(Error::InvalidParameter(format!("kernel horizon must be > 0, got {v}")));
    }
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("kernel origin must be > 0, got {s}")));
    }
    let (drift, var) = log_drift_var(model, i, t, t + v);
    Ok(KernelParams {
        log_mean: s.ln() + drift,
        log_var: var,
    })
}

/// `(∫(r + β₁ - σ²/2), ∫σ²)` over `[a, b]` in regime `i`.
pub(crate) fn log_drift_var(model: &MarketModel, i: usize, a: f64, b: f64) -> (f64, f64) {
    let r = model.r(i);
    let drift = model.time_integral(a, b, |t| r + beta1(model, t, i) - 0.5 * model.sigma(t, i).powi(2));
    let var = model.time_integral(a, b, |t| model.sigma(t, i).powi(2));
    (drift, var)
}

/// `E[f(exp(m + √v ξ))]` for standard normal `ξ` by Gauss–Hermite quadrature.
pub fn lognormal_expect<F: Fn(f64) -> f64>(f: F, params: &KernelParams, order: usize) -> Result<f64> {
    let gh = GaussHermite::new(order.max(2))
        .map_err(|e| Error::InvalidParameter(format!("quadrature order {order}: {e}")))?;
    let sd = params.log_var.max(0.0).sqrt();
    let mut bad = None;
    let total = gh.integrate(|u| {
        let v = f((params.log_mean + SQRT_2 * sd * u).exp());
        if !v.is_finite() {
            bad = Some(u);
        }
        v
    });
    if let Some(u) = bad {
        return Err(Error::NonFinite(format!("integrand at quadrature node {u}")));
    }
    Ok(total / PI.sqrt())
}

/// Like [`lognormal_expect`] for integrands with kinks at the given points:
/// the normal line is cut at the kinks and at ±12 standard deviations and each
/// piece is integrated by Gauss–Legendre of the given order.
pub fn lognormal_expect_kinked<F: Fn(f64) -> f64>(
    f: F,
    params: &KernelParams,
    kinks: &[f64],
    order: usize,
) -> Result<f64> {
    let sd = params.log_var.max(0.0).sqrt();
    if sd == 0.0 {
        return Ok(f(params.log_mean.exp()));
    }
    const CUT: f64 = 12.0;
    let mut cuts: Vec<f64> = kinks
        .iter()
        .filter(|&&k| k > 0.0)
        .map(|&k| (k.ln() - params.log_mean) / sd)
        .filter(|&u| u > -CUT && u < CUT)
        .collect();
    cuts.push(-CUT);
    cuts.push(CUT);
    cuts.sort_by(f64::total_cmp);
    let gl = GaussLegendre::new(order.max(2))
        .map_err(|e| Error::InvalidParameter(format!("quadrature order {order}: {e}")))?;
    let mut bad = None;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += gl.integrate(w[0], w[1], |u| {
            let v = f((params.log_mean + sd * u).exp());
            if !v.is_finite() {
                bad = Some(u);
            }
            v * (-0.5 * u * u).exp()
        });
    }
    if let Some(u) = bad {
        return Err(Error::NonFinite(format!("integrand at standardized point {u}")));
    }
    Ok(total / (2.0 * PI).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::test_models::*;
    use crate::numerics::normal_cdf;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_parameter_kernel() {
        let m = remark_single(0.08);
        let p = kernel_params(&m, 100.0, 0, 0.2, 0.5).unwrap();
        let b1 = beta1(&m, 0.0, 0);
        assert_abs_diff_eq!(p.log_mean, 100f64.ln() + (0.05 + b1 - 0.02) * 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(p.log_var, 0.02, epsilon = 1e-15);
        let q = kernel_params(&m, 300.0, 0, 0.2, 0.5).unwrap();
        assert_abs_diff_eq!(q.log_mean - p.log_mean, 3f64.ln(), epsilon = 1e-13);
        assert_eq!(q.log_var, p.log_var);
        assert!(kernel_params(&m, 100.0, 0, 0.2, 0.0).is_err());
    }

    #[test]
    fn expectations_of_simple_functions() {
        let p = KernelParams {
            log_mean: 100f64.ln(),
            log_var: 0.04,
        };
        assert_abs_diff_eq!(lognormal_expect(|_| 1.0, &p, 64).unwrap(), 1.0, epsilon = 1e-12);
        let mean = (p.log_mean + 0.02).exp();
        assert_abs_diff_eq!(lognormal_expect(|x| x, &p, 64).unwrap(), mean, epsilon = 1e-10 * mean);
    }

    #[test]
    fn kinked_call_matches_closed_form() {
        let p = KernelParams {
            log_mean: 100f64.ln(),
            log_var: 0.04,
        };
        let k: f64 = 100.0;
        let sd = 0.2;
        let d1 = (p.log_mean - k.ln() + sd * sd) / sd;
        let exact = (p.log_mean + 0.02).exp() * normal_cdf(d1) - k * normal_cdf(d1 - sd);
        let got = lognormal_expect_kinked(|x| (x - k).max(0.0), &p, &[k], 64).unwrap();
        assert_abs_diff_eq!(got, exact, epsilon = 1e-8);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let p = KernelParams {
            log_mean: 0.0,
            log_var: 1.0,
        };
        assert!(lognormal_expect(|_| f64::NAN, &p, 16).is_err());
    }
}
