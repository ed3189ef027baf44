//! Small numerical building blocks shared by the solvers: composite Simpson
//! rules, a monotone cubic interpolant with an exact antiderivative, a
//! bracketed scalar root finder and a reusable tridiagonal factorization.

use crate::error::{Error, Result};
use statrs::function::erf::erfc;

/// Composite Simpson rule on `[a, b]` with `panels` Simpson panels
/// (`2 * panels` subintervals).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let n = 2 * panels;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Nodes and weights of the composite Simpson rule on `[a, b]`.
///
/// `n_nodes` is rounded up to the next odd number (at least 3) so that the
/// number of subintervals is even.
pub fn simpson_nodes(a: f64, b: f64, n_nodes: usize) -> Vec<(f64, f64)> {
    let mut n = n_nodes.max(3);
    if n % 2 == 0 {
        n += 1;
    }
    let intervals = n - 1;
    let h = (b - a) / intervals as f64;
    (0..n)
        .map(|k| {
            let w = if k == 0 || k == intervals {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (a + k as f64 * h, w * h / 3.0)
        })
        .collect()
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
///
/// Constant extrapolation outside the knot range. The antiderivative from the
/// first knot is exact, segment by segment.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
    // cumulative integral from xs[0] up to each knot
    cumulative: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::InvalidParameter(
                "table needs matching, non-empty abscissae and values".into(),
            ));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("table entry".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "table abscissae must be strictly increasing".into(),
            ));
        }
        let n = xs.len();
        let mut slopes = vec![0.0; n];
        if n > 1 {
            let secants: Vec<f64> = (0..n - 1)
                .map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]))
                .collect();
            slopes[0] = secants[0];
            slopes[n - 1] = secants[n - 2];
            for k in 1..n - 1 {
                let (a, b) = (secants[k - 1], secants[k]);
                slopes[k] = if a * b <= 0.0 {
                    0.0
                } else {
                    let (h0, h1) = (xs[k] - xs[k - 1], xs[k + 1] - xs[k]);
                    let (w1, w2) = (2.0 * h1 + h0, h1 + 2.0 * h0);
                    (w1 + w2) / (w1 / a + w2 / b)
                };
            }
            // end slopes must not overshoot
            for k in [0, n - 1] {
                let sec = if k == 0 { secants[0] } else { secants[n - 2] };
                if slopes[k] * sec <= 0.0 {
                    slopes[k] = 0.0;
                } else if slopes[k].abs() > 3.0 * sec.abs() {
                    slopes[k] = 3.0 * sec;
                }
            }
        }
        let mut cumulative = vec![0.0; n];
        for k in 1..n {
            let h = xs[k] - xs[k - 1];
            cumulative[k] = cumulative[k - 1]
                + h * (ys[k - 1] + ys[k]) / 2.0
                + h * h * (slopes[k - 1] - slopes[k]) / 12.0;
        }
        Ok(Self {
            xs,
            ys,
            slopes,
            cumulative,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p => (p - 1).min(self.xs.len() - 2),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 || x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = self.segment(x);
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[k]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[k]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[k + 1]
            + (t3 - t2) * h * self.slopes[k + 1]
    }

    /// Integral of the interpolant from `xs[0]` to `x`, with constant
    /// extrapolation on both sides.
    pub fn integral_to(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return (x - self.xs[0]) * self.ys[0];
        }
        if n == 1 {
            return (x - self.xs[0]) * self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.cumulative[n - 1] + (x - self.xs[n - 1]) * self.ys[n - 1];
        }
        let k = self.segment(x);
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
        // antiderivatives of the Hermite basis on [0, t], scaled by h
        let h00 = t4 / 2.0 - t3 + t;
        let h10 = t4 / 4.0 - 2.0 * t3 / 3.0 + t2 / 2.0;
        let h01 = -t4 / 2.0 + t3;
        let h11 = t4 / 4.0 - t3 / 3.0;
        self.cumulative[k]
            + h * (h00 * self.ys[k]
                + h10 * h * self.slopes[k]
                + h01 * self.ys[k + 1]
                + h11 * h * self.slopes[k + 1])
    }
}

/// Bracketed root of a continuous function: bisection until the bracket has
/// shrunk by three orders of magnitude, then secant steps that fall back to
/// bisection whenever they leave the bracket.
pub fn bracketed_root<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::NonConvergence(format!(
            "root not bracketed on [{lo}, {hi}]"
        )));
    }
    let width0 = hi - lo;
    let (mut prev, mut f_prev) = (hi, f_hi);
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let mut x = mid;
        if hi - lo < 1e-3 * width0 && f_prev != f_lo {
            let secant = prev - f_prev * (prev - lo) / (f_prev - f_lo);
            if secant > lo && secant < hi {
                x = secant;
            }
        }
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::NonFinite(format!("root function at {x}")));
        }
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
        }
        prev = x;
        f_prev = fx;
        if hi - lo <= tol || fx.abs() <= tol * 1e-3 {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence(format!(
        "bracket [{lo}, {hi}] after {max_iter} iterations"
    )))
}

/// Pairwise (cascade) summation in slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Two-sided standard normal quantile for confidence `level`.
pub fn normal_quantile_two_sided(level: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + 0.5 * level)
}

/// LU factorization of a tridiagonal matrix (Thomas algorithm without
/// pivoting), reusable across many right-hand sides.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    lower: Vec<f64>,
    // modified super-diagonal and pivots
    upper: Vec<f64>,
    pivot: Vec<f64>,
}

impl Tridiagonal {
    /// `lower[k]` multiplies `x[k-1]` in row `k` (`lower[0]` unused),
    /// `upper[k]` multiplies `x[k+1]` (`upper[n-1]` unused).
    pub fn factor(lower: Vec<f64>, diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut pivot = vec![0.0; n];
        let mut up = vec![0.0; n];
        pivot[0] = diag[0];
        for k in 0..n {
            if k > 0 {
                pivot[k] = diag[k] - lower[k] * up[k - 1];
            }
            if pivot[k].abs() < 1e-300 || !pivot[k].is_finite() {
                return Err(Error::Instability(format!(
                    "singular tridiagonal pivot at row {k}"
                )));
            }
            if k + 1 < n {
                up[k] = upper[k] / pivot[k];
            }
        }
        Ok(Self {
            lower,
            upper: up,
            pivot,
        })
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] /= self.pivot[0];
        for k in 1..n {
            rhs[k] = (rhs[k] - self.lower[k] * rhs[k - 1]) / self.pivot[k];
        }
        for k in (0..n - 1).rev() {
            rhs[k] -= self.upper[k] * rhs[k + 1];
        }
    }
}
