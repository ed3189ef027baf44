//! Finite-difference solver for the pricing integro-differential equation.
//!
//! Time and age advance together along characteristics `(t, y) → (t - Δ, y - Δ)`.
//! Diffusion and drift in `ln s` are implicit (one tridiagonal solve per
//! regime and age row); regime coupling, the jump operator and discounting are
//! explicit. Jump terms reuse the interpolation of the integral-equation
//! route so the two solvers differ only in the differential part.

use crate::error::{Error, Result};
use crate::market::MarketModel;
use crate::numerics::Tridiagonal;
use crate::pricing::{
    apply_jump, compute_betas, layer_from_fn, warn_arbitrage, Grid, GridSpec, JumpOps, Layer,
    Method, PayoffSpec, PriceSurface,
};
use rayon::prelude::*;

/// Largest admissible `Δ (sup λ + sup‖B‖ + sup r)`.
pub const EXPLICIT_STABILITY_LIMIT: f64 = 0.5;

/// Bounds of the explicit part on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplicitBounds {
    pub rate: f64,
    pub jump_norm: f64,
    pub discount: f64,
    pub drift: f64,
}

impl ExplicitBounds {
    pub fn compute(model: &MarketModel, grid: &Grid) -> Self {
        let k = model.n_regimes();
        let rates = model.rates();
        let mut rate: f64 = 0.0;
        for i in 0..k {
            for m in 0..=grid.rows(grid.n_t) {
                rate = rate.max(rates.total_rate(i, grid.age(m)));
            }
        }
        let mut jump_norm: f64 = 0.0;
        let mut drift: f64 = 0.0;
        for t in model.extremal_times() {
            for i in 0..k {
                let b = compute_betas(model, t, i);
                let norm: f64 = 2.0
                    * b.beta2
                        .iter()
                        .zip(model.jump().nodes())
                        .map(|(b2, n)| b2.abs() * n.weight)
                        .sum::<f64>();
                jump_norm = jump_norm.max(norm);
                drift = drift.max((model.r(i) + b.beta1).abs());
            }
        }
        let discount = (0..k).map(|i| model.r(i).abs()).fold(0.0, f64::max);
        Self {
            rate,
            jump_norm,
            discount,
            drift,
        }
    }

    pub fn stability_number(&self, dt: f64) -> f64 {
        dt * (self.rate + self.jump_norm + self.discount)
    }
}

/// Implicit operator `I - Δ L` for one regime at one time.
fn implicit_matrix(model: &MarketModel, grid: &Grid, t: f64, i: usize) -> Result<Tridiagonal> {
    let n = grid.n_s;
    let dt = grid.dt;
    let h = grid.h;
    let s2 = model.sigma(t, i).powi(2);
    let growth = model.r(i) + compute_betas(model, t, i).beta1;
    let a = 0.5 * s2 / (h * h);
    let b = (growth - 0.5 * s2) / (2.0 * h);
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for k in 1..n - 1 {
        lower[k] = -dt * (a - b);
        diag[k] = 1.0 + dt * 2.0 * a;
        upper[k] = -dt * (a + b);
    }
    // edges: no curvature in s, one-sided s-derivative
    let s = &grid.s;
    let c0 = dt * growth * s[0] / (s[1] - s[0]);
    diag[0] = 1.0 + c0;
    upper[0] = -c0;
    let cn = dt * growth * s[n - 1] / (s[n - 1] - s[n - 2]);
    diag[n - 1] = 1.0 - cn;
    lower[n - 1] = cn;
    Tridiagonal::factor(lower, &diag, &upper)
}

/// Finite-difference price surface on the grid described by `spec`.
pub fn solve_price_fd(model: &MarketModel, payoff: &PayoffSpec, spec: &GridSpec) -> Result<PriceSurface> {
    payoff.validate()?;
    warn_arbitrage(model);
    let grid = Grid::build(model, spec)?;
    let terminal = layer_from_fn(&grid, grid.n_t, |s, _, _| payoff.eval(s));
    let n_t = grid.n_t;
    let keep_all = spec.keep_layers;
    let layers = fd_recursion(model, &grid, terminal, |n| keep_all || n == n_t)?;
    Ok(PriceSurface::new(model, Method::Fd, grid, layers))
}

pub(crate) fn fd_recursion(
    model: &MarketModel,
    grid: &Grid,
    terminal: Layer,
    keep: impl Fn(usize) -> bool,
) -> Result<Vec<Layer>> {
    let bounds = ExplicitBounds::compute(model, grid);
    let number = bounds.stability_number(grid.dt);
    if number >= EXPLICIT_STABILITY_LIMIT {
        return Err(Error::Instability(format!(
            "time step too large for the explicit part: dt*(sup rate + sup|B| + sup r) = {number:.3} >= {EXPLICIT_STABILITY_LIMIT}"
        )));
    }
    let envelope = ((bounds.rate + bounds.jump_norm + bounds.discount + bounds.drift) * grid.dt).exp();
    let rates = model.rates();
    let k = grid.n_regimes;
    let dt = grid.dt;
    let n_s = grid.n_s;
    let constant_sigma = model.volatility().is_constant();

    let mut factors: Vec<Tridiagonal> = (0..k)
        .map(|i| implicit_matrix(model, grid, grid.t(grid.n_t - 1), i))
        .collect::<Result<_>>()?;
    let mut kept = Vec::new();
    let mut current = terminal;
    for n in (0..grid.n_t).rev() {
        if !constant_sigma && n + 1 < grid.n_t {
            factors = (0..k)
                .map(|i| implicit_matrix(model, grid, grid.t(n), i))
                .collect::<Result<_>>()?;
        }
        let jumps = JumpOps::at(model, grid, grid.t(n + 1));
        let explicit = apply_jump(model, grid, &jumps, &current, true);
        let mut out = grid.new_layer(n);
        let rows = out.rows;
        let next = &current;
        out.data
            .par_chunks_mut(n_s)
            .enumerate()
            .for_each(|(q, row_out)| {
                let i = q / rows;
                let m = q % rows;
                let y = grid.age(m + 1);
                let base = next.row(i, m + 1);
                let jb = explicit.row(i, m + 1);
                for p in 0..n_s {
                    row_out[p] = base[p] + dt * jb[p];
                }
                for j in 0..k {
                    if j == i {
                        continue;
                    }
                    let lam = rates.rate(i, j, y);
                    if lam != 0.0 {
                        let fresh = next.row(j, 0);
                        for p in 0..n_s {
                            row_out[p] += dt * lam * (fresh[p] - base[p]);
                        }
                    }
                }
                factors[i].solve_in_place(row_out);
            });
        let before = current.max_abs();
        let after = out.max_abs();
        if out.data.iter().any(|v| !v.is_finite()) || after > before * envelope * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::Instability(format!(
                "layer growth {after:.6e} over {before:.6e} exceeds the envelope at t = {}",
                grid.t(n)
            )));
        }
        if keep(n + 1) {
            kept.push(current);
        }
        current = out;
    }
    kept.push(current);
    kept.reverse();
    Ok(kept)
}
