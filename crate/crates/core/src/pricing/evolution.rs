//! One-step evolution operator of the regime-switching log-normal auxiliary
//! process, the jump operator, and their composition into the price
//! recursion.
//!
//! Over one step of length `Δ` starting at age `y` the operator splits into a
//! no-switch part, weighted by the conditional survival, and a switch part
//! whose switch-time integral is a trapezoid on `{0, Δ}`. The endpoint `v = 0`
//! couples to the fresh-age values of the same layer, which are obtained from
//! a small linear solve per price node.

use super::betas::compute_betas;
use super::grid::{Extended, Grid, Layer, Stencil};
use super::kernel::log_drift_var;
use crate::error::{Error, Result};
use crate::market::MarketModel;
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Age-dependent switching weights for one step, indexed by regime and row.
#[derive(Debug, Clone)]
pub(crate) struct SwitchTable {
    k: usize,
    /// Conditional survival over one step.
    survive: Vec<Vec<f64>>,
    /// Weight on `Ψ(t, ·, j, 0)` (switch at the start of the step).
    c_start: Vec<Vec<Vec<f64>>>,
    /// Weight on the one-step expectation of `ψ(·, j, 0)` (switch at the end).
    c_end: Vec<Vec<Vec<f64>>>,
    /// `(I - C_start(age 0))^{-1}`, row-major.
    fresh_inverse: Vec<f64>,
}

impl SwitchTable {
    pub(crate) fn build(model: &MarketModel, grid: &Grid) -> Result<Self> {
        let rates = model.rates();
        let k = model.n_regimes();
        let dt = grid.dt;
        let n_rows = grid.rows(grid.n_t);
        for i in 0..k {
            let lam = rates.cumulative_hazard(i, grid.max_age() + dt)?;
            if lam.is_finite() && (-lam).exp() < 1e-300 {
                return Err(Error::SurvivalUnderflow {
                    state: i,
                    age: grid.max_age() + dt,
                });
            }
        }
        let mut survive = vec![vec![0.0; n_rows]; k];
        let mut c_start = vec![vec![vec![0.0; k]; n_rows]; k];
        let mut c_end = vec![vec![vec![0.0; k]; n_rows]; k];
        for i in 0..k {
            for m in 0..n_rows {
                let y = grid.age(m);
                let s = rates.conditional_survival(i, y, dt)?;
                survive[i][m] = s;
                let exit = 1.0 - s;
                if exit <= 0.0 {
                    continue;
                }
                let (ya, yb) = {
                    let g = rates.total_rate(i, y) + rates.total_rate(i, y + dt) * s;
                    if g > 0.0 {
                        (y, y + dt)
                    } else {
                        (y + 0.5 * dt, y + 0.5 * dt)
                    }
                };
                let g0 = rates.total_rate(i, ya);
                let g1 = rates.total_rate(i, yb) * if ya == yb { 1.0 } else { s };
                let denom = g0 + g1;
                if denom <= 0.0 {
                    return Err(Error::Instability(format!(
                        "regime {} loses mass at age {y} but has no exit rate",
                        i + 1
                    )));
                }
                for j in 0..k {
                    if j == i {
                        continue;
                    }
                    c_start[i][m][j] = exit * rates.rate(i, j, ya) / denom;
                    c_end[i][m][j] = exit
                        * rates.rate(i, j, yb)
                        * if ya == yb { 1.0 } else { s }
                        / denom;
                }
            }
        }
        let a = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                1.0 - c_start[i][0][j]
            } else {
                -c_start[i][0][j]
            }
        });
        let inv = a
            .try_inverse()
            .ok_or_else(|| Error::Instability("fresh-age switching system is singular".into()))?;
        let fresh_inverse = (0..k * k).map(|q| inv[(q / k, q % k)]).collect();
        Ok(Self {
            k,
            survive,
            c_start,
            c_end,
            fresh_inverse,
        })
    }
}

/// Jump operator data at one time: per regime the shift stencil with weights
/// `β₂ w` and the total `Σ β₂ w`.
pub(crate) struct JumpOps {
    pub stencils: Vec<Stencil>,
    pub totals: Vec<f64>,
}

impl JumpOps {
    pub(crate) fn at(model: &MarketModel, grid: &Grid, t: f64) -> Self {
        let nodes = model.jump().nodes();
        let mut stencils = Vec::with_capacity(grid.n_regimes);
        let mut totals = Vec::with_capacity(grid.n_regimes);
        for i in 0..grid.n_regimes {
            let b = compute_betas(model, t, i);
            let offs: Vec<(f64, f64)> = nodes
                .iter()
                .zip(&b.beta2)
                .map(|(n, b2)| (n.eta.ln_1p(), b2 * n.weight))
                .collect();
            totals.push(offs.iter().map(|o| o.1).sum());
            stencils.push(Stencil::shifts(&offs, grid.h));
        }
        Self { stencils, totals }
    }

    fn pad(&self) -> usize {
        pad_for(&self.stencils)
    }
}

pub(crate) fn pad_for(stencils: &[Stencil]) -> usize {
    stencils
        .iter()
        .map(|s| s.min_off.unsigned_abs().max(s.max_off().unsigned_abs()))
        .max()
        .unwrap_or(0)
        + 1
}

/// Applies `B(t) - R` (when `discount`) or `B(t)` to every row of `src`.
pub(crate) fn apply_jump(
    model: &MarketModel,
    grid: &Grid,
    ops: &JumpOps,
    src: &Layer,
    discount: bool,
) -> Layer {
    let mut out = Layer {
        data: vec![0.0; src.data.len()],
        ..src.clone()
    };
    let pad = ops.pad();
    let n_s = grid.n_s;
    out.data
        .par_chunks_mut(n_s)
        .enumerate()
        .for_each_init(
            || Extended::with_pad(pad),
            |ext, (q, row_out)| {
                let i = q / src.rows;
                let m = q % src.rows;
                let row = src.row(i, m);
                ext.fill(row, grid);
                ops.stencils[i].apply(ext, row_out);
                let diag = ops.totals[i] + if discount { model.r(i) } else { 0.0 };
                for (o, v) in row_out.iter_mut().zip(row) {
                    *o -= diag * v;
                }
            },
        );
    out
}

/// One-step evolution operator from layer `n + 1` to layer `n`.
pub(crate) struct Evolution<'a> {
    model: &'a MarketModel,
    grid: &'a Grid,
    switch: SwitchTable,
    stencil_sd: f64,
}

impl<'a> Evolution<'a> {
    pub(crate) fn new(model: &'a MarketModel, grid: &'a Grid, stencil_sd: f64) -> Result<Self> {
        Ok(Self {
            model,
            grid,
            switch: SwitchTable::build(model, grid)?,
            stencil_sd,
        })
    }

    /// No-switch Gaussian stencils of step `n`, one per regime.
    pub(crate) fn gaussians(&self, n: usize) -> Vec<Stencil> {
        let (a, b) = (self.grid.t(n), self.grid.t(n + 1));
        (0..self.grid.n_regimes)
            .map(|i| {
                let (d, v) = log_drift_var(self.model, i, a, b);
                Stencil::gaussian(d, v, self.grid.h, self.stencil_sd)
            })
            .collect()
    }

    /// `U(t_{n+1}, t_n) ψ` with `ψ` given on layer `n + 1`.
    pub(crate) fn apply(&self, gauss: &[Stencil], next: &Layer) -> Layer {
        let grid = self.grid;
        let n = next.n - 1;
        let mut out = grid.new_layer(n);
        let k = grid.n_regimes;
        let n_s = grid.n_s;
        let pad = pad_for(gauss);
        let sw = &self.switch;

        // one-step expectation of fresh-age values: e[i][j] = g_i * ψ(j, 0)
        let mut ext = Extended::with_pad(pad);
        let mut e = vec![vec![vec![0.0; n_s]; k]; k];
        for j in 0..k {
            ext.fill(next.row(j, 0), grid);
            for i in 0..k {
                gauss[i].apply(&ext, &mut e[i][j]);
            }
        }

        // no-switch parts for every row
        let rows = out.rows;
        out.data
            .par_chunks_mut(n_s)
            .enumerate()
            .for_each_init(
                || Extended::with_pad(pad),
                |ext, (q, row_out)| {
                    let i = q / rows;
                    let m = q % rows;
                    ext.fill(next.row(i, m + 1), grid);
                    gauss[i].apply(ext, row_out);
                    let s = sw.survive[i][m];
                    for v in row_out.iter_mut() {
                        *v *= s;
                    }
                    for j in 0..k {
                        let c = sw.c_end[i][m][j];
                        if c != 0.0 {
                            for (v, x) in row_out.iter_mut().zip(&e[i][j]) {
                                *v += c * x;
                            }
                        }
                    }
                },
            );

        // fresh-age rows solve the coupled system node by node
        let mut rhs = vec![0.0; k];
        for p in 0..n_s {
            for (i, r) in rhs.iter_mut().enumerate() {
                *r = out.row(i, 0)[p];
            }
            for i in 0..k {
                let v: f64 = (0..k).map(|j| sw.fresh_inverse[i * sw.k + j] * rhs[j]).sum();
                out.row_mut(i, 0)[p] = v;
            }
        }

        // remaining rows pick up the start-of-step switch term
        let fresh: Vec<Vec<f64>> = (0..k).map(|j| out.row(j, 0).to_vec()).collect();
        out.data
            .par_chunks_mut(n_s)
            .enumerate()
            .filter(|(q, _)| q % rows != 0)
            .for_each(|(q, row_out)| {
                let i = q / rows;
                let m = q % rows;
                for j in 0..k {
                    let c = sw.c_start[i][m][j];
                    if c != 0.0 {
                        for (v, x) in row_out.iter_mut().zip(&fresh[j]) {
                            *v += c * x;
                        }
                    }
                }
            });
        out
    }
}

/// Layer at index `n` filled from a function of `(s, regime, age)`.
pub fn layer_from_fn<F: Fn(f64, usize, f64) -> f64>(grid: &Grid, n: usize, f: F) -> Layer {
    let mut layer = grid.new_layer(n);
    for i in 0..grid.n_regimes {
        for m in 0..layer.rows {
            let y = grid.age(m);
            let row = layer.row_mut(i, m);
            for (v, s) in row.iter_mut().zip(&grid.s) {
                *v = f(*s, i, y);
            }
        }
    }
    layer
}

/// `B(t) ψ` for a layer.
pub fn jump_operator(model: &MarketModel, grid: &Grid, t: f64, psi: &Layer) -> Layer {
    apply_jump(model, grid, &JumpOps::at(model, grid, t), psi, false)
}

/// `U(u, t_n) ψ` for every `n ≤ u_index`, obtained by chaining one-step
/// operators backward from `ψ` given at `u_index`. Entry `n` of the result is
/// the layer at `t_n`.
pub fn evolution_apply(
    model: &MarketModel,
    grid: &Grid,
    psi: Layer,
    stencil_sd: f64,
) -> Result<Vec<Layer>> {
    let u = psi.n;
    if u > grid.n_t || psi.rows != grid.rows(u) {
        return Err(Error::InvalidParameter(format!(
            "layer index {u} does not match the grid"
        )));
    }
    let evo = Evolution::new(model, grid, stencil_sd)?;
    let mut out = vec![psi];
    for n in (0..u).rev() {
        let g = evo.gaussians(n);
        let next = evo.apply(&g, out.last().unwrap());
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

/// Backward recursion for the price: `φ(t_n) = U φ + Δ U (B - R) φ` with a
/// trapezoid (Heun) correction in the Duhamel term. Returns the layers at
/// all requested indices, in increasing time.
pub(crate) fn price_recursion(
    model: &MarketModel,
    grid: &Grid,
    terminal: Layer,
    stencil_sd: f64,
    keep: impl Fn(usize) -> bool,
) -> Result<Vec<Layer>> {
    let evo = Evolution::new(model, grid, stencil_sd)?;
    let dt = grid.dt;
    let constant_sigma = model.volatility().is_constant();
    let mut kept = Vec::new();
    let mut current = terminal;
    let mut jump_next = JumpOps::at(model, grid, grid.t(grid.n_t));
    for n in (0..grid.n_t).rev() {
        let gauss = evo.gaussians(n);
        if n + 1 == grid.n_t {
            let ones = layer_from_fn(grid, n + 1, |_, _, _| 1.0);
            let err = evo
                .apply(&gauss, &ones)
                .data
                .iter()
                .fold(0.0f64, |a, v| a.max((v - 1.0).abs()));
            if err > CONSERVATIVITY_TOL {
                return Err(Error::Instability(format!(
                    "grid too coarse: one-step conservativity error {err:.3e} exceeds {CONSERVATIVITY_TOL:e}"
                )));
            }
        } else if !constant_sigma {
            for (i, g) in gauss.iter().enumerate() {
                let err = (g.sum() - 1.0).abs();
                if err > CONSERVATIVITY_TOL {
                    return Err(Error::Instability(format!(
                        "grid too coarse: step {n} regime {} conservativity error {err:.3e}",
                        i + 1
                    )));
                }
            }
        }
        let a = apply_jump(model, grid, &jump_next, &current, true);
        let u1 = evo.apply(&gauss, &current);
        let u2 = evo.apply(&gauss, &a);
        let mut predictor = u1.clone();
        for (p, v) in predictor.data.iter_mut().zip(&u2.data) {
            *p += dt * v;
        }
        let jump_now = JumpOps::at(model, grid, grid.t(n));
        let b = apply_jump(model, grid, &jump_now, &predictor, true);
        let mut out = u1;
        for ((o, x), y) in out.data.iter_mut().zip(&u2.data).zip(&b.data) {
            *o += 0.5 * dt * (x + y);
        }
        if out.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("price layer at t = {}", grid.t(n))));
        }
        if keep(n + 1) {
            kept.push(current);
        }
        current = out;
        jump_next = jump_now;
    }
    kept.push(current);
    kept.reverse();
    Ok(kept)
}

pub(crate) const CONSERVATIVITY_TOL: f64 = 1e-6;
