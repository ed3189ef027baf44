//! Price surfaces, the hedge ratio, and the integral-equation price solver.

use super::evolution::{layer_from_fn, pad_for, price_recursion};
use super::grid::{interp_row, Extended, Grid, GridSpec, Layer, Stencil};
use super::payoff::PayoffSpec;
use crate::error::{Error, Result};
use crate::market::MarketModel;
use serde::Serialize;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ie,
    Fd,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ie => "ie",
            Method::Fd => "fd",
        }
    }
}

/// Price `φ(t, s, i, y)` and hedge ratio `ξ` on the stored time layers.
#[derive(Debug, Clone)]
pub struct PriceSurface {
    pub method: Method,
    pub grid: Grid,
    price: Vec<Layer>,
    xi: Vec<Layer>,
}

impl PriceSurface {
    pub(crate) fn new(model: &MarketModel, method: Method, grid: Grid, price: Vec<Layer>) -> Self {
        let xi = price.iter().map(|l| xi_layer(model, &grid, l)).collect();
        Self {
            method,
            grid,
            price,
            xi,
        }
    }

    /// Stored price layers in increasing time.
    pub fn price_layers(&self) -> &[Layer] {
        &self.price
    }

    pub fn xi_layers(&self) -> &[Layer] {
        &self.xi
    }

    pub fn in_support(&self, s: f64) -> bool {
        s >= self.grid.s_min() * (1.0 - 1e-12) && s <= self.grid.s_max() * (1.0 + 1e-12)
    }

    /// Price at an arbitrary point: linear in `t` between stored layers,
    /// linear in age (clamped to the represented ages), linear in `s` with
    /// linear extrapolation outside the grid.
    pub fn price(&self, t: f64, s: f64, i: usize, y: f64) -> f64 {
        self.interp(&self.price, t, s, i, y)
    }

    /// Hedge ratio interpolated from its node values.
    pub fn xi(&self, t: f64, s: f64, i: usize, y: f64) -> f64 {
        self.interp(&self.xi, t, s, i, y)
    }

    fn interp(&self, layers: &[Layer], t: f64, s: f64, i: usize, y: f64) -> f64 {
        let p = self.grid.position(s);
        let at_layer = |l: &Layer| {
            let q = (y / self.grid.dt).clamp(0.0, (l.rows - 1) as f64);
            let m = (q.floor() as usize).min(l.rows.saturating_sub(2));
            let w = if l.rows > 1 { q - m as f64 } else { 0.0 };
            let a = interp_row(l.row(i, m), &self.grid, p);
            if w == 0.0 {
                a
            } else {
                a * (1.0 - w) + interp_row(l.row(i, m + 1), &self.grid, p) * w
            }
        };
        let idx = layers.partition_point(|l| l.t <= t);
        if idx == 0 {
            return at_layer(&layers[0]);
        }
        if idx == layers.len() {
            return at_layer(&layers[layers.len() - 1]);
        }
        let (a, b) = (&layers[idx - 1], &layers[idx]);
        let w = (t - a.t) / (b.t - a.t);
        at_layer(a) * (1.0 - w) + at_layer(b) * w
    }

    /// Writes `t,s,regime,y,price,xi` for every `t_stride`-th stored layer
    /// (the first and last are always written) and every `y_stride`-th age
    /// row. Regimes are 1-based.
    pub fn write_csv<W: Write>(&self, mut w: W, t_stride: usize, y_stride: usize) -> std::io::Result<()> {
        writeln!(w, "t,s,regime,y,price,xi")?;
        let n = self.price.len();
        let t_stride = t_stride.max(1);
        let y_stride = y_stride.max(1);
        for (q, (pl, xl)) in self.price.iter().zip(&self.xi).enumerate() {
            if q % t_stride != 0 && q + 1 != n {
                continue;
            }
            for i in 0..self.grid.n_regimes {
                for m in (0..pl.rows).step_by(y_stride) {
                    let y = self.grid.age(m);
                    for (k, s) in self.grid.s.iter().enumerate() {
                        let mut b = ryu::Buffer::new();
                        write!(w, "{},", b.format(pl.t))?;
                        write!(w, "{},{},", b.format(*s), i + 1)?;
                        write!(w, "{},", b.format(y))?;
                        write!(w, "{},", b.format(pl.row(i, m)[k]))?;
                        writeln!(w, "{}", b.format(xl.row(i, m)[k]))?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Hedge ratio at every node of a price layer: central differences in `s`
/// (one-sided at the edges) and the jump sum through the shared shift
/// interpolation.
fn xi_layer(model: &MarketModel, grid: &Grid, layer: &Layer) -> Layer {
    let mut out = Layer {
        data: vec![0.0; layer.data.len()],
        ..layer.clone()
    };
    let ji = model.jump_integrals();
    let offs: Vec<(f64, f64)> = model
        .jump()
        .nodes()
        .iter()
        .map(|n| (n.eta.ln_1p(), n.eta * n.weight))
        .collect();
    let st = Stencil::shifts(&offs, grid.h);
    let mut ext = Extended::with_pad(pad_for(std::slice::from_ref(&st)));
    let mut jsum = vec![0.0; grid.n_s];
    let s = &grid.s;
    let n_s = grid.n_s;
    for i in 0..grid.n_regimes {
        let s2 = model.sigma(layer.t, i).powi(2);
        let denom = s2 + ji.eta_sq;
        for m in 0..layer.rows {
            let row = layer.row(i, m);
            ext.fill(row, grid);
            st.apply(&ext, &mut jsum);
            let dst = out.row_mut(i, m);
            for k in 0..n_s {
                let (a, b) = match k {
                    0 => (0, 1),
                    k if k == n_s - 1 => (k - 1, k),
                    k => (k - 1, k + 1),
                };
                let ds = (row[b] - row[a]) / (s[b] - s[a]);
                let jump = (jsum[k] - row[k] * ji.eta_mean) / s[k];
                dst[k] = (s2 * ds + jump) / denom;
            }
        }
    }
    out
}

/// Hedge ratio at an arbitrary point from the price surface directly.
pub fn hedge_ratio(
    model: &MarketModel,
    surface: &PriceSurface,
    t: f64,
    s: f64,
    i: usize,
    y: f64,
) -> Result<f64> {
    if !surface.in_support(s) {
        return Err(Error::OutOfGrid(format!(
            "s = {s} outside [{}, {}]",
            surface.grid.s_min(),
            surface.grid.s_max()
        )));
    }
    if i >= model.n_regimes() {
        return Err(Error::UnknownState(i));
    }
    let h = surface.grid.h;
    let (up, dn) = (s * h.exp(), s * (-h).exp());
    let ds = (surface.price(t, up, i, y) - surface.price(t, dn, i, y)) / (up - dn);
    let here = surface.price(t, s, i, y);
    let jump: f64 = model
        .jump()
        .nodes()
        .iter()
        .map(|n| (surface.price(t, s * (1.0 + n.eta), i, y) - here) * n.eta * n.weight)
        .sum::<f64>()
        / s;
    let s2 = model.sigma(t, i).powi(2);
    Ok((s2 * ds + jump) / (s2 + model.jump_integrals().eta_sq))
}

/// Warns when the no-arbitrage condition fails; pricing proceeds regardless.
pub(crate) fn warn_arbitrage(model: &MarketModel) {
    if let Err(e) = model.require_no_arbitrage(101) {
        log::warn!("{e}");
    }
}

/// Integral-equation price surface.
pub fn solve_price(model: &MarketModel, payoff: &PayoffSpec, spec: &GridSpec) -> Result<PriceSurface> {
    payoff.validate()?;
    warn_arbitrage(model);
    let grid = Grid::build(model, spec)?;
    let terminal = layer_from_fn(&grid, grid.n_t, |s, _, _| payoff.eval(s));
    let keep_all = spec.keep_layers;
    let n_t = grid.n_t;
    let layers = price_recursion(model, &grid, terminal, spec.stencil_sd, |n| keep_all || n == n_t)?;
    Ok(PriceSurface::new(model, Method::Ie, grid, layers))
}
