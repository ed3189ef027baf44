//! Discretization shared by the integral-equation and finite-difference
//! solvers: the `(t, y)` lattice with common step, the uniform `ln s` grid,
//! translation-invariant stencils and linear-in-`s` extrapolation.

use crate::error::{Error, Result};
use crate::market::MarketModel;
use serde::Serialize;

/// User-facing grid parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    /// Number of time steps on `[0, T]`.
    pub n_t: usize,
    /// Number of `ln s` nodes.
    pub n_s: usize,
    /// Price level that is placed exactly on a node.
    pub s_ref: f64,
    /// Half-width of the `ln s` range in units of `σ_max √T`.
    pub width_sd: f64,
    /// Largest starting age of interest; ages up to `T + max_start_age` are
    /// represented.
    pub max_start_age: f64,
    /// Truncation of Gaussian stencils in standard deviations.
    pub stencil_sd: f64,
    /// Keep every time layer; otherwise only `t = 0` and `t = T`.
    pub keep_layers: bool,
}

impl GridSpec {
    pub fn new(n_t: usize, n_s: usize, s_ref: f64) -> Self {
        Self {
            n_t,
            n_s,
            s_ref,
            width_sd: 6.0,
            max_start_age: 0.0,
            stencil_sd: 8.0,
            keep_layers: true,
        }
    }

    /// Halves the time step and the `ln s` step, keeping the range so that
    /// coarse nodes remain nodes.
    pub fn refined(&self) -> Self {
        Self {
            n_t: self.n_t * 2,
            n_s: (self.n_s - 1) * 2 + 1,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_t < 1 || self.n_s < 5 {
            return Err(Error::InvalidParameter(format!(
                "grid needs n_t >= 1 and n_s >= 5, got {} and {}",
                self.n_t, self.n_s
            )));
        }
        for (name, v) in [
            ("s_ref", self.s_ref),
            ("width_sd", self.width_sd),
            ("stencil_sd", self.stencil_sd),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.max_start_age >= 0.0 && self.max_start_age.is_finite()) {
            return Err(Error::InvalidParameter("max_start_age must be >= 0".into()));
        }
        Ok(())
    }
}

/// Resolved lattice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub n_t: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Extra age rows beyond the time index, from `max_start_age`.
    pub age_offset: usize,
    pub n_s: usize,
    /// `ln s` of the first node.
    pub x0: f64,
    /// `ln s` step.
    pub h: f64,
    pub n_regimes: usize,
    pub s: Vec<f64>,
}

impl Grid {
    pub fn build(model: &MarketModel, spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        let horizon = model.horizon();
        let dt = horizon / spec.n_t as f64;
        let (_, sigma_max) = model.sigma_bounds();
        let (f_lo, f_hi) = model.jump().factor_range();
        let half = spec.width_sd * sigma_max * horizon.sqrt();
        let lo = spec.s_ref.ln() - half + f_lo.ln();
        let hi = spec.s_ref.ln() + half + f_hi.ln();
        let h = (hi - lo) / (spec.n_s - 1) as f64;
        // shift so that s_ref is a node
        let k_ref = ((spec.s_ref.ln() - lo) / h).round();
        let x0 = spec.s_ref.ln() - k_ref * h;
        let s = (0..spec.n_s).map(|k| (x0 + k as f64 * h).exp()).collect();
        Ok(Self {
            n_t: spec.n_t,
            dt,
            horizon,
            age_offset: (spec.max_start_age / dt - 1e-9).ceil().max(0.0) as usize,
            n_s: spec.n_s,
            x0,
            h,
            n_regimes: model.n_regimes(),
            s,
        })
    }

    pub fn t(&self, n: usize) -> f64 {
        if n == self.n_t {
            self.horizon
        } else {
            n as f64 * self.dt
        }
    }

    pub fn age(&self, m: usize) -> f64 {
        m as f64 * self.dt
    }

    /// Number of age rows carried at time layer `n`.
    pub fn rows(&self, n: usize) -> usize {
        n + self.age_offset + 1
    }

    /// Largest represented age.
    pub fn max_age(&self) -> f64 {
        self.age(self.n_t + self.age_offset)
    }

    pub fn s_min(&self) -> f64 {
        self.s[0]
    }

    pub fn s_max(&self) -> f64 {
        self.s[self.n_s - 1]
    }

    pub fn new_layer(&self, n: usize) -> Layer {
        Layer {
            n,
            t: self.t(n),
            rows: self.rows(n),
            n_s: self.n_s,
            data: vec![0.0; self.n_regimes * self.rows(n) * self.n_s],
        }
    }

    /// Fractional node position of price `s`.
    pub fn position(&self, s: f64) -> f64 {
        (s.ln() - self.x0) / self.h
    }
}

/// Values at one time layer, indexed `(regime, age row, s node)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n: usize,
    pub t: f64,
    pub rows: usize,
    pub n_s: usize,
    pub data: Vec<f64>,
}

impl Layer {
    #[inline]
    pub fn row(&self, i: usize, m: usize) -> &[f64] {
        let m = m.min(self.rows - 1);
        let o = (i * self.rows + m) * self.n_s;
        &self.data[o..o + self.n_s]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize, m: usize) -> &mut [f64] {
        let o = (i * self.rows + m) * self.n_s;
        &mut self.data[o..o + self.n_s]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Dense stencil on the `ln s` grid: `out[k] = Σ_j w[j] ψ(k + min_off + j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub min_off: isize,
    pub weights: Vec<f64>,
}

impl Stencil {
    pub fn max_off(&self) -> isize {
        self.min_off + self.weights.len() as isize - 1
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Discrete normal density of the offset `N(mean, var)` (in `ln s`
    /// units) sampled at multiples of `h`, times `h`.
    pub fn gaussian(mean: f64, var: f64, h: f64, width_sd: f64) -> Self {
        let sd = var.sqrt();
        let lo = ((mean - width_sd * sd) / h).floor() as isize;
        let hi = ((mean + width_sd * sd) / h).ceil() as isize;
        let norm = h / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let weights = (lo..=hi)
            .map(|j| {
                let u = (j as f64 * h - mean) / sd;
                norm * (-0.5 * u * u).exp()
            })
            .collect();
        Self { min_off: lo, weights }
    }

    /// Sum of `coef_m ψ(s e^{o_m})` with linear-in-`s` interpolation between
    /// the two neighbouring nodes.
    pub fn shifts(offsets: &[(f64, f64)], h: f64) -> Self {
        if offsets.is_empty() {
            return Self {
                min_off: 0,
                weights: vec![0.0],
            };
        }
        let place = |o: f64| {
            let p = o / h;
            let kk = p.floor();
            (kk as isize, p - kk)
        };
        let lo = offsets.iter().map(|&(o, _)| place(o).0).min().unwrap();
        let hi = offsets.iter().map(|&(o, _)| place(o).0 + 1).max().unwrap();
        let mut weights = vec![0.0; (hi - lo + 1) as usize];
        let eh = h.exp_m1();
        for &(o, c) in offsets {
            let (kk, frac) = place(o);
            let theta = (frac * h).exp_m1() / eh;
            let at = (kk - lo) as usize;
            weights[at] += c * (1.0 - theta);
            weights[at + 1] += c * theta;
        }
        Self { min_off: lo, weights }
    }

    /// Applies the stencil to a row extended by [`Extended`].
    #[inline]
    pub fn apply(&self, ext: &Extended, out: &mut [f64]) {
        let base = ext.pad as isize + self.min_off;
        debug_assert!(base >= 0 && (ext.data.len() as isize) >= base + (out.len() + self.weights.len()) as isize - 1);
        for (k, o) in out.iter_mut().enumerate() {
            let start = (base + k as isize) as usize;
            let seg = &ext.data[start..start + self.weights.len()];
            *o = seg.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
        }
    }
}

/// A grid row padded on both sides with values extrapolated linearly in `s`
/// from the two outermost nodes.
#[derive(Debug, Clone, Default)]
pub struct Extended {
    pub pad: usize,
    pub data: Vec<f64>,
}

impl Extended {
    pub fn with_pad(pad: usize) -> Self {
        Self {
            pad,
            data: Vec::new(),
        }
    }

    pub fn fill(&mut self, row: &[f64], grid: &Grid) {
        let n = row.len();
        let p = self.pad;
        self.data.clear();
        self.data.resize(n + 2 * p, 0.0);
        let s = &grid.s;
        let slope_lo = (row[1] - row[0]) / (s[1] - s[0]);
        let slope_hi = (row[n - 1] - row[n - 2]) / (s[n - 1] - s[n - 2]);
        for j in 1..=p {
            let jh = j as f64 * grid.h;
            self.data[p - j] = row[0] + slope_lo * s[0] * (-jh).exp_m1();
            self.data[p + n - 1 + j] = row[n - 1] + slope_hi * s[n - 1] * jh.exp_m1();
        }
        self.data[p..p + n].copy_from_slice(row);
    }
}

/// Linear-in-`s` interpolation of a row at fractional node position `p`,
/// extrapolating linearly in `s` outside the grid.
pub fn interp_row(row: &[f64], grid: &Grid, p: f64) -> f64 {
    let n = row.len();
    let k = (p.floor() as isize).clamp(0, n as isize - 2) as usize;
    let s_target = (grid.x0 + p * grid.h).exp();
    let (s0, s1) = (grid.s[k], grid.s[k + 1]);
    let w = (s_target - s0) / (s1 - s0);
    row[k] * (1.0 - w) + row[k + 1] * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::test_models::*;
    use approx::assert_abs_diff_eq;

    fn bs_grid(n_s: usize) -> Grid {
        let m = black_scholes(0.2, 0.05, 0.05, 1.0);
        Grid::build(&m, &GridSpec::new(10, n_s, 100.0)).unwrap()
    }

    #[test]
    fn reference_price_is_a_node() {
        let g = bs_grid(101);
        let p = g.position(100.0);
        assert_abs_diff_eq!(p, p.round(), epsilon = 1e-9);
        let fine = Grid::build(
            &black_scholes(0.2, 0.05, 0.05, 1.0),
            &GridSpec::new(10, 101, 100.0).refined(),
        )
        .unwrap();
        assert_abs_diff_eq!(fine.h * 2.0, g.h, epsilon = 1e-14);
        assert_abs_diff_eq!(fine.x0, g.x0, epsilon = 1e-12);
    }

    #[test]
    fn extension_and_shift_are_exact_for_affine_rows() {
        let g = bs_grid(41);
        let row: Vec<f64> = g.s.iter().map(|s| 3.0 - 0.5 * s).collect();
        let mut ext = Extended::with_pad(30);
        ext.fill(&row, &g);
        let st = Stencil::shifts(&[(0.37, 1.0), (-0.21, 2.0)], g.h);
        let mut out = vec![0.0; row.len()];
        st.apply(&ext, &mut out);
        for (k, s) in g.s.iter().enumerate() {
            let expected = (3.0 - 0.5 * s * 0.37f64.exp()) + 2.0 * (3.0 - 0.5 * s * (-0.21f64).exp());
            assert_abs_diff_eq!(out[k], expected, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(interp_row(&row, &g, 45.3), 3.0 - 0.5 * (g.x0 + 45.3 * g.h).exp(), epsilon = 1e-10);
    }

    #[test]
    fn gaussian_stencil_moments() {
        let h = 0.01;
        let st = Stencil::gaussian(0.013, 0.0004, h, 8.0);
        assert_abs_diff_eq!(st.sum(), 1.0, epsilon = 1e-12);
        let mean: f64 = st
            .weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * ((st.min_off + j as isize) as f64 * h).exp())
            .sum();
        assert_abs_diff_eq!(mean, (0.013f64 + 0.0002).exp(), epsilon = 1e-12);
    }
}
