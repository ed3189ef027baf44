//! Age-dependent semi-Markov regime process.
//!
//! A regime process on states `0..k` is described by transition rates
//! `λ_ij(y)` that depend on the age `y` (time since the last transition).
//! From them we derive the total exit rate `λ_i`, the cumulative hazard
//! `Λ_i(y) = ∫_0^y λ_i`, the holding-time law `F(y|i) = 1 - exp(-Λ_i(y))`,
//! its density and the embedded jump chain `p_ij(y) = λ_ij(y) / λ_i(y)`.
//!
//! Paths are simulated by hazard inversion: a unit-exponential draw `E` is
//! mapped to the holding time `h` solving `Λ_i(y0 + h) - Λ_i(y0) = E`.
//!
//! States are zero-based inside the library; the JSON and CSV interfaces use
//! one-based labels.

use crate::error::{Error, Result};
use crate::numerics::{bracketed_root, MonotoneCubic};
use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

const ROOT_TOL: f64 = 1e-10;
const ROOT_MAX_ITER: usize = 200;
const GENERATOR_STEP: f64 = 1e-6;

/// Parametric family for a single transition rate `λ_ij(y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFn {
    Constant { rate: f64 },
    /// Weibull hazard `scale * shape * y^(shape - 1)`, so that the cumulative
    /// hazard is `scale * y^shape`.
    Weibull { scale: f64, shape: f64 },
    /// Tabulated rate with monotone cubic interpolation and constant
    /// extrapolation past the last age.
    Table(MonotoneCubic),
}

impl RateFn {
    pub fn table(ages: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if ages.first().is_some_and(|&a| a < 0.0) {
            return Err(Error::InvalidParameter("rate table ages must be >= 0".into()));
        }
        if rates.iter().any(|&r| r < 0.0) {
            return Err(Error::InvalidParameter("rate table values must be >= 0".into()));
        }
        Ok(RateFn::Table(MonotoneCubic::new(ages, rates)?))
    }

    fn check(&self) -> Result<()> {
        let ok = match self {
            RateFn::Constant { rate } => rate.is_finite() && *rate >= 0.0,
            RateFn::Weibull { scale, shape } => {
                scale.is_finite() && shape.is_finite() && *scale >= 0.0 && *shape > 0.0
            }
            RateFn::Table(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad rate parameters {self:?}")))
        }
    }

    pub fn rate(&self, y: f64) -> f64 {
        match self {
            RateFn::Constant { rate } => *rate,
            RateFn::Weibull { scale, shape } => {
                if *shape == 1.0 {
                    *scale
                } else {
                    scale * shape * y.powf(shape - 1.0)
                }
            }
            RateFn::Table(t) => t.eval(y),
        }
    }

    /// `∫_0^y λ(u) du`.
    pub fn cumulative(&self, y: f64) -> f64 {
        match self {
            RateFn::Constant { rate } => rate * y,
            RateFn::Weibull { scale, shape } => scale * y.powf(*shape),
            RateFn::Table(t) => {
                let start = t.knots()[0];
                if y <= start {
                    t.values()[0] * y
                } else {
                    t.values()[0] * start + t.integral_to(y)
                }
            }
        }
    }
}

/// Closed form of the total exit hazard of one state, when one exists.
#[derive(Debug, Clone, PartialEq)]
enum ExitLaw {
    Absorbing,
    Constant(f64),
    Weibull { scale: f64, shape: f64 },
    General,
}

/// Current regime and its age.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeState {
    pub x: usize,
    pub y: f64,
}

impl RegimeState {
    pub fn new(x: usize, y: f64) -> Result<Self> {
        if !(y >= 0.0) {
            return Err(Error::InvalidParameter(format!("age must be >= 0, got {y}")));
        }
        Ok(Self { x, y })
    }
}

/// Immutable collection of age-dependent transition rates.
#[derive(Debug, Clone)]
pub struct RateSpec {
    n_states: usize,
    rates: Vec<Option<RateFn>>,
    exits: Vec<ExitLaw>,
    rate_bound: f64,
    divergence_threshold: f64,
}

impl RateSpec {
    /// Builds a spec from `(from, to, rate)` triples with zero-based states.
    /// Pairs that are not listed have rate zero.
    pub fn new(n_states: usize, rates: Vec<(usize, usize, RateFn)>) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidParameter("empty state set".into()));
        }
        let mut table: Vec<Option<RateFn>> = vec![None; n_states * n_states];
        for (i, j, f) in rates {
            if i >= n_states {
                return Err(Error::UnknownState(i));
            }
            if j >= n_states {
                return Err(Error::UnknownState(j));
            }
            if i == j {
                return Err(Error::InvalidParameter(format!(
                    "self-transition rate for state {i}"
                )));
            }
            f.check()?;
            let slot = &mut table[i * n_states + j];
            if slot.is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate rate for pair ({i}, {j})"
                )));
            }
            *slot = Some(f);
        }
        let exits = (0..n_states)
            .map(|i| exit_law(&table[i * n_states..(i + 1) * n_states]))
            .collect();
        Ok(Self {
            n_states,
            rates: table,
            exits,
            rate_bound: f64::INFINITY,
            divergence_threshold: 30.0,
        })
    }

    /// Markov special case: constant rates from a `(from, to, rate)` list.
    pub fn constant(n_states: usize, rates: &[(usize, usize, f64)]) -> Result<Self> {
        Self::new(
            n_states,
            rates
                .iter()
                .map(|&(i, j, rate)| (i, j, RateFn::Constant { rate }))
                .collect(),
        )
    }

    /// A single absorbing regime (no switching).
    pub fn single() -> Self {
        Self::new(1, Vec::new()).expect("one state is always valid")
    }

    pub fn with_rate_bound(mut self, bound: f64) -> Self {
        self.rate_bound = bound;
        self
    }

    pub fn with_divergence_threshold(mut self, threshold: f64) -> Self {
        self.divergence_threshold = threshold;
        self
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn rate_bound(&self) -> f64 {
        self.rate_bound
    }

    pub fn divergence_threshold(&self) -> f64 {
        self.divergence_threshold
    }

    pub fn rate_fn(&self, i: usize, j: usize) -> Option<&RateFn> {
        self.rates.get(i * self.n_states + j).and_then(|r| r.as_ref())
    }

    fn check_state(&self, i: usize) -> Result<()> {
        if i < self.n_states {
            Ok(())
        } else {
            Err(Error::UnknownState(i))
        }
    }

    fn row(&self, i: usize) -> &[Option<RateFn>] {
        &self.rates[i * self.n_states..(i + 1) * self.n_states]
    }

    /// `λ_ij(y)`; zero for undeclared pairs and on the diagonal.
    pub fn rate(&self, i: usize, j: usize, y: f64) -> f64 {
        self.rate_fn(i, j).map_or(0.0, |f| f.rate(y))
    }

    /// `λ_i(y) = Σ_{j≠i} λ_ij(y)`.
    pub fn total_rate(&self, i: usize, y: f64) -> f64 {
        self.row(i).iter().flatten().map(|f| f.rate(y)).sum()
    }

    fn cumulative_unchecked(&self, i: usize, y: f64) -> f64 {
        match &self.exits[i] {
            ExitLaw::Absorbing => 0.0,
            ExitLaw::Constant(c) => c * y,
            ExitLaw::Weibull { scale, shape } => scale * y.powf(*shape),
            ExitLaw::General => self.row(i).iter().flatten().map(|f| f.cumulative(y)).sum(),
        }
    }

    /// Cumulative hazard `Λ_i(y)`.
    pub fn cumulative_hazard(&self, i: usize, y: f64) -> Result<f64> {
        self.check_state(i)?;
        check_age(y)?;
        Ok(self.cumulative_unchecked(i, y))
    }

    /// Holding-time distribution `F(y|i) = 1 - exp(-Λ_i(y))`.
    pub fn holding_cdf(&self, i: usize, y: f64) -> Result<f64> {
        Ok(-(-self.cumulative_hazard(i, y)?).exp_m1())
    }

    /// Holding-time density `f(y|i) = λ_i(y) (1 - F(y|i))`.
    pub fn holding_density(&self, i: usize, y: f64) -> Result<f64> {
        let survival = (-self.cumulative_hazard(i, y)?).exp();
        Ok(self.total_rate(i, y) * survival)
    }

    /// `1 - F(y|i)`.
    pub fn survival(&self, i: usize, y: f64) -> Result<f64> {
        Ok((-self.cumulative_hazard(i, y)?).exp())
    }

    /// Probability of no transition during `[y, y + h]` given survival to age `y`.
    pub fn conditional_survival(&self, i: usize, y: f64, h: f64) -> Result<f64> {
        self.check_state(i)?;
        check_age(y)?;
        check_age(h)?;
        Ok((self.cumulative_unchecked(i, y) - self.cumulative_unchecked(i, y + h)).exp())
    }

    /// Embedded-chain destination probabilities `p_ij(y)`.
    pub fn embedded_probs(&self, i: usize, y: f64) -> Result<Vec<f64>> {
        self.check_state(i)?;
        check_age(y)?;
        let total = self.total_rate(i, y);
        if !(total > 0.0) {
            return Err(Error::ZeroTotalRate { state: i, age: y });
        }
        Ok((0..self.n_states)
            .map(|j| self.rate(i, j, y) / total)
            .collect())
    }

    /// Draws the residual holding time of state `i` given current age `y0`.
    /// Returns `f64::INFINITY` for an absorbing state.
    pub fn sample_holding<R: Rng + ?Sized>(&self, i: usize, y0: f64, rng: &mut R) -> Result<f64> {
        self.check_state(i)?;
        check_age(y0)?;
        let e: f64 = rng.sample(Exp1);
        self.invert_hazard(i, y0, e)
    }

    /// Solves `Λ_i(y0 + h) - Λ_i(y0) = e` for `h`.
    pub fn invert_hazard(&self, i: usize, y0: f64, e: f64) -> Result<f64> {
        match &self.exits[i] {
            ExitLaw::Absorbing => Ok(f64::INFINITY),
            ExitLaw::Constant(c) => Ok(if *c > 0.0 { e / c } else { f64::INFINITY }),
            ExitLaw::Weibull { scale, shape } => {
                if *scale <= 0.0 {
                    return Ok(f64::INFINITY);
                }
                let target = scale * y0.powf(*shape) + e;
                Ok(((target / scale).powf(1.0 / shape) - y0).max(0.0))
            }
            ExitLaw::General => {
                let base = self.cumulative_unchecked(i, y0);
                let g = |h: f64| self.cumulative_unchecked(i, y0 + h) - base - e;
                let mut hi = 1.0;
                let mut doublings = 0;
                while g(hi) < 0.0 {
                    hi *= 2.0;
                    doublings += 1;
                    if doublings > ROOT_MAX_ITER {
                        return Err(Error::NonConvergence(format!(
                            "cumulative hazard of state {i} does not reach {e} past age {y0}"
                        )));
                    }
                }
                bracketed_root(g, 0.0, hi, ROOT_TOL, ROOT_MAX_ITER)
            }
        }
    }

    fn sample_destination<R: Rng + ?Sized>(&self, i: usize, age: f64, rng: &mut R) -> Result<usize> {
        let probs = self.embedded_probs(i, age)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = i;
        for (j, p) in probs.iter().enumerate() {
            if *p <= 0.0 {
                continue;
            }
            acc += p;
            last = j;
            if u < acc {
                return Ok(j);
            }
        }
        Ok(last)
    }

    /// Draws `(holding time, next state)` from state `i` at age `y0`.
    ///
    /// An absorbing state yields `(f64::INFINITY, i)`.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        i: usize,
        y0: f64,
        rng: &mut R,
    ) -> Result<(f64, usize)> {
        let h = self.sample_holding(i, y0, rng)?;
        if !h.is_finite() {
            return Ok((h, i));
        }
        let next = self.sample_destination(i, y0 + h, rng)?;
        Ok((h, next))
    }

    /// Simulates the regime and age over `[0, horizon]`.
    pub fn simulate_regime_path<R: Rng + ?Sized>(
        &self,
        start: RegimeState,
        horizon: f64,
        rng: &mut R,
    ) -> Result<RegimePath> {
        self.check_state(start.x)?;
        check_age(start.y)?;
        if !(horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be > 0, got {horizon}"
            )));
        }
        let mut transitions = Vec::new();
        let (mut t, mut state) = (0.0, start);
        loop {
            let (h, next) = self.sample_transition(state.x, state.y, rng)?;
            if t + h > horizon {
                break;
            }
            t += h;
            transitions.push(Transition {
                time: t,
                from: state.x,
                to: next,
                exit_age: state.y + h,
            });
            state = RegimeState { x: next, y: 0.0 };
        }
        Ok(RegimePath {
            start,
            horizon,
            transitions,
        })
    }

    /// Applies the generator `∂φ/∂y(i,y) + Σ_j λ_ij(y) (φ(j,0) - φ(i,y))` to a
    /// test function, with the age derivative taken numerically.
    pub fn apply_generator<F: Fn(usize, f64) -> f64>(&self, phi: F, i: usize, y: f64) -> f64 {
        let h = GENERATOR_STEP;
        let d_age = if y >= h {
            (phi(i, y + h) - phi(i, y - h)) / (2.0 * h)
        } else {
            (-3.0 * phi(i, y) + 4.0 * phi(i, y + h) - phi(i, y + 2.0 * h)) / (2.0 * h)
        };
        let here = phi(i, y);
        let jump: f64 = (0..self.n_states)
            .filter(|&j| j != i)
            .map(|j| self.rate(i, j, y) * (phi(j, 0.0) - here))
            .sum();
        d_age + jump
    }

    /// Checks positivity, boundedness and growth of the cumulative hazard on
    /// `[0, y_max]`.
    pub fn validate_rates(&self, y_max: f64) -> Result<ValidationReport> {
        if !(y_max > 0.0) {
            return Err(Error::InvalidParameter(format!("y_max must be > 0, got {y_max}")));
        }
        let k = self.n_states;
        let mut ages: Vec<f64> = (0..=1000).map(|n| y_max * n as f64 / 1000.0).collect();
        for f in self.rates.iter().flatten() {
            if let RateFn::Table(t) = f {
                ages.extend(t.knots().iter().copied().filter(|&a| a <= y_max));
            }
        }
        ages.sort_by(f64::total_cmp);
        ages.dedup();

        let mut positivity: Option<Witness> = None;
        let mut bound: Option<(Witness, f64)> = None;
        let mut max_rate: f64 = 0.0;
        for i in 0..k {
            for j in (0..k).filter(|&j| j != i) {
                let Some(f) = self.rate_fn(i, j) else {
                    positivity.get_or_insert(Witness { from: i, to: Some(j), age: 0.0 });
                    continue;
                };
                for &y in &ages {
                    let v = f.rate(y);
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "rate ({i}, {j}) at age {y}"
                        )));
                    }
                    max_rate = max_rate.max(v);
                    if !(v > 0.0) && positivity.is_none() {
                        positivity = Some(Witness { from: i, to: Some(j), age: y });
                    }
                    if v > self.rate_bound && bound.is_none() {
                        bound = Some((Witness { from: i, to: Some(j), age: y }, v));
                    }
                }
            }
        }

        let mut growth: Option<(Witness, f64)> = None;
        let mut min_growth = f64::INFINITY;
        // a lone state has nowhere to go, so its hazard is identically zero
        let switching = if k > 1 { 0..k } else { 0..0 };
        for i in switching {
            let mut prev = 0.0;
            for &y in &ages {
                let c = self.cumulative_unchecked(i, y);
                if !c.is_finite() {
                    return Err(Error::NonFinite(format!("cumulative hazard of {i} at {y}")));
                }
                if c < prev - 1e-12 && growth.is_none() {
                    growth = Some((Witness { from: i, to: None, age: y }, c));
                }
                prev = c;
            }
            let at_max = self.cumulative_unchecked(i, y_max);
            min_growth = min_growth.min(at_max);
            if at_max < self.divergence_threshold && growth.is_none() {
                growth = Some((Witness { from: i, to: None, age: y_max }, at_max));
            }
        }

        let checks = vec![
            CheckOutcome {
                name: "positivity".into(),
                passed: positivity.is_none(),
                detail: match &positivity {
                    None => "all transition rates are positive on the age grid".into(),
                    Some(w) => format!(
                        "rate ({}, {}) is not positive at age {}",
                        w.from + 1,
                        w.to.map_or(0, |j| j + 1),
                        w.age
                    ),
                },
                witness: positivity,
            },
            CheckOutcome {
                name: "boundedness".into(),
                passed: bound.is_none(),
                detail: match &bound {
                    None => format!("max rate {max_rate} within bound {}", self.rate_bound),
                    Some((w, v)) => format!(
                        "rate ({}, {}) = {v} exceeds bound {} at age {}",
                        w.from + 1,
                        w.to.map_or(0, |j| j + 1),
                        self.rate_bound,
                        w.age
                    ),
                },
                witness: bound.map(|(w, _)| w),
            },
            CheckOutcome {
                name: "hazard_divergence".into(),
                passed: growth.is_none(),
                detail: match &growth {
                    None if k == 1 => "single state, no transitions".into(),
                    None => format!(
                        "min cumulative hazard at y_max is {min_growth} >= {}",
                        self.divergence_threshold
                    ),
                    Some((w, v)) => format!(
                        "cumulative hazard of state {} is {v} at age {} (threshold {})",
                        w.from + 1,
                        w.age,
                        self.divergence_threshold
                    ),
                },
                witness: growth.map(|(w, _)| w),
            },
        ];
        Ok(ValidationReport { y_max, checks })
    }
}

fn check_age(y: f64) -> Result<()> {
    if y >= 0.0 && y.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("age must be finite and >= 0, got {y}")))
    }
}

fn exit_law(row: &[Option<RateFn>]) -> ExitLaw {
    let present: Vec<&RateFn> = row.iter().flatten().collect();
    if present.is_empty() {
        return ExitLaw::Absorbing;
    }
    if present.iter().all(|f| matches!(f, RateFn::Constant { .. })) {
        let total = present
            .iter()
            .map(|f| match f {
                RateFn::Constant { rate } => *rate,
                _ => unreachable!(),
            })
            .sum();
        return ExitLaw::Constant(total);
    }
    if let RateFn::Weibull { shape, .. } = present[0] {
        let same_shape = present
            .iter()
            .all(|f| matches!(f, RateFn::Weibull { shape: s, .. } if s == shape));
        if same_shape {
            let scale = present
                .iter()
                .map(|f| match f {
                    RateFn::Weibull { scale, .. } => *scale,
                    _ => unreachable!(),
                })
                .sum();
            return ExitLaw::Weibull {
                scale,
                shape: *shape,
            };
        }
    }
    ExitLaw::General
}

/// One regime switch on a simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    pub time: f64,
    pub from: usize,
    pub to: usize,
    /// Age of the regime that was left.
    pub exit_age: f64,
}

/// Piecewise-constant regime trajectory on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimePath {
    pub start: RegimeState,
    pub horizon: f64,
    pub transitions: Vec<Transition>,
}

impl RegimePath {
    /// Regime and age at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> RegimeState {
        let n = self.transitions.partition_point(|tr| tr.time <= t);
        match n {
            0 => RegimeState {
                x: self.start.x,
                y: self.start.y + t,
            },
            n => {
                let tr = &self.transitions[n - 1];
                RegimeState {
                    x: tr.to,
                    y: t - tr.time,
                }
            }
        }
    }

    /// Time spent in state `i` during `[0, horizon]`.
    pub fn occupation_time(&self, i: usize) -> f64 {
        let mut total = 0.0;
        let (mut t0, mut x) = (0.0, self.start.x);
        for tr in &self.transitions {
            if x == i {
                total += tr.time - t0;
            }
            t0 = tr.time;
            x = tr.to;
        }
        if x == i {
            total += self.horizon - t0;
        }
        total
    }
}

/// Location of a failed check: the pair `(from, to)` (or a state) and the age.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub from: usize,
    pub to: Option<usize>,
    pub age: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub y_max: f64,
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}
