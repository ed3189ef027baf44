//! Event-driven simulation of `(S, X, Y)` under either measure.
//!
//! Between events the log-price is Gaussian with known mean and variance, so
//! paths are sampled exactly in law on the event grid (regime switches, jumps
//! and requested record times). Under the minimal martingale measure jumps are
//! generated by thinning a dominating Poisson stream.

use super::MarketModel;
use crate::error::{Error, Result};
use crate::semi_markov::{RegimeState, Transition};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Measure {
    Physical,
    MinimalMartingale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Grid,
    Regime,
    Jump,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Grid => "grid",
            EventKind::Regime => "regime",
            EventKind::Jump => "jump",
        }
    }
}

/// State of the path right after an event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathPoint {
    pub t: f64,
    pub s: f64,
    pub x: usize,
    pub y: f64,
    pub event: EventKind,
    /// Jump mark for jump events.
    pub z: Option<f64>,
    /// `∫_{t0}^t r(X_u) du`.
    pub int_r: f64,
}

/// Brownian increments of one inter-event interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionSegment {
    pub t0: f64,
    pub t1: f64,
    pub regime: usize,
    /// `∫ σ dW`
    pub sigma_dw: f64,
    /// `∫ J σ dW`, only tracked under the physical measure.
    pub girsanov_dw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpMark {
    pub t: f64,
    pub node: usize,
    pub z: f64,
    pub regime: usize,
}

/// A fully recorded path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub measure: Measure,
    pub points: Vec<PathPoint>,
    pub segments: Vec<DiffusionSegment>,
    pub jumps: Vec<JumpMark>,
    pub transitions: Vec<Transition>,
    /// Density `dQ/dP` at the end of the path, physical measure only.
    pub rn_weight: Option<f64>,
}

/// Terminal state of a path without the event record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEnd {
    pub s: f64,
    pub state: RegimeState,
    pub int_r: f64,
    /// Log of `dQ/dP` on the simulated interval, zero under the martingale measure.
    pub log_rn: f64,
}

trait Sink {
    fn point(&mut self, _p: PathPoint) {}
    fn segment(&mut self, _s: DiffusionSegment) {}
    fn jump(&mut self, _j: JumpMark) {}
    fn transition(&mut self, _t: Transition) {}
}

struct Discard;
impl Sink for Discard {}

#[derive(Default)]
struct Recorder {
    points: Vec<PathPoint>,
    segments: Vec<DiffusionSegment>,
    jumps: Vec<JumpMark>,
    transitions: Vec<Transition>,
}

impl Sink for Recorder {
    fn point(&mut self, p: PathPoint) {
        self.points.push(p);
    }
    fn segment(&mut self, s: DiffusionSegment) {
        self.segments.push(s);
    }
    fn jump(&mut self, j: JumpMark) {
        self.jumps.push(j);
    }
    fn transition(&mut self, t: Transition) {
        self.transitions.push(t);
    }
}

/// Path sampler bound to one model and measure.
#[derive(Debug, Clone)]
pub struct PathSimulator<'a> {
    model: &'a MarketModel,
    measure: Measure,
    /// Dominating jump-intensity multiplier per regime (martingale measure).
    gamma_max: Vec<f64>,
}

impl<'a> PathSimulator<'a> {
    pub fn new(model: &'a MarketModel, measure: Measure) -> Result<Self> {
        let mut gamma_max = vec![1.0; model.n_regimes()];
        if measure == Measure::MinimalMartingale && !model.jump().is_empty() {
            model.require_no_arbitrage(101)?;
            let times = model.extremal_times();
            for (i, g) in gamma_max.iter_mut().enumerate() {
                *g = times
                    .iter()
                    .flat_map(|&t| model.mmm_coefficients(t, i).gamma)
                    .fold(0.0, f64::max);
            }
        }
        Ok(Self {
            model,
            measure,
            gamma_max,
        })
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    /// Acceptance probability of a proposed jump at node `node` in the
    /// thinning scheme.
    pub fn thinning_ratio(&self, t: f64, node: usize, regime: usize) -> f64 {
        let eta = self.model.jump().nodes()[node].eta;
        (self.model.mmm_ratio(t, regime) * eta + 1.0) / self.gamma_max[regime]
    }

    /// Simulates from `(t0, s0, start)` to the model horizon and returns only
    /// the terminal state.
    pub fn terminal<R: Rng + ?Sized>(
        &self,
        t0: f64,
        s0: f64,
        start: RegimeState,
        rng: &mut R,
    ) -> Result<PathEnd> {
        self.run(t0, s0, start, &[], rng, &mut Discard)
    }

    /// Simulates and records every event plus the requested record times.
    /// The horizon is always recorded.
    pub fn record<R: Rng + ?Sized>(
        &self,
        t0: f64,
        s0: f64,
        start: RegimeState,
        record_times: &[f64],
        rng: &mut R,
    ) -> Result<PathRecord> {
        let mut grid: Vec<f64> = record_times
            .iter()
            .copied()
            .filter(|&t| t > t0 && t < self.model.horizon())
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid.push(self.model.horizon());
        let mut rec = Recorder::default();
        let end = self.run(t0, s0, start, &grid, rng, &mut rec)?;
        Ok(PathRecord {
            measure: self.measure,
            points: rec.points,
            segments: rec.segments,
            jumps: rec.jumps,
            transitions: rec.transitions,
            rn_weight: (self.measure == Measure::Physical).then(|| end.log_rn.exp()),
        })
    }

    fn jump_rate(&self, x: usize) -> f64 {
        let mass = self.model.jump().mass();
        match self.measure {
            Measure::Physical => mass,
            Measure::MinimalMartingale => mass * self.gamma_max[x],
        }
    }

    fn next_jump<R: Rng + ?Sized>(&self, t: f64, x: usize, rng: &mut R) -> f64 {
        let rate = self.jump_rate(x);
        if rate > 0.0 {
            let e: f64 = rng.sample(Exp1);
            t + e / rate
        } else {
            f64::INFINITY
        }
    }

    fn run<R: Rng + ?Sized, K: Sink>(
        &self,
        t0: f64,
        s0: f64,
        start: RegimeState,
        grid: &[f64],
        rng: &mut R,
        sink: &mut K,
    ) -> Result<PathEnd> {
        let m = self.model;
        let t_end = m.horizon();
        if !(s0 > 0.0 && s0.is_finite()) {
            return Err(Error::InvalidParameter(format!("initial price must be > 0, got {s0}")));
        }
        if !(t0 >= 0.0 && t0 < t_end) {
            return Err(Error::InvalidParameter(format!(
                "start time {t0} outside [0, {t_end})"
            )));
        }
        RegimeState::new(start.x, start.y)?;
        if start.x >= m.n_regimes() {
            return Err(Error::UnknownState(start.x));
        }
        let rates = m.rates();
        let physical = self.measure == Measure::Physical;

        let (mut t, mut state, mut ln_s) = (t0, start, s0.ln());
        let (mut int_r, mut log_rn) = (0.0, 0.0);
        let (h, mut next_regime) = rates.sample_transition(state.x, state.y, rng)?;
        let mut t_switch = t + h;
        let mut t_jump = self.next_jump(t, state.x, rng);
        let mut gi = 0;

        sink.point(PathPoint {
            t,
            s: s0,
            x: state.x,
            y: state.y,
            event: EventKind::Grid,
            z: None,
            int_r,
        });

        loop {
            let t_grid = grid.get(gi).copied().unwrap_or(t_end);
            let t_next = t_switch.min(t_jump).min(t_grid).min(t_end);

            if t_next > t {
                let seg = self.diffuse(t, t_next, state.x, rng);
                ln_s += seg.log_drift + seg.sigma_dw;
                log_rn += seg.log_rn;
                int_r += m.r(state.x) * (t_next - t);
                sink.segment(DiffusionSegment {
                    t0: t,
                    t1: t_next,
                    regime: state.x,
                    sigma_dw: seg.sigma_dw,
                    girsanov_dw: seg.girsanov_dw,
                });
                state.y += t_next - t;
                t = t_next;
            }

            if t_switch == t_next && t_switch < t_end {
                sink.transition(Transition {
                    time: t,
                    from: state.x,
                    to: next_regime,
                    exit_age: state.y,
                });
                state = RegimeState {
                    x: next_regime,
                    y: 0.0,
                };
                let (h, nx) = rates.sample_transition(state.x, 0.0, rng)?;
                t_switch = t + h;
                next_regime = nx;
                if !physical {
                    // intensity bound depends on the regime; redraw (memoryless)
                    t_jump = self.next_jump(t, state.x, rng);
                }
                sink.point(self.point(t, ln_s, state, EventKind::Regime, None, int_r));
                continue;
            }

            if t_jump == t_next && t_jump < t_end {
                let u: f64 = rng.random();
                let node = m.jump().sample_node(u);
                let n = m.jump().nodes()[node];
                let accept = if physical {
                    let gamma = m.mmm_ratio(t, state.x) * n.eta + 1.0;
                    if !(gamma > 0.0) {
                        return Err(Error::NoArbitrage(format!(
                            "density jump factor {gamma} <= 0 at t = {t}, z = {}",
                            n.z
                        )));
                    }
                    log_rn += gamma.ln();
                    true
                } else {
                    let v: f64 = rng.random();
                    v < self.thinning_ratio(t, node, state.x)
                };
                if accept {
                    ln_s += n.eta.ln_1p();
                    sink.jump(JumpMark {
                        t,
                        node,
                        z: n.z,
                        regime: state.x,
                    });
                    sink.point(self.point(t, ln_s, state, EventKind::Jump, Some(n.z), int_r));
                }
                t_jump = self.next_jump(t, state.x, rng);
                continue;
            }

            if t_grid == t_next && gi < grid.len() {
                sink.point(self.point(t, ln_s, state, EventKind::Grid, None, int_r));
                gi += 1;
            }
            if t >= t_end {
                break;
            }
        }

        let s = ln_s.exp();
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("simulated price at t = {t}")));
        }
        Ok(PathEnd {
            s,
            state,
            int_r,
            log_rn,
        })
    }

    fn point(
        &self,
        t: f64,
        ln_s: f64,
        state: RegimeState,
        event: EventKind,
        z: Option<f64>,
        int_r: f64,
    ) -> PathPoint {
        PathPoint {
            t,
            s: ln_s.exp(),
            x: state.x,
            y: state.y,
            event,
            z,
            int_r,
        }
    }

    /// Samples the Gaussian increments over `[a, b]` in regime `x`.
    fn diffuse<R: Rng + ?Sized>(&self, a: f64, b: f64, x: usize, rng: &mut R) -> Step {
        let m = self.model;
        let dt = b - a;
        let mu = m.mu(x);
        let i1 = m.jump_integrals().eta_mean;
        let xi: f64 = rng.sample(StandardNormal);

        let (var, cross, var_phi, int_j) = if m.volatility().is_constant() {
            let s2 = m.sigma(a, x).powi(2);
            let j = m.mmm_ratio(a, x);
            (s2 * dt, j * s2 * dt, j * j * s2 * dt, j * dt)
        } else {
            let var = m.time_integral(a, b, |t| m.sigma(t, x).powi(2));
            let cross = m.time_integral(a, b, |t| m.mmm_ratio(t, x) * m.sigma(t, x).powi(2));
            let var_phi = m.time_integral(a, b, |t| {
                let j = m.mmm_ratio(t, x);
                j * j * m.sigma(t, x).powi(2)
            });
            let int_j = m.time_integral(a, b, |t| m.mmm_ratio(t, x));
            (var, cross, var_phi, int_j)
        };
        let sd = var.sqrt();
        let sigma_dw = sd * xi;

        match self.measure {
            Measure::MinimalMartingale => Step {
                log_drift: mu * dt + cross - 0.5 * var,
                sigma_dw,
                girsanov_dw: 0.0,
                log_rn: 0.0,
            },
            Measure::Physical => {
                // (∫σdW, ∫JσdW) is jointly Gaussian with covariance `cross`
                let beta = if var > 0.0 { cross / var } else { 0.0 };
                let resid = (var_phi - beta * cross).max(0.0);
                let mut g = beta * sigma_dw;
                if resid > 1e-14 * var_phi.max(f64::MIN_POSITIVE) {
                    let xi2: f64 = rng.sample(StandardNormal);
                    g += resid.sqrt() * xi2;
                }
                Step {
                    log_drift: (mu * dt) - 0.5 * var,
                    sigma_dw,
                    girsanov_dw: g,
                    log_rn: g - 0.5 * var_phi - i1 * int_j,
                }
            }
        }
    }
}

struct Step {
    log_drift: f64,
    sigma_dw: f64,
    girsanov_dw: f64,
    log_rn: f64,
}

/// Simulates one recorded path from time zero.
pub fn simulate_asset_path<R: Rng + ?Sized>(
    model: &MarketModel,
    s0: f64,
    start: RegimeState,
    record_times: &[f64],
    measure: Measure,
    rng: &mut R,
) -> Result<PathRecord> {
    PathSimulator::new(model, measure)?.record(0.0, s0, start, record_times, rng)
}

/// Density process `Z_t = dQ/dP|_t` evaluated at every recorded point of a
/// physical-measure path, rebuilt from the stored Brownian increments and
/// jump marks.
pub fn radon_nikodym_path(model: &MarketModel, path: &PathRecord) -> Result<Vec<f64>> {
    if path.measure != Measure::Physical {
        return Err(Error::InvalidParameter(
            "density process needs a physical-measure path".into(),
        ));
    }
    let i1 = model.jump_integrals().eta_mean;
    let mut out = Vec::with_capacity(path.points.len());
    let (mut si, mut ji) = (0, 0);
    let mut log_z = 0.0;
    for p in &path.points {
        while si < path.segments.len() && path.segments[si].t1 <= p.t {
            let seg = &path.segments[si];
            let x = seg.regime;
            let var_phi = model.time_integral(seg.t0, seg.t1, |t| {
                (model.mmm_ratio(t, x) * model.sigma(t, x)).powi(2)
            });
            let int_j = model.time_integral(seg.t0, seg.t1, |t| model.mmm_ratio(t, x));
            log_z += seg.girsanov_dw - 0.5 * var_phi - i1 * int_j;
            si += 1;
        }
        while ji < path.jumps.len() && path.jumps[ji].t <= p.t {
            let j = &path.jumps[ji];
            let eta = model.jump().nodes()[j.node].eta;
            let gamma = model.mmm_ratio(j.t, j.regime) * eta + 1.0;
            if !(gamma > 0.0) {
                return Err(Error::NoArbitrage(format!(
                    "density jump factor {gamma} <= 0 at t = {}",
                    j.t
                )));
            }
            log_z += gamma.ln();
            ji += 1;
        }
        out.push(log_z.exp());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::test_models::*;
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn origin() -> RegimeState {
        RegimeState { x: 0, y: 0.0 }
    }

    #[test]
    fn record_contains_grid_and_horizon() {
        let m = two_regime_jump();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rec = simulate_asset_path(&m, 100.0, origin(), &[0.25, 0.5, 0.75], Measure::Physical, &mut rng)
            .unwrap();
        let grid: Vec<f64> = rec
            .points
            .iter()
            .filter(|p| p.event == EventKind::Grid)
            .map(|p| p.t)
            .collect();
        assert_eq!(grid, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(rec.points.windows(2).all(|w| w[0].t <= w[1].t));
        assert_eq!(
            rec.points.iter().filter(|p| p.event == EventKind::Jump).count(),
            rec.jumps.len()
        );
        let z = radon_nikodym_path(&m, &rec).unwrap();
        assert_abs_diff_eq!(*z.last().unwrap(), rec.rn_weight.unwrap(), epsilon = 1e-9);
        assert_eq!(z[0], 1.0);
    }

    #[test]
    fn same_seed_same_path() {
        let m = two_regime_jump();
        let sim = PathSimulator::new(&m, Measure::MinimalMartingale).unwrap();
        let a = sim
            .terminal(0.0, 100.0, origin(), &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        let b = sim
            .terminal(0.0, 100.0, origin(), &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thinning_ratio_is_a_probability() {
        let m = two_regime_jump();
        let sim = PathSimulator::new(&m, Measure::MinimalMartingale).unwrap();
        for i in 0..2 {
            for node in 0..m.jump().nodes().len() {
                let p = sim.thinning_ratio(0.3, node, i);
                assert!(p > 0.0 && p <= 1.0 + 1e-15, "{p}");
            }
        }
    }

    #[test]
    fn martingale_measure_refuses_arbitrage() {
        let m = remark_single(0.15);
        assert!(PathSimulator::new(&m, Measure::MinimalMartingale).is_err());
        assert!(PathSimulator::new(&m, Measure::Physical).is_ok());
    }

    #[test]
    fn discount_integral_accumulates_regime_rates() {
        let m = two_regime_jump();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rec = simulate_asset_path(&m, 100.0, origin(), &[], Measure::Physical, &mut rng).unwrap();
        let mut expected = 0.0;
        let mut prev = rec.points[0];
        for p in &rec.points[1..] {
            expected += m.r(prev.x) * (p.t - prev.t);
            prev = *p;
        }
        assert_abs_diff_eq!(rec.points.last().unwrap().int_r, expected, epsilon = 1e-12);
    }
}
