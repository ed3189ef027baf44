use crate::market::MarketModel;
use serde::Serialize;

/// Drift and jump-intensity tilts of the pricing equation at one `(t, i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaCoefficients {
    pub t: f64,
    pub regime: usize,
    pub beta1: f64,
    /// One value per jump node.
    pub beta2: Vec<f64>,
}

pub fn compute_betas(model: &MarketModel, t: f64, i: usize) -> BetaCoefficients {
    let ji = model.jump_integrals();
    let s2 = model.sigma(t, i).powi(2);
    let excess = model.mu(i) - model.r(i);
    let denom = s2 + ji.eta_sq;
    let beta1 = (excess * ji.eta_sq - s2 * ji.eta_mean) / denom;
    let tilt = (excess + ji.eta_mean) / denom;
    BetaCoefficients {
        t,
        regime: i,
        beta1,
        beta2: model.jump().nodes().iter().map(|n| 1.0 - tilt * n.eta).collect(),
    }
}

/// `β₁` alone, without allocating the node vector.
pub(crate) fn beta1(model: &MarketModel, t: f64, i: usize) -> f64 {
    let ji = model.jump_integrals();
    let s2 = model.sigma(t, i).powi(2);
    ((model.mu(i) - model.r(i)) * ji.eta_sq - s2 * ji.eta_mean) / (s2 + ji.eta_sq)
}

/// Bound on the operator norm of the jump operator in the growth norm:
/// `sup|β₂| (3|ν| + ∫η dν)`.
pub fn jump_operator_bound(model: &MarketModel, t: f64, i: usize) -> f64 {
    let ji = model.jump_integrals();
    let sup = compute_betas(model, t, i)
        .beta2
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()));
    sup * (3.0 * ji.mass + ji.eta_mean)
}
