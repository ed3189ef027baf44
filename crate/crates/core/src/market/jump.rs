use crate::error::{Error, Result};
use crate::numerics::simpson_nodes;
use serde::Serialize;

/// Jump-size map `η(z)`, bounded and strictly above `-1`.
#[derive(Debug, Clone, PartialEq)]
pub enum EtaFn {
    /// `max(min(slope * z, hi), lo)`.
    Clamp { slope: f64, lo: f64, hi: f64 },
    /// Linear interpolation with constant extrapolation.
    Table { z: Vec<f64>, values: Vec<f64> },
    Zero,
}

impl EtaFn {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            EtaFn::Clamp { slope, lo, hi } => (slope * z).min(*hi).max(*lo),
            EtaFn::Table { z: zs, values } => {
                let n = zs.len();
                if z <= zs[0] {
                    return values[0];
                }
                if z >= zs[n - 1] {
                    return values[n - 1];
                }
                let k = zs.partition_point(|&a| a <= z) - 1;
                let w = (z - zs[k]) / (zs[k + 1] - zs[k]);
                values[k] * (1.0 - w) + values[k + 1] * w
            }
            EtaFn::Zero => 0.0,
        }
    }

    /// Lower and upper bounds of the map over the whole real line.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            EtaFn::Clamp { slope, lo, hi } => {
                if *slope == 0.0 {
                    let v = 0f64.min(*hi).max(*lo);
                    (v, v)
                } else {
                    (*lo, *hi)
                }
            }
            EtaFn::Table { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
            EtaFn::Zero => (0.0, 0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if let EtaFn::Table { z, values } = self {
            if z.is_empty() || z.len() != values.len() || z.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidParameter(
                    "eta table needs increasing z and matching values".into(),
                ));
            }
        }
        if let EtaFn::Clamp { lo, hi, .. } = self {
            if lo > hi {
                return Err(Error::InvalidParameter("eta clamp needs lo <= hi".into()));
            }
        }
        let (lo, hi) = self.bounds();
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::NonFinite("eta bounds".into()));
        }
        if lo <= -1.0 {
            return Err(Error::InvalidParameter(format!(
                "jump size must stay above -1, lower bound is {lo}"
            )));
        }
        Ok(())
    }
}

/// One atom of the discretized jump measure, with its jump size cached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpNode {
    pub z: f64,
    pub weight: f64,
    pub eta: f64,
}

/// Integrals of the jump-size map against the jump measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpIntegrals {
    /// `∫ η dν`
    pub eta_mean: f64,
    /// `∫ η² dν`
    pub eta_sq: f64,
    /// `|ν|`
    pub mass: f64,
    /// `∫ ((1+η)² - 1) dν / |ν|`, zero when `|ν| = 0`.
    pub c: f64,
}

/// Finite jump measure as a weighted node list together with the jump-size map.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSpec {
    nodes: Vec<JumpNode>,
    eta: EtaFn,
    cumulative: Vec<f64>,
    integrals: JumpIntegrals,
}

impl JumpSpec {
    /// No jumps at all.
    pub fn none() -> Self {
        Self::from_nodes(Vec::new(), EtaFn::Zero).expect("empty measure is valid")
    }

    /// User-supplied atoms `(z, weight)`.
    pub fn from_nodes(atoms: Vec<(f64, f64)>, eta: EtaFn) -> Result<Self> {
        eta.validate()?;
        for &(z, w) in &atoms {
            if !(z.is_finite() && w.is_finite()) {
                return Err(Error::NonFinite("jump node".into()));
            }
            if w <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "jump node weights must be > 0, got {w}"
                )));
            }
        }
        let nodes: Vec<JumpNode> = atoms
            .into_iter()
            .map(|(z, weight)| JumpNode {
                z,
                weight,
                eta: eta.eval(z),
            })
            .collect();
        let mut cumulative = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        for n in &nodes {
            acc += n.weight;
            cumulative.push(acc);
        }
        let integrals = integrals_of(&nodes);
        Ok(Self {
            nodes,
            eta,
            cumulative,
            integrals,
        })
    }

    /// Discretizes `density(z) dz` on `[a, b]` with composite Simpson nodes.
    /// Nodes where the density vanishes are dropped.
    pub fn from_density<F: Fn(f64) -> f64>(
        density: F,
        a: f64,
        b: f64,
        n_nodes: usize,
        eta: EtaFn,
    ) -> Result<Self> {
        if !(a < b) {
            return Err(Error::InvalidParameter(format!("empty jump interval [{a}, {b}]")));
        }
        let mut atoms = Vec::new();
        for (z, w) in simpson_nodes(a, b, n_nodes) {
            let d = density(z);
            if !d.is_finite() || d < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "jump density must be finite and >= 0, got {d} at {z}"
                )));
            }
            if d > 0.0 {
                atoms.push((z, w * d));
            }
        }
        Self::from_nodes(atoms, eta)
    }

    pub fn nodes(&self) -> &[JumpNode] {
        &self.nodes
    }

    pub fn eta_fn(&self) -> &EtaFn {
        &self.eta
    }

    pub fn integrals(&self) -> JumpIntegrals {
        self.integrals
    }

    pub fn mass(&self) -> f64 {
        self.integrals.mass
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest and largest jump factor `1 + η` over the nodes.
    pub fn factor_range(&self) -> (f64, f64) {
        self.nodes.iter().fold((1.0f64, 1.0f64), |(lo, hi), n| {
            (lo.min(1.0 + n.eta), hi.max(1.0 + n.eta))
        })
    }

    /// Index of the node selected by a uniform draw `u ∈ [0,1)` with
    /// probabilities `w_m / |ν|`.
    pub fn sample_node(&self, u: f64) -> usize {
        let target = u * self.integrals.mass;
        self.cumulative
            .partition_point(|&c| c <= target)
            .min(self.nodes.len().saturating_sub(1))
    }
}

fn integrals_of(nodes: &[JumpNode]) -> JumpIntegrals {
    let mut eta_mean = 0.0;
    let mut eta_sq = 0.0;
    let mut mass = 0.0;
    let mut second = 0.0;
    for n in nodes {
        eta_mean += n.eta * n.weight;
        eta_sq += n.eta * n.eta * n.weight;
        mass += n.weight;
        second += ((1.0 + n.eta).powi(2) - 1.0) * n.weight;
    }
    JumpIntegrals {
        eta_mean,
        eta_sq,
        mass,
        c: if mass > 0.0 { second / mass } else { 0.0 },
    }
}
