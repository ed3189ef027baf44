use crate::error::{Error, Result};

/// European payoff `K(s)`, Lipschitz with at most linear growth.
#[derive(Debug, Clone, PartialEq)]
pub enum PayoffSpec {
    Call { k1: f64 },
    Put { k1: f64 },
    /// Long `k1`, short two `k2`, long `k3` calls.
    Butterfly { k1: f64, k2: f64, k3: f64 },
    /// `K(s) = s`
    Linear,
    /// `K(s) = value`
    Constant { value: f64 },
    /// Piecewise linear through the given points, flat outside.
    Table { s: Vec<f64>, values: Vec<f64> },
}

impl PayoffSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        let ok = match self {
            PayoffSpec::Call { k1 } | PayoffSpec::Put { k1 } => finite(*k1) && *k1 >= 0.0,
            PayoffSpec::Butterfly { k1, k2, k3 } => {
                [*k1, *k2, *k3].iter().all(|v| finite(*v)) && 0.0 <= *k1 && k1 < k2 && k2 < k3
            }
            PayoffSpec::Linear => true,
            PayoffSpec::Constant { value } => finite(*value),
            PayoffSpec::Table { s, values } => {
                !s.is_empty()
                    && s.len() == values.len()
                    && s.windows(2).all(|w| w[1] > w[0])
                    && s.iter().chain(values.iter()).all(|v| finite(*v))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("malformed payoff {self:?}")))
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            PayoffSpec::Call { k1 } => (s - k1).max(0.0),
            PayoffSpec::Put { k1 } => (k1 - s).max(0.0),
            PayoffSpec::Butterfly { k1, k2, k3 } => {
                (s - k1).max(0.0) - 2.0 * (s - k2).max(0.0) + (s - k3).max(0.0)
            }
            PayoffSpec::Linear => s,
            PayoffSpec::Constant { value } => *value,
            PayoffSpec::Table { s: xs, values } => {
                let n = xs.len();
                if s <= xs[0] {
                    return values[0];
                }
                if s >= xs[n - 1] {
                    return values[n - 1];
                }
                let k = xs.partition_point(|&a| a <= s) - 1;
                let w = (s - xs[k]) / (xs[k + 1] - xs[k]);
                values[k] * (1.0 - w) + values[k + 1] * w
            }
        }
    }

    /// Points where the payoff is not differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            PayoffSpec::Call { k1 } | PayoffSpec::Put { k1 } => vec![*k1],
            PayoffSpec::Butterfly { k1, k2, k3 } => vec![*k1, *k2, *k3],
            PayoffSpec::Linear | PayoffSpec::Constant { .. } => Vec::new(),
            PayoffSpec::Table { s, .. } => s.clone(),
        }
    }

    /// Lipschitz constant on `[0, ∞)`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            PayoffSpec::Call { .. } | PayoffSpec::Put { .. } | PayoffSpec::Linear => 1.0,
            PayoffSpec::Butterfly { .. } => 1.0,
            PayoffSpec::Constant { .. } => 0.0,
            PayoffSpec::Table { s, values } => s
                .windows(2)
                .zip(values.windows(2))
                .map(|(a, b)| ((b[1] - b[0]) / (a[1] - a[0])).abs())
                .fold(0.0, f64::max),
        }
    }

    /// `sup |K(s)| / (1 + s)` over `s ≥ 0`. All supported payoffs are
    /// piecewise linear, so the supremum is attained at zero, a kink, or
    /// in the limit `s → ∞`.
    pub fn growth_norm(&self) -> f64 {
        let mut pts = self.kinks();
        pts.push(0.0);
        let at_points = pts
            .iter()
            .filter(|&&s| s >= 0.0)
            .map(|&s| self.eval(s).abs() / (1.0 + s))
            .fold(0.0, f64::max);
        let far = 1e12;
        at_points.max(self.eval(far).abs() / (1.0 + far))
    }
}
