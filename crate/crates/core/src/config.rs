//! JSON configuration: rate specs, market models, payoffs and run settings.
//!
//! Regimes are numbered from 1 in every file; they are shifted to the
//! zero-based library convention here. Every run setting has a default so a
//! config only needs the model and the payoff.

use crate::error::{Error, Result};
use crate::market::{EtaFn, JumpSpec, MarketModel, Volatility};
use crate::mc::McStart;
use crate::pricing::{GridSpec, Method, PayoffSpec};
use crate::semi_markov::{RateFn, RateSpec, RegimeState};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpecJson {
    pub states: usize,
    #[serde(default)]
    pub rates: Vec<RateEntryJson>,
    #[serde(default)]
    pub rate_bound: Option<f64>,
    #[serde(default)]
    pub divergence_threshold: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RateEntryJson {
    pub from: usize,
    pub to: usize,
    #[serde(flatten)]
    pub family: RateFamilyJson,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum RateFamilyJson {
    Constant { rate: f64 },
    Weibull { scale: f64, shape: f64 },
    Table { ages: Vec<f64>, rates: Vec<f64> },
}

impl RateSpecJson {
    pub fn build(&self) -> Result<RateSpec> {
        let mut rates = Vec::with_capacity(self.rates.len());
        for e in &self.rates {
            let from = one_based(e.from, self.states)?;
            let to = one_based(e.to, self.states)?;
            let f = match &e.family {
                RateFamilyJson::Constant { rate } => RateFn::Constant { rate: *rate },
                RateFamilyJson::Weibull { scale, shape } => RateFn::Weibull {
                    scale: *scale,
                    shape: *shape,
                },
                RateFamilyJson::Table { ages, rates } => RateFn::table(ages.clone(), rates.clone())?,
            };
            rates.push((from, to, f));
        }
        let mut spec = RateSpec::new(self.states, rates)?;
        if let Some(b) = self.rate_bound {
            spec = spec.with_rate_bound(b);
        }
        if let Some(d) = self.divergence_threshold {
            spec = spec.with_divergence_threshold(d);
        }
        Ok(spec)
    }
}

fn one_based(label: usize, k: usize) -> Result<usize> {
    if label == 0 || label > k {
        return Err(Error::UnknownState(label));
    }
    Ok(label - 1)
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SigmaJson {
    Constant { values: Vec<f64> },
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EtaJson {
    Clamp { slope: f64, lo: f64, hi: f64 },
    Table { z: Vec<f64>, values: Vec<f64> },
    Zero,
}

impl EtaJson {
    fn build(&self) -> EtaFn {
        match self {
            EtaJson::Clamp { slope, lo, hi } => EtaFn::Clamp {
                slope: *slope,
                lo: *lo,
                hi: *hi,
            },
            EtaJson::Table { z, values } => EtaFn::Table {
                z: z.clone(),
                values: values.clone(),
            },
            EtaJson::Zero => EtaFn::Zero,
        }
    }
}

/// Jump-measure density on a bounded interval.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DensityJson {
    /// Constant density `rate`.
    Uniform { rate: f64 },
    /// `mass` times the normal density.
    Normal { mean: f64, sd: f64, mass: f64 },
    /// Piecewise linear through the given points, zero outside.
    Table { z: Vec<f64>, values: Vec<f64> },
}

impl DensityJson {
    fn eval(&self, x: f64) -> f64 {
        match self {
            DensityJson::Uniform { rate } => *rate,
            DensityJson::Normal { mean, sd, mass } => {
                let u = (x - mean) / sd;
                mass * (-0.5 * u * u).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            DensityJson::Table { z, values } => {
                let n = z.len();
                if n == 0 || x < z[0] || x > z[n - 1] {
                    return 0.0;
                }
                if n == 1 {
                    return values[0];
                }
                let k = (z.partition_point(|&a| a <= x) - 1).min(n - 2);
                let w = (x - z[k]) / (z[k + 1] - z[k]);
                values[k] * (1.0 - w) + values[k + 1] * w
            }
        }
    }
}

fn default_density_panels() -> usize {
    200
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum JumpJson {
    Nodes {
        nodes: Vec<(f64, f64)>,
        eta: EtaJson,
    },
    Density {
        density: DensityJson,
        interval: (f64, f64),
        /// Number of Simpson nodes; an even count is raised by one.
        #[serde(default = "default_density_panels")]
        n: usize,
        eta: EtaJson,
    },
}

impl JumpJson {
    pub fn build(&self) -> Result<JumpSpec> {
        match self {
            JumpJson::Nodes { nodes, eta } => JumpSpec::from_nodes(nodes.clone(), eta.build()),
            JumpJson::Density {
                density,
                interval,
                n,
                eta,
            } => {
                if let DensityJson::Normal { sd, .. } = density {
                    if !(*sd > 0.0) {
                        return Err(Error::InvalidParameter("density sd must be > 0".into()));
                    }
                }
                JumpSpec::from_density(|z| density.eval(z), interval.0, interval.1, *n, eta.build())
            }
        }
    }
}

fn default_time_panels() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    pub regimes: RateSpecJson,
    pub r: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: SigmaJson,
    #[serde(default)]
    pub jump: Option<JumpJson>,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Simpson panels for time integrals of time-dependent coefficients.
    #[serde(default = "default_time_panels")]
    pub time_panels: usize,
}

impl ModelJson {
    pub fn build(&self) -> Result<MarketModel> {
        let rates = self.regimes.build()?;
        let sigma = match &self.sigma {
            SigmaJson::Constant { values } => Volatility::Constant(values.clone()),
            SigmaJson::Table { times, values } => Volatility::Table {
                times: times.clone(),
                values: values.clone(),
            },
        };
        let jump = match &self.jump {
            Some(j) => j.build()?,
            None => JumpSpec::none(),
        };
        Ok(MarketModel::new(rates, self.r.clone(), self.mu.clone(), sigma, jump, self.horizon)?
            .with_simpson_panels(self.time_panels))
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PayoffJson {
    Call {
        #[serde(rename = "K1")]
        k1: f64,
    },
    Put {
        #[serde(rename = "K1")]
        k1: f64,
    },
    Butterfly {
        #[serde(rename = "K1")]
        k1: f64,
        #[serde(rename = "K2")]
        k2: f64,
        #[serde(rename = "K3")]
        k3: f64,
    },
    Linear,
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
    Table { s: Vec<f64>, values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl PayoffJson {
    pub fn build(&self) -> Result<PayoffSpec> {
        let p = match self {
            PayoffJson::Call { k1 } => PayoffSpec::Call { k1: *k1 },
            PayoffJson::Put { k1 } => PayoffSpec::Put { k1: *k1 },
            PayoffJson::Butterfly { k1, k2, k3 } => PayoffSpec::Butterfly {
                k1: *k1,
                k2: *k2,
                k3: *k3,
            },
            PayoffJson::Linear => PayoffSpec::Linear,
            PayoffJson::Constant { value } => PayoffSpec::Constant { value: *value },
            PayoffJson::Table { s, values } => PayoffSpec::Table {
                s: s.clone(),
                values: values.clone(),
            },
        };
        p.validate()?;
        Ok(p)
    }
}

/// Pricing method selected in a run config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
pub enum MethodJson {
    #[serde(rename = "ie")]
    Ie,
    #[serde(rename = "fd")]
    Fd,
    #[serde(rename = "mc-q")]
    McQ,
    #[serde(rename = "mc-p")]
    McP,
}

impl MethodJson {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodJson::Ie => "ie",
            MethodJson::Fd => "fd",
            MethodJson::McQ => "mc-q",
            MethodJson::McP => "mc-p",
        }
    }

    /// Grid solver behind the method, if any.
    pub fn solver(self) -> Option<Method> {
        match self {
            MethodJson::Ie => Some(Method::Ie),
            MethodJson::Fd => Some(Method::Fd),
            _ => None,
        }
    }
}

impl std::str::FromStr for MethodJson {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ie" => Ok(MethodJson::Ie),
            "fd" => Ok(MethodJson::Fd),
            "mc-q" => Ok(MethodJson::McQ),
            "mc-p" => Ok(MethodJson::McP),
            other => Err(Error::Config(format!(
                "unknown method '{other}', expected ie, fd, mc-q or mc-p"
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartJson {
    pub s0: f64,
    /// One-based regime.
    pub regime: usize,
    pub age: f64,
}

impl Default for StartJson {
    fn default() -> Self {
        Self {
            s0: 100.0,
            regime: 1,
            age: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridJson {
    pub n_t: usize,
    pub n_s: usize,
    /// Defaults to the starting price.
    pub s_ref: Option<f64>,
    pub width_sd: f64,
    pub max_start_age: Option<f64>,
    pub stencil_sd: f64,
}

impl Default for GridJson {
    fn default() -> Self {
        Self {
            n_t: 100,
            n_s: 401,
            s_ref: None,
            width_sd: 6.0,
            max_start_age: None,
            stencil_sd: 8.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct McJson {
    pub n_paths: usize,
    pub ci_level: f64,
}

impl Default for McJson {
    fn default() -> Self {
        Self {
            n_paths: 200_000,
            ci_level: crate::mc::DEFAULT_CI_LEVEL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureJson {
    Physical,
    Mmm,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateJson {
    pub n_paths: usize,
    /// Spacing of recorded grid points.
    pub record_step: f64,
    pub measure: MeasureJson,
}

impl Default for SimulateJson {
    fn default() -> Self {
        Self {
            n_paths: 1,
            record_step: 0.01,
            measure: MeasureJson::Physical,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestJson {
    pub n_paths: usize,
    pub rebalance_steps: usize,
    /// Surface used for the hedge: `ie` or `fd`.
    pub method: MethodJson,
    /// Time steps of the surface; defaults to `rebalance_steps` so that every
    /// rebalance date is a surface layer.
    pub n_t: Option<usize>,
    /// `ln s` nodes of the surface; defaults to `grid.n_s`.
    pub n_s: Option<usize>,
}

impl Default for BacktestJson {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            rebalance_steps: 250,
            method: MethodJson::Ie,
            n_t: None,
            n_s: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct XvalJson {
    /// Largest relative IE/FD difference at the starting point.
    pub ie_fd_rel_tol: f64,
    /// Largest difference of the two Monte Carlo estimators in combined
    /// standard errors.
    pub mc_combined_se: f64,
}

impl Default for XvalJson {
    fn default() -> Self {
        Self {
            ie_fd_rel_tol: 0.01,
            mc_combined_se: 3.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckJson {
    /// Largest age checked for rate regularity. The cumulative hazard must
    /// reach the divergence threshold by this age.
    pub y_max: f64,
    /// Uniform time points of the no-arbitrage check, besides volatility knots.
    pub a2_points: usize,
}

impl Default for CheckJson {
    fn default() -> Self {
        Self {
            y_max: 100.0,
            a2_points: 101,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportJson {
    pub t_stride: usize,
    pub y_stride: usize,
}

impl Default for ExportJson {
    fn default() -> Self {
        Self {
            t_stride: 10,
            y_stride: 10,
        }
    }
}

fn default_method() -> MethodJson {
    MethodJson::Ie
}

fn default_seed() -> u64 {
    1
}

/// Top-level run configuration.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Model file, relative to the config file.
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    /// Inline model, used when no model file is given.
    #[serde(default)]
    pub model: Option<ModelJson>,
    pub payoff: PayoffJson,
    #[serde(default = "default_method")]
    pub method: MethodJson,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub start: StartJson,
    #[serde(default)]
    pub grid: GridJson,
    #[serde(default)]
    pub mc: McJson,
    #[serde(default)]
    pub simulate: SimulateJson,
    #[serde(default)]
    pub backtest: BacktestJson,
    #[serde(default)]
    pub xval: XvalJson,
    #[serde(default)]
    pub check: CheckJson,
    #[serde(default)]
    pub export: ExportJson,
}

/// A parsed config with its model resolved.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub run: RunConfig,
    pub model_json: ModelJson,
    /// Bytes of the config file followed by the model file, if separate.
    pub raw: Vec<u8>,
    pub path: PathBuf,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse<T: for<'de> Deserialize<'de>>(bytes: &[u8], path: &Path) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Reads a config file and the model it references.
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let mut raw = read(path)?;
        let run: RunConfig = parse(&raw, path)?;
        let model_json = match (&run.model_file, &run.model) {
            (Some(file), None) => {
                let full = path.parent().unwrap_or(Path::new(".")).join(file);
                if !full.is_file() {
                    return Err(Error::Config(format!("model file {} does not exist", full.display())));
                }
                let bytes = read(&full)?;
                let m = parse(&bytes, &full)?;
                raw.extend_from_slice(&bytes);
                m
            }
            (None, Some(m)) => m.clone(),
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either model_file or model, not both".into()))
            }
            (None, None) => return Err(Error::Config("config needs model_file or model".into())),
        };
        run.check_numbers()?;
        Ok(LoadedConfig {
            run,
            model_json,
            raw,
            path: path.to_path_buf(),
        })
    }

    fn check_numbers(&self) -> Result<()> {
        let positive = [
            ("start.s0", self.start.s0),
            ("grid.width_sd", self.grid.width_sd),
            ("grid.stencil_sd", self.grid.stencil_sd),
            ("check.y_max", self.check.y_max),
            ("simulate.record_step", self.simulate.record_step),
            ("xval.ie_fd_rel_tol", self.xval.ie_fd_rel_tol),
            ("xval.mc_combined_se", self.xval.mc_combined_se),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a positive number, got {v}")));
            }
        }
        let counts = [
            ("grid.n_t", self.grid.n_t),
            ("grid.n_s", self.grid.n_s),
            ("mc.n_paths", self.mc.n_paths),
            ("simulate.n_paths", self.simulate.n_paths),
            ("backtest.n_paths", self.backtest.n_paths),
            ("backtest.rebalance_steps", self.backtest.rebalance_steps),
            ("check.a2_points", self.check.a2_points),
            ("export.t_stride", self.export.t_stride),
            ("export.y_stride", self.export.y_stride),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.start.age >= 0.0) {
            return Err(Error::Config(format!("start.age must be >= 0, got {}", self.start.age)));
        }
        if !(self.mc.ci_level > 0.0 && self.mc.ci_level < 1.0) {
            return Err(Error::Config(format!("mc.ci_level must lie in (0, 1), got {}", self.mc.ci_level)));
        }
        if self.backtest.method.solver().is_none() {
            return Err(Error::Config("backtest.method must be ie or fd".into()));
        }
        Ok(())
    }

    /// Starting point with the regime shifted to zero-based.
    pub fn start(&self, model: &MarketModel) -> Result<McStart> {
        let x = one_based(self.start.regime, model.n_regimes())?;
        Ok(McStart {
            t0: 0.0,
            s0: self.start.s0,
            state: RegimeState::new(x, self.start.age)?,
        })
    }

    pub fn grid_spec(&self) -> GridSpec {
        let mut g = GridSpec::new(self.grid.n_t, self.grid.n_s, self.grid.s_ref.unwrap_or(self.start.s0));
        g.width_sd = self.grid.width_sd;
        g.stencil_sd = self.grid.stencil_sd;
        g.max_start_age = self.grid.max_start_age.unwrap_or(self.start.age);
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = r#"{
        "regimes": {"states": 2, "rates": [
            {"from": 1, "to": 2, "family": "table", "params": {"ages": [0, 0.5, 1, 2], "rates": [0.5, 1, 2, 2]}},
            {"from": 2, "to": 1, "family": "constant", "params": {"rate": 1.5}}
        ]},
        "r": [0.05, 0.03], "mu": [0.08, 0.10],
        "sigma": {"kind": "constant", "values": [0.2, 0.3]},
        "jump": {"density": {"kind": "uniform", "rate": 1}, "interval": [-0.5, 1], "n": 200,
                 "eta": {"kind": "clamp", "slope": 1, "lo": -0.5, "hi": 1}},
        "T": 1
    }"#;

    #[test]
    fn model_round_trip() {
        let m: ModelJson = serde_json::from_str(MODEL).unwrap();
        let model = m.build().unwrap();
        assert_eq!(model.n_regimes(), 2);
        assert_eq!(model.rates().rate(0, 1, 0.0), 0.5);
        assert_eq!(model.rates().rate(1, 0, 3.0), 1.5);
        assert!((model.jump_integrals().eta_mean - 0.375).abs() < 1e-12);
    }

    #[test]
    fn node_jumps_and_zero_eta() {
        let j: JumpJson = serde_json::from_str(r#"{"nodes": [[0.2, 2.0]], "eta": {"kind": "zero"}}"#).unwrap();
        let spec = j.build().unwrap();
        assert_eq!(spec.nodes().len(), 1);
        assert_eq!(spec.mass(), 2.0);
    }

    #[test]
    fn states_are_one_based() {
        let bad = r#"{"states": 2, "rates": [{"from": 0, "to": 2, "family": "constant", "params": {"rate": 1}}]}"#;
        let r: RateSpecJson = serde_json::from_str(bad).unwrap();
        assert!(matches!(r.build(), Err(Error::UnknownState(0))));
    }

    #[test]
    fn payoff_labels() {
        let p: PayoffJson = serde_json::from_str(r#"{"kind": "butterfly", "K1": 90, "K2": 100, "K3": 110}"#).unwrap();
        assert_eq!(p.build().unwrap().eval(100.0), 10.0);
        let c: PayoffJson = serde_json::from_str(r#"{"kind": "constant"}"#).unwrap();
        assert_eq!(c.build().unwrap().eval(5.0), 1.0);
        assert!(serde_json::from_str::<PayoffJson>(r#"{"kind": "call", "K": 1}"#).is_err());
    }

    #[test]
    fn run_defaults_and_methods() {
        let text = format!(r#"{{"model": {MODEL}, "payoff": {{"kind": "call", "K1": 100}}, "method": "mc-p"}}"#);
        let run: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(run.method, MethodJson::McP);
        assert_eq!(run.seed, 1);
        assert_eq!(run.grid_spec().s_ref, 100.0);
        assert!("ie".parse::<MethodJson>().is_ok());
        assert!("xx".parse::<MethodJson>().is_err());
    }
}
