//! One function per subcommand. Each writes its artifacts into the output
//! directory and prints a short human-readable summary.

use crate::artifacts::Manifest;
use crate::Outcome;
use serde::Serialize;
use serde_json::json;
use smjd_core::config::{LoadedConfig, MeasureJson, MethodJson};
use smjd_core::fd::solve_price_fd;
use smjd_core::market::{MarketModel, Measure, PathSimulator};
use smjd_core::mc::{
    backtest_hedge, path_rng, price_mc_p_weighted, price_mc_q, BacktestConfig, McEstimate, McStart,
};
use smjd_core::pricing::{compute_betas, solve_price, GridSpec, Method, PayoffSpec, PriceSurface};
use smjd_core::{Error, Result};
use std::io::Write;
use std::path::Path;

pub struct Context<'a> {
    pub loaded: &'a LoadedConfig,
    pub out: &'a Path,
    pub seed: u64,
    pub method: MethodJson,
}

impl Context<'_> {
    fn model(&self) -> Result<MarketModel> {
        self.loaded.model_json.build()
    }

    fn payoff(&self) -> Result<PayoffSpec> {
        self.loaded.run.payoff.build()
    }
}

pub fn check(ctx: &Context, manifest: &mut Manifest) -> Result<Outcome> {
    let model = ctx.model()?;
    let run = &ctx.loaded.run;
    let a1 = model.rates().validate_rates(run.check.y_max)?;
    let n = run.check.a2_points.max(2);
    let mut times = model.extremal_times();
    times.extend((0..n).map(|k| model.horizon() * k as f64 / (n - 1) as f64));
    let a2 = model.check_no_arbitrage(&times);

    let checks: Vec<_> = a1
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "passed": c.passed,
                "detail": c.detail,
                "witness": c.witness.map(|w| json!({
                    "from": w.from + 1,
                    "to": w.to.map(|j| j + 1),
                    "age": w.age,
                })),
            })
        })
        .collect();
    let report = json!({
        "a1": { "passed": a1.passed(), "y_max": a1.y_max, "checks": checks },
        "a2": {
            "passed": a2.passed,
            "worst_value": a2.worst_value,
            "worst_t": a2.worst_t,
            "worst_regime": a2.worst_regime + 1,
            "worst_z": a2.worst_z,
        },
    });
    manifest.json(ctx.out, "check.json", &report)?;

    println!("A1: {}", pass_fail(a1.passed()));
    for c in &a1.checks {
        println!("  {}: {} ({})", c.name, pass_fail(c.passed), c.detail);
    }
    let z = a2.worst_z.map_or("none".to_string(), |z| z.to_string());
    println!(
        "A2: {} (min J*eta = {} at t = {}, regime {}, z = {z})",
        pass_fail(a2.passed),
        a2.worst_value,
        a2.worst_t,
        a2.worst_regime + 1
    );
    Ok(if a1.passed() && a2.passed {
        Outcome::Success
    } else {
        Outcome::Rejected
    })
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

pub fn integrals(ctx: &Context, manifest: &mut Manifest) -> Result<Outcome> {
    let model = ctx.model()?;
    let ji = model.jump_integrals();
    let nodes = model.jump().nodes();
    let s0 = ctx.loaded.run.start.s0;
    let mut regimes = Vec::new();
    println!("jump: {} nodes, mass {}, int eta {}, int eta^2 {}", nodes.len(), ji.mass, ji.eta_mean, ji.eta_sq);
    for i in 0..model.n_regimes() {
        let b = compute_betas(&model, 0.0, i);
        let e = model.mmm_coefficients(0.0, i);
        let mv = model.mv_tradeoff(0.0, i, s0)?;
        let identity: f64 = b.beta1
            + b.beta2
                .iter()
                .zip(nodes)
                .map(|(b2, n)| b2 * n.eta * n.weight)
                .sum::<f64>();
        let (b2_min, b2_max) = min_max(&b.beta2);
        let (g_min, g_max) = min_max(&e.gamma);
        println!("regime {}: beta1 {}, J {}, identity residual {identity:e}", i + 1, b.beta1, e.ratio);
        regimes.push(json!({
            "regime": i + 1,
            "beta1": b.beta1,
            "beta2_min": b2_min,
            "beta2_max": b2_max,
            "mmm_ratio": e.ratio,
            "girsanov": e.girsanov,
            "gamma_min": g_min,
            "gamma_max": g_max,
            "beta_identity_residual": identity,
            "delta_c_at_s0": mv.delta_c,
            "khat_rate": mv.khat_rate,
        }));
    }
    let report = json!({
        "jump": { "nodes": nodes.len(), "integrals": ji },
        "t": 0.0,
        "regimes": regimes,
    });
    manifest.json(ctx.out, "integrals.json", &report)?;
    Ok(Outcome::Success)
}

fn min_max(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (Some(lo), Some(hi))
}

pub fn simulate(ctx: &Context, manifest: &mut Manifest) -> Result<Outcome> {
    let model = ctx.model()?;
    let run = &ctx.loaded.run;
    let start = run.start(&model)?;
    let measure = match run.simulate.measure {
        MeasureJson::Physical => Measure::Physical,
        MeasureJson::Mmm => Measure::MinimalMartingale,
    };
    let sim = PathSimulator::new(&model, measure)?;
    let step = run.simulate.record_step;
    let n_rec = ((model.horizon() - start.t0) / step).ceil() as usize;
    let times: Vec<f64> = (1..n_rec).map(|k| start.t0 + k as f64 * step).collect();
    let width = run.simulate.n_paths.to_string().len().max(4);
    for idx in 0..run.simulate.n_paths {
        let mut rng = path_rng(ctx.seed, idx as u64);
        let rec = sim.record(start.t0, start.s0, start.state, &times, &mut rng)?;
        let name = format!("paths/path_{:0width$}.csv", idx + 1);
        manifest.file(ctx.out, &name, |w| {
            writeln!(w, "t,S,X,Y,event,z")?;
            let mut b = ryu::Buffer::new();
            for p in &rec.points {
                write!(w, "{},", b.format(p.t))?;
                write!(w, "{},{},", b.format(p.s), p.x + 1)?;
                write!(w, "{},{},", b.format(p.y), p.event.as_str())?;
                match p.z {
                    Some(z) => writeln!(w, "{}", b.format(z))?,
                    None => writeln!(w)?,
                }
            }
            Ok(())
        })?;
    }
    println!(
        "simulated {} path(s) under the {} measure into {}",
        run.simulate.n_paths,
        match measure {
            Measure::Physical => "physical",
            Measure::MinimalMartingale => "minimal martingale",
        },
        ctx.out.join("paths").display()
    );
    Ok(Outcome::Success)
}

fn solve(model: &MarketModel, payoff: &PayoffSpec, method: Method, spec: &GridSpec) -> Result<PriceSurface> {
    match method {
        Method::Ie => solve_price(model, payoff, spec),
        Method::Fd => solve_price_fd(model, payoff, spec),
    }
}

#[derive(Debug, Serialize)]
struct SurfaceSummary {
    method: &'static str,
    s0: f64,
    regime: usize,
    age: f64,
    price: f64,
    xi: f64,
    n_t: usize,
    n_s: usize,
    dt: f64,
    h: f64,
    s_min: f64,
    s_max: f64,
}

fn surface_summary(surface: &PriceSurface, start: &McStart) -> Result<SurfaceSummary> {
    let g = &surface.grid;
    if !surface.in_support(start.s0) {
        return Err(Error::OutOfGrid(format!(
            "starting price {} outside [{}, {}]",
            start.s0,
            g.s_min(),
            g.s_max()
        )));
    }
    let (x, y) = (start.state.x, start.state.y);
    Ok(SurfaceSummary {
        method: surface.method.as_str(),
        s0: start.s0,
        regime: x + 1,
        age: y,
        price: surface.price(start.t0, start.s0, x, y),
        xi: surface.xi(start.t0, start.s0, x, y),
        n_t: g.n_t,
        n_s: g.n_s,
        dt: g.dt,
        h: g.h,
        s_min: g.s_min(),
        s_max: g.s_max(),
    })
}

fn run_mc(ctx: &Context, model: &MarketModel, payoff: &PayoffSpec, start: McStart, q: bool, seed: u64) -> Result<McEstimate> {
    let mc = &ctx.loaded.run.mc;
    let e = if q {
        price_mc_q(model, payoff, start, mc.n_paths, seed)?
    } else {
        price_mc_p_weighted(model, payoff, start, mc.n_paths, seed)?
    };
    Ok(e.at_level(mc.ci_level))
}

pub fn price(ctx: &Context, manifest: &mut Manifest) -> Result<Outcome> {
    let model = ctx.model()?;
    let payoff = ctx.payoff()?;
    let run = &ctx.loaded.run;
    let start = run.start(&model)?;
    match ctx.method.solver() {
        Some(method) => {
            let surface = solve(&model, &payoff, method, &run.grid_spec())?;
            let summary = surface_summary(&surface, &start)?;
            manifest.file(ctx.out, "surface.csv", |w| {
                surface.write_csv(w, run.export.t_stride, run.export.y_stride)
            })?;
            manifest.json(ctx.out, "summary.json", &summary)?;
            println!(
                "{}: price {} hedge ratio {} at s0 = {}, regime {}, age {}",
                summary.method, summary.price, summary.xi, summary.s0, summary.regime, summary.age
            );
        }
        None => {
            let e = run_mc(ctx, &model, &payoff, start, ctx.method == MethodJson::McQ, ctx.seed)?;
            let summary = json!({
                "method": ctx.method.as_str(),
                "s0": start.s0,
                "regime": start.state.x + 1,
                "age": start.state.y,
                "estimate": e,
            });
            manifest.json(ctx.out, "summary.json", &summary)?;
            println!(
                "{}: price {} +- {} ({}% CI [{}, {}], {} paths)",
                ctx.method.as_str(),
                e.value,
                e.std_error,
                100.0 * e.level,
                e.ci_low,
                e.ci_high,
                e.n_paths
            );
        }
    }
    Ok(Outcome::Success)
}

pub fn hedge_backtest(ctx: &Context, manifest: &mut Manifest) -> Result<Outcome> {
    let model = ctx.model()?;
    let payoff = ctx.payoff()?;
    let run = &ctx.loaded.run;
    let start = run.start(&model)?;
    let bt = &run.backtest;
    let method = bt.method.solver().expect("checked when loading");
    let mut spec = run.grid_spec();
    spec.n_t = bt.n_t.unwrap_or(bt.rebalance_steps);
    spec.n_s = bt.n_s.unwrap_or(spec.n_s);
    spec.keep_layers = true;
    let surface = solve(&model, &payoff, method, &spec)?;
    let cfg = BacktestConfig {
        n_paths: bt.n_paths,
        rebalance_steps: bt.rebalance_steps,
        seed: ctx.seed,
        start,
    };
    let report = backtest_hedge(&model, &surface, &payoff, &cfg)?;
    let out = json!({
        "report": report,
        "surface_method": method.as_str(),
        "seed": ctx.seed,
        "config": run,
        "model": ctx.loaded.model_json,
    });
    manifest.json(ctx.out, "backtest.json", &out)?;
    println!(
        "mean residual {} (se {}), hedged variance {} vs unhedged {}, increment correlation {} (se {})",
        report.mean_residual,
        report.residual_std_error,
        report.residual_variance,
        report.unhedged_variance,
        report.increment_correlation,
        report.correlation_std_error
    );
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct Agreement {
    pair: String,
    lhs: f64,
    rhs: f64,
    difference: f64,
    tolerance: f64,
    passed: bool,
}

impl Agreement {
    fn new(pair: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let difference = (lhs - rhs).abs();
        Self {
            pair: pair.to_string(),
            lhs,
            rhs,
            difference,
            tolerance,
            passed: difference <= tolerance,
        }
    }

    /// `value` inside the confidence interval of `e`.
    fn in_interval(pair: &str, value: f64, e: &McEstimate) -> Self {
        let half = 0.5 * (e.ci_high - e.ci_low);
        Self::new(pair, value, e.value, half)
    }
}

pub fn xval(ctx: &Context, manifest: &mut Manifest) -> Result<Outcome> {
    let model = ctx.model()?;
    let payoff = ctx.payoff()?;
    let run = &ctx.loaded.run;
    let start = run.start(&model)?;
    let mut spec = run.grid_spec();
    spec.keep_layers = false;
    let ie = surface_summary(&solve(&model, &payoff, Method::Ie, &spec)?, &start)?;
    let fd = surface_summary(&solve(&model, &payoff, Method::Fd, &spec)?, &start)?;
    // independent streams for the two estimators
    let mc_q = run_mc(ctx, &model, &payoff, start, true, ctx.seed)?;
    let mc_p = run_mc(ctx, &model, &payoff, start, false, ctx.seed.wrapping_add(1))?;

    let x = &run.xval;
    let combined = (mc_q.std_error.powi(2) + mc_p.std_error.powi(2)).sqrt();
    let rows = vec![
        Agreement::new("ie-fd", ie.price, fd.price, x.ie_fd_rel_tol * ie.price.abs()),
        Agreement::in_interval("ie-mc-q", ie.price, &mc_q),
        Agreement::in_interval("ie-mc-p", ie.price, &mc_p),
        Agreement::in_interval("fd-mc-q", fd.price, &mc_q),
        Agreement::in_interval("fd-mc-p", fd.price, &mc_p),
        Agreement::new("mc-q-mc-p", mc_q.value, mc_p.value, x.mc_combined_se * combined),
    ];
    let all = rows.iter().all(|r| r.passed);
    let report = json!({
        "ie": ie,
        "fd": fd,
        "mc_q": mc_q,
        "mc_p": mc_p,
        "agreement": rows,
        "passed": all,
    });
    manifest.json(ctx.out, "xval.json", &report)?;

    println!("{:<10} {:>14} {:>14} {:>12} {:>12}  result", "pair", "lhs", "rhs", "|diff|", "tolerance");
    for r in &rows {
        println!(
            "{:<10} {:>14.6} {:>14.6} {:>12.6} {:>12.6}  {}",
            r.pair,
            r.lhs,
            r.rhs,
            r.difference,
            r.tolerance,
            pass_fail(r.passed)
        );
    }
    Ok(if all { Outcome::Success } else { Outcome::Disagreement })
}
