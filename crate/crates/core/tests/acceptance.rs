//! Acceptance run: one pass/fail line per criterion with every tolerance
//! pinned below. Runs without the libtest harness so the lines are always
//! printed; exits non-zero when any criterion fails.

mod common;

use common::{benchmark, benchmark_rates, black_scholes_model, bs_call, clamp_jump, mean_se, single_regime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smjd_core::fd::solve_price_fd;
use smjd_core::market::{EtaFn, JumpSpec, MarketModel, Measure, Volatility};
use smjd_core::mc::{
    backtest_hedge, price_mc_p_weighted, price_mc_q, simulate_terminal, BacktestConfig, McStart,
};
use smjd_core::pricing::{
    compute_betas, evolution_apply, layer_from_fn, solve_price, Grid, GridSpec, PayoffSpec, PriceSurface,
};
use smjd_core::semi_markov::{RateFn, RateSpec, RegimeState};
use smjd_core::Result;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};
use std::time::Instant;

// criterion 1
const BS_STRIKES: [f64; 5] = [80.0, 90.0, 100.0, 110.0, 120.0];
const BS_REL_TOL: f64 = 0.005;
const BS_MAX_SECONDS: f64 = 30.0;
const BS_GRID: (usize, usize) = (100, 241);
// criterion 2
const LINEAR_REL_TOL: f64 = 1e-3;
const UNIT_ABS_TOL: f64 = 1e-6;
const LINEAR_GRID: (usize, usize) = (40, 321);
// criterion 3
const IDENTITY_TOL: f64 = 1e-12;
const REMARK_INTEGRAL_TOL: f64 = 1e-10;
const RANDOM_TIMES: usize = 10;
// criterion 4
const MEASURE_PATHS: usize = 100_000;
const MEASURE_SE: f64 = 3.0;
const MEASURE_MAX_SECONDS: f64 = 120.0;
// criterion 5
const XVAL_GRID: (usize, usize) = (80, 641);
const XVAL_REL_TOL: f64 = 0.01;
const XVAL_PATHS: usize = 200_000;
// criterion 6
const KS_SAMPLES: usize = 10_000;
/// Asymptotic Kolmogorov quantile at the 1% level.
const KS_CRIT_1PCT: f64 = 1.6276;
const CHI2_LEVEL: f64 = 0.99;
// criterion 7
const HEDGE_STEPS: usize = 250;
const HEDGE_PATHS: usize = 10_000;
const HEDGE_GRID_NS: usize = 401;
const HEDGE_SE: f64 = 3.0;
const HEDGE_STD_RATIO: f64 = 0.10;
// criterion 8
const CONSERVATIVITY_TOL: f64 = 1e-6;
const RICHARDSON_RANGE: (f64, f64) = (1.7, 4.3);
const RICHARDSON_BASE: (usize, usize) = (20, 161);
const XI_BOUND_FACTOR: f64 = 2.0;

const SEED: u64 = 20_240_601;

struct Line {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn atm(surface: &PriceSurface) -> f64 {
    surface.price(0.0, 100.0, 0, 0.0)
}

fn criterion_1() -> Result<Line> {
    let m = black_scholes_model();
    let mut worst: f64 = 0.0;
    let mut times = Vec::new();
    for (name, solver) in [
        ("ie", solve_price as fn(&_, &_, &_) -> _),
        ("fd", solve_price_fd as fn(&_, &_, &_) -> _),
    ] {
        let started = Instant::now();
        for k in BS_STRIKES {
            let s: PriceSurface = solver(&m, &PayoffSpec::Call { k1: k }, &GridSpec::new(BS_GRID.0, BS_GRID.1, 100.0))?;
            let exact = bs_call(100.0, k, 0.05, 0.2, 1.0).0;
            worst = worst.max((atm(&s) / exact - 1.0).abs());
        }
        times.push((name, started.elapsed().as_secs_f64()));
    }
    let slow = times.iter().map(|t| t.1).fold(0.0, f64::max);
    Ok(Line {
        id: 1,
        name: "Black-Scholes degeneration",
        passed: worst < BS_REL_TOL && slow < BS_MAX_SECONDS,
        detail: format!(
            "max rel error {worst:.2e} (tol {BS_REL_TOL}), runtime ie {:.2}s fd {:.2}s (limit {BS_MAX_SECONDS}s)",
            times[0].1, times[1].1
        ),
    })
}

fn criterion_2() -> Result<Line> {
    let m = benchmark();
    let spec = GridSpec::new(LINEAR_GRID.0, LINEAR_GRID.1, 100.0);
    let mut linear: f64 = 0.0;
    for s in [solve_price(&m, &PayoffSpec::Linear, &spec)?, solve_price_fd(&m, &PayoffSpec::Linear, &spec)?] {
        for l in s.price_layers() {
            for (q, v) in l.data.iter().enumerate() {
                linear = linear.max((v / s.grid.s[q % s.grid.n_s] - 1.0).abs());
            }
        }
    }
    let flat_r = MarketModel::new(
        benchmark_rates(),
        vec![0.04, 0.04],
        vec![0.08, 0.10],
        Volatility::Constant(vec![0.2, 0.3]),
        clamp_jump(),
        1.0,
    )?;
    let one = PayoffSpec::Constant { value: 1.0 };
    let unit_err = |s: &PriceSurface| {
        s.price_layers()
            .iter()
            .flat_map(|l| l.data.iter().map(move |v| (v - (-0.04 * (1.0 - l.t)).exp()).abs()))
            .fold(0.0, f64::max)
    };
    let unit_ie = unit_err(&solve_price(&flat_r, &one, &spec)?);
    let unit_fd = unit_err(&solve_price_fd(&flat_r, &one, &spec)?);
    Ok(Line {
        id: 2,
        name: "Linear-payoff exactness",
        passed: linear < LINEAR_REL_TOL && unit_ie < UNIT_ABS_TOL,
        detail: format!(
            "K=s max rel error {linear:.2e} over both solvers (tol {LINEAR_REL_TOL}); K=1 max error ie {unit_ie:.2e} (tol {UNIT_ABS_TOL}), fd {unit_fd:.2e} (first order in time, not gated)"
        ),
    })
}

fn criterion_3() -> Result<Line> {
    // time-dependent volatility so that the random times matter
    let m = MarketModel::new(
        benchmark_rates(),
        vec![0.05, 0.03],
        vec![0.08, 0.10],
        Volatility::Table {
            times: vec![0.0, 0.5, 1.0],
            values: vec![vec![0.2, 0.25, 0.18], vec![0.3, 0.22, 0.35]],
        },
        clamp_jump(),
        1.0,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut gamma_err: f64 = 0.0;
    let mut identity_err: f64 = 0.0;
    let mut cells = 0;
    for _ in 0..RANDOM_TIMES {
        let t: f64 = rand::Rng::random_range(&mut rng, 0.0..1.0);
        for i in 0..m.n_regimes() {
            let b = compute_betas(&m, t, i);
            let e = m.mmm_coefficients(t, i);
            let sum: f64 = b.beta2.iter().zip(m.jump().nodes()).map(|(b2, n)| b2 * n.eta * n.weight).sum();
            identity_err = identity_err.max((b.beta1 + sum).abs());
            for (g, b2) in e.gamma.iter().zip(&b.beta2) {
                gamma_err = gamma_err.max((g - b2).abs());
                cells += 1;
            }
        }
    }
    let ji = clamp_jump().integrals();
    let nodes = clamp_jump().nodes().len();
    let remark_err = (ji.eta_mean - 0.375).abs().max((ji.eta_sq - 0.375).abs());
    Ok(Line {
        id: 3,
        name: "Algebraic identities",
        passed: gamma_err < IDENTITY_TOL && identity_err < IDENTITY_TOL && remark_err < REMARK_INTEGRAL_TOL && nodes >= 200,
        detail: format!(
            "|Gamma - beta2| {gamma_err:.1e} over {cells} cells, |beta1 + int beta2 eta| {identity_err:.1e} (tol {IDENTITY_TOL}); jump integrals off 3/8 by {remark_err:.1e} at {nodes} nodes (tol {REMARK_INTEGRAL_TOL})"
        ),
    })
}

fn criterion_4() -> Result<Line> {
    let m = benchmark();
    let start = McStart::new(100.0, 0, 0.0);
    let started = Instant::now();
    let z = simulate_terminal(&m, Measure::Physical, start, MEASURE_PATHS, SEED, |e| e.log_rn.exp())?;
    let (z_mean, z_se) = mean_se(&z);
    let zs = simulate_terminal(&m, Measure::Physical, start, MEASURE_PATHS, SEED + 1, |e| {
        (e.log_rn - e.int_r).exp() * e.s
    })?;
    let (zs_mean, zs_se) = mean_se(&zs);
    let call = PayoffSpec::Call { k1: 100.0 };
    let q = price_mc_q(&m, &call, start, MEASURE_PATHS, SEED + 2)?;
    let p = price_mc_p_weighted(&m, &call, start, MEASURE_PATHS, SEED + 3)?;
    let combined = (q.std_error.powi(2) + p.std_error.powi(2)).sqrt();
    let secs = started.elapsed().as_secs_f64();
    let z_ok = (z_mean - 1.0).abs() < MEASURE_SE * z_se;
    let zs_ok = (zs_mean - 100.0).abs() < MEASURE_SE * zs_se;
    let qp_ok = (q.value - p.value).abs() < MEASURE_SE * combined;
    Ok(Line {
        id: 4,
        name: "Measure-change validity",
        passed: z_ok && zs_ok && qp_ok && secs < MEASURE_MAX_SECONDS,
        detail: format!(
            "E[Z_T] = {z_mean:.4} ({:.2} SE), E[Z_T S*_T] = {zs_mean:.3} ({:.2} SE), mc-q {:.4} vs mc-p {:.4} ({:.2} combined SE), {secs:.1}s (limit {MEASURE_MAX_SECONDS}s)",
            (z_mean - 1.0).abs() / z_se,
            (zs_mean - 100.0).abs() / zs_se,
            q.value,
            p.value,
            (q.value - p.value).abs() / combined
        ),
    })
}

fn criterion_5() -> Result<Line> {
    let m = benchmark();
    let call = PayoffSpec::Call { k1: 100.0 };
    let mut spec = GridSpec::new(XVAL_GRID.0, XVAL_GRID.1, 100.0);
    spec.keep_layers = false;
    let ie = atm(&solve_price(&m, &call, &spec)?);
    let fd = atm(&solve_price_fd(&m, &call, &spec)?);
    let start = McStart::new(100.0, 0, 0.0);
    let q = price_mc_q(&m, &call, start, XVAL_PATHS, SEED + 4)?;
    let p = price_mc_p_weighted(&m, &call, start, XVAL_PATHS, SEED + 5)?;
    let rel = (ie / fd - 1.0).abs();
    let inside = q.contains(ie) && q.contains(fd) && p.contains(ie) && p.contains(fd);
    Ok(Line {
        id: 5,
        name: "Cross-solver agreement",
        passed: rel < XVAL_REL_TOL && inside,
        detail: format!(
            "ie {ie:.4}, fd {fd:.4} (rel diff {rel:.2e}, tol {XVAL_REL_TOL}); mc-q 99% CI [{:.4}, {:.4}], mc-p 99% CI [{:.4}, {:.4}]",
            q.ci_low, q.ci_high, p.ci_low, p.ci_high
        ),
    })
}

fn ks_scaled(spec: &RateSpec, seed: u64, cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = (0..KS_SAMPLES)
        .map(|_| spec.sample_holding(0, 0.0, &mut rng))
        .collect::<Result<Vec<f64>>>()?;
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    Ok(d * n.sqrt())
}

fn criterion_6() -> Result<Line> {
    let constant = RateSpec::constant(2, &[(0, 1, 1.3), (1, 0, 0.4)])?;
    let ks_c = ks_scaled(&constant, SEED + 6, |h| 1.0 - (-1.3 * h).exp())?;
    let (scale, shape) = (0.8, 1.7);
    let weibull = RateSpec::new(2, vec![(0, 1, RateFn::Weibull { scale, shape }), (1, 0, RateFn::Constant { rate: 1.0 })])?;
    let ks_w = ks_scaled(&weibull, SEED + 7, |h| 1.0 - (-scale * h.powf(shape)).exp())?;

    let poisson_spec = RateSpec::constant(2, &[(0, 1, 2.0), (1, 0, 2.0)])?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 8);
    let bins = 8;
    let mut observed = vec![0.0; bins + 1];
    for _ in 0..KS_SAMPLES {
        let p = poisson_spec.simulate_regime_path(RegimeState { x: 0, y: 0.0 }, 1.0, &mut rng)?;
        observed[p.transitions.len().min(bins)] += 1.0;
    }
    let pois = Poisson::new(2.0).expect("valid rate");
    let n = KS_SAMPLES as f64;
    let mut expected: Vec<f64> = (0..bins).map(|k| n * pois.pmf(k as u64)).collect();
    expected.push(n - expected.iter().sum::<f64>());
    let chi2: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let crit = ChiSquared::new(bins as f64).expect("valid dof").inverse_cdf(CHI2_LEVEL);
    Ok(Line {
        id: 6,
        name: "Semi-Markov correctness",
        passed: ks_c < KS_CRIT_1PCT && ks_w < KS_CRIT_1PCT && chi2 < crit,
        detail: format!(
            "KS sqrt(n)D constant {ks_c:.3}, Weibull {ks_w:.3} (crit {KS_CRIT_1PCT}); Poisson chi2 {chi2:.2} (crit {crit:.2}, {bins} dof)"
        ),
    })
}

fn criterion_7() -> Result<Line> {
    let call = PayoffSpec::Call { k1: 100.0 };
    let start = McStart::new(100.0, 0, 0.0);
    let cfg = BacktestConfig {
        n_paths: HEDGE_PATHS,
        rebalance_steps: HEDGE_STEPS,
        seed: SEED + 9,
        start,
    };
    let spec = GridSpec::new(HEDGE_STEPS, HEDGE_GRID_NS, 100.0);
    let m = benchmark();
    let surface = solve_price(&m, &call, &spec)?;
    let rep = backtest_hedge(&m, &surface, &call, &cfg)?;
    let mean_ok = rep.mean_residual.abs() < HEDGE_SE * rep.residual_std_error;
    let corr_ok = rep.increment_correlation.abs() < HEDGE_SE * rep.correlation_std_error;
    let var_ok = rep.residual_variance < rep.unhedged_variance;

    let no_size = MarketModel::new(
        benchmark_rates(),
        vec![0.05, 0.03],
        vec![0.08, 0.10],
        Volatility::Constant(vec![0.2, 0.3]),
        JumpSpec::from_nodes(vec![(0.5, 1.5)], EtaFn::Zero)?,
        1.0,
    )?;
    let flat = solve_price(&no_size, &call, &spec)?;
    let rep0 = backtest_hedge(&no_size, &flat, &call, &cfg)?;
    let std_ratio = (rep0.residual_variance / rep0.unhedged_variance).sqrt();
    Ok(Line {
        id: 7,
        name: "Hedging quality",
        passed: mean_ok && corr_ok && var_ok && std_ratio < HEDGE_STD_RATIO,
        detail: format!(
            "mean L_T {:.4} ({:.2} SE), corr {:.4} ({:.2} SE), hedged var {:.2} < unhedged {:.2}; eta=0 std ratio {std_ratio:.4} (limit {HEDGE_STD_RATIO})",
            rep.mean_residual,
            rep.mean_residual.abs() / rep.residual_std_error,
            rep.increment_correlation,
            rep.increment_correlation.abs() / rep.correlation_std_error,
            rep.residual_variance,
            rep.unhedged_variance
        ),
    })
}

fn richardson(prices: [f64; 3]) -> f64 {
    (prices[0] - prices[1]) / (prices[1] - prices[2])
}

fn criterion_8() -> Result<Line> {
    let m = benchmark();
    // integral-equation route: one-step operator applied to the constant 1
    let grid = Grid::build(&m, &GridSpec::new(XVAL_GRID.0, XVAL_GRID.1, 100.0))?;
    let ones = layer_from_fn(&grid, grid.n_t, |_, _, _| 1.0);
    let ie_cons = evolution_apply(&m, &grid, ones, 8.0)?
        .iter()
        .flat_map(|l| l.data.iter().map(|v| (v - 1.0).abs()))
        .fold(0.0, f64::max);
    // finite differences: constant payoff without discounting
    let undiscounted = MarketModel::new(
        benchmark_rates(),
        vec![0.0, 0.0],
        vec![0.03, 0.05],
        Volatility::Constant(vec![0.2, 0.3]),
        clamp_jump(),
        1.0,
    )?;
    let fd_cons = solve_price_fd(&undiscounted, &PayoffSpec::Constant { value: 1.0 }, &GridSpec::new(XVAL_GRID.0, XVAL_GRID.1, 100.0))?
        .price_layers()
        .iter()
        .flat_map(|l| l.data.iter().map(|v| (v - 1.0).abs()))
        .fold(0.0, f64::max);

    let call = PayoffSpec::Call { k1: 100.0 };
    let mut specs = [GridSpec::new(RICHARDSON_BASE.0, RICHARDSON_BASE.1, 100.0), GridSpec::new(1, 5, 100.0), GridSpec::new(1, 5, 100.0)];
    specs[0].keep_layers = false;
    specs[1] = specs[0].refined();
    specs[2] = specs[1].refined();
    let mut ie = [0.0; 3];
    let mut fd = [0.0; 3];
    for (k, spec) in specs.iter().enumerate() {
        ie[k] = atm(&solve_price(&m, &call, spec)?);
        fd[k] = atm(&solve_price_fd(&m, &call, spec)?);
    }
    let (r_ie, r_fd) = (richardson(ie), richardson(fd));
    let in_range = |r: f64| RICHARDSON_RANGE.0 <= r && r <= RICHARDSON_RANGE.1;

    let surface = solve_price(&m, &call, &GridSpec::new(40, 321, 100.0))?;
    let g = &surface.grid;
    let mut slope: f64 = 0.0;
    let mut xi: f64 = 0.0;
    for (pl, xl) in surface.price_layers().iter().zip(surface.xi_layers()) {
        for i in 0..g.n_regimes {
            for mrow in 0..pl.rows {
                let row = pl.row(i, mrow);
                for k in 1..g.n_s {
                    slope = slope.max(((row[k] - row[k - 1]) / (g.s[k] - g.s[k - 1])).abs());
                }
                xi = xl.row(i, mrow).iter().fold(xi, |a, v| a.max(v.abs()));
            }
        }
    }
    Ok(Line {
        id: 8,
        name: "Numerical hygiene",
        passed: ie_cons < CONSERVATIVITY_TOL
            && fd_cons < CONSERVATIVITY_TOL
            && in_range(r_ie)
            && in_range(r_fd)
            && xi < XI_BOUND_FACTOR * slope,
        detail: format!(
            "conservativity ie {ie_cons:.1e}, fd {fd_cons:.1e} (tol {CONSERVATIVITY_TOL}); Richardson ie {r_ie:.2}, fd {r_fd:.2} (range [{}, {}]); sup|xi| {xi:.4} < {XI_BOUND_FACTOR} * {slope:.4}",
            RICHARDSON_RANGE.0, RICHARDSON_RANGE.1
        ),
    })
}

fn criterion_9() -> Result<Line> {
    let times: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let pass = single_regime(0.05, 0.08, 0.2, clamp_jump()).check_no_arbitrage(&times);
    let fail = single_regime(0.05, 0.15, 0.2, clamp_jump()).check_no_arbitrage(&times);
    let witness = fail.worst_z;
    Ok(Line {
        id: 9,
        name: "A2 checker",
        passed: pass.passed && !fail.passed && witness == Some(1.0),
        detail: format!(
            "mu=0.08 worst J*eta {:.4} ({}), mu=0.15 worst J*eta {:.4} ({}) at z = {:?}",
            pass.worst_value,
            if pass.passed { "pass" } else { "fail" },
            fail.worst_value,
            if fail.passed { "pass" } else { "fail" },
            witness
        ),
    })
}

fn main() {
    let criteria: [fn() -> Result<Line>; 9] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
    ];
    let mut failed = 0;
    for (k, run) in criteria.iter().enumerate() {
        let started = Instant::now();
        let line = run().unwrap_or_else(|e| Line {
            id: k + 1,
            name: "error",
            passed: false,
            detail: e.to_string(),
        });
        if !line.passed {
            failed += 1;
        }
        println!(
            "criterion {} [{}] {}: {} ({:.1}s)",
            line.id,
            if line.passed { "PASS" } else { "FAIL" },
            line.name,
            line.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
