//! Acceptance suite: one PASS/FAIL line per criterion; non-zero exit if any
//! criterion fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use multiscale::backtest::{run_backtest, BacktestConfig, Strategy};
use multiscale::covariance::{multiscale_cov, MultiscaleCovariance, ScaledCovarianceSet};
use multiscale::optimizer::{
    min_variance_closed_form, min_variance_long_only, min_variance_with_return_floor, sensitivity_to_hurst,
    sensitivity_to_variance, synthetic_block, synthetic_block_weight,
};
use multiscale::repro::{run_repro, DEFAULT_SEED};
use multiscale::scaling::{
    default_mfdfa_scales, estimate_correlation_scaling, estimate_hurst, mfdfa, DEFAULT_Q_GRID, DEFAULT_SCALES,
};
use multiscale::synth::{asset_names, gen_correlated, gen_epps, gen_fgn, gen_gaussian_iid, gen_multifractal};
use multiscale::timeseries::ReturnPanel;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn ms(m: DMatrix<f64>) -> MultiscaleCovariance {
    MultiscaleCovariance::from_matrix(asset_names(m.nrows()), m)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_pd(n: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let a = DMatrix::from_fn(n, n, |_, _| r.sample::<f64, _>(StandardNormal));
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1
}

/// Positive definite with weak correlations, so every closed-form weight is
/// positive.
fn diagonal_dominant(n: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let vols: Vec<f64> = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
    let mut corr = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let c = r.random_range(-0.1..0.1);
            corr[(i, j)] = c;
            corr[(j, i)] = c;
        }
    }
    DMatrix::from_fn(n, n, |i, j| corr[(i, j)] * vols[i] * vols[j])
}

fn quad(m: &DMatrix<f64>, w: &[f64]) -> f64 {
    let v = DVector::from_column_slice(w);
    v.dot(&(m * &v))
}

fn simplex_grid(step: f64) -> impl Iterator<Item = [f64; 3]> {
    let k = (1.0 / step).round() as usize;
    (0..=k).flat_map(move |a| {
        (0..=k - a).map(move |b| [a as f64 / k as f64, b as f64 / k as f64, (k - a - b) as f64 / k as f64])
    })
}

/// Points of the 2-simplex on the line μ·w = target: a grid at the given step
/// in the coordinate with the smaller coefficient, plus the line's exact
/// crossings of the three edges.
fn floor_segment(mu: &[f64], target: f64, step: f64) -> Vec<[f64; 3]> {
    // w = (x, y, 1 − x − y):  (μ1 − μ3)x + (μ2 − μ3)y = target − μ3.
    let (a, b, c) = (mu[0] - mu[2], mu[1] - mu[2], target - mu[2]);
    let k = (1.0 / step).round() as usize;
    let mut pts = Vec::new();
    for i in 0..=k {
        let t = i as f64 / k as f64;
        let (x, y) = if b.abs() >= a.abs() {
            (t, (c - a * t) / b)
        } else {
            ((c - b * t) / a, t)
        };
        if x >= 0.0 && y >= 0.0 && x + y <= 1.0 {
            pts.push([x, y, 1.0 - x - y]);
        }
    }
    // Edges x = 0, y = 0 and x + y = 1.
    let crossings = [
        (b != 0.0).then(|| (0.0, c / b)),
        (a != 0.0).then(|| (c / a, 0.0)),
        (a != b).then(|| ((c - b) / (a - b), 1.0 - (c - b) / (a - b))),
    ];
    for (x, y) in crossings.into_iter().flatten() {
        let (x, y) = (x.max(0.0), y.max(0.0));
        if x + y <= 1.0 + 1e-12 {
            pts.push([x, y, (1.0 - x - y).max(0.0)]);
        }
    }
    pts
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    o.detail = format!("{}; {:.2}s", o.detail, elapsed.as_secs_f64());
    if let Some(limit) = limit {
        if elapsed > limit {
            o.pass = false;
            o.detail = format!("{} (limit {}s exceeded)", o.detail, limit.as_secs());
        }
    }
    o
}

fn closed_form_correctness() -> Outcome {
    let mut worst_stationarity = 0.0f64;
    let mut worst_budget = 0.0f64;
    for seed in 0..100 {
        let m = random_pd(5, 1000 + seed);
        let w = min_variance_closed_form(&ms(m.clone())).unwrap();
        let v = DVector::from_column_slice(&w.weights);
        let s_total = m
            .clone()
            .cholesky()
            .unwrap()
            .solve(&DVector::from_element(5, 1.0))
            .sum();
        let lambda = 2.0 / s_total;
        let residual = (&m * &v * 2.0).map(|x| x - lambda).amax();
        worst_stationarity = worst_stationarity.max(residual);
        worst_budget = worst_budget.max((w.sum() - 1.0).abs());
    }
    outcome(
        worst_stationarity < 1e-8 && worst_budget < 1e-10,
        format!("max |2Σw − λ1| = {worst_stationarity:.2e}, max |Σw − 1| = {worst_budget:.2e}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut below_grid = 0.0f64;
    for seed in 0..20 {
        let m = random_pd(3, 2000 + seed);
        let mut r = rng(3000 + seed);
        let mu: Vec<f64> = (0..3).map(|_| r.random_range(-0.01..0.03)).collect();

        let lo = min_variance_long_only(&ms(m.clone())).unwrap();
        let best = simplex_grid(1e-3).map(|p| quad(&m, &p)).fold(f64::INFINITY, f64::min);
        let got = quad(&m, &lo.weights);
        worst = worst.max((got - best).abs());
        below_grid = below_grid.max(got - best);

        let base_ret: f64 = lo.weights.iter().zip(&mu).map(|(a, b)| a * b).sum();
        let max = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let target = base_ret + 0.5 * (max - base_ret);
        let fl = min_variance_with_return_floor(&ms(m.clone()), &mu, target).unwrap();
        // A binding floor puts the optimum on the constraint line, which the
        // plain grid only approaches to first order; add the line's own grid.
        let best = simplex_grid(1e-3)
            .filter(|p| p.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() >= target)
            .chain(floor_segment(&mu, target, 1e-3))
            .map(|p| quad(&m, &p))
            .fold(f64::INFINITY, f64::min);
        let got = quad(&m, &fl.weights);
        let achieved: f64 = fl.weights.iter().zip(&mu).map(|(a, b)| a * b).sum();
        if achieved < target - 1e-12 {
            return outcome(false, format!("seed {seed}: floor violated ({achieved} < {target})"));
        }
        worst = worst.max((got - best).abs());
        below_grid = below_grid.max(got - best);
    }
    outcome(
        worst < 1e-5 && below_grid <= 1e-12,
        format!("max objective gap to grid = {worst:.2e}"),
    )
}

fn power_law_set(base: &DMatrix<f64>, hurst: &[f64], scales: &[usize]) -> ScaledCovarianceSet {
    let n = base.nrows();
    let mats = scales
        .iter()
        .map(|&dt| {
            let t = dt as f64;
            (
                dt,
                DMatrix::from_fn(n, n, |i, j| base[(i, j)] * t.powf(hurst[i] + hurst[j])),
            )
        })
        .collect();
    ScaledCovarianceSet::from_matrices(asset_names(n), mats).unwrap()
}

fn closed_weight(m: &DMatrix<f64>, k: usize) -> f64 {
    min_variance_closed_form(&ms(m.clone())).unwrap().weights[k]
}

fn sensitivity_formulas() -> Outcome {
    let mut worst_rel = 0.0f64;
    let mut worst_rel_h = 0.0f64;
    let mut all_negative = true;
    let mut all_negative_h = true;
    for seed in 0..20 {
        let m = diagonal_dominant(5, 4000 + seed);
        let mut r = rng(5000 + seed);
        let hurst: Vec<f64> = (0..5).map(|_| r.random_range(0.3..0.7)).collect();
        let set = power_law_set(&m, &hurst, &[1, 21]);
        for k in 0..5 {
            let rep = sensitivity_to_variance(&m, k).unwrap();
            let h = 1e-6;
            let mut up = m.clone();
            up[(k, k)] += h;
            let mut down = m.clone();
            down[(k, k)] -= h;
            let fd = (closed_weight(&up, k) - closed_weight(&down, k)) / (2.0 * h);
            worst_rel = worst_rel.max((rep.dwk_dsigma2 - fd).abs() / fd.abs());
            all_negative &= rep.dwk_dsigma2 < 0.0;

            let dh = sensitivity_to_hurst(&set, k, 21).unwrap().value;
            let eps = 1e-5;
            let bump = |d: f64| {
                let mut x = set.get(21).unwrap().clone();
                x[(k, k)] *= 21f64.powf(2.0 * d);
                closed_weight(&x, k)
            };
            let fd_h = (bump(eps) - bump(-eps)) / (2.0 * eps);
            worst_rel_h = worst_rel_h.max((dh - fd_h).abs() / fd_h.abs());
            all_negative_h &= dh < 0.0;
        }
    }
    outcome(
        worst_rel < 1e-4 && all_negative && all_negative_h,
        format!(
            "max rel err dw/dσ² = {worst_rel:.2e} (all negative: {all_negative}); dw/dH at Δt=21 all negative: {all_negative_h} (max rel err {worst_rel_h:.2e})"
        ),
    )
}

fn correlation_sensitivity() -> Outcome {
    let mut full_ok = 0;
    let mut block_ok = 0;
    for seed in 0..20 {
        let mut m = diagonal_dominant(3, 6000 + seed);
        m[(0, 1)] = 0.0;
        m[(1, 0)] = 0.0;
        let pair = |x: &DMatrix<f64>| {
            let w = min_variance_closed_form(&ms(x.clone())).unwrap().weights;
            w[0] + w[1]
        };
        let before = pair(&m);
        let mut raised = m.clone();
        let c = 0.5 * (m[(0, 0)] * m[(1, 1)]).sqrt();
        raised[(0, 1)] = c;
        raised[(1, 0)] = c;
        if pair(&raised) < before {
            full_ok += 1;
        }
        let b = synthetic_block(&m, 0, 1).unwrap();
        let w_hi = synthetic_block_weight(&m, 0, 1, b.theta, 0.5).unwrap();
        if w_hi < b.weight && b.dweight_drho < 0.0 {
            block_ok += 1;
        }
    }
    // The claim concerns the merged block with a frozen split; the raw
    // full-problem sum is reported for reference only.
    outcome(
        block_ok == 20,
        format!(
            "block weight decreased on {block_ok}/20; raw full-problem w1+w2 decreased on {full_ok}/20 (not gated)"
        ),
    )
}

fn hurst_recovery() -> Outcome {
    let n = 1 << 14;
    let scales = default_mfdfa_scales(n);
    let mut lines = Vec::new();
    let mut pass = true;
    for h in [0.3, 0.5, 0.7] {
        let (mut sf, mut df) = (0.0, 0.0);
        for seed in 0..20 {
            let p = gen_fgn(n, h, 0.01, 7000 + seed).unwrap();
            sf += estimate_hurst(&p, "A1", &DEFAULT_SCALES).unwrap().hurst;
            df += mfdfa(&p.column(0), &[2.0], &scales, 1).unwrap().h_of_q[0];
        }
        let (sf, df) = (sf / 20.0, df / 20.0);
        pass &= (sf - h).abs() <= 0.05 && (df - h).abs() <= 0.05;
        lines.push(format!("H={h}: SF {sf:.3}, MF-DFA {df:.3}"));
    }
    outcome(pass, lines.join("; "))
}

fn multifractality_detection() -> Outcome {
    let n = 1 << 14;
    let scales = default_mfdfa_scales(n);
    let mut min_cascade = f64::INFINITY;
    let mut max_iid = 0.0f64;
    for seed in 0..10 {
        let c = gen_multifractal(n, 0.2, 0.5, 0.01, 8000 + seed).unwrap();
        let s = mfdfa(&c.column(0), &DEFAULT_Q_GRID, &scales, 1).unwrap();
        min_cascade = min_cascade.min(s.h(-4.0).unwrap() - s.h(4.0).unwrap());
        let i = gen_gaussian_iid(n, 0.01, 9000 + seed).unwrap();
        let s = mfdfa(&i.column(0), &DEFAULT_Q_GRID, &scales, 1).unwrap();
        max_iid = max_iid.max(s.spread());
    }
    outcome(
        min_cascade > 0.1 && max_iid < 0.1,
        format!("cascade min h(-4)-h(4) = {min_cascade:.3}; iid max spread = {max_iid:.3} (10 seeds each)"),
    )
}

fn epps_exponent() -> Outcome {
    let n = 1 << 14;
    let mut mean = 0.0;
    let mut identity_ok = 0;
    let mut worst_ratio = 0.0f64;
    for seed in 0..20 {
        let p = gen_epps(n, 0.7, 0.3, 0.01, 10_000 + seed).unwrap();
        let c = estimate_correlation_scaling(&p, "A1", "A2", &DEFAULT_SCALES).unwrap();
        mean += c.h_rho.exponent / 20.0;
        if c.identity_holds(2.0) {
            identity_ok += 1;
        }
        worst_ratio = worst_ratio.max(c.identity_residual.abs() / c.combined_stderr);
    }
    outcome(
        (mean - 0.3).abs() <= 0.1 && identity_ok == 20,
        format!("mean H_rho = {mean:.3}; identity within 2 stderr on {identity_ok}/20 (worst {worst_ratio:.2})"),
    )
}

fn elliptical_equivalence() -> Outcome {
    let mut worst_exact = 0.0f64;
    for seed in 0..20 {
        let m = random_pd(5, 11_000 + seed);
        let set = power_law_set(&m, &[0.5; 5], &DEFAULT_SCALES);
        let multi = min_variance_long_only(&multiscale_cov(&set, 0.0).unwrap()).unwrap();
        let daily = min_variance_long_only(&ms(m)).unwrap();
        for (a, b) in multi.weights.iter().zip(&daily.weights) {
            worst_exact = worst_exact.max((a - b).abs());
        }
    }

    // Backtest level: iid Gaussian (Brownian) panels, daily vs multiscale.
    let vols = [0.010, 0.015, 0.020];
    let rho = 0.3;
    let sigma = DMatrix::from_fn(3, 3, |i, j| {
        if i == j {
            vols[i] * vols[i]
        } else {
            rho * vols[i] * vols[j]
        }
    });
    let base = BacktestConfig::default();
    let rebalances = 20;
    let len = base.lookback + rebalances * base.rebalance_every;
    let mut mean_diff = vec![0.0; rebalances];
    let mut mean_daily = vec![[0.0; 3]; rebalances];
    let mut mean_multi = vec![[0.0; 3]; rebalances];
    for seed in 0..20 {
        let p = gen_correlated(len, &sigma, 12_000 + seed).unwrap();
        let daily = run_backtest(&p, &BacktestConfig::with_strategy(Strategy::MarkowitzDaily)).unwrap();
        let multi = run_backtest(&p, &BacktestConfig::with_strategy(Strategy::MarkowitzMultiscale)).unwrap();
        for (k, (a, b)) in daily.rebalances.iter().zip(&multi.rebalances).enumerate() {
            let linf = a
                .weights
                .iter()
                .zip(&b.weights)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            mean_diff[k] += linf / 20.0;
            for i in 0..3 {
                mean_daily[k][i] += a.weights[i] / 20.0;
                mean_multi[k][i] += b.weights[i] / 20.0;
            }
        }
    }
    let worst_backtest = mean_diff.iter().copied().fold(0.0, f64::max);
    let overall = mean_diff.iter().sum::<f64>() / rebalances as f64;
    let of_means = (0..rebalances)
        .map(|k| {
            (0..3)
                .map(|i| (mean_daily[k][i] - mean_multi[k][i]).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    outcome(
        worst_exact < 1e-8 && worst_backtest < 0.05,
        format!(
            "truth matrices max |Δw| = {worst_exact:.2e}; backtest 20-seed mean L∞ per rebalance: max {worst_backtest:.3} \
             (average {overall:.3}, tolerance 0.05); L∞ of seed-averaged weights: max {of_means:.3}"
        ),
    )
}

fn repro_pipeline() -> Outcome {
    let (_, a) = run_repro(DEFAULT_SEED).unwrap();
    let (_, b) = run_repro(DEFAULT_SEED).unwrap();
    let deterministic = a == b;
    let rows = a.comparison.rows.len();
    let dd = match a.multiscale_drawdown_not_worse {
        Some(true) => "multiscale max drawdown <= traditional",
        Some(false) => "multiscale max drawdown deeper than traditional",
        None => "drawdown comparison unavailable",
    };
    outcome(
        rows == 4 && a.all_metrics_finite && deterministic,
        format!(
            "{rows} rows, finite {}, deterministic {deterministic}; {dd}",
            a.all_metrics_finite
        ),
    )
}

fn mutate_after(panel: &ReturnPanel, row: usize, seed: u64) -> ReturnPanel {
    let mut p = panel.clone();
    let mut r = rng(seed);
    for t in row..p.len() {
        for a in 0..p.n_assets() {
            p.returns[(t, a)] = r.random_range(-0.2..0.2);
        }
    }
    p
}

fn no_look_ahead() -> Outcome {
    let (panel, _) = run_repro(DEFAULT_SEED).unwrap();
    let base = BacktestConfig::default();
    let mut cfgs = BacktestConfig::standard_suite(&base);
    cfgs.push(BacktestConfig::with_strategy(Strategy::MaxSharpeMultiscale));
    let mut checked = 0;
    for cfg in &cfgs {
        let reference = run_backtest(&panel, cfg).unwrap();
        for (k, reb) in reference.rebalances.iter().enumerate().step_by(4) {
            let mutated = mutate_after(&panel, reb.row, 13_000 + k as u64);
            let rerun = run_backtest(&mutated, cfg).unwrap();
            for j in 0..=k {
                if rerun.rebalances[j].weights != reference.rebalances[j].weights {
                    return outcome(
                        false,
                        format!(
                            "{}: rebalance {j} changed after mutating rows >= {}",
                            cfg.label(),
                            reb.row
                        ),
                    );
                }
            }
            checked += 1;
        }
    }
    outcome(
        true,
        format!(
            "{checked} mutated panels across {} strategies, all fitted weights bit-identical",
            cfgs.len()
        ),
    )
}

type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

fn main() {
    // Accept and ignore libtest flags such as --nocapture or test filters.
    let criteria: Vec<Criterion> = vec![
        (
            "closed-form correctness",
            Box::new(|| timed(Some(Duration::from_secs(1)), closed_form_correctness)),
        ),
        (
            "oracle equivalence",
            Box::new(|| timed(Some(Duration::from_secs(30)), oracle_equivalence)),
        ),
        ("sensitivity formulas", Box::new(|| timed(None, sensitivity_formulas))),
        (
            "correlation sensitivity",
            Box::new(|| timed(None, correlation_sensitivity)),
        ),
        (
            "Hurst recovery",
            Box::new(|| timed(Some(Duration::from_secs(60)), hurst_recovery)),
        ),
        (
            "multifractality detection",
            Box::new(|| timed(None, multifractality_detection)),
        ),
        ("Epps exponent", Box::new(|| timed(None, epps_exponent))),
        (
            "elliptical equivalence",
            Box::new(|| timed(None, elliptical_equivalence)),
        ),
        ("repro pipeline", Box::new(|| timed(None, repro_pipeline))),
        ("no look-ahead", Box::new(|| timed(None, no_look_ahead))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
