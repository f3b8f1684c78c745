//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! with the measured values at the stated tolerances.
//!
//! Criterion 2 pins the published triple (99.5, 68.55, 87.96) at +-0.3. The
//! k_eps component of that triple is inconsistent with the VaR equation it
//! is defined by (P(Y(T) < 87.96 | y = 99.5) = 1.244%, not the 1% the same
//! source fixes; confirmed by grid refinement and by Monte Carlo), so that
//! one assertion fails by construction. The root consistent with the
//! equations, 87.047, is pinned in `solver_oracles.rs`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use hestonvar::charfn::{char_fn_with_step, integrate_riccati};
use hestonvar::mc::{estimate_price, simulate, SimConfig};
use hestonvar::pricing::payoff_d;
use hestonvar::{
    check_binding, q_measure_params, solve_nls0, AffineClosedForm, Dampening, DerivativeParams,
    FourierConfig, MarketModel, Measure, Pricer, ProblemSpec, SolveResult, SolverConfig,
    VariancePremium,
};

fn base_model() -> MarketModel {
    MarketModel::new(0.03, 1.0, 3.6129, 0.0291, 0.3, -0.4, 0.03).unwrap()
}

fn base_spec() -> ProblemSpec {
    ProblemSpec::new(-2.0, 3.0, 100.0, 100.0, 0.01).unwrap()
}

/// Turbulent market: real-world kappa backed out of the risk-neutral pair
/// (kappa_tilde, theta_tilde) = (0.6067, 0.0707) through the time-zero
/// premium loading; theta preserves kappa*theta = kappa_tilde*theta_tilde.
fn turbulent_model(rho: f64, scale: f64) -> MarketModel {
    let kappa = 0.8171 * scale;
    let theta = 0.6067 * 0.0707 / 0.8171;
    let sigma = 0.2928 * scale;
    MarketModel::new(0.03, 1.0, kappa, theta, sigma, rho, 0.0654).unwrap()
}

fn pricer_for(m: &MarketModel, gamma: f64, horizon: f64) -> Pricer {
    Pricer::new(m, gamma, horizon, FourierConfig::for_horizon(horizon), Dampening::default())
        .unwrap()
}

fn solve_for(m: &MarketModel, spec: &ProblemSpec) -> (Pricer, SolveResult) {
    let pricer = pricer_for(m, spec.gamma(), spec.horizon());
    let res = solve_nls0(&pricer, spec, &SolverConfig::default()).unwrap();
    (pricer, res)
}

fn base_solved() -> &'static (Pricer, SolveResult, f64) {
    static CELL: OnceLock<(Pricer, SolveResult, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let started = Instant::now();
        let (pricer, res) = solve_for(&base_model(), &base_spec());
        let elapsed = started.elapsed().as_secs_f64();
        (pricer, res, elapsed)
    })
}

fn report(criterion: &str, passed: bool, detail: &str) {
    println!("ACCEPTANCE {criterion}: {} — {detail}", if passed { "PASS" } else { "FAIL" });
}

#[test]
fn acceptance_01_unconstrained_strategy_closed_form() {
    let m = base_model();
    let started = Instant::now();
    let pi_u = hestonvar::unconstrained_strategy(&m, -2.0, 0.0, 3.0).unwrap();
    let elapsed = started.elapsed();
    let ok_value = (pi_u - 0.3371).abs() < 2e-4;
    let ok_time = elapsed.as_secs_f64() < 1e-3;
    report(
        "1",
        ok_value && ok_time,
        &format!("pi_u(0) = {pi_u:.6} (target 0.3371 +- 0.0002), runtime {elapsed:?}"),
    );
    assert!(ok_value, "pi_u(0) = {pi_u}");
    assert!(ok_time, "closed form took {elapsed:?}");
}

#[test]
fn acceptance_02_base_case_constrained_solve() {
    let (_, res, elapsed) = base_solved();
    let ok_pi = (res.pi_c - 0.3172).abs() < 0.003;
    let ok_y = (res.params.y - 99.5).abs() < 0.3;
    let ok_kv = (res.params.k_v - 68.55).abs() < 0.3;
    let ok_keps = (res.params.k_eps - 87.96).abs() < 0.3;
    let ok_time = *elapsed < 60.0;
    report(
        "2",
        ok_pi && ok_y && ok_kv && ok_keps && ok_time,
        &format!(
            "pi_c = {:.6} (target 0.3172 +- 0.003), y = {:.4} (99.5 +- 0.3), k_v = {:.4} (68.55 +- 0.3), k_eps = {:.4} (87.96 +- 0.3), runtime {:.1}s (< 60s)",
            res.pi_c, res.params.y, res.params.k_v, res.params.k_eps, elapsed
        ),
    );
    assert!(ok_pi, "pi_c = {}", res.pi_c);
    assert!(ok_y, "y = {}", res.params.y);
    assert!(ok_kv, "k_v = {}", res.params.k_v);
    assert!(ok_time, "solve took {elapsed}s");
    // Known-red assertion: the published k_eps does not solve the VaR
    // equation that defines it; the consistent root is 87.047 (see module
    // docs and the decision log). Kept faithful to the stated criterion.
    assert!(ok_keps, "k_eps = {} vs published 87.96 +- 0.3", res.params.k_eps);
}

#[test]
fn acceptance_03_unconstrained_shortfall_probability() {
    let (pricer, _, _) = base_solved();
    let check = check_binding(pricer, &base_spec()).unwrap();
    let ok = (check.eps_u - 0.12).abs() < 0.005;
    report("3", ok, &format!("eps_u = {:.6} (target 0.12 +- 0.005)", check.eps_u));
    assert!(ok, "eps_u = {}", check.eps_u);
}

#[test]
fn acceptance_04_measure_change_constants() {
    let cf = AffineClosedForm::new(&base_model(), -2.0).unwrap();
    let (kt, tt) =
        q_measure_params(&cf, 0.0, 3.0, VariancePremium::ConstantLoading(0.0238)).unwrap();
    let ok = (kt - 3.5).abs() < 5e-5 && (tt - 0.03).abs() < 5e-5;
    report(
        "4",
        ok,
        &format!("constant loading 0.0238: kappa_tilde = {kt:.6} (3.5000), theta_tilde = {tt:.6} (0.0300)"),
    );
    assert!(ok, "kappa_tilde = {kt}, theta_tilde = {tt}");
}

#[test]
fn acceptance_05_horizon_sweep() {
    let m = base_model();
    let mut details = Vec::new();
    let mut all_ok = true;

    let spec1 = ProblemSpec::new(-2.0, 1.0, 100.0, 100.0, 0.01).unwrap();
    let (_, res1) = solve_for(&m, &spec1);
    let ok1 = (res1.pi_c - 0.28).abs() < 0.01;
    all_ok &= ok1;
    details.push(format!("T=1: pi_c = {:.4} (0.28 +- 0.01)", res1.pi_c));

    let spec5 = ProblemSpec::new(-2.0, 5.0, 100.0, 100.0, 0.01).unwrap();
    let (_, res5) = solve_for(&m, &spec5);
    let ok5 = (res5.pi_c - 0.33).abs() < 0.01;
    all_ok &= ok5;
    details.push(format!("T=5: pi_c = {:.4} (0.33 +- 0.01)", res5.pi_c));

    let spec10 = ProblemSpec::new(-2.0, 10.0, 100.0, 100.0, 0.01).unwrap();
    let (_, res10) = solve_for(&m, &spec10);
    let ok10 = (res10.pi_c - res10.pi_u).abs() < 0.01;
    all_ok &= ok10;
    details.push(format!(
        "T=10: |pi_c - pi_u| = {:.5} (< 0.01)",
        (res10.pi_c - res10.pi_u).abs()
    ));

    report("5", all_ok, &details.join("; "));
    assert!(ok1, "{}", details[0]);
    assert!(ok5, "{}", details[1]);
    assert!(ok10, "{}", details[2]);
}

#[test]
fn acceptance_06_risk_aversion_sweep() {
    let m = base_model();
    let spec = ProblemSpec::new(-1.0, 3.0, 100.0, 100.0, 0.01).unwrap(); // RRA 2
    let (_, res) = solve_for(&m, &spec);
    let ok_c = (res.pi_c - 0.44).abs() < 0.01;
    let ok_u = (res.pi_u - 0.50).abs() < 0.01;
    report(
        "6",
        ok_c && ok_u,
        &format!("RRA=2: pi_c = {:.4} (0.44 +- 0.01), pi_u = {:.4} (0.50 +- 0.01)", res.pi_c, res.pi_u),
    );
    assert!(ok_c, "pi_c = {}", res.pi_c);
    assert!(ok_u, "pi_u = {}", res.pi_u);
}

#[test]
fn acceptance_07_turbulent_market_sweeps() {
    let spec = ProblemSpec::new(-1.0, 3.0, 100.0, 100.0, 0.01).unwrap();
    let mut details = Vec::new();
    let mut oks = Vec::new();
    for (rho, scale, target, label) in [
        (-0.4, 1.0, 0.427, "rho=-0.4"),
        (-0.6, 1.0, 0.44, "rho=-0.6"),
        (-0.7571, 1.0, 0.452, "delta=1"),
        (-0.7571, 0.75, 0.447, "delta=0.75"),
    ] {
        let m = turbulent_model(rho, scale);
        let (_, res) = solve_for(&m, &spec);
        let ok = (res.pi_c - target).abs() < 0.01;
        oks.push(ok);
        details.push(format!("{label}: pi_c = {:.4} ({target} +- 0.01)", res.pi_c));
    }
    report("7", oks.iter().all(|&x| x), &details.join("; "));
    for (ok, detail) in oks.iter().zip(&details) {
        assert!(ok, "{detail}");
    }
}

#[test]
fn acceptance_08_property_suite() {
    let (pricer, res, _) = base_solved();
    let spec = base_spec();
    let cf = pricer.closed_form();
    let m = pricer.model();
    let (y, v0, x0, cap) = (res.params.y, m.v0(), spec.x0(), spec.var_floor());
    let step = pricer.config().ode_step;
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        all_ok &= ok;
        println!("  [8] {} {name}: {detail}", if ok { "ok  " } else { "FAIL" });
        assert!(ok, "{name}: {detail}");
    };

    // phi(0) = 1 exactly
    for measure in [Measure::P, Measure::Q] {
        let phi = char_fn_with_step(cf, measure, Complex64::ZERO, 3.0, y.ln(), v0, step).unwrap();
        check("phi(0)=1", phi == Complex64::new(1.0, 0.0), format!("{measure}: {phi}"));
    }

    // |phi(u)| <= 1 on the real grid
    for measure in [Measure::P, Measure::Q] {
        let table = pricer.table(measure, 0.0, 3.0).unwrap();
        let worst = (0..table.len())
            .map(|i| table.phi_at(i, y.ln(), v0).norm())
            .fold(0.0_f64, f64::max);
        check("|phi|<=1", worst <= 1.0 + 1e-12, format!("{measure}: max = {worst}"));
    }

    // density normalization within 1e-4
    for measure in [Measure::P, Measure::Q] {
        let (lo, hi, n) = ((0.05 * x0).ln(), (8.0 * x0).ln(), 1600);
        let dz = (hi - lo) / n as f64;
        let mut mass = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            mass += w * dz * pricer.density(measure, lo + i as f64 * dz, 0.0, x0, v0).unwrap();
        }
        check("density mass", (mass - 1.0).abs() < 1e-4, format!("{measure}: {mass:.8}"));
    }

    // Q-martingale, Fourier route
    let phi = char_fn_with_step(cf, Measure::Q, Complex64::new(0.0, -1.0), 3.0, y.ln(), v0, step)
        .unwrap();
    let target = y * (m.r() * 3.0).exp();
    let rel = ((phi.re - target) / target).abs().max(phi.im.abs() / target);
    check("martingale fourier", rel < 1e-5, format!("relative error {rel:e}"));

    // Q-martingale, Monte Carlo route at 1e6 paths
    let cfg = SimConfig::new(1_000_000, 1500, 424_242, Measure::Q).unwrap();
    let batch = simulate(cf, 3.0, &cfg, 0.0, y, v0).unwrap();
    let (mart, se) = estimate_price(&batch, |w| w, m.r(), 3.0);
    check(
        "martingale mc",
        (mart - y).abs() < 3.0 * se,
        format!("{mart:.4} vs {y:.4} (se {se:.4})"),
    );

    // analytic Greeks vs central finite differences
    let hv = 1e-5;
    let vega = pricer.h_vn(&res.params, 0.0, v0).unwrap();
    let fd_vega = (pricer.h_b(&res.params, 0.0, v0 + hv).unwrap()
        - pricer.h_b(&res.params, 0.0, v0 - hv).unwrap())
        / (2.0 * hv);
    check(
        "vega vs fd",
        (vega - fd_vega).abs() < 1e-4 * x0,
        format!("|analytic - fd| = {:e}", (vega - fd_vega).abs()),
    );
    let hy = 1e-4;
    let up = DerivativeParams { y: res.params.y + hy, ..res.params };
    let dn = DerivativeParams { y: res.params.y - hy, ..res.params };
    let delta = pricer.h_delta(&res.params, 0.0, v0).unwrap();
    let fd_delta =
        (pricer.h_b(&up, 0.0, v0).unwrap() - pricer.h_b(&dn, 0.0, v0).unwrap()) / (2.0 * hy);
    check(
        "delta vs fd",
        (delta - fd_delta).abs() < 1e-6,
        format!("|analytic - fd| = {:e}", (delta - fd_delta).abs()),
    );

    // dampening invariance within 1e-6 relative
    let put_ref = pricer.put_price(cap, 0.0, y, v0).unwrap();
    let mut worst: f64 = 0.0;
    for alpha in [1.5, 3.0] {
        let p = pricer.put_price_with_alpha(cap, 0.0, y, v0, alpha).unwrap();
        worst = worst.max(((p - put_ref) / put_ref).abs());
    }
    let dig_ref = pricer.digital_put(res.params.k_eps, 0.0, y, v0, Measure::P).unwrap();
    for alpha in [0.25, 1.0] {
        let p = pricer
            .digital_put_with_alpha(res.params.k_eps, 0.0, y, v0, Measure::P, alpha)
            .unwrap();
        worst = worst.max(((p - dig_ref) / dig_ref).abs());
    }
    check("dampening invariance", worst < 1e-6, format!("max relative deviation {worst:e}"));

    // solved point: vega neutrality and VaR probability
    check(
        "|h_VN| at solution",
        vega.abs() < 1e-3 * x0,
        format!("{:e} (< 1e-3 x0)", vega.abs()),
    );
    let h_var = pricer.h_var(&res.params, 0.0, v0).unwrap();
    check(
        "|h_VaR - eps|",
        (h_var - spec.epsilon()).abs() < 5e-4,
        format!("{:e} (< 5e-4)", (h_var - spec.epsilon()).abs()),
    );

    // RK4 step-halving drift
    let mut drift: f64 = 0.0;
    for measure in [Measure::P, Measure::Q] {
        for u in [Complex64::new(0.5, 0.0), Complex64::new(20.0, 1.0), Complex64::new(200.0, 0.5)]
        {
            let (a1, b1) = integrate_riccati(cf, measure, u, 3.0, step).unwrap();
            let (a2, b2) = integrate_riccati(cf, measure, u, 3.0, step / 2.0).unwrap();
            drift = drift.max((a1 - a2).norm()).max((b1 - b2).norm());
        }
    }
    check("rk4 step halving", drift < 1e-8, format!("max drift {drift:e}"));

    report("8", all_ok, "property suite");
}

#[test]
fn acceptance_09_oracle_equivalence() {
    let mut rng = ChaCha12Rng::seed_from_u64(20_240_809);
    let mut point = 0;
    let mut details = Vec::new();
    while point < 10 {
        let kappa: f64 = rng.gen_range(1.0..4.0);
        let theta: f64 = rng.gen_range(0.02..0.06);
        let sigma_cap = (1.9 * kappa * theta).sqrt();
        let sigma = rng.gen_range(0.15..sigma_cap.min(0.6));
        let rho = rng.gen_range(-0.8..0.0);
        let v0 = rng.gen_range(0.015..0.06);
        let lambda_bar = rng.gen_range(0.5..1.5);
        let gamma = rng.gen_range(-3.0..-0.5);
        let Ok(m) = MarketModel::new(0.03, lambda_bar, kappa, theta, sigma, rho, v0) else {
            continue;
        };
        if !hestonvar::check_kraft_condition(&m, gamma) {
            continue;
        }
        let pricer = pricer_for(&m, gamma, 3.0);
        let y: f64 = rng.gen_range(50.0..150.0);
        let put_strike = y * (m.r() * 3.0).exp() * rng.gen_range(0.8..1.1);
        let dig_strike = y * rng.gen_range(0.7..0.95);
        let put = pricer.put_price(put_strike, 0.0, y, v0).unwrap();
        let dig = pricer.digital_put(dig_strike, 0.0, y, v0, Measure::Q).unwrap();

        let cfg = SimConfig::new(1_000_000, 1500, 9000 + point as u64, Measure::Q).unwrap();
        let batch = simulate(pricer.closed_form(), 3.0, &cfg, 0.0, y, v0).unwrap();
        let (put_mc, put_se) =
            estimate_price(&batch, |w| (put_strike - w).max(0.0), m.r(), 3.0);
        let (dig_mc, dig_se) =
            estimate_price(&batch, |w| if w < dig_strike { 1.0 } else { 0.0 }, m.r(), 3.0);
        let ok_put = (put - put_mc).abs() < 3.0 * put_se.max(1e-5);
        let ok_dig = (dig - dig_mc).abs() < 3.0 * dig_se.max(1e-5);
        details.push(format!(
            "point {point}: put {put:.5} vs {put_mc:.5} (se {put_se:.5}), digital {dig:.5} vs {dig_mc:.5} (se {dig_se:.5})"
        ));
        assert!(ok_put, "{}", details.last().unwrap());
        assert!(ok_dig, "{}", details.last().unwrap());
        point += 1;
    }

    // budget reproduction and the floor-strike put at the base-case solution
    let (pricer, res, _) = base_solved();
    let cfg = SimConfig::new(1_000_000, 1500, 77_777, Measure::Q).unwrap();
    let batch = simulate(pricer.closed_form(), 3.0, &cfg, 0.0, res.params.y, 0.03).unwrap();
    let p = res.params;
    let (budget, se) = estimate_price(&batch, |w| payoff_d(w, &p), 0.03, 3.0);
    let ok_budget = (budget - 100.0).abs() < 3.0 * se;
    details.push(format!("budget: {budget:.4} vs 100 (se {se:.4})"));
    let put = pricer.put_price(100.0, 0.0, p.y, 0.03).unwrap();
    let (put_mc, put_se) = estimate_price(&batch, |w| (100.0 - w).max(0.0), 0.03, 3.0);
    let ok_put = (put - put_mc).abs() < 3.0 * put_se;
    details.push(format!("base put: {put:.5} vs {put_mc:.5} (se {put_se:.5})"));
    report("9", ok_budget && ok_put, &details.join("; "));
    assert!(ok_budget, "{}", details[details.len() - 2]);
    assert!(ok_put, "{}", details.last().unwrap());
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

#[test]
fn acceptance_10_byte_identical_outputs() {
    let bin = env!("CARGO_BIN_EXE_hestonvar");
    let scenario = workspace_root().join("scenarios/base.toml");
    let dir = std::env::temp_dir().join("hestonvar_acceptance_determinism");
    std::fs::create_dir_all(&dir).unwrap();

    let run = |args: &[&str]| {
        let out = Command::new(bin)
            .args(args)
            .env("HESTONVAR_ODE_STEPS", "2500")
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    };

    let solve_a = dir.join("solve_a.csv");
    let solve_b = dir.join("solve_b.csv");
    for p in [&solve_a, &solve_b] {
        run(&["solve", "--scenario", scenario.to_str().unwrap(), "--quiet", "--out",
            p.to_str().unwrap()]);
    }
    let identical_solve = std::fs::read(&solve_a).unwrap() == std::fs::read(&solve_b).unwrap();

    let sweep_a = dir.join("sweep_a.csv");
    let sweep_b = dir.join("sweep_b.csv");
    for p in [&sweep_a, &sweep_b] {
        run(&[
            "sweep",
            "--scenario",
            scenario.to_str().unwrap(),
            "--axis",
            "epsilon",
            "--grid",
            "0.01,0.03,0.06",
            "--quiet",
            "--out",
            p.to_str().unwrap(),
        ]);
    }
    let identical_sweep = std::fs::read(&sweep_a).unwrap() == std::fs::read(&sweep_b).unwrap();

    report(
        "10",
        identical_solve && identical_sweep,
        &format!("solve identical: {identical_solve}, sweep identical: {identical_sweep}"),
    );
    assert!(identical_solve);
    assert!(identical_sweep);
}
