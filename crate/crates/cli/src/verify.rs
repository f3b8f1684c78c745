//! The `verify` subcommand: an end-to-end consistency report comparing the
//! Fourier stack against closed-form identities, finite differences and the
//! Monte Carlo oracle.

use num_complex::Complex64;
use serde::Serialize;

use hestonvar::charfn::{char_fn_with_step, integrate_riccati};
use hestonvar::mc::{estimate_price, estimate_tail_prob, simulate, SimConfig};
use hestonvar::pricing::payoff_d;
use hestonvar::{check_binding, solve_nls0, DerivativeParams, Measure, Pricer, SolveResult};

use crate::scenario::Scenario;

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

struct Ctx<'a> {
    sc: &'a Scenario,
    pricer: Pricer,
    n_paths: usize,
    seed: u64,
}

fn fail_check(name: &'static str, err: impl std::fmt::Display) -> Check {
    Check::new(name, false, format!("error: {err}"))
}

fn check_normalization(ctx: &Ctx) -> Check {
    let name = "charfn_normalization";
    let cf = ctx.pricer.closed_form();
    let t_end = ctx.sc.spec.horizon();
    for measure in [Measure::P, Measure::Q] {
        match char_fn_with_step(
            cf,
            measure,
            Complex64::ZERO,
            t_end,
            ctx.sc.spec.x0().ln(),
            ctx.sc.model.v0(),
            ctx.sc.fourier.ode_step,
        ) {
            Ok(phi) if phi == Complex64::new(1.0, 0.0) => {}
            Ok(phi) => return Check::new(name, false, format!("phi(0) = {phi} under {measure}")),
            Err(e) => return fail_check(name, e),
        }
    }
    Check::new(name, true, "phi(0) = 1 exactly under P and Q".into())
}

fn check_phi_bounded(ctx: &Ctx) -> Check {
    let name = "charfn_modulus_bound";
    let ln_y = ctx.sc.spec.x0().ln();
    let v0 = ctx.sc.model.v0();
    let horizon = ctx.sc.spec.horizon();
    let mut worst: f64 = 0.0;
    for measure in [Measure::P, Measure::Q] {
        let table = match ctx.pricer.table(measure, 0.0, horizon) {
            Ok(t) => t,
            Err(e) => return fail_check(name, e),
        };
        for i in 0..table.len() {
            worst = worst.max(table.phi_at(i, ln_y, v0).norm() - 1.0);
        }
    }
    Check::new(name, worst <= 1e-12, format!("max |phi| - 1 = {worst:e}"))
}

fn check_martingale_fourier(ctx: &Ctx) -> Check {
    let name = "martingale_fourier";
    let spec = &ctx.sc.spec;
    let y = spec.x0();
    let expected = y * (ctx.sc.model.r() * spec.horizon()).exp();
    match char_fn_with_step(
        ctx.pricer.closed_form(),
        Measure::Q,
        Complex64::new(0.0, -1.0),
        spec.horizon(),
        y.ln(),
        ctx.sc.model.v0(),
        ctx.sc.fourier.ode_step,
    ) {
        Ok(phi) => {
            let rel = ((phi.re - expected) / expected).abs().max(phi.im.abs() / expected);
            Check::new(name, rel < 1e-5, format!("relative error {rel:e}"))
        }
        Err(e) => fail_check(name, e),
    }
}

fn check_density_norm(ctx: &Ctx) -> Check {
    let name = "density_normalization";
    let spec = &ctx.sc.spec;
    let x0 = spec.x0();
    let mut worst: f64 = 0.0;
    for measure in [Measure::P, Measure::Q] {
        // generous coverage: +-12 sigma-equivalents around the start in logs
        let lo = (0.05 * x0).ln();
        let hi = (8.0 * x0).ln();
        let n = 1600;
        let dz = (hi - lo) / n as f64;
        let mut mass = 0.0;
        for i in 0..=n {
            let z = lo + i as f64 * dz;
            let f = match ctx.pricer.density(measure, z, 0.0, x0, ctx.sc.model.v0()) {
                Ok(f) => f,
                Err(e) => return fail_check(name, e),
            };
            mass += if i == 0 || i == n { 0.5 } else { 1.0 } * f * dz;
        }
        worst = worst.max((mass - 1.0).abs());
    }
    Check::new(name, worst < 1e-4, format!("max |mass - 1| = {worst:e}"))
}

fn check_rk4_halving(ctx: &Ctx) -> Check {
    let name = "rk4_step_halving";
    let cf = ctx.pricer.closed_form();
    let tau = ctx.sc.spec.horizon();
    let step = ctx.sc.fourier.ode_step;
    let mut worst: f64 = 0.0;
    for measure in [Measure::P, Measure::Q] {
        for u in [
            Complex64::new(0.5, 0.0),
            Complex64::new(20.0, 1.0),
            Complex64::new(ctx.sc.fourier.u_max, 0.5),
        ] {
            let full = integrate_riccati(cf, measure, u, tau, step);
            let half = integrate_riccati(cf, measure, u, tau, step / 2.0);
            match (full, half) {
                (Ok((a1, b1)), Ok((a2, b2))) => {
                    worst = worst.max((a1 - a2).norm()).max((b1 - b2).norm());
                }
                (Err(e), _) | (_, Err(e)) => return fail_check(name, e),
            }
        }
    }
    Check::new(name, worst < 1e-8, format!("max drift = {worst:e}"))
}

fn check_dampening_invariance(ctx: &Ctx) -> Check {
    let name = "dampening_invariance";
    let spec = &ctx.sc.spec;
    let (y, v0, cap) = (spec.x0(), ctx.sc.model.v0(), spec.var_floor());
    let mut worst: f64 = 0.0;
    let reference = match ctx.pricer.put_price(cap, 0.0, y, v0) {
        Ok(p) => p,
        Err(e) => return fail_check(name, e),
    };
    for alpha in [1.5, 3.0] {
        match ctx.pricer.put_price_with_alpha(cap, 0.0, y, v0, alpha) {
            Ok(p) => worst = worst.max(((p - reference) / reference).abs()),
            Err(e) => return fail_check(name, e),
        }
    }
    let strike = 0.85 * cap;
    let refd = match ctx.pricer.digital_put(strike, 0.0, y, v0, Measure::P) {
        Ok(p) => p,
        Err(e) => return fail_check(name, e),
    };
    for alpha in [0.25, 1.0] {
        match ctx.pricer.digital_put_with_alpha(strike, 0.0, y, v0, Measure::P, alpha) {
            Ok(p) => worst = worst.max(((p - refd) / refd).abs()),
            Err(e) => return fail_check(name, e),
        }
    }
    Check::new(name, worst < 1e-6, format!("max relative deviation = {worst:e}"))
}

fn check_solution(ctx: &Ctx, res: &SolveResult) -> Check {
    let name = "nls0_solution";
    let spec = &ctx.sc.spec;
    let ok = res.residuals.budget.abs() < ctx.sc.solver.tol_budget * spec.x0()
        && res.residuals.vega.abs() < ctx.sc.solver.tol_vega * spec.x0()
        && (!res.binding || res.residuals.third.abs() < ctx.sc.solver.tol_prob);
    Check::new(
        name,
        ok,
        format!(
            "binding={} y={:.4} k_v={:.4} k_eps={:.4} pi_u={:.6} pi_c={:.6} residuals=({:.2e},{:.2e},{:.2e})",
            res.binding,
            res.params.y,
            res.params.k_v,
            res.params.k_eps,
            res.pi_u,
            res.pi_c,
            res.residuals.budget,
            res.residuals.vega,
            res.residuals.third
        ),
    )
}

fn check_greeks_fd(ctx: &Ctx, res: &SolveResult) -> Check {
    let name = "greeks_vs_finite_differences";
    let p = res.params;
    let v0 = ctx.sc.model.v0();
    let x0 = ctx.sc.spec.x0();
    let hv = 1e-5;
    let vega = match ctx.pricer.h_vn(&p, 0.0, v0) {
        Ok(x) => x,
        Err(e) => return fail_check(name, e),
    };
    let fd_vega = match (ctx.pricer.h_b(&p, 0.0, v0 + hv), ctx.pricer.h_b(&p, 0.0, v0 - hv)) {
        (Ok(a), Ok(b)) => (a - b) / (2.0 * hv),
        (Err(e), _) | (_, Err(e)) => return fail_check(name, e),
    };
    let hy = 1e-4;
    let up = DerivativeParams { y: p.y + hy, ..p };
    let dn = DerivativeParams { y: p.y - hy, ..p };
    let delta = match ctx.pricer.h_delta(&p, 0.0, v0) {
        Ok(x) => x,
        Err(e) => return fail_check(name, e),
    };
    let fd_delta = match (ctx.pricer.h_b(&up, 0.0, v0), ctx.pricer.h_b(&dn, 0.0, v0)) {
        (Ok(a), Ok(b)) => (a - b) / (2.0 * hy),
        (Err(e), _) | (_, Err(e)) => return fail_check(name, e),
    };
    let dv = (vega - fd_vega).abs();
    let dd = (delta - fd_delta).abs();
    Check::new(
        name,
        dv < 1e-4 * x0 && dd < 1e-6,
        format!("|vega - fd| = {dv:e}, |delta - fd| = {dd:e}"),
    )
}

fn mc_checks(ctx: &Ctx, res: &SolveResult) -> Vec<Check> {
    let mut checks = Vec::new();
    let sc = ctx.sc;
    let spec = &sc.spec;
    let cf = ctx.pricer.closed_form();
    let t_end = spec.horizon();
    let n_steps =
        ((sc.file.mc.steps_per_year as f64 * t_end).ceil() as usize).max(1);
    let p = res.params;

    let q_cfg = match SimConfig::new(ctx.n_paths, n_steps, ctx.seed, Measure::Q) {
        Ok(c) => c,
        Err(e) => return vec![fail_check("mc_config", e)],
    };
    let batch_q = match simulate(cf, t_end, &q_cfg, 0.0, p.y, sc.model.v0()) {
        Ok(b) => b,
        Err(e) => return vec![fail_check("mc_simulation", e)],
    };

    // martingale: discounted mean of Y(T) returns the start value
    let (mart, se_m) = estimate_price(&batch_q, |y| y, sc.model.r(), t_end);
    checks.push(Check::new(
        "mc_martingale",
        (mart - p.y).abs() < 3.0 * se_m,
        format!("{mart:.4} vs {:.4} (se {se_m:.4})", p.y),
    ));

    // put price at the floor strike
    let cap = spec.var_floor();
    match ctx.pricer.put_price(cap, 0.0, p.y, sc.model.v0()) {
        Ok(put) => {
            let (put_mc, se) =
                estimate_price(&batch_q, |y| (cap - y).max(0.0), sc.model.r(), t_end);
            checks.push(Check::new(
                "mc_put_price",
                (put - put_mc).abs() < 3.0 * se,
                format!("fourier {put:.5} vs mc {put_mc:.5} (se {se:.5})"),
            ));
        }
        Err(e) => checks.push(fail_check("mc_put_price", e)),
    }

    // budget: discounted payoff of the full derivative equals x0
    let (hb_mc, se_b) = estimate_price(&batch_q, |y| payoff_d(y, &p), sc.model.r(), t_end);
    let target = if res.binding { spec.x0() } else { p.y };
    checks.push(Check::new(
        "mc_budget",
        (hb_mc - target).abs() < 3.0 * se_b,
        format!("{hb_mc:.4} vs {target:.4} (se {se_b:.4})"),
    ));

    let p_cfg = match SimConfig::new(ctx.n_paths, n_steps, ctx.seed + 1, Measure::P) {
        Ok(c) => c,
        Err(e) => return vec![fail_check("mc_config", e)],
    };
    let batch_p = match simulate(cf, t_end, &p_cfg, 0.0, p.y, sc.model.v0()) {
        Ok(b) => b,
        Err(e) => return vec![fail_check("mc_simulation", e)],
    };
    if res.binding {
        let (prob, se_p) = estimate_tail_prob(&batch_p, p.k_eps);
        checks.push(Check::new(
            "mc_var_probability",
            (prob - spec.epsilon()).abs() < 3.0 * se_p.max(1e-6),
            format!("{prob:.5} vs {:.5} (se {se_p:.5})", spec.epsilon()),
        ));
    }

    // shortfall probability of the unconstrained optimum started at x0
    let p0_cfg = match SimConfig::new(ctx.n_paths, n_steps, ctx.seed + 2, Measure::P) {
        Ok(c) => c,
        Err(e) => return vec![fail_check("mc_config", e)],
    };
    match simulate(cf, t_end, &p0_cfg, 0.0, spec.x0(), sc.model.v0()) {
        Ok(batch) => match check_binding(&ctx.pricer, spec) {
            Ok(check) => {
                let (eps_mc, se) = estimate_tail_prob(&batch, cap);
                checks.push(Check::new(
                    "mc_eps_u",
                    (eps_mc - check.eps_u).abs() < 3.0 * se.max(1e-6),
                    format!("{eps_mc:.5} vs fourier {:.5} (se {se:.5})", check.eps_u),
                ));
            }
            Err(e) => checks.push(fail_check("mc_eps_u", e)),
        },
        Err(e) => checks.push(fail_check("mc_eps_u", e)),
    }

    checks
}

/// Run the verification suite. Returns the checks and whether all passed.
pub fn run(sc: &Scenario, n_paths: usize, seed: u64) -> Result<Vec<Check>, String> {
    if n_paths == 0 {
        return Err("invalid n_paths: must be >= 1".to_string());
    }
    let pricer = Pricer::new(
        &sc.model,
        sc.spec.gamma(),
        sc.spec.horizon(),
        sc.fourier,
        sc.dampening,
    )
    .map_err(|e| e.to_string())?;
    let ctx = Ctx { sc, pricer, n_paths, seed };

    let mut checks = vec![
        check_normalization(&ctx),
        check_phi_bounded(&ctx),
        check_martingale_fourier(&ctx),
        check_density_norm(&ctx),
        check_rk4_halving(&ctx),
        check_dampening_invariance(&ctx),
    ];
    match solve_nls0(&ctx.pricer, &sc.spec, &sc.solver) {
        Ok(res) => {
            checks.push(check_solution(&ctx, &res));
            checks.push(check_greeks_fd(&ctx, &res));
            checks.extend(mc_checks(&ctx, &res));
        }
        Err(e) => checks.push(fail_check("nls0_solution", e)),
    }
    Ok(checks)
}
