//! Nonlinear solves pinning the synthetic derivative and the constrained
//! strategy.
//!
//! At `t = 0` the triple `(y, k_v, k_eps)` solves
//!
//! ```text
//! h_B(y, k_v, k_eps)   = x0      (budget)
//! h_VN(y, k_v, k_eps)  = 0       (vega neutrality)
//! h_VaR(y, k_v, k_eps) = eps     (VaR probability)
//! ```
//!
//! and the Lagrange multiplier of the VaR constraint follows as
//!
//! ```text
//! lambda_eps = y^{gamma-1} e^{a + b v - r tau} (K - k_v) f_Q / f_P
//!              - (K^gamma - k_v^gamma) / gamma
//! ```
//!
//! with both densities evaluated at `ln k_eps`. For `t > 0` the VaR equation
//! is replaced by the requirement that the same expression equals the
//! multiplier fixed at time zero. The solver is a small damped
//! Levenberg-Marquardt iteration on scaled residuals with the box
//! `0 <= k_v <= k_eps <= K` enforced by projection; a damped Newton
//! root-finder over the identical residuals serves as an independent
//! cross-check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::charfn::Measure;
use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::pricing::{DerivativeParams, MarketState, Pricer};

/// Tolerances and iteration limits of the nonlinear solves.
///
/// Budget and vega tolerances are relative to `x0`; the probability
/// tolerance is absolute; the third-equation tolerance is relative to the
/// utility scale `|x0^gamma / gamma|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol_budget: f64,
    pub tol_vega: f64,
    pub tol_prob: f64,
    pub tol_third: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_budget: 1e-4,
            tol_vega: 1e-4,
            tol_prob: 1e-5,
            tol_third: 1e-5,
            max_iterations: 200,
        }
    }
}

/// Residuals of the three equations in natural units: money for the budget,
/// money-per-variance for the vega, probability (t = 0) or multiplier units
/// (t > 0) for the third equation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub budget: f64,
    pub vega: f64,
    pub third: f64,
}

/// Outcome of a constrained solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveResult {
    pub params: DerivativeParams,
    pub lambda_eps: f64,
    pub pi_u: f64,
    pub pi_c: f64,
    pub residuals: Residuals,
    pub binding: bool,
    pub iterations: usize,
}

/// Bindingness verdict of the VaR constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BindingCheck {
    pub binding: bool,
    /// `P(Y(T) < K | Y(0) = x0, v(0) = v0)`, the shortfall probability of
    /// the unconstrained optimum.
    pub eps_u: f64,
}

/// Inputs of the multiplier expression, all at one evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct ThirdEquationInputs {
    pub a_t: f64,
    pub b_t: f64,
    pub v: f64,
    pub f_p: f64,
    pub f_q: f64,
    pub cap: f64,
    pub k_v: f64,
    pub y: f64,
    pub gamma: f64,
    pub r: f64,
    pub tau: f64,
}

/// Density floor below which the multiplier ratio is considered undefined.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// `lambda_eps` from the closed-form matching condition of the digital leg.
pub fn lagrange_multiplier(inp: &ThirdEquationInputs) -> Result<f64> {
    if inp.f_p.is_nan() || inp.f_p <= DENSITY_FLOOR {
        return Err(Error::DensityBelowFloor { value: inp.f_p, floor: DENSITY_FLOOR });
    }
    let growth = (inp.a_t + inp.b_t * inp.v - inp.r * inp.tau).exp();
    Ok(inp.y.powf(inp.gamma - 1.0) * growth * (inp.cap - inp.k_v) * inp.f_q / inp.f_p
        - (inp.cap.powf(inp.gamma) - inp.k_v.powf(inp.gamma)) / inp.gamma)
}

/// Shortfall probability of the unconstrained optimum and whether the VaR
/// constraint binds (`eps_u > epsilon`).
pub fn check_binding(pricer: &Pricer, spec: &ProblemSpec) -> Result<BindingCheck> {
    let eps_u = pricer.digital_put(
        spec.var_floor(),
        0.0,
        spec.x0(),
        pricer.model().v0(),
        Measure::P,
    )?;
    Ok(BindingCheck { binding: eps_u > spec.epsilon(), eps_u })
}

/// Which third equation closes the system.
enum ThirdEquation {
    /// `h_VaR = eps` (time zero).
    VarProbability { eps: f64 },
    /// multiplier expression `= lambda_eps` (t > 0).
    MultiplierMatch { lambda_eps: f64, t: f64 },
}

struct Nls<'a> {
    pricer: &'a Pricer,
    spec: &'a ProblemSpec,
    t: f64,
    x_target: f64,
    v: f64,
    third: ThirdEquation,
    utility_scale: f64,
}

impl<'a> Nls<'a> {
    /// Scaled residual vector at `(y, k_v, k_eps)`.
    fn residuals(&self, p: &[f64; 3]) -> Result<[f64; 3]> {
        let params = DerivativeParams::new(p[0], p[1], p[2], self.spec.var_floor())?;
        let x0 = self.spec.x0();
        let rb = (self.pricer.h_b(&params, self.t, self.v)? - self.x_target) / x0;
        let rv = self.pricer.h_vn(&params, self.t, self.v)? / x0;
        let r3 = match &self.third {
            ThirdEquation::VarProbability { eps } => {
                self.pricer.h_var(&params, self.t, self.v)? - eps
            }
            ThirdEquation::MultiplierMatch { lambda_eps, t } => {
                let lam = multiplier_at(self.pricer, self.spec, &params, *t, self.v)?;
                (lam - lambda_eps) / self.utility_scale
            }
        };
        Ok([rb, rv, r3])
    }

    fn tolerances(&self, cfg: &SolverConfig) -> [f64; 3] {
        [cfg.tol_budget, cfg.tol_vega, match self.third {
            ThirdEquation::VarProbability { .. } => cfg.tol_prob,
            ThirdEquation::MultiplierMatch { .. } => cfg.tol_third,
        }]
    }

    fn project(&self, p: [f64; 3]) -> [f64; 3] {
        let cap = self.spec.var_floor();
        let y = p[0].max(1e-6 * self.spec.x0());
        let k_eps = p[2].clamp(0.0, cap);
        let k_v = p[1].clamp(0.0, k_eps);
        [y, k_v, k_eps]
    }
}

/// Multiplier expression evaluated through the pricer's densities.
fn multiplier_at(
    pricer: &Pricer,
    spec: &ProblemSpec,
    params: &DerivativeParams,
    t: f64,
    v: f64,
) -> Result<f64> {
    let tau = pricer.t_end() - t;
    let cf = pricer.closed_form();
    let z = params.k_eps.ln();
    let f_p = pricer.density(Measure::P, z, t, params.y, v)?;
    let f_q = pricer.density(Measure::Q, z, t, params.y, v)?;
    lagrange_multiplier(&ThirdEquationInputs {
        a_t: cf.a(tau),
        b_t: cf.b(tau),
        v,
        f_p,
        f_q,
        cap: params.cap,
        k_v: params.k_v,
        y: params.y,
        gamma: spec.gamma(),
        r: pricer.model().r(),
        tau,
    })
}

struct LmOutcome {
    x: [f64; 3],
    residuals: [f64; 3],
    iterations: usize,
    converged: bool,
}

fn norm_sq(r: &[f64; 3]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn within(r: &[f64; 3], tol: &[f64; 3]) -> bool {
    r.iter().zip(tol).all(|(x, t)| x.abs() < *t)
}

/// Solve the 3x3 linear system by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for col in (0..3).rev() {
        let mut s = b[col];
        for k in col + 1..3 {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

/// Forward-difference Jacobian, stepping away from the box boundary.
fn fd_jacobian(nls: &Nls, x: &[f64; 3], r0: &[f64; 3]) -> Result<[[f64; 3]; 3]> {
    let mut jac = [[0.0; 3]; 3];
    for j in 0..3 {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = *x;
        xp[j] += h;
        let proj = nls.project(xp);
        let (xe, he) = if (proj[j] - xp[j]).abs() > 0.0 {
            let mut xm = *x;
            xm[j] -= h;
            (nls.project(xm), -h)
        } else {
            (proj, h)
        };
        let re = nls.residuals(&xe)?;
        for i in 0..3 {
            jac[i][j] = (re[i] - r0[i]) / he;
        }
    }
    Ok(jac)
}

fn levenberg_marquardt(nls: &Nls, start: [f64; 3], cfg: &SolverConfig) -> Result<LmOutcome> {
    let tol = nls.tolerances(cfg);
    let mut x = nls.project(start);
    let mut r = nls.residuals(&x)?;
    let mut mu = 1e-3;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        if within(&r, &tol) {
            return Ok(LmOutcome { x, residuals: r, iterations, converged: true });
        }
        iterations += 1;
        let jac = fd_jacobian(nls, &x, &r)?;
        // normal equations J^T J delta = -J^T r with Marquardt scaling
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                jtj[i][j] = (0..3).map(|k| jac[k][i] * jac[k][j]).sum();
            }
            jtr[i] = (0..3).map(|k| jac[k][i] * r[k]).sum();
        }
        let mut accepted = false;
        for _ in 0..25 {
            let mut lhs = jtj;
            for d in 0..3 {
                lhs[d][d] += mu * jtj[d][d].max(1e-12);
            }
            let rhs = [-jtr[0], -jtr[1], -jtr[2]];
            if let Some(delta) = solve3(lhs, rhs) {
                let cand = nls.project([x[0] + delta[0], x[1] + delta[1], x[2] + delta[2]]);
                let rc = nls.residuals(&cand)?;
                if norm_sq(&rc) < norm_sq(&r) {
                    x = cand;
                    r = rc;
                    mu = (mu / 3.0).max(1e-12);
                    accepted = true;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !accepted {
            break; // stuck: no damping level improves the residual
        }
    }
    Ok(LmOutcome { x, residuals: r, iterations, converged: within(&r, &tol) })
}

/// Damped Newton iteration on the same residuals; used as an independent
/// cross-check of the least-squares path.
fn damped_newton(nls: &Nls, start: [f64; 3], cfg: &SolverConfig) -> Result<LmOutcome> {
    let tol = nls.tolerances(cfg);
    let mut x = nls.project(start);
    let mut r = nls.residuals(&x)?;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        if within(&r, &tol) {
            return Ok(LmOutcome { x, residuals: r, iterations, converged: true });
        }
        iterations += 1;
        let jac = fd_jacobian(nls, &x, &r)?;
        let Some(delta) = solve3(jac, [-r[0], -r[1], -r[2]]) else { break };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = nls.project([
                x[0] + step * delta[0],
                x[1] + step * delta[1],
                x[2] + step * delta[2],
            ]);
            let rc = nls.residuals(&cand)?;
            if norm_sq(&rc) < norm_sq(&r) {
                x = cand;
                r = rc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(LmOutcome { x, residuals: r, iterations, converged: within(&r, &tol) })
}

/// P-quantile of `Y(T)` at level `eps` via bisection on the digital CDF.
fn p_quantile(pricer: &Pricer, y: f64, v: f64, eps: f64, cap: f64) -> Result<f64> {
    let cdf = |k: f64| pricer.digital_put(k, 0.0, y, v, Measure::P);
    let mut lo = 1e-3 * cap;
    let mut hi = cap;
    if cdf(lo)? > eps {
        return Ok(lo);
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid)? > eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn utility_scale(spec: &ProblemSpec) -> f64 {
    (spec.x0().powf(spec.gamma()) / spec.gamma()).abs()
}

fn identity_result(pricer: &Pricer, spec: &ProblemSpec, x: f64, tau: f64) -> SolveResult {
    SolveResult {
        params: DerivativeParams::identity(x, spec.var_floor()),
        lambda_eps: 0.0,
        pi_u: pricer.closed_form().pi_u(tau),
        pi_c: pricer.closed_form().pi_u(tau),
        residuals: Residuals::default(),
        binding: false,
        iterations: 0,
    }
}

fn finish_solve(
    pricer: &Pricer,
    spec: &ProblemSpec,
    nls: &Nls,
    out: LmOutcome,
    t: f64,
    v: f64,
    lambda_from_t0: Option<f64>,
) -> Result<SolveResult> {
    let x0 = spec.x0();
    if !out.converged {
        let budget = out.residuals[0] * x0;
        let vega = out.residuals[1] * x0;
        let third = out.residuals[2];
        let cap = spec.var_floor();
        let at_boundary = out.x[2] <= 1e-9 * cap || (cap - out.x[2]) <= 1e-9 * cap;
        if at_boundary && out.residuals[2].abs() > 1e-2 {
            return Err(Error::Infeasible { budget, vega, third });
        }
        return Err(Error::NonConvergence {
            iterations: out.iterations,
            budget,
            vega,
            third,
        });
    }
    let params = DerivativeParams::new(out.x[0], out.x[1], out.x[2], spec.var_floor())?;
    let lambda_eps = match lambda_from_t0 {
        Some(l) => l,
        None => multiplier_at(pricer, spec, &params, t, v)?,
    };
    let tau = pricer.t_end() - t;
    let pi_u = pricer.closed_form().pi_u(tau);
    let h_b = pricer.h_b(&params, t, v)?;
    let h_delta = pricer.h_delta(&params, t, v)?;
    let pi_c = pi_u * params.y * h_delta / h_b;
    Ok(SolveResult {
        params,
        lambda_eps,
        pi_u,
        pi_c,
        residuals: Residuals {
            budget: out.residuals[0] * x0,
            vega: out.residuals[1] * x0,
            third: match nls.third {
                ThirdEquation::VarProbability { .. } => out.residuals[2],
                ThirdEquation::MultiplierMatch { .. } => {
                    out.residuals[2] * nls.utility_scale
                }
            },
        },
        binding: true,
        iterations: out.iterations,
    })
}

/// Default initial guess at time zero: full budget in the underlying, the
/// VaR strike at the unconstrained P-quantile, `k_v` at 80% of it.
fn initial_guess(pricer: &Pricer, spec: &ProblemSpec) -> Result<[f64; 3]> {
    let k_eps = p_quantile(
        pricer,
        spec.x0(),
        pricer.model().v0(),
        spec.epsilon(),
        spec.var_floor(),
    )?;
    Ok([spec.x0(), 0.8 * k_eps, k_eps])
}

/// Solve the time-zero system. Returns the degenerate identity solution when
/// the constraint does not bind.
pub fn solve_nls0(pricer: &Pricer, spec: &ProblemSpec, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_nls0_warm(pricer, spec, None, cfg)
}

/// Time-zero solve seeded from a previous solution (sweeps warm-start along
/// their grid).
pub fn solve_nls0_warm(
    pricer: &Pricer,
    spec: &ProblemSpec,
    warm: Option<&DerivativeParams>,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    let check = check_binding(pricer, spec)?;
    if !check.binding {
        return Ok(identity_result(pricer, spec, spec.x0(), pricer.t_end()));
    }
    let v0 = pricer.model().v0();
    let nls = Nls {
        pricer,
        spec,
        t: 0.0,
        x_target: spec.x0(),
        v: v0,
        third: ThirdEquation::VarProbability { eps: spec.epsilon() },
        utility_scale: utility_scale(spec),
    };
    let cap = spec.var_floor();
    let start = match warm {
        Some(p) => [p.y, p.k_v.min(cap), p.k_eps.min(cap)],
        None => initial_guess(pricer, spec)?,
    };
    let out = levenberg_marquardt(&nls, start, cfg)?;
    finish_solve(pricer, spec, &nls, out, 0.0, v0, None)
}

/// Time-zero solve via damped Newton, for cross-checking the LM path.
pub fn solve_nls0_newton(
    pricer: &Pricer,
    spec: &ProblemSpec,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    let check = check_binding(pricer, spec)?;
    if !check.binding {
        return Ok(identity_result(pricer, spec, spec.x0(), pricer.t_end()));
    }
    let v0 = pricer.model().v0();
    let nls = Nls {
        pricer,
        spec,
        t: 0.0,
        x_target: spec.x0(),
        v: v0,
        third: ThirdEquation::VarProbability { eps: spec.epsilon() },
        utility_scale: utility_scale(spec),
    };
    let out = damped_newton(&nls, initial_guess(pricer, spec)?, cfg)?;
    finish_solve(pricer, spec, &nls, out, 0.0, v0, None)
}

/// Solve the system at `t > 0` given the multiplier fixed at time zero and
/// the realized state. `warm` seeds the iteration (typically the previous
/// solution along a path or sweep).
pub fn solve_nls_t(
    pricer: &Pricer,
    spec: &ProblemSpec,
    state: &MarketState,
    lambda_eps: f64,
    warm: Option<&DerivativeParams>,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    let tau = pricer.t_end() - state.t;
    if lambda_eps == 0.0 {
        // non-binding path: the identity payoff solves all three equations
        return Ok(identity_result(pricer, spec, state.x, tau));
    }
    let nls = Nls {
        pricer,
        spec,
        t: state.t,
        x_target: state.x,
        v: state.v,
        third: ThirdEquation::MultiplierMatch { lambda_eps, t: state.t },
        utility_scale: utility_scale(spec),
    };
    let start = match warm {
        Some(p) => [p.y * state.x / spec.x0(), p.k_v, p.k_eps],
        None => {
            let k_eps =
                p_quantile(pricer, state.x, state.v, spec.epsilon(), spec.var_floor())?;
            [state.x, 0.8 * k_eps, k_eps]
        }
    };
    let out = levenberg_marquardt(&nls, start, cfg)?;
    finish_solve(pricer, spec, &nls, out, state.t, state.v, Some(lambda_eps))
}

/// `pi_c = pi_u * y * D_y / D` at the solved point.
pub fn constrained_strategy(
    pricer: &Pricer,
    params: &DerivativeParams,
    t: f64,
    v: f64,
) -> Result<f64> {
    let pi_u = pricer.closed_form().pi_u(pricer.t_end() - t);
    Ok(pi_u * params.y * pricer.h_delta(params, t, v)? / pricer.h_b(params, t, v)?)
}

/// Absolute parameter distance under which two converged iterates count as
/// the same root. Must exceed the parameter-space scatter implied by the
/// residual tolerances (the vega equation pins `k_v` only to ~0.1).
const ROOT_DEDUP_DISTANCE: f64 = 0.5;

/// Multi-start diagnostic for root multiplicity: runs the time-zero solve
/// from `n_starts` perturbed initial guesses and returns the distinct
/// converged roots.
pub fn find_roots_multistart(
    pricer: &Pricer,
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    n_starts: usize,
    seed: u64,
) -> Result<Vec<SolveResult>> {
    let check = check_binding(pricer, spec)?;
    if !check.binding {
        return Ok(vec![identity_result(pricer, spec, spec.x0(), pricer.t_end())]);
    }
    let v0 = pricer.model().v0();
    let nls = Nls {
        pricer,
        spec,
        t: 0.0,
        x_target: spec.x0(),
        v: v0,
        third: ThirdEquation::VarProbability { eps: spec.epsilon() },
        utility_scale: utility_scale(spec),
    };
    let base = initial_guess(pricer, spec)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut roots: Vec<SolveResult> = Vec::new();
    for i in 0..n_starts {
        let start = if i == 0 {
            base
        } else {
            [
                base[0] * rng.gen_range(0.9..1.1),
                spec.var_floor() * rng.gen_range(0.1..0.9),
                spec.var_floor() * rng.gen_range(0.3..1.0),
            ]
        };
        let Ok(out) = levenberg_marquardt(&nls, start, cfg) else { continue };
        if !out.converged {
            continue;
        }
        let Ok(res) = finish_solve(pricer, spec, &nls, out, 0.0, v0, None) else { continue };
        let dup = roots.iter().any(|r| {
            (r.params.y - res.params.y).abs() < ROOT_DEDUP_DISTANCE
                && (r.params.k_v - res.params.k_v).abs() < ROOT_DEDUP_DISTANCE
                && (r.params.k_eps - res.params.k_eps).abs() < ROOT_DEDUP_DISTANCE
        });
        if !dup {
            roots.push(res);
        }
    }
    Ok(roots)
}
