//! Monte Carlo oracle for the optimal unconstrained wealth.
//!
//! Simulates `(Z, v)` with a full-truncation Euler scheme,
//!
//! ```text
//! P:  dZ = (r + (pi lambda_bar - pi^2/2) v+) dt + pi sqrt(v+) dW1
//! Q:  dZ = (r - pi^2/2 v+) dt + pi sqrt(v+) dW1
//!     dv = kap (th - v+) dt + sigma sqrt(v+) (rho dW1 + sqrt(1-rho^2) dW2)
//! ```
//!
//! where `v+ = max(v, 0)` enters both drift and diffusion and `(kap, th)`
//! are `(kappa, theta)` under P and the time-dependent
//! `(kappa_tilde, theta_tilde)` under Q. Paths are generated in fixed-size
//! blocks, each with its own ChaCha stream derived from `(seed, block
//! index)`, so batches are bitwise reproducible and independent of the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::charfn::Measure;
use crate::error::{Error, Result};
use crate::model::AffineClosedForm;

/// Paths per RNG block. Fixed so that results do not depend on the worker
/// count.
const BLOCK_PATHS: usize = 4096;

/// Discretization scheme for the variance process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    FullTruncationEuler,
}

/// Simulation request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub measure: Measure,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64, measure: Measure) -> Result<Self> {
        if n_paths == 0 {
            return Err(Error::InvalidParameter {
                name: "n_paths",
                reason: "must be >= 1",
                value: 0.0,
            });
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter {
                name: "n_steps",
                reason: "must be >= 1",
                value: 0.0,
            });
        }
        Ok(Self { n_paths, n_steps, seed, measure, scheme: Scheme::FullTruncationEuler })
    }
}

/// Terminal samples of one simulation.
#[derive(Debug, Clone)]
pub struct PathBatch {
    terminal_logs: Vec<f64>,
    terminal_variances: Vec<f64>,
    measure: Measure,
}

impl PathBatch {
    pub fn terminal_logs(&self) -> &[f64] {
        &self.terminal_logs
    }
    pub fn terminal_variances(&self) -> &[f64] {
        &self.terminal_variances
    }
    pub fn measure(&self) -> Measure {
        self.measure
    }
    pub fn len(&self) -> usize {
        self.terminal_logs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.terminal_logs.is_empty()
    }

    /// Dump terminal samples as CSV (`z,v`).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "z,v")?;
        for (z, v) in self.terminal_logs.iter().zip(&self.terminal_variances) {
            writeln!(w, "{z},{v}")?;
        }
        Ok(())
    }
}

/// Per-step drift/reversion coefficients, shared by all paths.
struct StepCoeffs {
    pi: Vec<f64>,
    /// `pi lambda_bar - pi^2/2` (P) or `-pi^2/2` (Q).
    z_drift: Vec<f64>,
    kap: Vec<f64>,
    th: Vec<f64>,
}

fn step_coeffs(
    cf: &AffineClosedForm,
    measure: Measure,
    t_end: f64,
    t: f64,
    n_steps: usize,
) -> Result<StepCoeffs> {
    let m = cf.model();
    let dt = (t_end - t) / n_steps as f64;
    let mut pi = Vec::with_capacity(n_steps);
    let mut z_drift = Vec::with_capacity(n_steps);
    let mut kap = Vec::with_capacity(n_steps);
    let mut th = Vec::with_capacity(n_steps);
    for i in 0..n_steps {
        let tau_rem = t_end - (t + i as f64 * dt);
        let p = cf.pi_u(tau_rem);
        pi.push(p);
        match measure {
            Measure::P => {
                z_drift.push(p * m.lambda_bar() - 0.5 * p * p);
                kap.push(m.kappa());
                th.push(m.theta());
            }
            Measure::Q => {
                z_drift.push(-0.5 * p * p);
                let kt = cf.kappa_tilde(tau_rem);
                if kt <= 0.0 {
                    return Err(Error::MeasureChangeInvalid { t: t_end - tau_rem, kappa_tilde: kt });
                }
                kap.push(kt);
                th.push(m.kappa() * m.theta() / kt);
            }
        }
    }
    Ok(StepCoeffs { pi, z_drift, kap, th })
}

/// Simulate `(Z(T), v(T))` from state `(y, v)` at calendar time `t`.
pub fn simulate(
    cf: &AffineClosedForm,
    t_end: f64,
    cfg: &SimConfig,
    t: f64,
    y: f64,
    v: f64,
) -> Result<PathBatch> {
    if cfg.n_paths == 0 || cfg.n_steps == 0 {
        return Err(Error::InvalidParameter {
            name: if cfg.n_paths == 0 { "n_paths" } else { "n_steps" },
            reason: "must be >= 1",
            value: 0.0,
        });
    }
    let tau = t_end - t;
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::InvalidParameter { name: "t", reason: "must be < T", value: t });
    }
    let coeffs = step_coeffs(cf, cfg.measure, t_end, t, cfg.n_steps)?;
    let m = cf.model();
    let dt = tau / cfg.n_steps as f64;
    let sq_dt = dt.sqrt();
    let sigma = m.sigma();
    let rho = m.rho();
    let rho_c = (1.0 - rho * rho).max(0.0).sqrt();
    let r = m.r();
    let z0 = y.ln();

    let mut terminal_logs = vec![0.0; cfg.n_paths];
    let mut terminal_variances = vec![0.0; cfg.n_paths];

    terminal_logs
        .par_chunks_mut(BLOCK_PATHS)
        .zip(terminal_variances.par_chunks_mut(BLOCK_PATHS))
        .enumerate()
        .for_each(|(block, (zs, vs))| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(block as u64);
            let normal = StandardNormal;
            for (z_out, v_out) in zs.iter_mut().zip(vs.iter_mut()) {
                let mut z = z0;
                let mut vv = v;
                for i in 0..cfg.n_steps {
                    let vp = vv.max(0.0);
                    let sv = vp.sqrt();
                    let g1: f64 = normal.sample(&mut rng);
                    let g2: f64 = normal.sample(&mut rng);
                    z += (r + coeffs.z_drift[i] * vp) * dt + coeffs.pi[i] * sv * sq_dt * g1;
                    vv += coeffs.kap[i] * (coeffs.th[i] - vp) * dt
                        + sigma * sv * sq_dt * (rho * g1 + rho_c * g2);
                }
                *z_out = z;
                *v_out = vv;
            }
        });

    Ok(PathBatch { terminal_logs, terminal_variances, measure: cfg.measure })
}

/// Discounted sample mean and standard error of `payoff(Y(T))`.
pub fn estimate_price<F: Fn(f64) -> f64>(
    batch: &PathBatch,
    payoff: F,
    r: f64,
    tau: f64,
) -> (f64, f64) {
    let disc = (-r * tau).exp();
    let n = batch.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &z in &batch.terminal_logs {
        let p = payoff(z.exp());
        sum += p;
        sum_sq += p * p;
    }
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (disc * mean, disc * (var / n).sqrt())
}

/// Empirical `P(Y(T) < threshold)` with its binomial standard error.
pub fn estimate_tail_prob(batch: &PathBatch, threshold: f64) -> (f64, f64) {
    let n = batch.len() as f64;
    let hits = batch
        .terminal_logs
        .iter()
        .filter(|&&z| z.exp() < threshold)
        .count() as f64;
    let p = hits / n;
    (p, (p * (1.0 - p) / n).sqrt())
}
