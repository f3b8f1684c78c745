//! Characteristic functions of the log of the optimal unconstrained wealth.
//!
//! Under both the real-world measure P and the pricing measure Q, the
//! characteristic function of `Z(T) = ln Y(T)` is exponentially affine,
//!
//! ```text
//! phi(u; t, z, v) = exp(A(tau, u) + B(tau, u) v + i u z),      tau = T - t,
//! ```
//!
//! where `A` and `B` solve complex Riccati ODEs with *time-dependent*
//! coefficients (the optimal strategy `pi_u(tau)` and, under Q, the
//! mean-reversion rate `kappa_tilde(tau)` vary with the remaining horizon):
//!
//! ```text
//! P:  B' = sigma^2/2 B^2 + (pi sigma rho iu - kappa) B - pi^2/2 (u^2 + iu) + pi lambda_bar iu
//! Q:  B' = sigma^2/2 B^2 + (pi sigma rho iu - kappa_tilde) B - pi^2/2 (u^2 + iu)
//! both: A' = r iu + kappa theta B            (kappa_tilde theta_tilde = kappa theta)
//! ```
//!
//! with `A(0) = B(0) = 0`. No closed form is attempted; a fixed-step
//! classical Runge-Kutta sweep integrates a whole frequency grid at once and
//! the result is cached as an immutable [`AffineCoeffTable`]. All complex
//! arithmetic stays in `exp` form; no logarithm of `phi` is ever taken.

use num_complex::Complex64;
use rayon::prelude::*;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::AffineClosedForm;

/// Probability measure selector for characteristic functions and densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    /// Real-world measure.
    P,
    /// Pricing measure with the time-dependent premium of the constrained
    /// solution.
    Q,
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Measure::P => write!(f, "P"),
            Measure::Q => write!(f, "Q"),
        }
    }
}

/// Uniform frequency grid on `[0, u_max]` shared by quadratures.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierGrid {
    u: Vec<f64>,
    du: f64,
}

impl FourierGrid {
    pub fn uniform(u_max: f64, n: usize) -> Self {
        assert!(n >= 2 && u_max > 0.0);
        let du = u_max / (n - 1) as f64;
        Self { u: (0..n).map(|i| i as f64 * du).collect(), du }
    }

    pub fn points(&self) -> &[f64] {
        &self.u
    }
    pub fn du(&self) -> f64 {
        self.du
    }
    pub fn u_max(&self) -> f64 {
        *self.u.last().unwrap()
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.u.len() - 1 {
            0.5 * self.du
        } else {
            self.du
        }
    }
}

/// Time samples of the ODE coefficients on the RK4 half-step lattice,
/// shared across every frequency of a sweep.
struct CoeffSamples {
    /// -pi^2/2 at each half step.
    neg_half_pi_sq: Vec<f64>,
    /// pi * sigma * rho at each half step.
    pi_sigma_rho: Vec<f64>,
    /// pi * lambda_bar at each half step (P only; zeros under Q).
    pi_lambda: Vec<f64>,
    /// kappa (P, constant) or kappa_tilde(s) (Q) at each half step.
    kap: Vec<f64>,
    half_sigma_sq: f64,
    r: f64,
    kappa_theta: f64,
}

impl CoeffSamples {
    fn build(cf: &AffineClosedForm, measure: Measure, horizon: f64, n_steps: usize) -> Result<Self> {
        let m = cf.model();
        let h = horizon / n_steps as f64;
        let n_samples = 2 * n_steps + 1;
        let mut neg_half_pi_sq = Vec::with_capacity(n_samples);
        let mut pi_sigma_rho = Vec::with_capacity(n_samples);
        let mut pi_lambda = Vec::with_capacity(n_samples);
        let mut kap = Vec::with_capacity(n_samples);
        for j in 0..n_samples {
            let s = 0.5 * h * j as f64;
            let pi = cf.pi_u(s);
            neg_half_pi_sq.push(-0.5 * pi * pi);
            pi_sigma_rho.push(pi * m.sigma() * m.rho());
            match measure {
                Measure::P => {
                    pi_lambda.push(pi * m.lambda_bar());
                    kap.push(m.kappa());
                }
                Measure::Q => {
                    pi_lambda.push(0.0);
                    let kt = cf.kappa_tilde(s);
                    if kt <= 0.0 {
                        return Err(Error::MeasureChangeInvalid { t: s, kappa_tilde: kt });
                    }
                    kap.push(kt);
                }
            }
        }
        Ok(Self {
            neg_half_pi_sq,
            pi_sigma_rho,
            pi_lambda,
            kap,
            half_sigma_sq: 0.5 * m.sigma() * m.sigma(),
            r: m.r(),
            kappa_theta: m.kappa() * m.theta(),
        })
    }
}

/// RK4 sweep for one complex frequency. `coeff` must cover `n_steps` steps.
fn integrate_single(
    coeff: &CoeffSamples,
    u: Complex64,
    n_steps: usize,
    h: f64,
    horizon: f64,
) -> Result<(Complex64, Complex64)> {
    let iu = Complex64::i() * u;
    let w = u * u + iu; // u^2 + iu, constant along the trajectory
    let mut a = Complex64::ZERO;
    let mut b = Complex64::ZERO;

    let deriv = |j: usize, b: Complex64| -> (Complex64, Complex64) {
        let db = coeff.half_sigma_sq * b * b
            + (coeff.pi_sigma_rho[j] * iu - coeff.kap[j]) * b
            + coeff.neg_half_pi_sq[j] * w
            + coeff.pi_lambda[j] * iu;
        let da = coeff.r * iu + coeff.kappa_theta * b;
        (da, db)
    };

    for i in 0..n_steps {
        let j = 2 * i;
        let (a1, b1) = deriv(j, b);
        let (a2, b2) = deriv(j + 1, b + 0.5 * h * b1);
        let (a3, b3) = deriv(j + 1, b + 0.5 * h * b2);
        let (a4, b4) = deriv(j + 2, b + h * b3);
        a += h / 6.0 * (a1 + 2.0 * (a2 + a3) + a4);
        b += h / 6.0 * (b1 + 2.0 * (b2 + b3) + b4);
        if !(b.re.is_finite() && b.im.is_finite() && a.re.is_finite() && a.im.is_finite()) {
            return Err(Error::OdeBlowUp {
                u_re: u.re,
                u_im: u.im,
                tau: (i + 1) as f64 / n_steps as f64 * horizon,
            });
        }
    }
    Ok((a, b))
}

fn step_count(horizon: f64, ode_step: f64) -> usize {
    ((horizon / ode_step).ceil() as usize).max(1)
}

/// Integrate the Riccati system for a single complex frequency `u` over
/// horizon `tau`, returning `(A(tau, u), B(tau, u))`.
pub fn integrate_riccati(
    cf: &AffineClosedForm,
    measure: Measure,
    u: Complex64,
    tau: f64,
    ode_step: f64,
) -> Result<(Complex64, Complex64)> {
    if tau == 0.0 {
        return Ok((Complex64::ZERO, Complex64::ZERO));
    }
    let n = step_count(tau, ode_step);
    let coeff = CoeffSamples::build(cf, measure, tau, n)?;
    integrate_single(&coeff, u, n, tau / n as f64, tau)
}

/// `phi(u; t, ln_y, v)` for a single complex frequency, integrating on the fly.
pub fn char_fn(
    cf: &AffineClosedForm,
    measure: Measure,
    u: Complex64,
    tau: f64,
    ln_y: f64,
    v: f64,
) -> Result<Complex64> {
    char_fn_with_step(cf, measure, u, tau, ln_y, v, default_ode_step(tau))
}

pub fn char_fn_with_step(
    cf: &AffineClosedForm,
    measure: Measure,
    u: Complex64,
    tau: f64,
    ln_y: f64,
    v: f64,
    ode_step: f64,
) -> Result<Complex64> {
    let (a, b) = integrate_riccati(cf, measure, u, tau, ode_step)?;
    Ok((a + b * v + Complex64::i() * u * ln_y).exp())
}

/// Default ODE step for a given full horizon: `T / 10_000`.
pub fn default_ode_step(horizon: f64) -> f64 {
    (horizon / 10_000.0).max(1e-12)
}

/// Tabulated affine coefficients `(A, B)` for the complex frequencies
/// `u_grid + i*shift` at a fixed measure and horizon.
///
/// Tables are immutable once built and cheap to share across threads.
#[derive(Debug, Clone)]
pub struct AffineCoeffTable {
    measure: Measure,
    horizon: f64,
    shift: f64,
    ode_step: f64,
    u: Vec<f64>,
    du: f64,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

impl AffineCoeffTable {
    /// Integrate the whole grid in one sweep, in parallel over frequencies.
    pub fn build(
        cf: &AffineClosedForm,
        measure: Measure,
        horizon: f64,
        shift: f64,
        grid: &FourierGrid,
        ode_step: f64,
    ) -> Result<Self> {
        let n_pts = grid.points().len();
        let (a, b) = if horizon == 0.0 {
            (vec![Complex64::ZERO; n_pts], vec![Complex64::ZERO; n_pts])
        } else {
            let n = step_count(horizon, ode_step);
            let h = horizon / n as f64;
            let coeff = CoeffSamples::build(cf, measure, horizon, n)?;
            let pairs: Result<Vec<(Complex64, Complex64)>> = grid
                .points()
                .par_iter()
                .map(|&ur| integrate_single(&coeff, Complex64::new(ur, shift), n, h, horizon))
                .collect();
            let pairs = pairs?;
            (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
        };
        Ok(Self {
            measure,
            horizon,
            shift,
            ode_step,
            u: grid.points().to_vec(),
            du: grid.du(),
            a,
            b,
        })
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    /// Imaginary part common to all tabulated frequencies.
    pub fn shift(&self) -> f64 {
        self.shift
    }
    pub fn ode_step(&self) -> f64 {
        self.ode_step
    }
    pub fn u(&self) -> &[f64] {
        &self.u
    }
    pub fn a(&self) -> &[Complex64] {
        &self.a
    }
    pub fn b(&self) -> &[Complex64] {
        &self.b
    }
    pub fn len(&self) -> usize {
        self.u.len()
    }
    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.u.len() - 1 {
            0.5 * self.du
        } else {
            self.du
        }
    }

    /// `phi(u_i + i*shift; ., ln_y, v) = exp(A_i + B_i v + i (u_i + i shift) ln_y)`.
    #[inline]
    pub fn phi_at(&self, i: usize, ln_y: f64, v: f64) -> Complex64 {
        let uc = Complex64::new(self.u[i], self.shift);
        (self.a[i] + self.b[i] * v + Complex64::i() * uc * ln_y).exp()
    }

    /// `|phi|` at the truncation frequency for the evaluation point; the
    /// quadrature is only trusted when this has decayed below the tail
    /// threshold.
    pub fn tail_magnitude(&self, ln_y: f64, v: f64) -> f64 {
        let i = self.u.len() - 1;
        let re = self.a[i].re + self.b[i].re * v - self.shift * ln_y;
        re.exp()
    }

    pub fn check_tail(&self, ln_y: f64, v: f64, threshold: f64) -> Result<()> {
        let tail = self.tail_magnitude(ln_y, v);
        if tail > threshold {
            return Err(Error::QuadratureTail {
                u_max: *self.u.last().unwrap(),
                tail,
                threshold,
            });
        }
        Ok(())
    }

    /// Debug dump as CSV (`u,re_a,im_a,re_b,im_b`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "u,re_a,im_a,re_b,im_b")?;
        for i in 0..self.u.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.u[i], self.a[i].re, self.a[i].im, self.b[i].re, self.b[i].im
            )?;
        }
        Ok(())
    }
}

/// Negative values of the inverted density larger than this (in absolute
/// value) are treated as an error rather than truncation ripple.
pub const DENSITY_RIPPLE_TOL: f64 = 1e-6;

/// Probability density of `Z(T)` at `z` from a shift-zero table:
/// `(1/pi) * sum_i w_i Re[exp(-i u_i z) phi(u_i)]` (the half-line integral
/// doubled by conjugate symmetry). Small negative ripple is clamped to zero.
pub fn density_from_table(
    table: &AffineCoeffTable,
    z: f64,
    ln_y: f64,
    v: f64,
    tail_threshold: f64,
) -> Result<f64> {
    debug_assert_eq!(table.shift(), 0.0, "density needs an undamped table");
    table.check_tail(ln_y, v, tail_threshold)?;
    let mut acc = 0.0;
    for i in 0..table.len() {
        // exp(-iuz) phi = exp(A + Bv + iu(ln_y - z))
        let e = (table.a[i] + table.b[i] * v
            + Complex64::new(0.0, table.u[i] * (ln_y - z)))
        .exp();
        acc += table.weight(i) * e.re;
    }
    let f = acc / std::f64::consts::PI;
    if f < -DENSITY_RIPPLE_TOL {
        return Err(Error::DensityNegative { z, value: f });
    }
    Ok(f.max(0.0))
}
