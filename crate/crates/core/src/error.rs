//! Error type shared across the library.

use thiserror::Error;

/// Errors produced by model validation, the ODE/Fourier layer and the solver.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A model or preference parameter failed its validity check.
    #[error("invalid parameter `{name}`: {reason} (got {value})")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
        value: f64,
    },

    /// Feller condition kappa*theta > sigma^2/2 violated.
    #[error("Feller condition violated: kappa*theta = {kappa_theta} <= sigma^2/2 = {half_sigma_sq}")]
    FellerViolated { kappa_theta: f64, half_sigma_sq: f64 },

    /// Well-posedness condition of the unconstrained problem (Kraft 2005) violated,
    /// i.e. k1^2 - k0*k2 <= 0 and the affine closed forms are undefined.
    #[error("Kraft condition violated: k1^2 - k0*k2 = {discriminant} <= 0")]
    KraftViolated { discriminant: f64 },

    /// The equivalent-martingale-measure change is invalid (kappa_tilde <= 0).
    #[error("measure change invalid: kappa_tilde(t={t}) = {kappa_tilde} <= 0")]
    MeasureChangeInvalid { t: f64, kappa_tilde: f64 },

    /// A Riccati trajectory left the finite range during integration.
    #[error("Riccati integration blew up at tau={tau} for u={u_re}+{u_im}i")]
    OdeBlowUp { u_re: f64, u_im: f64, tau: f64 },

    /// The characteristic function has not decayed enough at the truncation
    /// frequency; the quadrature would be unreliable.
    #[error("quadrature tail too heavy: |phi(u_max={u_max})| = {tail} > {threshold}")]
    QuadratureTail { u_max: f64, tail: f64, threshold: f64 },

    /// Fourier-inverted density came out more negative than truncation ripple allows.
    #[error("density negative beyond ripple tolerance at z={z}: {value}")]
    DensityNegative { z: f64, value: f64 },

    /// Density in a denominator is below the support floor.
    #[error("density {value} below floor {floor}; ratio undefined")]
    DensityBelowFloor { value: f64, floor: f64 },

    /// The nonlinear solver ran out of iterations.
    #[error("solver did not converge after {iterations} iterations; residuals (budget, vega, third) = ({budget}, {vega}, {third})")]
    NonConvergence {
        iterations: usize,
        budget: f64,
        vega: f64,
        third: f64,
    },

    /// The solver was pinned to the boundary of the admissible box with a large
    /// residual, which signals an infeasible constraint configuration.
    #[error("problem looks infeasible: iterate pinned to box boundary with residuals (budget, vega, third) = ({budget}, {vega}, {third})")]
    Infeasible { budget: f64, vega: f64, third: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
