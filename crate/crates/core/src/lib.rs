//! Optimal investment under a terminal Value-at-Risk constraint in a Heston
//! stochastic-volatility market.
//!
//! The constrained optimum is represented as a synthetic derivative on the
//! optimal *unconstrained* wealth: long the underlying, a put collar between
//! `k_v` and the VaR floor `K`, and a digital-put leg at `k_eps`. The crate
//! provides:
//!
//! - [`model`]: validated market/preference parameters and the closed-form
//!   quantities of the unconstrained problem;
//! - [`charfn`]: Runge-Kutta integration of the complex Riccati systems
//!   behind the characteristic functions of `ln Y(T)` under both measures,
//!   plus Fourier-inverted densities;
//! - [`pricing`]: damped-Fourier prices and Greeks of the derivative legs
//!   and the aggregate budget/vega/VaR functions;
//! - [`solver`]: the nonlinear systems for `(y, k_v, k_eps)`, the VaR
//!   Lagrange multiplier and the constrained strategy;
//! - [`mc`]: a full-truncation Euler Monte Carlo oracle used to validate the
//!   Fourier stack end to end.

pub mod charfn;
pub mod error;
pub mod mc;
pub mod model;
pub mod pricing;
pub mod solver;

pub use charfn::{AffineCoeffTable, FourierGrid, Measure};
pub use error::{Error, Result};
pub use model::{
    check_kraft_condition, q_measure_params, unconstrained_strategy, AffineClosedForm,
    MarketModel, ProblemSpec, VariancePremium,
};
pub use pricing::{Dampening, DerivativeParams, FourierConfig, MarketState, Pricer};
pub use solver::{
    check_binding, constrained_strategy, lagrange_multiplier, solve_nls0, solve_nls0_warm,
    solve_nls_t, BindingCheck, Residuals, SolveResult, SolverConfig, ThirdEquationInputs,
};
