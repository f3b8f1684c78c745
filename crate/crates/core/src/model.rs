//! Market model, preferences and the closed-form solution of the
//! unconstrained power-utility problem.
//!
//! The risky asset follows Heston dynamics under the real-world measure P:
//!
//! ```text
//! dS = S [(r + lambda_bar * v) dt + sqrt(v) dW1]
//! dv = kappa (theta - v) dt + sigma sqrt(v) (rho dW1 + sqrt(1-rho^2) dW2)
//! ```
//!
//! For power utility `x^gamma / gamma` the unconstrained value function is
//! exponentially affine, `V(t, y, v) = y^gamma/gamma * exp(a(t) + b(t) v)`,
//! where `b` solves a scalar Riccati equation with constant coefficients
//! `k0..k3` and admits a closed form whenever the Kraft condition holds.
//! Everything downstream (characteristic functions, pricing, the constrained
//! solver) consumes `a`, `b` and the derived quantities defined here.

use crate::error::{Error, Result};

/// Real-world Heston parameters plus the risk-free rate and the equity
/// premium coefficient.
///
/// Validated on construction: a value of this type always satisfies the
/// Feller condition, `lambda_bar > 0`, `v0 > 0` and `rho` in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketModel {
    r: f64,
    lambda_bar: f64,
    kappa: f64,
    theta: f64,
    sigma: f64,
    rho: f64,
    v0: f64,
}

impl MarketModel {
    pub fn new(
        r: f64,
        lambda_bar: f64,
        kappa: f64,
        theta: f64,
        sigma: f64,
        rho: f64,
        v0: f64,
    ) -> Result<Self> {
        fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<()> {
            if !value.is_finite() {
                return Err(Error::InvalidParameter { name, reason: "must be finite", value });
            }
            if !ok {
                return Err(Error::InvalidParameter { name, reason, value });
            }
            Ok(())
        }
        check("r", r, r.is_finite(), "must be finite")?;
        check("lambda_bar", lambda_bar, lambda_bar > 0.0, "must be > 0")?;
        check("kappa", kappa, kappa > 0.0, "must be > 0")?;
        check("theta", theta, theta > 0.0, "must be > 0")?;
        check("sigma", sigma, sigma > 0.0, "must be > 0")?;
        check("rho", rho, (-1.0..=1.0).contains(&rho), "must lie in [-1, 1]")?;
        check("v0", v0, v0 > 0.0, "must be > 0")?;
        if kappa * theta <= sigma * sigma / 2.0 {
            return Err(Error::FellerViolated {
                kappa_theta: kappa * theta,
                half_sigma_sq: sigma * sigma / 2.0,
            });
        }
        Ok(Self { r, lambda_bar, kappa, theta, sigma, rho, v0 })
    }

    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn lambda_bar(&self) -> f64 {
        self.lambda_bar
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn v0(&self) -> f64 {
        self.v0
    }
}

/// Investor preferences and the terminal Value-at-Risk constraint
/// `P(X(T) < var_floor) <= epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    gamma: f64,
    horizon: f64,
    x0: f64,
    var_floor: f64,
    epsilon: f64,
}

impl ProblemSpec {
    pub fn new(gamma: f64, horizon: f64, x0: f64, var_floor: f64, epsilon: f64) -> Result<Self> {
        fn bad(name: &'static str, reason: &'static str, value: f64) -> Error {
            Error::InvalidParameter { name, reason, value }
        }
        if !gamma.is_finite() || gamma == 0.0 || gamma >= 1.0 {
            return Err(bad("gamma", "must be finite, nonzero and < 1", gamma));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(bad("horizon", "must be > 0", horizon));
        }
        if !(x0.is_finite() && x0 > 0.0) {
            return Err(bad("x0", "must be > 0", x0));
        }
        if !(var_floor.is_finite() && var_floor > 0.0) {
            return Err(bad("var_floor", "must be > 0", var_floor));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(bad("epsilon", "must lie in (0, 1)", epsilon));
        }
        Ok(Self { gamma, horizon, x0, var_floor, epsilon })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    /// Investment horizon T in years.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }
    /// VaR floor K on terminal wealth.
    pub fn var_floor(&self) -> f64 {
        self.var_floor
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Relative risk aversion `1 - gamma`.
    pub fn rra(&self) -> f64 {
        1.0 - self.gamma
    }
}

/// True iff the unconstrained problem is well posed for `(m, gamma)`:
///
/// ```text
/// gamma/(1-gamma) * lambda_bar * (kappa*rho/sigma + lambda_bar/2) < kappa^2 / (2 sigma^2)
/// ```
///
/// Equivalent to `k1^2 - k0*k2 > 0` for the Riccati constants below.
pub fn check_kraft_condition(m: &MarketModel, gamma: f64) -> bool {
    let lhs = gamma / (1.0 - gamma)
        * m.lambda_bar
        * (m.kappa * m.rho / m.sigma + m.lambda_bar / 2.0);
    let rhs = m.kappa * m.kappa / (2.0 * m.sigma * m.sigma);
    lhs < rhs
}

/// Closed-form coefficients of the unconstrained value function.
///
/// `a` and `b` are expressed in the horizon variable `tau = T - t`, so that
/// `a(0) = b(0) = 0` corresponds to the terminal time.
#[derive(Debug, Clone, Copy)]
pub struct AffineClosedForm {
    model: MarketModel,
    gamma: f64,
    k0: f64,
    k1: f64,
    k2: f64,
    k3: f64,
}

impl AffineClosedForm {
    /// Fails with [`Error::KraftViolated`] when `k1^2 - k0*k2 <= 0`.
    pub fn new(model: &MarketModel, gamma: f64) -> Result<Self> {
        let om = 1.0 - gamma;
        let k0 = gamma * model.lambda_bar * model.lambda_bar / om;
        let k1 = model.kappa - gamma * model.lambda_bar * model.sigma * model.rho / om;
        let k2 = model.sigma * model.sigma * (1.0 + gamma * model.rho * model.rho / om);
        let disc = k1 * k1 - k0 * k2;
        if disc <= 0.0 {
            return Err(Error::KraftViolated { discriminant: disc });
        }
        Ok(Self { model: *model, gamma, k0, k1, k2, k3: disc.sqrt() })
    }

    pub fn model(&self) -> &MarketModel {
        &self.model
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn constants(&self) -> (f64, f64, f64, f64) {
        (self.k0, self.k1, self.k2, self.k3)
    }

    /// `b(tau)`, written with `exp(-k3 tau)` so it stays finite for any
    /// horizon (the textbook form overflows once `k3 tau` exceeds ~700).
    pub fn b(&self, tau: f64) -> f64 {
        let e = (-self.k3 * tau).exp();
        self.k0 * (1.0 - e) / ((self.k1 + self.k3) + (self.k3 - self.k1) * e)
    }

    /// `a(tau) = gamma r tau + (2 theta kappa / k2) * log(...)`, same
    /// overflow-safe rewrite as [`AffineClosedForm::b`].
    pub fn a(&self, tau: f64) -> f64 {
        let (k1, k2, k3) = (self.k1, self.k2, self.k3);
        let e = (-k3 * tau).exp();
        let log_term =
            (2.0 * k3).ln() + 0.5 * (k1 - k3) * tau - ((k1 + k3) + (k3 - k1) * e).ln();
        self.gamma * self.model.r * tau
            + 2.0 * self.model.theta * self.model.kappa / k2 * log_term
    }

    /// Stationary Riccati root `k0 / (k1 + k3)`, the limit of `b` as
    /// `tau -> infinity`.
    pub fn b_limit(&self) -> f64 {
        self.k0 / (self.k1 + self.k3)
    }

    /// Optimal unconstrained risky fraction with remaining horizon `tau`:
    /// `lambda_bar/(1-gamma) + sigma rho b(tau)/(1-gamma)`.
    pub fn pi_u(&self, tau: f64) -> f64 {
        let om = 1.0 - self.gamma;
        self.model.lambda_bar / om + self.model.sigma * self.model.rho * self.b(tau) / om
    }

    /// Variance risk premium `lambda_v = -sigma sqrt(1-rho^2) b(tau)` that
    /// makes the synthetic derivative vega-neutral. Zero at `tau = 0` and for
    /// `|rho| = 1`.
    pub fn lambda_v(&self, tau: f64) -> f64 {
        let s = (1.0 - self.model.rho * self.model.rho).max(0.0).sqrt();
        -self.model.sigma * s * self.b(tau)
    }

    /// Aggregate premium loading `l(tau) = lambda_v(tau) * sqrt(1-rho^2)`,
    /// the coefficient that actually enters `kappa_tilde`. Equals
    /// `-sigma (1-rho^2) b(tau)`.
    pub fn premium_loading(&self, tau: f64) -> f64 {
        -self.model.sigma * (1.0 - self.model.rho * self.model.rho) * self.b(tau)
    }

    /// Mean-reversion rate under the pricing measure at remaining horizon
    /// `tau`: `kappa_tilde = kappa + sigma lambda_bar rho + sigma l(tau)`.
    pub fn kappa_tilde(&self, tau: f64) -> f64 {
        self.model.kappa
            + self.model.sigma * self.model.lambda_bar * self.model.rho
            + self.model.sigma * self.premium_loading(tau)
    }
}

/// How the variance risk premium entering the measure change is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariancePremium {
    /// The vega-neutrality premium of the constrained solution,
    /// `lambda_v(t) = -sigma sqrt(1-rho^2) b(t)`. This is what the theory
    /// requires and what all pricing uses.
    TimeDependent,
    /// A fixed aggregate loading `l`, so `kappa_tilde = kappa + sigma
    /// (lambda_bar rho + l)`. Only used to reproduce single-number
    /// calibration summaries; note that `l` absorbs the `sqrt(1-rho^2)`
    /// factor (it equals `lambda_v * sqrt(1-rho^2)`).
    ConstantLoading(f64),
}

/// `(kappa_tilde(t), theta_tilde(t))` of the pricing measure, with
/// `theta_tilde = kappa*theta/kappa_tilde` so that
/// `kappa_tilde*theta_tilde == kappa*theta` for all `t`.
///
/// Errors with [`Error::MeasureChangeInvalid`] when `kappa_tilde <= 0`.
pub fn q_measure_params(
    cf: &AffineClosedForm,
    t: f64,
    horizon: f64,
    premium: VariancePremium,
) -> Result<(f64, f64)> {
    let m = cf.model();
    let loading = match premium {
        VariancePremium::TimeDependent => cf.premium_loading(horizon - t),
        VariancePremium::ConstantLoading(l) => l,
    };
    let kappa_tilde = m.kappa + m.sigma * (m.lambda_bar * m.rho + loading);
    if kappa_tilde <= 0.0 {
        return Err(Error::MeasureChangeInvalid { t, kappa_tilde });
    }
    Ok((kappa_tilde, m.kappa * m.theta / kappa_tilde))
}

/// Convenience wrapper: `pi_u` at calendar time `t` for horizon `T`.
pub fn unconstrained_strategy(m: &MarketModel, gamma: f64, t: f64, horizon: f64) -> Result<f64> {
    Ok(AffineClosedForm::new(m, gamma)?.pi_u(horizon - t))
}
