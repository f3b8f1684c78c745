//! Scenario files: a human-editable TOML description of the market, the
//! investor and the numerics, validated into core types on load.

use serde::{Deserialize, Serialize};

use hestonvar::{Dampening, FourierConfig, MarketModel, ProblemSpec, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub market: MarketSection,
    pub problem: ProblemSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub mc: McSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub r: f64,
    pub lambda_bar: f64,
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub rho: f64,
    pub v0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub gamma: f64,
    pub horizon: f64,
    pub x0: f64,
    pub var_floor: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    /// RK4 steps over the full horizon; the step is `horizon / ode_steps`.
    pub ode_steps: usize,
    pub n_freq: usize,
    pub u_max: f64,
    pub tail_tol: f64,
    pub alpha_put: f64,
    pub alpha_digital: f64,
    /// Budget tolerance, relative to x0.
    pub tol_budget: f64,
    /// Vega tolerance, relative to x0.
    pub tol_vega: f64,
    /// Absolute tolerance of the VaR probability equation.
    pub tol_prob: f64,
    /// Tolerance of the multiplier equation at t > 0, relative to the
    /// utility scale |x0^gamma / gamma|.
    pub tol_third: f64,
    pub max_iterations: usize,
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self {
            ode_steps: 10_000,
            n_freq: 4096,
            u_max: 200.0,
            tail_tol: 1e-6,
            alpha_put: 2.0,
            alpha_digital: 0.5,
            tol_budget: 1e-4,
            tol_vega: 1e-4,
            tol_prob: 1e-5,
            tol_third: 1e-5,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub n_paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
}

impl Default for McSection {
    fn default() -> Self {
        Self { n_paths: 1_000_000, steps_per_year: 500, seed: 20_240_811 }
    }
}

/// A loaded and validated scenario.
pub struct Scenario {
    pub file: ScenarioFile,
    pub model: MarketModel,
    pub spec: ProblemSpec,
    pub fourier: FourierConfig,
    pub dampening: Dampening,
    pub solver: SolverConfig,
}

/// Environment variables that override numerics knobs after the file loads.
const ENV_OVERRIDES: [(&str, EnvKnob); 5] = [
    ("HESTONVAR_ODE_STEPS", EnvKnob::OdeSteps),
    ("HESTONVAR_N_FREQ", EnvKnob::NFreq),
    ("HESTONVAR_U_MAX", EnvKnob::UMax),
    ("HESTONVAR_TAIL_TOL", EnvKnob::TailTol),
    ("HESTONVAR_MAX_ITER", EnvKnob::MaxIter),
];

#[derive(Clone, Copy)]
enum EnvKnob {
    OdeSteps,
    NFreq,
    UMax,
    TailTol,
    MaxIter,
}

fn apply_env_overrides(n: &mut NumericsSection) -> Result<(), String> {
    for (name, knob) in ENV_OVERRIDES {
        let Ok(raw) = std::env::var(name) else { continue };
        let parse_err = |e: String| format!("invalid {name}={raw}: {e}");
        match knob {
            EnvKnob::OdeSteps => {
                n.ode_steps = raw.parse().map_err(|e: std::num::ParseIntError| {
                    parse_err(e.to_string())
                })?
            }
            EnvKnob::NFreq => {
                n.n_freq = raw.parse().map_err(|e: std::num::ParseIntError| {
                    parse_err(e.to_string())
                })?
            }
            EnvKnob::UMax => {
                n.u_max = raw.parse().map_err(|e: std::num::ParseFloatError| {
                    parse_err(e.to_string())
                })?
            }
            EnvKnob::TailTol => {
                n.tail_tol = raw.parse().map_err(|e: std::num::ParseFloatError| {
                    parse_err(e.to_string())
                })?
            }
            EnvKnob::MaxIter => {
                n.max_iterations = raw.parse().map_err(|e: std::num::ParseIntError| {
                    parse_err(e.to_string())
                })?
            }
        }
    }
    Ok(())
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self, String> {
        let mut file = file;
        apply_env_overrides(&mut file.numerics)?;
        let m = &file.market;
        let model =
            MarketModel::new(m.r, m.lambda_bar, m.kappa, m.theta, m.sigma, m.rho, m.v0)
                .map_err(|e| e.to_string())?;
        let p = &file.problem;
        let spec = ProblemSpec::new(p.gamma, p.horizon, p.x0, p.var_floor, p.epsilon)
            .map_err(|e| e.to_string())?;
        if !hestonvar::check_kraft_condition(&model, spec.gamma()) {
            return Err("Kraft condition violated for (market, gamma)".to_string());
        }
        let n = &file.numerics;
        if n.ode_steps == 0 || n.n_freq < 2 || n.u_max.is_nan() || n.u_max <= 0.0 {
            return Err("numerics: ode_steps >= 1, n_freq >= 2, u_max > 0 required".into());
        }
        let fourier = FourierConfig {
            n_freq: n.n_freq,
            u_max: n.u_max,
            ode_step: spec.horizon() / n.ode_steps as f64,
            tail_tol: n.tail_tol,
        };
        let dampening =
            Dampening::new(n.alpha_put, n.alpha_digital).map_err(|e| e.to_string())?;
        let solver = SolverConfig {
            tol_budget: n.tol_budget,
            tol_vega: n.tol_vega,
            tol_prob: n.tol_prob,
            tol_third: n.tol_third,
            max_iterations: n.max_iterations,
        };
        Ok(Self { file, model, spec, fourier, dampening, solver })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let file: ScenarioFile =
            toml::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))?;
        Self::from_file(file)
    }

}
