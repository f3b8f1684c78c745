//! Command-line front end: scenario files in, solves/sweeps/verification out.
//!
//! Exit codes: 0 success, 2 validation failure, 3 non-convergence,
//! 4 verification failure.

mod output;
mod scenario;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hestonvar::{check_binding, solve_nls0_warm, DerivativeParams, Error, Pricer};
use output::{sig6, SolveOutput, SweepRow, SWEEP_HEADER};
use scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "hestonvar",
    version,
    about = "VaR-constrained power-utility portfolios under Heston dynamics"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the time-zero system for one scenario.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        /// Write the result as JSON (.json) or a one-row CSV (.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Re-solve along a parameter grid, warm-starting from the previous point.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated grid values, ascending.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        grid: Vec<f64>,
        /// Write all rows as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run the MC-vs-Fourier verification suite and report pass/fail checks.
    Verify {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the Monte Carlo path count of the scenario.
        #[arg(long)]
        paths: Option<usize>,
        /// Override the Monte Carlo seed of the scenario.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the checks as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Epsilon,
    Rra,
    Horizon,
    Rho,
    KappaSigmaScale,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Epsilon => "epsilon",
            Axis::Rra => "rra",
            Axis::Horizon => "horizon",
            Axis::Rho => "rho",
            Axis::KappaSigmaScale => "kappa_sigma_scale",
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
    fn numerics(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

fn solve_failure(e: Error) -> Failure {
    match e {
        Error::InvalidParameter { .. }
        | Error::FellerViolated { .. }
        | Error::KraftViolated { .. }
        | Error::MeasureChangeInvalid { .. } => Failure::validation(e.to_string()),
        _ => Failure::numerics(e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Solve { scenario, out, quiet } => cmd_solve(&scenario, out.as_deref(), quiet),
        Cmd::Sweep { scenario, axis, grid, out, quiet } => {
            cmd_sweep(&scenario, axis, &grid, out.as_deref(), quiet)
        }
        Cmd::Verify { scenario, paths, seed, out, quiet } => {
            cmd_verify(&scenario, paths, seed, out.as_deref(), quiet)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn build_pricer(sc: &Scenario) -> Result<Pricer, Failure> {
    Pricer::new(&sc.model, sc.spec.gamma(), sc.spec.horizon(), sc.fourier, sc.dampening)
        .map_err(solve_failure)
}

fn solve_scenario(sc: &Scenario, warm: Option<&DerivativeParams>) -> Result<SolveOutput, Failure> {
    let pricer = build_pricer(sc)?;
    let binding = check_binding(&pricer, &sc.spec).map_err(solve_failure)?;
    let res = solve_nls0_warm(&pricer, &sc.spec, warm, &sc.solver).map_err(solve_failure)?;
    Ok(SolveOutput::new(&res, binding.eps_u))
}

fn write_out(path: &Path, out: &SolveOutput) -> Result<(), Failure> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => output::write_json(path, out).map_err(Failure::validation),
        Some("csv") => {
            let row = SweepRow { axis: "none".into(), value: 0.0, outcome: Ok(out.clone()) };
            let text = format!("{SWEEP_HEADER}\n{}\n", row.to_csv());
            std::fs::write(path, text)
                .map_err(|e| Failure::validation(format!("cannot write {}: {e}", path.display())))
        }
        _ => Err(Failure::validation(format!(
            "unsupported output extension for {} (use .json or .csv)",
            path.display()
        ))),
    }
}

fn cmd_solve(path: &Path, out: Option<&Path>, quiet: bool) -> Result<(), Failure> {
    let sc = Scenario::load(path).map_err(Failure::validation)?;
    let solved = solve_scenario(&sc, None)?;
    if !quiet {
        solved.print_table();
    }
    if let Some(p) = out {
        write_out(p, &solved)?;
    }
    Ok(())
}

/// Scenario for one sweep grid point; errors are per-point validation text.
fn scenario_at(base: &Scenario, axis: Axis, value: f64) -> Result<Scenario, String> {
    let mut file = base.file.clone();
    match axis {
        Axis::Epsilon => file.problem.epsilon = value,
        Axis::Rra => file.problem.gamma = 1.0 - value,
        Axis::Horizon => file.problem.horizon = value,
        Axis::Rho => file.market.rho = value,
        Axis::KappaSigmaScale => {
            file.market.kappa *= value;
            file.market.sigma *= value;
        }
    }
    Scenario::from_file(file)
}

fn cmd_sweep(
    path: &Path,
    axis: Axis,
    grid: &[f64],
    out: Option<&Path>,
    quiet: bool,
) -> Result<(), Failure> {
    let base = Scenario::load(path).map_err(Failure::validation)?;
    if grid.is_empty() {
        return Err(Failure::validation("sweep grid must be nonempty"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::validation("sweep grid must be strictly ascending"));
    }

    let mut rows: Vec<SweepRow> = Vec::with_capacity(grid.len());
    let mut warm: Option<DerivativeParams> = None;
    // the pricer (and its Riccati tables) is reused while the market,
    // preferences and horizon stay identical along the grid
    type PricerKey = (hestonvar::MarketModel, f64, f64);
    let mut cached: Option<(PricerKey, Pricer)> = None;

    for &value in grid {
        let outcome = (|| -> Result<SolveOutput, String> {
            let sc = scenario_at(&base, axis, value)?;
            let key = (sc.model, sc.spec.gamma(), sc.spec.horizon());
            if !matches!(&cached, Some((prev, _)) if *prev == key) {
                let pricer = Pricer::new(
                    &sc.model,
                    sc.spec.gamma(),
                    sc.spec.horizon(),
                    sc.fourier,
                    sc.dampening,
                )
                .map_err(|e| e.to_string())?;
                cached = Some((key, pricer));
            }
            let (_, pricer) = cached.as_ref().unwrap();
            let binding = check_binding(pricer, &sc.spec).map_err(|e| e.to_string())?;
            let res = solve_nls0_warm(pricer, &sc.spec, warm.as_ref(), &sc.solver)
                .map_err(|e| e.to_string())?;
            if res.binding {
                warm = Some(res.params);
            }
            Ok(SolveOutput::new(&res, binding.eps_u))
        })();
        rows.push(SweepRow { axis: axis.name().to_string(), value, outcome });
    }

    if !quiet {
        println!("{:>12} {:>10} {:>10} {:>10} {:>10} {:>10}", axis.name(), "pi_u", "pi_c", "y", "k_v", "k_eps");
        for row in &rows {
            match &row.outcome {
                Ok(o) => println!(
                    "{:>12} {:>10} {:>10} {:>10} {:>10} {:>10}",
                    sig6(row.value),
                    sig6(o.pi_u),
                    sig6(o.pi_c),
                    sig6(o.y),
                    sig6(o.k_v),
                    sig6(o.k_eps)
                ),
                Err(e) => println!("{:>12} failed: {e}", sig6(row.value)),
            }
        }
    }
    if let Some(p) = out {
        let mut text = String::from(SWEEP_HEADER);
        text.push('\n');
        for row in &rows {
            text.push_str(&row.to_csv());
            text.push('\n');
        }
        std::fs::write(p, text)
            .map_err(|e| Failure::validation(format!("cannot write {}: {e}", p.display())))?;
    }
    if rows.iter().all(|r| r.outcome.is_err()) {
        return Err(Failure::numerics("every sweep point failed"));
    }
    Ok(())
}

fn cmd_verify(
    path: &Path,
    paths: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
    quiet: bool,
) -> Result<(), Failure> {
    let sc = Scenario::load(path).map_err(Failure::validation)?;
    let n_paths = paths.unwrap_or(sc.file.mc.n_paths);
    if n_paths == 0 {
        return Err(Failure::validation("invalid n_paths: must be >= 1"));
    }
    let seed = seed.unwrap_or(sc.file.mc.seed);
    let checks = verify::run(&sc, n_paths, seed).map_err(Failure::validation)?;
    let mut any_failed = false;
    for c in &checks {
        if !c.passed {
            any_failed = true;
        }
        if !quiet || !c.passed {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    println!(
        "verification: {}/{} checks passed",
        checks.iter().filter(|c| c.passed).count(),
        checks.len()
    );
    if let Some(p) = out {
        output::write_json(p, &checks).map_err(Failure::validation)?;
    }
    if any_failed {
        return Err(Failure { code: 4, message: "verification failed".into() });
    }
    Ok(())
}
