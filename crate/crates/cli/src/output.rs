//! Rendering helpers: 6-significant-digit tables, full-precision CSV rows
//! and JSON payloads.

use serde::Serialize;

use hestonvar::SolveResult;

/// Format to 6 significant digits for table output.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..7).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

/// One solved point, serializable for `--out` files.
#[derive(Debug, Clone, Serialize)]
pub struct SolveOutput {
    pub binding: bool,
    pub eps_u: f64,
    pub pi_u: f64,
    pub pi_c: f64,
    pub y: f64,
    pub k_v: f64,
    pub k_eps: f64,
    pub lambda_eps: f64,
    pub res_budget: f64,
    pub res_vega: f64,
    pub res_third: f64,
    pub iterations: usize,
}

impl SolveOutput {
    pub fn new(res: &SolveResult, eps_u: f64) -> Self {
        Self {
            binding: res.binding,
            eps_u,
            pi_u: res.pi_u,
            pi_c: res.pi_c,
            y: res.params.y,
            k_v: res.params.k_v,
            k_eps: res.params.k_eps,
            lambda_eps: res.lambda_eps,
            res_budget: res.residuals.budget,
            res_vega: res.residuals.vega,
            res_third: res.residuals.third,
            iterations: res.iterations,
        }
    }

    pub fn print_table(&self) {
        println!("binding:     {} (eps_u = {})", if self.binding { "yes" } else { "no" }, sig6(self.eps_u));
        println!("pi_u(0):     {}", sig6(self.pi_u));
        println!("pi_c(0):     {}", sig6(self.pi_c));
        if self.binding {
            println!("y0:          {}", sig6(self.y));
            println!("k_v:         {}", sig6(self.k_v));
            println!("k_eps:       {}", sig6(self.k_eps));
            println!("lambda_eps:  {}", sig6(self.lambda_eps));
            println!(
                "residuals:   budget={} vega={} third={}",
                sig6(self.res_budget),
                sig6(self.res_vega),
                sig6(self.res_third)
            );
            println!("iterations:  {}", self.iterations);
        } else {
            println!("constraint is slack: pi_c = pi_u, identity payoff");
        }
    }
}

/// Fixed column order of sweep CSV files.
pub const SWEEP_HEADER: &str =
    "axis,value,pi_u,pi_c,y,k_v,k_eps,lambda_eps,res_budget,res_vega,res_third,binding,iterations,status";

pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub outcome: Result<SolveOutput, String>,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        match &self.outcome {
            Ok(o) => format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},ok",
                self.axis,
                self.value,
                o.pi_u,
                o.pi_c,
                o.y,
                o.k_v,
                o.k_eps,
                o.lambda_eps,
                o.res_budget,
                o.res_vega,
                o.res_third,
                o.binding,
                o.iterations
            ),
            Err(e) => format!(
                "{},{},,,,,,,,,,,,error: {}",
                self.axis,
                self.value,
                e.replace(',', ";").replace('\n', " ")
            ),
        }
    }
}

pub fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<(), String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}
