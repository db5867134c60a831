//! Scenario files: strict JSON with schema versioning.

use std::path::Path;

use serde::Deserialize;

use krein_core::measure::{Interval, Measure};

pub const SCHEMA_VERSION: u32 = 1;

/// A batch scenario. Unknown fields are rejected: silent misconfiguration is
/// the main operational risk in a numerics CLI.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub measure: Measure,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default = "default_epsilon_ladder")]
    pub epsilon_ladder: Vec<f64>,
    #[serde(default = "default_discretization")]
    pub discretization: usize,
    #[serde(default)]
    pub interval: Option<Interval>,
    /// Dyadic depth for the A2 candidate grid.
    #[serde(default = "default_dyadic_depth")]
    pub dyadic_depth: u32,
    /// Coefficient count for the Jacobi command.
    #[serde(default = "default_jacobi_n")]
    pub jacobi_n: usize,
    /// Increasing t-grid for superlevel diagnostics.
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    /// Weight-rescaling factor c for the rigidity experiment (nu -> c^2 nu).
    #[serde(default)]
    pub rigidity_rescale: Option<f64>,
}

fn default_epsilon_ladder() -> Vec<f64> {
    (0..=6).map(|k| 10f64.powi(-k)).collect()
}

fn default_discretization() -> usize {
    64
}

fn default_dyadic_depth() -> u32 {
    12
}

fn default_jacobi_n() -> usize {
    50
}

/// Which pipeline to dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[clap(rename_all = "lowercase")]
pub enum Command {
    Perturb,
    Vmatrix,
    Teps,
    A2,
    Jacobi,
    Criterion,
    All,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Perturb => "perturb",
            Command::Vmatrix => "vmatrix",
            Command::Teps => "teps",
            Command::A2 => "a2",
            Command::Jacobi => "jacobi",
            Command::Criterion => "criterion",
            Command::All => "all",
        }
    }

    fn needs_alphas(&self) -> bool {
        !matches!(self, Command::Jacobi)
    }
}

/// Parse and validate a scenario file against a command's requirements.
pub fn parse_scenario(path: &Path, command: Command) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read scenario {}: {e}", path.display()))?;
    let scenario: Scenario = serde_json::from_str(&text)
        .map_err(|e| format!("malformed scenario {} (line {}): {e}", path.display(), e.line()))?;
    validate(&scenario, command)?;
    Ok(scenario)
}

fn validate(s: &Scenario, command: Command) -> Result<(), String> {
    if s.schema_version != SCHEMA_VERSION {
        return Err(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            s.schema_version
        ));
    }
    if s.name.is_empty() {
        return Err("scenario violates: name nonempty".into());
    }
    if command.needs_alphas() && s.alphas.is_empty() {
        return Err(format!(
            "scenario violates: alphas nonempty for `{}`",
            command.name()
        ));
    }
    if s.epsilon_ladder.is_empty()
        || s.epsilon_ladder.iter().any(|&e| !(e > 0.0))
        || s.epsilon_ladder.windows(2).any(|w| w[0] <= w[1])
    {
        return Err("scenario violates: epsilon_ladder strictly decreasing and positive".into());
    }
    if s.discretization < 1 {
        return Err("scenario violates: discretization >= 1".into());
    }
    if let Some(grid) = &s.t_grid {
        if grid.is_empty() || grid.iter().any(|&t| !(t > 0.0)) || grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err("scenario violates: t_grid strictly increasing and positive".into());
        }
    }
    if let Some(c) = s.rigidity_rescale {
        if !(c > 0.0) || !c.is_finite() {
            return Err("scenario violates: rigidity_rescale > 0".into());
        }
    }
    if matches!(command, Command::Criterion | Command::All) && s.alphas.iter().any(|&a| a == 0.0) {
        return Err("scenario violates: criterion verdicts require alpha != 0".into());
    }
    if matches!(command, Command::Criterion)
        && s.interval.is_none()
        && s.measure.ac_pieces().is_empty()
    {
        return Err(
            "scenario violates: `criterion` needs an interval or an a.c. piece".into(),
        );
    }
    if s.measure.is_zero() {
        return Err("scenario violates: measure must be nonzero".into());
    }
    Ok(())
}

impl Scenario {
    /// Default t-grid: 21 log-spaced points over [1e1, 1e5].
    pub fn t_grid_or_default(&self) -> Vec<f64> {
        self.t_grid.clone().unwrap_or_else(|| {
            (0..21).map(|k| 10f64.powf(1.0 + 0.2 * k as f64)).collect()
        })
    }
}
