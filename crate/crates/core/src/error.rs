use thiserror::Error;

/// Errors from the special-function layer.
#[derive(Debug, Clone, Error)]
pub enum SpecialError {
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },
    #[error("quadrature for {func} did not reach tolerance {tol:e}: {detail}")]
    QuadratureNonConvergence {
        func: &'static str,
        tol: f64,
        detail: String,
    },
    #[error("root bracket for {func} could not be established: {detail}")]
    BracketFailure { func: &'static str, detail: String },
}

/// Errors from moment <-> multiplier conversion and the closure formulas.
#[derive(Debug, Clone, Error)]
pub enum ClosureError {
    #[error("state outside admissible set: {0}")]
    InvalidState(String),
    #[error("|u| = {u_mag} is at or beyond the collimation bound 1")]
    CollimationSingularity { u_mag: f64 },
    #[error(
        "multiplier solve did not converge: residual {residual:e} after {iterations} iterations (targets |u| = {u_target}, e/sqrt(2 pi n) = {energy_ratio})"
    )]
    NonConvergence {
        residual: f64,
        iterations: usize,
        u_target: f64,
        energy_ratio: f64,
    },
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// Errors from the kinetic reference quadrature.
#[derive(Debug, Clone, Error)]
pub enum OracleError {
    #[error("radial cutoff {cutoff} truncates the distribution: estimated tail fraction {tail_fraction:e} exceeds 1e-12")]
    CutoffTooSmall { cutoff: f64, tail_fraction: f64 },
    #[error("quadrature spec invalid: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Closure(#[from] ClosureError),
}

/// Errors from the hyperbolic and parabolic solvers.
#[derive(Debug, Clone, Error)]
pub enum SolverError {
    #[error("dt = {dt} violates the CFL bound {bound} (cfl factor <= 0.9 of dx/c)")]
    CflViolation { dt: f64, bound: f64 },
    #[error("positivity lost at cell {cell} (t = {time}): {detail}")]
    PositivityLoss {
        cell: usize,
        time: f64,
        detail: String,
    },
    #[error("direction field focusing (caustic) at cell {cell}, t = {time}: {detail}")]
    Caustic {
        cell: usize,
        time: f64,
        detail: String,
    },
    #[error("closure failed at cell {cell}: {source}")]
    ClosureAtCell {
        cell: usize,
        #[source]
        source: ClosureError,
    },
    #[error("invalid solver setup: {0}")]
    InvalidSetup(String),
    #[error("nonlinear solve stalled: {0}")]
    NewtonStall(String),
}

/// A single problem found while parsing a scenario config.
#[derive(Debug, Clone)]
pub struct ConfigIssue {
    /// 1-based line number in the config text; 0 for file-level issues.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

/// Config parsing reports every problem it found, not just the first.
#[derive(Debug, Clone, Error)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{} config error(s):", self.issues.len())?;
        for issue in &self.issues {
            writeln!(f,"  {issue}")?;
        }
        Ok(())
    }
}

/// Top-level error for a scenario run.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numeric failure: {0}")]
    Solver(#[from] SolverError),
    #[error("numeric failure: {0}")]
    Closure(#[from] ClosureError),
    #[error("numeric failure: {0}")]
    Oracle(#[from] OracleError),
    #[error("numeric failure: {0}")]
    Special(#[from] SpecialError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
