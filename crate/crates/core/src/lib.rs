//! Hydrodynamic moment models for charge carriers on a two-dimensional
//! Dirac cone, closed with the maximum-entropy distribution for
//! Fermi-Dirac statistics.
//!
//! Everything runs in scaled units: the Fermi speed, hbar and k_B are all 1,
//! so momenta are measured in k_B*T_ref/c, densities in (k_B*T_ref/(hbar c))^2
//! and energies in k_B*T_ref for whatever reference temperature the caller
//! picks. The thermal density at temperature T is `T^2/(2 pi)`.
//!
//! Module map:
//! - [`special`]: Fermi-Dirac integrals, modified Bessel functions, and the
//!   angular moment integrals the closure is built from.
//! - [`closure`]: moment state <-> Lagrange multipliers, and the stress /
//!   potential-coupling / energy-flux tensors in the exact, non-degenerate,
//!   strongly degenerate and diffusive regimes.
//! - [`oracle`]: brute-force momentum-space quadrature of the same moments,
//!   used as an independent reference for the closure formulas.
//! - [`grid`]: grids, fields, potentials, band configuration.
//! - [`hydro`]: finite-volume solver for the hyperbolic moment system,
//!   collimation (unit-speed) limits, and a hyperbolicity probe.
//! - [`diffusion`]: drift-diffusion limit solvers and the relaxation study.
//! - [`scenario`]: plain-text scenario configs, runs, CSV snapshots.

pub mod closure;
pub mod diffusion;
pub mod error;
pub mod grid;
pub mod hydro;
pub mod oracle;
pub mod quad;
pub mod scenario;
pub mod special;
pub mod tensor;

pub use error::{ClosureError, ConfigError, OracleError, RunError, SolverError, SpecialError};
