//! Classical dynamics of light in a double cavity split by a thin moveable
//! dielectric membrane.
//!
//! The crate solves the static eigenproblem of the double cavity (a
//! delta-function membrane between two perfect end mirrors), extracts
//! avoided-crossing parameters, and integrates constant-velocity membrane
//! sweeps under three equation sets of decreasing fidelity: the adiabatic
//! second-order equations (ASOE), the diabatic second-order equations (DSOE)
//! and the diabatic first-order (Landau-Zener) equations (DFOE). Observables
//! include field energy, radiation pressure on the membrane and the work done
//! by the membrane on the field.

pub mod couplings;
pub mod dynamics;
pub mod error;
pub mod modes;
pub mod observables;
pub mod quantum;
pub mod scenario;

pub use error::{Error, Result};

/// Speed of light in vacuum [m/s].
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Vacuum permittivity [F/m].
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
