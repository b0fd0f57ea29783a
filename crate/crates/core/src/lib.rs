//! Controllability laboratory for an age- and space-structured two-sex
//! population: forward and adjoint solvers, penalized HUM synthesis, a
//! fixed-point loop for the birth nonlinearity, and observability probes.

pub mod adjoint;
pub mod convergence;
pub mod error;
pub mod field;
pub mod fixpoint;
pub mod forward;
pub mod grid;
pub mod hum;
pub mod krylov;
pub mod obslab;
pub mod ops;
pub mod rates;
pub mod validate;

pub use error::{Error, Result};
pub use field::{Control, Field, SpaceTime, Trajectory};
pub use grid::{ControlWindows, Grid, Interval, Mask, Variant};
pub use rates::{BirthRate, Fertility, RateTable, Saturation, Sex, Survival};
