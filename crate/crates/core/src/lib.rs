//! Numerical toolkit for estrogen-driven tumor growth under control and
//! high-fat diet: forward simulation, two-step parameter calibration against
//! tumor/fat measurements, constant/alternating/optimal aromatase-inhibitor
//! scheduling via a forward-backward sweep solver, and LHS-PRCC global
//! sensitivity analysis.
//!
//! Module map:
//! - [`model`] — parameters, states, right-hand sides of both model variants
//! - [`ode`] — adaptive Dormand–Prince 5(4) integrator with dense output
//! - [`calibration`] — measurement ingestion and the two-step least-squares fit
//! - [`treatment`] — treatment plans, start detection, scenario presets
//! - [`ocp`] — optimal-control solver (adjoints, projection, greedy FBS)
//! - [`sensitivity`] — Latin-hypercube sampling and partial rank correlations
//! - [`simplex`] — bounded Nelder–Mead search used by the calibration fits

pub mod calibration;
pub mod error;
pub mod model;
pub mod ocp;
pub mod ode;
pub mod sensitivity;
pub mod simplex;
pub mod treatment;

pub use error::{Error, Result};
pub use model::{Diet, DietInit, ModelParams, StateBasic, StateExtended};
pub use ode::{integrate, IntegratorConfig, Trajectory};
