//! Solvers for chemotactic Cucker-Smale dynamics at three scales: particles,
//! a kinetic (Vlasov) density and a pressureless/pressured Euler system, plus
//! tools to compare the kinetic and hydrodynamic descriptions.

pub mod chemotaxis;
pub mod compare;
pub mod euler;
pub mod error;
pub mod grid;
pub mod initial;
pub mod kernel;
pub mod linalg;
pub mod particles;
pub mod time;
pub mod vlasov;

pub use error::{Error, Result};
