//! Spectral-Galerkin synthesis, certification and simulation of explicit
//! proportional boundary feedback for the linearized conserved phase-field
//! (Cahn–Hilliard) system on intervals and rectangles.

pub mod basis;
pub mod closed_loop;
pub mod error;
pub mod feedback;
pub mod lifting;
pub mod spectrum;

pub use error::{Error, Result};
