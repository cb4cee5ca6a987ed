//! Numerical laboratory for Carleman estimates of the wave operator and the
//! conditional stability of the inverse potential problem
//!
//! ```text
//! ∂ₜ²u − Δu + q(x)u = 0,   recover q from ∂_ν∂ₜu on Γ₀ × (0, T).
//! ```
//!
//! Modules, bottom-up: [`geometry`] (domain, Γ₀, weights ψ and φ),
//! [`grid`] (fields, finite differences, quadrature), [`wave`] (leapfrog
//! solver), [`conjugation`] (conjugated operator, its splitting and the
//! cross terms), [`carleman`] (both sides of the weighted estimate),
//! [`stability`] (twin experiments and the absorption kernel), and
//! [`config`]/[`report`]/[`run`] for the command-line surface.

pub mod carleman;
pub mod config;
pub mod conjugation;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod report;
pub mod run;
pub mod stability;
pub mod wave;

pub use error::{Error, Result};
