//! Sign-changing and semi-nodal solutions of the coupled cubic Schrödinger
//! system
//!
//! ```text
//! −Δu₁ + λ₁u₁ = μ₁u₁³ + βu₁u₂²,
//! −Δu₂ + λ₂u₂ = μ₂u₂³ + βu₁²u₂,   u₁ = u₂ = 0 on ∂Ω,
//! ```
//!
//! found as limits of a descending flow on the product of `L⁴` unit spheres.

pub mod cli;
pub mod error;
pub mod flow;
pub mod functional;
pub mod grid;
pub mod linear;
pub mod seeds;

pub use error::{Error, Result};
pub use flow::{run_flow, Classification, FlowConfig, FlowResult, PhysicalSolution};
pub use functional::{Mode, StatePair, SystemParams};
pub use grid::{Field, GridDomain, Shape};
pub use linear::CgOptions;
