//! Interface identification for nonlocal convection-diffusion problems by
//! shape optimization.

pub mod geometry;
pub mod mesh;
pub mod kernel;
pub mod linalg;
pub mod quadrature;
pub mod nonlocal;
pub mod fem;
pub mod transfer;
pub mod system;
pub mod shapegrad;
pub mod gradcheck;
pub mod optimizer;
pub mod config;
pub mod artifacts;
