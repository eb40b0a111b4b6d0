//! Semi-analytic simulation of approximate cloaking by the blow-up of a small
//! ball: special functions, vector spherical harmonics, the transformation
//! map and its materials, per-mode transmission solves and rate experiments.

pub mod experiments;
pub mod mode_solver;
pub mod quadrature;
pub mod specfun;
pub mod transform;
pub mod vsh;
