//! Slow-fast analysis of the three-species stochastic cyclic Lotka-Volterra
//! model: exact particle dynamics, the deterministic fast flow and its loop
//! geometry, the averaged one-dimensional diffusion for the conserved product
//! `z = x1 x2 x3`, and the statistics used to compare them.

pub mod analysis;
pub mod error;
pub mod fast;
pub mod ode;
pub mod particle;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod simplex;

pub use error::{Error, Result};
pub use fast::{
    action, branch_x2, flow_at, integrate_flow, loop_geometry, loop_roots, mean_m, period,
    slow_generator_apply, time_average, vector_field, FlowTrajectory, LevelFunction, LoopGeometry,
    LoopRoots, LoopTable, Polynomial,
};
pub use simplex::{
    apply_jump, to_point, z_of, CountState, JumpVector, ModelParams, SimplexPoint, Z_MAX,
};
