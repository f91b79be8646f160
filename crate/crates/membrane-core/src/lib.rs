//! Design of two-dimensional membranes built from a fixed stock of materials.
//!
//! The membrane occupies a planar domain `D`, is clamped along the boundary,
//! and its displacement `u` under a vertical load `f` solves
//! `-Δu + g·u = f` with `u = 0` on `∂D`, where `g ≥ 0` encodes the material
//! density at each point. The compliance-like energy `Φ(g) = ∫ f·u_g`
//! measures how much the membrane yields to the load. Given the multiset of
//! available density values (a *generator*), this crate minimizes or
//! maximizes `Φ` over every arrangement of those values, i.e. over the
//! rearrangement class of the generator, and provides the diagnostics needed
//! to verify the structure of the optima: comonotonicity with the state,
//! threshold (superlevel-set) form of two-material optima, monotonicity and
//! stability of the optimal value in the design parameters, and radial
//! symmetry on disks.
//!
//! The crate is `no_std` (with `alloc`); file formats, configuration, and the
//! command-line front end live in the companion `membrane-opt` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod assumptions;
pub mod domain;
pub mod field;
pub mod optimize;
pub mod pde;

mod error;

pub use error::{Error, Result};

pub use domain::{build_domain, dumbbell_spec_with_measure, Domain, DomainSpec, Shape};
pub use field::{inner, Generator, MonotoneProfile, ScalarField};
pub use pde::{
    energy, energy_identity_residual, gateaux_derivative, solve_poisson, solve_state,
    solve_state_with, variational_value, SolveResult, SolverChoice,
};
pub use assumptions::{check_a1, check_a2, AssumptionReport};
pub use optimize::{
    brute_force_min, comonotonicity_residual, comonotonicity_residual_with_tol, maximize,
    minimize, minimize_shape, multistart, volume_to_cells, BruteForceResult, MultistartReport,
    OptimizationResult, OptimizeOptions, ShapeResult,
};
pub use analysis::{
    alpha_stability, alpha_sweep_checks, alpha_sweep_point, gamma_sweep_checks, gamma_sweep_point,
    radial_profile, sweep_alpha, sweep_gamma, symmetric_difference, validate_alpha_list,
    validate_gamma_list, AlphaStability, AlphaSweep, AlphaSweepChecks, GammaSweep,
    GammaSweepChecks, RadialProfile, SweepRecord,
};
