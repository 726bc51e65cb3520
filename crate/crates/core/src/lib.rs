//! Mesoscale averaging and closure toolkit for one-dimensional particle chains.
//!
//! The pipeline runs a Newton chain with nearest-neighbour power-law forces,
//! averages it onto a coarse mesh with a window function, and compares the
//! exact averaged stresses against closures that only see the mesh data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod chain;
pub mod closure;
pub mod deconv;
pub mod error;
pub mod harness;
pub mod io;
pub mod meso_solver;
pub mod quadrature;
pub mod window;

pub use averaging::{
    average_density, average_momentum, average_velocity, convective_stress_exact,
    interaction_stress_exact, jacobian_at_mesh, JacobianField, MesoField, Quantity,
};
pub use chain::{
    init_oscillatory, init_ramp, init_rest, net_forces, potential_energy, step_verlet,
    total_energy, ChainConfig, ChainState, PowerLawPotential, VerletIntegrator,
};
pub use closure::{
    energy_budget, local_eos, prescribe_positions, prescribe_velocities, stress_conv_zero,
    stress_int_zero, stress_order_n, PrescribedPositions, PrescribedState, StressIntMode,
};
pub use deconv::{
    discrepancy_stop, landweber_reconstruct, reconstruct_j, reconstruct_v, ConvOperator, FineField,
    FineGrid,
};
pub use error::{Error, Result};
pub use meso_solver::{run_closed, step_meso, LocalEos, MesoState, NonlocalZero, StressClosure};
pub use window::{MesoMesh, WindowFunction, WindowKind};
