//! Simulation engine for flux-tunable transmon systems.
//!
//! The crate builds lumped-element circuit Hamiltonians and their effective
//! approximations for one- and two-qubit superconducting devices, solves
//! the time-dependent Schroedinger equation with a second-order product
//! formula, and drives the parameter scans used to calibrate and compare
//! single-qubit (X) and two-qubit (Iswap, Cz) gate transitions.

pub mod circuit;
pub mod device;
pub mod effective;
pub mod experiments;
pub mod numerics;
pub mod operators;
pub mod propagator;
pub mod pulse;

pub use device::{DeviceSpec, load_device_spec};
pub use numerics::{ComplexMatrix, SpectralFactorization, StateVector};
pub use operators::{StateLabel, TermSeries};
pub use propagator::{PropagationPlan, Trajectory, converge_tau, propagate};
pub use pulse::FluxPulse;
