//! Simulation and surrogate-modeling toolkit for a 1D linear waveguide with
//! two local cubic-nonlinear asymmetric gates.
//!
//! The crate integrates the normalized lattice equations of the gated
//! waveguide, computes energy-based transmissibility and non-reciprocity
//! measures, generates randomized design-space datasets, trains a
//! feed-forward surrogate predicting those measures, and quantifies design
//! robustness via inscribed-square kernel sizes.
//!
//! - [`model`]: configuration, dispersion relation, presets, validation.
//! - [`sim`]: lattice right-hand side, fixed-step RK4 integration, energy
//!   accumulators and region energies.
//! - [`analysis`]: transmissibility/non-reciprocity measures, Fourier
//!   spectra, branch classification.
//! - [`sweep`]: seeded design-space campaigns and damping sweeps with
//!   continuation.
//! - [`surrogate`]: the feed-forward surrogate, its training and evaluation
//!   protocol, and kernel-size robustness maps.

pub mod analysis;
pub mod model;
pub mod sim;
pub mod surrogate;
pub mod sweep;

pub use analysis::{classify, is_desirable, measures, spectrum, BranchLabel, MeasurePair, Spectrum};
pub use model::{omega_hat, passband, preset, validate, Direction, WaveguideConfig};
pub use sim::{integrate, integrate_from, region_energies, LatticeState, SimOutcome};
pub use surrogate::{evaluate, kernel_size, robustness_map, train, SurrogateModel};
pub use sweep::{damping_sweep, generate_dataset, SweepRecord, SweepSpec};
