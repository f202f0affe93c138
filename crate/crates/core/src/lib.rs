//! Simulation of two cavity modes entangled through a driven four-level atom.
//!
//! The crate models a single atom coupled to two cavity modes, where a
//! two-photon exchange channel transfers photon pairs between the modes and
//! drives them toward maximally entangled states. Three model tiers are
//! provided: the full atom-field Hamiltonian, a two-level reduction after
//! adiabatic elimination of the singly excited states, and an effective
//! pair-exchange Hamiltonian acting on the field alone.
//!
//! Modules are layered bottom-up:
//!
//! * [`hilbert`] fixes the truncated state space and its tensor structure.
//! * [`model`] builds Hamiltonians, collapse operators, and regime checks.
//! * [`evolve`] propagates pure states and density matrices in time.
//! * [`observe`] extracts populations, entropy, and Bell-state fidelity.
//! * [`oracle`] carries closed-form solutions used to cross-check dynamics.
//! * [`runner`] wires scenarios, config files, sweeps, and CSV output.
//!
//! Throughout the crate `hbar = 1` and the atom-field coupling sets the unit
//! of frequency, so all times are in units of the inverse coupling.

pub mod evolve;
pub mod hilbert;
pub mod model;
pub mod observe;
pub mod oracle;
pub mod runner;

/// Complex scalar used for every amplitude and matrix entry in the crate.
pub use num_complex::Complex64 as C64;
