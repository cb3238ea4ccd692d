//! Electron–nuclear register master equation.

mod density;
mod liouvillian;
mod register;

pub use density::{initial_density, nuclear_coherence, superposition_density, DensityMatrix, QUBIT_PAIR};
pub use liouvillian::{
    build_liouvillian, lindblad_dd, lindblad_free, propagate, propagate_schedule_density, propagate_with_report,
    pulse_unitary, Liouvillian,
};
pub use register::{
    hermiticity_error, spin_ops, ElectronSpin, RegisterHamiltonian, DEFAULT_FIELD_G, DEFAULT_ZFS_MHZ, NUCLEAR_DIM,
};
