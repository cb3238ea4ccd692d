//! Simulation of qubit coherence under random telegraph noise from a two- or
//! three-level fluctuator, with dynamical-decoupling pulse trains.
//!
//! Three engines compute the same quantity by different routes:
//! [`analytic`] propagates the Fourier-space probability vector,
//! [`stochastic`] averages Monte Carlo jump trajectories and [`lindblad`]
//! solves the electron–nuclear master equation. [`fit`] extracts decay times
//! and [`sequence`] turns pulse-sequence text into timed schedules.

pub mod analytic;
pub mod curve;
pub mod error;
pub mod fit;
pub mod lindblad;
pub mod linalg;
pub mod model;
pub mod sequence;
pub mod stochastic;

pub use error::{Error, Result};
pub use model::{make_params, Drive, FluctuatorParams, InitState, Level, Levels, ProbVector};
