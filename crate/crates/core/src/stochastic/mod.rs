//! Monte Carlo engine: telegraph trajectories, phase integration through
//! pulse trains, engineered flip-trace ensembles and differential readout.

mod engineered;
mod mc;
mod phase;
mod readout;
mod trace;

pub use engineered::{engineered_traces, TraceEnsemble, TraceRecord};
pub use mc::{mc_coherence, McResult};
pub use phase::{phase_integrate, phase_integrate_at, VelocityMap};
pub use readout::{
    analytic_manifolds, differential_from_manifolds, differential_signal, DifferentialReadout, ManifoldSeries,
    RamseyConfig, ReadoutErrorModel,
};
pub use trace::{sample_trace, RtnTrace};
