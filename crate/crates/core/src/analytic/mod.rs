//! Semiclassical coherence under random telegraph noise: free decay, ideal
//! pulsed propagation, coherence-time extraction and closed forms.

mod eigen;
mod propagate;
mod pulse;
mod t2;

pub use eigen::{closed_form_2lf, eigen_report, EigenReport, TwoLevelClosedForm};
pub use propagate::{
    coherence_dd, coherence_free, coherence_free_curve, coherence_schedule, coherence_schedule_final, cycle_block,
    manifold_coherence_dd, propagate_dd, propagate_schedule, ScheduleSample,
};
pub use pulse::{level_permutation, pulse_operator, PulseOperator};
pub use t2::{
    effective_t2, effective_t2_with, strong_limit_t2star, sweep_t2_vs_tau, t2_rate_2lf, t2_star, t2_star_with,
    weak_t2star_3lf, SweepRow, T2Options,
};
