//! Pilot-based least-squares estimation, belief information, classical
//! interpolators and the NMSE metric.

mod belief;
mod interp;
mod lmmse;
mod ls;
mod metric;

pub use belief::{compute_belief, genie_belief, per_antenna_power, BeliefVector};
pub use interp::{interpolate, interpolate_1d, InterpMode, Interpolated};
pub use lmmse::{
    estimate_covariance, lmmse_interpolate, sample_warning, CovarianceAccumulator, CovarianceModel, LmmseFilter,
};
pub use ls::{ls_estimate, PilotEstimate};
pub use metric::{nmse, nmse_db, Nmse, NmseAccumulator, NMSE_FLOOR_DB};
