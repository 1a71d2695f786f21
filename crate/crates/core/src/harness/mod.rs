//! Data generation, training and evaluation studies.

mod eval;
mod sample;
mod stats;
mod tensors;
mod train;

pub use eval::{
    calibrate_covariance, evaluate, net_id, pilot_sweep, placement_ablation, run_study, score, test_sets, Contender,
    Estimator, ResultRow, ResultTable, CSV_HEADER, SWEEP_PILOTS,
};
pub use sample::{
    generate_dataset, generate_range, generate_sample, sample_channel, sample_plan, Dims, EbnoDraw, Sample,
    SampleContext,
};
pub use stats::{bootstrap_db_ci, bootstrap_diff_db, ks_uniform, mean, mean_std, KsResult, BOOTSTRAP_REPS};
pub use tensors::{from_planes, generate_tensor_set, to_planes, TensorSet};
pub use train::{evaluate_model, fit_nmse_db, train, EpochStats, TrainOutcome};
