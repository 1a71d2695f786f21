//! Belief-gated channel-estimation networks.
//!
//! Two backbones map pilot-resolution LS planes `[B, 2 N_r, N_cp, N_lp]` to
//! full-grid planes `[B, 2 N_r, N_c, N_l]`. Plane `2r` holds the real part of
//! antenna `r`, plane `2r + 1` the imaginary part. Optional belief gates
//! rescale feature channels from the per-antenna SNR.

mod bim;
mod checkpoint;
mod complexity;
mod layout;
mod model;
mod spec;

pub use bim::{bim_forward, bim_scale, bim_tape, standardize_belief, BimParams};
pub use checkpoint::{Checkpoint, TrainingMeta};
pub use complexity::{bim_overhead, count_complexity, Complexity};
pub use layout::{param_layout, ParamInfo};
pub use model::{Model, ModelOutput};
pub use spec::{Backbone, ModelSpec, Placement, Stage};
