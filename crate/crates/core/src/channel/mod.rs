//! MIMO-OFDM link simulation: fading channels, precoding, resource grids and
//! noisy reception.

mod config;
mod fading;
mod link;
pub(crate) mod pilots;
mod precode;
mod resource;

pub use config::{SimConfig, SPEED_OF_LIGHT_MPS};
pub use fading::{generate_channel, ChannelRealization, Tap};
pub use link::{ebno_to_noise_var, restrict_to_pilots, transmit, transmit_equivalent, Reception};
pub use pilots::{PilotPattern, DEFAULT_PILOT_SYMBOLS};
pub use precode::{dominant_eigenvectors, equivalent_channel, svd_precode, wideband_covariance};
pub use resource::{build_grid, qpsk_map, ResourceGrid, QPSK_BITS};

