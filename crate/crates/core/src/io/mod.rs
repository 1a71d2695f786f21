//! Binary codecs for datasets and channel statistics. Checkpoints live with
//! the networks.

mod covariance;
mod dataset;
mod reader;

pub use covariance::{decode_covariance, encode_covariance, read_covariance, write_covariance, COVARIANCE_MAGIC};
pub use dataset::{decode_dataset, encode_dataset, read_dataset, write_dataset, DatasetWriter, DATASET_MAGIC};
