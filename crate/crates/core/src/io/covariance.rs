use std::path::Path;

use super::reader::{put_complex, read_file, Reader};
use crate::classical::{sample_warning, CovarianceModel};
use crate::error::{Error, Result};

pub const COVARIANCE_MAGIC: &[u8; 7] = b"BIMCOV1";
const VERSION: u32 = 1;
const WHAT: &str = "covariance";

pub fn encode_covariance(c: &CovarianceModel) -> Vec<u8> {
    let d = c.dim();
    let mut out = COVARIANCE_MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&c.config_hash.to_le_bytes());
    out.extend_from_slice(&(c.n_c as u32).to_le_bytes());
    out.extend_from_slice(&(c.n_l as u32).to_le_bytes());
    out.extend_from_slice(&c.sample_count.to_le_bytes());
    out.extend_from_slice(&c.epsilon.to_le_bytes());
    out.reserve(8 * (d + d * d));
    put_complex(&mut out, &c.mean);
    put_complex(&mut out, &c.r_gg);
    out
}

pub fn decode_covariance(bytes: &[u8]) -> Result<CovarianceModel> {
    let mut r = Reader::new(WHAT, bytes);
    r.magic(COVARIANCE_MAGIC)?;
    r.version(VERSION)?;
    let config_hash = r.u64("config hash")?;
    let n_c = r.u32("n_c")? as usize;
    let n_l = r.u32("n_l")? as usize;
    let sample_count = r.u64("sample count")?;
    let epsilon = r.f64("epsilon")?;
    let d = n_c * n_l;
    let mean = r.complex(d, "mean")?;
    let r_gg = r.complex(d * d, "covariance")?;
    r.finish()?;
    if sample_count == 0 {
        return Err(Error::Malformed {
            what: WHAT,
            detail: "zero sample count".into(),
        });
    }
    Ok(CovarianceModel {
        n_c,
        n_l,
        config_hash,
        sample_count,
        epsilon,
        mean,
        r_gg,
        warning: sample_warning(sample_count),
    })
}

pub fn write_covariance(path: &Path, c: &CovarianceModel) -> Result<()> {
    std::fs::write(path, encode_covariance(c))?;
    Ok(())
}

/// Reads a cache file and checks it was built for `config_hash`.
pub fn read_covariance(path: &Path, config_hash: Option<u64>) -> Result<CovarianceModel> {
    let c = decode_covariance(&read_file(path, "run `bimce evaluate --estimator lmmse` to build it")?)?;
    if let Some(h) = config_hash {
        if c.config_hash != h {
            return Err(Error::Malformed {
                what: WHAT,
                detail: format!("built for config {:016x}, current config is {h:016x}", c.config_hash),
            });
        }
    }
    Ok(c)
}
