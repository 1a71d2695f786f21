use std::f64::consts::FRAC_1_SQRT_2;

use super::PilotPattern;
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, C64};

pub const QPSK_BITS: usize = 2;

/// Gray-mapped QPSK with unit energy: bit 0 selects the sign of the real part,
/// bit 1 the sign of the imaginary part, `0 -> +1/sqrt(2)`.
///
/// | b0 b1 | symbol          |
/// |-------|-----------------|
/// | 00    | ( 1 + 1j)/sqrt2 |
/// | 01    | ( 1 - 1j)/sqrt2 |
/// | 10    | (-1 + 1j)/sqrt2 |
/// | 11    | (-1 - 1j)/sqrt2 |
pub fn qpsk_map(b0: u8, b1: u8) -> C64 {
    let re = if b0 == 0 { 1.0 } else { -1.0 };
    let im = if b1 == 0 { 1.0 } else { -1.0 };
    C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Transmit resource grid for all streams.
#[derive(Clone, Debug, PartialEq)]
pub struct ResourceGrid {
    /// `[n_s, n_c, n_l]`
    pub x: ComplexGrid,
    /// `data_mask[k * n_l + l]` marks data resource elements.
    pub data_mask: Vec<bool>,
    pub bits: Vec<u8>,
    pub bits_per_symbol: usize,
}

impl ResourceGrid {
    /// Data resource elements per stream.
    pub fn data_elements(&self) -> usize {
        self.data_mask.iter().filter(|&&d| d).count()
    }
}

/// Places QPSK data on every non-pilot element (subcarrier-major order) and
/// the pattern's pilot symbols on the pilot elements.
pub fn build_grid(bits: &[u8], pattern: &PilotPattern, n_s: usize) -> Result<ResourceGrid> {
    let (n_c, n_l) = (pattern.n_c(), pattern.n_l());
    if pattern.x_p().shape()[0] != n_s {
        return Err(Error::dim(
            "build_grid",
            format!("pilots for {} streams, grid for {n_s}", pattern.x_p().shape()[0]),
        ));
    }
    let pilot_mask = pattern.mask();
    let data_per_stream = n_c * n_l - pattern.total();
    let expected = n_s * data_per_stream * QPSK_BITS;
    if bits.len() != expected {
        return Err(Error::dim(
            "build_grid",
            format!("expected {expected} bits, got {}", bits.len()),
        ));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::Contract("bit payload must contain only 0 and 1".into()));
    }
    let mut x = ComplexGrid::zeros(&[n_s, n_c, n_l]);
    let mut cursor = bits.chunks_exact(QPSK_BITS);
    for s in 0..n_s {
        for k in 0..n_c {
            for l in 0..n_l {
                if !pilot_mask[k * n_l + l] {
                    let b = cursor.next().expect("bit count checked");
                    x.set(&[s, k, l], qpsk_map(b[0], b[1]));
                }
            }
        }
        for (i, &k) in pattern.subcarriers().iter().enumerate() {
            for (j, &l) in pattern.symbols().iter().enumerate() {
                x.set(&[s, k, l], pattern.pilot_symbol(s, i, j));
            }
        }
    }
    Ok(ResourceGrid {
        x,
        data_mask: pilot_mask.iter().map(|&p| !p).collect(),
        bits: bits.to_vec(),
        bits_per_symbol: QPSK_BITS,
    })
}
