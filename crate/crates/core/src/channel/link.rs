use rand::Rng;
use rand_distr::StandardNormal;

use super::{equivalent_channel, PilotPattern, ResourceGrid};
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, C64};
use crate::rng::{rng_for, stream};

/// Noise variance for a given Eb/N0 with unit-energy symbols:
/// `sigma^2 = 1 / (bits_per_symbol * 10^(ebno_db / 10))`.
pub fn ebno_to_noise_var(ebno_db: f64, bits_per_symbol: usize) -> f64 {
    1.0 / (bits_per_symbol.max(1) as f64 * 10f64.powf(ebno_db / 10.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reception {
    /// `[n_r, n_c, n_l]`
    pub y: ComplexGrid,
    /// `[n_r, n_cp, n_lp]`
    pub y_p: ComplexGrid,
}

/// `Y = H P X + Z`.
pub fn transmit(
    h: &ComplexGrid,
    p: &ComplexGrid,
    grid: &ResourceGrid,
    pattern: &PilotPattern,
    noise_var: f64,
    seed: u64,
) -> Result<Reception> {
    let g = equivalent_channel(h, p)?;
    transmit_equivalent(&g, grid, pattern, noise_var, seed)
}

/// `Y = G X + Z` with `Z` circularly-symmetric Gaussian of total variance
/// `noise_var` per element, drawn from `seed`.
pub fn transmit_equivalent(
    g: &ComplexGrid,
    grid: &ResourceGrid,
    pattern: &PilotPattern,
    noise_var: f64,
    seed: u64,
) -> Result<Reception> {
    if !(noise_var >= 0.0) {
        return Err(Error::config("noise_var", format!("negative variance {noise_var}")));
    }
    let gs = g.shape();
    let xs = grid.x.shape();
    if gs.len() != 4 || xs.len() != 3 || gs[1] != xs[0] || gs[2] != xs[1] || gs[3] != xs[2] {
        return Err(Error::dim("transmit", format!("G {gs:?} vs X {xs:?}")));
    }
    let (n_r, n_s, n_c, n_l) = (gs[0], gs[1], gs[2], gs[3]);
    if pattern.n_c() != n_c || pattern.n_l() != n_l {
        return Err(Error::dim("transmit", "pilot pattern does not match grid"));
    }
    let re = n_c * n_l;
    let sd = (noise_var / 2.0).sqrt();
    let mut rng = rng_for(seed, stream::NOISE, 0);
    let mut y = ComplexGrid::zeros(&[n_r, n_c, n_l]);
    let yd = y.data_mut();
    for r in 0..n_r {
        let row = &mut yd[r * re..(r + 1) * re];
        for s in 0..n_s {
            let gsrc = &g.data()[(r * n_s + s) * re..(r * n_s + s + 1) * re];
            let xsrc = &grid.x.data()[s * re..(s + 1) * re];
            for ((o, &gv), &xv) in row.iter_mut().zip(gsrc).zip(xsrc) {
                *o += gv * xv;
            }
        }
        for o in row.iter_mut() {
            let re_n: f64 = rng.sample(StandardNormal);
            let im_n: f64 = rng.sample(StandardNormal);
            *o += C64::new(re_n * sd, im_n * sd);
        }
    }
    let y_p = restrict_to_pilots(&y, pattern);
    Ok(Reception { y, y_p })
}

/// Samples `[n_r, n_c, n_l]` at the pilot positions.
pub fn restrict_to_pilots(y: &ComplexGrid, pattern: &PilotPattern) -> ComplexGrid {
    let n_r = y.shape()[0];
    ComplexGrid::from_fn(&[n_r, pattern.n_cp(), pattern.n_lp()], |i| {
        y.get(&[i[0], pattern.subcarriers()[i[1]], pattern.symbols()[i[2]]])
    })
}
