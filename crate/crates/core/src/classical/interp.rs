use super::PilotEstimate;
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterpMode {
    Nearest,
    Linear,
}

/// Full-grid estimate plus a note of which axes fell back to nearest because
/// they held a single pilot.
#[derive(Clone, Debug, PartialEq)]
pub struct Interpolated {
    /// `[n_r, n_s, n_c, n_l]`
    pub g: ComplexGrid,
    pub frequency_fallback: bool,
    pub time_fallback: bool,
}

/// One-dimensional interpolation of `values` known at sorted `positions` onto
/// `0..len`. Nearest ties go to the lower position; linear mode extends the
/// first and last segments beyond the outermost pilots.
pub fn interpolate_1d(positions: &[usize], values: &[C64], len: usize, mode: InterpMode) -> Vec<C64> {
    debug_assert_eq!(positions.len(), values.len());
    let n = positions.len();
    if n == 1 {
        return vec![values[0]; len];
    }
    match mode {
        InterpMode::Nearest => {
            let mut j = 0;
            (0..len)
                .map(|x| {
                    while j + 1 < n && positions[j + 1].abs_diff(x) < positions[j].abs_diff(x) {
                        j += 1;
                    }
                    values[j]
                })
                .collect()
        }
        InterpMode::Linear => {
            let mut seg = 0;
            (0..len)
                .map(|x| {
                    while seg + 2 < n && x > positions[seg + 1] {
                        seg += 1;
                    }
                    let (x0, x1) = (positions[seg] as f64, positions[seg + 1] as f64);
                    let t = (x as f64 - x0) / (x1 - x0);
                    values[seg] * (1.0 - t) + values[seg + 1] * t
                })
                .collect()
        }
    }
}

/// Separable interpolation of a pilot estimate: along frequency on each pilot
/// symbol, then along time for every subcarrier.
pub fn interpolate(est: &PilotEstimate, mode: InterpMode) -> Result<Interpolated> {
    let p = &est.pattern;
    let gs = est.g_p.shape();
    if gs.len() != 4 || gs[2] != p.n_cp() || gs[3] != p.n_lp() {
        return Err(Error::dim(
            "interpolate",
            format!("estimate {gs:?} vs pattern {}x{}", p.n_cp(), p.n_lp()),
        ));
    }
    let (n_r, n_s, n_cp, n_lp) = (gs[0], gs[1], gs[2], gs[3]);
    let (n_c, n_l) = (p.n_c(), p.n_l());
    let freq_mode = if n_cp == 1 { InterpMode::Nearest } else { mode };
    let time_mode = if n_lp == 1 { InterpMode::Nearest } else { mode };

    let mut g = ComplexGrid::zeros(&[n_r, n_s, n_c, n_l]);
    let mut column = vec![C64::new(0.0, 0.0); n_cp];
    let mut partial = vec![C64::new(0.0, 0.0); n_c * n_lp];
    let mut row = vec![C64::new(0.0, 0.0); n_lp];
    for r in 0..n_r {
        for s in 0..n_s {
            for j in 0..n_lp {
                for (i, c) in column.iter_mut().enumerate() {
                    *c = est.g_p.get(&[r, s, i, j]);
                }
                let f = interpolate_1d(p.subcarriers(), &column, n_c, freq_mode);
                for (k, v) in f.into_iter().enumerate() {
                    partial[k * n_lp + j] = v;
                }
            }
            for k in 0..n_c {
                row.copy_from_slice(&partial[k * n_lp..(k + 1) * n_lp]);
                let t = interpolate_1d(p.symbols(), &row, n_l, time_mode);
                for (l, v) in t.into_iter().enumerate() {
                    g.set(&[r, s, k, l], v);
                }
            }
        }
    }
    Ok(Interpolated {
        g,
        frequency_fallback: mode == InterpMode::Linear && n_cp == 1,
        time_fallback: mode == InterpMode::Linear && n_lp == 1,
    })
}
