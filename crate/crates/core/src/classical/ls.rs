use crate::channel::PilotPattern;
use crate::error::{Error, Result};
use crate::grid::ComplexGrid;

/// Equivalent-channel estimate at the pilot positions.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotEstimate {
    /// `[n_r, n_s, n_cp, n_lp]`
    pub g_p: ComplexGrid,
    pub pattern: PilotPattern,
}

/// Per-pilot division `G_p = Y_p / X_p`.
///
/// Only single-stream pilots are supported: with several streams sharing the
/// same pilot elements the division does not separate them.
pub fn ls_estimate(y_p: &ComplexGrid, pattern: &PilotPattern) -> Result<PilotEstimate> {
    let x_p = pattern.x_p();
    let ys = y_p.shape();
    let xs = x_p.shape();
    if ys.len() != 3 || xs.len() != 3 || ys[1] != xs[1] || ys[2] != xs[2] {
        return Err(Error::dim("ls_estimate", format!("Y_p {ys:?} vs X_p {xs:?}")));
    }
    if xs[0] != 1 {
        return Err(Error::Contract(format!(
            "least-squares pilot division needs one stream, got {}",
            xs[0]
        )));
    }
    let (n_r, n_cp, n_lp) = (ys[0], ys[1], ys[2]);
    for (i, x) in x_p.data().iter().enumerate() {
        if x.norm() < 1e-12 {
            return Err(Error::DegeneratePilot {
                index: i,
                modulus: x.norm(),
            });
        }
    }
    let per = n_cp * n_lp;
    let mut g = ComplexGrid::zeros(&[n_r, 1, n_cp, n_lp]);
    let gd = g.data_mut();
    for r in 0..n_r {
        for i in 0..per {
            gd[r * per + i] = y_p.data()[r * per + i] / x_p.data()[i];
        }
    }
    Ok(PilotEstimate {
        g_p: g,
        pattern: pattern.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::C64;

    #[test]
    fn unit_ratio() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = ComplexGrid::new(vec![1, 1, 1], vec![C64::new(s, s)]).unwrap();
        let p = PilotPattern::new(4, 4, vec![0], vec![0], x).unwrap();
        let y = ComplexGrid::new(vec![1, 1, 1], vec![C64::new(s, s)]).unwrap();
        let g = ls_estimate(&y, &p).unwrap();
        assert!((g.g_p.data()[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_pilot_is_degenerate() {
        let x = ComplexGrid::zeros(&[1, 1, 1]);
        let p = PilotPattern::new(4, 4, vec![0], vec![0], x).unwrap();
        let y = ComplexGrid::zeros(&[1, 1, 1]);
        assert!(matches!(ls_estimate(&y, &p), Err(Error::DegeneratePilot { .. })));
    }
}
