//! Wideband SVD precoding and the equivalent channel `G = H P`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use super::ChannelRealization;
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, C64};

/// `R = sum_{k,l} H_kl^H H_kl` for `h` shaped `[n_r, n_t, n_c, n_l]`.
pub fn wideband_covariance(h: &ComplexGrid) -> Result<DMatrix<C64>> {
    let s = h.shape();
    if s.len() != 4 {
        return Err(Error::dim("wideband_covariance", format!("H shape {s:?}")));
    }
    let (n_r, n_t, n_c, n_l) = (s[0], s[1], s[2], s[3]);
    let re = n_c * n_l;
    let d = h.data();
    let mut r = DMatrix::<C64>::zeros(n_t, n_t);
    for rx in 0..n_r {
        for t1 in 0..n_t {
            let a = &d[(rx * n_t + t1) * re..(rx * n_t + t1 + 1) * re];
            for t2 in t1..n_t {
                let b = &d[(rx * n_t + t2) * re..(rx * n_t + t2 + 1) * re];
                let acc: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
                r[(t1, t2)] += acc;
            }
        }
    }
    for t1 in 0..n_t {
        for t2 in 0..t1 {
            r[(t1, t2)] = r[(t2, t1)].conj();
        }
    }
    Ok(r)
}

/// Top `n_s` eigenvectors of a Hermitian covariance as the columns of an
/// `[n_t, n_s]` grid, each scaled to unit norm with its first non-negligible
/// entry rotated onto the non-negative real axis.
pub fn dominant_eigenvectors(r: &DMatrix<C64>, n_s: usize) -> Result<ComplexGrid> {
    let n_t = r.nrows();
    if n_s == 0 || n_s > n_t {
        return Err(Error::config("sim.n_s", format!("{n_s} streams for {n_t} antennas")));
    }
    let scale = r.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Numerical {
            op: "svd_precode",
            detail: "channel is all zeros (or non-finite); no dominant direction".into(),
        });
    }
    let eig = SymmetricEigen::new(r.map(|c| c / scale));
    let mut order: Vec<usize> = (0..n_t).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut p = ComplexGrid::zeros(&[n_t, n_s]);
    for (s, &col) in order.iter().take(n_s).enumerate() {
        let v = eig.eigenvectors.column(col);
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let max_abs = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let pivot = v
            .iter()
            .find(|c| c.norm() > 1e-9 * max_abs)
            .copied()
            .unwrap_or(C64::new(1.0, 0.0));
        let rot = pivot.conj() / pivot.norm();
        for t in 0..n_t {
            p.set(&[t, s], v[t] * rot / norm);
        }
    }
    Ok(p)
}

/// Precoder from the full channel tensor: dominant right singular vectors of
/// the channel stacked over every subcarrier and symbol.
pub fn svd_precode(h: &ComplexGrid, n_s: usize) -> Result<ComplexGrid> {
    let s = h.shape();
    if s.len() != 4 || n_s > s[0].min(s[1]) {
        return Err(Error::config(
            "sim.n_s",
            format!("{n_s} streams for H shaped {s:?}"),
        ));
    }
    dominant_eigenvectors(&wideband_covariance(h)?, n_s)
}

/// `G[r, s, k, l] = sum_t H[r, t, k, l] P[t, s]`.
pub fn equivalent_channel(h: &ComplexGrid, p: &ComplexGrid) -> Result<ComplexGrid> {
    let hs = h.shape();
    let ps = p.shape();
    if hs.len() != 4 || ps.len() != 2 || hs[1] != ps[0] {
        return Err(Error::dim(
            "equivalent_channel",
            format!("H {hs:?} vs P {ps:?}"),
        ));
    }
    let (n_r, n_t, n_c, n_l) = (hs[0], hs[1], hs[2], hs[3]);
    let n_s = ps[1];
    let re = n_c * n_l;
    let mut g = ComplexGrid::zeros(&[n_r, n_s, n_c, n_l]);
    let hd = h.data();
    let gd = g.data_mut();
    for r in 0..n_r {
        for s in 0..n_s {
            let dst = &mut gd[(r * n_s + s) * re..(r * n_s + s + 1) * re];
            for t in 0..n_t {
                let w = p.data()[t * n_s + s];
                let src = &hd[(r * n_t + t) * re..(r * n_t + t + 1) * re];
                for (d, &x) in dst.iter_mut().zip(src) {
                    *d += x * w;
                }
            }
        }
    }
    Ok(g)
}

impl ChannelRealization {
    /// Wideband covariance computed from the per-tap factors without forming H.
    pub fn covariance(&self) -> DMatrix<C64> {
        let n_taps = self.taps.len();
        // Q[a, b] = sum_{r,k,l} conj(alpha_a) alpha_b
        let mut q = DMatrix::<C64>::zeros(n_taps, n_taps);
        for a in 0..n_taps {
            for b in a..n_taps {
                let ta = &self.taps[a];
                let tb = &self.taps[b];
                let time: C64 = ta
                    .gains
                    .iter()
                    .zip(&tb.gains)
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                let dtau = ta.delay_s - tb.delay_s;
                let freq: C64 = (0..self.n_c)
                    .map(|k| {
                        C64::from_polar(1.0, 2.0 * PI * k as f64 * self.subcarrier_spacing_hz * dtau)
                    })
                    .sum();
                let v = time * freq * (ta.power * tb.power).sqrt();
                q[(a, b)] = v;
                q[(b, a)] = v.conj();
            }
        }
        let steer: Vec<Vec<C64>> = self.taps.iter().map(|t| t.steering(self.n_t)).collect();
        let mut r = DMatrix::<C64>::zeros(self.n_t, self.n_t);
        for t1 in 0..self.n_t {
            for t2 in 0..self.n_t {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..n_taps {
                    let ca = steer[a][t1].conj();
                    for b in 0..n_taps {
                        acc += ca * q[(a, b)] * steer[b][t2];
                    }
                }
                r[(t1, t2)] = acc;
            }
        }
        r
    }

    pub fn precoder(&self, n_s: usize) -> Result<ComplexGrid> {
        if n_s > self.n_t.min(self.n_r) {
            return Err(Error::config("sim.n_s", format!("{n_s} streams")));
        }
        dominant_eigenvectors(&self.covariance(), n_s)
    }

    /// `G = H P` computed from the per-tap factors.
    pub fn equivalent(&self, p: &ComplexGrid) -> Result<ComplexGrid> {
        let ps = p.shape();
        if ps.len() != 2 || ps[0] != self.n_t {
            return Err(Error::dim(
                "equivalent_channel",
                format!("P {ps:?} for {} BS antennas", self.n_t),
            ));
        }
        let n_s = ps[1];
        let (n_r, n_c, n_l) = (self.n_r, self.n_c, self.n_l);
        let re = n_c * n_l;
        let coeffs = self.tap_coefficients();
        let mut g = ComplexGrid::zeros(&[n_r, n_s, n_c, n_l]);
        let gd = g.data_mut();
        for (tap, alpha) in self.taps.iter().zip(&coeffs) {
            let a = tap.steering(self.n_t);
            for s in 0..n_s {
                let beam: C64 = (0..self.n_t).map(|t| a[t] * p.data()[t * n_s + s]).sum();
                for r in 0..n_r {
                    let src = &alpha[r * re..(r + 1) * re];
                    let dst = &mut gd[(r * n_s + s) * re..(r * n_s + s + 1) * re];
                    for (d, &x) in dst.iter_mut().zip(src) {
                        *d += x * beam;
                    }
                }
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, SimConfig};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn diagonal_channel_picks_dominant_axis() {
        let h = ComplexGrid::from_fn(&[2, 2, 3, 2], |i| {
            if i[0] == i[1] {
                c(if i[0] == 0 { 2.0 } else { 1.0 }, 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let p = svd_precode(&h, 1).unwrap();
        assert!((p.get(&[0, 0]) - c(1.0, 0.0)).norm() < 1e-12);
        assert!(p.get(&[1, 0]).norm() < 1e-12);
    }

    #[test]
    fn zero_channel_is_an_error() {
        let h = ComplexGrid::zeros(&[2, 2, 2, 2]);
        assert!(matches!(svd_precode(&h, 1), Err(Error::Numerical { .. })));
    }

    #[test]
    fn identity_channel_passes_first_stream() {
        let h = ComplexGrid::from_fn(&[2, 2, 2, 3], |i| c((i[0] == i[1]) as u8 as f64, 0.0));
        let p = ComplexGrid::new(vec![2, 1], vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let g = equivalent_channel(&h, &p).unwrap();
        assert_eq!(g.shape(), &[2, 1, 2, 3]);
        for k in 0..2 {
            for l in 0..3 {
                assert_eq!(g.get(&[0, 0, k, l]), c(1.0, 0.0));
                assert_eq!(g.get(&[1, 0, k, l]), c(0.0, 0.0));
            }
        }
        let zero = ComplexGrid::zeros(&[2, 1]);
        assert!(equivalent_channel(&h, &zero).unwrap().norm_sqr() == 0.0);
        let bad = ComplexGrid::zeros(&[3, 1]);
        assert!(equivalent_channel(&h, &bad).is_err());
    }

    #[test]
    fn factored_and_full_routes_agree() {
        let cfg = SimConfig {
            n_t: 8,
            n_r: 3,
            n_c: 12,
            n_l: 6,
            ..Default::default()
        };
        let ch = generate_channel(&cfg, 5).unwrap();
        let h = ch.h();
        let r_full = wideband_covariance(&h).unwrap();
        let r_fact = ch.covariance();
        let scale = r_full.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!((r_full - r_fact).iter().all(|d| d.norm() < 1e-9 * scale));

        let p_full = svd_precode(&h, 1).unwrap();
        let p_fact = ch.precoder(1).unwrap();
        for (a, b) in p_full.data().iter().zip(p_fact.data()) {
            assert!((a - b).norm() < 1e-8);
        }
        let g_full = equivalent_channel(&h, &p_fact).unwrap();
        let g_fact = ch.equivalent(&p_fact).unwrap();
        for (a, b) in g_full.data().iter().zip(g_fact.data()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn precoder_is_deterministic_and_normalised() {
        let cfg = SimConfig {
            n_t: 8,
            n_r: 4,
            n_c: 6,
            n_l: 4,
            n_s: 2,
            ..Default::default()
        };
        let ch = generate_channel(&cfg, 9).unwrap();
        let p1 = ch.precoder(2).unwrap();
        let p2 = ch.precoder(2).unwrap();
        assert_eq!(p1, p2);
        for s in 0..2 {
            let n: f64 = (0..8).map(|t| p1.get(&[t, s]).norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-6);
            let first = (0..8).map(|t| p1.get(&[t, s])).find(|v| v.norm() > 1e-9).unwrap();
            assert!(first.im.abs() < 1e-12 && first.re >= 0.0);
        }
    }
}
