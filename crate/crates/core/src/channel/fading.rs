//! Clustered tapped-delay-line channel with Jakes Doppler.
//!
//! Each tap has an exponentially distributed excess delay, a power that decays
//! exponentially with that delay, a departure angle seen by a half-wavelength
//! uniform linear array at the base station, and an independent fading process
//! per receive antenna. Fading follows a Gaussian-weighted sum of sinusoids
//! with uniformly distributed arrival angles, which gives the `J0(2 pi f_d tau)`
//! temporal autocorrelation.
//!
//! `H[r, t, k, l] = sum_tap sqrt(p) g_r(l) a_t(theta) exp(-j 2 pi k df tau)`

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::SimConfig;
use crate::error::Result;
use crate::grid::{ComplexGrid, C64};
use crate::rng::{rng_for, stream};

const SINUSOIDS: usize = 32;
const MAX_ANGLE_RAD: f64 = PI / 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Tap {
    pub delay_s: f64,
    /// Normalised so the powers of all taps sum to one.
    pub power: f64,
    pub angle_rad: f64,
    /// Fading gain per receive antenna and OFDM symbol, `[n_r][n_l]` row-major.
    pub gains: Vec<C64>,
}

/// One slot of the downlink channel, stored in factored per-tap form.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub n_r: usize,
    pub n_t: usize,
    pub n_c: usize,
    pub n_l: usize,
    pub subcarrier_spacing_hz: f64,
    pub doppler_hz: f64,
    pub seed: u64,
    pub taps: Vec<Tap>,
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Unit-power fading samples at times `t`.
fn jakes_process<R: Rng + ?Sized>(doppler_hz: f64, times: &[f64], rng: &mut R) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); times.len()];
    let scale = 1.0 / (SINUSOIDS as f64).sqrt();
    for _ in 0..SINUSOIDS {
        let amp = complex_normal(rng);
        let alpha = rng.gen_range(0.0..2.0 * PI);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let w = 2.0 * PI * doppler_hz * alpha.cos();
        for (o, &t) in out.iter_mut().zip(times) {
            *o += amp * C64::from_polar(scale, w * t + phase);
        }
    }
    out
}

/// Draws one channel realization for `cfg` from `seed`.
pub fn generate_channel(cfg: &SimConfig, seed: u64) -> Result<ChannelRealization> {
    cfg.validate()?;
    let mut rng = rng_for(seed, stream::CHANNEL, 0);
    let fd = cfg.max_doppler_hz();
    let ts = cfg.symbol_duration_s();
    let times: Vec<f64> = (0..cfg.n_l).map(|l| l as f64 * ts).collect();

    let mut delays: Vec<f64> = (0..cfg.num_taps)
        .map(|_| -cfg.delay_spread_s * (1.0 - rng.gen::<f64>()).ln())
        .collect();
    delays.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let first = delays[0];
    for d in &mut delays {
        *d -= first;
    }
    let mut powers: Vec<f64> = delays
        .iter()
        .map(|&d| {
            if cfg.delay_spread_s > 0.0 {
                (-d / cfg.delay_spread_s).exp()
            } else {
                1.0
            }
        })
        .collect();
    let total: f64 = powers.iter().sum();
    for p in &mut powers {
        *p /= total;
    }

    let taps = delays
        .into_iter()
        .zip(powers)
        .map(|(delay_s, power)| {
            let angle_rad = rng.gen_range(-MAX_ANGLE_RAD..MAX_ANGLE_RAD);
            let mut gains = Vec::with_capacity(cfg.n_r * cfg.n_l);
            for _ in 0..cfg.n_r {
                gains.extend(jakes_process(fd, &times, &mut rng));
            }
            Tap {
                delay_s,
                power,
                angle_rad,
                gains,
            }
        })
        .collect();

    Ok(ChannelRealization {
        n_r: cfg.n_r,
        n_t: cfg.n_t,
        n_c: cfg.n_c,
        n_l: cfg.n_l,
        subcarrier_spacing_hz: cfg.subcarrier_spacing_hz,
        doppler_hz: fd,
        seed,
        taps,
    })
}

impl Tap {
    /// Base-station array response `exp(j pi t sin(theta))`.
    pub fn steering(&self, n_t: usize) -> Vec<C64> {
        let s = self.angle_rad.sin();
        (0..n_t)
            .map(|t| C64::from_polar(1.0, PI * t as f64 * s))
            .collect()
    }

    pub fn frequency_response(&self, n_c: usize, spacing_hz: f64) -> Vec<C64> {
        (0..n_c)
            .map(|k| C64::from_polar(1.0, -2.0 * PI * k as f64 * spacing_hz * self.delay_s))
            .collect()
    }
}

impl ChannelRealization {
    /// Per-tap coefficient without the array response:
    /// `alpha[tap][(r, k, l)] = sqrt(p) g_r(l) exp(-j 2 pi k df tau)`.
    pub(crate) fn tap_coefficients(&self) -> Vec<Vec<C64>> {
        self.taps
            .iter()
            .map(|tap| {
                let freq = tap.frequency_response(self.n_c, self.subcarrier_spacing_hz);
                let amp = tap.power.sqrt();
                let mut out = Vec::with_capacity(self.n_r * self.n_c * self.n_l);
                for r in 0..self.n_r {
                    let g = &tap.gains[r * self.n_l..(r + 1) * self.n_l];
                    for &f in &freq {
                        out.extend(g.iter().map(|&gl| gl * f * amp));
                    }
                }
                out
            })
            .collect()
    }

    /// Full channel tensor `[n_r, n_t, n_c, n_l]`.
    pub fn h(&self) -> ComplexGrid {
        let (n_r, n_t, n_c, n_l) = (self.n_r, self.n_t, self.n_c, self.n_l);
        let mut h = ComplexGrid::zeros(&[n_r, n_t, n_c, n_l]);
        let coeffs = self.tap_coefficients();
        let data = h.data_mut();
        for (tap, alpha) in self.taps.iter().zip(&coeffs) {
            let a = tap.steering(n_t);
            for r in 0..n_r {
                let src = &alpha[r * n_c * n_l..(r + 1) * n_c * n_l];
                for (t, &at) in a.iter().enumerate() {
                    let dst = &mut data[(r * n_t + t) * n_c * n_l..(r * n_t + t + 1) * n_c * n_l];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s * at;
                    }
                }
            }
        }
        h
    }
}
