use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT_MPS: f64 = 299_792_458.0;

/// Link-level simulation parameters. Defaults follow the reference
/// configuration: 2.6 GHz carrier, 15 kHz spacing, 32x8 antennas, one stream,
/// 48 subcarriers by 14 symbols, UE at 20 m/s.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub carrier_frequency_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub n_t: usize,
    pub n_r: usize,
    pub n_s: usize,
    pub n_c: usize,
    pub n_l: usize,
    pub ue_speed_mps: f64,
    pub num_taps: usize,
    pub delay_spread_s: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 2.6e9,
            subcarrier_spacing_hz: 15e3,
            n_t: 32,
            n_r: 8,
            n_s: 1,
            n_c: 48,
            n_l: 14,
            ue_speed_mps: 20.0,
            num_taps: 8,
            delay_spread_s: 300e-9,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("sim.n_t", self.n_t),
            ("sim.n_r", self.n_r),
            ("sim.n_s", self.n_s),
            ("sim.n_c", self.n_c),
            ("sim.n_l", self.n_l),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.num_taps < 1 {
            return Err(Error::config("sim.num_taps", "need at least one tap"));
        }
        if self.n_s > self.n_t.min(self.n_r) {
            return Err(Error::config(
                "sim.n_s",
                format!(
                    "{} streams exceed min(n_t, n_r) = {}",
                    self.n_s,
                    self.n_t.min(self.n_r)
                ),
            ));
        }
        if !(self.carrier_frequency_hz > 0.0) {
            return Err(Error::config("sim.carrier_frequency_hz", "must be positive"));
        }
        if !(self.subcarrier_spacing_hz > 0.0) {
            return Err(Error::config("sim.subcarrier_spacing_hz", "must be positive"));
        }
        if !(self.ue_speed_mps >= 0.0) {
            return Err(Error::config("sim.ue_speed_mps", "must be non-negative"));
        }
        if !(self.delay_spread_s >= 0.0) {
            return Err(Error::config("sim.delay_spread_s", "must be non-negative"));
        }
        Ok(())
    }

    /// `f_d = v f_c / c`.
    pub fn max_doppler_hz(&self) -> f64 {
        self.ue_speed_mps * self.carrier_frequency_hz / SPEED_OF_LIGHT_MPS
    }

    /// OFDM symbol period including cyclic prefix: 14 symbols per
    /// `15 kHz / spacing` milliseconds.
    pub fn symbol_duration_s(&self) -> f64 {
        1.0 / (14.0 * self.subcarrier_spacing_hz / 15.0)
    }

    /// Stable hash of everything except the seed.
    pub fn fingerprint(&self) -> u64 {
        let canon = format!(
            "fc={:e};scs={:e};nt={};nr={};ns={};nc={};nl={};v={:e};taps={};ds={:e}",
            self.carrier_frequency_hz,
            self.subcarrier_spacing_hz,
            self.n_t,
            self.n_r,
            self.n_s,
            self.n_c,
            self.n_l,
            self.ue_speed_mps,
            self.num_taps,
            self.delay_spread_s
        );
        let digest = Sha256::digest(canon.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}
