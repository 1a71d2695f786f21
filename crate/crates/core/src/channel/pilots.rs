use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, C64};
use crate::rng::{rng_for, stream};

use super::qpsk_map;
use rand::Rng;

/// 0-based OFDM symbols carrying pilots (third and twelfth symbol of the slot).
pub const DEFAULT_PILOT_SYMBOLS: [usize; 2] = [2, 11];

const PILOT_SEQUENCE_SEED: u64 = 0xD3A5_0001;

/// Pilot positions on the time-frequency grid and the known symbols sent there.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotPattern {
    n_c: usize,
    n_l: usize,
    subcarriers: Vec<usize>,
    symbols: Vec<usize>,
    /// `[n_s, n_cp, n_lp]`
    x_p: ComplexGrid,
}

fn check_indices(key: &str, idx: &[usize], bound: usize) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::config(key, "no pilot positions"));
    }
    if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(key, "indices must be strictly increasing"));
    }
    if idx.iter().any(|&i| i >= bound) {
        return Err(Error::config(key, format!("index out of range 0..{bound}")));
    }
    Ok(())
}

impl PilotPattern {
    pub fn new(
        n_c: usize,
        n_l: usize,
        subcarriers: Vec<usize>,
        symbols: Vec<usize>,
        x_p: ComplexGrid,
    ) -> Result<Self> {
        check_indices("pilots.subcarriers", &subcarriers, n_c)?;
        check_indices("pilots.symbols", &symbols, n_l)?;
        let xs = x_p.shape();
        if xs.len() != 3 || xs[1] != subcarriers.len() || xs[2] != symbols.len() {
            return Err(Error::dim(
                "PilotPattern",
                format!(
                    "X_p {xs:?} for {} x {} positions",
                    subcarriers.len(),
                    symbols.len()
                ),
            ));
        }
        Ok(Self {
            n_c,
            n_l,
            subcarriers,
            symbols,
            x_p,
        })
    }

    /// `per_symbol` subcarriers at indices `floor(i n_c / per_symbol)` on each of
    /// `symbols`, carrying a fixed pseudo-random QPSK sequence.
    pub fn even_stride(
        n_c: usize,
        n_l: usize,
        per_symbol: usize,
        symbols: &[usize],
        n_s: usize,
    ) -> Result<Self> {
        if per_symbol == 0 || per_symbol > n_c {
            return Err(Error::config(
                "pilots.subcarriers",
                format!("{per_symbol} pilot subcarriers cannot be placed on {n_c}"),
            ));
        }
        let subcarriers: Vec<usize> = (0..per_symbol).map(|i| i * n_c / per_symbol).collect();
        let mut rng = rng_for(PILOT_SEQUENCE_SEED, stream::PILOTS, 0);
        let n_lp = symbols.len();
        let x_p = ComplexGrid::from_fn(&[n_s, per_symbol, n_lp], |_| {
            qpsk_map(rng.gen_range(0..2u8), rng.gen_range(0..2u8))
        });
        Self::new(n_c, n_l, subcarriers, symbols.to_vec(), x_p)
    }

    /// Pattern for a total pilot count split evenly over `symbols`.
    pub fn with_total(
        n_c: usize,
        n_l: usize,
        total: usize,
        symbols: &[usize],
        n_s: usize,
    ) -> Result<Self> {
        if symbols.is_empty() || total % symbols.len() != 0 {
            return Err(Error::config(
                "pilots.count",
                format!("{total} pilots cannot be split over {} symbols", symbols.len()),
            ));
        }
        Self::even_stride(n_c, n_l, total / symbols.len(), symbols, n_s)
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn n_l(&self) -> usize {
        self.n_l
    }

    pub fn n_cp(&self) -> usize {
        self.subcarriers.len()
    }

    pub fn n_lp(&self) -> usize {
        self.symbols.len()
    }

    pub fn total(&self) -> usize {
        self.n_cp() * self.n_lp()
    }

    pub fn subcarriers(&self) -> &[usize] {
        &self.subcarriers
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn x_p(&self) -> &ComplexGrid {
        &self.x_p
    }

    pub fn pilot_symbol(&self, stream: usize, i: usize, j: usize) -> C64 {
        self.x_p.get(&[stream, i, j])
    }

    /// `mask[k * n_l + l]` is true on pilot resource elements.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n_c * self.n_l];
        for &k in &self.subcarriers {
            for &l in &self.symbols {
                m[k * self.n_l + l] = true;
            }
        }
        m
    }

    /// Flat full-grid offsets `k * n_l + l` of the pilots, pilot-grid row-major.
    pub fn flat_positions(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.total());
        for &k in &self.subcarriers {
            for &l in &self.symbols {
                out.push(k * self.n_l + l);
            }
        }
        out
    }

    /// For each full-grid subcarrier, the index of the nearest pilot subcarrier
    /// (ties go to the lower one).
    pub fn nearest_subcarrier_map(&self) -> Vec<usize> {
        nearest_map(&self.subcarriers, self.n_c)
    }

    pub fn nearest_symbol_map(&self) -> Vec<usize> {
        nearest_map(&self.symbols, self.n_l)
    }
}

pub(crate) fn nearest_map(positions: &[usize], len: usize) -> Vec<usize> {
    (0..len)
        .map(|x| {
            let mut best = 0;
            for (i, &p) in positions.iter().enumerate() {
                if p.abs_diff(x) < positions[best].abs_diff(x) {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dmrs_like_layout() {
        let p = PilotPattern::even_stride(48, 14, 24, &DEFAULT_PILOT_SYMBOLS, 1).unwrap();
        assert_eq!(p.n_cp(), 24);
        assert_eq!(p.n_lp(), 2);
        assert_eq!(p.subcarriers()[..4], [0, 2, 4, 6]);
        assert!(p.x_p().data().iter().all(|x| (x.norm() - 1.0).abs() < 1e-6));
    }

    #[test]
    fn sweep_counts_are_realizable() {
        for (total, per) in [(48, 24), (40, 20), (32, 16), (24, 12)] {
            let p = PilotPattern::with_total(48, 14, total, &DEFAULT_PILOT_SYMBOLS, 1).unwrap();
            assert_eq!(p.n_cp(), per);
            assert_eq!(p.total(), total);
        }
        assert!(PilotPattern::with_total(48, 14, 33, &DEFAULT_PILOT_SYMBOLS, 1).is_err());
        assert!(PilotPattern::with_total(48, 14, 98, &DEFAULT_PILOT_SYMBOLS, 1).is_err());
    }

    #[test]
    fn nearest_map_breaks_ties_low() {
        assert_eq!(nearest_map(&[0, 2], 4), vec![0, 0, 1, 1]);
        assert_eq!(nearest_map(&[2, 11], 14)[6..8], [0, 1]);
    }

    #[test]
    fn rejects_unsorted_positions() {
        let x = ComplexGrid::zeros(&[1, 2, 1]);
        assert!(PilotPattern::new(8, 4, vec![3, 1], vec![0], x).is_err());
    }
}
