use num_complex::Complex32;

use super::sample::{generate_range, Dims, EbnoDraw, Sample, SampleContext};
use crate::channel::PilotPattern;
use crate::classical::PilotEstimate;
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, C64};
use crate::tensor::Tensor;

const CHUNK: usize = 1024;

/// `[n_r, a]` complex (one stream) to `[2 n_r, a]` real planes.
pub fn to_planes(v: &[Complex32], n_r: usize, out: &mut Vec<f32>) {
    let per = v.len() / n_r.max(1);
    for r in 0..n_r {
        let row = &v[r * per..(r + 1) * per];
        out.extend(row.iter().map(|c| c.re));
        out.extend(row.iter().map(|c| c.im));
    }
}

/// Inverse of [`to_planes`] into a `[n_r, 1, rows, cols]` grid.
pub fn from_planes(p: &[f32], n_r: usize, rows: usize, cols: usize) -> ComplexGrid {
    let per = rows * cols;
    ComplexGrid::from_fn(&[n_r, 1, rows, cols], |i| {
        let j = i[2] * cols + i[3];
        C64::new(p[2 * i[0] * per + j] as f64, p[(2 * i[0] + 1) * per + j] as f64)
    })
}

/// Samples laid out as network-ready real planes.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorSet {
    pub dims: Dims,
    x: Vec<f32>,
    y: Vec<f32>,
    belief_db: Vec<f32>,
    ebno_db: Vec<f32>,
    seeds: Vec<u64>,
}

impl TensorSet {
    pub fn empty(dims: Dims) -> Self {
        Self {
            dims,
            x: Vec::new(),
            y: Vec::new(),
            belief_db: Vec::new(),
            ebno_db: Vec::new(),
            seeds: Vec::new(),
        }
    }

    pub fn from_samples(dims: Dims, samples: &[Sample]) -> Result<Self> {
        let mut s = Self::empty(dims);
        s.extend(samples)?;
        Ok(s)
    }

    pub fn extend(&mut self, samples: &[Sample]) -> Result<()> {
        let d = self.dims;
        if d.n_s != 1 {
            return Err(Error::Contract("network planes need a single stream".into()));
        }
        for s in samples {
            if s.g_true.len() != d.full_len() || s.g_ls_p.len() != d.pilot_len() || s.belief.len() != d.n_r {
                return Err(Error::dim("TensorSet", "sample does not match dataset dims"));
            }
            to_planes(&s.g_ls_p, d.n_r, &mut self.x);
            to_planes(&s.g_true, d.n_r, &mut self.y);
            self.belief_db.extend(s.belief_db());
            self.ebno_db.push(s.ebno_db);
            self.seeds.push(s.seed);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ebno_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ebno_db.is_empty()
    }

    pub fn x_len(&self) -> usize {
        2 * self.dims.n_r * self.dims.n_cp * self.dims.n_lp
    }

    pub fn y_len(&self) -> usize {
        2 * self.dims.n_r * self.dims.n_c * self.dims.n_l
    }

    pub fn x(&self, i: usize) -> &[f32] {
        &self.x[i * self.x_len()..(i + 1) * self.x_len()]
    }

    pub fn y(&self, i: usize) -> &[f32] {
        &self.y[i * self.y_len()..(i + 1) * self.y_len()]
    }

    pub fn ebno_db(&self, i: usize) -> f32 {
        self.ebno_db[i]
    }

    pub fn seed(&self, i: usize) -> u64 {
        self.seeds[i]
    }

    pub fn belief_db(&self, i: usize) -> &[f32] {
        &self.belief_db[i * self.dims.n_r..(i + 1) * self.dims.n_r]
    }

    /// `(x, y, belief_db)` tensors for the given sample indices.
    pub fn batch(&self, idx: &[usize]) -> (Tensor<f32>, Tensor<f32>, Tensor<f32>) {
        let d = self.dims;
        let b = idx.len();
        let mut x = Vec::with_capacity(b * self.x_len());
        let mut y = Vec::with_capacity(b * self.y_len());
        let mut bel = Vec::with_capacity(b * d.n_r);
        for &i in idx {
            x.extend_from_slice(self.x(i));
            y.extend_from_slice(self.y(i));
            bel.extend_from_slice(self.belief_db(i));
        }
        (
            Tensor::new(vec![b, 2 * d.n_r, d.n_cp, d.n_lp], x).expect("batch shape"),
            Tensor::new(vec![b, 2 * d.n_r, d.n_c, d.n_l], y).expect("batch shape"),
            Tensor::new(vec![b, d.n_r], bel).expect("batch shape"),
        )
    }

    pub fn truth(&self, i: usize) -> ComplexGrid {
        from_planes(self.y(i), self.dims.n_r, self.dims.n_c, self.dims.n_l)
    }

    pub fn pilot_estimate(&self, i: usize, pattern: &PilotPattern) -> PilotEstimate {
        PilotEstimate {
            g_p: from_planes(self.x(i), self.dims.n_r, self.dims.n_cp, self.dims.n_lp),
            pattern: pattern.clone(),
        }
    }
}

/// Generates `n` samples straight into planes, a chunk at a time.
pub fn generate_tensor_set(ctx: &SampleContext, n: usize, seed: u64, draw: EbnoDraw) -> Result<TensorSet> {
    let mut set = TensorSet::empty(ctx.dims());
    let mut start = 0;
    while start < n {
        let m = CHUNK.min(n - start);
        set.extend(&generate_range(ctx, seed, start as u64, m, draw)?)?;
        start += m;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planes_round_trip() {
        let v: Vec<Complex32> = (0..12).map(|i| Complex32::new(i as f32, -(i as f32) * 0.5)).collect();
        let mut p = Vec::new();
        to_planes(&v, 2, &mut p);
        assert_eq!(&p[..6], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(&p[6..8], &[0.0, -0.5]);
        let g = from_planes(&p, 2, 3, 2);
        for (a, b) in g.data().iter().zip(&v) {
            assert_eq!((a.re as f32, a.im as f32), (b.re, b.im));
        }
    }
}
