//! Joint time-frequency LMMSE interpolation with empirically estimated
//! channel statistics.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex32;

use super::PilotEstimate;
use crate::channel::PilotPattern;
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, C64};

const RECOMMENDED_SAMPLES: usize = 1000;
const CHUNK_ROWS: usize = 2048;

/// Second-order statistics of the vectorised `n_c x n_l` channel grid.
///
/// `r_gg[a * dim + b] = E[(g_a - m_a) conj(g_b - m_b)]` with grid positions
/// flattened as `k * n_l + l`. Values are stored in single precision so the
/// on-disk form is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceModel {
    pub n_c: usize,
    pub n_l: usize,
    pub config_hash: u64,
    pub sample_count: u64,
    /// Diagonal loading added before any inversion.
    pub epsilon: f64,
    pub mean: Vec<Complex32>,
    pub r_gg: Vec<Complex32>,
    pub warning: Option<String>,
}

impl CovarianceModel {
    pub fn dim(&self) -> usize {
        self.n_c * self.n_l
    }

    pub fn matrix(&self) -> DMatrix<C64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |a, b| {
            let v = self.r_gg[a * n + b];
            C64::new(v.re as f64, v.im as f64)
        })
    }

    /// Covariance with the diagonal loading applied.
    pub fn loaded(&self) -> DMatrix<C64> {
        let mut m = self.matrix();
        for i in 0..self.dim() {
            m[(i, i)] += C64::new(self.epsilon, 0.0);
        }
        m
    }

    pub fn mean_c64(&self) -> Vec<C64> {
        self.mean
            .iter()
            .map(|v| C64::new(v.re as f64, v.im as f64))
            .collect()
    }
}

/// Warning attached to statistics estimated from too few vectors.
pub fn sample_warning(count: u64) -> Option<String> {
    (count < RECOMMENDED_SAMPLES as u64)
        .then(|| format!("only {count} calibration vectors (>= {RECOMMENDED_SAMPLES} recommended)"))
}

/// Streaming accumulator behind [`estimate_covariance`]. Each sample grid
/// `[.., n_c, n_l]` contributes one vector per leading index.
pub struct CovarianceAccumulator {
    n_c: usize,
    n_l: usize,
    count: u64,
    sum: Vec<f64>,
    /// `[re | im]` second moments, `2d x 2d`.
    moments: Vec<f64>,
    chunk: Vec<f64>,
    chunk_rows: usize,
}

impl CovarianceAccumulator {
    pub fn new(n_c: usize, n_l: usize) -> Self {
        let d = n_c * n_l;
        Self {
            n_c,
            n_l,
            count: 0,
            sum: vec![0.0; 2 * d],
            moments: vec![0.0; 4 * d * d],
            chunk: Vec::with_capacity(CHUNK_ROWS * 2 * d),
            chunk_rows: 0,
        }
    }

    pub fn push(&mut self, g: &ComplexGrid) -> Result<()> {
        let s = g.shape();
        let d = self.n_c * self.n_l;
        if s.len() < 2 || s[s.len() - 2] != self.n_c || s[s.len() - 1] != self.n_l {
            return Err(Error::dim(
                "estimate_covariance",
                format!("sample {s:?} for a {}x{} grid", self.n_c, self.n_l),
            ));
        }
        for v in g.data().chunks_exact(d) {
            for (i, c) in v.iter().enumerate() {
                self.sum[i] += c.re;
                self.sum[d + i] += c.im;
            }
            self.chunk.extend(v.iter().map(|c| c.re));
            self.chunk.extend(v.iter().map(|c| c.im));
            self.chunk_rows += 1;
            self.count += 1;
            if self.chunk_rows == CHUNK_ROWS {
                self.flush();
            }
        }
        Ok(())
    }

    fn flush(&mut self) {
        if self.chunk_rows == 0 {
            return;
        }
        let w = 2 * self.n_c * self.n_l;
        crate::tensor::gemm(
            true,
            false,
            w,
            w,
            self.chunk_rows,
            1.0,
            &self.chunk,
            &self.chunk,
            1.0,
            &mut self.moments,
        );
        self.chunk.clear();
        self.chunk_rows = 0;
    }

    pub fn finish(mut self, config_hash: u64) -> Result<CovarianceModel> {
        if self.count == 0 {
            return Err(Error::Contract("covariance estimation needs at least one sample".into()));
        }
        self.flush();
        let d = self.n_c * self.n_l;
        let w = 2 * d;
        let n = self.count as f64;
        let mean: Vec<C64> = (0..d)
            .map(|i| C64::new(self.sum[i] / n, self.sum[d + i] / n))
            .collect();
        let mut r = vec![Complex32::new(0.0, 0.0); d * d];
        let mut diag = 0.0;
        for a in 0..d {
            for b in a..d {
                let rr = self.moments[a * w + b];
                let ii = self.moments[(d + a) * w + d + b];
                let ir = self.moments[(d + a) * w + b];
                let ri = self.moments[a * w + d + b];
                let raw = C64::new((rr + ii) / n, (ir - ri) / n);
                let mut v = raw - mean[a] * mean[b].conj();
                if a == b {
                    v.im = 0.0;
                    diag += v.re;
                }
                r[a * d + b] = Complex32::new(v.re as f32, v.im as f32);
                r[b * d + a] = Complex32::new(v.re as f32, -v.im as f32);
            }
        }
        let epsilon = (1e-6 * diag / d as f64).max(1e-9);
        let warning = sample_warning(self.count);
        Ok(CovarianceModel {
            n_c: self.n_c,
            n_l: self.n_l,
            config_hash,
            sample_count: self.count,
            epsilon,
            mean: mean
                .iter()
                .map(|m| Complex32::new(m.re as f32, m.im as f32))
                .collect(),
            r_gg: r,
            warning,
        })
    }
}

/// Mean-removed empirical covariance of calibration grids.
pub fn estimate_covariance(samples: &[ComplexGrid], config_hash: u64) -> Result<CovarianceModel> {
    let Some(first) = samples.first() else {
        return Err(Error::Contract("covariance estimation needs at least one sample".into()));
    };
    let s = first.shape();
    if s.len() < 2 {
        return Err(Error::dim("estimate_covariance", format!("sample {s:?}")));
    }
    let mut acc = CovarianceAccumulator::new(s[s.len() - 2], s[s.len() - 1]);
    for g in samples {
        acc.push(g)?;
    }
    acc.finish(config_hash)
}

/// Precomputed `W = R_gp (R_pp + (eps + sigma^2) I)^-1` for one pilot pattern
/// and noise level.
#[derive(Clone, Debug)]
pub struct LmmseFilter {
    w: DMatrix<C64>,
    mean: Vec<C64>,
    pilot_positions: Vec<usize>,
    n_c: usize,
    n_l: usize,
}

impl LmmseFilter {
    pub fn new(cov: &CovarianceModel, pattern: &PilotPattern, noise_var: f64) -> Result<Self> {
        if cov.n_c != pattern.n_c() || cov.n_l != pattern.n_l() {
            return Err(Error::dim(
                "lmmse_interpolate",
                format!(
                    "covariance for {}x{}, pattern for {}x{}",
                    cov.n_c,
                    cov.n_l,
                    pattern.n_c(),
                    pattern.n_l()
                ),
            ));
        }
        if !(noise_var >= 0.0) {
            return Err(Error::Contract(format!("noise variance {noise_var}")));
        }
        let r = cov.matrix();
        let pos = pattern.flat_positions();
        let np = pos.len();
        let n = cov.dim();
        let loading = cov.epsilon + noise_var;
        let r_pp = DMatrix::from_fn(np, np, |i, j| {
            r[(pos[i], pos[j])] + if i == j { C64::new(loading, 0.0) } else { C64::new(0.0, 0.0) }
        });
        let r_gp_h = DMatrix::from_fn(np, n, |i, a| r[(a, pos[i])].conj());
        let chol = Cholesky::new(r_pp.clone()).ok_or_else(|| {
            let min_diag = (0..np).map(|i| r_pp[(i, i)].re).fold(f64::INFINITY, f64::min);
            Error::Numerical {
                op: "lmmse_interpolate",
                detail: format!(
                    "pilot covariance not positive definite ({np}x{np}, min diagonal {min_diag:e}, \
                     loading eps={:e}, noise={noise_var:e})",
                    cov.epsilon
                ),
            }
        })?;
        let w = chol.solve(&r_gp_h).adjoint();
        Ok(Self {
            w,
            mean: cov.mean_c64(),
            pilot_positions: pos,
            n_c: cov.n_c,
            n_l: cov.n_l,
        })
    }

    pub fn apply(&self, est: &PilotEstimate) -> Result<ComplexGrid> {
        let gs = est.g_p.shape();
        let np = self.pilot_positions.len();
        if gs.len() != 4 || gs[2] * gs[3] != np {
            return Err(Error::dim("lmmse_interpolate", format!("estimate {gs:?}")));
        }
        let (n_r, n_s) = (gs[0], gs[1]);
        let d = self.n_c * self.n_l;
        let mut out = ComplexGrid::zeros(&[n_r, n_s, self.n_c, self.n_l]);
        let mut centred = nalgebra::DVector::<C64>::zeros(np);
        for v in 0..n_r * n_s {
            let src = &est.g_p.data()[v * np..(v + 1) * np];
            for (i, (&x, &p)) in src.iter().zip(&self.pilot_positions).enumerate() {
                centred[i] = x - self.mean[p];
            }
            let filtered = &self.w * &centred;
            let dst = &mut out.data_mut()[v * d..(v + 1) * d];
            for (a, o) in dst.iter_mut().enumerate() {
                *o = self.mean[a] + filtered[a];
            }
        }
        Ok(out)
    }
}

/// `G_hat = m + R_gp (R_pp + sigma^2 I)^-1 (g_p - m_p)` per antenna and stream.
pub fn lmmse_interpolate(
    est: &PilotEstimate,
    cov: &CovarianceModel,
    noise_var: f64,
) -> Result<ComplexGrid> {
    LmmseFilter::new(cov, &est.pattern, noise_var)?.apply(est)
}
