use crate::error::{Error, Result};
use crate::grid::ComplexGrid;

/// Reports never go below this.
pub const NMSE_FLOOR_DB: f64 = -100.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nmse {
    pub linear: f64,
    pub db: f64,
}

pub fn nmse_db(linear: f64) -> f64 {
    10.0 * linear.max(1e-10).log10()
}

/// `sum |G - G_hat|^2 / sum |G|^2` for one sample.
pub fn nmse(g_true: &ComplexGrid, g_hat: &ComplexGrid) -> Result<Nmse> {
    let mut acc = NmseAccumulator::default();
    acc.push(g_true, g_hat)?;
    Ok(acc.result())
}

/// Batch NMSE: the mean of per-sample NMSE values.
#[derive(Clone, Debug, Default)]
pub struct NmseAccumulator {
    sum: f64,
    count: usize,
    per_sample: Vec<f64>,
}

impl NmseAccumulator {
    pub fn push(&mut self, g_true: &ComplexGrid, g_hat: &ComplexGrid) -> Result<f64> {
        if g_true.shape() != g_hat.shape() {
            return Err(Error::dim(
                "nmse",
                format!("{:?} vs {:?}", g_true.shape(), g_hat.shape()),
            ));
        }
        let err: f64 = g_true
            .data()
            .iter()
            .zip(g_hat.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        self.push_parts(err, g_true.norm_sqr())
    }

    /// Adds one sample from its squared-error and squared-norm sums.
    pub fn push_parts(&mut self, err: f64, power: f64) -> Result<f64> {
        if !(power > 0.0) {
            return Err(Error::Contract("NMSE undefined for an all-zero true channel".into()));
        }
        let v = err / power;
        self.sum += v;
        self.count += 1;
        self.per_sample.push(v);
        Ok(v)
    }

    pub fn merge(&mut self, other: NmseAccumulator) {
        self.sum += other.sum;
        self.count += other.count;
        self.per_sample.extend(other.per_sample);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn per_sample(&self) -> &[f64] {
        &self.per_sample
    }

    pub fn result(&self) -> Nmse {
        let linear = if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        };
        Nmse {
            linear,
            db: nmse_db(linear),
        }
    }
}
