use num_complex::Complex32;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{
    build_grid, ebno_to_noise_var, generate_channel, transmit_equivalent, PilotPattern, SimConfig, QPSK_BITS,
};
use crate::classical::{genie_belief, ls_estimate, PilotEstimate};
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, C64};
use crate::rng::{derive_seed, rng_for, stream};

/// Everything needed to turn a seed and an EbNo into a sample.
#[derive(Clone, Debug)]
pub struct SampleContext {
    pub sim: SimConfig,
    pub pattern: PilotPattern,
}

impl SampleContext {
    pub fn new(sim: SimConfig, pattern: PilotPattern) -> Result<Self> {
        sim.validate()?;
        if sim.n_s != 1 {
            return Err(Error::config("sim.n_s", "sample generation supports a single stream"));
        }
        if pattern.n_c() != sim.n_c || pattern.n_l() != sim.n_l {
            return Err(Error::dim("SampleContext", "pilot pattern does not match the grid"));
        }
        Ok(Self { sim, pattern })
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n_r: self.sim.n_r,
            n_s: self.sim.n_s,
            n_c: self.sim.n_c,
            n_l: self.sim.n_l,
            n_cp: self.pattern.n_cp(),
            n_lp: self.pattern.n_lp(),
        }
    }
}

/// Array geometry shared by every sample of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n_r: usize,
    pub n_s: usize,
    pub n_c: usize,
    pub n_l: usize,
    pub n_cp: usize,
    pub n_lp: usize,
}

impl Dims {
    pub fn full_len(&self) -> usize {
        self.n_r * self.n_s * self.n_c * self.n_l
    }

    pub fn pilot_len(&self) -> usize {
        self.n_r * self.n_s * self.n_cp * self.n_lp
    }
}

/// One training/evaluation example in single precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub ebno_db: f32,
    pub seed: u64,
    /// Linear per-antenna SNR.
    pub belief: Vec<f32>,
    /// `[n_r, n_s, n_c, n_l]`
    pub g_true: Vec<Complex32>,
    /// `[n_r, n_s, n_cp, n_lp]`
    pub g_ls_p: Vec<Complex32>,
}

fn to_c32(g: &ComplexGrid) -> Vec<Complex32> {
    g.data().iter().map(|c| Complex32::new(c.re as f32, c.im as f32)).collect()
}

fn to_grid(shape: &[usize], v: &[Complex32]) -> ComplexGrid {
    ComplexGrid::new(shape.to_vec(), v.iter().map(|c| C64::new(c.re as f64, c.im as f64)).collect())
        .expect("sample length matches its dims")
}

impl Sample {
    pub fn g_true_grid(&self, d: &Dims) -> ComplexGrid {
        to_grid(&[d.n_r, d.n_s, d.n_c, d.n_l], &self.g_true)
    }

    pub fn pilot_estimate(&self, d: &Dims, pattern: &PilotPattern) -> PilotEstimate {
        PilotEstimate {
            g_p: to_grid(&[d.n_r, d.n_s, d.n_cp, d.n_lp], &self.g_ls_p),
            pattern: pattern.clone(),
        }
    }

    pub fn belief_db(&self) -> Vec<f32> {
        self.belief.iter().map(|m| 10.0 * m.log10()).collect()
    }
}

/// True equivalent channel `G = H P` for a channel seed.
pub fn sample_channel(ctx: &SampleContext, seed: u64) -> Result<ComplexGrid> {
    let ch = generate_channel(&ctx.sim, derive_seed(seed, stream::CHANNEL, 0))?;
    let p = ch.precoder(ctx.sim.n_s)?;
    ch.equivalent(&p)
}

/// Channel, random QPSK payload, noisy reception, LS at the pilots and the
/// genie belief. Fully determined by `(seed, ebno_db, ctx)`.
pub fn generate_sample(ctx: &SampleContext, seed: u64, ebno_db: f64) -> Result<Sample> {
    let g = sample_channel(ctx, seed)?;
    let n_bits = ctx.sim.n_s * (ctx.sim.n_c * ctx.sim.n_l - ctx.pattern.total()) * QPSK_BITS;
    let mut rng = rng_for(seed, stream::BITS, 0);
    let bits: Vec<u8> = (0..n_bits).map(|_| rng.gen_range(0..=1u8)).collect();
    let grid = build_grid(&bits, &ctx.pattern, ctx.sim.n_s)?;
    let noise_var = ebno_to_noise_var(ebno_db, QPSK_BITS);
    let rx = transmit_equivalent(&g, &grid, &ctx.pattern, noise_var, seed)?;
    let ls = ls_estimate(&rx.y_p, &ctx.pattern)?;
    let belief = genie_belief(&g, noise_var)?;
    Ok(Sample {
        ebno_db: ebno_db as f32,
        seed,
        belief: belief.mu.iter().map(|&m| m as f32).collect(),
        g_true: to_c32(&g),
        g_ls_p: to_c32(&ls.g_p),
    })
}

/// How sample EbNo values are chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EbnoDraw {
    Uniform { lo: f64, hi: f64 },
    Fixed(f64),
}

/// Seed and EbNo of sample `i` of a dataset with base seed `seed`.
pub fn sample_plan(seed: u64, i: u64, draw: EbnoDraw) -> (u64, f64) {
    let s = derive_seed(seed, stream::SAMPLE, i);
    let ebno = match draw {
        EbnoDraw::Fixed(v) => v,
        EbnoDraw::Uniform { lo, hi } => {
            let u: f64 = rng_for(seed, stream::EBNO, i).gen();
            lo + (hi - lo) * u
        }
    };
    (s, ebno)
}

/// Samples `start..start + n` of a dataset, computed in parallel.
pub fn generate_range(ctx: &SampleContext, seed: u64, start: u64, n: usize, draw: EbnoDraw) -> Result<Vec<Sample>> {
    (start..start + n as u64)
        .into_par_iter()
        .map(|i| {
            let (s, e) = sample_plan(seed, i, draw);
            generate_sample(ctx, s, e)
        })
        .collect()
}

pub fn generate_dataset(ctx: &SampleContext, n: usize, seed: u64, draw: EbnoDraw) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::config("n", "dataset needs at least one sample"));
    }
    generate_range(ctx, seed, 0, n, draw)
}
