use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use super::sample::{sample_channel, EbnoDraw, SampleContext};
use super::stats::{bootstrap_db_ci, BOOTSTRAP_REPS};
use super::tensors::{generate_tensor_set, TensorSet};
use super::train::{evaluate_model, train};
use crate::channel::{ebno_to_noise_var, PilotPattern, QPSK_BITS};
use crate::classical::{interpolate, nmse_db, CovarianceAccumulator, CovarianceModel, InterpMode, LmmseFilter, NmseAccumulator};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::nets::{count_complexity, Backbone, Model, Placement};
use crate::rng::{derive_seed, stream};

pub const CSV_HEADER: &str = "estimator,pilots,ebno_db,nmse_db,nmse_ci_lo,nmse_ci_hi,params,flops,seconds";

/// A channel estimator that can be scored against the truth.
#[derive(Clone, Debug)]
pub enum Estimator {
    /// Returns the true channel.
    Genie,
    Ls(InterpMode),
    Lmmse(Box<CovarianceModel>),
    Net(Box<Model<f32>>),
}

impl Estimator {
    pub fn id(&self) -> String {
        match self {
            Estimator::Genie => "genie".into(),
            Estimator::Ls(InterpMode::Nearest) => "ls_nearest".into(),
            Estimator::Ls(InterpMode::Linear) => "ls_linear".into(),
            Estimator::Lmmse(_) => "lmmse".into(),
            Estimator::Net(m) => net_id(m.spec().backbone, m.spec().placement),
        }
    }

    fn complexity(&self) -> (usize, usize) {
        match self {
            Estimator::Net(m) => {
                let c = count_complexity(m.spec());
                (c.params, c.flops)
            }
            _ => (0, 0),
        }
    }
}

pub fn net_id(backbone: Backbone, placement: Placement) -> String {
    format!("{}_{}", backbone.name(), placement.name())
}

/// Per-sample NMSE of `est` on `set`, whose samples all share `ebno_db`.
pub fn score(est: &Estimator, set: &TensorSet, pattern: &PilotPattern, ebno_db: f64) -> Result<NmseAccumulator> {
    if let Estimator::Net(m) = est {
        return evaluate_model(m, set);
    }
    let filter = match est {
        Estimator::Lmmse(cov) => Some(LmmseFilter::new(cov, pattern, ebno_to_noise_var(ebno_db, QPSK_BITS))?),
        _ => None,
    };
    let per: Vec<(f64, f64)> = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let truth = set.truth(i);
            let g_hat = match est {
                Estimator::Genie => truth.clone(),
                Estimator::Ls(mode) => interpolate(&set.pilot_estimate(i, pattern), *mode)?.g,
                Estimator::Lmmse(_) => filter.as_ref().expect("built above").apply(&set.pilot_estimate(i, pattern))?,
                Estimator::Net(_) => unreachable!(),
            };
            let err: f64 = truth.data().iter().zip(g_hat.data()).map(|(a, b)| (a - b).norm_sqr()).sum();
            Ok((err, truth.norm_sqr()))
        })
        .collect::<Result<_>>()?;
    let mut acc = NmseAccumulator::default();
    for (e, p) in per {
        acc.push_parts(e, p)?;
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub estimator: String,
    pub pilots: usize,
    pub ebno_db: f64,
    pub nmse_db: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub params: usize,
    pub flops: usize,
    pub seconds: f64,
    /// Per-test-sample NMSE (linear), averaged over replicate runs.
    pub per_sample: Vec<f64>,
    /// NMSE in dB of each replicate run.
    pub replicate_db: Vec<f64>,
}

impl ResultRow {
    fn from_samples(estimator: String, pilots: usize, ebno_db: f64, per_sample: Vec<f64>, replicate_db: Vec<f64>, seed: u64) -> Self {
        let mean = per_sample.iter().sum::<f64>() / per_sample.len().max(1) as f64;
        let (ci_lo, ci_hi) = bootstrap_db_ci(&per_sample, BOOTSTRAP_REPS, seed);
        Self {
            estimator,
            pilots,
            ebno_db,
            nmse_db: nmse_db(mean),
            ci_lo,
            ci_hi,
            params: 0,
            flops: 0,
            seconds: 0.0,
            per_sample,
            replicate_db,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn find(&self, estimator: &str, pilots: usize, ebno_db: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.pilots == pilots && (r.ebno_db - ebno_db).abs() < 1e-9)
    }

    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.4},{:.4},{:.4},{},{},{:.3}",
                r.estimator, r.pilots, r.ebno_db, r.nmse_db, r.ci_lo, r.ci_hi, r.params, r.flops, r.seconds
            );
        }
        s
    }
}

/// What to put in a study.
#[derive(Clone, Debug, PartialEq)]
pub enum Contender {
    Genie,
    Ls(InterpMode),
    Lmmse,
    Net { backbone: Backbone, placement: Placement },
}

impl Contender {
    pub fn id(&self) -> String {
        match self {
            Contender::Genie => "genie".into(),
            Contender::Ls(InterpMode::Nearest) => "ls_nearest".into(),
            Contender::Ls(InterpMode::Linear) => "ls_linear".into(),
            Contender::Lmmse => "lmmse".into(),
            Contender::Net { backbone, placement } => net_id(*backbone, *placement),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "genie" => Some(Contender::Genie),
            "ls_nearest" => Some(Contender::Ls(InterpMode::Nearest)),
            "ls_linear" => Some(Contender::Ls(InterpMode::Linear)),
            "lmmse" => Some(Contender::Lmmse),
            _ => {
                let (b, p) = s.split_once('_')?;
                Some(Contender::Net {
                    backbone: Backbone::parse(b)?,
                    placement: Placement::parse(p)?,
                })
            }
        }
    }
}

/// Empirical channel statistics from `n` calibration channels.
pub fn calibrate_covariance(ctx: &SampleContext, n: usize, seed: u64) -> Result<CovarianceModel> {
    let mut acc = CovarianceAccumulator::new(ctx.sim.n_c, ctx.sim.n_l);
    let chunk = 256;
    let mut start = 0;
    while start < n {
        let m = chunk.min(n - start);
        let grids: Vec<_> = (start..start + m)
            .into_par_iter()
            .map(|i| sample_channel(ctx, derive_seed(seed, stream::CALIBRATION, i as u64)))
            .collect::<Result<_>>()?;
        for g in &grids {
            acc.push(g)?;
        }
        start += m;
    }
    acc.finish(ctx.sim.fingerprint())
}

/// Test sets, one per EbNo point, shared by every contender of a study.
pub fn test_sets(cfg: &ExperimentConfig, ctx: &SampleContext, ebnos: &[f64]) -> Result<Vec<TensorSet>> {
    ebnos
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let seed = derive_seed(cfg.sim.seed, stream::EBNO, 1000 + j as u64);
            generate_tensor_set(ctx, cfg.data.test, seed, EbnoDraw::Fixed(e))
        })
        .collect()
}

/// Scores an already-built estimator at every EbNo.
pub fn evaluate(est: &Estimator, cfg: &ExperimentConfig, ebnos: &[f64]) -> Result<ResultTable> {
    let pattern = match est {
        Estimator::Net(m) => {
            let spec = m.spec();
            let p = PilotPattern::with_total(cfg.sim.n_c, cfg.sim.n_l, spec.n_cp() * spec.n_lp(), &spec.pilot_symbols, cfg.sim.n_s)?;
            if p.subcarriers() != spec.pilot_subcarriers || spec.n_r != cfg.sim.n_r {
                return Err(Error::dim("evaluate", "checkpoint geometry does not match the config"));
            }
            p
        }
        _ => cfg.pattern()?,
    };
    let ctx = SampleContext::new(cfg.sim.clone(), pattern.clone())?;
    let sets = test_sets(cfg, &ctx, ebnos)?;
    let (params, flops) = est.complexity();
    let mut table = ResultTable::default();
    for (j, (&e, set)) in ebnos.iter().zip(&sets).enumerate() {
        let t0 = Instant::now();
        let acc = score(est, set, &pattern, e)?;
        let db = acc.result().db;
        let mut row = ResultRow::from_samples(est.id(), pattern.total(), e, acc.per_sample().to_vec(), vec![db], j as u64);
        row.params = params;
        row.flops = flops;
        row.seconds = t0.elapsed().as_secs_f64();
        table.rows.push(row);
    }
    Ok(table)
}

/// Trains (with `cfg.train.seeds` replicates) or builds every contender for
/// one pilot count and scores it on shared test sets.
pub fn run_study(
    cfg: &ExperimentConfig,
    pilots: usize,
    contenders: &[Contender],
    ebnos: &[f64],
    mut log: impl FnMut(&str),
) -> Result<ResultTable> {
    let pattern = cfg.pattern_with_total(pilots)?;
    let ctx = SampleContext::new(cfg.sim.clone(), pattern.clone())?;
    let tests = test_sets(cfg, &ctx, ebnos)?;
    let needs_training = contenders.iter().any(|c| matches!(c, Contender::Net { .. }));
    let data = if needs_training {
        log(&format!("pilots={pilots}: generating {} train / {} val samples", cfg.data.train, cfg.data.val));
        let draw = EbnoDraw::Uniform {
            lo: cfg.data.ebno_min_db,
            hi: cfg.data.ebno_max_db,
        };
        let train_set = generate_tensor_set(&ctx, cfg.data.train, derive_seed(cfg.sim.seed, stream::SAMPLE, 1), draw)?;
        let val_set = generate_tensor_set(&ctx, cfg.data.val, derive_seed(cfg.sim.seed, stream::SAMPLE, 2), draw)?;
        Some((train_set, val_set))
    } else {
        None
    };
    let mut table = ResultTable::default();
    for c in contenders {
        let t0 = Instant::now();
        // one estimator per replicate; classical ones are deterministic
        let mut ests = Vec::new();
        match c {
            Contender::Genie => ests.push(Estimator::Genie),
            Contender::Ls(m) => ests.push(Estimator::Ls(*m)),
            Contender::Lmmse => {
                let cov = calibrate_covariance(&ctx, cfg.data.calibration, cfg.sim.seed)?;
                ests.push(Estimator::Lmmse(Box::new(cov)));
            }
            Contender::Net { backbone, placement } => {
                let (train_set, val_set) = data.as_ref().expect("generated above");
                let spec = cfg.model_spec_for(&pattern, *backbone, *placement)?;
                for rep in 0..cfg.train.seeds {
                    let mut tc = cfg.train.clone();
                    tc.seed = derive_seed(cfg.train.seed, stream::INIT, rep as u64);
                    let id = c.id();
                    let out = train(&spec, &tc, train_set, val_set, |s| {
                        log(&format!(
                            "pilots={pilots} {id} rep={rep} epoch={} loss={:.5} val_nmse={:.3} dB ({:.1}s)",
                            s.epoch, s.train_loss, s.val_nmse_db, s.seconds
                        ))
                    })?;
                    ests.push(Estimator::Net(Box::new(out.checkpoint.model)));
                }
            }
        }
        let train_seconds = t0.elapsed().as_secs_f64();
        for (j, (&e, set)) in ebnos.iter().zip(&tests).enumerate() {
            let t1 = Instant::now();
            let mut per = vec![0.0; set.len()];
            let mut reps = Vec::with_capacity(ests.len());
            for est in &ests {
                let acc = score(est, set, &pattern, e)?;
                reps.push(acc.result().db);
                for (p, v) in per.iter_mut().zip(acc.per_sample()) {
                    *p += v / ests.len() as f64;
                }
            }
            let mut row = ResultRow::from_samples(c.id(), pilots, e, per, reps, j as u64);
            let (params, flops) = ests[0].complexity();
            row.params = params;
            row.flops = flops;
            row.seconds = train_seconds / ebnos.len() as f64 + t1.elapsed().as_secs_f64();
            log(&format!("pilots={pilots} {} ebno={e} nmse={:.3} dB [{:.3}, {:.3}]", row.estimator, row.nmse_db, row.ci_lo, row.ci_hi));
            table.rows.push(row);
        }
    }
    Ok(table)
}

pub const SWEEP_PILOTS: [usize; 4] = [48, 40, 32, 24];

/// Every contender at every pilot count, scored at -20 dB.
pub fn pilot_sweep(cfg: &ExperimentConfig, counts: &[usize], contenders: &[Contender], mut log: impl FnMut(&str)) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    for &n in counts {
        table.extend(run_study(cfg, n, contenders, &[-20.0], &mut log)?);
    }
    Ok(table)
}

/// The four gate placements of the conv backbone under identical data and seeds.
pub fn placement_ablation(cfg: &ExperimentConfig, log: impl FnMut(&str)) -> Result<ResultTable> {
    let contenders: Vec<Contender> = Placement::ALL
        .into_iter()
        .map(|placement| Contender::Net {
            backbone: Backbone::Conv,
            placement,
        })
        .collect();
    run_study(cfg, cfg.pilots.total(), &contenders, &cfg.data.eval_ebno, log)
}
