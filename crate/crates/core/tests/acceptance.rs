//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Criteria 4-6 train networks. The default profile is a reduced one sized
//! for a single CPU core; `BIM_ACCEPT_SCALE=desk` selects the full desk-scale
//! profile (40k samples, 30 epochs, 3 seeds).

use std::process::Command;
use std::time::Instant;

use bimce::channel::{ebno_to_noise_var, PilotPattern, SimConfig, QPSK_BITS};
use bimce::classical::{interpolate, InterpMode, LmmseFilter, NmseAccumulator, PilotEstimate};
use bimce::config::ExperimentConfig;
use bimce::grid::{ComplexGrid, C64};
use bimce::harness::{
    bootstrap_diff_db, calibrate_covariance, generate_dataset, generate_tensor_set, run_study,
    train, Contender, EbnoDraw, ResultTable, SampleContext, BOOTSTRAP_REPS,
};
use bimce::io::encode_dataset;
use bimce::nets::{bim_overhead, count_complexity, Backbone, Checkpoint, Model, ModelSpec, Placement, TrainingMeta};
use bimce::rng::rng_for;
use bimce::selftest::{gradient_suite, ls_mse_check, miniature_spec, LS_SNRS_DB};
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, &snr) in LS_SNRS_DB.iter().enumerate() {
        match ls_mse_check(snr, 100_000, 11 + i as u64) {
            Ok(c) => {
                worst = worst.max(c.rel_error());
                parts.push(format!("{snr} dB: {:.2}%", 100.0 * c.rel_error()));
            }
            Err(e) => return outcome(false, format!("ls_mse_check failed: {e}")),
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst < 0.05 && secs < 30.0,
        format!("LS pilot MSE vs noise/pilot power, 1e5 trials: {} ({secs:.1}s)", parts.join(", ")),
    )
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let checks = match gradient_suite(2024) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("gradient suite failed: {e}")),
    };
    let secs = t0.elapsed().as_secs_f64();
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.clone()).collect();
    let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    outcome(
        failed.is_empty() && secs < 120.0,
        format!(
            "{} finite-difference cases, worst relative error {worst:.2e}, failing {:?} ({secs:.1}s)",
            checks.len(),
            failed
        ),
    )
}

/// Gaussian channels drawn from the simulator's own mean and covariance, so
/// LMMSE is the exact conditional-mean estimator.
fn criterion_3() -> Outcome {
    match classical_ordering() {
        Ok(o) => o,
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn classical_ordering() -> bimce::Result<Outcome> {
    let t0 = Instant::now();
    let cfg = ExperimentConfig::default();
    let pattern = cfg.pattern()?;
    let ctx = SampleContext::new(cfg.sim.clone(), pattern.clone())?;
    let cov = calibrate_covariance(&ctx, 2000, 77)?;
    let (n_r, n_c, n_l) = (cfg.sim.n_r, cfg.sim.n_c, cfg.sim.n_l);
    let chol = cov
        .loaded()
        .cholesky()
        .ok_or_else(|| bimce::Error::Contract("calibrated covariance is not positive definite".into()))?;
    let l = chol.l();
    let mean = DVector::from_vec(cov.mean_c64());
    let noise_var = ebno_to_noise_var(0.0, QPSK_BITS);
    let filter = LmmseFilter::new(&cov, &pattern, noise_var)?;
    let positions: Vec<(usize, usize)> = pattern
        .subcarriers()
        .iter()
        .flat_map(|&c| pattern.symbols().iter().map(move |&s| (c, s)))
        .collect();

    let mut rng = rng_for(3, 99, 0);
    let mut normal = |scale: f64| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re, im) * scale
    };
    let (mut near, mut lin, mut lmmse) = (NmseAccumulator::default(), NmseAccumulator::default(), NmseAccumulator::default());
    let d = n_c * n_l;
    for _ in 0..1000 {
        let mut truth = ComplexGrid::zeros(&[n_r, 1, n_c, n_l]);
        let mut g_p = ComplexGrid::zeros(&[n_r, 1, pattern.n_cp(), pattern.n_lp()]);
        for r in 0..n_r {
            let w = DVector::from_fn(d, |_, _| normal(std::f64::consts::FRAC_1_SQRT_2));
            let g = &mean + &l * w;
            truth.data_mut()[r * d..(r + 1) * d].copy_from_slice(g.as_slice());
            for (k, &(c, s)) in positions.iter().enumerate() {
                let (i, j) = (k / pattern.n_lp(), k % pattern.n_lp());
                let z = normal((noise_var / 2.0).sqrt());
                g_p.set(&[r, 0, i, j], g[c * n_l + s] + z);
            }
        }
        let est = PilotEstimate {
            g_p,
            pattern: pattern.clone(),
        };
        near.push(&truth, &interpolate(&est, InterpMode::Nearest)?.g)?;
        lin.push(&truth, &interpolate(&est, InterpMode::Linear)?.g)?;
        lmmse.push(&truth, &filter.apply(&est)?)?;
    }
    let (d1, lo1, hi1) = bootstrap_diff_db(lmmse.per_sample(), lin.per_sample(), BOOTSTRAP_REPS, 1);
    let (d2, lo2, hi2) = bootstrap_diff_db(lin.per_sample(), near.per_sample(), BOOTSTRAP_REPS, 2);
    let secs = t0.elapsed().as_secs_f64();
    Ok(outcome(
        hi1 < 0.0 && hi2 < 0.0 && secs < 300.0,
        format!(
            "EbNo 0 dB, 1e3 slots: lmmse {:.2} / linear {:.2} / nearest {:.2} dB; lmmse-linear {d1:.2} [{lo1:.2}, {hi1:.2}], linear-nearest {d2:.2} [{lo2:.2}, {hi2:.2}] ({secs:.1}s)",
            lmmse.result().db,
            lin.result().db,
            near.result().db
        ),
    ))
}

#[derive(Clone, Copy)]
struct Profile {
    name: &'static str,
    conv_channels: Option<usize>,
    train: usize,
    val: usize,
    test: usize,
    epochs: usize,
    batch: usize,
    lr: f64,
    seeds: usize,
}

const REDUCED: Profile = Profile {
    name: "reduced (conv width 16, 4000 samples, 10 epochs, batch 32, lr 2e-3, 3 seeds)",
    conv_channels: Some(16),
    train: 4000,
    val: 500,
    test: 500,
    epochs: 10,
    batch: 32,
    lr: 2e-3,
    seeds: 3,
};

const DESK: Profile = Profile {
    name: "desk (default widths, 40000 samples, 30 epochs, batch 128, lr 1e-3, 3 seeds)",
    conv_channels: None,
    train: 40_000,
    val: 2000,
    test: 1000,
    epochs: 30,
    batch: 128,
    lr: 1e-3,
    seeds: 3,
};

fn profile_config(p: &Profile, backbone: Backbone) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    if backbone == Backbone::Conv {
        cfg.model.channels = p.conv_channels;
    }
    cfg.data.train = p.train;
    cfg.data.val = p.val;
    cfg.data.test = p.test;
    cfg.train.epochs = p.epochs;
    cfg.train.batch = p.batch;
    cfg.train.lr = p.lr;
    cfg.train.seeds = p.seeds;
    cfg
}

fn net(backbone: Backbone, placement: Placement) -> Contender {
    Contender::Net { backbone, placement }
}

/// Trained results shared by criteria 4-6.
fn trained_results(p: &Profile) -> bimce::Result<ResultTable> {
    let log = |l: &str| eprintln!("  {l}");
    let conv = profile_config(p, Backbone::Conv);
    let mixer = profile_config(p, Backbone::Mixer);
    let mut table = run_study(
        &conv,
        48,
        &[
            net(Backbone::Conv, Placement::Off),
            net(Backbone::Conv, Placement::All),
            net(Backbone::Conv, Placement::DenoiseOnly),
            net(Backbone::Conv, Placement::ExpansionOnly),
        ],
        &[-20.0, 0.0],
        log,
    )?;
    table.extend(run_study(&conv, 24, &[net(Backbone::Conv, Placement::All)], &[-20.0], log)?);
    table.extend(run_study(
        &mixer,
        48,
        &[net(Backbone::Mixer, Placement::Off), net(Backbone::Mixer, Placement::All)],
        &[-20.0, 0.0],
        log,
    )?);
    Ok(table)
}

fn nmse(t: &ResultTable, id: &str, pilots: usize, ebno: f64) -> f64 {
    t.find(id, pilots, ebno).map_or(f64::NAN, |r| r.nmse_db)
}

fn criterion_4(t: &ResultTable) -> Outcome {
    let conv_gain = nmse(t, "conv_off", 48, -20.0) - nmse(t, "conv_all", 48, -20.0);
    let mixer_gain = nmse(t, "mixer_off", 48, -20.0) - nmse(t, "mixer_all", 48, -20.0);
    let mixer_gain_0 = nmse(t, "mixer_off", 48, 0.0) - nmse(t, "mixer_all", 48, 0.0);
    let conv_gain_0 = nmse(t, "conv_off", 48, 0.0) - nmse(t, "conv_all", 48, 0.0);
    outcome(
        conv_gain >= 0.5 && mixer_gain >= 0.5 && mixer_gain >= mixer_gain_0,
        format!(
            "BIM gain at -20 dB: conv {conv_gain:.2} dB, mixer {mixer_gain:.2} dB (need >= 0.5); at 0 dB: conv {conv_gain_0:.2}, mixer {mixer_gain_0:.2} (mixer gain must not grow)"
        ),
    )
}

fn criterion_5(t: &ResultTable) -> Outcome {
    let bim24 = nmse(t, "conv_all", 24, -20.0);
    let plain48 = nmse(t, "conv_off", 48, -20.0);
    outcome(
        bim24 <= plain48 + 0.5,
        format!("-20 dB: BIM-conv with 24 pilots {bim24:.2} dB vs plain conv with 48 pilots {plain48:.2} dB (allowed margin 0.5)"),
    )
}

fn criterion_6(t: &ResultTable) -> Outcome {
    let row = |id: &str| t.find(id, 48, -20.0);
    let (Some(all), Some(den), Some(exp), Some(off)) =
        (row("conv_all"), row("conv_denoise_only"), row("conv_expansion_only"), row("conv_off"))
    else {
        return outcome(false, "missing ablation rows");
    };
    let gap = (den.nmse_db - all.nmse_db).abs();
    let (d, lo, hi) = bootstrap_diff_db(&exp.per_sample, &off.per_sample, BOOTSTRAP_REPS, 6);
    outcome(
        gap <= 0.5 && hi < 0.0,
        format!(
            "-20 dB: denoise-only {:.2} vs all {:.2} dB (gap {gap:.2}, need <= 0.5); expansion-only minus off {d:.2} dB, 95% CI [{lo:.2}, {hi:.2}] (need < 0)",
            den.nmse_db, all.nmse_db
        ),
    )
}

fn criterion_7() -> Outcome {
    let cfg = ExperimentConfig::default();
    let Ok(pattern) = cfg.pattern() else {
        return outcome(false, "default pilot pattern rejected");
    };
    let mut specs: Vec<ModelSpec> = Vec::new();
    for backbone in [Backbone::Conv, Backbone::Mixer] {
        for placement in Placement::ALL {
            specs.push(ModelSpec::new(backbone, placement, cfg.sim.n_r, &pattern));
        }
    }
    specs.push(ModelSpec {
        channels: 20,
        blocks: 2,
        ..ModelSpec::new(Backbone::Conv, Placement::All, cfg.sim.n_r, &pattern)
    });
    specs.push(miniature_spec(Backbone::Mixer, Placement::All));
    let mut mismatches = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        // count the tensors that actually land in a checkpoint
        let enumerated = Model::<f32>::init(spec.clone(), i as u64)
            .map(|m| Checkpoint::new(m, TrainingMeta::default()).encode())
            .and_then(|b| Checkpoint::decode(&b))
            .map(|c| c.model.params().iter().map(|p| p.len()).sum::<usize>());
        match enumerated {
            Ok(n) if n == count_complexity(spec).params => {}
            Ok(n) => mismatches.push(format!("spec {i}: counted {} vs enumerated {n}", count_complexity(spec).params)),
            Err(e) => mismatches.push(format!("spec {i}: {e}")),
        }
    }
    let conv = ModelSpec::new(Backbone::Conv, Placement::All, cfg.sim.n_r, &pattern);
    let (pf, ff) = bim_overhead(&conv);
    outcome(
        mismatches.is_empty() && specs.len() >= 5 && pf < 0.07 && ff < 0.03,
        format!(
            "{} specs enumerated, mismatches {:?}; conv BIM overhead {:.2}% params, {:.2}% FLOPs",
            specs.len(),
            mismatches,
            100.0 * pf,
            100.0 * ff
        ),
    )
}

fn selftest_stdout() -> std::io::Result<(bool, Vec<u8>)> {
    let out = Command::new(env!("CARGO_BIN_EXE_bimce")).arg("--json-summary").arg("selftest").output()?;
    Ok((out.status.success(), out.stdout))
}

fn miniature_epoch() -> bimce::Result<Vec<u8>> {
    let sim = SimConfig {
        n_t: 4,
        n_r: 2,
        n_c: 8,
        n_l: 4,
        ..SimConfig::default()
    };
    let pattern = PilotPattern::even_stride(8, 4, 3, &[1, 3], 1)?;
    let ctx = SampleContext::new(sim, pattern)?;
    let draw = EbnoDraw::Uniform { lo: -20.0, hi: 0.0 };
    let train_set = generate_tensor_set(&ctx, 64, 5, draw)?;
    let val_set = generate_tensor_set(&ctx, 16, 6, draw)?;
    let mut tc = ExperimentConfig::default().train;
    tc.epochs = 1;
    tc.batch = 16;
    let spec = miniature_spec(Backbone::Conv, Placement::All);
    let out = train(&spec, &tc, &train_set, &val_set, |_| {})?;
    let mut bytes = out.checkpoint.encode();
    for s in &out.history {
        bytes.extend(s.train_loss.to_le_bytes());
        bytes.extend(s.val_nmse_db.to_le_bytes());
    }
    Ok(bytes)
}

fn dataset_bytes() -> bimce::Result<Vec<u8>> {
    let cfg = ExperimentConfig::default();
    let ctx = SampleContext::new(cfg.sim.clone(), cfg.pattern()?)?;
    let samples = generate_dataset(&ctx, 64, 42, EbnoDraw::Uniform { lo: -20.0, hi: 0.0 })?;
    encode_dataset(&ctx.dims(), &samples)
}

fn criterion_8() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    match (selftest_stdout(), selftest_stdout()) {
        (Ok((ok_a, a)), Ok((ok_b, b))) => {
            let same = ok_a && ok_b && a == b;
            pass &= same;
            notes.push(format!("selftest identical: {same}"));
        }
        _ => {
            pass = false;
            notes.push("selftest could not be run".into());
        }
    }
    match (dataset_bytes(), dataset_bytes()) {
        (Ok(a), Ok(b)) => {
            pass &= a == b;
            notes.push(format!("dataset ({} bytes) identical: {}", a.len(), a == b));
        }
        (Err(e), _) | (_, Err(e)) => {
            pass = false;
            notes.push(format!("dataset error: {e}"));
        }
    }
    match (miniature_epoch(), miniature_epoch()) {
        (Ok(a), Ok(b)) => {
            pass &= a == b;
            notes.push(format!("miniature epoch identical: {}", a == b));
        }
        (Err(e), _) | (_, Err(e)) => {
            pass = false;
            notes.push(format!("training error: {e}"));
        }
    }
    outcome(pass, notes.join(", "))
}

fn report(n: usize, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {n}: {tag}: {}", o.detail);
}

fn main() {
    let profile = match std::env::var("BIM_ACCEPT_SCALE").as_deref() {
        Ok("desk") => DESK,
        _ => REDUCED,
    };
    let mut results = Vec::new();
    for (n, f) in [(1, criterion_1 as fn() -> Outcome), (2, criterion_2), (3, criterion_3), (7, criterion_7), (8, criterion_8)] {
        let o = f();
        report(n, &o);
        results.push((n, o));
    }
    eprintln!("training for criteria 4-6 at {} scale", profile.name);
    let t0 = Instant::now();
    let trained: Vec<(usize, Outcome)> = match trained_results(&profile) {
        Ok(t) => vec![(4, criterion_4(&t)), (5, criterion_5(&t)), (6, criterion_6(&t))],
        Err(e) => (4..=6).map(|n| (n, outcome(false, format!("training failed: {e}")))).collect(),
    };
    let secs = t0.elapsed().as_secs_f64();
    for (n, mut o) in trained {
        o.detail = format!("{} [{} scale, trained in {secs:.0}s]", o.detail, profile.name);
        report(n, &o);
        results.push((n, o));
    }
    results.sort_by_key(|(n, _)| *n);
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
