//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::{parse_config, parse_override, ExperimentConfig};
use crate::error::{Error, Result};
use crate::harness::{
    calibrate_covariance, evaluate, generate_range, generate_tensor_set, pilot_sweep, placement_ablation, train, Contender, EbnoDraw, Estimator, ResultTable, SampleContext, TensorSet,
};
use crate::io::{read_covariance, read_dataset, write_covariance, DatasetWriter};
use crate::nets::{count_complexity, Backbone, Checkpoint, Placement};
use crate::rng::{derive_seed, stream};
use crate::selftest::{gradient_suite, ls_mse_check, LS_SNRS_DB};

#[derive(Parser, Debug)]
#[command(name = "bimce", version, about = "Belief-gated MIMO-OFDM channel estimation lab")]
struct Cli {
    /// Configuration file of `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Sets both sim.seed and train.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for relative output paths.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Print a machine-readable run summary on stdout.
    #[arg(long, global = true)]
    json_summary: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a dataset file.
    Generate {
        #[arg(long)]
        n: usize,
        /// Fixed EbNo in dB; default draws uniformly from the training range.
        #[arg(long, allow_hyphen_values = true)]
        ebno: Option<f64>,
        #[arg(long, default_value = "dataset.bin")]
        out: PathBuf,
    },
    /// Train the configured model and write a checkpoint.
    Train {
        /// Training dataset; generated from the config when omitted.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long, default_value = "model.ckpt")]
        out: PathBuf,
    },
    /// Score one estimator at every configured EbNo.
    Evaluate {
        /// genie, ls_nearest, ls_linear, lmmse or net.
        #[arg(long)]
        estimator: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Covariance cache for lmmse; created when missing.
        #[arg(long)]
        covariance: Option<PathBuf>,
        #[arg(long, default_value = "evaluate.csv")]
        out: PathBuf,
    },
    /// Pilot-count study at -20 dB.
    Sweep {
        /// Comma-separated estimator ids, e.g. `ls_linear,conv_off,conv_all`.
        #[arg(long, default_value = "ls_nearest,ls_linear,lmmse,conv_off,conv_all")]
        estimators: String,
        #[arg(long, default_value = "48,40,32,24")]
        pilots: String,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Gate placement study on the conv backbone.
    Ablate {
        #[arg(long, default_value = "ablation.csv")]
        out: PathBuf,
    },
    /// Parameter and FLOP counts for every backbone and placement.
    Count,
    /// Gradient checks and the LS error Monte-Carlo.
    Selftest,
}

fn resolve(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut overrides = Vec::new();
    if let Some(s) = cli.seed {
        overrides.push(("sim.seed".to_string(), s.to_string()));
        overrides.push(("train.seed".to_string(), s.to_string()));
    }
    for o in &cli.overrides {
        overrides.push(parse_override(o)?);
    }
    let (cfg, echoed) = parse_config(cli.config.as_deref(), &overrides)?;
    for line in echoed {
        eprintln!("{line}");
    }
    Ok(cfg)
}

fn headline(table: &ResultTable) -> serde_json::Value {
    serde_json::Value::Array(
        table
            .rows
            .iter()
            .map(|r| json!({"estimator": r.estimator, "pilots": r.pilots, "ebno_db": r.ebno_db, "nmse_db": r.nmse_db}))
            .collect(),
    )
}

fn write_csv(path: &Path, table: &ResultTable) -> Result<()> {
    std::fs::write(path, table.to_csv())?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn log(line: &str) {
    eprintln!("{line}");
}

fn dataset_set(path: &Path, ctx: &SampleContext) -> Result<TensorSet> {
    let (dims, samples) = read_dataset(path)?;
    if dims != ctx.dims() {
        return Err(Error::dim(
            "train",
            format!("{} has dims {dims:?}, config implies {:?}", path.display(), ctx.dims()),
        ));
    }
    TensorSet::from_samples(dims, &samples)
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    let cfg = load_config(cli)?;
    let hash = format!("{:016x}", cfg.hash());
    std::fs::create_dir_all(&cli.out_dir)?;
    match &cli.command {
        Command::Generate { n, ebno, out } => {
            if *n == 0 {
                return Err(Error::config("n", "dataset needs at least one sample"));
            }
            let ctx = SampleContext::new(cfg.sim.clone(), cfg.pattern()?)?;
            let draw = match ebno {
                Some(e) => EbnoDraw::Fixed(*e),
                None => EbnoDraw::Uniform {
                    lo: cfg.data.ebno_min_db,
                    hi: cfg.data.ebno_max_db,
                },
            };
            let path = resolve(&cli.out_dir, out);
            let mut w = DatasetWriter::create(&path, ctx.dims(), *n)?;
            let mut start = 0;
            while start < *n {
                let m = 1024.min(n - start);
                for s in generate_range(&ctx, cfg.sim.seed, start as u64, m, draw)? {
                    w.write(&s)?;
                }
                start += m;
            }
            w.finish()?;
            eprintln!("wrote {} samples to {}", n, path.display());
            Ok(json!({"command": "generate", "config_hash": hash, "samples": n, "path": path}))
        }
        Command::Train { train: tp, val: vp, out } => {
            let pattern = cfg.pattern()?;
            let ctx = SampleContext::new(cfg.sim.clone(), pattern.clone())?;
            let spec = cfg.model_spec_for(&pattern, cfg.model.backbone, cfg.model.placement)?;
            let draw = EbnoDraw::Uniform {
                lo: cfg.data.ebno_min_db,
                hi: cfg.data.ebno_max_db,
            };
            let train_set = match tp {
                Some(p) => dataset_set(p, &ctx)?,
                None => generate_tensor_set(&ctx, cfg.data.train, derive_seed(cfg.sim.seed, stream::SAMPLE, 1), draw)?,
            };
            let val_set = match vp {
                Some(p) => dataset_set(p, &ctx)?,
                None => generate_tensor_set(&ctx, cfg.data.val, derive_seed(cfg.sim.seed, stream::SAMPLE, 2), draw)?,
            };
            let outcome = train(&spec, &cfg.train, &train_set, &val_set, |s| {
                eprintln!(
                    "epoch {} loss {:.6} val_nmse {:.3} dB ({:.1}s)",
                    s.epoch, s.train_loss, s.val_nmse_db, s.seconds
                )
            })?;
            let path = resolve(&cli.out_dir, out);
            outcome.checkpoint.save(&path)?;
            eprintln!("wrote {}", path.display());
            let m = &outcome.checkpoint.meta;
            Ok(json!({
                "command": "train",
                "estimator": crate::harness::net_id(spec.backbone, spec.placement),
                "config_hash": hash,
                "best_epoch": m.best_epoch,
                "val_nmse_db": m.val_nmse_db,
                "history": outcome.history.iter().map(|h| json!({"epoch": h.epoch, "loss": h.train_loss, "val_nmse_db": h.val_nmse_db})).collect::<Vec<_>>(),
            }))
        }
        Command::Evaluate {
            estimator,
            checkpoint,
            covariance,
            out,
        } => {
            let est = match estimator.as_str() {
                "net" => {
                    let path = checkpoint.as_ref().ok_or_else(|| Error::MissingFile {
                        path: "<none>".into(),
                        hint: "the net estimator needs --checkpoint <file> (create one with `bimce train`)".into(),
                    })?;
                    Estimator::Net(Box::new(Checkpoint::load(path)?.model))
                }
                "lmmse" => {
                    let ctx = SampleContext::new(cfg.sim.clone(), cfg.pattern()?)?;
                    let fp = cfg.sim.fingerprint();
                    let cov = match covariance {
                        Some(p) if p.exists() => read_covariance(p, Some(fp))?,
                        other => {
                            let c = calibrate_covariance(&ctx, cfg.data.calibration, cfg.sim.seed)?;
                            if let Some(w) = &c.warning {
                                eprintln!("warning: {w}");
                            }
                            if let Some(p) = other {
                                write_covariance(p, &c)?;
                            }
                            c
                        }
                    };
                    Estimator::Lmmse(Box::new(cov))
                }
                id => match Contender::parse(id) {
                    Some(Contender::Genie) => Estimator::Genie,
                    Some(Contender::Ls(m)) => Estimator::Ls(m),
                    Some(Contender::Net { .. }) => {
                        return Err(Error::MissingFile {
                            path: checkpoint
                                .as_ref()
                                .map_or("<none>".into(), |p| p.display().to_string()),
                            hint: format!("learned estimator {id} is evaluated with --estimator net --checkpoint <file>"),
                        })
                    }
                    _ => return Err(Error::config("estimator", format!("unknown estimator {id:?}"))),
                },
            };
            let table = evaluate(&est, &cfg, &cfg.data.eval_ebno)?;
            write_csv(&resolve(&cli.out_dir, out), &table)?;
            Ok(json!({"command": "evaluate", "estimator": est.id(), "config_hash": hash, "nmse": headline(&table)}))
        }
        Command::Sweep { estimators, pilots, out } => {
            let contenders = estimators
                .split(',')
                .map(|s| Contender::parse(s.trim()).ok_or_else(|| Error::config("estimators", format!("unknown estimator {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            let counts = pilots
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| Error::config("pilots", format!("bad count {s:?}"))))
                .collect::<Result<Vec<usize>>>()?;
            let table = pilot_sweep(&cfg, &counts, &contenders, log)?;
            write_csv(&resolve(&cli.out_dir, out), &table)?;
            Ok(json!({"command": "sweep", "config_hash": hash, "nmse": headline(&table)}))
        }
        Command::Ablate { out } => {
            let table = placement_ablation(&cfg, log)?;
            write_csv(&resolve(&cli.out_dir, out), &table)?;
            Ok(json!({"command": "ablate", "config_hash": hash, "nmse": headline(&table)}))
        }
        Command::Count => {
            let pattern = cfg.pattern()?;
            println!("model,placement,params,flops,bim_params,bim_flops");
            let mut rows = Vec::new();
            for backbone in [Backbone::Conv, Backbone::Mixer] {
                for placement in Placement::ALL {
                    let spec = cfg.model_spec_for(&pattern, backbone, placement)?;
                    let c = count_complexity(&spec);
                    println!(
                        "{},{},{},{},{},{}",
                        backbone.name(),
                        placement.name(),
                        c.params,
                        c.flops,
                        c.bim_params,
                        c.bim_flops
                    );
                    rows.push(json!({"backbone": backbone.name(), "placement": placement.name(), "params": c.params, "flops": c.flops}));
                }
            }
            eprintln!("flops are 2 x MACs per forward pass on one sample");
            Ok(json!({"command": "count", "config_hash": hash, "models": rows}))
        }
        Command::Selftest => {
            let mut failures = 0;
            let checks = gradient_suite(cfg.train.seed)?;
            for c in &checks {
                if !c.passed() {
                    failures += 1;
                    eprintln!("FAIL gradient {} rel err {:.3e}", c.name, c.max_rel_error);
                }
            }
            let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
            eprintln!("gradient checks: {} cases, worst relative error {worst:.3e}", checks.len());
            let mut ls = Vec::new();
            for snr in LS_SNRS_DB {
                let r = ls_mse_check(snr, 20_000, derive_seed(cfg.sim.seed, stream::NOISE, snr.to_bits()))?;
                let ok = r.rel_error() < 0.05;
                if !ok {
                    failures += 1;
                }
                eprintln!(
                    "{} LS MSE at {snr} dB: measured {:.5e}, expected {:.5e}",
                    if ok { "ok" } else { "FAIL" },
                    r.measured,
                    r.expected
                );
                ls.push(json!({"snr_db": snr, "measured": r.measured, "expected": r.expected}));
            }
            if failures > 0 {
                return Err(Error::Numerical {
                    op: "selftest",
                    detail: format!("{failures} checks failed"),
                });
            }
            Ok(json!({"command": "selftest", "config_hash": hash, "gradient_cases": checks.len(), "worst_gradient_error": worst, "ls_mse": ls}))
        }
    }
}

/// Parses `argv` and runs the command. Returns the process exit code: 0 on
/// success, 2 for usage errors, 1 for any other failure.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(summary) => {
            if cli.json_summary {
                println!("{summary}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
