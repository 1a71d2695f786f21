use std::path::Path;
use std::process::{Command, Output};

use bimce::config::parse_config;
use bimce::Error;

fn bimce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bimce"))
        .args(args)
        .env("RAYON_NUM_THREADS", "1")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn selftest_exits_zero() {
    let o = bimce(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = bimce(&["count", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).to_lowercase().contains("usage"), "{}", stderr(&o));
    assert_eq!(bimce(&["launch"]).status.code(), Some(2));
}

#[test]
fn unknown_key_is_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bimce(&["--set", "model.widht=3", "--out-dir", out, "generate", "--n", "4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model.widht"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn evaluate_without_checkpoint_names_the_file() {
    let o = bimce(&["evaluate", "--estimator", "net", "--checkpoint", "/no/such/model.ckpt"]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("/no/such/model.ckpt") && msg.contains("bimce train"), "{msg}");

    let o = bimce(&["evaluate", "--estimator", "net"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--checkpoint"), "{}", stderr(&o));
}

/// CSV rows with the wall-clock column dropped.
fn csv_without_timing(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn evaluate_is_reproducible() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let o = bimce(&[
            "--set",
            "data.test=16",
            "--seed",
            "5",
            "--out-dir",
            d.path().to_str().unwrap(),
            "evaluate",
            "--estimator",
            "ls_nearest",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = csv_without_timing(&dirs[0].path().join("evaluate.csv"));
    let b = csv_without_timing(&dirs[1].path().join("evaluate.csv"));
    assert_eq!(a[0], "estimator,pilots,ebno_db,nmse_db,nmse_ci_lo,nmse_ci_hi,params,flops");
    assert_eq!(a.len(), 6);
    assert_eq!(a, b);
}

#[test]
fn generate_train_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let common = ["--set", "model.channels=4", "--set", "train.epochs=1", "--set", "data.test=8", "--out-dir", d];
    let run = |extra: &[&str]| {
        let args: Vec<&str> = common.iter().chain(extra).copied().collect();
        let o = bimce(&args);
        assert!(o.status.success(), "{extra:?}: {}", stderr(&o));
    };
    run(&["generate", "--n", "16", "--out", "train.bin"]);
    run(&["generate", "--n", "8", "--out", "val.bin"]);
    // outputs land in --out-dir, inputs are ordinary paths
    let at = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let (tr, va, ck) = (at("train.bin"), at("val.bin"), at("model.ckpt"));
    run(&["train", "--train", &tr, "--val", &va, "--out", "model.ckpt"]);
    assert!(dir.path().join("model.ckpt").exists());
    run(&["evaluate", "--estimator", "net", "--checkpoint", &ck, "--out", "net.csv"]);
    let rows = csv_without_timing(&dir.path().join("net.csv"));
    assert_eq!(rows.len(), 6);
    assert!(rows[1].starts_with("conv_all,48,-20,"), "{}", rows[1]);
}

#[test]
fn empty_config_file_gives_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.cfg");
    std::fs::write(&path, "").unwrap();
    let (cfg, _) = parse_config(Some(&path), &[]).unwrap();
    let s = &cfg.sim;
    assert_eq!((s.n_t, s.n_r, s.n_c, s.n_l), (32, 8, 48, 14));
    let p = cfg.pattern().unwrap();
    assert_eq!((p.n_cp(), p.n_lp()), (24, 2));
}

#[test]
fn overrides_are_echoed_and_validated() {
    let (cfg, echo) = parse_config(None, &[("train.batch".into(), "64".into())]).unwrap();
    assert_eq!(cfg.train.batch, 64);
    assert!(echo.iter().any(|l| l.contains("train.batch") && l.contains("64")));
    let err = parse_config(None, &[("N_s".into(), "99".into())]).unwrap_err();
    assert!(matches!(err, Error::Config { .. }));
    assert!(err.to_string().contains("N_s") || err.to_string().contains("n_s"), "{err}");
}

#[test]
fn missing_config_file_is_reported() {
    let err = parse_config(Some(Path::new("/no/such.cfg")), &[]).unwrap_err();
    assert!(err.to_string().contains("/no/such.cfg"));
}
