//! Line-based experiment configuration: `section.key = value`, `#` comments.
//!
//! Every key, its default and its meaning:
//!
//! | key                        | default            | meaning                                   |
//! |----------------------------|--------------------|-------------------------------------------|
//! | sim.carrier_frequency_hz   | 2.6e9              | carrier frequency                         |
//! | sim.subcarrier_spacing_hz  | 15000              | subcarrier spacing                        |
//! | sim.n_t  (N_t)             | 32                 | transmit antennas                         |
//! | sim.n_r  (N_r)             | 8                  | receive antennas                          |
//! | sim.n_s  (N_s)             | 1                  | spatial streams                           |
//! | sim.n_c  (N_c)             | 48                 | subcarriers per slot                      |
//! | sim.n_l  (N_l)             | 14                 | OFDM symbols per slot                     |
//! | sim.ue_speed_mps           | 20                 | UE speed                                  |
//! | sim.num_taps               | 8                  | delay taps                                |
//! | sim.delay_spread_s         | 3e-7               | RMS delay spread                          |
//! | sim.seed                   | 0                  | base seed for data generation             |
//! | pilots.per_symbol (N_cp)   | 24                 | pilot subcarriers per pilot symbol        |
//! | pilots.count               |                    | total pilots, sets per_symbol             |
//! | pilots.symbols             | 2,11               | pilot symbol indices (N_lp = their count) |
//! | model.backbone             | conv               | conv or mixer                             |
//! | model.placement            | all                | off, all, denoise_only, expansion_only    |
//! | model.channels             | 48 conv / 64 mixer | feature width                             |
//! | model.blocks               | 4                  | residual or mixer blocks                  |
//! | model.kernel               | 3                  | conv kernel size                          |
//! | model.inner_act            | relu               | gate hidden activation                    |
//! | model.outer_act            | sigmoid            | gate output activation                    |
//! | model.belief_mean_db       | -10                | belief standardisation mean               |
//! | model.belief_std_db        | 6                  | belief standardisation spread             |
//! | model.input_scale          | 0.2                | factor applied to input planes            |
//! | train.batch                | 128                | minibatch size                            |
//! | train.lr                   | 0.001              | Adam learning rate                        |
//! | train.epochs               | 30                 | epochs                                    |
//! | train.seed                 | 0                  | init and shuffle seed                     |
//! | train.seeds                | 3                  | replicate runs per trained cell           |
//! | data.train                 | 40000              | training samples                          |
//! | data.val                   | 2000               | validation samples                        |
//! | data.test                  | 1000               | test samples per EbNo point               |
//! | data.calibration           | 2000               | channels for LMMSE statistics             |
//! | data.ebno_min_db           | -20                | training EbNo range start                 |
//! | data.ebno_max_db           | 0                  | training EbNo range end                   |
//! | data.eval_ebno             | -20,-15,-10,-5,0   | evaluation EbNo points                    |

use std::path::Path;

use crate::channel::{PilotPattern, SimConfig, DEFAULT_PILOT_SYMBOLS};
use crate::error::{Error, Result};
use crate::nets::{Backbone, ModelSpec, Placement};
use crate::tensor::Activation;

#[derive(Clone, Debug, PartialEq)]
pub struct PilotConfig {
    pub per_symbol: usize,
    pub symbols: Vec<usize>,
}

impl PilotConfig {
    pub fn total(&self) -> usize {
        self.per_symbol * self.symbols.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub placement: Placement,
    /// `None` picks the backbone default.
    pub channels: Option<usize>,
    pub blocks: usize,
    pub kernel: usize,
    pub inner_act: Activation,
    pub outer_act: Activation,
    pub belief_mean_db: f64,
    pub belief_std_db: f64,
    pub input_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub seeds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 128,
            lr: 1e-3,
            epochs: 30,
            seed: 0,
            seeds: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub calibration: usize,
    pub ebno_min_db: f64,
    pub ebno_max_db: f64,
    pub eval_ebno: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub pilots: PilotConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            pilots: PilotConfig {
                per_symbol: 24,
                symbols: DEFAULT_PILOT_SYMBOLS.to_vec(),
            },
            model: ModelConfig {
                backbone: Backbone::Conv,
                placement: Placement::All,
                channels: None,
                blocks: 4,
                kernel: 3,
                inner_act: Activation::Relu,
                outer_act: Activation::Sigmoid,
                belief_mean_db: -10.0,
                belief_std_db: 6.0,
                input_scale: 0.2,
            },
            train: TrainConfig::default(),
            data: DataConfig {
                train: 40_000,
                val: 2_000,
                test: 1_000,
                calibration: 2_000,
                ebno_min_db: -20.0,
                ebno_max_db: 0.0,
                eval_ebno: vec![-20.0, -15.0, -10.0, -5.0, 0.0],
            },
        }
    }
}

fn alias(key: &str) -> &str {
    match key {
        "N_t" => "sim.n_t",
        "N_r" => "sim.n_r",
        "N_s" => "sim.n_s",
        "N_c" => "sim.n_c",
        "N_l" => "sim.n_l",
        "N_cp" => "pilots.per_symbol",
        other => other,
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(key, format!("cannot parse {v:?} as {}", std::any::type_name::<T>())))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| parse_num(key, x.trim())).collect()
}

impl ExperimentConfig {
    /// Sets one key; `key` may be a full `section.key` or a symbol alias such
    /// as `N_s`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = alias(key);
        let v = value.trim();
        let s = &mut self.sim;
        match k {
            "sim.carrier_frequency_hz" => s.carrier_frequency_hz = parse_num(key, v)?,
            "sim.subcarrier_spacing_hz" => s.subcarrier_spacing_hz = parse_num(key, v)?,
            "sim.n_t" => s.n_t = parse_num(key, v)?,
            "sim.n_r" => s.n_r = parse_num(key, v)?,
            "sim.n_s" => s.n_s = parse_num(key, v)?,
            "sim.n_c" => s.n_c = parse_num(key, v)?,
            "sim.n_l" => s.n_l = parse_num(key, v)?,
            "sim.ue_speed_mps" => s.ue_speed_mps = parse_num(key, v)?,
            "sim.num_taps" => s.num_taps = parse_num(key, v)?,
            "sim.delay_spread_s" => s.delay_spread_s = parse_num(key, v)?,
            "sim.seed" => s.seed = parse_num(key, v)?,
            "pilots.per_symbol" => self.pilots.per_symbol = parse_num(key, v)?,
            "pilots.symbols" => self.pilots.symbols = parse_list(key, v)?,
            "pilots.count" => {
                let total: usize = parse_num(key, v)?;
                let n_lp = self.pilots.symbols.len().max(1);
                if total % n_lp != 0 {
                    return Err(Error::config(
                        key,
                        format!("{total} pilots do not split evenly over {n_lp} pilot symbols"),
                    ));
                }
                self.pilots.per_symbol = total / n_lp;
            }
            "model.backbone" => {
                self.model.backbone = Backbone::parse(v).ok_or_else(|| Error::config(key, format!("unknown backbone {v:?} (conv, mixer)")))?
            }
            "model.placement" => {
                self.model.placement = Placement::parse(v).ok_or_else(|| {
                    Error::config(key, format!("unknown placement {v:?} (off, all, denoise_only, expansion_only)"))
                })?
            }
            "model.channels" => self.model.channels = Some(parse_num(key, v)?),
            "model.blocks" => self.model.blocks = parse_num(key, v)?,
            "model.kernel" => self.model.kernel = parse_num(key, v)?,
            "model.inner_act" | "model.outer_act" => {
                let a = Activation::parse(v).ok_or_else(|| Error::config(key, format!("unknown activation {v:?} (relu, sigmoid)")))?;
                if k == "model.inner_act" {
                    self.model.inner_act = a;
                } else {
                    self.model.outer_act = a;
                }
            }
            "model.belief_mean_db" => self.model.belief_mean_db = parse_num(key, v)?,
            "model.belief_std_db" => self.model.belief_std_db = parse_num(key, v)?,
            "model.input_scale" => self.model.input_scale = parse_num(key, v)?,
            "train.batch" => self.train.batch = parse_num(key, v)?,
            "train.lr" => self.train.lr = parse_num(key, v)?,
            "train.epochs" => self.train.epochs = parse_num(key, v)?,
            "train.seed" => self.train.seed = parse_num(key, v)?,
            "train.seeds" => self.train.seeds = parse_num(key, v)?,
            "data.train" => self.data.train = parse_num(key, v)?,
            "data.val" => self.data.val = parse_num(key, v)?,
            "data.test" => self.data.test = parse_num(key, v)?,
            "data.calibration" => self.data.calibration = parse_num(key, v)?,
            "data.ebno_min_db" => self.data.ebno_min_db = parse_num(key, v)?,
            "data.ebno_max_db" => self.data.ebno_max_db = parse_num(key, v)?,
            "data.eval_ebno" => self.data.eval_ebno = parse_list(key, v)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Malformed {
                what: "config",
                detail: format!("line {}: expected `key = value`, got {raw:?}", n + 1),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        let p = &self.pilots;
        if p.symbols.is_empty() || p.symbols.iter().any(|&l| l >= self.sim.n_l) {
            return Err(Error::config("pilots.symbols", format!("must be non-empty and below n_l = {}", self.sim.n_l)));
        }
        if p.per_symbol == 0 || p.per_symbol > self.sim.n_c {
            return Err(Error::config("pilots.per_symbol", format!("must be in 1..={}", self.sim.n_c)));
        }
        if self.train.batch == 0 {
            return Err(Error::config("train.batch", "must be positive"));
        }
        if !(self.train.lr > 0.0) {
            return Err(Error::config("train.lr", "must be positive"));
        }
        if self.train.seeds == 0 {
            return Err(Error::config("train.seeds", "must be positive"));
        }
        if !(self.data.ebno_min_db <= self.data.ebno_max_db) {
            return Err(Error::config("data.ebno_min_db", "must not exceed data.ebno_max_db"));
        }
        self.model_spec()?.validate()
    }

    pub fn pattern(&self) -> Result<PilotPattern> {
        self.pattern_with_total(self.pilots.total())
    }

    pub fn pattern_with_total(&self, total: usize) -> Result<PilotPattern> {
        PilotPattern::with_total(self.sim.n_c, self.sim.n_l, total, &self.pilots.symbols, self.sim.n_s)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        self.model_spec_for(&self.pattern()?, self.model.backbone, self.model.placement)
    }

    pub fn model_spec_for(&self, pattern: &PilotPattern, backbone: Backbone, placement: Placement) -> Result<ModelSpec> {
        let m = &self.model;
        let mut spec = ModelSpec::new(backbone, placement, self.sim.n_r, pattern);
        if let Some(c) = m.channels {
            spec.channels = c;
        }
        spec.blocks = m.blocks;
        spec.kernel = m.kernel;
        spec.inner_act = m.inner_act;
        spec.outer_act = m.outer_act;
        spec.belief_norm = (m.belief_mean_db, m.belief_std_db);
        spec.input_scale = m.input_scale;
        Ok(spec)
    }

    /// Canonical `key = value` listing of the whole configuration.
    pub fn echo(&self) -> String {
        let s = &self.sim;
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let flist = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let m = &self.model;
        let t = &self.train;
        let d = &self.data;
        let lines = [
            ("sim.carrier_frequency_hz", s.carrier_frequency_hz.to_string()),
            ("sim.subcarrier_spacing_hz", s.subcarrier_spacing_hz.to_string()),
            ("sim.n_t", s.n_t.to_string()),
            ("sim.n_r", s.n_r.to_string()),
            ("sim.n_s", s.n_s.to_string()),
            ("sim.n_c", s.n_c.to_string()),
            ("sim.n_l", s.n_l.to_string()),
            ("sim.ue_speed_mps", s.ue_speed_mps.to_string()),
            ("sim.num_taps", s.num_taps.to_string()),
            ("sim.delay_spread_s", s.delay_spread_s.to_string()),
            ("sim.seed", s.seed.to_string()),
            ("pilots.per_symbol", self.pilots.per_symbol.to_string()),
            ("pilots.symbols", list(&self.pilots.symbols)),
            ("model.backbone", m.backbone.name().into()),
            ("model.placement", m.placement.name().into()),
            ("model.channels", m.channels.map_or("default".into(), |c| c.to_string())),
            ("model.blocks", m.blocks.to_string()),
            ("model.kernel", m.kernel.to_string()),
            ("model.inner_act", m.inner_act.name().into()),
            ("model.outer_act", m.outer_act.name().into()),
            ("model.belief_mean_db", m.belief_mean_db.to_string()),
            ("model.belief_std_db", m.belief_std_db.to_string()),
            ("model.input_scale", m.input_scale.to_string()),
            ("train.batch", t.batch.to_string()),
            ("train.lr", t.lr.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.seed", t.seed.to_string()),
            ("train.seeds", t.seeds.to_string()),
            ("data.train", d.train.to_string()),
            ("data.val", d.val.to_string()),
            ("data.test", d.test.to_string()),
            ("data.calibration", d.calibration.to_string()),
            ("data.ebno_min_db", d.ebno_min_db.to_string()),
            ("data.ebno_max_db", d.ebno_max_db.to_string()),
            ("data.eval_ebno", flist(&d.eval_ebno)),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Stable hash of the full configuration.
    pub fn hash(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.echo().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// Reads `path` (if given), applies `overrides` in order and validates.
/// Returns the config and one echo line per applied override.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<(ExperimentConfig, Vec<String>)> {
    let mut cfg = ExperimentConfig::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile {
                path: p.display().to_string(),
                hint: "config file does not exist".into(),
            },
            _ => e.into(),
        })?;
        cfg.apply_text(&text)?;
    }
    let mut echoed = Vec::with_capacity(overrides.len());
    for (k, v) in overrides {
        cfg.set(k, v)?;
        echoed.push(format!("override {k} = {}", v.trim()));
    }
    cfg.validate()?;
    Ok((cfg, echoed))
}

/// Splits a `key=value` override argument.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    arg.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::Malformed {
            what: "override",
            detail: format!("expected key=value, got {arg:?}"),
        })
}
