//! Built-in verification suites: finite-difference gradient checks and the
//! LS error Monte-Carlo.

use rand::Rng;

use crate::channel::{transmit_equivalent, PilotPattern, ResourceGrid, DEFAULT_PILOT_SYMBOLS};
use crate::classical::ls_estimate;
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, C64};
use crate::nets::{bim_tape, Backbone, Model, ModelSpec, Placement};
use crate::rng::{derive_seed, rng_for, stream};
use crate::tensor::{finite_diff_check, Activation, Tape, Tensor, Var};

pub const GRAD_TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-5;
const MIN_MARGIN: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_error: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_TOLERANCE
    }
}

fn rand_tensor(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
}

/// Checks `f` with respect to each of `inputs`, holding the others constant.
/// Draws are repeated with fresh values until no ReLU input sits near its kink.
fn check_inputs<G>(name: &str, shapes: &[(&str, Vec<usize>)], seed: u64, f: G) -> Result<Vec<GradCheck>>
where
    G: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    for attempt in 0..50u64 {
        let mut rng = rng_for(seed, stream::CALIBRATION, attempt);
        let values: Vec<Tensor<f64>> = shapes.iter().map(|(_, s)| rand_tensor(s, 1.0, &mut rng)).collect();
        let mut probe = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| probe.constant(v.clone())).collect();
        f(&mut probe, &vars)?;
        if probe.min_relu_margin() < MIN_MARGIN {
            continue;
        }
        return shapes
            .iter()
            .enumerate()
            .map(|(j, (label, _))| {
                let err = finite_diff_check(
                    |tape, v| {
                        let vars: Vec<Var> = values
                            .iter()
                            .enumerate()
                            .map(|(i, t)| if i == j { v } else { tape.constant(t.clone()) })
                            .collect();
                        f(tape, &vars)
                    },
                    &values[j],
                    STEP,
                )?;
                Ok(GradCheck {
                    name: format!("{name}/{label}"),
                    max_rel_error: err,
                })
            })
            .collect();
    }
    Err(Error::Numerical {
        op: "gradient_suite",
        detail: format!("{name}: no draw kept ReLU inputs away from zero"),
    })
}

fn mse_to(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(y).shape().to_vec();
    let target = rand_tensor(&shape, 1.0, &mut rng_for(seed, stream::CALIBRATION, 999));
    tape.mse(y, &target)
}

/// Miniature spec used by the model-level checks.
pub fn miniature_spec(backbone: Backbone, placement: Placement) -> ModelSpec {
    let pattern = PilotPattern::even_stride(8, 4, 3, &[1, 3], 1).expect("valid miniature pattern");
    let mut spec = ModelSpec::new(backbone, placement, 2, &pattern);
    spec.channels = 4;
    spec.blocks = 1;
    spec
}

fn model_checks(backbone: Backbone, placement: Placement, seed: u64) -> Result<Vec<GradCheck>> {
    // unit input scale and a single sample keep ReLU inputs clear of the kink
    let spec = ModelSpec {
        input_scale: 1.0,
        ..miniature_spec(backbone, placement)
    };
    let label = format!("model[{}]", crate::harness::net_id(backbone, placement));
    for attempt in 0..200u64 {
        let s = derive_seed(seed, attempt, 0);
        let model = Model::<f64>::init(spec.clone(), s)?;
        let mut rng = rng_for(s, stream::CALIBRATION, 0);
        let x = rand_tensor(&spec.input_shape(1), 1.0, &mut rng);
        let belief = Tensor::from_fn(&[1, spec.n_r], |_| rng.gen_range(-20.0..0.0));
        let xin = model.prepare_input(&x)?;
        let bin = model.prepare_belief(&belief)?;
        // randomise biases so nothing starts exactly at zero
        let params: Vec<Tensor<f64>> = model
            .params()
            .iter()
            .map(|p| Tensor::from_fn(p.shape(), |i| p.data()[i] + rng.gen_range(-0.1..0.1)))
            .collect();
        let run = |tape: &mut Tape<f64>, vars: &[Var]| -> Result<Var> {
            let xv = tape.constant(xin.clone());
            let bv = tape.constant(bin.clone());
            let y = model.forward_with(tape, vars, xv, bv)?;
            mse_to(tape, y, s)
        };
        let mut probe = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| probe.constant(p.clone())).collect();
        run(&mut probe, &vars)?;
        if probe.min_relu_margin() < MIN_MARGIN {
            continue;
        }
        return model
            .names()
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let err = finite_diff_check(
                    |tape, v| {
                        let vars: Vec<Var> = params
                            .iter()
                            .enumerate()
                            .map(|(i, t)| if i == j { v } else { tape.constant(t.clone()) })
                            .collect();
                        run(tape, &vars)
                    },
                    &params[j],
                    STEP,
                )?;
                Ok(GradCheck {
                    name: format!("{label}/{name}"),
                    max_rel_error: err,
                })
            })
            .collect();
    }
    Err(Error::Numerical {
        op: "gradient_suite",
        detail: format!("{label}: no draw kept ReLU inputs away from zero"),
    })
}

/// Finite-difference checks of every layer and of miniature models of both
/// backbones.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let mut out = Vec::new();
    out.extend(check_inputs(
        "dense",
        &[("x", vec![3, 4]), ("W", vec![4, 5]), ("b", vec![5])],
        seed,
        |t, v| {
            let y = t.linear(v[0], v[1], v[2])?;
            mse_to(t, y, 1)
        },
    )?);
    out.extend(check_inputs(
        "conv",
        &[("x", vec![2, 3, 5, 4]), ("K", vec![2, 3, 3, 3]), ("b", vec![2])],
        seed,
        |t, v| {
            let y = t.conv2d(v[0], v[1], v[2])?;
            mse_to(t, y, 2)
        },
    )?);
    for act in [Activation::Relu, Activation::Sigmoid] {
        out.extend(check_inputs(act.name(), &[("x", vec![4, 6])], seed, |t, v| {
            let y = t.activation(v[0], act)?;
            mse_to(t, y, 3)
        })?);
    }
    out.extend(check_inputs(
        "gate",
        &[("features", vec![2, 3, 4, 2]), ("gate", vec![2, 3])],
        seed,
        |t, v| {
            let y = t.gate(v[0], v[1], 1)?;
            mse_to(t, y, 4)
        },
    )?);
    out.extend(check_inputs(
        "layer_norm",
        &[("x", vec![3, 6]), ("gamma", vec![6]), ("beta", vec![6])],
        seed,
        |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
            mse_to(t, y, 5)
        },
    )?);
    out.extend(check_inputs("resize_permute_scale", &[("x", vec![2, 3, 2, 2])], seed, |t, v| {
        let y = t.resize(v[0], &[0, 0, 1, 1, 1], &[1, 0, 1])?;
        let y = t.permute(y, &[0, 3, 1, 2])?;
        let y = t.scale(y, -2.5)?;
        mse_to(t, y, 6)
    })?);
    out.extend(check_inputs(
        "bim",
        &[
            ("belief", vec![2, 3]),
            ("W1", vec![3, 4]),
            ("b1", vec![4]),
            ("W2", vec![4, 5]),
            ("b2", vec![5]),
        ],
        seed,
        |t, v| {
            let s = bim_tape(t, v[0], v[1], v[2], v[3], v[4], Activation::Relu, Activation::Sigmoid)?;
            mse_to(t, s, 7)
        },
    )?);
    for backbone in [Backbone::Conv, Backbone::Mixer] {
        for placement in [Placement::All, Placement::Off] {
            out.extend(model_checks(backbone, placement, seed)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsMseCheck {
    pub snr_db: f64,
    pub trials: usize,
    pub measured: f64,
    pub expected: f64,
}

impl LsMseCheck {
    pub fn rel_error(&self) -> f64 {
        (self.measured - self.expected).abs() / self.expected
    }
}

/// Monte-Carlo LS error at the pilot positions: `trials` pilot estimates on a
/// random fixed channel with unit-energy QPSK pilots, against `1 / SNR`.
pub fn ls_mse_check(snr_db: f64, trials: usize, seed: u64) -> Result<LsMseCheck> {
    let (n_r, n_c, n_l) = (8, 48, 14);
    let pattern = PilotPattern::even_stride(n_c, n_l, 24, &DEFAULT_PILOT_SYMBOLS, 1)?;
    let mut rng = rng_for(seed, stream::CHANNEL, 0);
    let g = ComplexGrid::from_fn(&[n_r, 1, n_c, n_l], |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let mut x = ComplexGrid::zeros(&[1, n_c, n_l]);
    for (i, &k) in pattern.subcarriers().iter().enumerate() {
        for (j, &l) in pattern.symbols().iter().enumerate() {
            x.set(&[0, k, l], pattern.pilot_symbol(0, i, j));
        }
    }
    let grid = ResourceGrid {
        x,
        data_mask: vec![false; n_c * n_l],
        bits: Vec::new(),
        bits_per_symbol: 2,
    };
    let noise_var = 10f64.powf(-snr_db / 10.0);
    let per_slot = n_r * pattern.total();
    let slots = trials.div_ceil(per_slot);
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in 0..slots {
        let rx = transmit_equivalent(&g, &grid, &pattern, noise_var, derive_seed(seed, stream::NOISE, s as u64))?;
        let est = ls_estimate(&rx.y_p, &pattern)?;
        for r in 0..n_r {
            for (i, &k) in pattern.subcarriers().iter().enumerate() {
                for (j, &l) in pattern.symbols().iter().enumerate() {
                    if count == trials {
                        break;
                    }
                    sum += (est.g_p.get(&[r, 0, i, j]) - g.get(&[r, 0, k, l])).norm_sqr();
                    count += 1;
                }
            }
        }
    }
    Ok(LsMseCheck {
        snr_db,
        trials: count,
        measured: sum / count as f64,
        expected: noise_var,
    })
}

pub const LS_SNRS_DB: [f64; 4] = [-10.0, 0.0, 10.0, 20.0];
