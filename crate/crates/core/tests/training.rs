use bimce::channel::{PilotPattern, SimConfig};
use bimce::config::{ExperimentConfig, TrainConfig};
use bimce::harness::{
    generate_dataset, generate_tensor_set, ks_uniform, train, EbnoDraw, SampleContext, TensorSet,
};
use bimce::nets::{
    count_complexity, param_layout, BimParams, Backbone, Model, ModelSpec, Placement,
};
use bimce::selftest::miniature_spec;
use bimce::tensor::{AdamConfig, AdamState, Tape, Tensor};

fn miniature_context() -> SampleContext {
    let sim = SimConfig {
        n_t: 4,
        n_r: 2,
        n_c: 8,
        n_l: 4,
        ..SimConfig::default()
    };
    SampleContext::new(sim, PilotPattern::even_stride(8, 4, 3, &[1, 3], 1).unwrap()).unwrap()
}

const TRAIN_DRAW: EbnoDraw = EbnoDraw::Uniform { lo: -20.0, hi: 0.0 };

fn train_config(epochs: usize, batch: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch,
        lr,
        ..ExperimentConfig::default().train
    }
}

#[test]
fn training_ebno_is_uniform() {
    let cfg = ExperimentConfig::default();
    let ctx = SampleContext::new(cfg.sim.clone(), cfg.pattern().unwrap()).unwrap();
    let ebnos: Vec<f64> = (0..10_000u64)
        .map(|i| bimce::harness::sample_plan(17, i, TRAIN_DRAW).1)
        .collect();
    let ks = ks_uniform(&ebnos, -20.0, 0.0);
    assert!(ks.p_value > 0.01, "KS p = {}", ks.p_value);
    // the generator really uses the planned values
    let samples = generate_dataset(&ctx, 4, 17, TRAIN_DRAW).unwrap();
    for (i, s) in samples.iter().enumerate() {
        assert_eq!(s.ebno_db, ebnos[i] as f32);
    }
}

#[test]
fn overfits_a_single_batch() {
    let ctx = miniature_context();
    let set = generate_tensor_set(&ctx, 32, 3, TRAIN_DRAW).unwrap();
    for (backbone, lr) in [(Backbone::Conv, 5e-3), (Backbone::Mixer, 1e-2)] {
        let spec = ModelSpec {
            channels: 64,
            ..miniature_spec(backbone, Placement::All)
        };
        let out = train(&spec, &train_config(200, 32, lr), &set, &set, |_| {}).unwrap();
        let best = out.checkpoint.meta.val_nmse_db;
        assert!(best < -30.0, "{backbone:?}: training NMSE after 200 steps: {best} dB");
    }
}

#[test]
fn first_epoch_is_bit_identical() {
    let ctx = miniature_context();
    let run = || {
        let train_set = generate_tensor_set(&ctx, 48, 1, TRAIN_DRAW).unwrap();
        let val_set = generate_tensor_set(&ctx, 16, 2, TRAIN_DRAW).unwrap();
        let spec = miniature_spec(Backbone::Mixer, Placement::All);
        let out = train(&spec, &train_config(1, 16, 1e-3), &train_set, &val_set, |_| {}).unwrap();
        (out.history[1].train_loss.to_bits(), out.checkpoint.encode())
    };
    assert_eq!(run(), run());
}

fn untrained_nmse(spec: &ModelSpec, set: &TensorSet) -> f64 {
    let out = train(spec, &train_config(0, 32, 1e-3), set, set, |_| {}).unwrap();
    out.history[0].val_nmse_db
}

#[test]
fn untrained_models_predict_near_zero() {
    let cfg = ExperimentConfig::default();
    let pattern = cfg.pattern().unwrap();
    let ctx = SampleContext::new(cfg.sim.clone(), pattern.clone()).unwrap();
    let set = generate_tensor_set(&ctx, 64, 5, TRAIN_DRAW).unwrap();
    for backbone in [Backbone::Conv, Backbone::Mixer] {
        for placement in [Placement::Off, Placement::All] {
            for channels in [16, 48] {
                let spec = ModelSpec {
                    channels,
                    ..cfg.model_spec_for(&pattern, backbone, placement).unwrap()
                };
                let db = untrained_nmse(&spec, &set);
                assert!(db.abs() < 3.0, "{backbone:?}/{placement:?}/{channels}: {db} dB");
            }
        }
    }
}

#[test]
fn parameter_count_matches_enumeration() {
    let cfg = ExperimentConfig::default();
    let pattern = cfg.pattern().unwrap();
    let mut n = 0;
    for backbone in [Backbone::Conv, Backbone::Mixer] {
        for placement in Placement::ALL {
            for (channels, blocks) in [(8, 1), (24, 3)] {
                let spec = ModelSpec {
                    channels,
                    blocks,
                    ..ModelSpec::new(backbone, placement, cfg.sim.n_r, &pattern)
                };
                let model = Model::<f32>::init(spec.clone(), 0).unwrap();
                let enumerated: usize = model.named().map(|(_, t)| t.len()).sum();
                let c = count_complexity(&spec);
                assert_eq!(c.params, enumerated, "{spec:?}");
                let bim: usize = model.named().filter(|(k, _)| k.contains(".bim.")).map(|(_, t)| t.len()).sum();
                assert_eq!(c.bim_params, bim);
                n += 1;
            }
        }
    }
    assert!(n >= 5);
}

#[test]
fn belief_gate_parameter_formula() {
    let p = BimParams::zeros(8, 8, 48);
    let count = p.w1.len() + p.b1.len() + p.w2.len() + p.b2.len();
    assert_eq!(count, 8 * 8 + 8 + 8 * 48 + 48);
    assert_eq!(count, 504);
    // a layout gate uses hidden = max(n_r, c / 4)
    let cfg = ExperimentConfig::default();
    let spec = ModelSpec {
        channels: 32,
        ..ModelSpec::new(Backbone::Conv, Placement::DenoiseOnly, 8, &cfg.pattern().unwrap())
    };
    let layout = param_layout(&spec);
    let gate: usize = layout
        .iter()
        .filter(|p| p.name.starts_with("denoise.in.bim."))
        .map(|p| p.len())
        .sum();
    assert_eq!(gate, 8 * 8 + 8 + 8 * 32 + 32);
}

#[test]
fn gradients_reach_belief_gates() {
    let ctx = miniature_context();
    let set = generate_tensor_set(&ctx, 4, 9, TRAIN_DRAW).unwrap();
    let spec = miniature_spec(Backbone::Conv, Placement::All);
    let mut model = Model::<f32>::init(spec, 1).unwrap();
    let (x, y, belief) = set.batch(&[0, 1, 2, 3]);
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &x, &belief).unwrap();
    let loss = tape.mse(out.output, &y).unwrap();
    let grads = tape.backward(loss).unwrap();
    let g: Vec<Tensor<f32>> = out.params.iter().map(|&v| grads.wrt(v)).collect();
    let before = model.clone();
    let mut any = false;
    for (name, grad) in model.names().iter().zip(&g) {
        if name.contains(".bim.") && name.ends_with("weight") {
            any |= grad.sum_sq_f64() > 0.0;
        }
    }
    assert!(any, "no gradient reached a belief gate");
    let mut adam = AdamState::new(AdamConfig::default(), model.params());
    adam.step(model.params_mut(), &g).unwrap();
    let changed = model
        .named()
        .zip(before.named())
        .filter(|((k, a), (_, b))| k.contains(".bim.") && a != b)
        .count();
    assert!(changed > 0);
}
