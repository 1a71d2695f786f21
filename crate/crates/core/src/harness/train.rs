use std::time::Instant;

use rand::seq::SliceRandom;

use super::tensors::TensorSet;
use crate::classical::{nmse_db, NmseAccumulator};
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::nets::{Checkpoint, Model, ModelSpec, TrainingMeta};
use crate::rng::{rng_for, stream};
use crate::tensor::{AdamConfig, AdamState, Tape};

const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_nmse_db: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
    pub seconds: f64,
}

fn check_dims(spec: &ModelSpec, set: &TensorSet) -> Result<()> {
    let d = set.dims;
    if (d.n_r, d.n_c, d.n_l, d.n_cp, d.n_lp) != (spec.n_r, spec.n_c, spec.n_l, spec.n_cp(), spec.n_lp()) {
        return Err(Error::dim(
            "train",
            format!("dataset dims {d:?} do not match model spec"),
        ));
    }
    Ok(())
}

/// Per-sample NMSE of `model` over the whole set.
pub fn evaluate_model(model: &Model<f32>, set: &TensorSet) -> Result<NmseAccumulator> {
    check_dims(model.spec(), set)?;
    let mut acc = NmseAccumulator::default();
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, y, b) = set.batch(chunk);
        let pred = model.predict(&x, &b)?;
        let per = set.y_len();
        for (p, t) in pred.data().chunks(per).zip(y.data().chunks(per)) {
            let err: f64 = p.iter().zip(t).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
            let pow: f64 = t.iter().map(|&v| (v as f64).powi(2)).sum();
            acc.push_parts(err, pow)?;
        }
    }
    Ok(acc)
}

fn diverged(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::NonFinite { .. } => Error::Divergence {
            epoch,
            step,
            loss: f64::NAN,
        },
        other => other,
    }
}

/// Adam on the plane MSE, keeping the weights with the best validation NMSE.
pub fn train(
    spec: &ModelSpec,
    cfg: &TrainConfig,
    train_set: &TensorSet,
    val_set: &TensorSet,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    check_dims(spec, train_set)?;
    check_dims(spec, val_set)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Contract("training needs non-empty train and validation sets".into()));
    }
    let start = Instant::now();
    let mut model = Model::<f32>::init(spec.clone(), cfg.seed)?;
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        model.params(),
    );
    let initial = evaluate_model(&model, val_set)?.result().db;
    let mut history = vec![EpochStats {
        epoch: 0,
        train_loss: f64::NAN,
        val_nmse_db: initial,
        seconds: start.elapsed().as_secs_f64(),
    }];
    on_epoch(&history[0]);
    let mut best = (initial, 0, model.clone());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        order.shuffle(&mut rng_for(cfg.seed, stream::SHUFFLE, epoch as u64));
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for (step, chunk) in order.chunks(cfg.batch).enumerate() {
            let (x, y, b) = train_set.batch(chunk);
            let mut tape = Tape::<f32>::new();
            let out = model.forward(&mut tape, &x, &b).map_err(|e| diverged(e, epoch, step))?;
            let loss = tape.mse(out.output, &y).map_err(|e| diverged(e, epoch, step))?;
            let lv = tape.value(loss).data()[0] as f64;
            if !lv.is_finite() {
                return Err(Error::Divergence { epoch, step, loss: lv });
            }
            let grads = tape.backward(loss).map_err(|e| diverged(e, epoch, step))?;
            let g: Vec<_> = out.params.iter().map(|&v| grads.wrt(v)).collect();
            adam.step(model.params_mut(), &g)?;
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence { epoch, step, loss: lv });
            }
            loss_sum += lv * chunk.len() as f64;
            seen += chunk.len();
        }
        let val = evaluate_model(&model, val_set)?.result().db;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_nmse_db: val,
            seconds: t0.elapsed().as_secs_f64(),
        };
        on_epoch(&stats);
        history.push(stats);
        if val < best.0 || best.1 == 0 {
            best = (val, epoch, model.clone());
        }
    }
    let (val_nmse_db, best_epoch, model) = best;
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(
            model,
            TrainingMeta {
                seed: cfg.seed,
                epochs: cfg.epochs,
                best_epoch,
                val_nmse_db,
            },
        ),
        history,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Training-set NMSE in dB, for overfit checks.
pub fn fit_nmse_db(model: &Model<f32>, set: &TensorSet) -> Result<f64> {
    Ok(nmse_db(evaluate_model(model, set)?.result().linear))
}
