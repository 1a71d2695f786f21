use std::collections::HashMap;

use super::bim::{bim_tape, standardize_belief};
use super::layout::param_layout;
use super::spec::{Backbone, ModelSpec, Stage};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};
use crate::tensor::{Real, Tape, Tensor, Var};

const LN_EPS: f64 = 1e-5;

/// A network: its spec plus one tensor per layout entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Real = f32> {
    spec: ModelSpec,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
}

/// Result of recording a forward pass.
pub struct ModelOutput {
    pub output: Var,
    /// Tape handles of the parameters, in layout order.
    pub params: Vec<Var>,
}

impl<T: Real> Model<T> {
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_for(seed, stream::INIT, 0);
        let layout = param_layout(&spec);
        let names = layout.iter().map(|p| p.name.clone()).collect();
        let params = layout
            .iter()
            .map(|p| p.init.sample(&p.shape, p.fan_in, p.fan_out, &mut rng))
            .collect();
        Ok(Self { spec, names, params })
    }

    /// Builds a model from named tensors, which must match the layout exactly.
    pub fn from_named(spec: ModelSpec, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        spec.validate()?;
        let layout = param_layout(&spec);
        let mut by_name: HashMap<String, Tensor<T>> = named.into_iter().collect();
        let mut params = Vec::with_capacity(layout.len());
        for p in &layout {
            let t = by_name.remove(&p.name).ok_or_else(|| Error::Malformed {
                what: "checkpoint",
                detail: format!("missing tensor {}", p.name),
            })?;
            if t.shape() != p.shape.as_slice() {
                return Err(Error::Malformed {
                    what: "checkpoint",
                    detail: format!("{} has shape {:?}, expected {:?}", p.name, t.shape(), p.shape),
                });
            }
            params.push(t);
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::Malformed {
                what: "checkpoint",
                detail: format!("unexpected tensor {extra}"),
            });
        }
        Ok(Self {
            spec,
            names: layout.into_iter().map(|p| p.name).collect(),
            params,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.params[i])
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    /// Applies the fixed input scale to `[B, 2 N_r, N_cp, N_lp]` planes.
    pub fn prepare_input(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let b = x.shape().first().copied().unwrap_or(0);
        if x.shape() != self.spec.input_shape(b) {
            return Err(Error::dim(
                "model_forward",
                format!("input {:?}, expected {:?}", x.shape(), self.spec.input_shape(b)),
            ));
        }
        let k = T::of(self.spec.input_scale);
        Ok(Tensor::from_fn(x.shape(), |i| x.data()[i] * k))
    }

    /// Standardises a `[B, N_r]` belief given in dB.
    pub fn prepare_belief(&self, belief_db: &Tensor<T>) -> Result<Tensor<T>> {
        if belief_db.shape().len() != 2 || belief_db.shape()[1] != self.spec.n_r {
            return Err(Error::dim(
                "model_forward",
                format!("belief {:?}, expected [B, {}]", belief_db.shape(), self.spec.n_r),
            ));
        }
        let db: Vec<f64> = belief_db.data().iter().map(|v| v.as_f64()).collect();
        Tensor::from_f64_slice(belief_db.shape(), &standardize_belief(&db, self.spec.belief_norm))
    }

    /// Records a forward pass with every parameter as a trainable leaf.
    pub fn forward(&self, tape: &mut Tape<T>, x: &Tensor<T>, belief_db: &Tensor<T>) -> Result<ModelOutput> {
        let x = self.prepare_input(x)?;
        let belief = self.prepare_belief(belief_db)?;
        if belief.shape()[0] != x.shape()[0] {
            return Err(Error::dim(
                "model_forward",
                format!("batch {} vs belief batch {}", x.shape()[0], belief.shape()[0]),
            ));
        }
        let params: Vec<Var> = self.params.iter().map(|p| tape.param(p.clone())).collect();
        let xv = tape.constant(x);
        let bv = tape.constant(belief);
        let output = self.forward_with(tape, &params, xv, bv)?;
        Ok(ModelOutput { output, params })
    }

    /// Inference without keeping gradients.
    pub fn predict(&self, x: &Tensor<T>, belief_db: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, x, belief_db)?;
        Ok(tape.value(out.output).clone())
    }

    /// Forward pass on caller-supplied handles: `params` in layout order,
    /// `x` already scaled, `belief` already standardised. The output is
    /// returned in unscaled channel units.
    pub fn forward_with(&self, tape: &mut Tape<T>, params: &[Var], x: Var, belief: Var) -> Result<Var> {
        if params.len() != self.params.len() {
            return Err(Error::dim(
                "model_forward",
                format!("{} parameter handles for {} tensors", params.len(), self.params.len()),
            ));
        }
        let ctx = Ctx {
            spec: &self.spec,
            names: &self.names,
            params,
            belief,
        };
        let y = match self.spec.backbone {
            Backbone::Conv => ctx.conv_net(tape, x)?,
            Backbone::Mixer => ctx.mixer_net(tape, x)?,
        };
        tape.scale(y, 1.0 / self.spec.input_scale)
    }
}

struct Ctx<'a> {
    spec: &'a ModelSpec,
    names: &'a [String],
    params: &'a [Var],
    belief: Var,
}

impl Ctx<'_> {
    fn p(&self, name: &str) -> Result<Var> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.params[i])
            .ok_or_else(|| Error::Contract(format!("layout has no parameter {name}")))
    }

    fn conv<T: Real>(&self, tape: &mut Tape<T>, name: &str, x: Var) -> Result<Var> {
        tape.conv2d(x, self.p(&format!("{name}.weight"))?, self.p(&format!("{name}.bias"))?)
    }

    fn dense<T: Real>(&self, tape: &mut Tape<T>, name: &str, x: Var) -> Result<Var> {
        tape.linear(x, self.p(&format!("{name}.weight"))?, self.p(&format!("{name}.bias"))?)
    }

    fn norm<T: Real>(&self, tape: &mut Tape<T>, name: &str, x: Var) -> Result<Var> {
        tape.layer_norm(x, self.p(&format!("{name}.gamma"))?, self.p(&format!("{name}.beta"))?, LN_EPS)
    }

    /// Gates `x` along `axis` if `stage` is selected by the placement.
    fn gate<T: Real>(&self, tape: &mut Tape<T>, name: &str, x: Var, stage: Stage, axis: usize) -> Result<Var> {
        if !self.spec.placement.gates(stage) {
            return Ok(x);
        }
        let s = bim_tape(
            tape,
            self.belief,
            self.p(&format!("{name}.bim.fc1.weight"))?,
            self.p(&format!("{name}.bim.fc1.bias"))?,
            self.p(&format!("{name}.bim.fc2.weight"))?,
            self.p(&format!("{name}.bim.fc2.bias"))?,
            self.spec.inner_act,
            self.spec.outer_act,
        )?;
        tape.gate(x, s, axis)
    }

    fn conv_gated<T: Real>(&self, tape: &mut Tape<T>, name: &str, x: Var, stage: Stage) -> Result<Var> {
        let y = self.conv(tape, name, x)?;
        self.gate(tape, name, y, stage, 1)
    }

    fn conv_net<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let mut h = self.conv_gated(tape, "denoise.in", x, Stage::Denoise)?;
        for i in 0..self.spec.blocks {
            let r = self.conv_gated(tape, &format!("denoise.block{i}.conv1"), h, Stage::Denoise)?;
            let r = tape.relu(r)?;
            let r = self.conv_gated(tape, &format!("denoise.block{i}.conv2"), r, Stage::Denoise)?;
            h = tape.add(h, r)?;
        }
        let (rows, cols) = self.spec.resize_maps();
        let h = tape.resize(h, &rows, &cols)?;
        let h = self.conv_gated(tape, "expand.up", h, Stage::Expansion)?;
        let h = tape.relu(h)?;
        self.conv_gated(tape, "expand.out", h, Stage::Expansion)
    }

    fn mixer_net<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let s = self.spec;
        let io = s.io_channels();
        let batch = tape.value(x).shape()[0];
        let t = s.n_cp();
        // [B, io, T, Lp] -> [B, T, Lp * io]
        let h = tape.permute(x, &[0, 2, 3, 1])?;
        let h = tape.reshape(h, &[batch, t, s.n_lp() * io])?;
        let mut h = self.dense(tape, "embed", h)?;
        for i in 0..s.blocks {
            let p = format!("mixer{i}");
            let n = self.norm(tape, &format!("{p}.token_norm"), h)?;
            let n = tape.permute(n, &[0, 2, 1])?;
            let n = self.dense(tape, &format!("{p}.token_fc1"), n)?;
            let n = tape.relu(n)?;
            let n = self.dense(tape, &format!("{p}.token_fc2"), n)?;
            let n = tape.permute(n, &[0, 2, 1])?;
            h = tape.add(h, n)?;

            let n = self.norm(tape, &format!("{p}.channel_norm"), h)?;
            let n = self.dense(tape, &format!("{p}.channel_fc1"), n)?;
            let n = self.gate(tape, &format!("{p}.channel_fc1"), n, Stage::Denoise, 2)?;
            let n = tape.relu(n)?;
            let n = self.dense(tape, &format!("{p}.channel_fc2"), n)?;
            h = tape.add(h, n)?;
        }
        let h = self.norm(tape, "head.norm", h)?;
        let h = tape.permute(h, &[0, 2, 1])?;
        let h = self.dense(tape, "head.token", h)?;
        let h = self.gate(tape, "head.token", h, Stage::Expansion, 1)?;
        let h = tape.permute(h, &[0, 2, 1])?;
        let h = self.dense(tape, "head.feature", h)?;
        let h = tape.reshape(h, &[batch, s.n_c, s.n_l, io])?;
        tape.permute(h, &[0, 3, 1, 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::Placement;

    fn spec(backbone: Backbone, placement: Placement) -> ModelSpec {
        ModelSpec {
            backbone,
            placement,
            channels: 4,
            blocks: 1,
            kernel: 3,
            n_r: 2,
            n_c: 8,
            n_l: 4,
            pilot_subcarriers: vec![0, 3, 6],
            pilot_symbols: vec![1, 3],
            inner_act: crate::tensor::Activation::Relu,
            outer_act: crate::tensor::Activation::Sigmoid,
            belief_norm: (-10.0, 6.0),
            input_scale: 0.5,
        }
    }

    fn input(s: &ModelSpec, b: usize) -> Tensor<f64> {
        Tensor::from_fn(&s.input_shape(b), |i| ((i * 37 % 11) as f64 - 5.0) / 3.0)
    }

    #[test]
    fn output_shapes() {
        for backbone in [Backbone::Conv, Backbone::Mixer] {
            for placement in Placement::ALL {
                let s = spec(backbone, placement);
                let m = Model::<f64>::init(s.clone(), 3).unwrap();
                let y = m.predict(&input(&s, 2), &Tensor::full(&[2, 2], -5.0)).unwrap();
                assert_eq!(y.shape(), s.output_shape(2));
            }
        }
    }

    #[test]
    fn off_ignores_belief() {
        for backbone in [Backbone::Conv, Backbone::Mixer] {
            let s = spec(backbone, Placement::Off);
            let m = Model::<f32>::init(s.clone(), 1).unwrap();
            let x = input(&s, 1).cast();
            let a = m.predict(&x, &Tensor::full(&[1, 2], -20.0)).unwrap();
            let b = m.predict(&x, &Tensor::new(vec![1, 2], vec![3.0, -7.0]).unwrap()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gated_placements_see_belief() {
        for backbone in [Backbone::Conv, Backbone::Mixer] {
            for placement in [Placement::All, Placement::DenoiseOnly, Placement::ExpansionOnly] {
                let s = spec(backbone, placement);
                let m = Model::<f64>::init(s.clone(), 2).unwrap();
                let x = input(&s, 1);
                let a = m.predict(&x, &Tensor::full(&[1, 2], -20.0)).unwrap();
                let b = m.predict(&x, &Tensor::full(&[1, 2], 0.0)).unwrap();
                assert_ne!(a, b, "{backbone:?} {placement:?}");
            }
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let s = spec(Backbone::Conv, Placement::All);
        let m = Model::<f64>::init(s.clone(), 5).unwrap();
        let y = m.predict(&Tensor::zeros(&s.input_shape(1)), &Tensor::full(&[1, 2], -3.0)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_wrong_input() {
        let s = spec(Backbone::Conv, Placement::Off);
        let m = Model::<f64>::init(s, 0).unwrap();
        assert!(m.predict(&Tensor::zeros(&[1, 4, 2, 3]), &Tensor::zeros(&[1, 2])).is_err());
    }

    #[test]
    fn mixer_with_silent_residuals_equals_bare_head() {
        let s = spec(Backbone::Mixer, Placement::Off);
        let mut m = Model::<f64>::init(s.clone(), 9).unwrap();
        for name in ["token_fc2", "channel_fc2"] {
            for part in ["weight", "bias"] {
                let t = m.param_mut(&format!("mixer0.{name}.{part}")).unwrap();
                t.data_mut().fill(0.0);
            }
        }
        let bare_spec = ModelSpec { blocks: 0, ..s.clone() };
        let named = m
            .named()
            .filter(|(n, _)| !n.starts_with("mixer"))
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        let bare = Model::from_named(bare_spec, named).unwrap();
        let x = input(&s, 2);
        let belief = Tensor::zeros(&[2, 2]);
        assert_eq!(m.predict(&x, &belief).unwrap(), bare.predict(&x, &belief).unwrap());
    }

    #[test]
    fn from_named_checks_layout() {
        let s = spec(Backbone::Conv, Placement::All);
        let m = Model::<f32>::init(s.clone(), 0).unwrap();
        let mut named: Vec<_> = m.named().map(|(n, t)| (n.to_string(), t.clone())).collect();
        assert!(Model::from_named(s.clone(), named.clone()).is_ok());
        named.pop();
        assert!(Model::<f32>::from_named(s, named).is_err());
    }
}
