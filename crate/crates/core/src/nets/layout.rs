use super::spec::{Backbone, ModelSpec, Stage};
use crate::tensor::Init;

/// One learnable tensor of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl ParamInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct Builder<'a> {
    spec: &'a ModelSpec,
    out: Vec<ParamInfo>,
}

impl Builder<'_> {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init, fan_in: usize, fan_out: usize) {
        self.out.push(ParamInfo {
            name,
            shape,
            init,
            fan_in,
            fan_out,
        });
    }

    fn conv(&mut self, name: &str, c_in: usize, c_out: usize, init: Init) {
        let k = self.spec.kernel;
        self.push(format!("{name}.weight"), vec![c_out, c_in, k, k], init, c_in * k * k, c_out * k * k);
        self.push(format!("{name}.bias"), vec![c_out], Init::Zeros, 0, 0);
    }

    fn dense(&mut self, name: &str, n_in: usize, n_out: usize, init: Init) {
        self.push(format!("{name}.weight"), vec![n_in, n_out], init, n_in, n_out);
        self.push(format!("{name}.bias"), vec![n_out], Init::Zeros, 0, 0);
    }

    fn norm(&mut self, name: &str, d: usize) {
        self.push(format!("{name}.gamma"), vec![d], Init::Ones, 0, 0);
        self.push(format!("{name}.beta"), vec![d], Init::Zeros, 0, 0);
    }

    fn gate(&mut self, name: &str, c: usize, stage: Stage) {
        if !self.spec.placement.gates(stage) {
            return;
        }
        let (n_r, h) = (self.spec.n_r, self.spec.bim_hidden(c));
        self.dense(&format!("{name}.bim.fc1"), n_r, h, Init::HeUniform);
        self.dense(&format!("{name}.bim.fc2"), h, c, Init::GlorotUniform);
    }
}

/// Every parameter of `spec` in canonical order.
pub fn param_layout(spec: &ModelSpec) -> Vec<ParamInfo> {
    let mut b = Builder {
        spec,
        out: Vec::new(),
    };
    let io = spec.io_channels();
    let c = spec.channels;
    match spec.backbone {
        Backbone::Conv => {
            b.conv("denoise.in", io, c, Init::GlorotUniform);
            b.gate("denoise.in", c, Stage::Denoise);
            for i in 0..spec.blocks {
                let n1 = format!("denoise.block{i}.conv1");
                let n2 = format!("denoise.block{i}.conv2");
                b.conv(&n1, c, c, Init::HeUniform);
                b.gate(&n1, c, Stage::Denoise);
                b.conv(&n2, c, c, Init::GlorotUniform);
                b.gate(&n2, c, Stage::Denoise);
            }
            b.conv("expand.up", c, c, Init::HeUniform);
            b.gate("expand.up", c, Stage::Expansion);
            b.conv("expand.out", c, io, Init::SmallGlorot);
            b.gate("expand.out", io, Stage::Expansion);
        }
        Backbone::Mixer => {
            let (t, th, dh) = (spec.n_cp(), spec.token_hidden(), spec.channel_hidden());
            b.dense("embed", spec.n_lp() * io, c, Init::GlorotUniform);
            for i in 0..spec.blocks {
                let p = format!("mixer{i}");
                b.norm(&format!("{p}.token_norm"), c);
                b.dense(&format!("{p}.token_fc1"), t, th, Init::HeUniform);
                b.dense(&format!("{p}.token_fc2"), th, t, Init::GlorotUniform);
                b.norm(&format!("{p}.channel_norm"), c);
                b.dense(&format!("{p}.channel_fc1"), c, dh, Init::HeUniform);
                b.gate(&format!("{p}.channel_fc1"), dh, Stage::Denoise);
                b.dense(&format!("{p}.channel_fc2"), dh, c, Init::GlorotUniform);
            }
            b.norm("head.norm", c);
            b.dense("head.token", t, spec.n_c, Init::GlorotUniform);
            b.gate("head.token", c, Stage::Expansion);
            b.dense("head.feature", c, spec.n_l * io, Init::SmallGlorot);
        }
    }
    b.out
}
