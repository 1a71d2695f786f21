use super::spec::{Backbone, ModelSpec, Placement, Stage};

/// Parameter and FLOP totals for one forward pass on a single sample.
///
/// FLOPs are `2 x MACs` for dense and conv layers plus one per gated element.
/// Biases, activations, normalisation and residual additions are not counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Complexity {
    pub params: usize,
    pub flops: usize,
    /// Share of `params` owned by belief gates.
    pub bim_params: usize,
    /// Share of `flops` spent in belief gates, including the rescaling.
    pub bim_flops: usize,
}

impl Complexity {
    fn dense(&mut self, n_in: usize, n_out: usize, rows: usize) {
        self.params += n_in * n_out + n_out;
        self.flops += 2 * n_in * n_out * rows;
    }

    fn conv(&mut self, k: usize, c_in: usize, c_out: usize, positions: usize) {
        self.params += k * k * c_in * c_out + c_out;
        self.flops += 2 * k * k * c_in * c_out * positions;
    }

    fn gate(&mut self, spec: &ModelSpec, stage: Stage, c: usize, elements: usize) {
        if !spec.placement.gates(stage) {
            return;
        }
        let h = spec.bim_hidden(c);
        let p = spec.n_r * h + h + h * c + c;
        let f = 2 * (spec.n_r * h + h * c) + elements;
        self.params += p;
        self.flops += f;
        self.bim_params += p;
        self.bim_flops += f;
    }

    pub fn bim_param_fraction(&self) -> f64 {
        self.bim_params as f64 / (self.params - self.bim_params).max(1) as f64
    }

    pub fn bim_flop_fraction(&self) -> f64 {
        self.bim_flops as f64 / (self.flops - self.bim_flops).max(1) as f64
    }
}

/// Closed-form parameter and FLOP count of `spec`.
pub fn count_complexity(spec: &ModelSpec) -> Complexity {
    let mut c = Complexity::default();
    let io = spec.io_channels();
    let w = spec.channels;
    let pilot = spec.n_cp() * spec.n_lp();
    let full = spec.n_c * spec.n_l;
    match spec.backbone {
        Backbone::Conv => {
            let k = spec.kernel;
            c.conv(k, io, w, pilot);
            c.gate(spec, Stage::Denoise, w, w * pilot);
            for _ in 0..2 * spec.blocks {
                c.conv(k, w, w, pilot);
                c.gate(spec, Stage::Denoise, w, w * pilot);
            }
            c.conv(k, w, w, full);
            c.gate(spec, Stage::Expansion, w, w * full);
            c.conv(k, w, io, full);
            c.gate(spec, Stage::Expansion, io, io * full);
        }
        Backbone::Mixer => {
            let (t, th, dh) = (spec.n_cp(), spec.token_hidden(), spec.channel_hidden());
            c.dense(spec.n_lp() * io, w, t);
            for _ in 0..spec.blocks {
                c.params += 2 * w;
                c.dense(t, th, w);
                c.dense(th, t, w);
                c.params += 2 * w;
                c.dense(w, dh, t);
                c.gate(spec, Stage::Denoise, dh, dh * t);
                c.dense(dh, w, t);
            }
            c.params += 2 * w;
            c.dense(t, spec.n_c, w);
            c.gate(spec, Stage::Expansion, w, w * spec.n_c);
            c.dense(w, spec.n_l * io, spec.n_c);
        }
    }
    c
}

/// Overhead of gating `spec` relative to the same backbone without gates.
pub fn bim_overhead(spec: &ModelSpec) -> (f64, f64) {
    let with = count_complexity(spec);
    let plain = count_complexity(&ModelSpec {
        placement: Placement::Off,
        ..spec.clone()
    });
    (
        (with.params - plain.params) as f64 / plain.params as f64,
        (with.flops - plain.flops) as f64 / plain.flops as f64,
    )
}
