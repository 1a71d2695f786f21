use crate::channel::pilots::nearest_map;
use crate::channel::PilotPattern;
use crate::error::{Error, Result};
use crate::tensor::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backbone {
    /// Residual CNN: denoise at pilot resolution, then resize and refine.
    Conv,
    /// MLP-mixer over frequency tokens.
    Mixer,
}

impl Backbone {
    pub fn name(self) -> &'static str {
        match self {
            Backbone::Conv => "conv",
            Backbone::Mixer => "mixer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "conv" => Some(Backbone::Conv),
            "mixer" => Some(Backbone::Mixer),
            _ => None,
        }
    }
}

/// Which stages carry belief gates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Placement {
    Off,
    All,
    DenoiseOnly,
    ExpansionOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Denoise,
    Expansion,
}

impl Placement {
    pub const ALL: [Placement; 4] = [
        Placement::Off,
        Placement::All,
        Placement::DenoiseOnly,
        Placement::ExpansionOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Placement::Off => "off",
            Placement::All => "all",
            Placement::DenoiseOnly => "denoise_only",
            Placement::ExpansionOnly => "expansion_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn gates(self, stage: Stage) -> bool {
        matches!(
            (self, stage),
            (Placement::All, _)
                | (Placement::DenoiseOnly, Stage::Denoise)
                | (Placement::ExpansionOnly, Stage::Expansion)
        )
    }
}

/// Architecture and I/O geometry of one estimator network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub backbone: Backbone,
    pub placement: Placement,
    /// Feature width: conv channels, or the mixer embedding size.
    pub channels: usize,
    pub blocks: usize,
    /// Conv kernel size (odd). Unused by the mixer.
    pub kernel: usize,
    pub n_r: usize,
    pub n_c: usize,
    pub n_l: usize,
    pub pilot_subcarriers: Vec<usize>,
    pub pilot_symbols: Vec<usize>,
    pub inner_act: Activation,
    pub outer_act: Activation,
    /// Belief standardisation `(mean_db, std_db)`.
    pub belief_norm: (f64, f64),
    /// Fixed factor applied to the input planes; outputs are divided by it,
    /// so the layers work on roughly unit-scale values.
    pub input_scale: f64,
}

impl ModelSpec {
    pub fn new(backbone: Backbone, placement: Placement, n_r: usize, pattern: &PilotPattern) -> Self {
        let (channels, blocks) = match backbone {
            Backbone::Conv => (48, 4),
            Backbone::Mixer => (64, 4),
        };
        Self {
            backbone,
            placement,
            channels,
            blocks,
            kernel: 3,
            n_r,
            n_c: pattern.n_c(),
            n_l: pattern.n_l(),
            pilot_subcarriers: pattern.subcarriers().to_vec(),
            pilot_symbols: pattern.symbols().to_vec(),
            inner_act: Activation::Relu,
            outer_act: Activation::Sigmoid,
            belief_norm: (-10.0, 6.0),
            input_scale: 0.2,
        }
    }

    pub fn n_cp(&self) -> usize {
        self.pilot_subcarriers.len()
    }

    pub fn n_lp(&self) -> usize {
        self.pilot_symbols.len()
    }

    /// Real planes in and out: `2 N_r`.
    pub fn io_channels(&self) -> usize {
        2 * self.n_r
    }

    pub fn bim_hidden(&self, c: usize) -> usize {
        self.n_r.max(c / 4)
    }

    pub fn input_shape(&self, batch: usize) -> [usize; 4] {
        [batch, self.io_channels(), self.n_cp(), self.n_lp()]
    }

    pub fn output_shape(&self, batch: usize) -> [usize; 4] {
        [batch, self.io_channels(), self.n_c, self.n_l]
    }

    /// Mixer token-MLP hidden width.
    pub fn token_hidden(&self) -> usize {
        2 * self.n_cp()
    }

    /// Mixer channel-MLP hidden width.
    pub fn channel_hidden(&self) -> usize {
        2 * self.channels
    }

    /// Nearest pilot row for each subcarrier and pilot column for each symbol.
    pub fn resize_maps(&self) -> (Vec<usize>, Vec<usize>) {
        (
            nearest_map(&self.pilot_subcarriers, self.n_c),
            nearest_map(&self.pilot_symbols, self.n_l),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("model.channels", self.channels),
            ("model.n_r", self.n_r),
            ("model.n_c", self.n_c),
            ("model.n_l", self.n_l),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.backbone == Backbone::Conv && self.kernel % 2 == 0 {
            return Err(Error::config("model.kernel", format!("must be odd, got {}", self.kernel)));
        }
        let sorted = |v: &[usize], len: usize| {
            !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|&x| x < len)
        };
        if !sorted(&self.pilot_subcarriers, self.n_c) {
            return Err(Error::config("model.pilot_subcarriers", "must be strictly increasing and inside the grid"));
        }
        if !sorted(&self.pilot_symbols, self.n_l) {
            return Err(Error::config("model.pilot_symbols", "must be strictly increasing and inside the grid"));
        }
        if !(self.belief_norm.1 > 0.0) || !self.belief_norm.0.is_finite() {
            return Err(Error::config("model.belief_std_db", "must be positive"));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return Err(Error::config("model.input_scale", "must be positive"));
        }
        Ok(())
    }
}
