//! Transformer workload description: model shapes, per-layer profiles and
//! aggregate memory footprints.
//!
//! Every transformer block is modeled as four dense linear layers. Their
//! output activations, parameter bytes and forward FLOPs are derived from
//! `(b, s, h)`; attention-score FLOPs can be added per block through
//! [`ModelConfig::extra_flops_per_block`] and are never swappable.

use serde::{Deserialize, Serialize};

use crate::error::FieldError;

/// Shape of a GPT-style transformer plus the element sizes used for
/// memory accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub num_layers: u64,
    pub num_heads: u64,
    pub hidden_dim: u64,
    pub batch_size: u64,
    pub seq_len: u64,
    /// Bytes per parameter element (2 for fp16).
    #[serde(default = "default_param_elem_bytes")]
    pub param_elem_bytes: u64,
    /// Optimizer-state bytes per fp16 parameter byte (6 gives 12 bytes per
    /// parameter: fp32 master copy, momentum and variance).
    #[serde(default = "default_optimizer_state_multiplier")]
    pub optimizer_state_multiplier: u64,
    /// Bytes per activation element.
    #[serde(default = "default_activation_elem_bytes")]
    pub activation_elem_bytes: u64,
    /// Additional non-linear FLOPs per block (attention scores), always
    /// recomputed.
    #[serde(default)]
    pub extra_flops_per_block: f64,
}

fn default_param_elem_bytes() -> u64 {
    2
}

fn default_optimizer_state_multiplier() -> u64 {
    6
}

fn default_activation_elem_bytes() -> u64 {
    1
}

/// `(name, layers, heads, hidden)` for the bundled GPT-3 family.
const PRESETS: [(&str, u64, u64, u64); 8] = [
    ("gpt3-13b", 40, 40, 5120),
    ("gpt3-33b", 60, 52, 6656),
    ("gpt3-65b", 80, 64, 8192),
    ("gpt3-135b", 88, 88, 11264),
    ("gpt3-175b", 96, 96, 12288),
    ("gpt3-276b", 112, 112, 14336),
    ("gpt3-412b", 128, 128, 16384),
    ("gpt3-805b", 160, 160, 20480),
];

/// Batch size used when a preset is loaded without an override.
pub const DEFAULT_BATCH_SIZE: u64 = 32;
/// Sequence length shared by every preset.
pub const DEFAULT_SEQ_LEN: u64 = 1024;

impl ModelConfig {
    /// A model with default element sizes and no extra FLOPs.
    pub fn new(
        name: impl Into<String>,
        num_layers: u64,
        num_heads: u64,
        hidden_dim: u64,
        batch_size: u64,
        seq_len: u64,
    ) -> Self {
        Self {
            name: name.into(),
            num_layers,
            num_heads,
            hidden_dim,
            batch_size,
            seq_len,
            param_elem_bytes: default_param_elem_bytes(),
            optimizer_state_multiplier: default_optimizer_state_multiplier(),
            activation_elem_bytes: default_activation_elem_bytes(),
            extra_flops_per_block: 0.0,
        }
    }

    /// Looks up a bundled preset by name (case-insensitive), e.g. `gpt3-175b`.
    pub fn preset(name: &str) -> Option<Self> {
        let wanted = name.to_ascii_lowercase();
        PRESETS
            .iter()
            .find(|(n, ..)| *n == wanted)
            .map(|&(n, l, heads, h)| Self::new(n, l, heads, h, DEFAULT_BATCH_SIZE, DEFAULT_SEQ_LEN))
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, ..)| *n)
    }

    /// All presets in ascending parameter count, at the given batch size.
    pub fn ladder(batch_size: u64) -> Vec<Self> {
        Self::preset_names()
            .filter_map(Self::preset)
            .map(|m| m.with_batch_size(batch_size))
            .collect()
    }

    pub fn with_batch_size(mut self, batch_size: u64) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        let counts = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("hidden_dim", self.hidden_dim),
            ("batch_size", self.batch_size),
            ("seq_len", self.seq_len),
            ("param_elem_bytes", self.param_elem_bytes),
            ("optimizer_state_multiplier", self.optimizer_state_multiplier),
            ("activation_elem_bytes", self.activation_elem_bytes),
        ];
        for (field, value) in counts {
            if value < 1 {
                errors.push(FieldError::new(field, format!("{field} must be ≥ 1")));
            }
        }
        if self.num_heads >= 1 && !self.hidden_dim.is_multiple_of(self.num_heads) {
            errors.push(FieldError::new(
                "hidden_dim",
                format!(
                    "hidden_dim {} is not divisible by num_heads {}",
                    self.hidden_dim, self.num_heads
                ),
            ));
        }
        if !(self.extra_flops_per_block.is_finite() && self.extra_flops_per_block >= 0.0) {
            errors.push(FieldError::new(
                "extra_flops_per_block",
                "extra_flops_per_block must be finite and ≥ 0",
            ));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Activation bytes of one `(b, s, h)` tensor.
    pub fn bsh_bytes(&self) -> u64 {
        self.batch_size * self.seq_len * self.hidden_dim * self.activation_elem_bytes
    }
}

/// Total parameter count `12 · l · h²` (embeddings and layer norms excluded).
pub fn total_param_count(cfg: &ModelConfig) -> u64 {
    12 * cfg.num_layers * cfg.hidden_dim * cfg.hidden_dim
}

/// The four linear layers of a transformer block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LayerKind {
    #[serde(rename = "Linear_qkv")]
    LinearQkv,
    #[serde(rename = "Linear_htoh")]
    LinearHtoh,
    #[serde(rename = "Linear_hto4h")]
    LinearHto4h,
    #[serde(rename = "Linear_4htoh")]
    Linear4htoh,
}

impl LayerKind {
    /// Block order of execution in the forward pass.
    pub const ALL: [LayerKind; 4] = [
        LayerKind::LinearQkv,
        LayerKind::LinearHtoh,
        LayerKind::LinearHto4h,
        LayerKind::Linear4htoh,
    ];

    /// Output width in multiples of `h`.
    pub fn output_width(self) -> u64 {
        match self {
            LayerKind::LinearQkv => 3,
            LayerKind::LinearHtoh => 1,
            LayerKind::LinearHto4h => 4,
            LayerKind::Linear4htoh => 1,
        }
    }

    /// Input width in multiples of `h`.
    pub fn input_width(self) -> u64 {
        match self {
            LayerKind::Linear4htoh => 4,
            _ => 1,
        }
    }

    /// Swap time in units of the `(b, s, h)` transfer time.
    pub fn swap_time_units(self) -> u64 {
        self.output_width()
    }

    /// Weight-matrix elements in multiples of `h²`.
    pub fn weight_units(self) -> u64 {
        self.input_width() * self.output_width()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::LinearQkv => "Linear_qkv",
            LayerKind::LinearHtoh => "Linear_htoh",
            LayerKind::LinearHto4h => "Linear_hto4h",
            LayerKind::Linear4htoh => "Linear_4htoh",
        }
    }
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One linear layer of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub block_index: u64,
    pub kind: LayerKind,
    /// Output activation bytes.
    pub act_bytes: u64,
    /// fp16 parameter bytes.
    pub param_bytes: u64,
    /// Forward FLOPs of the dense matmul (`2·b·s·in·out`).
    pub flops_fwd: f64,
    /// Forward FLOPs attached to this layer that cannot be saved by swapping.
    #[serde(default)]
    pub extra_flops: f64,
    pub swap_time_units: u64,
}

impl LayerProfile {
    /// Forward FLOPs including the non-swappable part.
    pub fn total_flops(&self) -> f64 {
        self.flops_fwd + self.extra_flops
    }
}

/// Emits `4·l` profiles in forward execution order.
pub fn build_layer_profiles(cfg: &ModelConfig) -> Vec<LayerProfile> {
    let h = cfg.hidden_dim;
    let bs = cfg.batch_size * cfg.seq_len;
    let bsh = cfg.bsh_bytes();
    let mut out = Vec::with_capacity(4 * cfg.num_layers as usize);
    for block in 0..cfg.num_layers {
        for kind in LayerKind::ALL {
            let weights = kind.weight_units() * h * h;
            let extra_flops = if kind == LayerKind::LinearHtoh {
                cfg.extra_flops_per_block
            } else {
                0.0
            };
            out.push(LayerProfile {
                block_index: block,
                kind,
                act_bytes: bsh * kind.output_width(),
                param_bytes: weights * cfg.param_elem_bytes,
                flops_fwd: 2.0 * bs as f64 * weights as f64,
                extra_flops,
                swap_time_units: kind.swap_time_units(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintReport {
    pub total_params: u64,
    pub fp16_param_bytes: u64,
    pub fp16_grad_bytes: u64,
    pub optimizer_state_bytes: u64,
    pub checkpoint_bytes_per_block: u64,
    pub total_checkpoint_bytes: u64,
}

impl FootprintReport {
    /// Parameters + gradients + optimizer states (16p with defaults).
    pub fn model_state_bytes(&self) -> u64 {
        self.fp16_param_bytes + self.fp16_grad_bytes + self.optimizer_state_bytes
    }
}

pub fn footprint(cfg: &ModelConfig) -> FootprintReport {
    let p = total_param_count(cfg);
    let fp16 = p * cfg.param_elem_bytes;
    let per_block = cfg.bsh_bytes();
    FootprintReport {
        total_params: p,
        fp16_param_bytes: fp16,
        fp16_grad_bytes: fp16,
        optimizer_state_bytes: fp16 * cfg.optimizer_state_multiplier,
        checkpoint_bytes_per_block: per_block,
        total_checkpoint_bytes: per_block * cfg.num_layers,
    }
}

/// Everything the cost model, planner and simulator need to know about a
/// training job, independent of how it was described.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub name: String,
    pub param_count: u64,
    pub param_elem_bytes: u64,
    pub optimizer_state_multiplier: u64,
    /// Tokens per iteration (`b · s`).
    pub tokens_per_iteration: u64,
    /// Per-block checkpoint bytes kept under the default one-checkpoint-per-
    /// block strategy.
    pub checkpoint_bytes_per_block: u64,
    pub num_blocks: u64,
    pub layers: Vec<LayerProfile>,
}

impl Workload {
    pub fn from_model(cfg: &ModelConfig) -> Self {
        Self {
            name: cfg.name.clone(),
            param_count: total_param_count(cfg),
            param_elem_bytes: cfg.param_elem_bytes,
            optimizer_state_multiplier: cfg.optimizer_state_multiplier,
            tokens_per_iteration: cfg.batch_size * cfg.seq_len,
            checkpoint_bytes_per_block: cfg.bsh_bytes(),
            num_blocks: cfg.num_layers,
            layers: build_layer_profiles(cfg),
        }
    }

    /// A hand-built workload, e.g. one whose parameter count is not of the
    /// `12·l·h²` form.
    pub fn custom(
        name: impl Into<String>,
        param_count: u64,
        num_blocks: u64,
        checkpoint_bytes_per_block: u64,
        layers: Vec<LayerProfile>,
    ) -> Self {
        Self {
            name: name.into(),
            param_count,
            param_elem_bytes: 2,
            optimizer_state_multiplier: 6,
            tokens_per_iteration: 1,
            checkpoint_bytes_per_block,
            num_blocks,
            layers,
        }
    }

    /// fp16 parameter bytes (`2p`).
    pub fn param_bytes(&self) -> f64 {
        (self.param_count * self.param_elem_bytes) as f64
    }

    /// fp32 optimizer-state bytes (`12p`).
    pub fn optimizer_state_bytes(&self) -> f64 {
        self.param_bytes() * self.optimizer_state_multiplier as f64
    }

    /// Swap volume of the default strategy: one checkpoint per block.
    pub fn d_start(&self) -> u64 {
        self.checkpoint_bytes_per_block * self.num_blocks
    }

    /// Forward FLOPs over all layers.
    pub fn forward_flops(&self) -> f64 {
        self.layers.iter().map(LayerProfile::total_flops).sum()
    }

    /// Sum of all intra-block output activations, the denominator of the
    /// swap coefficient.
    pub fn intra_block_activation_bytes(&self) -> u64 {
        self.layers.iter().map(|l| l.act_bytes).sum()
    }

    /// Bytes a layer needs resident on the GPU while it runs: its input,
    /// its output and its parameters.
    pub fn layer_working_set(&self, index: usize) -> u64 {
        let layer = &self.layers[index];
        self.layer_input_bytes(index) + layer.act_bytes + layer.param_bytes
    }

    /// Input activation bytes of layer `index` (`in_width · b·s·h`).
    pub fn layer_input_bytes(&self, index: usize) -> u64 {
        self.layers[index].kind.input_width() * self.checkpoint_bytes_per_block
    }

    /// Largest per-layer working set.
    pub fn gpu_working_set(&self) -> u64 {
        (0..self.layers.len())
            .map(|i| self.layer_working_set(i))
            .max()
            .unwrap_or(0)
    }
}
