//! Largest trainable model under a storage-placement policy, and
//! throughput per dollar.
//!
//! A policy assigns every byte class to one location and the analyzer
//! checks the budgets in a fixed order (GPU memory, CPU memory, SSD). The
//! accounting constants are calibration defaults, kept in
//! [`CapacityConstants`] so they can be changed per study.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::hardware::HardwareConfig;
use crate::workload::{footprint, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlacementPolicy {
    /// Model states on SSD, fp16 parameters and gradients staged in pinned
    /// CPU buffers, checkpoints always in CPU memory.
    ZeroInfinityLike,
    /// Model states on SSD, a few parameter groups staged in CPU memory,
    /// checkpoints in CPU memory when they fit and on SSD otherwise.
    FuyouLike,
}

impl PlacementPolicy {
    pub const ALL: [PlacementPolicy; 2] =
        [PlacementPolicy::ZeroInfinityLike, PlacementPolicy::FuyouLike];

    pub fn as_str(self) -> &'static str {
        match self {
            PlacementPolicy::ZeroInfinityLike => "ZERO_INFINITY_LIKE",
            PlacementPolicy::FuyouLike => "FUYOU_LIKE",
        }
    }
}

impl fmt::Display for PlacementPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlacementPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage(format!("unknown placement policy `{s}`")))
    }
}

/// Location whose budget ran out first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CapacityResource {
    GpuMem,
    CpuMem,
    Ssd,
}

impl CapacityResource {
    pub fn as_str(self) -> &'static str {
        match self {
            CapacityResource::GpuMem => "GPU_MEM",
            CapacityResource::CpuMem => "CPU_MEM",
            CapacityResource::Ssd => "SSD",
        }
    }
}

impl fmt::Display for CapacityResource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Calibration constants of the byte accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapacityConstants {
    /// ZeRO-Infinity-like CPU memory taken by the runtime regardless of
    /// model size, bytes.
    pub zero_cpu_base: f64,
    /// ZeRO-Infinity-like pinned CPU bytes per parameter (fp16 parameter
    /// and gradient buffers).
    pub zero_cpu_bytes_per_param: f64,
    /// Parameter groups whose full model states are staged in CPU memory
    /// at once under the Fuyou-like policy.
    pub fuyou_staging_groups: f64,
    /// fp16 parameter buffers of one block kept on the GPU (prefetch,
    /// compute, gradient).
    pub gpu_block_buffers: f64,
    /// Activation working set in multiples of one `(b, s, h)` tensor.
    pub gpu_activation_tensors: f64,
}

impl Default for CapacityConstants {
    fn default() -> Self {
        Self {
            zero_cpu_base: 100e9,
            zero_cpu_bytes_per_param: 4.0,
            fuyou_staging_groups: 3.0,
            gpu_block_buffers: 4.0,
            gpu_activation_tensors: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckpointHome {
    Cpu,
    Ssd,
}

/// Bytes each location must hold for one model under one policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Requirements {
    pub gpu_bytes: f64,
    pub cpu_bytes: f64,
    pub ssd_bytes: f64,
    pub checkpoints: CheckpointHome,
}

pub fn requirements(
    policy: PlacementPolicy,
    model: &ModelConfig,
    hw: &HardwareConfig,
    c: &CapacityConstants,
) -> Requirements {
    let fp = footprint(model);
    let p = fp.total_params as f64;
    let h2 = (model.hidden_dim * model.hidden_dim) as f64;
    let block_param_bytes = 12.0 * h2 * model.param_elem_bytes as f64;
    let model_states = fp.model_state_bytes() as f64;
    let ckpt = fp.total_checkpoint_bytes as f64;

    let gpu_bytes = c.gpu_block_buffers * block_param_bytes
        + c.gpu_activation_tensors * model.bsh_bytes() as f64;

    match policy {
        PlacementPolicy::ZeroInfinityLike => Requirements {
            gpu_bytes,
            cpu_bytes: c.zero_cpu_base + c.zero_cpu_bytes_per_param * p + ckpt,
            ssd_bytes: model_states,
            checkpoints: CheckpointHome::Cpu,
        },
        PlacementPolicy::FuyouLike => {
            // full model states (params, grads, optimizer) of one block
            let per_block_states = model_states / model.num_layers as f64;
            let staging = c.fuyou_staging_groups * per_block_states;
            if staging + ckpt <= hw.cpu_mem {
                Requirements {
                    gpu_bytes,
                    cpu_bytes: staging + ckpt,
                    ssd_bytes: model_states,
                    checkpoints: CheckpointHome::Cpu,
                }
            } else {
                Requirements {
                    gpu_bytes,
                    cpu_bytes: staging,
                    ssd_bytes: model_states + ckpt,
                    checkpoints: CheckpointHome::Ssd,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// First exhausted location, checked GPU → CPU → SSD.
    pub bottleneck: Option<CapacityResource>,
    pub requirements: Requirements,
}

pub fn feasible(
    policy: PlacementPolicy,
    model: &ModelConfig,
    hw: &HardwareConfig,
    c: &CapacityConstants,
) -> Feasibility {
    let req = requirements(policy, model, hw, c);
    let bottleneck = if req.gpu_bytes > hw.gpu_mem {
        Some(CapacityResource::GpuMem)
    } else if req.cpu_bytes > hw.cpu_mem {
        Some(CapacityResource::CpuMem)
    } else if req.ssd_bytes > hw.ssd_capacity {
        Some(CapacityResource::Ssd)
    } else {
        None
    };
    Feasibility {
        feasible: bottleneck.is_none(),
        bottleneck,
        requirements: req,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxTrainable {
    /// Largest feasible candidate, if any.
    pub model: Option<ModelConfig>,
    /// What stops the next larger candidate (or the smallest, when none
    /// fit). `None` when the largest candidate fits.
    pub bottleneck: Option<CapacityResource>,
}

impl MaxTrainable {
    pub fn name(&self) -> &str {
        self.model.as_ref().map(|m| m.name.as_str()).unwrap_or("none")
    }
}

/// Scans `candidates` (ascending by size) from the largest down.
pub fn max_trainable(
    policy: PlacementPolicy,
    hw: &HardwareConfig,
    candidates: &[ModelConfig],
    c: &CapacityConstants,
) -> Result<MaxTrainable> {
    if candidates.is_empty() {
        return Err(Error::Usage("candidate ladder is empty".into()));
    }
    let mut blocker = None;
    for m in candidates.iter().rev() {
        let f = feasible(policy, m, hw, c);
        if f.feasible {
            return Ok(MaxTrainable {
                model: Some(m.clone()),
                bottleneck: blocker,
            });
        }
        blocker = f.bottleneck;
    }
    Ok(MaxTrainable {
        model: None,
        bottleneck: blocker,
    })
}

/// Named size in parameters of a ladder entry such as `gpt3-805b`, falling
/// back to the computed count.
pub fn nominal_params(model: &ModelConfig) -> f64 {
    model
        .name
        .rsplit('-')
        .next()
        .and_then(|s| s.strip_suffix('b'))
        .and_then(|s| s.parse::<f64>().ok())
        .map(|b| b * 1e9)
        .unwrap_or_else(|| footprint(model).total_params as f64)
}

/// One row of a capacity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub cpu_mem_gb: f64,
    pub policy: PlacementPolicy,
    pub max_model: String,
    pub max_params: f64,
    pub bottleneck: String,
}

/// Max trainable model for every `(cpu_mem, policy)` pair, in input order.
pub fn capacity_sweep(
    hw: &HardwareConfig,
    cpu_mems: &[f64],
    policies: &[PlacementPolicy],
    candidates: &[ModelConfig],
    c: &CapacityConstants,
) -> Result<Vec<CapacityRow>> {
    if cpu_mems.is_empty() || policies.is_empty() {
        return Err(Error::Usage("capacity sweep needs cpu_mem values and policies".into()));
    }
    let mut rows = Vec::with_capacity(cpu_mems.len() * policies.len());
    for &cpu in cpu_mems {
        let hw = hw.clone().with_cpu_mem(cpu);
        for &policy in policies {
            let best = max_trainable(policy, &hw, candidates, c)?;
            rows.push(CapacityRow {
                cpu_mem_gb: cpu / 1e9,
                policy,
                max_model: best.name().to_string(),
                max_params: best.model.as_ref().map(nominal_params).unwrap_or(0.0),
                bottleneck: best
                    .bottleneck
                    .map(|b| b.as_str().to_string())
                    .unwrap_or_else(|| "none".into()),
            });
        }
    }
    Ok(rows)
}

pub fn write_capacity_csv(rows: &[CapacityRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cpu_mem_gb", "policy", "max_model", "max_params", "bottleneck"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            format!("{}", r.cpu_mem_gb),
            r.policy.as_str().to_string(),
            r.max_model.clone(),
            format!("{:.0}", r.max_params),
            r.bottleneck.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Which components count towards the price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceScope {
    /// GPU plus SSDs.
    GpuSsd,
    /// Server chassis plus GPU plus SSDs.
    WholeServer,
}

impl FromStr for PriceScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gpu_ssd" => Ok(PriceScope::GpuSsd),
            "whole_server" => Ok(PriceScope::WholeServer),
            _ => Err(Error::Usage(format!(
                "unknown price scope `{s}` (expected gpu_ssd or whole_server)"
            ))),
        }
    }
}

/// Component prices in dollars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable(pub BTreeMap<String, f64>);

pub const SERVER: &str = "server";
pub const SSD: &str = "ssd";

impl Default for PriceTable {
    fn default() -> Self {
        Self(
            [
                ("dgx2", 200_000.0),
                (SERVER, 14_098.0),
                ("a100-80gb", 14_177.0),
                ("rtx4090", 1_600.0),
                (SSD, 308.0),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        )
    }
}

impl PriceTable {
    pub fn price(&self, key: &str) -> Result<f64> {
        match self.0.get(key) {
            Some(&v) if v.is_finite() && v > 0.0 => Ok(v),
            Some(&v) => Err(Error::Invalid(vec![FieldError::new(
                format!("prices.{key}"),
                format!("price must be > 0 (got {v})"),
            )])),
            None => Err(Error::Invalid(vec![FieldError::new(
                format!("prices.{key}"),
                "missing price",
            )])),
        }
    }

    /// Dollar total of `hw` in `scope`.
    pub fn total(&self, hw: &HardwareConfig, scope: PriceScope) -> Result<f64> {
        let mut total = self.price(&hw.gpu)? + hw.n_ssd as f64 * self.price(SSD)?;
        if scope == PriceScope::WholeServer {
            total += self.price(SERVER)?;
        }
        Ok(total)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|(k, v)| (k.clone(), v * factor)).collect())
    }
}

/// Tokens per second per dollar.
pub fn cost_effectiveness(
    t_iter: f64,
    tokens_per_iteration: u64,
    hw: &HardwareConfig,
    prices: &PriceTable,
    scope: PriceScope,
) -> Result<f64> {
    if !(t_iter.is_finite() && t_iter > 0.0) {
        return Err(Error::Invalid(vec![FieldError::new(
            "t_iter",
            format!("iteration time must be > 0 (got {t_iter})"),
        )]));
    }
    Ok(tokens_per_iteration as f64 / t_iter / prices.total(hw, scope)?)
}
