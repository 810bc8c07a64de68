//! Scenario files: model + hardware + schedule variant + planner mode.
//!
//! Scenarios are TOML documents with a mandatory `schema_version`. `model`
//! and `hardware` are either a preset name or a table; a table may name a
//! `preset` and override individual fields. Unknown keys are rejected.
//!
//! ```toml
//! schema_version = 1
//! model = "gpt3-13b"
//! variant = "OVERLAPPED"
//!
//! [hardware]
//! preset = "a100-12ssd"
//! n_ssd = 6
//!
//! [planner]
//! mode = "fixed_swap_coefficient"
//! value = 0.4
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::hardware::{self, HardwareConfig};
use crate::planner::{self, SwapPlan};
use crate::sim::{ScheduleOptions, ScheduleVariant};
use crate::workload::{ModelConfig, Workload};

pub const SCHEMA_VERSION: u32 = 1;

/// How the swap volume is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlannerMode {
    /// Prefix search for the minimum predicted iteration time.
    #[default]
    Auto,
    /// Swap this fraction of the intra-block activation bytes.
    FixedSwapCoefficient { value: f64 },
    /// Swap this many bytes in total (checkpoints included).
    #[serde(rename = "fixed_d_f")]
    FixedDf { bytes: f64 },
}

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    /// Recorded for provenance only; nothing in the simulator is random.
    pub seed: u64,
    pub variant: ScheduleVariant,
    pub model: ModelConfig,
    pub hardware: HardwareConfig,
    pub planner: PlannerMode,
    pub schedule: ScheduleOptions,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: Option<u32>,
    seed: Option<u64>,
    variant: Option<ScheduleVariant>,
    model: Option<toml::Value>,
    hardware: Option<toml::Value>,
    planner: Option<PlannerMode>,
    schedule: Option<ScheduleOptions>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelTable {
    preset: Option<String>,
    name: Option<String>,
    num_layers: Option<u64>,
    num_heads: Option<u64>,
    hidden_dim: Option<u64>,
    batch_size: Option<u64>,
    seq_len: Option<u64>,
    param_elem_bytes: Option<u64>,
    optimizer_state_multiplier: Option<u64>,
    activation_elem_bytes: Option<u64>,
    extra_flops_per_block: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HardwareTable {
    preset: Option<String>,
    name: Option<String>,
    gpu: Option<String>,
    bw_gpu: Option<f64>,
    bw_s2c: Option<f64>,
    bw_c2s: Option<f64>,
    n_ssd: Option<u64>,
    gpu_mem: Option<f64>,
    cpu_mem: Option<f64>,
    ssd_capacity: Option<f64>,
    gpu_tput: Option<f64>,
    cpu_opt_tput: Option<f64>,
}

fn missing(key: &str) -> Error {
    Error::Invalid(vec![FieldError::new(key, format!("missing required key `{key}`"))])
}

fn model_preset(name: &str) -> Result<ModelConfig> {
    ModelConfig::preset(name).ok_or_else(|| Error::UnknownPreset {
        kind: "model",
        name: name.to_string(),
    })
}

fn hardware_preset(name: &str) -> Result<HardwareConfig> {
    HardwareConfig::preset(name).ok_or_else(|| Error::UnknownPreset {
        kind: "hardware",
        name: name.to_string(),
    })
}

fn table<T: for<'de> Deserialize<'de>>(key: &str, v: toml::Value) -> Result<T> {
    v.try_into()
        .map_err(|e: toml::de::Error| Error::Parse(format!("in `{key}`: {}", e.message())))
}

fn resolve_model(v: toml::Value) -> Result<ModelConfig> {
    let t: ModelTable = match v {
        toml::Value::String(name) => return model_preset(&name),
        v @ toml::Value::Table(_) => table("model", v)?,
        _ => return Err(Error::Parse("`model` must be a preset name or a table".into())),
    };
    let mut m = match &t.preset {
        Some(p) => model_preset(p)?,
        None => {
            let req = |v: Option<u64>, k: &str| v.ok_or_else(|| missing(&format!("model.{k}")));
            ModelConfig::new(
                t.name.clone().unwrap_or_else(|| "custom".into()),
                req(t.num_layers, "num_layers")?,
                req(t.num_heads, "num_heads")?,
                req(t.hidden_dim, "hidden_dim")?,
                req(t.batch_size, "batch_size")?,
                req(t.seq_len, "seq_len")?,
            )
        }
    };
    if let Some(v) = t.name {
        m.name = v;
    }
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = t.$f { m.$f = v; })* };
    }
    set!(
        num_layers,
        num_heads,
        hidden_dim,
        batch_size,
        seq_len,
        param_elem_bytes,
        optimizer_state_multiplier,
        activation_elem_bytes,
        extra_flops_per_block
    );
    Ok(m)
}

fn resolve_hardware(v: toml::Value) -> Result<HardwareConfig> {
    let t: HardwareTable = match v {
        toml::Value::String(name) => return hardware_preset(&name),
        v @ toml::Value::Table(_) => table("hardware", v)?,
        _ => return Err(Error::Parse("`hardware` must be a preset name or a table".into())),
    };
    let mut hw = match &t.preset {
        Some(p) => hardware_preset(p)?,
        None => {
            let f = |v: Option<f64>, k: &str| v.ok_or_else(|| missing(&format!("hardware.{k}")));
            HardwareConfig {
                name: t.name.clone().unwrap_or_else(|| "custom".into()),
                gpu: t.gpu.clone().ok_or_else(|| missing("hardware.gpu"))?,
                bw_gpu: f(t.bw_gpu, "bw_gpu")?,
                bw_s2c: f(t.bw_s2c, "bw_s2c")?,
                bw_c2s: f(t.bw_c2s, "bw_c2s")?,
                n_ssd: t.n_ssd.ok_or_else(|| missing("hardware.n_ssd"))?,
                gpu_mem: f(t.gpu_mem, "gpu_mem")?,
                cpu_mem: f(t.cpu_mem, "cpu_mem")?,
                ssd_capacity: f(t.ssd_capacity, "ssd_capacity")?,
                gpu_tput: f(t.gpu_tput, "gpu_tput")?,
                cpu_opt_tput: f(t.cpu_opt_tput, "cpu_opt_tput")?,
            }
        }
    };
    if t.preset.is_some() {
        if let Some(n) = t.n_ssd {
            // keep per-device capacity when only the count changes
            hw = hw.with_n_ssd(n);
            if t.name.is_none() {
                hw.name = format!("{}-{n}ssd", hw.name.split('-').next().unwrap_or("custom"));
            }
        }
    }
    if let Some(v) = t.name {
        hw.name = v;
    }
    if let Some(v) = t.gpu {
        hw.gpu = v;
    }
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = t.$f { hw.$f = v; })* };
    }
    set!(bw_gpu, bw_s2c, bw_c2s, n_ssd, gpu_mem, cpu_mem, ssd_capacity, gpu_tput, cpu_opt_tput);
    Ok(hw)
}

impl Scenario {
    /// `MODEL/HARDWARE[/bBATCH]`, e.g. `gpt3-13b/a100-12ssd/b64`.
    pub fn preset(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split('/').collect();
        let (model, hw, batch) = match parts.as_slice() {
            [m, h] => (*m, *h, None),
            [m, h, b] => {
                let batch = b
                    .strip_prefix('b')
                    .and_then(|n| n.parse::<u64>().ok())
                    .ok_or_else(|| Error::UnknownPreset {
                        kind: "scenario",
                        name: spec.to_string(),
                    })?;
                (*m, *h, Some(batch))
            }
            _ => {
                return Err(Error::UnknownPreset {
                    kind: "scenario",
                    name: spec.to_string(),
                })
            }
        };
        let mut model = model_preset(model)?;
        if let Some(b) = batch {
            model.batch_size = b;
        }
        let s = Self::new(model, hardware_preset(hw)?);
        s.validate()?;
        Ok(s)
    }

    /// Defaults: OVERLAPPED, auto planner, default schedule options.
    pub fn new(model: ModelConfig, hardware: HardwareConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            variant: ScheduleVariant::Overlapped,
            model,
            hardware,
            planner: PlannerMode::Auto,
            schedule: ScheduleOptions::default(),
        }
    }

    pub fn with_variant(mut self, variant: ScheduleVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_planner(mut self, planner: PlannerMode) -> Self {
        self.planner = planner;
        self
    }

    /// Short label such as `gpt3-13b/a100-12ssd/b32`.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/b{}",
            self.model.name, self.hardware.name, self.model.batch_size
        )
    }

    /// Field-level validation; returns warnings on success.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut errors = Vec::new();
        if let Err(e) = self.model.validate() {
            errors.extend(e.into_iter().map(|f| FieldError {
                field: format!("model.{}", f.field),
                ..f
            }));
        }
        let warnings = match hardware::validate(&self.hardware, Some(&self.model)) {
            Ok(w) => w,
            Err(e) => {
                errors.extend(e.into_iter().map(|f| FieldError {
                    field: format!("hardware.{}", f.field),
                    ..f
                }));
                Vec::new()
            }
        };
        match self.planner {
            PlannerMode::FixedSwapCoefficient { value } if !(0.0..=1.0).contains(&value) => {
                errors.push(FieldError::new(
                    "planner.value",
                    format!("swap coefficient must be within [0, 1] (got {value})"),
                ))
            }
            PlannerMode::FixedDf { bytes } if !(bytes.is_finite() && bytes >= 0.0) => errors
                .push(FieldError::new(
                    "planner.bytes",
                    format!("d_f must be finite and ≥ 0 (got {bytes})"),
                )),
            _ => {}
        }
        if self.schedule.blocks_per_group < 1 {
            errors.push(FieldError::new(
                "schedule.blocks_per_group",
                "blocks_per_group must be ≥ 1",
            ));
        }
        if errors.is_empty() {
            Ok(warnings)
        } else {
            Err(Error::Invalid(errors))
        }
    }

    pub fn workload(&self) -> Workload {
        Workload::from_model(&self.model)
    }

    /// Runs the configured planner mode.
    pub fn plan(&self) -> Result<SwapPlan> {
        let w = self.workload();
        match self.planner {
            PlannerMode::Auto => planner::plan_swaps(&w, &self.hardware),
            PlannerMode::FixedSwapCoefficient { value } => {
                planner::plan_fixed_coefficient(&w, &self.hardware, value)
            }
            PlannerMode::FixedDf { bytes } => planner::plan_fixed_d_f(&w, &self.hardware, bytes),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Parses and resolves a scenario document.
pub fn load_scenario(document: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
    let version = raw.schema_version.ok_or_else(|| missing("schema_version"))?;
    if version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    let scenario = Scenario {
        schema_version: version,
        seed: raw.seed.unwrap_or(0),
        variant: raw.variant.unwrap_or(ScheduleVariant::Overlapped),
        model: resolve_model(raw.model.ok_or_else(|| missing("model"))?)?,
        hardware: resolve_hardware(raw.hardware.ok_or_else(|| missing("hardware"))?)?,
        planner: raw.planner.unwrap_or_default(),
        schedule: raw.schedule.unwrap_or_default(),
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read scenario `{}`: {e}", path.display())))?;
    load_scenario(&text)
}

/// Bundled scenarios behind the reference experiments.
pub const EXPERIMENT_PRESETS: &[(&str, &str)] = &[
    ("gpt3-13b/a100-12ssd/b32", "swap planning, batch 32: nothing to hide behind"),
    ("gpt3-13b/a100-12ssd/b64", "swap planning, batch 64: compute-bound backward"),
    ("gpt3-13b/a100-12ssd/b80", "swap planning, batch 80"),
    ("gpt3-13b/rtx4090-12ssd/b8", "overlap benefit, smallest batch"),
    ("gpt3-13b/rtx4090-12ssd/b16", "overlap benefit"),
    ("gpt3-13b/rtx4090-12ssd/b32", "overlap benefit"),
    ("gpt3-13b/rtx4090-12ssd/b64", "overlap benefit, largest batch"),
    ("gpt3-175b/rtx4090-2ssd/b16", "cost-effectiveness, 2 SSDs"),
    ("gpt3-175b/rtx4090-6ssd/b16", "cost-effectiveness, 6 SSDs"),
    ("gpt3-175b/rtx4090-12ssd/b16", "cost-effectiveness, 12 SSDs"),
    ("gpt3-175b/a100-12ssd/b16", "175B on the reference server"),
];
