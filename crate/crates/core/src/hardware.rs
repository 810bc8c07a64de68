//! Machine description: link bandwidths, SSD array, capacities and compute
//! throughputs.

use serde::{Deserialize, Serialize};

use crate::error::FieldError;
use crate::workload::{footprint, ModelConfig};

/// Bytes in one decimal gigabyte.
pub const GB: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    pub name: String,
    /// Price-table key of the GPU, e.g. `a100-80gb`.
    pub gpu: String,
    /// GPU↔CPU bandwidth per direction, bytes/s.
    pub bw_gpu: f64,
    /// Per-SSD read bandwidth (SSD→CPU), bytes/s.
    pub bw_s2c: f64,
    /// Per-SSD write bandwidth (CPU→SSD), bytes/s.
    pub bw_c2s: f64,
    pub n_ssd: u64,
    pub gpu_mem: f64,
    pub cpu_mem: f64,
    /// Total capacity of the SSD array, bytes.
    pub ssd_capacity: f64,
    /// Sustained GPU throughput, FLOP/s.
    pub gpu_tput: f64,
    /// CPU optimizer throughput, parameters/s.
    pub cpu_opt_tput: f64,
}

/// Transfer direction on the SSD array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SsdDirection {
    /// Read: SSD → CPU.
    S2C,
    /// Write: CPU → SSD.
    C2S,
}

/// Per-device read bandwidth of the bundled SSD preset.
pub const SSD_READ_BW: f64 = 6.0e9;
/// Per-device write bandwidth of the bundled SSD preset.
pub const SSD_WRITE_BW: f64 = 3.0e9;
/// Per-device capacity of the bundled SSD preset (3.84 TB).
pub const SSD_CAPACITY: f64 = 3.84e12;
/// PCIe 4.0 x16, effective per direction.
pub const PCIE4_BW: f64 = 2.5e10;
/// Host memory of the reference server.
pub const SERVER_CPU_MEM: f64 = 768.0 * GB;
/// CPU Adam throughput of the reference server, parameters/s.
pub const SERVER_CPU_OPT_TPUT: f64 = 0.8e9;
/// Largest SSD count accepted in a preset name.
pub const MAX_PRESET_SSDS: u64 = 32;

struct GpuPreset {
    prefix: &'static str,
    price_key: &'static str,
    mem: f64,
    tput: f64,
}

// Calibration defaults: sustained throughputs, not datasheet peaks.
const GPUS: [GpuPreset; 2] = [
    GpuPreset {
        prefix: "a100",
        price_key: "a100-80gb",
        mem: 80.0 * GB,
        tput: 2.0e14,
    },
    GpuPreset {
        prefix: "rtx4090",
        price_key: "rtx4090",
        mem: 24.0 * GB,
        tput: 1.64e14,
    },
];

impl HardwareConfig {
    /// Resolves `a100-<n>ssd` or `rtx4090-<n>ssd` (n in 1..=32) against the
    /// reference server: 768 GB DDR4, PCIe 4.0, 3.84 TB SSDs.
    pub fn preset(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        let (gpu_part, ssd_part) = lower.split_once('-')?;
        let n_ssd: u64 = ssd_part.strip_suffix("ssd")?.parse().ok()?;
        if !(1..=MAX_PRESET_SSDS).contains(&n_ssd) {
            return None;
        }
        let gpu = GPUS.iter().find(|g| g.prefix == gpu_part)?;
        Some(Self {
            name: lower.clone(),
            gpu: gpu.price_key.to_string(),
            bw_gpu: PCIE4_BW,
            bw_s2c: SSD_READ_BW,
            bw_c2s: SSD_WRITE_BW,
            n_ssd,
            gpu_mem: gpu.mem,
            cpu_mem: SERVER_CPU_MEM,
            ssd_capacity: SSD_CAPACITY * n_ssd as f64,
            gpu_tput: gpu.tput,
            cpu_opt_tput: SERVER_CPU_OPT_TPUT,
        })
    }

    /// The canonical preset names (12-SSD variants).
    pub fn preset_names() -> Vec<String> {
        GPUS.iter().map(|g| format!("{}-12ssd", g.prefix)).collect()
    }

    /// Changes the SSD count, scaling the array capacity with it.
    pub fn with_n_ssd(mut self, n_ssd: u64) -> Self {
        if self.n_ssd > 0 {
            self.ssd_capacity = self.ssd_capacity / self.n_ssd as f64 * n_ssd as f64;
        }
        self.n_ssd = n_ssd;
        self
    }

    pub fn with_cpu_mem(mut self, cpu_mem: f64) -> Self {
        self.cpu_mem = cpu_mem;
        self
    }

    /// Aggregate SSD-array bandwidth in one direction.
    pub fn aggregate_ssd_bw(&self, direction: SsdDirection) -> f64 {
        let per_ssd = match direction {
            SsdDirection::S2C => self.bw_s2c,
            SsdDirection::C2S => self.bw_c2s,
        };
        per_ssd * self.n_ssd as f64
    }
}

/// Checks every field; on success returns warnings about the optional
/// paired model (e.g. model states not fitting on the SSD array).
pub fn validate(
    hw: &HardwareConfig,
    model: Option<&ModelConfig>,
) -> Result<Vec<String>, Vec<FieldError>> {
    let mut errors = Vec::new();
    if hw.n_ssd < 1 {
        errors.push(FieldError::new("n_ssd", "n_ssd must be ≥ 1"));
    }
    let positive = [
        ("bw_gpu", hw.bw_gpu),
        ("bw_s2c", hw.bw_s2c),
        ("bw_c2s", hw.bw_c2s),
        ("gpu_mem", hw.gpu_mem),
        ("cpu_mem", hw.cpu_mem),
        ("ssd_capacity", hw.ssd_capacity),
        ("gpu_tput", hw.gpu_tput),
        ("cpu_opt_tput", hw.cpu_opt_tput),
    ];
    for (field, value) in positive {
        if !(value.is_finite() && value > 0.0) {
            errors.push(FieldError::new(
                field,
                format!("{field} must be finite and > 0 (got {value})"),
            ));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let mut warnings = Vec::new();
    if let Some(model) = model {
        let states = footprint(model).model_state_bytes() as f64;
        if hw.ssd_capacity < states {
            warnings.push(format!(
                "ssd_capacity {:.3e} B is below the {:.3e} B of model states of `{}`",
                hw.ssd_capacity, states, model.name
            ));
        }
    }
    Ok(warnings)
}
