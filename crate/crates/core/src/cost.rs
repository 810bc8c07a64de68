//! Closed-form iteration-time model.
//!
//! An iteration is a forward stage followed by an overlapped
//! backward + optimizer stage. Each stage lasts as long as its slowest
//! resource: GPU compute, CPU optimizer, the duplex GPU↔CPU link, or the
//! simplex SSD array (whose read and write times add up).
//!
//! The only planner-controlled inputs are the swapped checkpoint volume
//! `d_f` and the FLOPs that still have to be recomputed in backward; both
//! travel together in [`SwapState`].

use serde::{Deserialize, Serialize};

use crate::hardware::{HardwareConfig, SsdDirection};
use crate::workload::Workload;

/// Activation-swap decision as seen by the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapState {
    /// One-way checkpoint bytes moved GPU→SSD in forward (and back in
    /// backward).
    pub d_f: f64,
    /// Forward FLOPs that backward has to replay.
    pub recompute_flops: f64,
}

impl SwapState {
    /// One checkpoint per block, every layer recomputed.
    pub fn at_start(w: &Workload) -> Self {
        Self {
            d_f: w.d_start() as f64,
            recompute_flops: w.forward_flops(),
        }
    }
}

/// Which term of a stage maximum was the largest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bottleneck {
    GpuCompute,
    CpuOptimizer,
    GpuLink,
    SsdLink,
}

impl Bottleneck {
    pub fn as_str(self) -> &'static str {
        match self {
            Bottleneck::GpuCompute => "gpu_compute",
            Bottleneck::CpuOptimizer => "cpu_optimizer",
            Bottleneck::GpuLink => "gpu_link",
            Bottleneck::SsdLink => "ssd_link",
        }
    }
}

impl std::fmt::Display for Bottleneck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// First maximal entry; earlier entries win ties.
fn argmax(terms: &[(f64, Bottleneck)]) -> (f64, Bottleneck) {
    let mut best = terms[0];
    for &t in &terms[1..] {
        if t.0 > best.0 {
            best = t;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardTime {
    pub t_f: f64,
    pub t_f_comp: f64,
    pub t_f_gpu: f64,
    pub t_f_ssd: f64,
    pub bottleneck: Bottleneck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackwardOptimizerTime {
    pub t_bo: f64,
    pub t_b_comp: f64,
    pub t_o_comp: f64,
    pub t_bo_gpu: f64,
    pub t_bo_ssd: f64,
    /// Recompute time inside `t_b_comp`.
    pub rc: f64,
    /// Gradients only, GPU→CPU.
    pub t_bo_gpu_uplink: f64,
    /// Parameters plus checkpoints, CPU→GPU.
    pub t_bo_gpu_downlink: f64,
    pub bottleneck: Bottleneck,
}

/// Every time term of one iteration, flat for machine-readable reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub d_f: f64,
    pub t_f_comp: f64,
    pub t_f_gpu: f64,
    pub t_f_ssd: f64,
    pub t_f: f64,
    pub t_b_comp: f64,
    pub rc: f64,
    pub t_o_comp: f64,
    pub t_bo_gpu: f64,
    pub t_bo_gpu_uplink: f64,
    pub t_bo_gpu_downlink: f64,
    pub t_bo_ssd: f64,
    pub t_bo: f64,
    pub t_iter: f64,
    pub bottleneck_f: Bottleneck,
    pub bottleneck_bo: Bottleneck,
}

/// GPU compute time of the forward pass.
pub fn forward_compute_time(w: &Workload, hw: &HardwareConfig) -> f64 {
    w.forward_flops() / hw.gpu_tput
}

pub fn forward_time(w: &Workload, hw: &HardwareConfig, d_f: f64) -> ForwardTime {
    let p2 = w.param_bytes();
    let t_f_comp = forward_compute_time(w, hw);
    let t_f_gpu = p2.max(d_f) / hw.bw_gpu;
    let t_f_ssd = p2 / hw.aggregate_ssd_bw(SsdDirection::S2C)
        + d_f / hw.aggregate_ssd_bw(SsdDirection::C2S);
    let (t_f, bottleneck) = argmax(&[
        (t_f_comp, Bottleneck::GpuCompute),
        (t_f_gpu, Bottleneck::GpuLink),
        (t_f_ssd, Bottleneck::SsdLink),
    ]);
    ForwardTime {
        t_f,
        t_f_comp,
        t_f_gpu,
        t_f_ssd,
        bottleneck,
    }
}

pub fn backward_optimizer_time(
    w: &Workload,
    hw: &HardwareConfig,
    swap: SwapState,
) -> BackwardOptimizerTime {
    let p2 = w.param_bytes();
    let states = w.optimizer_state_bytes();
    let d_f = swap.d_f;

    let rc = swap.recompute_flops / hw.gpu_tput;
    let t_b_comp = 2.0 * forward_compute_time(w, hw) + rc;
    let t_o_comp = w.param_count as f64 / hw.cpu_opt_tput;

    let t_bo_gpu_uplink = p2 / hw.bw_gpu;
    let t_bo_gpu_downlink = (p2 + d_f) / hw.bw_gpu;
    let t_bo_gpu = p2.max(p2 + d_f) / hw.bw_gpu;

    let t_bo_ssd = (states + p2 + d_f) / hw.aggregate_ssd_bw(SsdDirection::S2C)
        + (states + p2) / hw.aggregate_ssd_bw(SsdDirection::C2S);

    let (t_bo, bottleneck) = argmax(&[
        (t_b_comp, Bottleneck::GpuCompute),
        (t_o_comp, Bottleneck::CpuOptimizer),
        (t_bo_gpu, Bottleneck::GpuLink),
        (t_bo_ssd, Bottleneck::SsdLink),
    ]);
    BackwardOptimizerTime {
        t_bo,
        t_b_comp,
        t_o_comp,
        t_bo_gpu,
        t_bo_ssd,
        rc,
        t_bo_gpu_uplink,
        t_bo_gpu_downlink,
        bottleneck,
    }
}

pub fn iteration_time(w: &Workload, hw: &HardwareConfig, swap: SwapState) -> CostBreakdown {
    combine(
        swap.d_f,
        forward_time(w, hw, swap.d_f),
        backward_optimizer_time(w, hw, swap),
    )
}

pub(crate) fn combine(d_f: f64, f: ForwardTime, bo: BackwardOptimizerTime) -> CostBreakdown {
    CostBreakdown {
        d_f,
        t_f_comp: f.t_f_comp,
        t_f_gpu: f.t_f_gpu,
        t_f_ssd: f.t_f_ssd,
        t_f: f.t_f,
        t_b_comp: bo.t_b_comp,
        rc: bo.rc,
        t_o_comp: bo.t_o_comp,
        t_bo_gpu: bo.t_bo_gpu,
        t_bo_gpu_uplink: bo.t_bo_gpu_uplink,
        t_bo_gpu_downlink: bo.t_bo_gpu_downlink,
        t_bo_ssd: bo.t_bo_ssd,
        t_bo: bo.t_bo,
        t_iter: f.t_f + bo.t_bo,
        bottleneck_f: f.bottleneck,
        bottleneck_bo: bo.bottleneck,
    }
}

/// Upper bound on extra swapping, evaluated at the starting swap state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapBudget {
    /// Backward compute time that swapping could still hide, seconds. May be
    /// negative when communication already dominates.
    pub t_max: f64,
    /// Largest admissible `d_f`, bytes. Equals `d_start` when `t_max ≤ 0`.
    pub d_max: f64,
}

pub fn swap_budget(w: &Workload, hw: &HardwareConfig, start: SwapState) -> SwapBudget {
    let bo = backward_optimizer_time(w, hw, start);
    let t_max = bo.t_b_comp - bo.t_bo_gpu.max(bo.t_bo_ssd);
    let d_max = if t_max <= 0.0 {
        start.d_f
    } else {
        let bw = hw
            .bw_gpu
            .min(hw.aggregate_ssd_bw(SsdDirection::C2S))
            .min(hw.aggregate_ssd_bw(SsdDirection::S2C));
        t_max * bw
    };
    SwapBudget { t_max, d_max }
}
