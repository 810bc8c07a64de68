//! Activation swap planning.
//!
//! Layers are ranked by swap benefit (recompute FLOPs saved per unit of
//! swap time). `Linear_4htoh` outputs form the high-priority queue, every
//! other layer the low-priority one. The planner then sweeps prefixes of
//! that order, updating the cost terms incrementally, and keeps the
//! cheapest prefix that stays within the swap budget.

use serde::{Deserialize, Serialize};

use crate::cost::{self, CostBreakdown, SwapBudget, SwapState};
use crate::error::{Error, Result};
use crate::hardware::{HardwareConfig, SsdDirection};
use crate::sim::schedule::check_gpu_memory;
use crate::workload::{LayerKind, LayerProfile, Workload};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRef {
    /// Index into [`Workload::layers`].
    pub index: usize,
    pub block_index: u64,
    pub kind: LayerKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapPlan {
    pub d_start: f64,
    pub d_f: f64,
    pub d_max: f64,
    pub t_max: f64,
    /// Swapped layers, a prefix of the priority order.
    pub swapped_layers: Vec<LayerRef>,
    /// `(d_f − d_start) / intra-block activation bytes`.
    pub swap_coefficient: f64,
    pub predicted: CostBreakdown,
}

impl SwapPlan {
    pub fn state(&self, w: &Workload) -> SwapState {
        let saved: f64 = self
            .swapped_layers
            .iter()
            .map(|l| w.layers[l.index].flops_fwd)
            .sum();
        SwapState {
            d_f: self.d_f,
            recompute_flops: w.forward_flops() - saved,
        }
    }

    /// `mask[i]` is true when layer `i` is swapped.
    pub fn swapped_mask(&self, num_layers: usize) -> Vec<bool> {
        let mut mask = vec![false; num_layers];
        for l in &self.swapped_layers {
            mask[l.index] = true;
        }
        mask
    }
}

/// Recompute FLOPs saved per unit of swap time, normalized so that a
/// `Linear_htoh` layer of the same shape scores 1.
pub fn swap_benefit_factor(layer: &LayerProfile) -> f64 {
    let per_unit = layer.flops_fwd / layer.swap_time_units as f64;
    let htoh_flops = layer.flops_fwd / layer.kind.weight_units() as f64;
    per_unit / htoh_flops
}

/// Splits layer indices into the high-priority queue (`Linear_4htoh`) and
/// the low-priority queue (the rest, best SBF first, then block order).
pub fn build_priority_queues(profiles: &[LayerProfile]) -> (Vec<usize>, Vec<usize>) {
    let (high, mut low): (Vec<usize>, Vec<usize>) =
        (0..profiles.len()).partition(|&i| profiles[i].kind == LayerKind::Linear4htoh);
    low.sort_by(|&a, &b| {
        let (pa, pb) = (&profiles[a], &profiles[b]);
        swap_benefit_factor(pb)
            .total_cmp(&swap_benefit_factor(pa))
            .then(pa.block_index.cmp(&pb.block_index))
            .then(a.cmp(&b))
    });
    (high, low)
}

/// High queue followed by the low queue.
pub fn priority_order(profiles: &[LayerProfile]) -> Vec<usize> {
    let (mut high, low) = build_priority_queues(profiles);
    high.extend(low);
    high
}

/// Predicted cost of swapping the first `swapped` layers of the priority
/// order, as tracked by the incremental sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefixCost {
    pub swapped: usize,
    pub d_f: f64,
    pub t_iter: f64,
    /// Within `d_start ≤ d_f ≤ d_max`.
    pub feasible: bool,
}

/// Running cost terms while the prefix grows one layer at a time.
struct Sweep {
    p2: f64,
    bw_gpu: f64,
    d_f: f64,
    t_f_comp: f64,
    t_f_ssd: f64,
    t_b_comp: f64,
    t_o_comp: f64,
    t_bo_gpu: f64,
    t_bo_ssd: f64,
}

impl Sweep {
    fn new(w: &Workload, hw: &HardwareConfig) -> Self {
        let b = cost::iteration_time(w, hw, SwapState::at_start(w));
        Self {
            p2: w.param_bytes(),
            bw_gpu: hw.bw_gpu,
            d_f: b.d_f,
            t_f_comp: b.t_f_comp,
            t_f_ssd: b.t_f_ssd,
            t_b_comp: b.t_b_comp,
            t_o_comp: b.t_o_comp,
            t_bo_gpu: b.t_bo_gpu,
            t_bo_ssd: b.t_bo_ssd,
        }
    }

    fn swap(&mut self, layer: &LayerProfile, hw: &HardwareConfig) {
        let bytes = layer.act_bytes as f64;
        self.d_f += bytes;
        self.t_b_comp -= layer.flops_fwd / hw.gpu_tput;
        self.t_bo_gpu += bytes / hw.bw_gpu;
        self.t_bo_ssd += bytes / hw.aggregate_ssd_bw(SsdDirection::S2C);
        self.t_f_ssd += bytes / hw.aggregate_ssd_bw(SsdDirection::C2S);
    }

    fn t_iter(&self) -> f64 {
        let t_f_gpu = self.p2.max(self.d_f) / self.bw_gpu;
        let t_f = self.t_f_comp.max(t_f_gpu).max(self.t_f_ssd);
        let t_bo = self
            .t_b_comp
            .max(self.t_o_comp)
            .max(self.t_bo_gpu)
            .max(self.t_bo_ssd);
        t_f + t_bo
    }
}

/// Costs every prefix `0..=L` of the priority order incrementally.
pub fn prefix_costs(w: &Workload, hw: &HardwareConfig) -> (SwapBudget, Vec<PrefixCost>) {
    let start = SwapState::at_start(w);
    let budget = cost::swap_budget(w, hw, start);
    let order = priority_order(&w.layers);
    let mut sweep = Sweep::new(w, hw);
    let mut out = Vec::with_capacity(order.len() + 1);
    out.push(PrefixCost {
        swapped: 0,
        d_f: sweep.d_f,
        t_iter: sweep.t_iter(),
        feasible: true,
    });
    for (i, &idx) in order.iter().enumerate() {
        sweep.swap(&w.layers[idx], hw);
        out.push(PrefixCost {
            swapped: i + 1,
            d_f: sweep.d_f,
            t_iter: sweep.t_iter(),
            feasible: start.d_f <= sweep.d_f && sweep.d_f <= budget.d_max,
        });
    }
    (budget, out)
}

/// Builds the plan that swaps the first `swapped` layers of the priority
/// order, with costs recomputed from scratch.
pub fn plan_with_prefix(w: &Workload, hw: &HardwareConfig, swapped: usize) -> SwapPlan {
    let start = SwapState::at_start(w);
    let budget = cost::swap_budget(w, hw, start);
    let order = priority_order(&w.layers);
    let swapped_layers: Vec<LayerRef> = order
        .iter()
        .take(swapped)
        .map(|&index| LayerRef {
            index,
            block_index: w.layers[index].block_index,
            kind: w.layers[index].kind,
        })
        .collect();
    let extra: u64 = swapped_layers
        .iter()
        .map(|l| w.layers[l.index].act_bytes)
        .sum();
    let total = w.intra_block_activation_bytes();
    let mut plan = SwapPlan {
        d_start: start.d_f,
        d_f: start.d_f + extra as f64,
        d_max: budget.d_max,
        t_max: budget.t_max,
        swapped_layers,
        swap_coefficient: if total == 0 {
            0.0
        } else {
            extra as f64 / total as f64
        },
        predicted: cost::iteration_time(w, hw, start),
    };
    plan.predicted = cost::iteration_time(w, hw, plan.state(w));
    plan
}

/// Picks the feasible prefix with the smallest predicted iteration time,
/// preferring fewer swapped layers on ties. Fails when the starting
/// strategy does not fit in GPU memory.
pub fn plan_swaps(w: &Workload, hw: &HardwareConfig) -> Result<SwapPlan> {
    check_gpu_memory(w, hw, Default::default())?;
    let (_, costs) = prefix_costs(w, hw);
    let best = costs
        .iter()
        .filter(|c| c.feasible)
        .fold(None::<&PrefixCost>, |best, c| match best {
            Some(b) if b.t_iter <= c.t_iter => Some(b),
            _ => Some(c),
        })
        .map(|c| c.swapped)
        .unwrap_or(0);
    Ok(plan_with_prefix(w, hw, best))
}

/// Prefix whose extra swap volume is closest to `target_extra` bytes
/// (ties go to the shorter prefix).
fn nearest_prefix(w: &Workload, target_extra: f64) -> usize {
    let order = priority_order(&w.layers);
    let mut best = (0usize, target_extra.abs());
    let mut acc = 0.0;
    for (i, &idx) in order.iter().enumerate() {
        acc += w.layers[idx].act_bytes as f64;
        let err = (acc - target_extra).abs();
        if err < best.1 {
            best = (i + 1, err);
        }
    }
    best.0
}

/// Plan that swaps approximately `coefficient` of the intra-block
/// activation bytes, rounded to the nearest priority prefix.
pub fn plan_fixed_coefficient(
    w: &Workload,
    hw: &HardwareConfig,
    coefficient: f64,
) -> Result<SwapPlan> {
    if !(0.0..=1.0).contains(&coefficient) {
        return Err(Error::Invalid(vec![crate::error::FieldError::new(
            "planner.value",
            format!("swap coefficient must be within [0, 1] (got {coefficient})"),
        )]));
    }
    check_gpu_memory(w, hw, Default::default())?;
    let target = coefficient * w.intra_block_activation_bytes() as f64;
    Ok(plan_with_prefix(w, hw, nearest_prefix(w, target)))
}

/// Plan whose total swap volume is approximately `d_f` bytes.
pub fn plan_fixed_d_f(w: &Workload, hw: &HardwareConfig, d_f: f64) -> Result<SwapPlan> {
    let d_start = w.d_start() as f64;
    if !(d_f.is_finite() && d_f >= d_start) {
        return Err(Error::Invalid(vec![crate::error::FieldError::new(
            "planner.bytes",
            format!("fixed d_f {d_f} must be ≥ d_start {d_start}"),
        )]));
    }
    check_gpu_memory(w, hw, Default::default())?;
    Ok(plan_with_prefix(w, hw, nearest_prefix(w, d_f - d_start)))
}
