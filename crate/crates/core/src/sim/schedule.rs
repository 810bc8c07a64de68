//! Turns a workload, a swap plan and a schedule variant into a task graph.
//!
//! Memory is bounded by sliding windows rather than by blocking in the
//! engine: a task that allocates item `k` of a buffer depends on the task
//! that releases the last item which must be gone for `k` to fit. The
//! engine then only checks the resulting effects against capacity.
//!
//! GPU memory is split into the static working set, a FIFO prefetch
//! buffer (parameters, restored activations), an offload staging buffer and
//! a gradient staging buffer. CPU memory holds the SSD→GPU prefetch queue,
//! CPU-placed checkpoints, gradients and the optimizer group buffer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Edge, MemEffect, Memory, Payload, Phase, Resource, Task, TaskGraph, TaskId, TaskKind};
use crate::error::{Error, Result};
use crate::hardware::{HardwareConfig, SsdDirection};
use crate::planner::SwapPlan;
use crate::workload::Workload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScheduleVariant {
    /// Every task strictly after the previous one; optimizer after backward.
    Serial,
    /// Transfers overlap compute; optimizer stage after backward with
    /// delayed write-back.
    Pipelined,
    /// Pipelined, plus optimizer updates running during backward and
    /// gradients that never touch the SSD.
    Overlapped,
}

impl ScheduleVariant {
    pub const ALL: [ScheduleVariant; 3] = [
        ScheduleVariant::Serial,
        ScheduleVariant::Pipelined,
        ScheduleVariant::Overlapped,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleVariant::Serial => "SERIAL",
            ScheduleVariant::Pipelined => "PIPELINED",
            ScheduleVariant::Overlapped => "OVERLAPPED",
        }
    }
}

impl fmt::Display for ScheduleVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown variant `{s}` (expected SERIAL, PIPELINED or OVERLAPPED)"
                ))
            })
    }
}

/// Unit of prefetch and compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    Layer,
    Block,
}

/// Where offloaded activations live between forward and backward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointPlacement {
    /// CPU memory when everything fits after the other buffers, else SSD.
    #[default]
    Dynamic,
    Cpu,
    Ssd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckpointLocation {
    Cpu,
    Ssd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleOptions {
    pub granularity: Granularity,
    /// Transformer blocks per optimizer parameter group.
    pub blocks_per_group: u64,
    pub checkpoint_placement: CheckpointPlacement,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        Self {
            granularity: Granularity::Layer,
            blocks_per_group: 1,
            checkpoint_placement: CheckpointPlacement::Dynamic,
        }
    }
}

/// Build-time decisions recorded alongside the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleHeader {
    pub variant: ScheduleVariant,
    pub granularity: Granularity,
    pub checkpoint_location: CheckpointLocation,
    pub num_units: usize,
    pub num_groups: usize,
    /// Offloaded activation bytes (checkpoints plus swapped layers).
    pub offload_bytes: u64,
    pub gpu_working_set: u64,
    pub gpu_fifo_capacity: u64,
    pub gpu_offload_staging: u64,
    pub gpu_grad_staging: u64,
    pub cpu_queue_capacity: u64,
    pub cpu_reserved: u64,
}

impl ScheduleHeader {
    pub fn empty(variant: ScheduleVariant, granularity: Granularity) -> Self {
        Self {
            variant,
            granularity,
            checkpoint_location: CheckpointLocation::Cpu,
            num_units: 0,
            num_groups: 0,
            offload_bytes: 0,
            gpu_working_set: 0,
            gpu_fifo_capacity: 0,
            gpu_offload_staging: 0,
            gpu_grad_staging: 0,
            cpu_queue_capacity: 0,
            cpu_reserved: 0,
        }
    }
}

/// For each item `k` of a FIFO buffer of `cap` bytes, the index of the
/// item that has to be released before `k` can be allocated, assuming
/// in-order release. `None` when every earlier item fits alongside.
pub(crate) fn window(sizes: &[u64], cap: u64) -> Vec<Option<usize>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut m = 0;
    let mut sum = 0u64;
    for (k, &s) in sizes.iter().enumerate() {
        sum += s;
        while sum > cap && m < k {
            sum -= sizes[m];
            m += 1;
        }
        out.push(m.checked_sub(1));
    }
    out
}

struct Unit {
    name: String,
    block: u64,
    last_in_block: bool,
    param_bytes: u64,
    /// Largest input + output of the unit's layers.
    max_io_bytes: u64,
    fwd_flops: f64,
    /// Forward FLOPs that backward does not replay.
    saved_flops: f64,
    swapped_bytes: u64,
}

impl Unit {
    fn working_set(&self) -> u64 {
        self.param_bytes + self.max_io_bytes
    }
}

fn build_units(w: &Workload, swapped: &[bool], granularity: Granularity) -> Vec<Unit> {
    let mut units: Vec<Unit> = Vec::new();
    for (i, layer) in w.layers.iter().enumerate() {
        let io = w.layer_input_bytes(i) + layer.act_bytes;
        let (saved, swap) = if swapped[i] {
            (layer.flops_fwd, layer.act_bytes)
        } else {
            (0.0, 0)
        };
        let first = i == 0 || w.layers[i - 1].block_index != layer.block_index;
        let last = i + 1 == w.layers.len() || w.layers[i + 1].block_index != layer.block_index;
        let merge = granularity == Granularity::Block && !first;
        if merge {
            let u = units.last_mut().expect("block has a first unit");
            u.name = format!("b{}", layer.block_index);
            u.last_in_block = last;
            u.param_bytes += layer.param_bytes;
            u.max_io_bytes = u.max_io_bytes.max(io);
            u.fwd_flops += layer.total_flops();
            u.saved_flops += saved;
            u.swapped_bytes += swap;
        } else {
            let name = match granularity {
                Granularity::Layer => format!("b{}.{}", layer.block_index, layer.kind),
                Granularity::Block => format!("b{}", layer.block_index),
            };
            units.push(Unit {
                name,
                block: layer.block_index,
                last_in_block: last,
                param_bytes: layer.param_bytes,
                max_io_bytes: io,
                fwd_flops: layer.total_flops(),
                saved_flops: saved,
                swapped_bytes: swap,
            });
        }
    }
    units
}

/// Buffer sizes derived from the workload, plan and hardware.
struct Layout {
    units: Vec<Unit>,
    ckpt: u64,
    working_set: u64,
    /// Offload groups: block-0 input checkpoint, then one per unit.
    offload_groups: Vec<u64>,
    offload_cap: u64,
    grad_cap: u64,
    fifo_cap: i64,
    /// Optimizer groups as ranges of backward unit positions.
    groups: Vec<std::ops::Range<usize>>,
    group_param_bytes: Vec<u64>,
}

impl Layout {
    fn new(w: &Workload, hw: &HardwareConfig, swapped: &[bool], opts: ScheduleOptions) -> Self {
        let units = build_units(w, swapped, opts.granularity);
        let ckpt = w.checkpoint_bytes_per_block;
        let working_set = units.iter().map(Unit::working_set).max().unwrap_or(0);

        let mut offload_groups = Vec::with_capacity(units.len() + 1);
        if !units.is_empty() {
            offload_groups.push(ckpt);
        }
        for (k, u) in units.iter().enumerate() {
            let next_ckpt = if u.last_in_block && k + 1 < units.len() {
                ckpt
            } else {
                0
            };
            offload_groups.push(u.swapped_bytes + next_ckpt);
        }
        let offload_cap = 2 * offload_groups.iter().copied().max().unwrap_or(0);
        let grad_cap = 2 * units.iter().map(|u| u.param_bytes).max().unwrap_or(0);
        let fifo_cap =
            hw.gpu_mem as i64 - working_set as i64 - offload_cap as i64 - grad_cap as i64;

        // backward visits units in reverse; group g holds blocks_per_group
        // consecutive blocks counted from the last one
        let bpg = opts.blocks_per_group.max(1);
        let last_block = units.last().map(|u| u.block).unwrap_or(0);
        let mut groups: Vec<std::ops::Range<usize>> = Vec::new();
        let mut group_param_bytes = Vec::new();
        for (pos, u) in units.iter().rev().enumerate() {
            let g = ((last_block - u.block) / bpg) as usize;
            if g == groups.len() {
                groups.push(pos..pos + 1);
                group_param_bytes.push(0);
            } else {
                groups[g].end = pos + 1;
            }
            group_param_bytes[g] += u.param_bytes;
        }

        Self {
            units,
            ckpt,
            working_set,
            offload_groups,
            offload_cap,
            grad_cap,
            fifo_cap,
            groups,
            group_param_bytes,
        }
    }

    fn num_units(&self) -> usize {
        self.units.len()
    }

    /// GPU FIFO items: forward units then backward units (reverse order).
    fn fifo_items(&self) -> Vec<u64> {
        let fwd = self.units.iter().map(|u| u.param_bytes);
        let bwd = self.units.iter().rev().map(|u| self.backward_item(u));
        fwd.chain(bwd).collect()
    }

    fn backward_item(&self, u: &Unit) -> u64 {
        u.param_bytes + u.swapped_bytes + if u.last_in_block { self.ckpt } else { 0 }
    }

    /// Fails with the name of the first unit whose prefetch does not fit.
    fn check_fifo(&self, gpu_mem: f64) -> Result<()> {
        let n = self.num_units();
        for (i, &item) in self.fifo_items().iter().enumerate() {
            if item as i64 > self.fifo_cap {
                let (pass, unit) = if i < n {
                    ("forward", &self.units[i])
                } else {
                    ("backward", &self.units[2 * n - 1 - i])
                };
                return Err(Error::infeasible(format!(
                    "{pass} prefetch of unit `{}` needs {item} B but the GPU FIFO has {} B \
                     ({} B GPU memory minus {} B working set and {} B staging)",
                    unit.name,
                    self.fifo_cap.max(0),
                    gpu_mem as u64,
                    self.working_set,
                    self.offload_cap + self.grad_cap,
                )));
            }
        }
        Ok(())
    }
}

/// Checks that the one-checkpoint-per-block strategy fits in GPU memory.
pub fn check_gpu_memory(w: &Workload, hw: &HardwareConfig, opts: ScheduleOptions) -> Result<()> {
    let none = vec![false; w.layers.len()];
    Layout::new(w, hw, &none, opts).check_fifo(hw.gpu_mem)
}

struct Builder {
    tasks: Vec<Task>,
    chain: bool,
}

struct Spec<'a> {
    name: String,
    kind: TaskKind,
    resource: Resource,
    work: f64,
    direction: Option<SsdDirection>,
    payload: Payload,
    phase: Phase,
    deps: &'a [Option<TaskId>],
    effects: &'a [(Memory, i64, Edge)],
}

impl Builder {
    fn add(&mut self, s: Spec<'_>) -> TaskId {
        let id = self.tasks.len() as TaskId;
        let mut deps: Vec<TaskId> = s.deps.iter().flatten().copied().collect();
        if self.chain && id > 0 {
            deps.push(id - 1);
        }
        deps.sort_unstable();
        deps.dedup();
        debug_assert!(deps.iter().all(|&d| d < id));
        self.tasks.push(Task {
            id,
            name: s.name,
            kind: s.kind,
            resource: s.resource,
            work: s.work,
            direction: s.direction,
            payload: s.payload,
            phase: s.phase,
            deps,
            mem_effects: s
                .effects
                .iter()
                .filter(|e| e.1 != 0)
                .map(|&(memory, delta, at)| MemEffect { memory, delta, at })
                .collect(),
        });
        id
    }

    #[allow(clippy::too_many_arguments)]
    fn ssd(
        &mut self,
        name: String,
        dir: SsdDirection,
        bytes: u64,
        payload: Payload,
        phase: Phase,
        deps: &[Option<TaskId>],
        effects: &[(Memory, i64, Edge)],
    ) -> TaskId {
        self.add(Spec {
            name,
            kind: TaskKind::Transfer,
            resource: Resource::LinkSsd,
            work: bytes as f64,
            direction: Some(dir),
            payload,
            phase,
            deps,
            effects,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn link(
        &mut self,
        name: String,
        resource: Resource,
        bytes: u64,
        payload: Payload,
        phase: Phase,
        deps: &[Option<TaskId>],
        effects: &[(Memory, i64, Edge)],
    ) -> TaskId {
        self.add(Spec {
            name,
            kind: TaskKind::Transfer,
            resource,
            work: bytes as f64,
            direction: None,
            payload,
            phase,
            deps,
            effects,
        })
    }
}

use Edge::{End, Start};
use Memory::{MemCpu as CPU, MemGpu as GPU};

fn i(bytes: u64) -> i64 {
    bytes as i64
}

/// Builds the task graph of one iteration.
pub fn build_schedule(
    w: &Workload,
    hw: &HardwareConfig,
    plan: &SwapPlan,
    variant: ScheduleVariant,
    opts: ScheduleOptions,
) -> Result<TaskGraph> {
    let swapped = plan.swapped_mask(w.layers.len());
    let lay = Layout::new(w, hw, &swapped, opts);
    lay.check_fifo(hw.gpu_mem)?;
    let n = lay.num_units();
    let units = &lay.units;
    let fifo_cap = lay.fifo_cap as u64;
    let overlapped = variant == ScheduleVariant::Overlapped;
    let mult = w.optimizer_state_multiplier;

    // CPU-side prefetch queue: bytes read from SSD per FIFO item
    let fifo_items = lay.fifo_items();
    let s2c = hw.aggregate_ssd_bw(SsdDirection::S2C);
    let offload_bytes = w.d_start() + units.iter().map(|u| u.swapped_bytes).sum::<u64>();

    let group_states: Vec<u64> = lay.group_param_bytes.iter().map(|&p| p * (mult + 1)).collect();
    let max_group_states = group_states.iter().copied().max().unwrap_or(0);
    let max_group_grads = lay.group_param_bytes.iter().copied().max().unwrap_or(0);
    let opt_cap = 3 * (max_group_states + max_group_grads);

    let cpu_items_if = |on_ssd: bool| -> Vec<u64> {
        let fwd = units.iter().map(|u| u.param_bytes);
        let bwd = units.iter().rev().map(|u| {
            if on_ssd {
                lay.backward_item(u)
            } else {
                u.param_bytes
            }
        });
        fwd.chain(bwd).collect()
    };
    let max_cpu_item = cpu_items_if(true).into_iter().max().unwrap_or(0);
    let cpu_queue_cap =
        ((fifo_cap as f64 * hw.bw_gpu / s2c) as u64).max(2 * max_cpu_item);
    let cpu_reserved =
        cpu_queue_cap + lay.offload_cap + opt_cap + 2 * max_group_grads + lay.grad_cap;

    let location = match opts.checkpoint_placement {
        CheckpointPlacement::Cpu => CheckpointLocation::Cpu,
        CheckpointPlacement::Ssd => CheckpointLocation::Ssd,
        CheckpointPlacement::Dynamic => {
            if (offload_bytes + cpu_reserved) as f64 <= hw.cpu_mem {
                CheckpointLocation::Cpu
            } else {
                CheckpointLocation::Ssd
            }
        }
    };
    let on_ssd = location == CheckpointLocation::Ssd;
    let cpu_items = cpu_items_if(on_ssd);

    let fifo_win = window(&fifo_items, fifo_cap);
    let cpu_win = window(&cpu_items, cpu_queue_cap);
    let off_win = window(&lay.offload_groups, lay.offload_cap);
    let bwd_grads: Vec<u64> = units.iter().rev().map(|u| u.param_bytes).collect();
    let grad_win = window(&bwd_grads, lay.grad_cap);
    let opt_sizes: Vec<u64> = group_states
        .iter()
        .zip(&lay.group_param_bytes)
        .map(|(s, g)| s + g)
        .collect();
    let opt_win = window(&opt_sizes, opt_cap);

    let mut b = Builder {
        tasks: Vec::new(),
        chain: variant == ScheduleVariant::Serial,
    };

    // release tasks of each buffer's items
    let mut fifo_rel: Vec<TaskId> = Vec::with_capacity(2 * n);
    let mut cpu_rel: Vec<TaskId> = Vec::with_capacity(2 * n);
    let mut off_gpu_rel: Vec<TaskId> = Vec::with_capacity(n + 1);
    let mut off_cpu_rel: Vec<TaskId> = Vec::with_capacity(n + 1);

    let fwd = Phase::Forward;

    // Offloads one item after `producer`; returns (d2h, ssd write).
    let offload = |b: &mut Builder,
                   name: String,
                   bytes: u64,
                   payload: Payload,
                   deps: &[Option<TaskId>],
                   alloc_gpu_at_start: bool|
     -> (TaskId, Option<TaskId>) {
        let gpu_alloc = if alloc_gpu_at_start { i(bytes) } else { 0 };
        let d2h = b.link(
            format!("fwd.d2h_{} {name}", payload_tag(payload)),
            Resource::LinkG2c,
            bytes,
            payload,
            fwd,
            deps,
            &[(GPU, gpu_alloc, Start), (GPU, -i(bytes), End), (CPU, i(bytes), Start)],
        );
        let write = on_ssd.then(|| {
            b.ssd(
                format!("fwd.write_{} {name}", payload_tag(payload)),
                SsdDirection::C2S,
                bytes,
                payload,
                fwd,
                &[Some(d2h)],
                &[(CPU, -i(bytes), End)],
            )
        });
        (d2h, write)
    };

    // ---- forward ----
    let mut prev_comp: Option<TaskId> = None;
    if n > 0 {
        let (d2h, write) = offload(
            &mut b,
            "b0".into(),
            lay.ckpt,
            Payload::Checkpoint,
            &[],
            true,
        );
        off_gpu_rel.push(d2h);
        off_cpu_rel.push(write.unwrap_or(d2h));
    }
    for (k, u) in units.iter().enumerate() {
        let read = b.ssd(
            format!("fwd.read_param {}", u.name),
            SsdDirection::S2C,
            u.param_bytes,
            Payload::Parameter,
            fwd,
            &[cpu_win[k].map(|j| cpu_rel[j])],
            &[(CPU, i(u.param_bytes), Start)],
        );
        let h2d = b.link(
            format!("fwd.h2d_param {}", u.name),
            Resource::LinkC2g,
            u.param_bytes,
            Payload::Parameter,
            fwd,
            &[Some(read), fifo_win[k].map(|j| fifo_rel[j])],
            &[(GPU, i(u.param_bytes), Start), (CPU, -i(u.param_bytes), End)],
        );
        cpu_rel.push(h2d);

        let group = k + 1;
        let out = lay.offload_groups[group];
        let comp = b.add(Spec {
            name: format!("fwd.comp {}", u.name),
            kind: TaskKind::Compute,
            resource: Resource::GpuCompute,
            work: u.fwd_flops,
            direction: None,
            payload: Payload::None,
            phase: fwd,
            deps: &[
                Some(h2d),
                prev_comp,
                off_win[group].map(|j| off_gpu_rel[j]),
            ],
            effects: &[(GPU, i(out), Start), (GPU, -i(u.param_bytes), End)],
        });
        fifo_rel.push(comp);
        prev_comp = Some(comp);

        // offloads of this unit's outputs; CPU staging window applies when
        // they continue to the SSD
        let cpu_gate = if on_ssd {
            off_win[group].map(|j| off_cpu_rel[j])
        } else {
            None
        };
        let mut last: Option<(TaskId, Option<TaskId>)> = None;
        if u.swapped_bytes > 0 {
            last = Some(offload(
                &mut b,
                u.name.clone(),
                u.swapped_bytes,
                Payload::Activation,
                &[Some(comp), cpu_gate],
                false,
            ));
        }
        if u.last_in_block && k + 1 < n {
            last = Some(offload(
                &mut b,
                format!("b{}", u.block + 1),
                lay.ckpt,
                Payload::Checkpoint,
                &[Some(comp), cpu_gate],
                false,
            ));
        }
        match last {
            Some((d2h, write)) => {
                off_gpu_rel.push(d2h);
                off_cpu_rel.push(write.unwrap_or(d2h));
            }
            None => {
                // nothing held: inherit the previous release to keep order
                off_gpu_rel.push(*off_gpu_rel.last().expect("pre group"));
                off_cpu_rel.push(*off_cpu_rel.last().expect("pre group"));
            }
        }
    }
    let forward_done = prev_comp;

    // ---- backward (+ optimizer for OVERLAPPED) ----
    let bwd = Phase::Backward;
    let opt = Phase::Optimizer;
    let mut grad_rel: Vec<TaskId> = Vec::with_capacity(n);
    let mut grad_write_last: Option<TaskId> = None;
    let mut group_grads: Vec<Vec<TaskId>> = vec![Vec::new(); lay.groups.len()];
    let mut updates: Vec<TaskId> = Vec::with_capacity(lay.groups.len());
    let mut writes: Vec<TaskId> = Vec::with_capacity(lay.groups.len());
    let group_of = |pos: usize| lay.groups.iter().position(|r| r.contains(&pos)).unwrap();

    for (pos, u) in units.iter().rev().enumerate() {
        let item = n + pos;
        let g = group_of(pos);
        let mut pieces: Vec<(u64, Payload)> = vec![(u.param_bytes, Payload::Parameter)];
        if u.swapped_bytes > 0 {
            pieces.push((u.swapped_bytes, Payload::Activation));
        }
        if u.last_in_block {
            pieces.push((lay.ckpt, Payload::Checkpoint));
        }

        let mut read_gate = cpu_win[item].map(|j| cpu_rel[j]);
        let mut prev_h2d: Option<TaskId> = None;
        let mut h2ds = Vec::with_capacity(pieces.len());
        for (idx, &(bytes, payload)) in pieces.iter().enumerate() {
            let from_ssd = payload == Payload::Parameter || on_ssd;
            let read = from_ssd.then(|| {
                let r = b.ssd(
                    format!("bwd.read_{} {}", payload_tag(payload), u.name),
                    SsdDirection::S2C,
                    bytes,
                    payload,
                    bwd,
                    &[read_gate],
                    &[(CPU, i(bytes), Start)],
                );
                read_gate = Some(r);
                r
            });
            let fifo_gate = if idx == 0 {
                fifo_win[item].map(|j| fifo_rel[j])
            } else {
                None
            };
            let h2d = b.link(
                format!("bwd.h2d_{} {}", payload_tag(payload), u.name),
                Resource::LinkC2g,
                bytes,
                payload,
                bwd,
                &[read, prev_h2d, fifo_gate],
                &[(GPU, i(bytes), Start), (CPU, -i(bytes), End)],
            );
            prev_h2d = Some(h2d);
            h2ds.push(Some(h2d));
        }
        cpu_rel.push(prev_h2d.expect("param piece"));

        let held = lay.backward_item(u);
        let grad = u.param_bytes;
        let mut comp_deps = h2ds.clone();
        comp_deps.push(prev_comp);
        comp_deps.push(grad_win[pos].map(|j| grad_rel[j]));
        let comp = b.add(Spec {
            name: format!("bwd.comp {}", u.name),
            kind: TaskKind::Compute,
            resource: Resource::GpuCompute,
            work: 3.0 * u.fwd_flops - u.saved_flops,
            direction: None,
            payload: Payload::None,
            phase: bwd,
            deps: &comp_deps,
            effects: &[(GPU, i(grad), Start), (GPU, -i(held), End)],
        });
        fifo_rel.push(comp);
        prev_comp = Some(comp);

        let first_of_group = lay.groups[g].start == pos;
        let d2h = if overlapped {
            let gate = if first_of_group && g >= 2 {
                Some(updates[g - 2])
            } else {
                None
            };
            b.link(
                format!("bwd.d2h_grad {}", u.name),
                Resource::LinkG2c,
                grad,
                Payload::Gradient,
                bwd,
                &[Some(comp), gate],
                &[(GPU, -i(grad), End), (CPU, i(grad), Start)],
            )
        } else {
            let d2h = b.link(
                format!("bwd.d2h_grad {}", u.name),
                Resource::LinkG2c,
                grad,
                Payload::Gradient,
                bwd,
                &[Some(comp), grad_win[pos].map(|j| grad_rel_cpu(&b, j, &grad_rel))],
                &[(GPU, -i(grad), End), (CPU, i(grad), Start)],
            );
            let write = b.ssd(
                format!("bwd.write_grad {}", u.name),
                SsdDirection::C2S,
                grad,
                Payload::Gradient,
                bwd,
                &[Some(d2h)],
                &[(CPU, -i(grad), End)],
            );
            grad_write_last = Some(write);
            d2h
        };
        grad_rel.push(d2h);
        group_grads[g].push(d2h);

        if overlapped && lay.groups[g].end == pos + 1 {
            let pg = lay.group_param_bytes[g];
            let states = group_states[g];
            let gate = opt_win[g].map(|j| writes[j]);
            let read = b.ssd(
                format!("opt.read_state g{g}"),
                SsdDirection::S2C,
                pg * mult,
                Payload::OptimizerState,
                opt,
                &[forward_done, gate],
                &[(CPU, i(states), Start)],
            );
            let mut deps: Vec<Option<TaskId>> = group_grads[g].iter().map(|&t| Some(t)).collect();
            deps.push(Some(read));
            let update = b.add(Spec {
                name: format!("opt.update g{g}"),
                kind: TaskKind::OptimizerUpdate,
                resource: Resource::CpuCompute,
                work: (pg / w.param_elem_bytes) as f64,
                direction: None,
                payload: Payload::None,
                phase: opt,
                deps: &deps,
                effects: &[(CPU, -i(pg), End)],
            });
            let write = b.ssd(
                format!("opt.write_state g{g}"),
                SsdDirection::C2S,
                states,
                Payload::ModelState,
                opt,
                &[Some(update)],
                &[(CPU, -i(states), End)],
            );
            updates.push(update);
            writes.push(write);
        }
    }

    // ---- optimizer stage (SERIAL, PIPELINED) ----
    if !overlapped {
        let stage_gate = grad_write_last.or(prev_comp);
        for g in 0..lay.groups.len() {
            let pg = lay.group_param_bytes[g];
            let states = group_states[g];
            let gate = opt_win[g].map(|j| writes[j]);
            let read_grad = b.ssd(
                format!("opt.read_grad g{g}"),
                SsdDirection::S2C,
                pg,
                Payload::Gradient,
                opt,
                &[stage_gate, gate],
                &[(CPU, i(pg), Start)],
            );
            let read = b.ssd(
                format!("opt.read_state g{g}"),
                SsdDirection::S2C,
                pg * mult,
                Payload::OptimizerState,
                opt,
                &[Some(read_grad)],
                &[(CPU, i(states), Start)],
            );
            let update = b.add(Spec {
                name: format!("opt.update g{g}"),
                kind: TaskKind::OptimizerUpdate,
                resource: Resource::CpuCompute,
                work: (pg / w.param_elem_bytes) as f64,
                direction: None,
                payload: Payload::None,
                phase: opt,
                deps: &[Some(read_grad), Some(read)],
                effects: &[(CPU, -i(pg), End)],
            });
            let write = b.ssd(
                format!("opt.write_state g{g}"),
                SsdDirection::C2S,
                states,
                Payload::ModelState,
                opt,
                &[Some(update)],
                &[(CPU, -i(states), End)],
            );
            updates.push(update);
            writes.push(write);
        }
    }

    Ok(TaskGraph {
        header: ScheduleHeader {
            variant,
            granularity: opts.granularity,
            checkpoint_location: location,
            num_units: n,
            num_groups: lay.groups.len(),
            offload_bytes,
            gpu_working_set: lay.working_set,
            gpu_fifo_capacity: fifo_cap,
            gpu_offload_staging: lay.offload_cap,
            gpu_grad_staging: lay.grad_cap,
            cpu_queue_capacity: cpu_queue_cap,
            cpu_reserved,
        },
        tasks: b.tasks,
        static_mem: vec![(GPU, lay.working_set)],
    })
}

/// The SSD write that releases CPU gradient staging for the gradient whose
/// device-to-host copy is `grad_rel[j]`.
fn grad_rel_cpu(b: &Builder, j: usize, grad_rel: &[TaskId]) -> TaskId {
    // the write is created right after its d2h
    let d2h = grad_rel[j];
    debug_assert_eq!(b.tasks[d2h as usize + 1].payload, Payload::Gradient);
    d2h + 1
}

fn payload_tag(p: Payload) -> &'static str {
    match p {
        Payload::None => "none",
        Payload::Parameter => "param",
        Payload::Checkpoint => "ckpt",
        Payload::Activation => "act",
        Payload::Gradient => "grad",
        Payload::OptimizerState => "state",
        Payload::ModelState => "state",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_semantics() {
        assert_eq!(window(&[1, 1, 1, 1], 2), [None, None, Some(0), Some(1)]);
        assert_eq!(window(&[3, 1, 1], 4), [None, None, Some(0)]);
        assert_eq!(window(&[1, 1, 1], 10), [None, None, None]);
        assert!(window(&[], 1).is_empty());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in ScheduleVariant::ALL {
            assert_eq!(v.as_str().parse::<ScheduleVariant>().unwrap(), v);
        }
        assert_eq!(
            "overlapped".parse::<ScheduleVariant>().unwrap(),
            ScheduleVariant::Overlapped
        );
        assert!("fast".parse::<ScheduleVariant>().is_err());
    }
}
