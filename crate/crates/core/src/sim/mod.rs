//! Deterministic discrete-event simulation of one training iteration.
//!
//! A [`TaskGraph`] is a DAG of compute and transfer tasks, each bound to one
//! serial execution resource. [`simulate`] runs it: every resource executes
//! one task at a time, picking among ready tasks by `(ready time, task id)`,
//! and memory effects are applied at task boundaries. Time is kept in
//! integer picoseconds so that sums do not depend on evaluation order.

mod check;
mod chrome;
mod engine;
pub mod schedule;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hardware::{HardwareConfig, SsdDirection};

pub use check::{check_trace_invariants, InvariantCheck, InvariantReport};
pub use chrome::{to_chrome_trace, write_chrome_trace};
pub use engine::simulate;
pub use schedule::{
    build_schedule, CheckpointLocation, Granularity, ScheduleHeader, ScheduleOptions,
    ScheduleVariant,
};

/// Picoseconds per second.
pub const PS_PER_S: f64 = 1e12;

/// Serial execution resources. Each runs at most one task at a time.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Resource {
    GpuCompute,
    CpuCompute,
    /// CPU → GPU direction of the PCIe link.
    LinkC2g,
    /// GPU → CPU direction of the PCIe link.
    LinkG2c,
    /// The SSD array; reads and writes share it.
    LinkSsd,
}

impl Resource {
    pub const ALL: [Resource; 5] = [
        Resource::GpuCompute,
        Resource::CpuCompute,
        Resource::LinkC2g,
        Resource::LinkG2c,
        Resource::LinkSsd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Resource::GpuCompute => "GPU_COMPUTE",
            Resource::CpuCompute => "CPU_COMPUTE",
            Resource::LinkC2g => "LINK_C2G",
            Resource::LinkG2c => "LINK_G2C",
            Resource::LinkSsd => "LINK_SSD",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

/// Capacity-limited memories.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Memory {
    MemGpu,
    MemCpu,
}

impl Memory {
    pub const ALL: [Memory; 2] = [Memory::MemGpu, Memory::MemCpu];

    pub fn as_str(self) -> &'static str {
        match self {
            Memory::MemGpu => "MEM_GPU",
            Memory::MemCpu => "MEM_CPU",
        }
    }

    pub fn capacity(self, hw: &HardwareConfig) -> f64 {
        match self {
            Memory::MemGpu => hw.gpu_mem,
            Memory::MemCpu => hw.cpu_mem,
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Compute,
    Transfer,
    OptimizerUpdate,
}

/// What a transfer carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    None,
    Parameter,
    Checkpoint,
    Activation,
    Gradient,
    OptimizerState,
    /// Updated fp32 states plus fp16 parameters written back together.
    ModelState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Forward,
    Backward,
    Optimizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Start,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemEffect {
    pub memory: Memory,
    pub delta: i64,
    pub at: Edge,
}

pub type TaskId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub name: String,
    pub kind: TaskKind,
    pub resource: Resource,
    /// Bytes for transfers, FLOPs for GPU compute, parameters for CPU
    /// optimizer updates.
    pub work: f64,
    /// Set for tasks on [`Resource::LinkSsd`].
    pub direction: Option<SsdDirection>,
    pub payload: Payload,
    pub phase: Phase,
    pub deps: Vec<TaskId>,
    pub mem_effects: Vec<MemEffect>,
}

impl Task {
    /// Execution rate of this task on `hw`, in work units per second.
    pub fn rate(&self, hw: &HardwareConfig) -> f64 {
        match self.resource {
            Resource::GpuCompute => hw.gpu_tput,
            Resource::CpuCompute => hw.cpu_opt_tput,
            Resource::LinkC2g | Resource::LinkG2c => hw.bw_gpu,
            Resource::LinkSsd => {
                hw.aggregate_ssd_bw(self.direction.unwrap_or(SsdDirection::S2C))
            }
        }
    }

    /// Exact duration in seconds.
    pub fn duration_s(&self, hw: &HardwareConfig) -> f64 {
        self.work / self.rate(hw)
    }

    /// Duration rounded to whole picoseconds.
    pub fn duration_ps(&self, hw: &HardwareConfig) -> u64 {
        (self.duration_s(hw) * PS_PER_S).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGraph {
    pub header: ScheduleHeader,
    pub tasks: Vec<Task>,
    /// Reservations held for the whole iteration (e.g. the activation
    /// working set on the GPU).
    pub static_mem: Vec<(Memory, u64)>,
}

impl TaskGraph {
    /// Per-resource sum of task durations in seconds: the roofline lower
    /// bound on the makespan.
    pub fn resource_work_s(&self, hw: &HardwareConfig) -> BTreeMap<Resource, f64> {
        let mut out: BTreeMap<Resource, f64> = Resource::ALL.iter().map(|&r| (r, 0.0)).collect();
        for t in &self.tasks {
            *out.entry(t.resource).or_default() += t.duration_s(hw);
        }
        out
    }

    /// Sum of every task duration in seconds.
    pub fn total_duration_s(&self, hw: &HardwareConfig) -> f64 {
        self.tasks.iter().map(|t| t.duration_s(hw)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub task: TaskId,
    pub name: String,
    pub kind: TaskKind,
    pub resource: Resource,
    pub payload: Payload,
    pub direction: Option<SsdDirection>,
    pub phase: Phase,
    pub work: f64,
    pub start_ps: u64,
    pub end_ps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemSample {
    pub t_ps: u64,
    pub memory: Memory,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub header: ScheduleHeader,
    /// Sorted by `(start, task id)`.
    pub events: Vec<TraceEvent>,
    pub makespan_ps: u64,
    pub busy_ps: BTreeMap<Resource, u64>,
    pub peak_mem: BTreeMap<Memory, u64>,
    pub mem_capacity: BTreeMap<Memory, u64>,
    /// Memory level after every change.
    pub mem_timeline: Vec<MemSample>,
}

impl SimTrace {
    pub fn makespan_s(&self) -> f64 {
        self.makespan_ps as f64 / PS_PER_S
    }

    /// Bytes moved on `resource` carrying `payload`.
    pub fn payload_bytes(&self, resource: Resource, payload: Payload) -> f64 {
        self.events
            .iter()
            .filter(|e| e.resource == resource && e.payload == payload)
            .map(|e| e.work)
            .sum()
    }

    pub fn summary(&self) -> SimSummary {
        let mut ssd_bytes: BTreeMap<Payload, f64> = BTreeMap::new();
        for e in self.events.iter().filter(|e| e.resource == Resource::LinkSsd) {
            *ssd_bytes.entry(e.payload).or_default() += e.work;
        }
        SimSummary {
            variant: self.header.variant,
            checkpoint_location: self.header.checkpoint_location,
            makespan_s: self.makespan_s(),
            num_tasks: self.events.len(),
            busy_s: self
                .busy_ps
                .iter()
                .map(|(r, ps)| (r.as_str().to_string(), *ps as f64 / PS_PER_S))
                .collect(),
            utilization: self
                .busy_ps
                .iter()
                .map(|(r, ps)| {
                    let u = if self.makespan_ps == 0 {
                        0.0
                    } else {
                        *ps as f64 / self.makespan_ps as f64
                    };
                    (r.as_str().to_string(), u)
                })
                .collect(),
            peak_mem_bytes: self
                .peak_mem
                .iter()
                .map(|(m, b)| (m.as_str().to_string(), *b))
                .collect(),
            ssd_bytes_by_payload: ssd_bytes,
        }
    }
}

/// Machine-readable digest of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub variant: ScheduleVariant,
    pub checkpoint_location: CheckpointLocation,
    pub makespan_s: f64,
    pub num_tasks: usize,
    pub busy_s: BTreeMap<String, f64>,
    pub utilization: BTreeMap<String, f64>,
    pub peak_mem_bytes: BTreeMap<String, u64>,
    pub ssd_bytes_by_payload: BTreeMap<Payload, f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("task {task} depends on unknown task {dep}")]
    UnknownDependency { task: TaskId, dep: TaskId },

    #[error("dependency cycle through {} task(s), e.g. {}", .blocked.len(), .blocked.first().map(String::as_str).unwrap_or("?"))]
    Cycle { blocked: Vec<String> },

    #[error("deadlock: {} task(s) never became ready, e.g. {}", .blocked.len(), .blocked.first().map(String::as_str).unwrap_or("?"))]
    Deadlock { blocked: Vec<String> },

    #[error("{memory:?} capacity exceeded by task `{task}`: {used} B > {capacity} B")]
    MemoryExceeded {
        task: String,
        memory: Memory,
        used: i64,
        capacity: u64,
    },

    #[error("task `{task}` has a non-finite or negative duration")]
    BadDuration { task: String },
}
