//! Planner and discrete-event simulator for fine-tuning a large transformer
//! on one GPU while parameters, optimizer states and activations are
//! offloaded to CPU memory and an NVMe SSD array.
//!
//! The crate is layered bottom-up:
//!
//! * [`workload`] and [`hardware`] describe the job and the machine.
//! * [`cost`] is the closed-form iteration-time model.
//! * [`planner`] picks which activations to swap instead of recompute.
//! * [`sim`] builds a task graph for one iteration and simulates it.
//! * [`capacity`] answers "what is the largest model that fits" and prices
//!   throughput.
//! * [`scenario`] loads scenario files and presets; [`report`] hosts the
//!   command implementations behind the `offload-sim` binary.

pub mod capacity;
pub mod cost;
pub mod error;
pub mod hardware;
pub mod planner;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod workload;

pub use error::{Error, FieldError, Result};
pub use hardware::HardwareConfig;
pub use planner::SwapPlan;
pub use workload::{ModelConfig, Workload};
