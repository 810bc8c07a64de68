//! Command implementations behind the `offload-sim` binary.
//!
//! Every command is a pure function of its inputs and returns a report
//! value; rendering (text, JSON, CSV) is separate so the same results can be
//! consumed from code.

use std::fmt::{self, Write as _};
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{
    self, capacity_sweep, cost_effectiveness, CapacityConstants, CapacityRow, PlacementPolicy,
    PriceScope, PriceTable,
};
use crate::cost::CostBreakdown;
use crate::error::{Error, FieldError, Result};
use crate::hardware::{HardwareConfig, GB};
use crate::planner::SwapPlan;
use crate::scenario::{PlannerMode, Scenario};
use crate::sim::{
    build_schedule, check_trace_invariants, simulate, InvariantReport, ScheduleHeader,
    ScheduleVariant, SimSummary, SimTrace,
};
use crate::workload::ModelConfig;

/// Version of the CSV column layout written by [`write_sweep_csv`].
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Training throughput and its price efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub t_iter_s: f64,
    pub tokens_per_s: f64,
    pub tokens_per_s_per_usd_gpu_ssd: f64,
    pub tokens_per_s_per_usd_whole_server: f64,
}

impl Throughput {
    pub fn new(t_iter: f64, tokens: u64, hw: &HardwareConfig) -> Result<Self> {
        let prices = PriceTable::default();
        Ok(Self {
            t_iter_s: t_iter,
            tokens_per_s: tokens as f64 / t_iter,
            tokens_per_s_per_usd_gpu_ssd: cost_effectiveness(
                t_iter,
                tokens,
                hw,
                &prices,
                PriceScope::GpuSsd,
            )?,
            tokens_per_s_per_usd_whole_server: cost_effectiveness(
                t_iter,
                tokens,
                hw,
                &prices,
                PriceScope::WholeServer,
            )?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub scenario: String,
    pub seed: u64,
    pub planner: PlannerMode,
    pub plan: SwapPlan,
    pub throughput: Throughput,
    pub warnings: Vec<String>,
}

/// Plans swaps for `scenario` and predicts the iteration time.
pub fn run_plan(scenario: &Scenario) -> Result<PlanReport> {
    let warnings = scenario.validate()?;
    let plan = scenario.plan()?;
    let throughput = Throughput::new(
        plan.predicted.t_iter,
        scenario.workload().tokens_per_iteration,
        &scenario.hardware,
    )?;
    Ok(PlanReport {
        scenario: scenario.label(),
        seed: scenario.seed,
        planner: scenario.planner,
        plan,
        throughput,
        warnings,
    })
}

fn gb(bytes: f64) -> String {
    format!("{:.3} GB", bytes / GB)
}

fn write_breakdown(out: &mut String, c: &CostBreakdown) {
    let _ = writeln!(
        out,
        "forward            T_f   {:>10.3} s  bound by {:<13}  (comp {:.3}, gpu link {:.3}, ssd {:.3})",
        c.t_f, c.bottleneck_f, c.t_f_comp, c.t_f_gpu, c.t_f_ssd
    );
    let _ = writeln!(
        out,
        "backward+optimizer T_bo  {:>10.3} s  bound by {:<13}  (comp {:.3}, cpu opt {:.3}, gpu link {:.3}, ssd {:.3})",
        c.t_bo, c.bottleneck_bo, c.t_b_comp, c.t_o_comp, c.t_bo_gpu, c.t_bo_ssd
    );
    let _ = writeln!(out, "iteration          t_iter{:>10.3} s", c.t_iter);
}

impl PlanReport {
    pub fn to_text(&self) -> String {
        let p = &self.plan;
        let mut out = String::new();
        let _ = writeln!(out, "scenario {} (seed {})", self.scenario, self.seed);
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        let _ = writeln!(
            out,
            "swap coefficient {:.4}  ({} extra layers swapped)",
            p.swap_coefficient,
            p.swapped_layers.len()
        );
        let _ = writeln!(
            out,
            "d_f {}  (d_start {}, d_max {}, t_max {:.3} s)",
            gb(p.d_f),
            gb(p.d_start),
            gb(p.d_max),
            p.t_max
        );
        write_breakdown(&mut out, &p.predicted);
        let t = &self.throughput;
        let _ = writeln!(
            out,
            "throughput {:.1} tokens/s, {:.4} tokens/s/$ (gpu+ssd), {:.4} tokens/s/$ (server)",
            t.tokens_per_s, t.tokens_per_s_per_usd_gpu_ssd, t.tokens_per_s_per_usd_whole_server
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub scenario: String,
    pub seed: u64,
    pub header: ScheduleHeader,
    pub summary: SimSummary,
    /// Cost-model prediction for the same plan.
    pub analytic: CostBreakdown,
    /// `|analytic t_iter - makespan| / makespan`.
    pub analytic_gap: f64,
    pub throughput: Throughput,
    pub invariants: InvariantReport,
}

/// A simulated iteration: the report plus the full trace.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: SimulateReport,
    pub trace: SimTrace,
}

impl SimOutcome {
    /// Fails with [`Error::Invariant`] if any trace invariant is violated.
    pub fn ensure_invariants(&self) -> Result<()> {
        let failed: Vec<String> = self
            .report
            .invariants
            .failures()
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::Invariant(failed.join("; ")))
        }
    }
}

/// Simulates `scenario` under `variant` with an already computed plan.
pub fn simulate_with_plan(
    scenario: &Scenario,
    plan: &SwapPlan,
    variant: ScheduleVariant,
) -> Result<SimOutcome> {
    let w = scenario.workload();
    let hw = &scenario.hardware;
    let graph = build_schedule(&w, hw, plan, variant, scenario.schedule)?;
    let trace = simulate(&graph, hw)?;
    let invariants = check_trace_invariants(&trace);
    let makespan = trace.makespan_s();
    let report = SimulateReport {
        scenario: scenario.label(),
        seed: scenario.seed,
        header: trace.header.clone(),
        summary: trace.summary(),
        analytic: plan.predicted,
        analytic_gap: (plan.predicted.t_iter - makespan).abs() / makespan,
        throughput: Throughput::new(makespan, w.tokens_per_iteration, hw)?,
        invariants,
    };
    Ok(SimOutcome { report, trace })
}

/// Plans and simulates `scenario` under its configured variant.
pub fn run_simulate(scenario: &Scenario) -> Result<SimOutcome> {
    scenario.validate()?;
    let plan = scenario.plan()?;
    simulate_with_plan(scenario, &plan, scenario.variant)
}

impl SimulateReport {
    pub fn to_text(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {} (seed {}) variant {}",
            self.scenario, self.seed, s.variant
        );
        let _ = writeln!(
            out,
            "makespan {:.3} s over {} tasks; checkpoints on {:?}",
            s.makespan_s, s.num_tasks, s.checkpoint_location
        );
        let _ = writeln!(
            out,
            "analytic t_iter {:.3} s (gap {:.2}%)",
            self.analytic.t_iter,
            self.analytic_gap * 100.0
        );
        for (r, u) in &s.utilization {
            let _ = writeln!(out, "  {r:<12} busy {:>10.3} s  {:>6.1}%", s.busy_s[r], u * 100.0);
        }
        for (m, b) in &s.peak_mem_bytes {
            let _ = writeln!(out, "  {m:<12} peak {}", gb(*b as f64));
        }
        for (p, b) in &s.ssd_bytes_by_payload {
            let _ = writeln!(out, "  ssd {:<14} {}", format!("{p:?}"), gb(*b));
        }
        let _ = writeln!(
            out,
            "throughput {:.1} tokens/s, {:.4} tokens/s/$ (gpu+ssd)",
            self.throughput.tokens_per_s, self.throughput.tokens_per_s_per_usd_gpu_ssd
        );
        for c in &self.invariants.checks {
            let _ = writeln!(
                out,
                "  invariant {:<24} {}",
                c.name,
                if c.passed { "ok" } else { c.detail.as_str() }
            );
        }
        out
    }
}

/// Scenario parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    BatchSize,
    NSsd,
    SwapCoefficient,
    /// Values in GB.
    CpuMem,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::BatchSize => "batch_size",
            SweepAxis::NSsd => "n_ssd",
            SweepAxis::SwapCoefficient => "swap_coefficient",
            SweepAxis::CpuMem => "cpu_mem",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch_size" => Ok(SweepAxis::BatchSize),
            "n_ssd" => Ok(SweepAxis::NSsd),
            "swap_coefficient" => Ok(SweepAxis::SwapCoefficient),
            "cpu_mem" => Ok(SweepAxis::CpuMem),
            _ => Err(Error::Usage(format!(
                "unknown sweep axis `{s}` (expected batch_size, n_ssd, swap_coefficient or cpu_mem)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: Scenario,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub variants: Vec<ScheduleVariant>,
}

impl SweepSpec {
    /// Checks that the sweep is well formed: at least one value and
    /// variant, and every value meaningful for the axis.
    pub fn new(
        base: Scenario,
        axis: SweepAxis,
        values: Vec<f64>,
        variants: Vec<ScheduleVariant>,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Usage("sweep needs at least one value".into()));
        }
        if variants.is_empty() {
            return Err(Error::Usage("sweep needs at least one variant".into()));
        }
        for &v in &values {
            let ok = match axis {
                SweepAxis::BatchSize | SweepAxis::NSsd => v >= 1.0 && v.fract() == 0.0,
                SweepAxis::SwapCoefficient => (0.0..=1.0).contains(&v),
                SweepAxis::CpuMem => v.is_finite() && v > 0.0,
            };
            if !ok {
                return Err(Error::Usage(format!("value {v} is not valid for axis {axis}")));
            }
        }
        Ok(Self {
            base,
            axis,
            values,
            variants,
        })
    }

    /// The base scenario with the axis set to `value`.
    pub fn scenario_at(&self, value: f64) -> Scenario {
        let mut s = self.base.clone();
        match self.axis {
            SweepAxis::BatchSize => s.model.batch_size = value as u64,
            SweepAxis::NSsd => s.hardware = s.hardware.with_n_ssd(value as u64),
            SweepAxis::SwapCoefficient => {
                s.planner = PlannerMode::FixedSwapCoefficient { value }
            }
            SweepAxis::CpuMem => s.hardware = s.hardware.with_cpu_mem(value * GB),
        }
        s
    }
}

/// One CSV row: one axis value under one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub schema_version: u32,
    pub scenario: String,
    pub axis: SweepAxis,
    pub value: f64,
    pub variant: ScheduleVariant,
    pub status: String,
    pub makespan_s: Option<f64>,
    pub t_iter_s: Option<f64>,
    pub t_f_s: Option<f64>,
    pub t_bo_s: Option<f64>,
    pub bottleneck_f: Option<String>,
    pub bottleneck_bo: Option<String>,
    pub swap_coefficient: Option<f64>,
    pub d_f_bytes: Option<f64>,
    pub speedup_vs_serial: Option<f64>,
    pub tokens_per_s: Option<f64>,
    pub tokens_per_s_per_usd: Option<f64>,
    pub error: String,
}

impl SweepRow {
    fn error(spec: &SweepSpec, s: &Scenario, value: f64, variant: ScheduleVariant, e: String) -> Self {
        Self {
            schema_version: CSV_SCHEMA_VERSION,
            scenario: s.label(),
            axis: spec.axis,
            value,
            variant,
            status: "error".into(),
            makespan_s: None,
            t_iter_s: None,
            t_f_s: None,
            t_bo_s: None,
            bottleneck_f: None,
            bottleneck_bo: None,
            swap_coefficient: None,
            d_f_bytes: None,
            speedup_vs_serial: None,
            tokens_per_s: None,
            tokens_per_s_per_usd: None,
            error: e,
        }
    }
}

fn sweep_cell(spec: &SweepSpec, value: f64) -> Vec<SweepRow> {
    let s = spec.scenario_at(value);
    let plan = s.validate().and_then(|_| s.plan());
    let plan = match plan {
        Ok(p) => p,
        Err(e) => {
            return spec
                .variants
                .iter()
                .map(|&v| SweepRow::error(spec, &s, value, v, e.to_string()))
                .collect()
        }
    };
    let run = |v| -> std::result::Result<f64, String> {
        let o = simulate_with_plan(&s, &plan, v).map_err(|e| e.to_string())?;
        o.ensure_invariants().map_err(|e| e.to_string())?;
        Ok(o.report.summary.makespan_s)
    };
    let serial = run(ScheduleVariant::Serial);
    spec.variants
        .iter()
        .map(|&v| {
            let outcome = if v == ScheduleVariant::Serial {
                serial.clone()
            } else {
                run(v)
            };
            match outcome {
                Ok(makespan) => {
                    let c = &plan.predicted;
                    let tp = Throughput::new(makespan, s.workload().tokens_per_iteration, &s.hardware);
                    SweepRow {
                        schema_version: CSV_SCHEMA_VERSION,
                        scenario: s.label(),
                        axis: spec.axis,
                        value,
                        variant: v,
                        status: "ok".into(),
                        makespan_s: Some(makespan),
                        t_iter_s: Some(c.t_iter),
                        t_f_s: Some(c.t_f),
                        t_bo_s: Some(c.t_bo),
                        bottleneck_f: Some(c.bottleneck_f.to_string()),
                        bottleneck_bo: Some(c.bottleneck_bo.to_string()),
                        swap_coefficient: Some(plan.swap_coefficient),
                        d_f_bytes: Some(plan.d_f),
                        speedup_vs_serial: serial.as_ref().ok().map(|sm| sm / makespan),
                        tokens_per_s: tp.as_ref().ok().map(|t| t.tokens_per_s),
                        tokens_per_s_per_usd: tp
                            .as_ref()
                            .ok()
                            .map(|t| t.tokens_per_s_per_usd_gpu_ssd),
                        error: String::new(),
                    }
                }
                Err(e) => SweepRow::error(spec, &s, value, v, e),
            }
        })
        .collect()
}

/// Runs every sweep cell, fanning out over `workers` threads (all cores
/// when `None`). Failing cells become error rows. Rows come back in value
/// order, then in the order of `spec.variants`.
pub fn run_sweep(spec: &SweepSpec, workers: Option<usize>) -> Result<Vec<SweepRow>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::Usage("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    let mut cells: Vec<(usize, Vec<SweepRow>)> = pool.install(|| {
        spec.values
            .par_iter()
            .enumerate()
            .map(|(i, &v)| (i, sweep_cell(spec, v)))
            .collect()
    });
    cells.sort_by_key(|(i, _)| *i);
    Ok(cells.into_iter().flat_map(|(_, rows)| rows).collect())
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for r in rows {
        w.serialize(r).map_err(capacity::csv_err)?;
    }
    if rows.is_empty() {
        return Err(Error::Usage("sweep produced no rows".into()));
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacitySpec {
    pub hardware: HardwareConfig,
    pub cpu_mems_gb: Vec<f64>,
    pub policies: Vec<PlacementPolicy>,
    /// Ascending by size.
    pub candidates: Vec<ModelConfig>,
    pub constants: CapacityConstants,
}

impl CapacitySpec {
    /// CPU memory limits from 128 GB to 768 GB, both policies, the full
    /// preset ladder at batch size 1.
    pub fn new(hardware: HardwareConfig) -> Self {
        Self {
            hardware,
            cpu_mems_gb: vec![128.0, 256.0, 384.0, 512.0, 640.0, 768.0],
            policies: PlacementPolicy::ALL.to_vec(),
            candidates: ModelConfig::ladder(1),
            constants: CapacityConstants::default(),
        }
    }
}

pub fn run_capacity(spec: &CapacitySpec) -> Result<Vec<CapacityRow>> {
    if let Some(bad) = spec.cpu_mems_gb.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Invalid(vec![FieldError::new(
            "cpu_mem",
            format!("CPU memory must be > 0 GB (got {bad})"),
        )]));
    }
    let mems: Vec<f64> = spec.cpu_mems_gb.iter().map(|g| g * GB).collect();
    capacity_sweep(
        &spec.hardware,
        &mems,
        &spec.policies,
        &spec.candidates,
        &spec.constants,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateReport {
    pub scenario: String,
    pub warnings: Vec<String>,
    pub swap_coefficient: f64,
    pub makespan_s: f64,
    pub invariants: InvariantReport,
}

impl ValidateReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("scenario {} is valid\n", self.scenario);
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        let _ = writeln!(
            out,
            "planned swap coefficient {:.4}; simulated makespan {:.3} s",
            self.swap_coefficient, self.makespan_s
        );
        let passed = self.invariants.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(
            out,
            "{passed}/{} trace invariants hold",
            self.invariants.checks.len()
        );
        out
    }
}

/// Full check of a scenario: configuration, plan feasibility, schedule
/// construction and trace invariants.
pub fn run_validate(scenario: &Scenario) -> Result<ValidateReport> {
    let warnings = scenario.validate()?;
    let plan = scenario.plan()?;
    let outcome = simulate_with_plan(scenario, &plan, scenario.variant)?;
    outcome.ensure_invariants()?;
    Ok(ValidateReport {
        scenario: scenario.label(),
        warnings,
        swap_coefficient: plan.swap_coefficient,
        makespan_s: outcome.report.summary.makespan_s,
        invariants: outcome.report.invariants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Scenario {
        Scenario::preset("gpt3-13b/rtx4090-6ssd/b16").unwrap()
    }

    #[test]
    fn empty_sweep_is_a_usage_error() {
        let e = SweepSpec::new(base(), SweepAxis::BatchSize, vec![], ScheduleVariant::ALL.to_vec())
            .unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn sweep_values_are_checked_per_axis() {
        for (axis, v) in [
            (SweepAxis::BatchSize, 1.5),
            (SweepAxis::NSsd, 0.0),
            (SweepAxis::SwapCoefficient, 1.2),
            (SweepAxis::CpuMem, -1.0),
        ] {
            assert!(SweepSpec::new(base(), axis, vec![v], vec![ScheduleVariant::Serial]).is_err());
        }
    }

    #[test]
    fn sweep_rows_are_ordered_and_errors_do_not_stop_it() {
        // 1 GB of CPU memory cannot hold the staging buffers.
        let spec = SweepSpec::new(
            base(),
            SweepAxis::CpuMem,
            vec![768.0, 1.0],
            vec![ScheduleVariant::Overlapped, ScheduleVariant::Serial],
        )
        .unwrap();
        let rows = run_sweep(&spec, Some(2)).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].value, 768.0);
        assert_eq!(rows[0].variant, ScheduleVariant::Overlapped);
        assert_eq!(rows[1].speedup_vs_serial, Some(1.0));
        assert!(rows[0].speedup_vs_serial.unwrap() > 1.0);
        assert!(rows[2..].iter().all(|r| r.status == "error" && !r.error.is_empty()));
    }

    #[test]
    fn axis_names_round_trip() {
        for a in [
            SweepAxis::BatchSize,
            SweepAxis::NSsd,
            SweepAxis::SwapCoefficient,
            SweepAxis::CpuMem,
        ] {
            assert_eq!(a.as_str().parse::<SweepAxis>().unwrap(), a);
        }
        assert!("batch".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn plan_text_names_both_bottlenecks() {
        let r = run_plan(&base()).unwrap();
        let text = r.to_text();
        assert!(text.contains("T_f") && text.contains("T_bo") && text.contains("bound by"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Error::infeasible("x").exit_code(), 3);
        assert_eq!(Error::Invariant("x".into()).exit_code(), 4);
        assert_eq!(Error::Usage("x".into()).exit_code(), 2);
    }
}
