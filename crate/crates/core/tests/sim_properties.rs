//! Property tests for the event engine and the schedule builder.

use proptest::prelude::*;

use offload_sim::hardware::{HardwareConfig, SsdDirection};
use offload_sim::report::simulate_with_plan;
use offload_sim::scenario::Scenario;
use offload_sim::sim::{
    check_trace_invariants, simulate, to_chrome_trace, Granularity, Memory, Payload, Phase,
    Resource, ScheduleHeader, ScheduleVariant, Task, TaskGraph, TaskKind, PS_PER_S,
};
use offload_sim::ModelConfig;

/// Each task duration is rounded to whole picoseconds.
const ROUNDING_PS: f64 = 0.5;

fn small_scenario() -> impl Strategy<Value = Scenario> {
    (
        1u64..=4,
        prop::sample::select(vec![256u64, 512, 1024]),
        1u64..=16,
        prop::sample::select(vec![64u64, 256, 512]),
        prop::sample::select(vec!["a100", "rtx4090"]),
        1u64..=12,
    )
        .prop_map(|(l, h, b, s, gpu, n)| {
            let model = ModelConfig::new("small", l, 4, h, b, s);
            let hw = HardwareConfig::preset(&format!("{gpu}-{n}ssd")).unwrap();
            Scenario::new(model, hw)
        })
}

fn random_graph() -> impl Strategy<Value = TaskGraph> {
    let task = (
        0usize..5,
        1.0f64..1e9,
        prop::collection::vec(any::<prop::sample::Index>(), 0..3),
    );
    prop::collection::vec(task, 1..40).prop_map(|specs| {
        let tasks = specs
            .into_iter()
            .enumerate()
            .map(|(id, (r, work, deps))| {
                let resource = Resource::ALL[r];
                let mut deps: Vec<u32> = if id == 0 {
                    Vec::new()
                } else {
                    deps.iter().map(|d| d.index(id) as u32).collect()
                };
                deps.sort_unstable();
                deps.dedup();
                Task {
                    id: id as u32,
                    name: format!("t{id}"),
                    kind: match resource {
                        Resource::GpuCompute => TaskKind::Compute,
                        Resource::CpuCompute => TaskKind::OptimizerUpdate,
                        _ => TaskKind::Transfer,
                    },
                    resource,
                    work,
                    direction: (resource == Resource::LinkSsd).then_some(if id % 2 == 0 {
                        SsdDirection::S2C
                    } else {
                        SsdDirection::C2S
                    }),
                    payload: Payload::None,
                    phase: Phase::Forward,
                    deps,
                    mem_effects: Vec::new(),
                }
            })
            .collect();
        TaskGraph {
            header: ScheduleHeader::empty(ScheduleVariant::Pipelined, Granularity::Layer),
            tasks,
            static_mem: Vec::new(),
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engine_respects_dependencies_and_exclusivity(g in random_graph()) {
        let hw = HardwareConfig::preset("a100-4ssd").unwrap();
        let trace = simulate(&g, &hw).unwrap();
        prop_assert_eq!(trace.events.len(), g.tasks.len());
        let end: Vec<u64> = {
            let mut v = vec![0; g.tasks.len()];
            for e in &trace.events {
                v[e.task as usize] = e.end_ps;
            }
            v
        };
        for e in &trace.events {
            for &d in &g.tasks[e.task as usize].deps {
                prop_assert!(e.start_ps >= end[d as usize]);
            }
        }
        prop_assert!(check_trace_invariants(&trace).all_passed());
        let slack = ROUNDING_PS * g.tasks.len() as f64 / PS_PER_S;
        let roofline = g.resource_work_s(&hw).values().copied().fold(0.0, f64::max);
        prop_assert!(trace.makespan_s() >= roofline - slack);
        prop_assert!(trace.makespan_s() <= g.total_duration_s(&hw) + slack);
        prop_assert!(trace.events.windows(2).all(|p| p[0].start_ps <= p[1].start_ps));
    }

    #[test]
    fn schedules_are_valid_bounded_and_ordered(s in small_scenario()) {
        let Ok(plan) = s.plan() else { return Ok(()) };
        let mut spans = Vec::new();
        for v in ScheduleVariant::ALL {
            let Ok(o) = simulate_with_plan(&s, &plan, v) else { return Ok(()) };
            let failed: Vec<_> = o.report.invariants.failures().collect();
            prop_assert!(failed.is_empty(), "{v}: {failed:?}");
            let peak = o.trace.peak_mem[&Memory::MemGpu] as f64;
            prop_assert!(peak <= s.hardware.gpu_mem);

            let w = s.workload();
            let g = offload_sim::sim::build_schedule(&w, &s.hardware, &plan, v, s.schedule).unwrap();
            let slack = ROUNDING_PS * g.tasks.len() as f64 / PS_PER_S;
            let roofline = g.resource_work_s(&s.hardware).values().copied().fold(0.0, f64::max);
            let total = g.total_duration_s(&s.hardware);
            let m = o.trace.makespan_s();
            prop_assert!(m >= roofline - slack);
            prop_assert!(m <= total + slack);
            if v == ScheduleVariant::Serial {
                prop_assert!((m - total).abs() <= slack, "serial {m} vs sum {total}");
            }
            if v == ScheduleVariant::Overlapped {
                prop_assert_eq!(o.trace.payload_bytes(Resource::LinkSsd, Payload::Gradient), 0.0);
            }
            spans.push(m);
        }
        prop_assert!(spans[1] <= spans[0] * (1.0 + 1e-9), "pipelined {} > serial {}", spans[1], spans[0]);
        prop_assert!(spans[2] <= spans[1] * (1.0 + 1e-9), "overlapped {} > pipelined {}", spans[2], spans[1]);
    }

    #[test]
    fn simulation_is_deterministic(s in small_scenario(), v in prop::sample::select(ScheduleVariant::ALL.to_vec())) {
        let Ok(plan) = s.plan() else { return Ok(()) };
        let Ok(a) = simulate_with_plan(&s, &plan, v) else { return Ok(()) };
        let b = simulate_with_plan(&s, &plan, v).unwrap();
        prop_assert_eq!(&a.trace, &b.trace);
        prop_assert_eq!(to_chrome_trace(&a.trace), to_chrome_trace(&b.trace));
    }
}
