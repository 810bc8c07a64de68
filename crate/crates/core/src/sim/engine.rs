use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use super::{
    Edge, MemSample, Memory, Resource, SimError, SimTrace, TaskGraph, TaskId, TraceEvent,
};
use crate::hardware::HardwareConfig;

struct MemState {
    current: [i64; 2],
    peak: [u64; 2],
    capacity: [u64; 2],
    timeline: Vec<MemSample>,
}

impl MemState {
    fn apply(&mut self, memory: Memory, delta: i64, t_ps: u64, task: &str) -> Result<(), SimError> {
        if delta == 0 {
            return Ok(());
        }
        let i = memory.index();
        self.current[i] += delta;
        let used = self.current[i];
        if used > self.capacity[i] as i64 {
            return Err(SimError::MemoryExceeded {
                task: task.to_string(),
                memory,
                used,
                capacity: self.capacity[i],
            });
        }
        let level = used.max(0) as u64;
        self.peak[i] = self.peak[i].max(level);
        self.timeline.push(MemSample {
            t_ps,
            memory,
            bytes: level,
        });
        Ok(())
    }
}

/// Runs `graph` on `hw` and returns the timed trace.
pub fn simulate(graph: &TaskGraph, hw: &HardwareConfig) -> Result<SimTrace, SimError> {
    let tasks = &graph.tasks;
    let n = tasks.len();

    let mut dependents: Vec<Vec<TaskId>> = vec![Vec::new(); n];
    let mut pending: Vec<u32> = vec![0; n];
    for (i, t) in tasks.iter().enumerate() {
        for &d in &t.deps {
            if d as usize >= n {
                return Err(SimError::UnknownDependency { task: t.id, dep: d });
            }
            dependents[d as usize].push(i as TaskId);
            pending[i] += 1;
        }
    }
    check_acyclic(graph, &pending, &dependents)?;

    let mut durations = Vec::with_capacity(n);
    for t in tasks {
        let d = t.duration_s(hw);
        if !(d.is_finite() && d >= 0.0) {
            return Err(SimError::BadDuration {
                task: t.name.clone(),
            });
        }
        durations.push(t.duration_ps(hw));
    }

    let mut mem = MemState {
        current: [0; 2],
        peak: [0; 2],
        capacity: [
            Memory::MemGpu.capacity(hw) as u64,
            Memory::MemCpu.capacity(hw) as u64,
        ],
        timeline: Vec::new(),
    };
    for &(memory, bytes) in &graph.static_mem {
        mem.apply(memory, bytes as i64, 0, "static reservation")?;
    }

    let mut ready: Vec<BinaryHeap<Reverse<(u64, TaskId)>>> =
        (0..Resource::ALL.len()).map(|_| BinaryHeap::new()).collect();
    let mut busy_until: [Option<TaskId>; 5] = [None; 5];
    let mut completions: BinaryHeap<Reverse<(u64, TaskId)>> = BinaryHeap::new();
    let mut start_ps = vec![0u64; n];
    let mut events = Vec::with_capacity(n);
    let mut busy_ps = [0u64; 5];

    for (i, t) in tasks.iter().enumerate() {
        if pending[i] == 0 {
            ready[t.resource.index()].push(Reverse((0, i as TaskId)));
        }
    }

    let mut now = 0u64;
    let mut done = 0usize;
    loop {
        for r in Resource::ALL {
            let ri = r.index();
            if busy_until[ri].is_some() {
                continue;
            }
            let Some(Reverse((_, id))) = ready[ri].pop() else {
                continue;
            };
            let task = &tasks[id as usize];
            for e in task.mem_effects.iter().filter(|e| e.at == Edge::Start) {
                mem.apply(e.memory, e.delta, now, &task.name)?;
            }
            start_ps[id as usize] = now;
            busy_until[ri] = Some(id);
            completions.push(Reverse((now + durations[id as usize], id)));
        }

        let Some(&Reverse((t_next, _))) = completions.peek() else {
            if done == n {
                break;
            }
            let blocked = (0..n)
                .filter(|&i| pending[i] > 0)
                .map(|i| tasks[i].name.clone())
                .collect();
            return Err(SimError::Deadlock { blocked });
        };
        now = t_next;

        while let Some(&Reverse((t, id))) = completions.peek() {
            if t != now {
                break;
            }
            completions.pop();
            let task = &tasks[id as usize];
            for e in task.mem_effects.iter().filter(|e| e.at == Edge::End) {
                mem.apply(e.memory, e.delta, now, &task.name)?;
            }
            let ri = task.resource.index();
            busy_until[ri] = None;
            busy_ps[ri] += durations[id as usize];
            events.push(TraceEvent {
                task: id,
                name: task.name.clone(),
                kind: task.kind,
                resource: task.resource,
                payload: task.payload,
                direction: task.direction,
                phase: task.phase,
                work: task.work,
                start_ps: start_ps[id as usize],
                end_ps: now,
            });
            done += 1;
            for &dep in &dependents[id as usize] {
                let di = dep as usize;
                pending[di] -= 1;
                if pending[di] == 0 {
                    ready[tasks[di].resource.index()].push(Reverse((now, dep)));
                }
            }
        }
    }

    events.sort_by_key(|e| (e.start_ps, e.task));
    let makespan_ps = events.iter().map(|e| e.end_ps).max().unwrap_or(0);
    Ok(SimTrace {
        header: graph.header.clone(),
        events,
        makespan_ps,
        busy_ps: Resource::ALL
            .iter()
            .map(|&r| (r, busy_ps[r.index()]))
            .collect(),
        peak_mem: Memory::ALL
            .iter()
            .map(|&m| (m, mem.peak[m.index()]))
            .collect::<BTreeMap<_, _>>(),
        mem_capacity: Memory::ALL
            .iter()
            .map(|&m| (m, mem.capacity[m.index()]))
            .collect(),
        mem_timeline: mem.timeline,
    })
}

/// Kahn's algorithm; reports the tasks left on a cycle.
fn check_acyclic(
    graph: &TaskGraph,
    pending: &[u32],
    dependents: &[Vec<TaskId>],
) -> Result<(), SimError> {
    let mut indeg = pending.to_vec();
    let mut stack: Vec<usize> = (0..indeg.len()).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = stack.pop() {
        seen += 1;
        for &d in &dependents[i] {
            indeg[d as usize] -= 1;
            if indeg[d as usize] == 0 {
                stack.push(d as usize);
            }
        }
    }
    if seen == indeg.len() {
        Ok(())
    } else {
        Err(SimError::Cycle {
            blocked: (0..indeg.len())
                .filter(|&i| indeg[i] > 0)
                .map(|i| graph.tasks[i].name.clone())
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardware::SsdDirection;
    use crate::sim::{
        CheckpointLocation, Granularity, MemEffect, Payload, Phase, ScheduleHeader,
        ScheduleVariant, Task, TaskKind,
    };

    fn hw() -> HardwareConfig {
        HardwareConfig {
            bw_gpu: 16e9,
            bw_s2c: 2e9,
            bw_c2s: 2e9,
            n_ssd: 1,
            ..HardwareConfig::preset("a100-1ssd").unwrap()
        }
    }

    fn transfer(id: TaskId, resource: Resource, bytes: f64, deps: Vec<TaskId>) -> Task {
        Task {
            id,
            name: format!("t{id}"),
            kind: TaskKind::Transfer,
            resource,
            work: bytes,
            direction: (resource == Resource::LinkSsd).then_some(SsdDirection::S2C),
            payload: Payload::Parameter,
            phase: Phase::Forward,
            deps,
            mem_effects: Vec::new(),
        }
    }

    fn graph(tasks: Vec<Task>) -> TaskGraph {
        TaskGraph {
            header: ScheduleHeader::empty(ScheduleVariant::Pipelined, Granularity::Layer),
            tasks,
            static_mem: Vec::new(),
        }
    }

    #[test]
    fn single_transfer() {
        let g = graph(vec![transfer(0, Resource::LinkC2g, 2e9, vec![])]);
        let trace = simulate(&g, &hw()).unwrap();
        assert_eq!(trace.makespan_ps, 125_000_000_000);
        assert_eq!(trace.makespan_s(), 0.125);
    }

    #[test]
    fn simplex_ssd_serializes_and_duplex_link_does_not() {
        // 0.1 s each on a 2e9 B/s SSD array
        let g = graph(vec![
            transfer(0, Resource::LinkSsd, 2e8, vec![]),
            transfer(1, Resource::LinkSsd, 2e8, vec![]),
        ]);
        assert_eq!(simulate(&g, &hw()).unwrap().makespan_s(), 0.2);

        let g = graph(vec![
            transfer(0, Resource::LinkC2g, 1.6e9, vec![]),
            transfer(1, Resource::LinkG2c, 1.6e9, vec![]),
        ]);
        assert_eq!(simulate(&g, &hw()).unwrap().makespan_s(), 0.1);
    }

    #[test]
    fn empty_graph() {
        let trace = simulate(&graph(vec![]), &hw()).unwrap();
        assert_eq!(trace.makespan_ps, 0);
        assert!(trace.events.is_empty());
    }

    #[test]
    fn ready_order_is_fifo_then_id() {
        let g = graph(vec![
            transfer(0, Resource::LinkC2g, 1.6e9, vec![]),
            transfer(1, Resource::LinkSsd, 2e8, vec![0]),
            transfer(2, Resource::LinkSsd, 2e8, vec![]),
        ]);
        let trace = simulate(&g, &hw()).unwrap();
        let t1 = trace.events.iter().find(|e| e.task == 1).unwrap();
        let t2 = trace.events.iter().find(|e| e.task == 2).unwrap();
        assert_eq!(t2.start_ps, 0);
        assert_eq!(t1.start_ps, t2.end_ps);
    }

    #[test]
    fn cycles_and_unknown_deps_are_rejected() {
        let g = graph(vec![
            transfer(0, Resource::LinkC2g, 1.0, vec![1]),
            transfer(1, Resource::LinkC2g, 1.0, vec![0]),
        ]);
        assert!(matches!(simulate(&g, &hw()), Err(SimError::Cycle { .. })));
        let g = graph(vec![transfer(0, Resource::LinkC2g, 1.0, vec![7])]);
        assert!(matches!(
            simulate(&g, &hw()),
            Err(SimError::UnknownDependency { task: 0, dep: 7 })
        ));
    }

    #[test]
    fn memory_overflow_names_the_task() {
        let mut t = transfer(0, Resource::LinkC2g, 1.0, vec![]);
        t.name = "big-prefetch".into();
        t.mem_effects.push(MemEffect {
            memory: Memory::MemGpu,
            delta: 81e9 as i64,
            at: Edge::Start,
        });
        let err = simulate(&graph(vec![t]), &hw()).unwrap_err();
        match err {
            SimError::MemoryExceeded { task, memory, .. } => {
                assert_eq!(task, "big-prefetch");
                assert_eq!(memory, Memory::MemGpu);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn memory_frees_before_starts_at_the_same_instant() {
        let cap = 80e9 as i64;
        let mut a = transfer(0, Resource::LinkC2g, 1.6e9, vec![]);
        a.mem_effects = vec![
            MemEffect {
                memory: Memory::MemGpu,
                delta: cap,
                at: Edge::Start,
            },
            MemEffect {
                memory: Memory::MemGpu,
                delta: -cap,
                at: Edge::End,
            },
        ];
        let mut b = a.clone();
        b.id = 1;
        b.name = "t1".into();
        b.deps = vec![0];
        let trace = simulate(&graph(vec![a, b]), &hw()).unwrap();
        assert_eq!(trace.peak_mem[&Memory::MemGpu], cap as u64);
        assert_eq!(trace.makespan_s(), 0.2);
        let _ = CheckpointLocation::Cpu;
    }
}
