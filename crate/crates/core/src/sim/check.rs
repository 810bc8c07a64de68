use serde::{Deserialize, Serialize};

use super::{Payload, Resource, ScheduleVariant, SimTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub checks: Vec<InvariantCheck>,
}

impl InvariantReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InvariantCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, failure: Option<String>) -> InvariantCheck {
    InvariantCheck {
        name: name.to_string(),
        passed: failure.is_none(),
        detail: failure.unwrap_or_else(|| "ok".to_string()),
    }
}

/// Verifies a finished trace. Never fails itself; each violated invariant
/// becomes a failed entry.
pub fn check_trace_invariants(trace: &SimTrace) -> InvariantReport {
    let mut checks = Vec::new();

    let bad_interval = trace
        .events
        .iter()
        .find(|e| e.end_ps < e.start_ps)
        .map(|e| format!("`{}` ends before it starts", e.name));
    checks.push(check("event_intervals", bad_interval));

    let max_end = trace.events.iter().map(|e| e.end_ps).max().unwrap_or(0);
    checks.push(check(
        "makespan_matches_events",
        (max_end != trace.makespan_ps).then(|| {
            format!(
                "makespan {} ps but last event ends at {} ps",
                trace.makespan_ps, max_end
            )
        }),
    ));

    let mut overlap = None;
    for r in Resource::ALL {
        let mut evs: Vec<_> = trace.events.iter().filter(|e| e.resource == r).collect();
        evs.sort_by_key(|e| (e.start_ps, e.end_ps, e.task));
        if let Some(pair) = evs.windows(2).find(|p| p[1].start_ps < p[0].end_ps) {
            overlap = Some(format!(
                "{}: `{}` [{}, {}) overlaps `{}` [{}, {})",
                r.as_str(),
                pair[0].name,
                pair[0].start_ps,
                pair[0].end_ps,
                pair[1].name,
                pair[1].start_ps,
                pair[1].end_ps
            ));
            break;
        }
    }
    checks.push(check("resource_exclusivity", overlap));

    let mut over = None;
    for (m, peak) in &trace.peak_mem {
        let cap = trace.mem_capacity.get(m).copied().unwrap_or(0);
        if *peak > cap {
            over = Some(format!("{}: peak {peak} B > capacity {cap} B", m.as_str()));
            break;
        }
    }
    if over.is_none() {
        over = trace.mem_timeline.iter().find_map(|s| {
            let cap = trace.mem_capacity.get(&s.memory).copied().unwrap_or(0);
            (s.bytes > cap).then(|| {
                format!(
                    "{}: {} B > capacity {cap} B at {} ps",
                    s.memory.as_str(),
                    s.bytes,
                    s.t_ps
                )
            })
        });
    }
    checks.push(check("memory_within_capacity", over));

    let undirected = trace
        .events
        .iter()
        .find(|e| (e.resource == Resource::LinkSsd) != e.direction.is_some())
        .map(|e| format!("`{}` has an inconsistent SSD direction", e.name));
    checks.push(check("ssd_direction", undirected));

    if trace.header.variant == ScheduleVariant::Overlapped {
        let bytes = trace.payload_bytes(Resource::LinkSsd, Payload::Gradient);
        checks.push(check(
            "gradient_ssd_bypass",
            (bytes != 0.0).then(|| format!("{bytes} gradient bytes on LINK_SSD")),
        ));
    }

    InvariantReport { checks }
}
