//! Chrome Trace Event export (`chrome://tracing`, Perfetto).

use std::io::Write;

use serde_json::{json, Value};

use super::{Resource, SimTrace};

/// One complete ("X") event per task, one thread lane per resource, sorted
/// by start time. Timestamps are microseconds.
pub fn to_chrome_trace(trace: &SimTrace) -> Value {
    let mut events: Vec<Value> = Resource::ALL
        .iter()
        .map(|r| {
            json!({
                "name": "thread_name",
                "ph": "M",
                "pid": 0,
                "tid": r.index(),
                "args": { "name": r.as_str() },
            })
        })
        .collect();
    events.extend(trace.events.iter().map(|e| {
        let mut args = json!({
            "task": e.task,
            "work": e.work,
            "payload": e.payload,
            "phase": e.phase,
        });
        if let Some(d) = e.direction {
            args["direction"] = json!(d);
        }
        json!({
            "name": e.name,
            "cat": e.kind,
            "ph": "X",
            "pid": 0,
            "tid": e.resource.index(),
            "ts": e.start_ps as f64 / 1e6,
            "dur": (e.end_ps - e.start_ps) as f64 / 1e6,
            "args": args,
        })
    }));
    json!({
        "traceEvents": events,
        "displayTimeUnit": "ms",
        "otherData": {
            "header": trace.header,
            "makespan_s": trace.makespan_s(),
        },
    })
}

pub fn write_chrome_trace(trace: &SimTrace, mut out: impl Write) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, &to_chrome_trace(trace))?;
    out.write_all(b"\n")
}
