//! Simulates one iteration under each schedule variant and compares the
//! makespans with the per-resource roofline and the analytic prediction.

use offload_sim::report::simulate_with_plan;
use offload_sim::scenario::Scenario;
use offload_sim::sim::{build_schedule, ScheduleVariant};

fn main() -> offload_sim::Result<()> {
    let s = Scenario::preset("gpt3-13b/rtx4090-12ssd/b32")?;
    let plan = s.plan()?;
    println!("{}: analytic t_iter {:.3} s", s.label(), plan.predicted.t_iter);
    for v in ScheduleVariant::ALL {
        let graph = build_schedule(&s.workload(), &s.hardware, &plan, v, s.schedule)?;
        let roofline = graph
            .resource_work_s(&s.hardware)
            .into_iter()
            .fold(("", 0.0), |best, (r, t)| if t > best.1 { (r.as_str(), t) } else { best });
        let outcome = simulate_with_plan(&s, &plan, v)?;
        outcome.ensure_invariants()?;
        println!(
            "{:<10} makespan {:>8.3} s   roofline {:>8.3} s ({})   {} tasks",
            v.as_str(),
            outcome.report.summary.makespan_s,
            roofline.1,
            roofline.0,
            graph.tasks.len()
        );
    }
    Ok(())
}
