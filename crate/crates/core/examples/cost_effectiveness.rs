//! Tokens per second per dollar for a 175B model on a 24 GB GPU as SSDs are
//! added, priced as GPU plus SSDs and as the whole server.

use offload_sim::capacity::{cost_effectiveness, PriceScope, PriceTable};
use offload_sim::report::simulate_with_plan;
use offload_sim::scenario::Scenario;
use offload_sim::sim::ScheduleVariant;

fn main() -> offload_sim::Result<()> {
    let prices = PriceTable::default();
    println!("ssds  makespan  tokens/s  per $ (gpu+ssd)  per $ (server)");
    for n in [2, 4, 6, 12] {
        let s = Scenario::preset(&format!("gpt3-175b/rtx4090-{n}ssd/b16"))?;
        let plan = s.plan()?;
        let o = simulate_with_plan(&s, &plan, ScheduleVariant::Overlapped)?;
        let t = o.report.summary.makespan_s;
        let tokens = s.workload().tokens_per_iteration;
        println!(
            "{n:>4}  {t:>8.2}  {:>8.1}  {:>15.5}  {:>14.5}",
            tokens as f64 / t,
            cost_effectiveness(t, tokens, &s.hardware, &prices, PriceScope::GpuSsd)?,
            cost_effectiveness(t, tokens, &s.hardware, &prices, PriceScope::WholeServer)?
        );
    }
    Ok(())
}
