//! Swap planning across batch sizes: with little compute to hide behind the
//! planner keeps the default checkpoints; once backward compute dominates it
//! swaps intra-block activations instead of recomputing them.

use offload_sim::planner::prefix_costs;
use offload_sim::report::run_plan;
use offload_sim::scenario::Scenario;

fn main() -> offload_sim::Result<()> {
    for batch in [32, 64, 80] {
        let s = Scenario::preset(&format!("gpt3-13b/a100-12ssd/b{batch}"))?;
        let report = run_plan(&s)?;
        print!("{}", report.to_text());

        let (_, costs) = prefix_costs(&s.workload(), &s.hardware);
        let feasible = costs.iter().filter(|c| c.feasible).count();
        println!("{feasible} of {} swap prefixes fit the budget\n", costs.len());
    }
    Ok(())
}
