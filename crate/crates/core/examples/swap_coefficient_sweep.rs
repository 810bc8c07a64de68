//! Fixes the swap coefficient on a grid and compares the simulated
//! iteration time with the planner's choice.

use offload_sim::report::{run_plan, run_sweep, SweepAxis, SweepSpec};
use offload_sim::scenario::Scenario;
use offload_sim::sim::ScheduleVariant;

fn main() -> offload_sim::Result<()> {
    let base = Scenario::preset("gpt3-13b/a100-12ssd/b64")?;
    let star = run_plan(&base)?.plan.swap_coefficient;
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let spec = SweepSpec::new(
        base,
        SweepAxis::SwapCoefficient,
        grid,
        vec![ScheduleVariant::Overlapped],
    )?;
    println!("coefficient  realized  analytic  simulated");
    for r in run_sweep(&spec, None)? {
        println!(
            "{:>11.1}  {:>8.3}  {:>8.3}  {:>9.3}",
            r.value,
            r.swap_coefficient.unwrap_or(f64::NAN),
            r.t_iter_s.unwrap_or(f64::NAN),
            r.makespan_s.unwrap_or(f64::NAN)
        );
    }
    println!("planner picks {star:.3}");
    Ok(())
}
