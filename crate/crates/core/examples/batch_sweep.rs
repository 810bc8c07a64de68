//! Batch-size sweep on a 24 GB GPU: how much the backward/optimizer
//! overlap buys over the pipelined schedule at each batch size.

use offload_sim::report::{run_sweep, SweepAxis, SweepSpec};
use offload_sim::scenario::Scenario;
use offload_sim::sim::ScheduleVariant;

fn main() -> offload_sim::Result<()> {
    let spec = SweepSpec::new(
        Scenario::preset("gpt3-13b/rtx4090-12ssd")?,
        SweepAxis::BatchSize,
        vec![8.0, 16.0, 32.0, 64.0],
        vec![ScheduleVariant::Pipelined, ScheduleVariant::Overlapped],
    )?;
    let rows = run_sweep(&spec, None)?;
    println!("batch  pipelined  overlapped  speedup  tokens/s");
    for pair in rows.chunks(2) {
        let (p, o) = (&pair[0], &pair[1]);
        let (Some(pm), Some(om)) = (p.makespan_s, o.makespan_s) else {
            println!("{:>5}  {}", p.value, p.error);
            continue;
        };
        println!(
            "{:>5}  {:>9.2}  {:>10.2}  {:>6.2}x  {:>8.1}",
            p.value,
            pm,
            om,
            pm / om,
            o.tokens_per_s.unwrap_or(0.0)
        );
    }
    Ok(())
}
