//! Writes a Chrome trace of one OVERLAPPED iteration. Open the file in
//! `chrome://tracing` or Perfetto; each resource is a lane.
//!
//! Usage: cargo run --example chrome_trace -- [OUT.json]

use std::fs::File;
use std::io::BufWriter;

use offload_sim::report::run_simulate;
use offload_sim::scenario::Scenario;
use offload_sim::sim::write_chrome_trace;

fn main() -> offload_sim::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("offload-sim-trace.json"));
    let s = Scenario::preset("gpt3-13b/rtx4090-6ssd/b16")?;
    let outcome = run_simulate(&s)?;
    write_chrome_trace(&outcome.trace, BufWriter::new(File::create(&path)?))?;
    println!(
        "{} events, makespan {:.3} s -> {}",
        outcome.trace.events.len(),
        outcome.trace.makespan_s(),
        path.display()
    );
    Ok(())
}
